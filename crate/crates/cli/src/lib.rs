//! Library side of the `parobj` binary. Every subcommand returns an
//! [`Exit`] instead of calling `process::exit`, so tests can drive it
//! in-process.

pub mod analyze;
pub mod args;
pub mod launch;
pub mod run;
pub mod settings;

use std::fmt;

pub use args::{Cli, Command};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok,
    /// Verification failed, the trace was invalid, or the runtime failed.
    Failure,
    /// Bad flags or configuration.
    Usage,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Ok => 0,
            Exit::Failure => 1,
            Exit::Usage => 2,
        }
    }
}

/// A one-line diagnostic paired with its exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fail {
    pub exit: Exit,
    pub message: String,
}

impl Fail {
    pub fn usage(message: impl Into<String>) -> Fail {
        Fail { exit: Exit::Usage, message: message.into() }
    }

    pub fn failure(message: impl Into<String>) -> Fail {
        Fail { exit: Exit::Failure, message: message.into() }
    }
}

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn dispatch(cli: Cli) -> Exit {
    let result = match cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Analyze(a) => analyze::cmd_analyze(a),
        Command::Launch(a) => launch::cmd_launch(a),
    };
    match result {
        Ok(exit) => exit,
        Err(fail) => {
            eprintln!("parobj: {fail}");
            fail.exit
        }
    }
}
