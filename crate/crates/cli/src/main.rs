use clap::{CommandFactory, Parser};
use parobj_cli::Cli;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                std::process::exit(0);
            }
            eprintln!("\n{}", Cli::command().render_usage());
            std::process::exit(2);
        }
    };
    std::process::exit(parobj_cli::dispatch(cli).code());
}
