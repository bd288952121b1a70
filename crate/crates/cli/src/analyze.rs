//! `parobj analyze`: validate a trace and summarize its traffic.

use crate::args::AnalyzeArgs;
use crate::{Exit, Fail};
use parobj_core::analysis::checks::guard_protocol;
use parobj_core::analysis::{load_trace, render_text, summarize};

pub fn cmd_analyze(args: AnalyzeArgs) -> Result<Exit, Fail> {
    if args.min_fanout < 2 {
        return Err(Fail::usage("--min-fanout must be at least 2"));
    }
    let trace = load_trace(&args.trace).map_err(|e| Fail::failure(format!("{}: {e}", args.trace.display())))?;
    let summary = summarize(&trace, args.min_fanout);
    print!("{}", render_text(&summary));
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(path, json + "\n").map_err(|e| Fail::failure(format!("cannot write {}: {e}", path.display())))?;
    }
    let problems = guard_protocol(trace.records());
    if problems.is_empty() {
        println!("guard protocol: ok");
        Ok(Exit::Ok)
    } else {
        for p in &problems {
            println!("guard protocol violation: {p}");
        }
        Ok(Exit::Failure)
    }
}
