//! `parobj launch`: one standalone tcp agent serving until the driver or a
//! signal stops it.

use crate::args::LaunchArgs;
use crate::settings::Settings;
use crate::{Exit, Fail};
use parobj_core::prelude::*;
use parobj_core::runtime::{run_standalone_agent, StandaloneOptions};

pub fn cmd_launch(args: LaunchArgs) -> Result<Exit, Fail> {
    if args.agent < 2 {
        return Err(Fail::usage("--agent must be 2 or more; agent 1 is the driver"));
    }
    let mut s = Settings::default();
    for pair in &args.set {
        s.insert_pair(pair).map_err(Fail::usage)?;
    }
    s.set_flag("seed", args.seed);
    s.set_flag("mode", args.mode);
    s.set_flag("fuzz", args.fuzz.clone());
    s.set_flag("listen", Some(&args.listen));
    let mut config = ClusterConfig::new(1, TransportKind::Tcp);
    config.apply(&s.into_map()).map_err(|e| Fail::usage(e.to_string()))?;

    let (stop_tx, stop_rx) = crossbeam_channel::bounded(1);
    ctrlc::set_handler(move || {
        let _ = stop_tx.try_send(());
    })
    .map_err(|e| Fail::failure(format!("cannot install signal handler: {e}")))?;

    let opts = StandaloneOptions {
        agent: AgentId(args.agent),
        listen: config.net.listen.clone(),
        registry: args.registry.clone(),
        connect_timeout: config.net.connect_timeout,
        runtime: config.runtime,
    };
    let faults = run_standalone_agent(opts, parobj_core::scenarios::registry(), stop_rx)
        .map_err(|e| Fail::failure(format!("agent {}: {e}", args.agent)))?;
    for f in &faults {
        eprintln!("agent {}: fault: {f}", args.agent);
    }
    log::info!("agent {} stopped", args.agent);
    Ok(Exit::Ok)
}
