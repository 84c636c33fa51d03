use std::process::ExitCode;

use clap::Parser;
use log::error;
use signal_hook::consts::{SIGINT, SIGTERM};
use sns_server::{Args, NoDiscovery, Server, ServerConfig};

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match ServerConfig::from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sns-server: {e}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&config.log_level)
        .format_timestamp_millis()
        .init();
    let server = match Server::bind(config) {
        Ok(s) => s,
        Err(e) => {
            error!("startup failed: {e}");
            return ExitCode::FAILURE;
        }
    };
    let stop = server.shutdown_handle();
    for sig in [SIGTERM, SIGINT] {
        if let Err(e) = signal_hook::flag::register(sig, stop.flag()) {
            error!("cannot install signal handler: {e}");
            return ExitCode::FAILURE;
        }
    }
    match server.run(NoDiscovery) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
