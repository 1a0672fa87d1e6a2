mod args;
mod bench;
mod report;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = args::Args::parse();
    match bench::run(&args) {
        Ok(summary) if summary.failed_checks == 0 => ExitCode::SUCCESS,
        Ok(summary) => {
            eprintln!("{} check(s) exceeded their tolerance", summary.failed_checks);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
