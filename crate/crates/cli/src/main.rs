use std::process::ExitCode;

use clap::Parser;
use mzw_cli::args::Cli;
use mzw_cli::commands;

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MZ_WORKBENCH_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| anyhow::anyhow!("MZ_WORKBENCH_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| commands::run(&cli));
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failed checks: {}", report.summary.failures.join(", "));
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
