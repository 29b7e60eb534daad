use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use sgextremes::config::ExperimentConfig;
use sgextremes::runner::{run, verify};
use sgextremes::Error;

#[derive(Parser)]
#[command(name = "sgextremes", version, about = "Extremal statistics of lattice GFF and sine-Gordon fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a key = value config file.
    Run {
        config: PathBuf,
        /// Replace one config entry; may be repeated.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check the files listed in a run manifest against their checksums.
    Verify {
        manifest: PathBuf,
        /// Also re-execute the run in memory and compare checksums.
        #[arg(long)]
        rerun: bool,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let result = ExperimentConfig::load(&config, &overrides).and_then(|cfg| run(&cfg).map(|m| (cfg, m)));
            match result {
                Ok((cfg, m)) => {
                    println!(
                        "{}",
                        json!({
                            "output_dir": cfg.output_dir,
                            "files": m.files.len(),
                            "wall_clock_seconds": m.wall_clock_seconds,
                        })
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify { manifest, rerun } => match verify(&manifest, rerun) {
            Ok(report) => {
                println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
                if report.ok() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(&e),
        },
    }
}
