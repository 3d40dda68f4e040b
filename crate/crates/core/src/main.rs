use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spsim::error::Error;
use spsim::scenario::run::resolve_out_dir;
use spsim::scenario::{self, RunOptions, ScenarioConfig};

#[derive(Parser)]
#[command(name = "spsim", version, about = "Pulsed quantum-dot single-photon source simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Scenario file (TOML).
    config: Option<PathBuf>,
    /// Use a bundled preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Warn about unknown keys instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct Exec {
    /// Worker threads for the sweep (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides SPSIM_OUT_DIR and output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point and write merit.csv and run.json.
    Run {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        exec: Exec,
    },
    /// Parse a scenario and list its points without running them.
    Validate {
        #[command(flatten)]
        source: Source,
    },
    /// Write only the system-reservoir rate curves.
    Rates {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        exec: Exec,
    },
    /// Print the version.
    Version,
}

fn load(src: &Source) -> Result<ScenarioConfig, Error> {
    let strict = src.lenient.then_some(false);
    match (&src.config, &src.preset) {
        (Some(path), None) => scenario::parse_config(path, strict),
        (None, Some(name)) => {
            let text = scenario::config_preset(name)?;
            scenario::parse_config_str(text, strict)
        }
        _ => Err(Error::config("<cli>", "give a scenario file or --preset NAME")),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_numerical() { 3 } else { 2 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("spsim {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
        Command::Validate { source } => match load(&source) {
            Ok(cfg) => {
                println!(
                    "{}: {} point(s), hash {}",
                    cfg.name,
                    cfg.points.len(),
                    cfg.hash
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { source, exec } => {
            let cfg = match load(&source) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let opts = RunOptions {
                workers: exec.workers,
                out_dir: resolve_out_dir(exec.out.as_deref(), &cfg),
            };
            match scenario::run_scenario(&cfg, &opts) {
                Ok(rec) => {
                    let failed = rec.failures().count();
                    println!(
                        "{}: {} point(s), {} failed, results in {}",
                        rec.name,
                        rec.points.len(),
                        failed,
                        opts.out_dir.display()
                    );
                    ExitCode::from(rec.exit_code() as u8)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Rates { source, exec } => {
            let cfg = match load(&source) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let opts = RunOptions {
                workers: exec.workers,
                out_dir: resolve_out_dir(exec.out.as_deref(), &cfg),
            };
            match scenario::write_rate_curves(&cfg, &opts) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
