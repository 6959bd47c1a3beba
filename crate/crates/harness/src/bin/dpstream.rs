use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpstream_harness::config::NoiseSetting;
use dpstream_harness::output::write_csv;
use dpstream_harness::runner::{stream_for, RunError};
use dpstream_harness::streams::render;
use dpstream_harness::{run_experiment, summarize, Config, Exec};

#[derive(Parser)]
#[command(
    name = "dpstream",
    about = "Run private continual-observation mechanisms against exact oracles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Live,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write one CSV row per run and checkpoint.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        noise: Option<Noise>,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seeds one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Write the stream of run 0 in the text stream format.
    GenStream {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const CONFIG_ERROR: u8 = 2;

fn load(path: &Path, seed: Option<u64>) -> Result<Config, ExitCode> {
    let mut cfg = Config::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(out: Option<PathBuf>, bytes: &[u8]) -> Result<(), ExitCode> {
    let res = match out {
        Some(p) => fs::write(&p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)
        }
    };
    res.map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(CONFIG_ERROR)
    })
}

fn run(cli: Cli) -> Result<ExitCode, ExitCode> {
    match cli.cmd {
        Cmd::Run {
            config,
            seed,
            noise,
            out,
            sequential,
        } => {
            let mut cfg = load(&config, seed)?;
            match noise {
                Some(Noise::Live) => cfg.noise = NoiseSetting::Live,
                Some(Noise::Off) => cfg.noise = NoiseSetting::Off,
                None => {}
            }
            let exec = if sequential {
                Exec::Sequential
            } else {
                Exec::Parallel
            };
            let records = run_experiment(&cfg, exec).map_err(|e| {
                eprintln!("error: {e}");
                match e {
                    RunError::Config(_) | RunError::Mechanism { .. } => {
                        ExitCode::from(CONFIG_ERROR)
                    }
                }
            })?;
            let mut csv = Vec::new();
            write_csv(&records, &mut csv).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            })?;
            emit(out, &csv)?;
            let s = summarize(&cfg, &records);
            eprintln!(
                "{}: {} runs, {} violating ({:.4}), {} conditioned, beta {}",
                cfg.mechanism.name(),
                s.runs,
                s.violations,
                s.fraction,
                s.conditioned,
                cfg.beta
            );
            for (run, check) in &s.failed_checks {
                eprintln!("run {run}: check `{check}` failed");
            }
            Ok(if s.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Cmd::GenStream { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let stream = stream_for(&cfg, 0).map_err(|e| {
                eprintln!("error: {e}");
                ExitCode::from(CONFIG_ERROR)
            })?;
            emit(out, render(&stream).as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run(cli).unwrap_or_else(|c| c)
}
