//! `sgs`: barcodes, diagram distances and optimizer runs from the command line.
//!
//! Exit codes: 0 on success (or when every optimizer run reached the gradient
//! threshold), 3 when a run stopped at the iteration limit, 2 on invalid input,
//! 1 on any other failure.

mod experiment;
mod io;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sgs::metrics::wq_distance;
use sgs::persistence::PersistenceSpec;

use experiment::ExperimentConfig;

#[derive(Parser)]
#[command(name = "sgs", version, about = "Stratified gradient sampling for persistence-based objectives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Barcode of a filtered complex as JSON.
    Ph {
        /// Complex JSON: {"n_vertices": n, "simplices": [[...], ...]}.
        complex: PathBuf,
        /// Filter as a JSON array or CSV values.
        filter: PathBuf,
        /// Extended persistence (every bar finite).
        #[arg(long)]
        extended: bool,
        #[arg(long, default_value_t = 0)]
        max_degree: usize,
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Diagram distance W_q between two diagram JSON files.
    Dist {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
    },
    /// Run an optimizer from a JSON experiment config.
    Optimize {
        config: PathBuf,
        /// Output directory; falls back to the config, then SGS_OUTPUT_DIR, then ".".
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Ph {
            complex,
            filter,
            extended,
            max_degree,
            output,
        } => {
            let k = io::read_complex(&complex)?;
            let x = io::read_filter(&filter)?;
            let spec = if extended {
                PersistenceSpec::extended(max_degree)
            } else {
                PersistenceSpec::ordinary(max_degree)
            };
            let barcode = spec.barcode(&k, &x)?;
            match output {
                Some(p) => io::write_json(&p, &barcode)?,
                None => writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&barcode)?)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Dist { a, b, q } => {
            let da = io::read_diagram(&a)?;
            let db = io::read_diagram(&b)?;
            let (w, _) = wq_distance(&da, &db, q)?;
            writeln!(std::io::stdout(), "{w}")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize { config, output_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = output_dir
                .or_else(|| cfg.output_dir.clone())
                .or_else(|| std::env::var_os("SGS_OUTPUT_DIR").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let (ok, summaries) = experiment::run(&cfg, &out)
                .with_context(|| format!("running {}", config.display()))
                .map_err(Failure::Runtime)?;
            for s in &summaries {
                eprintln!(
                    "{}: {:?} after {} iterations, f {} -> {}",
                    s.label, s.termination, s.iterations, s.initial_f, s.final_f
                );
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
