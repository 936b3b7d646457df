use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use caclab_core::harness::{
    self, emit_trace, registry, trace_csv, write_output, OutputFormat, Overrides, TraceMetric, OUTPUT_DIR_ENV,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "caclab", version, about = "Run and check self-play perturbation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List registered experiments.
    List,
    /// Run an experiment and write its results.
    Run {
        id: String,
        /// Number of seeds (same as seeds=N).
        #[arg(long)]
        seeds: Option<usize>,
        /// Episodes per run (same as episodes=N).
        #[arg(long)]
        episodes: Option<usize>,
        /// Output directory.
        #[arg(long, env = OUTPUT_DIR_ENV, default_value = harness::DEFAULT_OUTPUT_DIR)]
        out: PathBuf,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        /// Extra settings as key=value pairs.
        overrides: Vec<String>,
    },
    /// Run an experiment and check its expectations.
    Verify {
        id: String,
        overrides: Vec<String>,
    },
    /// Print a windowed trace of one metric as CSV.
    Trace {
        id: String,
        /// reward, exploitability, entropy or qgap.
        #[arg(long)]
        metric: TraceMetric,
        /// Episodes per row.
        #[arg(long, default_value_t = 200)]
        window: usize,
        overrides: Vec<String>,
    },
}

fn overrides(pairs: &[String], seeds: Option<usize>, episodes: Option<usize>) -> Result<Overrides> {
    let mut o = Overrides::parse(pairs)?;
    if let Some(n) = seeds {
        o.set("seeds", &n.to_string())?;
    }
    if let Some(n) = episodes {
        o.set("episodes", &n.to_string())?;
    }
    Ok(o)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::List => {
            for def in registry() {
                println!("{:<24} {}", def.id, def.summary);
            }
        }
        Command::Run {
            id,
            seeds,
            episodes,
            out,
            format,
            overrides: pairs,
        } => {
            let o = overrides(&pairs, seeds, episodes)?;
            let started = Instant::now();
            let output = harness::run(&id, &o)?;
            let path = write_output(&output, &out, format).with_context(|| format!("writing {}", out.display()))?;
            for s in &output.summaries {
                println!("{s}");
            }
            for (k, v) in &output.metrics {
                println!("{k} = {v:.6}");
            }
            eprintln!("wrote {} in {:.1}s", path.display(), started.elapsed().as_secs_f64());
        }
        Command::Verify { id, overrides: pairs } => {
            let o = overrides(&pairs, None, None)?;
            let (_, report) = harness::verify(&id, &o)?;
            for check in &report.checks {
                println!("{check}");
            }
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Trace {
            id,
            metric,
            window,
            overrides: pairs,
        } => {
            let o = overrides(&pairs, None, None)?;
            let output = harness::run(&id, &o)?;
            let rows = emit_trace(&output, metric, window)?;
            trace_csv(&rows, io::stdout().lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
