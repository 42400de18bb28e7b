// NaN-rejecting comparisons and index loops over several arrays are idiomatic here
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod experiments;
mod models;
mod report;
mod spec;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use spec::CliError;

#[derive(Parser)]
#[command(name = "transinfo", version, about = "Run transportation-information experiments from JSON spec files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment or suite spec.
    Run {
        spec: PathBuf,
        /// Override every seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the spec's `out`, else ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the bundled example models.
    ListExamples,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_RUNTIME: u8 = 4;

fn run(spec_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<bool> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| CliError::ConfigParse(format!("cannot read {}: {e}", spec_path.display())))?;
    let spec = spec::parse(&text)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let out = out.or_else(|| spec.out.as_ref().map(|o| base.join(o))).unwrap_or_else(|| PathBuf::from("out"));
    let plans = spec::plan(&spec, base, seed)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let reports: Vec<report::Report> = plans
        .par_iter()
        .map(|p| experiments::run(p).with_context(|| format!("experiment `{}`", p.name)))
        .collect::<Result<_>>()?;
    for r in &reports {
        r.write(&out)?;
        let failed = r.checks.iter().filter(|c| !c.pass).count();
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{status} {} ({}, {} checks, {failed} failed)", r.name, r.kind, r.checks.len());
    }
    report::write_ledger(&out, &reports)?;
    let summary = report::summarize(&reports);
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(out.join("summary.json"), json.clone() + "\n")?;
    if summary.failed.is_empty() {
        println!("all {} checks passed; artifacts in {}", summary.checks, out.display());
        Ok(true)
    } else {
        eprintln!("{json}");
        Ok(false)
    }
}

fn list_examples() {
    for e in &models::CATALOG {
        println!("{:<16} {}  [{}]", e.name, e.summary, e.params);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExamples => {
            list_examples();
            ExitCode::SUCCESS
        }
        Command::Run { spec, seed, out, jobs } => {
            if let Some(j) = jobs {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            match run(&spec, seed, out) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    let code = e.downcast_ref::<CliError>().map_or(EXIT_RUNTIME as i32, CliError::exit_code);
                    ExitCode::from(code as u8)
                }
            }
        }
    }
}
