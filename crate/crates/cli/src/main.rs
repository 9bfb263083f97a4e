//! `genex`: run exemplar-selection experiments on weekly streams.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration or parameter
//! error, 3 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use genex_core::dataset::{self, synth_stream};
use genex_core::harness::{run_experiment, summarize, HarnessError};
use genex_core::reports;

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "genex",
    version,
    about = "Genetic-algorithm exemplar selection for weekly prediction streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write results.csv and
    /// summary.json.
    Run {
        /// Experiment config file (key = value sections; see README)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; caps parallelism without changing any output
        #[arg(long, default_value_t = 0, value_name = "N")]
        jobs: usize,
        /// Validate the config and exit without running anything
        #[arg(long, default_value_t = false)]
        dry_run: bool,
    },
    /// Generate a synthetic drifting stream CSV.
    Synth {
        /// Number of students
        #[arg(long, default_value_t = 363)]
        students: usize,
        /// Number of weekly batches
        #[arg(long, default_value_t = 39)]
        weeks: usize,
        /// Fraction of students with the `fail` label
        #[arg(long, default_value_t = 97.0 / 363.0)]
        fail_ratio: f64,
        /// Weekly shift of both class means on the first feature
        #[arg(long, default_value_t = 0.1)]
        drift: f64,
        /// Generator seed
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a results.csv into a plot-ready per-week report CSV.
    Report {
        /// Path to a results.csv produced by `run`
        #[arg(long)]
        results: PathBuf,
        /// Output report CSV path
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a sample CSV and print its class counts and week span.
    ValidateData {
        /// Path to the CSV to validate
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            jobs,
            dry_run,
        } => cmd_run(&config, &out, jobs, dry_run),
        Command::Synth {
            students,
            weeks,
            fail_ratio,
            drift,
            seed,
            out,
        } => cmd_synth(students, weeks, fail_ratio, drift, seed, &out),
        Command::Report { results, out } => cmd_report(&results, &out),
        Command::ValidateData { path } => cmd_validate_data(&path),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn harness_exit_code(error: &HarnessError) -> u8 {
    match error {
        HarnessError::InvalidConfig(_) => EXIT_CONFIG,
        HarnessError::Dataset(_)
        | HarnessError::Memory(_)
        | HarnessError::Classifier(_)
        | HarnessError::Eval(_) => EXIT_DATA,
    }
}

fn cmd_run(config_path: &Path, out_dir: &Path, jobs: usize, dry_run: bool) -> ExitCode {
    let config = match config::parse_config_file(config_path) {
        Ok(config) => config,
        Err(error) => return fail(EXIT_CONFIG, error),
    };
    if dry_run {
        println!("config ok: {}", config_path.display());
        return ExitCode::SUCCESS;
    }

    // resolve the stream up front so data errors surface before any work
    let class_names = match config.stream.load() {
        Ok(stream) => stream.labels.iter().map(|l| l.name.clone()).collect::<Vec<_>>(),
        Err(error) => return fail(EXIT_DATA, error),
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build();
    let pool = match pool {
        Ok(pool) => pool,
        Err(error) => return fail(EXIT_INTERNAL, error),
    };
    let records = match pool.install(|| run_experiment(&config)) {
        Ok(records) => records,
        Err(error) => return fail(harness_exit_code(&error), error),
    };
    let summary = summarize(&records);

    if let Err(error) = std::fs::create_dir_all(out_dir) {
        return fail(EXIT_INTERNAL, format!("cannot create {}: {error}", out_dir.display()));
    }
    let results_path = out_dir.join("results.csv");
    if let Err(error) = std::fs::write(&results_path, reports::results_csv(&records, &class_names)) {
        return fail(EXIT_INTERNAL, format!("cannot write {}: {error}", results_path.display()));
    }
    let summary_path = out_dir.join("summary.json");
    if let Err(error) = std::fs::write(&summary_path, reports::summary_json(&summary.weekly)) {
        return fail(EXIT_INTERNAL, format!("cannot write {}: {error}", summary_path.display()));
    }

    for (strategy, (lo, hi)) in &summary.accuracy_std_range {
        println!("{strategy}: weekly accuracy std range [{lo:.6}, {hi:.6}]");
    }
    ExitCode::SUCCESS
}

fn cmd_synth(
    students: usize,
    weeks: usize,
    fail_ratio: f64,
    drift: f64,
    seed: u64,
    out: &Path,
) -> ExitCode {
    let stream = match synth_stream(students, weeks, fail_ratio, drift, seed) {
        Ok(stream) => stream,
        Err(error) => return fail(EXIT_CONFIG, error),
    };
    match dataset::write_samples_csv(&stream.flatten(), out) {
        Ok(()) => {
            println!(
                "wrote {} rows ({} weeks x {} students) to {}",
                weeks * students,
                weeks,
                students,
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(error) => fail(EXIT_INTERNAL, error),
    }
}

fn cmd_report(results: &Path, out: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(results) {
        Ok(text) => text,
        Err(error) => return fail(EXIT_DATA, format!("cannot read {}: {error}", results.display())),
    };
    let parsed = match reports::parse_results_csv(&text) {
        Ok(parsed) => parsed,
        Err(error) => return fail(EXIT_DATA, error),
    };
    let weekly = genex_core::evaluation::aggregate_runs(&parsed.records);
    match std::fs::write(out, reports::report_csv(&weekly)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => fail(EXIT_INTERNAL, format!("cannot write {}: {error}", out.display())),
    }
}

fn cmd_validate_data(path: &Path) -> ExitCode {
    let ds = match dataset::load_samples_csv(path, None) {
        Ok(ds) => ds,
        Err(error) => return fail(EXIT_DATA, error),
    };
    println!("rows: {}", ds.len());
    let counts = dataset::class_counts_by_name(&ds);
    if counts.is_empty() {
        println!("classes: (none)");
    } else {
        let rendered: Vec<String> = counts
            .iter()
            .map(|(name, count)| format!("{name}={count}"))
            .collect();
        println!("classes: {}", rendered.join(", "));
    }
    match (
        ds.samples.iter().map(|s| s.week).min(),
        ds.samples.iter().map(|s| s.week).max(),
    ) {
        (Some(lo), Some(hi)) => println!("weeks: {lo}-{hi}"),
        _ => println!("weeks: (none)"),
    }
    ExitCode::SUCCESS
}
