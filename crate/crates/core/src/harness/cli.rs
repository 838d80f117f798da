//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! run diverges, an oracle fails or output cannot be written.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::{ConfigError, RawConfig};
use super::metrics::emit_csv;
use super::run::run_experiment;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "kova",
    version,
    about = "Kalman-filter value optimization on exactly solvable MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the implementation against its numerical oracles.
    Verify {
        /// Skip the Monte Carlo checks.
        #[arg(long)]
        fast: bool,
    },
    /// Run one experiment per value of a single config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Runs executed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Verify { fast } => cmd_verify(fast),
        Command::Sweep {
            config,
            param,
            values,
            jobs,
        } => cmd_sweep(&config, &param, &values, jobs),
    }
}

fn config_error(e: ConfigError) -> i32 {
    eprintln!("error: {e}");
    EXIT_CONFIG
}

/// Runs the config in `raw` and writes its CSV. Returns the exit code.
fn execute(raw: &RawConfig, label: &str) -> i32 {
    let cfg = match raw.build() {
        Ok(cfg) => cfg,
        Err(e) => return config_error(e),
    };
    let (rows, failure) = match run_experiment(&cfg) {
        Ok(rows) => (rows, None),
        Err(f) => (f.rows, Some(f.error)),
    };
    if let Err(e) = emit_csv(&rows, &cfg.output) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    match failure {
        Some(e) => {
            eprintln!("{label}: run failed after {} iterations: {e}", rows.len());
            EXIT_RUNTIME
        }
        None => {
            let last = rows.last().map_or(f64::NAN, |r| r.rms_value_error);
            println!(
                "{label}: {} iterations, final rms {last:.3e}, wrote {}",
                rows.len(),
                cfg.output.display()
            );
            EXIT_OK
        }
    }
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    let mut raw = match RawConfig::from_file(config) {
        Ok(raw) => raw,
        Err(e) => return config_error(e),
    };
    if let Some(seed) = seed {
        raw.set("seed", &seed.to_string());
    }
    if let Some(out) = out {
        raw.set("output", &out.to_string_lossy());
    }
    execute(&raw, "run")
}

fn cmd_verify(fast: bool) -> i32 {
    match verify::default_suite(fast) {
        Ok(reports) => {
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.passed) {
                EXIT_OK
            } else {
                EXIT_RUNTIME
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// `metrics.csv` with value `0.01` becomes `metrics_0.01.csv`.
pub fn suffixed_path(path: &Path, value: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{value}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{value}"),
    };
    path.with_file_name(name)
}

fn cmd_sweep(config: &Path, param: &str, values: &[String], jobs: usize) -> i32 {
    let base = match RawConfig::from_file(config) {
        Ok(raw) => raw,
        Err(e) => return config_error(e),
    };
    let output = match base.build() {
        Ok(cfg) => cfg.output,
        Err(e) => return config_error(e),
    };
    if param == "output" {
        return config_error(ConfigError::InvalidValue {
            key: param.into(),
            value: values.join(","),
            reason: "the output path cannot be swept".into(),
        });
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let v = v.trim();
        let mut raw = base.clone();
        raw.set(param, v);
        raw.set("output", &suffixed_path(&output, v).to_string_lossy());
        // reject bad values before anything runs
        if let Err(e) = raw.build() {
            return config_error(e);
        }
        configs.push((format!("{param}={v}"), raw));
    }

    let jobs = jobs.max(1);
    let mut codes = vec![EXIT_OK; configs.len()];
    for (chunk, out) in configs.chunks(jobs).zip(codes.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(label, raw)| s.spawn(move || execute(raw, label)))
                .collect();
            for (h, code) in handles.into_iter().zip(out.iter_mut()) {
                *code = h.join().unwrap_or(EXIT_RUNTIME);
            }
        });
    }
    codes.into_iter().max().unwrap_or(EXIT_OK)
}
