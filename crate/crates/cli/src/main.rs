//! `qlockin`: run or validate a quantum lock-in experiment described by a
//! JSON config.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config parse or validation error,
//! 3 numerical failure (a `diagnostics.json` is written to the output
//! directory).

mod config;
mod output;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::{line_of_key, ExperimentConfig, FieldError};
use output::{sha256_hex, Outputs, RunManifest};
use run::RunError;

#[derive(Parser)]
#[command(name = "qlockin", version, about = "Quantum lock-in simulations and analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment and write datasets, reports and a manifest.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// `path:line[:col]: message` for a serde error, pointing at the offending key
/// when the message names one.
fn parse_message(path: &Path, text: &str, err: &serde_json::Error) -> String {
    let full = err.to_string();
    let message = full
        .rsplit_once(" at line ")
        .map(|(m, _)| m.to_string())
        .unwrap_or(full.clone());
    let named = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("unknown field") || message.starts_with("invalid"))
        .and_then(|key| line_of_key(text, key));
    let tagged = message.starts_with("unknown variant").then(|| line_of_key(text, "experiment")).flatten();
    match named.or(tagged) {
        Some(line) => format!("{}:{line}: {message}", path.display()),
        None => format!("{}:{}:{}: {message}", path.display(), err.line(), err.column()),
    }
}

fn field_message(path: &Path, text: &str, err: &FieldError) -> String {
    let line = line_of_key(text, &err.field).unwrap_or(1);
    format!("{}:{line}: {err}", path.display())
}

fn load(path: &Path, seed: Option<u64>) -> Result<(String, ExperimentConfig, Vec<String>), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}:1: cannot read config: {e}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| parse_message(path, &text, &e))?;
    let warnings = cfg.validate(seed).map_err(|e| field_message(path, &text, &e))?;
    Ok((text, cfg, warnings))
}

#[derive(Serialize)]
struct Diagnostics {
    experiment: String,
    seed: Option<u64>,
    error_kind: String,
    message: String,
}

fn error_kind(e: &qlockin_core::Error) -> &'static str {
    use qlockin_core::Error::*;
    match e {
        InvalidArgument(_) => "invalid_argument",
        OutOfRange { .. } => "out_of_range",
        InvalidState(_) => "invalid_state",
        StepSize { .. } => "step_size",
        InfiniteSensitivity => "infinite_sensitivity",
        OutOfValidity(_) => "out_of_validity",
        FitFailure(_) => "fit_failure",
    }
}

fn run_command(path: &Path, seed_override: Option<u64>, out_dir: &Path, threads: Option<usize>) -> ExitCode {
    let started = Instant::now();
    let (text, cfg, warnings) = match load(path, seed_override) {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let seed = seed_override.or(cfg.seed());
    let mut outputs = match Outputs::new(out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", out_dir.display());
            return ExitCode::from(1);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let result = pool.install(|| run::run(&cfg, seed.unwrap_or(0), base_dir, &mut outputs));
    match result {
        Ok(()) => {}
        Err(RunError::Input { field, message }) => {
            let err = FieldError { field, message };
            eprintln!("error: {}", field_message(path, &text, &err));
            return ExitCode::from(2);
        }
        Err(RunError::Numerical(e)) => {
            let diag = Diagnostics {
                experiment: cfg.kind().to_string(),
                seed,
                error_kind: error_kind(&e).to_string(),
                message: e.to_string(),
            };
            let file = out_dir.join("diagnostics.json");
            let body = serde_json::to_string_pretty(&diag).expect("plain struct") + "\n";
            if let Err(w) = fs::write(&file, body) {
                eprintln!("error: cannot write {}: {w}", file.display());
            }
            eprintln!("error: numerical failure: {e} (see {})", file.display());
            return ExitCode::from(3);
        }
        Err(RunError::Io(e)) => {
            eprintln!("error: writing outputs: {e}");
            return ExitCode::from(1);
        }
    }
    let manifest = RunManifest {
        tool: "qlockin",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cfg.kind().to_string(),
        config_sha256: sha256_hex(text.as_bytes()),
        seed,
        outputs: outputs.files.clone(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = outputs.manifest(&manifest) {
        eprintln!("error: writing manifest: {e}");
        return ExitCode::from(1);
    }
    for f in &manifest.outputs {
        println!("{}", out_dir.join(&f.file).display());
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            threads,
        } => run_command(&config, seed, &out, threads),
        Command::Validate { config, seed } => match load(&config, seed) {
            Ok((_, cfg, warnings)) => {
                for w in &warnings {
                    eprintln!("warning: {w}");
                }
                println!("{}: ok ({})", config.display(), cfg.kind());
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
    }
}
