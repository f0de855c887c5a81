//! `uowq`: optimal transfer weights, Monte Carlo simulation, sweeps, toy
//! training and theorem checks driven by JSON configs.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure, 4 failed
//! verification.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use commands::Outcome;
use config::{ConfigError, Seeded};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

/// Environment variable that overrides the default output directory.
const OUT_DIR_ENV: &str = "UOWQ_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "uowq",
    version,
    about = "Optimal source weights and transfer quantities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the optimal transfer plan.
    Weights(CommonArgs),
    /// Monte Carlo E[KL] for plans and optional theorem checks.
    Simulate(CommonArgs),
    /// Weight and quantity sweeps with predicted curves.
    Sweep(CommonArgs),
    /// Toy multi-source or multi-task training.
    Train(CommonArgs),
    /// Run theorem verifications.
    Verify(CommonArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $UOWQ_OUT_DIR, else ./uowq-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
    /// Also write a gnuplot script for the CSV curves.
    #[arg(long)]
    gnuplot: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("config error {e}"))
    }
}

impl From<uowq_core::Error> for Failure {
    fn from(e: uowq_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(format!("numerical failure: {e}"))
        } else {
            Failure::Config(format!("invalid configuration: {e}"))
        }
    }
}

#[derive(Serialize)]
struct Report<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a C,
    results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<bool>,
}

fn run_command<C, F>(name: &str, args: &CommonArgs, run: F) -> Result<(Value, Outcome), Failure>
where
    C: serde::de::DeserializeOwned + Serialize + Seeded,
    F: FnOnce(&C) -> Result<Outcome, uowq_core::Error>,
{
    let mut cfg: C = config::load(&args.config)?;
    if let Some(s) = args.seed {
        *cfg.seed_mut() = s;
    }
    let seed = *cfg.seed_mut();
    let outcome = run(&cfg)?;
    let report = Report {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: &cfg,
        results: outcome.results.clone(),
        verdict: outcome.verdict,
    };
    let value = serde_json::to_value(&report).map_err(|e| Failure::Io(e.to_string()))?;
    Ok((value, outcome))
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("uowq-out"))
}

fn write_outputs(
    dir: &Path,
    args: &CommonArgs,
    report: &Value,
    outcome: &Outcome,
    elapsed: f64,
) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    if matches!(args.format, Format::Json | Format::Both) {
        let mut text =
            serde_json::to_string_pretty(report).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        std::fs::write(dir.join("report.json"), text).map_err(io)?;
        // kept apart from the report so the report stays byte-reproducible
        let timings = json!({ "wall_clock_seconds": elapsed });
        std::fs::write(dir.join("timings.json"), format!("{timings}\n")).map_err(io)?;
    }
    if matches!(args.format, Format::Csv | Format::Both) {
        for t in &outcome.tables {
            let mut w = csv::Writer::from_path(dir.join(&t.name))
                .map_err(|e| Failure::Io(e.to_string()))?;
            w.write_record(&t.header)
                .map_err(|e| Failure::Io(e.to_string()))?;
            for row in &t.rows {
                w.write_record(row)
                    .map_err(|e| Failure::Io(e.to_string()))?;
            }
            w.flush().map_err(io)?;
        }
    }
    if args.gnuplot {
        if let Some(script) = &outcome.plot {
            std::fs::write(dir.join("plot.gp"), script).map_err(io)?;
        }
    }
    Ok(())
}

fn execute(command: &Command) -> Result<bool, Failure> {
    let start = Instant::now();
    let (args, (report, outcome)) = match command {
        Command::Weights(a) => (a, run_command("weights", a, commands::weights)?),
        Command::Simulate(a) => (a, run_command("simulate", a, commands::simulate)?),
        Command::Sweep(a) => (a, run_command("sweep", a, commands::sweep)?),
        Command::Train(a) => (a, run_command("train", a, commands::train)?),
        Command::Verify(a) => (a, run_command("verify", a, commands::verify)?),
    };
    let dir = out_dir(args);
    write_outputs(&dir, args, &report, &outcome, start.elapsed().as_secs_f64())?;
    if let Some(v) = outcome.verdict {
        eprintln!("verdict: {}", if v { "pass" } else { "FAIL" });
    }
    eprintln!("wrote {}", dir.display());
    Ok(outcome.verdict != Some(false))
}

fn threads(command: &Command) -> Option<usize> {
    match command {
        Command::Weights(a)
        | Command::Simulate(a)
        | Command::Sweep(a)
        | Command::Train(a)
        | Command::Verify(a) => a.threads,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = threads(&cli.command) {
        if n == 0 {
            eprintln!("--threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("cannot start thread pool: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFICATION),
        Err(Failure::Config(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Io(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
