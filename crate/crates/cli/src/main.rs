//! `uavloc`: run the localization experiments and write CSV tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use uavloc::experiments::{run, Experiment, ExperimentConfig};
use uavloc::scenario::parse_config;
use uavloc::Error;

const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "uavloc", version, about = "Secure cooperative localization experiments for UAV swarms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// RSSI samples, fused error histograms and the sigma_M table.
    ErrorModel(RunArgs),
    /// CRLB surface over anchors and coverage, and the altitude-scaling comparison.
    Crlb(RunArgs),
    /// LS, WLS, LN-1 and GD error against the altitude half-range.
    SpatialBench(RunArgs),
    /// Fixed step sizes against MAGD over the anchor count.
    MagdBench(RunArgs),
    /// Attack bounds, effectiveness, parameter and threshold sweeps.
    AttackEval(RunArgs),
    /// TAD and reputation-propagation benchmarks.
    DefenseBench(RunArgs),
    /// Re-run the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; drawn from entropy and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    parallel: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    subcommand: String,
    config: Option<PathBuf>,
    /// Config text as read, so a replay does not depend on the file.
    config_text: String,
    seed: u64,
    trials: usize,
    out: PathBuf,
    parallel: usize,
    version: String,
    wall_clock_s: f64,
    files: Vec<String>,
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn execute(
    exp: Experiment,
    config: Option<PathBuf>,
    config_text: String,
    seed: Option<u64>,
    trials: Option<usize>,
    out: PathBuf,
    parallel: usize,
) -> Result<Manifest, Error> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::from_text(exp, &config_text)?;
    let seed = match seed {
        Some(s) => s,
        None => match parse_config(&config_text)?.take::<u64>("seed")? {
            Some(s) => s,
            None => rand::random(),
        },
    };
    cfg.scenario.seed = seed;
    let trials = trials.unwrap_or_else(|| exp.default_trials());
    let tables = run(exp, &cfg, trials, parallel)?;

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut files = Vec::with_capacity(tables.len());
    for t in &tables {
        write(&out.join(t.file), &t.to_csv()?)?;
        files.push(t.file.to_string());
    }
    let manifest = Manifest {
        subcommand: exp.name().into(),
        config,
        config_text,
        seed,
        trials,
        out: out.clone(),
        parallel,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::io(MANIFEST, e))?;
    write(&out.join(MANIFEST), &json)?;
    Ok(manifest)
}

fn dispatch(cli: Cli) -> Result<Manifest, Error> {
    let (exp, args) = match cli.command {
        Command::ErrorModel(a) => (Experiment::ErrorModel, a),
        Command::Crlb(a) => (Experiment::Crlb, a),
        Command::SpatialBench(a) => (Experiment::SpatialBench, a),
        Command::MagdBench(a) => (Experiment::MagdBench, a),
        Command::AttackEval(a) => (Experiment::AttackEval, a),
        Command::DefenseBench(a) => (Experiment::DefenseBench, a),
        Command::Replay { manifest, out } => {
            let m: Manifest = serde_json::from_str(&read(&manifest)?)
                .map_err(|e| Error::Config(format!("{}: {e}", manifest.display())))?;
            let exp: Experiment =
                m.subcommand.parse().map_err(|_| Error::Config(format!("unknown subcommand {:?}", m.subcommand)))?;
            return execute(
                exp,
                m.config,
                m.config_text,
                Some(m.seed),
                Some(m.trials),
                out.unwrap_or(m.out),
                m.parallel,
            );
        }
    };
    let text = match &args.config {
        Some(p) => read(p)?,
        None => String::new(),
    };
    execute(exp, args.config, text, args.seed, args.trials, args.out, args.parallel)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateGeometry { .. } => 3,
        Error::Io { .. } => 4,
        Error::Config(_) | Error::Usage(_) | Error::Domain(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(m) => {
            eprintln!(
                "{}: wrote {} files to {} (seed {}, {} trials, {:.1} s)",
                m.subcommand,
                m.files.len(),
                m.out.display(),
                m.seed,
                m.trials,
                m.wall_clock_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
