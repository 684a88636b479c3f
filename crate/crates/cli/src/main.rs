mod analyze;
mod error;
mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use overlap_core::montecarlo::{run_experiment, sweep, ExperimentConfig};
use overlap_core::reading_channel::ChannelSpec;
use overlap_core::source_models::{SourceModelSpec, Symbol};
use overlap_core::{
    check_detectors, detect_noiseless, detect_noisy, pair_statistics, Channel64, DetectorConfig, OracleCheckConfig,
    SourceModel64,
};
use serde::{Deserialize, Serialize};

use crate::analyze::{analyze, AnalyzeConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "overlapdetect", version, about = "Bayesian overlap detection between pairs of reads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the seed given in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report files; simulate and sweep default to the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("."))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Information measures, exponents and thresholds of a source and channel.
    Analyze(Common),
    /// Stratified Monte Carlo error estimates over a grid of sequence lengths.
    Simulate(Common),
    /// Simulation plus trend verdicts; needs at least three grid points.
    Sweep(Common),
    /// Compares the detectors with brute-force posteriors on random small instances.
    OracleCheck(Common),
    /// MAP overlap estimate for one pair of reads.
    Detect(Common),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectConfig {
    model: SourceModelSpec,
    #[serde(default)]
    channel: Option<ChannelSpec>,
    n: u64,
    read1: Vec<Symbol>,
    read2: Vec<Symbol>,
    #[serde(default)]
    detector: DetectorConfig,
}

#[derive(Serialize)]
struct DetectReport {
    t_hat: i64,
    scores: Vec<(i64, f64)>,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run_analyze(args: &Common) -> Result<(), CliError> {
    let config: AnalyzeConfig = io::load(&args.config)?;
    let report = analyze(&config).map_err(|e| CliError::config(&args.config, e))?;
    let body = json(&report);
    print!("{body}");
    if let Some(dir) = &args.out {
        io::write_all(dir, &[("analysis.json", body)])?;
    }
    Ok(())
}

fn experiment(args: &Common) -> Result<ExperimentConfig, CliError> {
    let mut config: ExperimentConfig = io::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run_simulate(args: &Common) -> Result<(), CliError> {
    let config = experiment(args)?;
    let report = run_experiment(&config).map_err(|e| CliError::config(&args.config, e))?;
    let paths = io::write_all(args.out_dir(), &[("report.json", report.to_json()), ("report.csv", report.to_csv())])?;
    announce(&paths);
    Ok(())
}

fn run_sweep(args: &Common) -> Result<(), CliError> {
    let config = experiment(args)?;
    let result = sweep(&config).map_err(|e| CliError::config(&args.config, e))?;
    let v = &result.verdicts;
    println!(
        "phi trend: {:?} (theory {:.4}), strictly decreasing {}, decreasing trend {}",
        v.phi_trend.values, v.phi_trend.theory_phi, v.phi_trend.strictly_decreasing, v.phi_trend.decreasing_trend
    );
    println!("type-I scaling: {:?} bounded {:?}", v.type1_scaling.values, v.type1_scaling.bounded);
    println!("profile at n = {}: pass {}", v.profile.n, v.profile.pass);
    let paths = io::write_all(
        args.out_dir(),
        &[("sweep.json", json(&result)), ("report.csv", result.report.to_csv())],
    )?;
    announce(&paths);
    Ok(())
}

fn run_oracle_check(args: &Common) -> Result<(), CliError> {
    let mut config: OracleCheckConfig = io::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = check_detectors(&config).map_err(|e| CliError::config(&args.config, e))?;
    println!("{} of {} instances agree", report.agreements, report.instances);
    if let Some(dir) = &args.out {
        announce(&io::write_all(dir, &[("oracle.json", json(&report))])?);
    }
    match report.first_mismatch {
        None => Ok(()),
        Some(m) => Err(CliError::Mismatch {
            instance: m.instance,
            fixture: json(&m),
        }),
    }
}

fn run_detect(args: &Common) -> Result<(), CliError> {
    let config: DetectConfig = io::load(&args.config)?;
    let bad = |e: overlap_core::Error| CliError::config(&args.config, e);
    let model = SourceModel64::from_spec(&config.model).map_err(bad)?;
    let channel = match &config.channel {
        Some(spec) => Channel64::from_spec(spec).map_err(bad)?,
        None => Channel64::identity(model.alphabet_size()),
    };
    let decision = if channel.is_identity() {
        detect_noiseless(&config.read1, &config.read2, &model, config.n, &config.detector)
    } else {
        pair_statistics(model.marginal(), &channel)
            .and_then(|stats| detect_noisy(&config.read1, &config.read2, &stats, config.n, &config.detector))
    }
    .map_err(bad)?;
    let scores = decision
        .scores
        .as_ref()
        .map(|s| s.hypotheses().collect())
        .unwrap_or_default();
    print!(
        "{}",
        json(&DetectReport {
            t_hat: decision.t_hat,
            scores,
        })
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Sweep(a) => run_sweep(a),
        Command::OracleCheck(a) => run_oracle_check(a),
        Command::Detect(a) => run_detect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Mismatch { fixture, .. } = &e {
                eprint!("{fixture}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
