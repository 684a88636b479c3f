//! Stratified Monte Carlo estimation of detector error probabilities.
//!
//! The overlap `T` is non-zero with probability `Θ(log n / n)`, so each
//! conditional error `P[T̂ ≠ t | T = t]` is estimated on its own stratum and the
//! strata are recombined with the exact prior weights.
//!
//! Every trial seeds its own generator from `(seed, n, t, trial)`, and the
//! strata are reduced as integer error counts, so a report depends only on
//! its configuration and never on the worker count. Runs that share a seed
//! also share every sampled read pair; [`run_experiments`] uses this to score
//! several detector configurations on one set of samples.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{min_detectable_overlap, DetectorConfig, MdoSetting, NoiselessDetector, NoisyDetector};
use crate::error::{invalid, Error, Result};
use crate::num::Real;
use crate::reading_channel::{pair_statistics, type1_mgf_bound, Channel, ChannelSpec, PairStats};
use crate::sampler::{OverlapPrior, PairSampler};
use crate::seed::trial_rng;
use crate::source_models::{SourceModel, SourceModelSpec, Symbol};

/// Smallest accepted number of trials per stratum.
pub const MIN_TRIALS: u64 = 100;
const BLOCK: u64 = 2048;
const WILSON_Z: f64 = 1.959_963_984_540_054;

fn default_trials() -> u64 {
    100_000
}

fn default_zero_trials() -> u64 {
    1_000_000
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: SourceModelSpec,
    /// Reading channel; the identity when absent.
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    /// Read length scale: `ℓ = ⌈β log n⌉` with logs in base `|X|`.
    pub beta: f64,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials_per_stratum: u64,
    /// Trials for the `T = 0` stratum.
    #[serde(default = "default_zero_trials")]
    pub zero_stratum_trials: u64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Read length for sequence length `n`.
    pub fn ell(&self, n: u64, k: usize) -> usize {
        read_length(self.beta, n, k)
    }

    /// Trials used for stratum `t`.
    pub fn trials_for(&self, t: i64) -> u64 {
        if t == 0 {
            self.zero_stratum_trials
        } else {
            self.trials_per_stratum
        }
    }

    /// Checks every invariant that does not need the model.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return invalid(format!("beta = {} must be positive", self.beta));
        }
        if self.n_grid.is_empty() {
            return invalid("n_grid is empty");
        }
        for (name, v) in [
            ("trials_per_stratum", self.trials_per_stratum),
            ("zero_stratum_trials", self.zero_stratum_trials),
        ] {
            if v < MIN_TRIALS {
                return invalid(format!("{name} = {v} is below the minimum of {MIN_TRIALS}"));
            }
        }
        Ok(())
    }
}

/// `max(2, ⌈β log_k n⌉)`.
pub fn read_length(beta: f64, n: u64, k: usize) -> usize {
    let l = (beta * (n as f64).ln() / (k as f64).ln() - 1e-9).ceil();
    (l.max(2.0)) as usize
}

/// Which MAP detector to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Noiseless,
    Noisy,
}

/// Binomial proportion with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub t: i64,
    pub trials: u64,
    pub errors: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl StratumEstimate {
    pub fn new(t: i64, trials: u64, errors: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(errors, trials);
        Self {
            t,
            trials,
            errors,
            estimate: errors as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Results for one sequence length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NRecord {
    pub n: u64,
    pub ell: usize,
    pub p1_hat: StratumEstimate,
    /// Strata `t ≠ 0` in increasing order of `t`.
    pub p2_hat: Vec<StratumEstimate>,
    pub p_error_hat: f64,
    /// `p_error_hat · n / log n`, logs in base `|X|`.
    pub phi_hat: f64,
    /// `p_error_hat · n / ln n`.
    pub phi_hat_ln: f64,
    pub theory_phi: f64,
    /// `log n / H₁` or `log n / I`; absent when the rate is zero.
    pub t_star: Option<f64>,
    /// Absent when no overlap can ever be detected.
    pub t_mdo: Option<f64>,
}

impl NRecord {
    pub fn p2(&self, t: i64) -> Option<&StratumEstimate> {
        self.p2_hat.iter().find(|s| s.t == t)
    }

    /// Every stratum, `T = 0` included, in increasing order of `t`.
    pub fn strata(&self) -> impl Iterator<Item = &StratumEstimate> {
        let split = self.p2_hat.partition_point(|s| s.t < 0);
        self.p2_hat[..split]
            .iter()
            .chain(std::iter::once(&self.p1_hat))
            .chain(self.p2_hat[split..].iter())
    }
}

/// Per-`n` results of one detector configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: DetectorKind,
    pub detector: DetectorConfig,
    pub beta: f64,
    pub seed: u64,
    pub records: Vec<NRecord>,
}

impl ExperimentReport {
    pub fn record(&self, n: u64) -> Option<&NRecord> {
        self.records.iter().find(|r| r.n == n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Flat table with one row per `(n, stratum)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,ell,stratum_t,trials,errors,estimate,ci_lo,ci_hi,phi_hat,theory_phi\n");
        for r in &self.records {
            for s in r.strata() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{:?},{:?},{:?},{:?},{:?}",
                    r.n, r.ell, s.t, s.trials, s.errors, s.estimate, s.ci_lo, s.ci_hi, r.phi_hat, r.theory_phi
                );
            }
        }
        out
    }
}

/// Model, channel and derived constants shared by every run of a configuration.
pub struct Setup<R> {
    pub model: SourceModel<R>,
    pub channel: Channel<R>,
    pub kind: DetectorKind,
    stats: Option<PairStats<R>>,
}

impl<R: Real> Setup<R> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let model = SourceModel::from_spec(&config.model)?;
        let k = model.alphabet_size();
        let channel = match &config.channel {
            Some(spec) => Channel::from_spec(spec)?,
            None => Channel::identity(k),
        };
        if channel.input_size() != k {
            return invalid("channel input alphabet does not match the source");
        }
        let kind = if channel.is_identity() {
            DetectorKind::Noiseless
        } else {
            DetectorKind::Noisy
        };
        let stats = match kind {
            DetectorKind::Noisy if !model.is_memoryless() => {
                return Err(Error::Unsupported("noisy reads of a Markov source".into()))
            }
            DetectorKind::Noisy => Some(pair_statistics(model.marginal(), &channel)?),
            DetectorKind::Noiseless => None,
        };
        let mut last = 0;
        for &n in &config.n_grid {
            let ell = config.ell(n, k);
            prior_for(&config.detector, n, ell)?;
            config.detector.validate(ell)?;
            if n <= last {
                return invalid("n_grid must be strictly increasing");
            }
            last = n;
        }
        Ok(Self {
            model,
            channel,
            kind,
            stats,
        })
    }

    pub fn stats(&self) -> Option<&PairStats<R>> {
        self.stats.as_ref()
    }

    /// Base-`|X|` rate that sets `t*`: the entropy rate or the mutual information.
    pub fn rate(&self) -> f64 {
        match &self.stats {
            Some(s) => s.mutual_info().as_f64(),
            None => self.model.entropy_rate().as_f64(),
        }
    }

    fn detector(&self, kind: DetectorKind, prior: &OverlapPrior, config: DetectorConfig) -> Result<AnyDetector<R>> {
        match kind {
            DetectorKind::Noiseless => {
                if !self.channel.is_identity() {
                    return invalid("the noiseless detector needs the identity channel");
                }
                Ok(AnyDetector::Noiseless(NoiselessDetector::new(&self.model, prior, config)?))
            }
            DetectorKind::Noisy => {
                let stats = match &self.stats {
                    Some(s) => s.clone(),
                    None if self.model.is_memoryless() => pair_statistics(self.model.marginal(), &self.channel)?,
                    None => return Err(Error::Unsupported("noisy detector for a Markov source".into())),
                };
                Ok(AnyDetector::Noisy(NoisyDetector::new(&stats, prior, config)?))
            }
        }
    }
}

enum AnyDetector<R> {
    Noiseless(NoiselessDetector<R>),
    Noisy(NoisyDetector<R>),
}

impl<R: Real> AnyDetector<R> {
    fn decide(&mut self, r1: &[Symbol], r2: &[Symbol]) -> i64 {
        match self {
            AnyDetector::Noiseless(d) => d.decide(r1, r2),
            AnyDetector::Noisy(d) => d.decide(r1, r2),
        }
    }
}

fn prior_for(config: &DetectorConfig, n: u64, ell: usize) -> Result<OverlapPrior> {
    if config.positive_only {
        OverlapPrior::one_sided(n, ell)
    } else {
        OverlapPrior::new(n, ell)
    }
}

/// Error counts of every detector on the strata `ts`, all sharing the same samples.
fn count_errors<R: Real>(
    setup: &Setup<R>,
    kind: DetectorKind,
    detectors: &[DetectorConfig],
    prior: OverlapPrior,
    seed: u64,
    strata: &[(i64, u64)],
) -> Result<Vec<Vec<u64>>> {
    for &(t, trials) in strata {
        if trials == 0 {
            return invalid(format!("stratum {t} has zero trials"));
        }
        if !prior.contains(t) {
            return invalid(format!("overlap {t} outside the prior support"));
        }
    }
    let mut tasks = Vec::new();
    for (si, &(_, trials)) in strata.iter().enumerate() {
        let mut start = 0;
        while start < trials {
            let len = BLOCK.min(trials - start);
            tasks.push((si, start, len));
            start += len;
        }
    }
    let n = prior.n();
    let build = || -> Result<(PairSampler<'_, R>, Vec<AnyDetector<R>>)> {
        let sampler = PairSampler::with_prior(&setup.model, &setup.channel, prior)?;
        let dets = detectors
            .iter()
            .map(|c| setup.detector(kind, &prior, *c))
            .collect::<Result<Vec<_>>>()?;
        Ok((sampler, dets))
    };
    build()?;
    let partial: Vec<(usize, Vec<u64>)> = tasks
        .par_iter()
        .map_init(
            || build().expect("detector construction was checked"),
            |(sampler, dets), &(si, start, len)| {
                let t = strata[si].0;
                let mut errs = vec![0u64; dets.len()];
                for trial in start..start + len {
                    let mut rng = trial_rng(seed, &[n, t as u64, trial]);
                    sampler.draw(Some(t), &mut rng).expect("stratum in prior support");
                    let (r1, r2) = sampler.reads();
                    for (e, d) in errs.iter_mut().zip(dets.iter_mut()) {
                        *e += u64::from(d.decide(r1, r2) != t);
                    }
                }
                (si, errs)
            },
        )
        .collect();
    let mut totals = vec![vec![0u64; strata.len()]; detectors.len()];
    for (si, errs) in partial {
        for (d, e) in errs.into_iter().enumerate() {
            totals[d][si] += e;
        }
    }
    Ok(totals)
}

/// Conditional error `P[T̂ ≠ t | T = t]` of `kind` at sequence length `n`.
pub fn estimate_stratum(config: &ExperimentConfig, n: u64, t: i64, kind: DetectorKind) -> Result<StratumEstimate> {
    estimate_stratum_with::<f64>(config, n, t, kind)
}

pub fn estimate_stratum_with<R: Real>(
    config: &ExperimentConfig,
    n: u64,
    t: i64,
    kind: DetectorKind,
) -> Result<StratumEstimate> {
    let trials = config.trials_for(t);
    if trials == 0 {
        return invalid("zero trials");
    }
    let setup = Setup::<R>::new(config)?;
    let ell = config.ell(n, setup.model.alphabet_size());
    let prior = prior_for(&config.detector, n, ell)?;
    let counts = count_errors(&setup, kind, &[config.detector], prior, config.seed, &[(t, trials)])?;
    Ok(StratumEstimate::new(t, trials, counts[0][0]))
}

/// Prior-weighted combination `P_T(0) p̂₁ + Σ_{t≠0} P_T(t) p̂₂(t)`.
pub fn recombine(prior: &OverlapPrior, p1: &StratumEstimate, p2: &[StratumEstimate]) -> f64 {
    let mut total = prior.prob_f64(0) * p1.estimate;
    for s in p2 {
        total += prior.prob_f64(s.t) * s.estimate;
    }
    total
}

/// Asymptotic constant `2 min(β, μ / rate)`, halved in one-sided mode.
pub fn theory_phi(beta: f64, rate: f64, detector: &DetectorConfig) -> f64 {
    let mu = detector.mu.unwrap_or(1.0);
    let branch = if rate > 0.0 { beta.min(mu / rate) } else { beta };
    let sides = if detector.positive_only { 1.0 } else { 2.0 };
    sides * branch
}

/// Runs the configured detector over the whole grid.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(run_experiments_with::<f64>(config, &[config.detector])?.remove(0))
}

/// Runs several detector configurations on common samples; one report each.
///
/// All configurations must agree on `positive_only`, which changes the prior.
pub fn run_experiments(config: &ExperimentConfig, detectors: &[DetectorConfig]) -> Result<Vec<ExperimentReport>> {
    run_experiments_with::<f64>(config, detectors)
}

pub fn run_experiments_with<R: Real>(config: &ExperimentConfig, detectors: &[DetectorConfig]) -> Result<Vec<ExperimentReport>> {
    if detectors.is_empty() {
        return invalid("no detector configuration");
    }
    if detectors.iter().any(|d| d.positive_only != detectors[0].positive_only) {
        return invalid("detectors disagree on positive_only");
    }
    let mut base = config.clone();
    base.detector = detectors[0];
    let setup = Setup::<R>::new(&base)?;
    let k = setup.model.alphabet_size();
    let rate = setup.rate();
    let mut reports: Vec<ExperimentReport> = detectors
        .iter()
        .map(|d| ExperimentReport {
            kind: setup.kind,
            detector: *d,
            beta: config.beta,
            seed: config.seed,
            records: Vec::new(),
        })
        .collect();

    for &n in &config.n_grid {
        let ell = config.ell(n, k);
        let prior = prior_for(&base.detector, n, ell)?;
        for d in detectors {
            d.validate(ell)?;
        }
        let strata: Vec<(i64, u64)> = prior.support().map(|t| (t, config.trials_for(t))).collect();
        let counts = count_errors(&setup, setup.kind, detectors, prior, config.seed, &strata)?;
        let log_n = (n as f64).ln();
        let log_k_n = log_n / (k as f64).ln();
        for (report, errs) in reports.iter_mut().zip(counts) {
            let mut p1 = None;
            let mut p2 = Vec::new();
            for (&(t, trials), e) in strata.iter().zip(errs) {
                let s = StratumEstimate::new(t, trials, e);
                if t == 0 {
                    p1 = Some(s);
                } else {
                    p2.push(s);
                }
            }
            let p1 = p1.expect("prior support contains 0");
            let p_error_hat = recombine(&prior, &p1, &p2);
            let mu = report.detector.mu;
            let t_mdo = match &setup.stats {
                Some(s) => min_detectable_overlap(MdoSetting::Noisy { lambda_max: s.lambda_max() }, n, ell, mu)?,
                None => min_detectable_overlap(MdoSetting::Noiseless(&setup.model), n, ell, mu)?,
            };
            report.records.push(NRecord {
                n,
                ell,
                p1_hat: p1,
                p2_hat: p2,
                p_error_hat,
                phi_hat: p_error_hat * n as f64 / log_k_n,
                phi_hat_ln: p_error_hat * n as f64 / log_n,
                theory_phi: theory_phi(config.beta, rate, &report.detector),
                t_star: (rate > 0.0).then(|| log_k_n / rate),
                t_mdo: t_mdo.value().map(|v| v.as_f64()),
            });
        }
    }
    Ok(reports)
}

/// Trend of `φ̂(n)` over the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiTrend {
    pub values: Vec<f64>,
    pub theory_phi: f64,
    pub strictly_decreasing: bool,
    /// Least-squares slope of `φ̂` against `ln n` is negative.
    pub decreasing_trend: bool,
    /// The last value is closer to the theory constant than the first.
    pub approaches_theory: bool,
}

/// `p̂₁ · n / √(ln n)` over the grid, against the truncated-MGF constant when one exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Type1Scaling {
    pub values: Vec<f64>,
    /// Single-term constant of the truncated-MGF bound at zero (noisy runs only).
    pub constant: Option<f64>,
    /// Every value is at most ten times the constant.
    pub bounded: Option<bool>,
}

/// Type-II profile at the largest `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileVerdict {
    pub n: u64,
    pub t_star: Option<f64>,
    /// Smallest `p̂₂(t)` over `0 < |t| ≤ t*/2`.
    pub min_short: Option<f64>,
    /// Largest `p̂₂(t)` over `|t| ≥ 2 t*`.
    pub max_long: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub phi_trend: PhiTrend,
    pub type1_scaling: Type1Scaling,
    pub profile: ProfileVerdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report: ExperimentReport,
    pub verdicts: Verdicts,
}

/// Runs the experiment and derives the trend verdicts; needs at least three grid points.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    if config.n_grid.len() < 3 {
        return invalid(format!("sweep needs at least 3 grid points, got {}", config.n_grid.len()));
    }
    let report = run_experiment(config)?;
    let setup = Setup::<f64>::new(config)?;
    let verdicts = verdicts(&report, setup.stats())?;
    Ok(SweepReport { report, verdicts })
}

fn slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let len = points.clone().count() as f64;
    let (mx, my) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / len, b + y / len));
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

/// Trend verdicts of a finished report.
pub fn verdicts(report: &ExperimentReport, stats: Option<&PairStats<f64>>) -> Result<Verdicts> {
    let recs = &report.records;
    let (Some(first), Some(last)) = (recs.first(), recs.last()) else {
        return invalid("empty report");
    };
    let values: Vec<f64> = recs.iter().map(|r| r.phi_hat).collect();
    let theory = last.theory_phi;
    let phi_trend = PhiTrend {
        strictly_decreasing: values.windows(2).all(|w| w[1] < w[0]),
        decreasing_trend: slope(recs.iter().map(|r| ((r.n as f64).ln(), r.phi_hat))) < 0.0,
        approaches_theory: (last.phi_hat - theory).abs() < (first.phi_hat - theory).abs(),
        values,
        theory_phi: theory,
    };

    let constant = match stats {
        Some(s) => Some(type1_mgf_bound(s, 0.0)?),
        None => None,
    };
    let t1: Vec<f64> = recs
        .iter()
        .map(|r| r.p1_hat.estimate * r.n as f64 / (r.n as f64).ln().sqrt())
        .collect();
    let type1_scaling = Type1Scaling {
        bounded: constant.map(|c| t1.iter().all(|&v| v <= 10.0 * c)),
        values: t1,
        constant,
    };

    let (min_short, max_long) = match last.t_star {
        Some(ts) => {
            let abs = |s: &&StratumEstimate| s.t.unsigned_abs() as f64;
            let short = last.p2_hat.iter().filter(|s| abs(s) <= 0.5 * ts).map(|s| s.estimate);
            let long = last.p2_hat.iter().filter(|s| abs(s) >= 2.0 * ts).map(|s| s.estimate);
            (short.reduce(f64::min), long.reduce(f64::max))
        }
        None => (None, None),
    };
    let profile = ProfileVerdict {
        n: last.n,
        t_star: last.t_star,
        pass: last.t_star.is_some() && min_short.map_or(true, |v| v >= 0.9) && max_long.map_or(true, |v| v <= 0.1),
        min_short,
        max_long,
    };
    Ok(Verdicts {
        phi_trend,
        type1_scaling,
        profile,
    })
}
