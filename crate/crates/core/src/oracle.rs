//! Ground truth for small instances and closed-form sums.
//!
//! [`exact_posterior`] evaluates the Bayes rule with the closed-form
//! likelihoods. [`enumerated_posterior`] knows nothing about those formulas:
//! it walks every admissible read position pair and every assignment of the
//! underlying letters, so the two can check each other.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detectors::{tie_rule_argmax, DetectorConfig, NoiselessDetector, NoisyDetector};
use crate::error::{invalid, Error, Result};
use crate::num::{ln_factorial, log_sum_exp, CompensatedSum, Real};
use crate::reading_channel::{pair_statistics, Channel, ChannelSpec};
use crate::sampler::{overlap_from_indices, OverlapPrior, PairSampler, ReadPair};
use crate::seed::trial_rng;
use crate::source_models::{MarkovKernel, Pmf, SourceModel, SourceModelSpec, Symbol};

/// Posterior of `T` over `-(ℓ-1)..=ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTable<R> {
    ell: usize,
    log_post: Vec<R>,
    probs: Vec<R>,
}

impl<R: Real> PosteriorTable<R> {
    fn from_log(ell: usize, log_unnorm: Vec<R>) -> Self {
        let z = log_sum_exp(&log_unnorm);
        let log_post: Vec<R> = log_unnorm.iter().map(|&v| v - z).collect();
        let probs = log_post.iter().map(|v| v.exp()).collect();
        Self { ell, log_post, probs }
    }

    fn index(&self, t: i64) -> usize {
        (t + self.ell as i64 - 1) as usize
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// `(t, P[T = t | reads])` in increasing `t`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, R)> + Clone + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (i as i64 + 1 - self.ell as i64, p))
    }

    pub fn prob(&self, t: i64) -> R {
        self.probs[self.index(t)]
    }

    pub fn log_prob(&self, t: i64) -> R {
        self.log_post[self.index(t)]
    }

    /// MAP overlap under the shared tie rule, applied to log-posteriors.
    pub fn argmax(&self) -> i64 {
        tie_rule_argmax(
            self.log_post
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as i64 + 1 - self.ell as i64, v)),
        )
    }
}

fn memoryless_pmf<R: Real>(model: &SourceModel<R>) -> Result<&Pmf<R>> {
    if !model.is_memoryless() {
        return Err(Error::Unsupported("exact oracles need a memoryless source".into()));
    }
    Ok(model.marginal())
}

fn check_instance<R: Real>(read1: &[Symbol], read2: &[Symbol], channel: &Channel<R>, ell: usize) -> Result<()> {
    if read1.len() != ell || read2.len() != ell {
        return invalid(format!("reads must have length {ell}"));
    }
    if read1.iter().chain(read2).any(|&s| s as usize >= channel.output_size()) {
        return invalid("read symbol outside the channel output alphabet");
    }
    Ok(())
}

/// Posterior of the overlap from the closed-form likelihood ratios.
pub fn exact_posterior<R: Real>(
    read1: &[Symbol],
    read2: &[Symbol],
    model: &SourceModel<R>,
    channel: &Channel<R>,
    n: u64,
    ell: usize,
) -> Result<PosteriorTable<R>> {
    let pmf = memoryless_pmf(model)?;
    check_instance(read1, read2, channel, ell)?;
    let prior = OverlapPrior::new(n, ell)?;
    // ln f(t) - ln f(0) for the pairs (a[ℓ-t+i], b[i]).
    let score: Box<dyn Fn(&[Symbol], &[Symbol], usize) -> R> = if channel.is_identity() {
        Box::new(move |a: &[Symbol], b: &[Symbol], t: usize| {
            if a[ell - t..] != b[..t] {
                return R::neg_infinity();
            }
            -b[..t].iter().map(|&s| pmf.prob(s as usize).ln()).sum::<R>()
        })
    } else {
        let stats = pair_statistics(pmf, channel)?;
        Box::new(move |a: &[Symbol], b: &[Symbol], t: usize| {
            (0..t)
                .map(|i| stats.lambda(a[ell - t + i] as usize, b[i] as usize).ln())
                .sum()
        })
    };
    let log_unnorm = prior
        .support()
        .map(|t| {
            let s = match t {
                0 => R::zero(),
                t if t > 0 => score(read1, read2, t as usize),
                t => score(read2, read1, (-t) as usize),
            };
            prior.prob_real::<R>(t).ln() + s
        })
        .collect();
    Ok(PosteriorTable::from_log(ell, log_unnorm))
}

/// Posterior by brute force over read positions and underlying letters.
///
/// Exponential in `2ℓ`; meant for `ℓ ≤ 6` on small alphabets.
pub fn enumerated_posterior<R: Real>(
    read1: &[Symbol],
    read2: &[Symbol],
    model: &SourceModel<R>,
    channel: &Channel<R>,
    n: u64,
    ell: usize,
) -> Result<PosteriorTable<R>> {
    let pmf = memoryless_pmf(model)?;
    check_instance(read1, read2, channel, ell)?;
    let prior = OverlapPrior::new(n, ell)?;
    let k = pmf.len();
    let l = ell as i64;
    // Likelihood of the reads when read 2 starts `d` letters after read 1.
    let likelihood = |d: i64| -> f64 {
        let lo = d.min(0);
        let hi = (d + l).max(l);
        let span = (hi - lo) as usize;
        let mut total = 0.0;
        let mut x = vec![0usize; span];
        loop {
            let mut p = 1.0;
            for &s in &x {
                p *= pmf.prob(s).as_f64();
            }
            if p > 0.0 {
                for i in 0..ell {
                    let x1 = x[(i as i64 - lo) as usize];
                    let x2 = x[(i as i64 + d - lo) as usize];
                    p *= channel.rows()[x1].prob(read1[i] as usize).as_f64();
                    p *= channel.rows()[x2].prob(read2[i] as usize).as_f64();
                }
                total += p;
            }
            let mut j = 0;
            while j < span && x[j] + 1 == k {
                x[j] = 0;
                j += 1;
            }
            if j == span {
                break;
            }
            x[j] += 1;
        }
        total
    };
    let mut cache = std::collections::HashMap::new();
    let mut mass = vec![0.0f64; 2 * ell];
    let nn = n as i64;
    for i1 in 1..=nn {
        let (lo, hi) = prior.offset_window(i1);
        for d in lo..=hi {
            let t = overlap_from_indices(i1, i1 + d, ell);
            let key = if t == 0 { i64::MAX } else { d };
            let lik = *cache.entry(key).or_insert_with(|| likelihood(d));
            mass[(t + l - 1) as usize] += lik / (n as f64 * n as f64);
        }
    }
    let log_unnorm = mass.iter().map(|&m| R::of(m).ln()).collect();
    Ok(PosteriorTable::from_log(ell, log_unnorm))
}

/// Which side of the threshold a partial power sum keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Sequences with `1/P ≥ threshold`.
    Ge,
    /// Sequences with `1/P ≤ threshold`.
    Le,
}

/// `Σ_{x^t} P(x^t)^e · 1[1/P(x^t) ⋚ threshold]`, exactly, by composition classes.
pub fn partial_power_sum<R: Real>(model: &SourceModel<R>, t: usize, threshold: f64, exponent: u32, direction: Direction) -> Result<R> {
    let pmf = memoryless_pmf(model)?;
    if !(exponent == 1 || exponent == 2) {
        return invalid("exponent must be 1 or 2");
    }
    if t == 0 || threshold.is_nan() || threshold < 0.0 {
        return invalid("t must be positive and the threshold non-negative");
    }
    let support: Vec<f64> = pmf.support().map(|x| pmf.prob(x).as_f64().ln()).collect();
    let ln_thr = threshold.ln();
    let slack = 1e-9 * ln_thr.abs().max(1.0);
    let e = exponent as f64;
    let mut sum = CompensatedSum::<f64>::new();
    let mut comp = vec![0u64; support.len()];
    let ln_t_fact = ln_factorial(t as u64);
    visit_compositions(&mut comp, 0, t as u64, &mut |c| {
        let ln_p: f64 = c.iter().zip(&support).map(|(&ci, &lp)| ci as f64 * lp).sum();
        let keep = match direction {
            Direction::Ge => -ln_p >= ln_thr - slack,
            Direction::Le => -ln_p <= ln_thr + slack,
        };
        if keep {
            let ln_count = ln_t_fact - c.iter().map(|&ci| ln_factorial(ci)).sum::<f64>();
            sum.add((ln_count + e * ln_p).exp());
        }
    });
    Ok(R::of(sum.value()))
}

fn visit_compositions(c: &mut [u64], i: usize, left: u64, f: &mut impl FnMut(&[u64])) {
    if i + 1 == c.len() {
        c[i] = left;
        f(c);
        return;
    }
    for v in 0..=left {
        c[i] = v;
        visit_compositions(c, i + 1, left - v, f);
    }
}

/// Repetition probability with its provenance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepetitionEstimate {
    pub value: f64,
    /// Standard error of a Monte Carlo estimate; `None` when exact.
    pub std_error: Option<f64>,
}

/// Monte Carlo options for Markov repetition probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McOptions {
    pub trials: u64,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { trials: 100_000, seed: 1 }
    }
}

/// `P[X₁^t = X_{1+s}^{t+s}]`: exact for memoryless sources, Monte Carlo for Markov ones.
pub fn repetition_probability<R: Real>(model: &SourceModel<R>, t: usize, s: usize, mc: McOptions) -> Result<RepetitionEstimate> {
    if t == 0 || s == 0 {
        return invalid("t and s must be positive");
    }
    match model {
        SourceModel::Memoryless { pmf, .. } => {
            let span = t + s;
            let mut ln_p = 0.0;
            for r in 0..s {
                let c = (span - r).div_ceil(s) as i32;
                let z: f64 = pmf.probs().iter().map(|p| p.as_f64().powi(c)).sum();
                ln_p += z.ln();
            }
            Ok(RepetitionEstimate {
                value: ln_p.exp(),
                std_error: None,
            })
        }
        SourceModel::Markov(_) => {
            if mc.trials < 2 {
                return invalid("at least two Monte Carlo trials are needed");
            }
            let hits: u64 = (0..mc.trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = trial_rng(mc.seed, &[t as u64, s as u64, i]);
                    u64::from(is_repetition(model, t, s, &mut rng))
                })
                .sum();
            let p = hits as f64 / mc.trials as f64;
            Ok(RepetitionEstimate {
                value: p,
                std_error: Some((p * (1.0 - p) / mc.trials as f64).sqrt()),
            })
        }
    }
}

fn is_repetition<R: Real, G: RngCore>(model: &SourceModel<R>, t: usize, s: usize, rng: &mut G) -> bool {
    let x = model.sample_sequence(t + s, rng).expect("positive length");
    (0..t).all(|i| x[i] == x[i + s])
}

/// Exact Markov repetition probability: the event forces an `s`-periodic path, so sum over its first period.
pub fn markov_repetition_exact<R: Real>(kernel: &MarkovKernel<R>, t: usize, s: usize) -> Result<f64> {
    let k = kernel.alphabet_size();
    if t == 0 || s == 0 {
        return invalid("t and s must be positive");
    }
    if s > 12 || (k as f64).powi(s as i32) > 1.7e7 {
        return Err(Error::Unsupported(format!("period {s} too long for exact enumeration")));
    }
    let pi = kernel.stationary().to_f64();
    let kk: Vec<f64> = (0..k * k).map(|i| kernel.entry(i / k, i % k).as_f64()).collect();
    let blocks = k.pow(s as u32);
    let span = t + s;
    let mut total = CompensatedSum::<f64>::new();
    let mut block = vec![0usize; s];
    for code in 0..blocks {
        let mut c = code;
        for b in block.iter_mut() {
            *b = c % k;
            c /= k;
        }
        let mut p = pi[block[0]];
        for i in 1..span {
            if p == 0.0 {
                break;
            }
            p *= kk[block[(i - 1) % s] * k + block[i % s]];
        }
        total.add(p);
    }
    Ok(total.value())
}

/// A batch of random instances on which the fast detector is compared with the enumerated posterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    pub model: SourceModelSpec,
    #[serde(default)]
    pub channel: Option<ChannelSpec>,
    pub n: u64,
    pub ell: usize,
    pub instances: u64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleCheckConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// First instance on which the detector and the oracle disagree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMismatch {
    pub instance: u64,
    pub pair: ReadPair,
    pub detector: i64,
    pub oracle: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheckReport {
    pub instances: u64,
    pub agreements: u64,
    pub first_mismatch: Option<OracleMismatch>,
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.first_mismatch.is_none()
    }
}

#[derive(Clone)]
enum Fast {
    Noiseless(NoiselessDetector<f64>),
    Noisy(NoisyDetector<f64>),
}

/// Runs the detector against [`enumerated_posterior`] on `instances` pairs.
///
/// Instance `i` draws its overlap uniformly from the prior support and then the
/// reads given that overlap, so every hypothesis is exercised.
pub fn check_detectors(config: &OracleCheckConfig) -> Result<OracleCheckReport> {
    if config.instances == 0 {
        return invalid("at least one instance is needed");
    }
    let model = SourceModel::<f64>::from_spec(&config.model)?;
    memoryless_pmf(&model)?;
    let channel = match &config.channel {
        Some(spec) => Channel::from_spec(spec)?,
        None => Channel::identity(model.alphabet_size()),
    };
    let prior = OverlapPrior::new(config.n, config.ell)?;
    let fast = if channel.is_identity() {
        Fast::Noiseless(NoiselessDetector::new(&model, &prior, DetectorConfig::default())?)
    } else {
        let stats = pair_statistics(model.marginal(), &channel)?;
        Fast::Noisy(NoisyDetector::new(&stats, &prior, DetectorConfig::default())?)
    };
    PairSampler::with_prior(&model, &channel, prior)?;
    let support: Vec<i64> = prior.support().collect();
    let outcome = (0..config.instances)
        .into_par_iter()
        .map_init(
            || (fast.clone(), PairSampler::with_prior(&model, &channel, prior).expect("checked above")),
            |(det, sampler), i| -> Result<Option<OracleMismatch>> {
                let mut rng = trial_rng(config.seed, &[config.n, config.ell as u64, i]);
                let t = support[(rng.next_u64() % support.len() as u64) as usize];
                let truth = sampler.draw(Some(t), &mut rng)?;
                let (r1, r2) = sampler.reads();
                let oracle = enumerated_posterior(r1, r2, &model, &channel, config.n, config.ell)?.argmax();
                let (quick, full) = match det {
                    Fast::Noiseless(d) => (d.decide(r1, r2), d.decide_full(r1, r2).t_hat),
                    Fast::Noisy(d) => (d.decide(r1, r2), d.decide_full(r1, r2).t_hat),
                };
                let detector = if quick != oracle { quick } else { full };
                Ok((detector != oracle).then(|| OracleMismatch {
                    instance: i,
                    pair: ReadPair {
                        read1: r1.to_vec(),
                        read2: r2.to_vec(),
                        i1: truth.i1,
                        i2: truth.i2,
                        t: truth.t,
                    },
                    detector,
                    oracle,
                }))
            },
        )
        .try_fold(
            || (0u64, None::<OracleMismatch>),
            |(bad, first), m| {
                m.map(|m| match m {
                    Some(m) => (bad + 1, earliest(first, Some(m))),
                    None => (bad, first),
                })
            },
        )
        .try_reduce(|| (0, None), |a, b| Ok((a.0 + b.0, earliest(a.1, b.1))))?;
    Ok(OracleCheckReport {
        instances: config.instances,
        agreements: config.instances - outcome.0,
        first_mismatch: outcome.1,
    })
}

fn earliest(a: Option<OracleMismatch>, b: Option<OracleMismatch>) -> Option<OracleMismatch> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if a.instance <= b.instance { a } else { b }),
        (a, b) => a.or(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn uniform() -> SourceModel<f64> {
        SourceModel::uniform(2)
    }

    fn skew() -> SourceModel<f64> {
        SourceModel::memoryless(Pmf::new(vec![0.75, 0.25]).unwrap())
    }

    #[test]
    fn posterior_is_normalized_and_dominated_by_full_overlap() {
        let r = [0u8, 1, 1, 0, 1, 0];
        let post = exact_posterior(&r, &r, &uniform(), &Channel::identity(2), 40, 6).unwrap();
        let total: f64 = post.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(post.iter().all(|(t, p)| t == 6 || p < post.prob(6)));
        assert_eq!(post.argmax(), 6);
    }

    #[test]
    fn uninformative_channel_returns_prior() {
        let post = exact_posterior(&[0, 1, 0], &[1, 1, 0], &uniform(), &Channel::bsc(0.5).unwrap(), 20, 3).unwrap();
        let prior = OverlapPrior::new(20, 3).unwrap();
        for (t, p) in post.iter() {
            assert!((p - prior.prob_f64(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
        let channels = [Channel::identity(2), Channel::bsc(0.1).unwrap(), Channel::bsc(0.25).unwrap()];
        for model in [uniform(), skew()] {
            for ch in &channels {
                for _ in 0..4 {
                    let pair = crate::sampler::sample_pair_given_t(&model, ch, 16, 4, rand::Rng::gen_range(&mut rng, -3..=4), &mut rng).unwrap();
                    let a = exact_posterior(&pair.read1, &pair.read2, &model, ch, 16, 4).unwrap();
                    let b = enumerated_posterior(&pair.read1, &pair.read2, &model, ch, 16, 4).unwrap();
                    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
                        assert!((x - y).abs() < 1e-8, "{x} vs {y}");
                    }
                    assert_eq!(a.argmax(), b.argmax());
                }
            }
        }
    }

    #[test]
    fn partial_sum_examples() {
        let u = uniform();
        let v = partial_power_sum(&u, 3, 8.0, 2, Direction::Ge).unwrap();
        assert!((v - 0.125).abs() < 1e-15);
        assert!((partial_power_sum(&u, 3, 8.0, 1, Direction::Le).unwrap() - 1.0).abs() < 1e-15);
        let v = partial_power_sum(&skew(), 2, 3.0, 1, Direction::Le).unwrap();
        assert!((v - 0.5625).abs() < 1e-15);
        let markov = SourceModel::markov(MarkovKernel::symmetric(2, 0.1).unwrap());
        assert!(matches!(
            partial_power_sum(&markov, 3, 8.0, 1, Direction::Le),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn partial_sum_matches_enumeration() {
        let m = SourceModel::memoryless(Pmf::new(vec![0.5f64, 0.3, 0.2]).unwrap());
        for t in 1..=6usize {
            for thr in [1.0, 10.0, 50.0, 300.0] {
                let mut direct = [0.0f64; 2];
                for code in 0..3usize.pow(t as u32) {
                    let seq: Vec<u8> = (0..t).map(|i| ((code / 3usize.pow(i as u32)) % 3) as u8).collect();
                    let p = m.ln_prob(&seq, None).unwrap().exp();
                    if 1.0 / p >= thr * (1.0 - 1e-12) {
                        direct[0] += p * p;
                    }
                    if 1.0 / p <= thr * (1.0 + 1e-12) {
                        direct[1] += p;
                    }
                }
                let ge = partial_power_sum(&m, t, thr, 2, Direction::Ge).unwrap();
                let le = partial_power_sum(&m, t, thr, 1, Direction::Le).unwrap();
                assert!((ge - direct[0]).abs() < 1e-12, "t={t} thr={thr}");
                assert!((le - direct[1]).abs() < 1e-12, "t={t} thr={thr}");
            }
        }
    }

    #[test]
    fn repetition_examples() {
        let u = uniform();
        let o = McOptions::default();
        assert!((repetition_probability(&u, 3, 1, o).unwrap().value - 0.125).abs() < 1e-15);
        assert!((repetition_probability(&u, 3, 3, o).unwrap().value - 0.125).abs() < 1e-15);
        let det = SourceModel::memoryless(Pmf::<f64>::degenerate(3, 1));
        for (t, s) in [(1, 1), (5, 2), (7, 9)] {
            assert_eq!(repetition_probability(&det, t, s, o).unwrap().value, 1.0);
        }
    }

    #[test]
    fn memoryless_repetition_matches_enumeration() {
        let m = skew();
        for t in 1..=5usize {
            for s in 1..=4usize {
                let span = t + s;
                let mut direct = 0.0;
                for code in 0..(1u32 << span) {
                    let x: Vec<u8> = (0..span).map(|i| ((code >> i) & 1) as u8).collect();
                    if (0..t).all(|i| x[i] == x[i + s]) {
                        direct += m.ln_prob(&x, None).unwrap().exp();
                    }
                }
                let v = repetition_probability(&m, t, s, McOptions::default()).unwrap().value;
                assert!((v - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn markov_repetition_exact_and_mc_agree() {
        let k = MarkovKernel::new(vec![vec![0.9f64, 0.1], vec![0.3, 0.7]]).unwrap();
        let m = SourceModel::markov(k.clone());
        for (t, s) in [(3usize, 1usize), (4, 2), (2, 5)] {
            let exact = markov_repetition_exact(&k, t, s).unwrap();
            let span = t + s;
            let mut direct = 0.0;
            for code in 0..(1u32 << span) {
                let x: Vec<u8> = (0..span).map(|i| ((code >> i) & 1) as u8).collect();
                if (0..t).all(|i| x[i] == x[i + s]) {
                    direct += m.ln_prob(&x, None).unwrap().exp();
                }
            }
            assert!((exact - direct).abs() < 1e-13);
            let mc = repetition_probability(&m, t, s, McOptions { trials: 40_000, seed: 5 }).unwrap();
            let se = mc.std_error.unwrap();
            assert!((mc.value - exact).abs() < 4.0 * se + 1e-9, "{} vs {exact}", mc.value);
        }
    }

    #[test]
    fn detector_suite_agrees_on_small_instances() {
        for channel in [None, Some(Channel::<f64>::bsc(0.1).unwrap().to_spec())] {
            let config = OracleCheckConfig {
                model: uniform().to_spec(),
                channel,
                n: 16,
                ell: 4,
                instances: 300,
                seed: 7,
            };
            let report = check_detectors(&config).unwrap();
            assert!(report.passed(), "{:?}", report.first_mismatch);
            assert_eq!(report.agreements, 300);
        }
    }

    #[test]
    fn detector_suite_rejects_markov_sources() {
        let kernel = MarkovKernel::symmetric(2, 0.2).unwrap();
        let config = OracleCheckConfig {
            model: SourceModel::markov(kernel).to_spec(),
            channel: None,
            n: 16,
            ell: 4,
            instances: 10,
            seed: 1,
        };
        assert!(check_detectors(&config).is_err());
    }
}
