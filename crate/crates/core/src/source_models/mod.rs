//! Finite-alphabet stationary sources: memoryless and first-order Markov.
//!
//! All public entropy-like quantities are reported in base-|X| units (so the
//! uniform source has entropy rate 1); the `_nats` variants expose the
//! natural-log internals.

mod markov;
mod pmf;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use markov::{MarkovKernel, MAX_MARKOV_ALPHABET};
pub use pmf::{DiscreteSampler, Pmf};

use crate::error::{invalid, Error, Result};
use crate::num::{to_base, Real};

/// Alphabet symbol.
pub type Symbol = u8;

/// Default Markov block length for finite-order Rényi rates: largest `m` with `k^m <= 4096`.
pub fn default_block_length(k: usize) -> usize {
    if k <= 1 {
        return 1;
    }
    let mut m = 0;
    let mut size = 1usize;
    while size * k <= 4096 {
        size *= k;
        m += 1;
    }
    m.max(1)
}

/// Order of a Rényi entropy: a real number or `-∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RenyiOrder<R> {
    NegInfinity,
    Finite(R),
}

/// A Rényi entropy rate and how it was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RenyiRate<R> {
    /// Base-|X| value.
    pub value: R,
    /// True when the value is a finite-block approximation of the rate.
    pub approximate: bool,
    /// Block length used for the approximation, if any.
    pub block_length: Option<usize>,
}

/// Stationary source over `{0, .., k-1}`.
#[derive(Clone, Debug)]
pub enum SourceModel<R> {
    Memoryless { pmf: Pmf<R>, sampler: DiscreteSampler },
    Markov(MarkovKernel<R>),
}

impl<R: Real> SourceModel<R> {
    pub fn memoryless(pmf: Pmf<R>) -> Self {
        let sampler = DiscreteSampler::new(&pmf.to_f64());
        SourceModel::Memoryless { pmf, sampler }
    }

    pub fn markov(kernel: MarkovKernel<R>) -> Self {
        SourceModel::Markov(kernel)
    }

    pub fn uniform(k: usize) -> Self {
        Self::memoryless(Pmf::uniform(k))
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            SourceModel::Memoryless { pmf, .. } => pmf.len(),
            SourceModel::Markov(k) => k.alphabet_size(),
        }
    }

    pub fn is_memoryless(&self) -> bool {
        matches!(self, SourceModel::Memoryless { .. })
    }

    /// Single-letter marginal `P_{X_1}` (the stationary law for Markov sources).
    pub fn marginal(&self) -> &Pmf<R> {
        match self {
            SourceModel::Memoryless { pmf, .. } => pmf,
            SourceModel::Markov(k) => k.stationary(),
        }
    }

    pub fn as_markov(&self) -> Option<&MarkovKernel<R>> {
        match self {
            SourceModel::Markov(k) => Some(k),
            _ => None,
        }
    }

    /// Draws `length` symbols of the stationary process.
    pub fn sample_sequence<G: RngCore + ?Sized>(&self, length: usize, rng: &mut G) -> Result<Vec<Symbol>> {
        if length == 0 {
            return invalid("sequence length must be positive");
        }
        let mut out = Vec::with_capacity(length);
        self.extend_fresh(length, &mut out, rng);
        Ok(out)
    }

    /// Appends `len` symbols of a fresh stationary run.
    pub(crate) fn extend_fresh<G: RngCore + ?Sized>(&self, len: usize, out: &mut Vec<Symbol>, rng: &mut G) {
        match self {
            SourceModel::Memoryless { sampler, .. } => sampler.fill(len, out, rng),
            SourceModel::Markov(k) => {
                if len == 0 {
                    return;
                }
                let mut x = k.sample_initial(rng);
                out.push(x);
                for _ in 1..len {
                    x = k.sample_next(x, rng);
                    out.push(x);
                }
            }
        }
    }

    /// Appends `len` symbols continuing the process `steps >= 1` positions after `last`.
    pub(crate) fn extend_after<G: RngCore + ?Sized>(
        &self,
        last: Symbol,
        steps: u64,
        len: usize,
        out: &mut Vec<Symbol>,
        rng: &mut G,
    ) {
        match self {
            SourceModel::Memoryless { .. } => self.extend_fresh(len, out, rng),
            SourceModel::Markov(k) => {
                if len == 0 {
                    return;
                }
                let mut x = k.sample_after(last, steps, rng);
                out.push(x);
                for _ in 1..len {
                    x = k.sample_next(x, rng);
                    out.push(x);
                }
            }
        }
    }

    /// Jointly samples the windows `[a, a+len)` and `[b, b+len)` of one stationary run.
    ///
    /// Only the symbols the windows need are drawn; a gap between disjoint
    /// windows is bridged with the matching kernel power.
    pub fn sample_windows<G: RngCore + ?Sized>(
        &self,
        a: i64,
        b: i64,
        len: usize,
        rng: &mut G,
        buf: &mut Vec<Symbol>,
        out_a: &mut Vec<Symbol>,
        out_b: &mut Vec<Symbol>,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let l = len as i64;
        buf.clear();
        if hi - lo < l {
            let span = (hi - lo + l) as usize;
            self.extend_fresh(span, buf, rng);
            let off_lo = 0usize;
            let off_hi = (hi - lo) as usize;
            let (oa, ob) = if a <= b { (off_lo, off_hi) } else { (off_hi, off_lo) };
            out_a.clear();
            out_a.extend_from_slice(&buf[oa..oa + len]);
            out_b.clear();
            out_b.extend_from_slice(&buf[ob..ob + len]);
        } else {
            self.extend_fresh(len, buf, rng);
            let last = buf[len - 1];
            let steps = (hi - (lo + l - 1)) as u64;
            self.extend_after(last, steps, len, buf, rng);
            let (first, second) = buf.split_at(len);
            let (wa, wb) = if a <= b { (first, second) } else { (second, first) };
            out_a.clear();
            out_a.extend_from_slice(wa);
            out_b.clear();
            out_b.extend_from_slice(wb);
        }
    }

    fn check_symbols(&self, seq: &[Symbol]) -> Result<()> {
        let k = self.alphabet_size();
        if let Some(&s) = seq.iter().find(|&&s| s as usize >= k) {
            return invalid(format!("symbol {s} outside alphabet of size {k}"));
        }
        Ok(())
    }

    /// `ln P(seq)` or `ln P(seq | context)`. Markov conditioning uses the last context symbol.
    pub fn ln_prob(&self, seq: &[Symbol], context: Option<&[Symbol]>) -> Result<R> {
        if seq.is_empty() {
            return invalid("sequence must be non-empty");
        }
        self.check_symbols(seq)?;
        if let Some(ctx) = context {
            self.check_symbols(ctx)?;
        }
        let ln = |p: R| if p > R::zero() { p.ln() } else { R::neg_infinity() };
        Ok(match self {
            SourceModel::Memoryless { pmf, .. } => seq.iter().map(|&x| ln(pmf.prob(x as usize))).sum(),
            SourceModel::Markov(k) => {
                let first = match context.and_then(|c| c.last()) {
                    Some(&prev) => ln(k.entry(prev as usize, seq[0] as usize)),
                    None => ln(k.stationary().prob(seq[0] as usize)),
                };
                first
                    + seq
                        .windows(2)
                        .map(|w| ln(k.entry(w[0] as usize, w[1] as usize)))
                        .sum::<R>()
            }
        })
    }

    /// Base-|X| log-probability; see [`SourceModel::ln_prob`].
    pub fn log_prob(&self, seq: &[Symbol], context: Option<&[Symbol]>) -> Result<R> {
        Ok(to_base(self.ln_prob(seq, context)?, self.alphabet_size()))
    }

    /// Shannon entropy rate in nats.
    pub fn entropy_rate_nats(&self) -> R {
        match self {
            SourceModel::Memoryless { pmf, .. } => pmf.entropy_nats(),
            SourceModel::Markov(k) => k.entropy_rate_nats(),
        }
    }

    /// Shannon entropy rate, base |X|.
    pub fn entropy_rate(&self) -> R {
        to_base(self.entropy_rate_nats(), self.alphabet_size())
    }

    /// Rényi entropy rate using the default Markov block length.
    pub fn renyi_entropy_rate(&self, order: RenyiOrder<R>) -> Result<RenyiRate<R>> {
        self.renyi_entropy_rate_with_block(order, default_block_length(self.alphabet_size()))
    }

    /// Rényi entropy rate; Markov finite orders other than 1 use `(1/m) H_α(P_{X^m})`.
    pub fn renyi_entropy_rate_with_block(&self, order: RenyiOrder<R>, m: usize) -> Result<RenyiRate<R>> {
        let k = self.alphabet_size();
        let exact = |nats: R| RenyiRate {
            value: to_base(nats, k),
            approximate: false,
            block_length: None,
        };
        match (self, order) {
            (SourceModel::Memoryless { pmf, .. }, RenyiOrder::NegInfinity) => Ok(exact(-pmf.min_positive().ln())),
            (SourceModel::Memoryless { pmf, .. }, RenyiOrder::Finite(a)) => Ok(exact(pmf.renyi_nats(a))),
            (SourceModel::Markov(kern), RenyiOrder::NegInfinity) => Ok(exact(kern.max_mean_cycle_neg_log()?)),
            (SourceModel::Markov(kern), RenyiOrder::Finite(a)) => {
                if (a - R::one()).abs() <= R::epsilon() {
                    return Ok(exact(kern.entropy_rate_nats()));
                }
                if m == 0 {
                    return invalid("block length must be positive");
                }
                let block = kern.block_power_sum_ln(a, m) / (R::one() - a);
                Ok(RenyiRate {
                    value: to_base(block / R::of_usize(m), k),
                    approximate: true,
                    block_length: Some(m),
                })
            }
        }
    }

    /// Strong mixing coefficient bound `d(s)`; zero for memoryless sources.
    pub fn mixing_coefficient_bound(&self, s: usize) -> Result<R> {
        if s == 0 {
            return invalid("lag must be positive");
        }
        Ok(match self {
            SourceModel::Memoryless { .. } => R::zero(),
            SourceModel::Markov(k) => mixing_coefficient_bound(k, s)?,
        })
    }

    /// `P[X_1 = X_{1+s}]`.
    pub fn recurrence_probability(&self, s: usize) -> Result<R> {
        if s == 0 {
            return invalid("lag must be positive");
        }
        Ok(match self {
            SourceModel::Memoryless { pmf, .. } => pmf.collision(),
            SourceModel::Markov(kern) => {
                let k = kern.alphabet_size();
                let ks = kern.power(s);
                (0..k).map(|x| kern.stationary().prob(x) * ks[x * k + x]).sum()
            }
        })
    }

    /// `H_{-∞}(P_{X^t}) = max_{x^t ∈ supp} -ln P(x^t)` in nats, for `t = 1..=t_max`.
    pub fn max_block_neg_log_prob(&self, t_max: usize) -> Vec<R> {
        match self {
            SourceModel::Memoryless { pmf, .. } => {
                let w = -pmf.min_positive().ln();
                (1..=t_max).map(|t| w * R::of_usize(t)).collect()
            }
            SourceModel::Markov(k) => k.max_block_neg_log_prob(t_max),
        }
    }

    /// Smallest positive marginal probability `p_min`.
    pub fn p_min(&self) -> R {
        self.marginal().min_positive()
    }

    pub fn to_spec(&self) -> SourceModelSpec {
        match self {
            SourceModel::Memoryless { pmf, .. } => SourceModelSpec {
                alphabet: pmf.len(),
                kind: SourceKind::Memoryless,
                probs: Some(pmf.to_f64()),
                kernel: None,
            },
            SourceModel::Markov(k) => SourceModelSpec {
                alphabet: k.alphabet_size(),
                kind: SourceKind::Markov,
                probs: None,
                kernel: Some(k.rows().iter().map(|r| r.to_f64()).collect()),
            },
        }
    }

    pub fn from_spec(spec: &SourceModelSpec) -> Result<Self> {
        let conv = |v: &[f64]| v.iter().map(|&x| R::of(x)).collect::<Vec<R>>();
        match spec.kind {
            SourceKind::Memoryless => {
                let probs = spec
                    .probs
                    .as_ref()
                    .ok_or_else(|| Error::ModelInvalid("memoryless model requires \"probs\"".into()))?;
                if spec.kernel.is_some() {
                    return Err(Error::ModelInvalid("memoryless model must not carry \"kernel\"".into()));
                }
                if probs.len() != spec.alphabet {
                    return Err(Error::ModelInvalid(format!(
                        "\"probs\" has {} entries for alphabet {}",
                        probs.len(),
                        spec.alphabet
                    )));
                }
                Ok(Self::memoryless(Pmf::new(conv(probs))?))
            }
            SourceKind::Markov => {
                let rows = spec
                    .kernel
                    .as_ref()
                    .ok_or_else(|| Error::ModelInvalid("markov model requires \"kernel\"".into()))?;
                if spec.probs.is_some() {
                    return Err(Error::ModelInvalid("markov model must not carry \"probs\"".into()));
                }
                if rows.len() != spec.alphabet {
                    return Err(Error::ModelInvalid(format!(
                        "\"kernel\" has {} rows for alphabet {}",
                        rows.len(),
                        spec.alphabet
                    )));
                }
                Ok(Self::markov(MarkovKernel::new(rows.iter().map(|r| conv(r)).collect())?))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SourceModelSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("source spec serializes")
    }
}

/// `max_x ||K^s(x,·) - π||_TV` for a Markov kernel.
pub fn mixing_coefficient_bound<R: Real>(kernel: &MarkovKernel<R>, s: usize) -> Result<R> {
    if s == 0 {
        return invalid("lag must be positive");
    }
    Ok(kernel.max_tv_to_stationary(s))
}

/// Closed form of `d(s)` for the symmetric kernel: `((k-1)/k) |1 - kε|^s`.
pub fn symmetric_mixing_coefficient<R: Real>(k: usize, eps: R, s: usize) -> R {
    let kk = R::of_usize(k);
    (kk - R::one()) / kk * (R::one() - kk * eps).abs().powi(s as i32)
}

/// Stationary distribution of a validated kernel.
pub fn stationary_distribution<R: Real>(kernel: &MarkovKernel<R>) -> Pmf<R> {
    kernel.stationary().clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Memoryless,
    Markov,
}

/// JSON form: `{"alphabet": k, "type": "memoryless"|"markov", "probs": [...] | "kernel": [[...]]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceModelSpec {
    pub alphabet: usize,
    #[serde(rename = "type")]
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Vec<f64>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn sym(eps: f64) -> SourceModel<f64> {
        SourceModel::markov(MarkovKernel::symmetric(2, eps).unwrap())
    }

    #[test]
    fn degenerate_source_is_constant() {
        let m = SourceModel::memoryless(Pmf::<f64>::degenerate(2, 0));
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(1);
        assert_eq!(m.sample_sequence(5, &mut rng).unwrap(), vec![0; 5]);
        assert!(matches!(m.sample_sequence(0, &mut rng), Err(Error::InvalidArgument(_))));
        assert_eq!(m.entropy_rate(), 0.0);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = SourceModel::<f64>::uniform(2);
        let a = m.sample_sequence(100, &mut Xoshiro256PlusPlus::seed_from_u64(42)).unwrap();
        let b = m.sample_sequence(100, &mut Xoshiro256PlusPlus::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_binary_frequency_is_half() {
        let m = SourceModel::<f64>::uniform(2);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
        let seq = m.sample_sequence(1_000_000, &mut rng).unwrap();
        let zeros = seq.iter().filter(|&&x| x == 0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.005, "{zeros}");
    }

    #[test]
    fn log_prob_examples() {
        let u = SourceModel::<f64>::uniform(2);
        assert!((u.log_prob(&[0, 1, 1], None).unwrap() + 3.0).abs() < 1e-12);
        let m = sym(0.1);
        assert!((m.log_prob(&[0, 0], None).unwrap() - (0.5f64 * 0.9).log2()).abs() < 1e-12);
        assert!((m.log_prob(&[1], Some(&[1, 0])).unwrap() - 0.1f64.log2()).abs() < 1e-12);
        assert!(matches!(u.log_prob(&[2], None), Err(Error::InvalidArgument(_))));
        assert!(u.log_prob(&[], None).is_err());
    }

    #[test]
    fn log_prob_of_impossible_sequence_is_neg_infinity() {
        let m = SourceModel::memoryless(Pmf::<f64>::degenerate(2, 0));
        assert_eq!(m.ln_prob(&[0, 1], None).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn entropy_rate_examples() {
        assert!((SourceModel::<f64>::uniform(2).entropy_rate() - 1.0).abs() < 1e-15);
        let h = sym(0.1).entropy_rate();
        let h2 = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
        assert!((h - h2).abs() < 1e-12);
        assert!((h - 0.4690).abs() < 1e-4);
    }

    #[test]
    fn renyi_examples() {
        let u = SourceModel::<f64>::uniform(2);
        assert!((u.renyi_entropy_rate(RenyiOrder::Finite(2.0)).unwrap().value - 1.0).abs() < 1e-12);
        let skew = SourceModel::memoryless(Pmf::new(vec![0.75f64, 0.25]).unwrap());
        let r = skew.renyi_entropy_rate(RenyiOrder::Finite(2.0)).unwrap();
        assert!((r.value - 1.6f64.log2()).abs() < 1e-12);
        assert!(!r.approximate);
        let m = sym(0.1).renyi_entropy_rate(RenyiOrder::NegInfinity).unwrap();
        assert!((m.value + 0.1f64.log2()).abs() < 1e-12);
        assert!((m.value - 3.3219).abs() < 1e-4);
    }

    #[test]
    fn markov_finite_order_is_flagged_approximate() {
        let r = sym(0.1).renyi_entropy_rate(RenyiOrder::Finite(2.0)).unwrap();
        assert!(r.approximate);
        assert_eq!(r.block_length, Some(12));
        // Order one delegates to the exact entropy rate.
        let r1 = sym(0.1).renyi_entropy_rate(RenyiOrder::Finite(1.0)).unwrap();
        assert!(!r1.approximate);
    }

    #[test]
    fn markov_block_sum_matches_enumeration() {
        let m = SourceModel::markov(MarkovKernel::new(vec![vec![0.9f64, 0.1], vec![0.2, 0.8]]).unwrap());
        let kern = m.as_markov().unwrap();
        for &alpha in &[0.5f64, 2.0, 3.0, -1.0] {
            let block = 6;
            let mut direct = 0.0;
            for code in 0..(1u32 << block) {
                let seq: Vec<u8> = (0..block).map(|i| ((code >> i) & 1) as u8).collect();
                direct += m.ln_prob(&seq, None).unwrap().exp().powf(alpha);
            }
            assert!((kern.block_power_sum_ln(alpha, block) - direct.ln()).abs() < 1e-10, "alpha {alpha}");
        }
    }

    #[test]
    fn mixing_examples() {
        let k = MarkovKernel::symmetric(2, 0.1f64).unwrap();
        assert!((mixing_coefficient_bound(&k, 1).unwrap() - 0.4).abs() < 1e-12);
        let d50 = mixing_coefficient_bound(&k, 50).unwrap();
        assert!(d50 <= 0.5 * 0.8f64.powi(50) + 1e-15 && d50 < 1e-4);
        for s in 1..30 {
            for kk in 2..5 {
                let kern = MarkovKernel::symmetric(kk, 0.07f64).unwrap();
                let closed = symmetric_mixing_coefficient(kk, 0.07, s);
                assert!((mixing_coefficient_bound(&kern, s).unwrap() - closed).abs() < 1e-12);
            }
        }
        let iid = MarkovKernel::new(vec![vec![0.3f64, 0.7], vec![0.3, 0.7]]).unwrap();
        for s in [1, 5, 20] {
            assert!(mixing_coefficient_bound(&iid, s).unwrap() < 1e-14);
        }
    }

    #[test]
    fn recurrence_examples() {
        assert!((SourceModel::<f64>::uniform(2).recurrence_probability(3).unwrap() - 0.5).abs() < 1e-15);
        let skew = SourceModel::memoryless(Pmf::new(vec![0.75f64, 0.25]).unwrap());
        assert!((skew.recurrence_probability(9).unwrap() - 0.625).abs() < 1e-15);
        assert!((sym(0.1).recurrence_probability(1).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_schema_errors() {
        let m = sym(0.1);
        let back = SourceModel::<f64>::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_spec(), m.to_spec());
        assert!(SourceModel::<f64>::from_json(r#"{"alphabet":2,"type":"memoryless","probs":[0.5,0.5],"x":1}"#).is_err());
        assert!(SourceModel::<f64>::from_json(r#"{"alphabet":3,"type":"memoryless","probs":[0.5,0.5]}"#).is_err());
        assert!(SourceModel::<f64>::from_json(r#"{"alphabet":2,"type":"markov","probs":[0.5,0.5]}"#).is_err());
    }

    #[test]
    fn windows_cover_overlapping_and_disjoint_layouts() {
        let m = SourceModel::<f64>::uniform(4);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
        let (mut buf, mut a, mut b) = (Vec::new(), Vec::new(), Vec::new());
        m.sample_windows(10, 13, 5, &mut rng, &mut buf, &mut a, &mut b);
        assert_eq!(a[3..], b[..2]);
        m.sample_windows(13, 10, 5, &mut rng, &mut buf, &mut a, &mut b);
        assert_eq!(b[3..], a[..2]);
        m.sample_windows(1, 500, 5, &mut rng, &mut buf, &mut a, &mut b);
        assert_eq!((a.len(), b.len()), (5, 5));
    }

    #[test]
    fn f32_models_agree_with_f64() {
        let m32 = SourceModel::memoryless(Pmf::new(vec![0.75f32, 0.25]).unwrap());
        let m64 = SourceModel::memoryless(Pmf::new(vec![0.75f64, 0.25]).unwrap());
        assert!((m32.entropy_rate() as f64 - m64.entropy_rate()).abs() < 1e-6);
    }
}
