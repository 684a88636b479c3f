//! Read-pair generative model: read positions, signed overlap and its prior.
//!
//! Positions follow 1-based indexing on the extended sequence
//! `X_{2-ℓ} .. X_{n+2ℓ-2}`. Only the two read windows are ever generated; for
//! a stationary source their joint law depends on the offset `I(2) - I(1)`
//! alone, so the absolute positions are kept purely as ground truth.

use num_rational::Ratio;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::num::Real;
use crate::reading_channel::Channel;
use crate::source_models::{SourceModel, Symbol};

/// Prior of the signed overlap `T` for a given `(n, ℓ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OverlapPrior {
    n: u64,
    ell: usize,
    one_sided: bool,
}

impl OverlapPrior {
    pub fn new(n: u64, ell: usize) -> Result<Self> {
        if ell < 2 {
            return invalid(format!("read length {ell} must be at least 2"));
        }
        if n < 2 * ell as u64 {
            return invalid(format!("n = {n} is below 2 * ell = {}", 2 * ell));
        }
        Ok(Self { n, ell, one_sided: false })
    }

    /// Variant where read 2 never starts before read 1: `T ∈ {0} ∪ [ℓ]`, `P_T(0) = (n-ℓ)/n`.
    pub fn one_sided(n: u64, ell: usize) -> Result<Self> {
        Ok(Self {
            one_sided: true,
            ..Self::new(n, ell)?
        })
    }

    pub fn is_one_sided(&self) -> bool {
        self.one_sided
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// `n_ℓ = n - (2ℓ - 1)`.
    pub fn n_ell(&self) -> u64 {
        self.n - (2 * self.ell as u64 - 1)
    }

    /// `P_T(0) / P_T(t)` for `t ≠ 0`: the MAP threshold on `Γ`.
    pub fn map_threshold(&self) -> u64 {
        if self.one_sided {
            self.n - self.ell as u64
        } else {
            self.n_ell()
        }
    }

    pub fn contains(&self, t: i64) -> bool {
        let lo = if self.one_sided { 0 } else { 1 - self.ell as i64 };
        t >= lo && t <= self.ell as i64
    }

    /// All overlaps with positive prior mass, in increasing order.
    pub fn support(&self) -> impl Iterator<Item = i64> {
        let lo = if self.one_sided { 0 } else { -(self.ell as i64 - 1) };
        lo..=self.ell as i64
    }

    /// Exact probability `P_T(t)`.
    pub fn prob(&self, t: i64) -> Ratio<u64> {
        if !self.contains(t) {
            Ratio::from_integer(0)
        } else if t == 0 {
            Ratio::new(self.map_threshold(), self.n)
        } else {
            Ratio::new(1, self.n)
        }
    }

    pub fn prob_f64(&self, t: i64) -> f64 {
        let p = self.prob(t);
        *p.numer() as f64 / *p.denom() as f64
    }

    pub fn prob_real<R: Real>(&self, t: i64) -> R {
        let p = self.prob(t);
        R::of(*p.numer() as f64) / R::of(*p.denom() as f64)
    }

    /// Offsets `I(2) - I(1)` admissible for a given `I(1)`; always `n` values.
    pub fn offset_window(&self, i1: i64) -> (i64, i64) {
        let (n, l) = (self.n as i64, self.ell as i64);
        if i1 <= l - 1 {
            (1 - l, n - l)
        } else if i1 <= n - l + 1 {
            (1 - i1, n - i1)
        } else {
            (l - n, l - 1)
        }
    }

    /// Draws `(I(1), I(2))` unconditionally or conditioned on `T = t`.
    pub fn draw_indices<G: RngCore + ?Sized>(&self, t: Option<i64>, rng: &mut G) -> Result<(i64, i64)> {
        let (n, l) = (self.n as i64, self.ell as i64);
        let t = match t {
            None if self.one_sided => {
                let j = rng.gen_range(0..n);
                Some(if j < l { j + 1 } else { 0 })
            }
            t => t,
        };
        let i1 = rng.gen_range(1..=n);
        let (lo, hi) = self.offset_window(i1);
        let d = match t {
            None => rng.gen_range(lo..=hi),
            Some(t) if !self.contains(t) => return invalid(format!("overlap {t} outside the prior support")),
            Some(0) => {
                let below = -(l - 1) - lo;
                let j = rng.gen_range(0..self.n_ell() as i64);
                if j < below {
                    lo + j
                } else {
                    l + (j - below)
                }
            }
            Some(t) if t > 0 => l - t,
            Some(t) => -(l + t),
        };
        let i2 = i1 + d;
        debug_assert!(i2 >= 2 - l && i2 + l - 1 <= n + 2 * l - 2);
        Ok((i1, i2))
    }
}

/// Free function form of [`OverlapPrior::new`].
pub fn overlap_prior(n: u64, ell: usize) -> Result<OverlapPrior> {
    OverlapPrior::new(n, ell)
}

/// Signed overlap of reads starting at `i1` and `i2`; full overlap counts as positive.
pub fn overlap_from_indices(i1: i64, i2: i64, ell: usize) -> i64 {
    let l = ell as i64;
    if i2 >= i1 {
        (l - (i2 - i1)).max(0)
    } else {
        -(l - (i1 - i2)).max(0)
    }
}

/// Hidden ground truth of a sampled pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub i1: i64,
    pub i2: i64,
    pub t: i64,
}

/// Two observed reads and the positions they came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadPair {
    pub read1: Vec<Symbol>,
    pub read2: Vec<Symbol>,
    pub i1: i64,
    pub i2: i64,
    pub t: i64,
}

impl ReadPair {
    pub fn truth(&self) -> Truth {
        Truth {
            i1: self.i1,
            i2: self.i2,
            t: self.t,
        }
    }
}

/// Reusable sampler that keeps its buffers between draws.
#[derive(Clone, Debug)]
pub struct PairSampler<'a, R> {
    model: &'a SourceModel<R>,
    channel: &'a Channel<R>,
    prior: OverlapPrior,
    buf: Vec<Symbol>,
    x1: Vec<Symbol>,
    x2: Vec<Symbol>,
    y1: Vec<Symbol>,
    y2: Vec<Symbol>,
}

impl<'a, R: Real> PairSampler<'a, R> {
    pub fn new(model: &'a SourceModel<R>, channel: &'a Channel<R>, n: u64, ell: usize) -> Result<Self> {
        Self::with_prior(model, channel, OverlapPrior::new(n, ell)?)
    }

    pub fn with_prior(model: &'a SourceModel<R>, channel: &'a Channel<R>, prior: OverlapPrior) -> Result<Self> {
        if model.alphabet_size() != channel.input_size() {
            return invalid("source alphabet does not match channel input");
        }
        let ell = prior.ell;
        Ok(Self {
            model,
            channel,
            prior,
            buf: Vec::with_capacity(2 * ell),
            x1: Vec::with_capacity(ell),
            x2: Vec::with_capacity(ell),
            y1: Vec::with_capacity(ell),
            y2: Vec::with_capacity(ell),
        })
    }

    pub fn prior(&self) -> &OverlapPrior {
        &self.prior
    }

    /// Draws a pair, conditioned on `T = t` when given; the reads are then in [`PairSampler::reads`].
    pub fn draw<G: RngCore + ?Sized>(&mut self, t: Option<i64>, rng: &mut G) -> Result<Truth> {
        let (i1, i2) = self.prior.draw_indices(t, rng)?;
        let (n, l) = (self.prior.n as i64, self.prior.ell as i64);
        assert!(
            i1.min(i2) >= 2 - l && i1.max(i2) + l - 1 <= n + 2 * l - 2,
            "read window outside the extended sequence"
        );
        let t = overlap_from_indices(i1, i2, self.prior.ell);
        self.model
            .sample_windows(i1, i2, self.prior.ell, rng, &mut self.buf, &mut self.x1, &mut self.x2);
        self.channel.apply_into(&self.x1, &mut self.y1, rng);
        self.channel.apply_into(&self.x2, &mut self.y2, rng);
        Ok(Truth { i1, i2, t })
    }

    /// Observed reads of the last draw.
    pub fn reads(&self) -> (&[Symbol], &[Symbol]) {
        (&self.y1, &self.y2)
    }

    /// Noiseless reads of the last draw.
    pub fn clean_reads(&self) -> (&[Symbol], &[Symbol]) {
        (&self.x1, &self.x2)
    }

    fn pair(&self, truth: Truth) -> ReadPair {
        ReadPair {
            read1: self.y1.clone(),
            read2: self.y2.clone(),
            i1: truth.i1,
            i2: truth.i2,
            t: truth.t,
        }
    }
}

/// Samples a read pair from the full generative model.
pub fn sample_pair<R: Real, G: RngCore + ?Sized>(
    model: &SourceModel<R>,
    channel: &Channel<R>,
    n: u64,
    ell: usize,
    rng: &mut G,
) -> Result<ReadPair> {
    let mut s = PairSampler::new(model, channel, n, ell)?;
    let truth = s.draw(None, rng)?;
    Ok(s.pair(truth))
}

/// Samples a read pair conditioned on the overlap `T = t`.
pub fn sample_pair_given_t<R: Real, G: RngCore + ?Sized>(
    model: &SourceModel<R>,
    channel: &Channel<R>,
    n: u64,
    ell: usize,
    t: i64,
    rng: &mut G,
) -> Result<ReadPair> {
    let mut s = PairSampler::new(model, channel, n, ell)?;
    let truth = s.draw(Some(t), rng)?;
    Ok(s.pair(truth))
}
