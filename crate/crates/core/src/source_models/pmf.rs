use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Probability mass function over a finite alphabet `{0, .., k-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf<R> {
    probs: Vec<R>,
}

impl<R: Real> Pmf<R> {
    /// Validates non-negativity, normalization (within [`Real::prob_tol`]) and a non-empty support.
    pub fn new(probs: Vec<R>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::ModelInvalid("empty pmf".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < R::zero()) {
            return Err(Error::ModelInvalid(format!("pmf has a negative or non-finite entry: {probs:?}")));
        }
        let total: R = probs.iter().copied().sum();
        if (total - R::one()).abs() > R::prob_tol() * R::of_usize(probs.len()).max(R::one()) {
            return Err(Error::ModelInvalid(format!("pmf sums to {total}, expected 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "alphabet must be non-empty");
        Self {
            probs: vec![R::one() / R::of_usize(k); k],
        }
    }

    /// Point mass on `symbol`.
    pub fn degenerate(k: usize, symbol: usize) -> Self {
        assert!(symbol < k);
        let mut probs = vec![R::zero(); k];
        probs[symbol] = R::one();
        Self { probs }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn probs(&self) -> &[R] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, x: usize) -> R {
        self.probs[x]
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > R::zero())
            .map(|(i, _)| i)
    }

    /// Smallest probability on the support.
    pub fn min_positive(&self) -> R {
        self.probs
            .iter()
            .copied()
            .filter(|p| *p > R::zero())
            .fold(R::infinity(), R::min)
    }

    /// Shannon entropy in nats.
    pub fn entropy_nats(&self) -> R {
        -self.probs.iter().map(|&p| crate::num::xlogx(p)).sum::<R>()
    }

    /// Rényi entropy of finite order in nats. `order == 1` gives Shannon entropy.
    pub fn renyi_nats(&self, order: R) -> R {
        if (order - R::one()).abs() <= R::epsilon() {
            return self.entropy_nats();
        }
        let s: R = self
            .probs
            .iter()
            .filter(|p| **p > R::zero())
            .map(|p| p.powf(order))
            .sum();
        s.ln() / (R::one() - order)
    }

    /// `Σ p(x)^2`, the collision probability.
    pub fn collision(&self) -> R {
        self.probs.iter().map(|&p| p * p).sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.as_f64()).collect()
    }
}

/// Inverse-CDF sampler with 64-bit integer thresholds.
///
/// Symbols with zero probability are never emitted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteSampler {
    thresholds: Vec<u64>,
    last_positive: u8,
    /// `b` when the distribution is uniform on `2^b` letters; then `b` random bits make a letter.
    #[serde(default)]
    uniform_bits: Option<u32>,
}

impl DiscreteSampler {
    pub fn new(probs: &[f64]) -> Self {
        assert!(probs.len() <= 256, "alphabet too large for u8 symbols");
        let total: f64 = probs.iter().sum();
        let scale = 18_446_744_073_709_551_616.0; // 2^64
        let mut acc = 0.0;
        let mut thresholds = Vec::with_capacity(probs.len());
        let mut last_positive = 0u8;
        for (i, &p) in probs.iter().enumerate() {
            acc += p / total;
            if p > 0.0 {
                last_positive = i as u8;
            }
            let thr = acc * scale;
            thresholds.push(if thr >= scale { u64::MAX } else { thr as u64 });
        }
        for thr in thresholds.iter_mut().skip(last_positive as usize) {
            *thr = u64::MAX;
        }
        let k = probs.len();
        let uniform = k >= 2 && k.is_power_of_two() && probs.iter().all(|&p| p == probs[0]);
        Self {
            thresholds,
            last_positive,
            uniform_bits: uniform.then(|| k.trailing_zeros()),
        }
    }

    /// Appends `len` independent draws.
    pub fn fill<G: RngCore + ?Sized>(&self, len: usize, out: &mut Vec<u8>, rng: &mut G) {
        match self.uniform_bits {
            Some(b) => {
                let per_word = (64 / b) as usize;
                let mask = (1u64 << b) - 1;
                let mut left = len;
                while left > 0 {
                    let mut r = rng.next_u64();
                    for _ in 0..per_word.min(left) {
                        out.push((r & mask) as u8);
                        r >>= b;
                    }
                    left = left.saturating_sub(per_word);
                }
            }
            None => out.extend((0..len).map(|_| self.sample(rng))),
        }
    }

    #[inline]
    pub fn sample<G: RngCore + ?Sized>(&self, rng: &mut G) -> u8 {
        let r = rng.next_u64();
        for (i, &thr) in self.thresholds.iter().enumerate() {
            if r < thr {
                return i as u8;
            }
        }
        self.last_positive
    }
}
