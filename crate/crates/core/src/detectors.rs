//! MAP overlap detectors.
//!
//! Every hypothesis `t` gets a log-score: `ln Γ₊(t)` for `t > 0`, `ln Γ₋(|t|)`
//! for `t < 0` and the log-threshold for `t = 0`. The decision is the argmax
//! under [`tie_rule_argmax`]. Scores are natural logs throughout.
//!
//! The prepared detectors ([`NoiselessDetector`], [`NoisyDetector`]) keep
//! scratch buffers and precomputed tables, so a Monte Carlo worker builds one
//! per thread and calls [`NoiselessDetector::decide`] in its inner loop.
//!
//! Noiseless scores come from the borders of `read2 · # · read1`: every
//! border length is a suffix/prefix match, found with the prefix function in
//! `O(ℓ)`. Noisy scores are computed diagonal by diagonal; each diagonal's
//! symbol-pair counts come from word-parallel popcounts, and diagonals whose
//! best possible score `t · ln λ_max` cannot reach the running maximum are
//! skipped.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::num::Real;
use crate::reading_channel::{Lambda, PairStats};
use crate::sampler::OverlapPrior;
use crate::source_models::{MarkovKernel, SourceModel, Symbol};

/// Threshold, truncation and sidedness of a detector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Threshold `n^μ` instead of the MAP threshold.
    #[serde(default)]
    pub mu: Option<f64>,
    /// Non-zero decisions with `|t̂|` below this value are replaced by 0.
    #[serde(default)]
    pub truncation_cutoff: Option<usize>,
    /// Only positive overlaps are considered.
    #[serde(default)]
    pub positive_only: bool,
}

impl DetectorConfig {
    pub fn with_mu(mu: f64) -> Self {
        Self {
            mu: Some(mu),
            ..Self::default()
        }
    }

    pub fn validate(&self, ell: usize) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return invalid(format!("mu = {mu} must be positive"));
            }
        }
        if let Some(c) = self.truncation_cutoff {
            if c > ell {
                return invalid(format!("truncation cutoff {c} exceeds ell = {ell}"));
            }
        }
        Ok(())
    }

    /// Natural log of the threshold: `μ ln n`, or `ln` of the prior odds `P_T(0)/P_T(t)`.
    pub fn log_threshold<R: Real>(&self, prior: &OverlapPrior) -> R {
        match self.mu {
            Some(mu) => R::of(mu) * R::of(prior.n() as f64).ln(),
            None => R::of(prior.map_threshold() as f64).ln(),
        }
    }

    fn truncate(&self, t: i64) -> i64 {
        match self.truncation_cutoff {
            Some(c) if t != 0 && (t.unsigned_abs() as usize) < c => 0,
            _ => t,
        }
    }
}

/// Picks the hypothesis with the largest score.
///
/// Scores within [`Real::tie_eps`] of the maximum are tied; ties go to 0,
/// then to the smaller `|t|`, then to the positive sign.
pub fn tie_rule_argmax<R: Real>(scores: impl IntoIterator<Item = (i64, R)> + Clone) -> i64 {
    let max = scores
        .clone()
        .into_iter()
        .map(|(_, s)| s)
        .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
    let floor = max - R::tie_eps();
    scores
        .into_iter()
        .filter(|&(_, s)| s >= floor)
        .map(|(t, _)| t)
        .min_by_key(|&t| tie_key(t))
        .unwrap_or(0)
}

#[inline]
fn tie_key(t: i64) -> (bool, u64, bool) {
    (t != 0, t.unsigned_abs(), t < 0)
}

/// Per-hypothesis log-scores. `-∞` marks a hypothesis that is impossible.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector<R> {
    /// `ln Γ₊(t)` for `t = 1..=ℓ`.
    pub positive: Vec<R>,
    /// `ln Γ₋(t)` for `t = 1..ℓ`, i.e. hypothesis `-t`.
    pub negative: Vec<R>,
    pub log_threshold: R,
}

impl<R: Real> ScoreVector<R> {
    fn empty(ell: usize, log_threshold: R) -> Self {
        Self {
            positive: vec![R::neg_infinity(); ell],
            negative: vec![R::neg_infinity(); ell - 1],
            log_threshold,
        }
    }

    /// `(t, score)` for every hypothesis, 0 included.
    pub fn hypotheses(&self) -> impl Iterator<Item = (i64, R)> + Clone + '_ {
        std::iter::once((0, self.log_threshold))
            .chain(self.positive.iter().enumerate().map(|(i, &s)| (i as i64 + 1, s)))
            .chain(self.negative.iter().enumerate().map(|(i, &s)| (-(i as i64 + 1), s)))
    }

    pub fn score(&self, t: i64) -> R {
        match t {
            0 => self.log_threshold,
            t if t > 0 => self.positive[t as usize - 1],
            t => self.negative[(-t) as usize - 1],
        }
    }

    pub fn argmax(&self) -> i64 {
        tie_rule_argmax(self.hypotheses())
    }
}

/// Detector output.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision<R> {
    pub t_hat: i64,
    pub scores: Option<ScoreVector<R>>,
}

fn check_reads(read1: &[Symbol], read2: &[Symbol], alphabet: usize) -> Result<usize> {
    let ell = read1.len();
    if ell < 2 || read2.len() != ell {
        return invalid(format!("reads must share a length of at least 2 (got {} and {})", ell, read2.len()));
    }
    if let Some(&s) = read1.iter().chain(read2).find(|&&s| s as usize >= alphabet) {
        return invalid(format!("symbol {s} outside alphabet of size {alphabet}"));
    }
    Ok(ell)
}

const SEPARATOR: u16 = u16::MAX;

/// Prefix function of `a · # · b`; its value at the end is the longest suffix of `b` that is a prefix of `a`.
fn border_chain(a: &[Symbol], b: &[Symbol], text: &mut Vec<u16>, pi: &mut Vec<u32>) {
    text.clear();
    text.extend(a.iter().map(|&s| s as u16));
    text.push(SEPARATOR);
    text.extend(b.iter().map(|&s| s as u16));
    pi.clear();
    pi.resize(text.len(), 0);
    for i in 1..text.len() {
        let mut k = pi[i - 1] as usize;
        while k > 0 && text[i] != text[k] {
            k = pi[k - 1] as usize;
        }
        if text[i] == text[k] {
            k += 1;
        }
        pi[i] = k as u32;
    }
}

/// Iterates the lengths of all suffix/prefix matches, longest first.
fn borders(pi: &[u32]) -> impl Iterator<Item = usize> + '_ {
    let mut k = *pi.last().unwrap_or(&0) as usize;
    std::iter::from_fn(move || {
        if k == 0 {
            None
        } else {
            let out = k;
            k = pi[k - 1] as usize;
            Some(out)
        }
    })
}

/// True when the last `t` symbols of `a` equal the first `t` of `b`.
#[inline]
fn suffix_matches_prefix(a: &[Symbol], b: &[Symbol], t: usize) -> bool {
    a[a.len() - t..].iter().zip(&b[..t]).all(|(x, y)| x == y)
}

/// Log-probability tables of a source, used for block prefix sums.
#[derive(Clone, Debug)]
struct LogTables<R> {
    k: usize,
    first: Vec<R>,
    step: Option<Vec<R>>,
}

impl<R: Real> LogTables<R> {
    fn new(model: &SourceModel<R>) -> Self {
        let ln = |p: R| if p > R::zero() { p.ln() } else { R::neg_infinity() };
        let k = model.alphabet_size();
        let first = model.marginal().probs().iter().map(|&p| ln(p)).collect();
        let step = model
            .as_markov()
            .map(|m| (0..k * k).map(|i| ln(m.entry(i / k, i % k))).collect());
        Self { k, first, step }
    }

    /// `out[t] = ln P(x[..t])` for `t = 0..=len`.
    fn prefix_sums(&self, x: &[Symbol], out: &mut Vec<R>) {
        out.clear();
        out.push(R::zero());
        let mut acc = R::zero();
        for (i, &s) in x.iter().enumerate() {
            acc = acc
                + match (&self.step, i) {
                    (Some(step), i) if i > 0 => step[x[i - 1] as usize * self.k + s as usize],
                    _ => self.first[s as usize],
                };
            out.push(acc);
        }
    }
}

/// Noiseless MAP detector with its scratch space.
#[derive(Clone, Debug)]
pub struct NoiselessDetector<R> {
    tables: LogTables<R>,
    ell: usize,
    log_threshold: R,
    config: DetectorConfig,
    /// Overlaps shorter than this can never reach the candidate set.
    min_useful: usize,
    text: Vec<u16>,
    pi: Vec<u32>,
    cum: Vec<R>,
    cum_alt: Vec<R>,
    candidates: Vec<(i64, R)>,
}

impl<R: Real> NoiselessDetector<R> {
    pub fn new(model: &SourceModel<R>, prior: &OverlapPrior, config: DetectorConfig) -> Result<Self> {
        config.validate(prior.ell())?;
        let ell = prior.ell();
        let log_threshold: R = config.log_threshold(prior);
        let margin = R::of(4.0) * R::tie_eps() * (R::one() + log_threshold.abs());
        let reach = model.max_block_neg_log_prob(ell);
        let min_useful = 1 + reach.iter().take_while(|&&h| h < log_threshold - margin).count();
        Ok(Self {
            tables: LogTables::new(model),
            ell,
            log_threshold,
            config,
            min_useful,
            text: Vec::with_capacity(2 * ell + 1),
            pi: Vec::with_capacity(2 * ell + 1),
            cum: Vec::with_capacity(ell + 1),
            cum_alt: Vec::with_capacity(ell + 1),
            candidates: Vec::with_capacity(2 * ell),
        })
    }

    pub fn log_threshold(&self) -> R {
        self.log_threshold
    }

    /// Calls `f(t, score)` for every hypothesis with a suffix/prefix match.
    fn for_each_match(&mut self, read1: &[Symbol], read2: &[Symbol], mut f: impl FnMut(i64, R)) {
        debug_assert_eq!(read1.len(), self.ell);
        // Positive overlap t: read1's suffix equals read2's prefix; Γ₊(t) = 1/P(read2[..t]).
        border_chain(read2, read1, &mut self.text, &mut self.pi);
        self.tables.prefix_sums(read2, &mut self.cum);
        for t in borders(&self.pi) {
            f(t as i64, -self.cum[t]);
        }
        if self.config.positive_only {
            return;
        }
        border_chain(read1, read2, &mut self.text, &mut self.pi);
        self.tables.prefix_sums(read1, &mut self.cum);
        for t in borders(&self.pi).filter(|&t| t < self.ell) {
            f(-(t as i64), -self.cum[t]);
        }
    }

    /// Decision without the score vector.
    ///
    /// Only overlaps whose best possible score can come within the tie
    /// tolerance of the threshold are compared, symbol by symbol.
    pub fn decide(&mut self, read1: &[Symbol], read2: &[Symbol]) -> i64 {
        let ell = self.ell;
        let mut cands = std::mem::take(&mut self.candidates);
        cands.clear();
        cands.push((0, self.log_threshold));
        let mut ready = false;
        for t in self.min_useful..=ell {
            if suffix_matches_prefix(read1, read2, t) {
                if !ready {
                    self.tables.prefix_sums(read2, &mut self.cum);
                    ready = true;
                }
                cands.push((t as i64, -self.cum[t]));
            }
        }
        if !self.config.positive_only {
            let mut ready = false;
            for t in self.min_useful..ell {
                if suffix_matches_prefix(read2, read1, t) {
                    if !ready {
                        self.tables.prefix_sums(read1, &mut self.cum_alt);
                        ready = true;
                    }
                    cands.push((-(t as i64), -self.cum_alt[t]));
                }
            }
        }
        let t = tie_rule_argmax(cands.iter().copied());
        self.candidates = cands;
        self.config.truncate(t)
    }

    /// Decision with every hypothesis' score.
    pub fn decide_full(&mut self, read1: &[Symbol], read2: &[Symbol]) -> Decision<R> {
        let mut scores = ScoreVector::empty(self.ell, self.log_threshold);
        self.for_each_match(read1, read2, |t, s| {
            if t > 0 {
                scores.positive[t as usize - 1] = s;
            } else {
                scores.negative[(-t) as usize - 1] = s;
            }
        });
        Decision {
            t_hat: self.config.truncate(scores.argmax()),
            scores: Some(scores),
        }
    }
}

/// Noiseless MAP decision for one pair of reads.
pub fn detect_noiseless<R: Real>(
    read1: &[Symbol],
    read2: &[Symbol],
    model: &SourceModel<R>,
    n: u64,
    config: &DetectorConfig,
) -> Result<Decision<R>> {
    let ell = check_reads(read1, read2, model.alphabet_size())?;
    let prior = prior_for(n, ell, config)?;
    Ok(NoiselessDetector::new(model, &prior, *config)?.decide_full(read1, read2))
}

fn prior_for(n: u64, ell: usize, config: &DetectorConfig) -> Result<OverlapPrior> {
    if config.positive_only {
        OverlapPrior::one_sided(n, ell)
    } else {
        OverlapPrior::new(n, ell)
    }
}

/// Noisy MAP detector with word-parallel diagonal scoring.
#[derive(Clone, Debug)]
pub struct NoisyDetector<R> {
    m: usize,
    ell: usize,
    words: usize,
    ln_lambda: Vec<R>,
    excluded: Vec<bool>,
    ln_lambda_max: R,
    /// Score coefficients when no pair is excluded; see [`NoisyDetector::fast_diagonal`].
    fast: Option<FastCoefficients<R>>,
    log_threshold: R,
    config: DetectorConfig,
    bits1: Vec<u64>,
    bits2: Vec<u64>,
    cnt1: Vec<u32>,
    cnt2: Vec<u32>,
    pair_counts: Vec<u32>,
    candidates: Vec<(i64, R)>,
}

impl<R: Real> NoisyDetector<R> {
    pub fn new(stats: &PairStats<R>, prior: &OverlapPrior, config: DetectorConfig) -> Result<Self> {
        config.validate(prior.ell())?;
        let m = stats.output_size();
        let ell = prior.ell();
        let words = ell.div_ceil(64);
        let table = stats.lambda_table();
        let planes = m.saturating_sub(1);
        let ln_lambda: Vec<R> = table.iter().map(|l| l.ln()).collect();
        let fast = (!table.iter().any(|l| matches!(l, Lambda::Excluded))).then(|| {
            let last = m - 1;
            let l = |a: usize, b: usize| ln_lambda[a * m + b];
            FastCoefficients {
                pair: (0..last * last)
                    .map(|i| {
                        let (a, b) = (i / last, i % last);
                        l(a, b) - l(a, last) - l(last, b) + l(last, last)
                    })
                    .collect(),
                row: (0..last).map(|a| l(a, last) - l(last, last)).collect(),
                col: (0..last).map(|b| l(last, b) - l(last, last)).collect(),
                corner: l(last, last),
            }
        });
        Ok(Self {
            m,
            ell,
            words,
            ln_lambda,
            fast,
            excluded: table.iter().map(|l| matches!(l, Lambda::Excluded)).collect(),
            ln_lambda_max: stats.lambda_max().ln(),
            log_threshold: config.log_threshold(prior),
            config,
            bits1: vec![0; planes * words + 2],
            bits2: vec![0; planes * words + 2],
            cnt1: vec![0; m * (ell + 1)],
            cnt2: vec![0; m * (ell + 1)],
            pair_counts: vec![0; m * m],
            candidates: Vec::with_capacity(2 * ell),
        })
    }

    pub fn log_threshold(&self) -> R {
        self.log_threshold
    }

    /// Fills the symbol bitsets (one plane per symbol below `m - 1`) and the
    /// symbol-major prefix counts `cnt[s (ℓ+1) + i] = #{j < i : read[j] = s}`.
    fn load(&mut self, read1: &[Symbol], read2: &[Symbol]) {
        let (m, ell, w) = (self.m, self.ell, self.words);
        for (read, bits, cnt) in [(read1, &mut self.bits1, &mut self.cnt1), (read2, &mut self.bits2, &mut self.cnt2)] {
            bits.iter_mut().for_each(|b| *b = 0);
            for (i, &s) in read.iter().enumerate() {
                let s = s as usize;
                if s + 1 < m {
                    bits[s * w + i / 64] |= 1u64 << (i % 64);
                }
            }
            for (s, col) in cnt.chunks_exact_mut(ell + 1).enumerate() {
                let mut acc = 0u32;
                col[0] = 0;
                for (c, &x) in col[1..].iter_mut().zip(read) {
                    acc += u32::from(x as usize == s);
                    *c = acc;
                }
            }
        }
    }

    #[inline]
    fn sides(&self, first_is_read1: bool) -> (&[u64], &[u32], &[u64], &[u32]) {
        if first_is_read1 {
            (&self.bits1, &self.cnt1, &self.bits2, &self.cnt2)
        } else {
            (&self.bits2, &self.cnt2, &self.bits1, &self.cnt1)
        }
    }

    /// Score of the diagonal pairing `a[ℓ-t+i]` with `b[i]` for `i < t`.
    #[inline]
    fn diagonal(&mut self, first_is_read1: bool, t: usize) -> R {
        match &self.fast {
            Some(fast) => self.fast_diagonal(fast, first_is_read1, t),
            None => self.counted_diagonal(first_is_read1, t),
        }
    }

    /// Diagonal score written as `Σ_{a,b<m-1} c_ab K_ab + Σ_a row_a R_a + Σ_b col_b C_b + t L`,
    /// where only the inner counts `c_ab` need popcounts.
    #[inline]
    fn fast_diagonal(&self, fast: &FastCoefficients<R>, first_is_read1: bool, t: usize) -> R {
        let (m, ell, w) = (self.m, self.ell, self.words);
        let (ba, ca, bb, cb) = self.sides(first_is_read1);
        let shift = ell - t;
        let stride = ell + 1;
        let last = m - 1;
        let mut score = R::of_usize(t) * fast.corner;
        for a in 0..last {
            let row = ca[a * stride + ell] - ca[a * stride + shift];
            score = score + R::of_usize(row as usize) * fast.row[a];
            for b in 0..last {
                let c = masked_overlap_count(&ba[a * w..], &bb[b * w..], shift, t);
                score = score + R::of_usize(c as usize) * fast.pair[a * last + b];
            }
        }
        for b in 0..last {
            score = score + R::of_usize(cb[b * stride + t] as usize) * fast.col[b];
        }
        score
    }

    fn counted_diagonal(&mut self, first_is_read1: bool, t: usize) -> R {
        let (m, ell, w) = (self.m, self.ell, self.words);
        let stride = ell + 1;
        let shift = ell - t;
        let last = m - 1;
        let mut counts = std::mem::take(&mut self.pair_counts);
        counts.iter_mut().for_each(|c| *c = 0);
        {
            let (ba, ca, bb, cb) = self.sides(first_is_read1);
            for a in 0..last {
                for b in 0..last {
                    counts[a * m + b] = masked_overlap_count(&ba[a * w..], &bb[b * w..], shift, t);
                }
            }
            let mut corner = t as u32;
            for a in 0..last {
                let row = ca[a * stride + ell] - ca[a * stride + shift];
                let inner: u32 = (0..last).map(|b| counts[a * m + b]).sum();
                counts[a * m + last] = row - inner;
                corner -= row;
            }
            for b in 0..last {
                let col = cb[b * stride + t];
                let inner: u32 = (0..last).map(|a| counts[a * m + b]).sum();
                counts[last * m + b] = col - inner;
                corner -= col - inner;
            }
            counts[last * m + last] = corner;
        }
        let mut score = R::zero();
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                if self.excluded[i] {
                    score = R::neg_infinity();
                    break;
                }
                score = score + R::of_usize(c as usize) * self.ln_lambda[i];
            }
        }
        self.pair_counts = counts;
        score
    }

    /// Decision without the score vector; diagonals that cannot reach the maximum are skipped.
    pub fn decide(&mut self, read1: &[Symbol], read2: &[Symbol]) -> i64 {
        self.load(read1, read2);
        let eps = R::tie_eps();
        let mut best = self.log_threshold;
        let mut cands = std::mem::take(&mut self.candidates);
        cands.clear();
        cands.push((0, best));
        let mut offer = |t: i64, s: R, best: &mut R| {
            if s >= *best - eps {
                cands.push((t, s));
                if s > *best {
                    *best = s;
                }
            }
        };
        let both = !self.config.positive_only;
        // Absorbs rounding differences between partial and complete sums.
        let slack = R::of(64.0) * eps;
        let binary = match &self.fast {
            Some(f) if self.m == 2 => Some((f.pair[0], f.row[0], f.col[0], f.corner)),
            _ => None,
        };
        for t in (1..=self.ell).rev() {
            if R::of_usize(t) * self.ln_lambda_max < best - eps {
                break;
            }
            match binary {
                Some(coef) => {
                    if let Some(s) = self.binary_diagonal(coef, true, t, best - eps - slack) {
                        offer(t as i64, s, &mut best);
                    }
                    if both && t < self.ell {
                        if let Some(s) = self.binary_diagonal(coef, false, t, best - eps - slack) {
                            offer(-(t as i64), s, &mut best);
                        }
                    }
                }
                None => {
                    offer(t as i64, self.diagonal(true, t), &mut best);
                    if both && t < self.ell {
                        offer(-(t as i64), self.diagonal(false, t), &mut best);
                    }
                }
            }
        }
        let t = tie_rule_argmax(cands.iter().copied());
        self.candidates = cands;
        self.config.truncate(t)
    }

    /// [`NoisyDetector::fast_diagonal`] for binary outputs, with the four coefficients unpacked.
    ///
    /// Returns `None` as soon as the score accumulated over the first words
    /// plus `ln λ_max` for every remaining position falls below `floor`.
    #[inline(always)]
    fn binary_diagonal(
        &self,
        (pair, row_c, col_c, corner): (R, R, R, R),
        first_is_read1: bool,
        t: usize,
        floor: R,
    ) -> Option<R> {
        let ell = self.ell;
        let (ba, ca, bb, cb) = self.sides(first_is_read1);
        let shift = ell - t;
        let (q, r) = (shift / 64, shift % 64);
        let lmax = self.ln_lambda_max;
        let mut c = 0u32;
        let full = t / 64;
        for k in 0..full {
            let v = (ba[q + k] >> r) | ((ba[q + k + 1] << 1) << (63 - r));
            c += (v & bb[k]).count_ones();
            let done = 64 * (k + 1);
            if done < t {
                let partial = R::of_usize(done) * corner
                    + R::of_usize((ca[shift + done] - ca[shift]) as usize) * row_c
                    + R::of_usize(cb[done] as usize) * col_c
                    + R::of_usize(c as usize) * pair;
                if partial + R::of_usize(t - done) * lmax < floor {
                    return None;
                }
            }
        }
        let rem = t % 64;
        if rem > 0 {
            let v = (ba[q + full] >> r) | ((ba[q + full + 1] << 1) << (63 - r));
            c += (v & bb[full] & ((1u64 << rem) - 1)).count_ones();
        }
        let row = ca[ell] - ca[shift];
        Some(
            R::of_usize(t) * corner
                + R::of_usize(row as usize) * row_c
                + R::of_usize(cb[t] as usize) * col_c
                + R::of_usize(c as usize) * pair,
        )
    }

    /// Decision with every hypothesis' score.
    pub fn decide_full(&mut self, read1: &[Symbol], read2: &[Symbol]) -> Decision<R> {
        self.load(read1, read2);
        let mut scores = ScoreVector::empty(self.ell, self.log_threshold);
        for t in 1..=self.ell {
            scores.positive[t - 1] = self.diagonal(true, t);
            if !self.config.positive_only && t < self.ell {
                scores.negative[t - 1] = self.diagonal(false, t);
            }
        }
        Decision {
            t_hat: self.config.truncate(scores.argmax()),
            scores: Some(scores),
        }
    }
}

#[derive(Clone, Debug)]
struct FastCoefficients<R> {
    pair: Vec<R>,
    row: Vec<R>,
    col: Vec<R>,
    corner: R,
}

/// Popcount of `a[shift + i] & b[i]` over `i < t`; both slices extend one word past the data.
#[inline]
fn masked_overlap_count(a: &[u64], b: &[u64], shift: usize, t: usize) -> u32 {
    let (q, r) = (shift / 64, shift % 64);
    let mut c = 0;
    let full = t / 64;
    for k in 0..full {
        let v = (a[q + k] >> r) | ((a[q + k + 1] << 1) << (63 - r));
        c += (v & b[k]).count_ones();
    }
    let rem = t % 64;
    if rem > 0 {
        let v = (a[q + full] >> r) | ((a[q + full + 1] << 1) << (63 - r));
        c += (v & b[full] & ((1u64 << rem) - 1)).count_ones();
    }
    c
}

/// Noisy MAP decision for one pair of reads.
pub fn detect_noisy<R: Real>(
    read1: &[Symbol],
    read2: &[Symbol],
    stats: &PairStats<R>,
    n: u64,
    config: &DetectorConfig,
) -> Result<Decision<R>> {
    let ell = check_reads(read1, read2, stats.output_size())?;
    let prior = prior_for(n, ell, config)?;
    Ok(NoisyDetector::new(stats, &prior, *config)?.decide_full(read1, read2))
}

/// Setting for the minimal detectable overlap.
#[derive(Clone, Copy, Debug)]
pub enum MdoSetting<'a, R> {
    Noiseless(&'a SourceModel<R>),
    Noisy { lambda_max: R },
}

/// Minimal detectable overlap, possibly unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mdo<R> {
    Value(R),
    Infinite,
}

impl<R: Real> Mdo<R> {
    pub fn value(self) -> Option<R> {
        match self {
            Mdo::Value(v) => Some(v),
            Mdo::Infinite => None,
        }
    }

    /// True when no overlap of length `|t|` can ever be detected.
    pub fn covers(self, t: i64) -> bool {
        match self {
            Mdo::Value(v) => R::of(t.unsigned_abs() as f64) <= v,
            Mdo::Infinite => true,
        }
    }
}

/// Largest overlap that can never cross the threshold.
///
/// Noiseless: the largest `t ≤ ℓ` with `H₋∞(P_{X^t}) ≤ ln threshold` (0 if none).
/// Noisy: `ln threshold / ln λ_max`, not rounded.
pub fn min_detectable_overlap<R: Real>(setting: MdoSetting<'_, R>, n: u64, ell: usize, mu: Option<f64>) -> Result<Mdo<R>> {
    let config = DetectorConfig {
        mu,
        ..DetectorConfig::default()
    };
    config.validate(ell)?;
    let log_thr: R = config.log_threshold(&OverlapPrior::new(n, ell)?);
    match setting {
        MdoSetting::Noiseless(model) => {
            let tol = R::tie_eps();
            let h = model.max_block_neg_log_prob(ell);
            let t = h.iter().take_while(|&&v| v <= log_thr + tol).count();
            Ok(Mdo::Value(R::of_usize(t)))
        }
        MdoSetting::Noisy { lambda_max } => {
            let l = lambda_max.ln();
            if l <= R::zero() {
                Ok(Mdo::Infinite)
            } else {
                Ok(Mdo::Value(log_thr / l))
            }
        }
    }
}

/// Exact log-likelihood of a positive overlap `t` for a Markov source, less `ln P(read1)`.
///
/// Equals `ln P(read2[t..] | read2[t-1])` when read1's suffix matches read2's
/// prefix, and `-∞` otherwise.
pub fn markov_exact_score<R: Real>(read1: &[Symbol], read2: &[Symbol], kernel: &MarkovKernel<R>, t: usize) -> Result<R> {
    let ell = check_reads(read1, read2, kernel.alphabet_size())?;
    if t == 0 || t > ell {
        return invalid(format!("overlap {t} outside 1..={ell}"));
    }
    if read1[ell - t..] != read2[..t] {
        return Ok(R::neg_infinity());
    }
    Ok(read2[t - 1..]
        .windows(2)
        .map(|w| {
            let p = kernel.entry(w[0] as usize, w[1] as usize);
            if p > R::zero() {
                p.ln()
            } else {
                R::neg_infinity()
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reading_channel::{pair_statistics, Channel};
    use crate::source_models::Pmf;

    fn uniform() -> SourceModel<f64> {
        SourceModel::uniform(2)
    }

    fn bsc(eps: f64) -> PairStats<f64> {
        pair_statistics(&Pmf::uniform(2), &Channel::bsc(eps).unwrap()).unwrap()
    }

    #[test]
    fn tie_rule_prefers_zero_then_short_then_positive() {
        assert_eq!(tie_rule_argmax([(0, 1.0), (3, 1.0), (-1, 1.0)]), 0);
        assert_eq!(tie_rule_argmax([(0, 0.0), (3, 1.0), (-2, 1.0)]), -2);
        assert_eq!(tie_rule_argmax([(0, 0.0), (2, 1.0), (-2, 1.0 + 1e-12)]), 2);
        assert_eq!(tie_rule_argmax([(0, 0.0), (2, 1.0), (-2, 1.1)]), -2);
    }

    #[test]
    fn noiseless_worked_example() {
        let d = detect_noiseless(&[0, 1, 0, 1], &[0, 1, 0, 1], &uniform(), 8, &DetectorConfig::default()).unwrap();
        assert_eq!(d.t_hat, 4);
        let s = d.scores.unwrap();
        assert!((s.score(4) - 16f64.ln()).abs() < 1e-12);
        assert!((s.score(-2) - 4f64.ln()).abs() < 1e-12);
        assert_eq!(s.score(2), 4f64.ln());
        assert_eq!(s.score(1), f64::NEG_INFINITY);
        assert_eq!(s.score(0), 0.0);
    }

    #[test]
    fn noiseless_no_match_gives_zero() {
        let d = detect_noiseless(&[0, 0, 0, 0], &[1, 1, 1, 1], &uniform(), 64, &DetectorConfig::default()).unwrap();
        assert_eq!(d.t_hat, 0);
        assert!(d.scores.unwrap().positive.iter().all(|s| *s == f64::NEG_INFINITY));
    }

    #[test]
    fn truncation_at_ell() {
        let cfg = DetectorConfig {
            truncation_cutoff: Some(4),
            ..DetectorConfig::default()
        };
        let m = uniform();
        assert_eq!(detect_noiseless(&[0, 1, 0, 1], &[0, 1, 0, 1], &m, 8, &cfg).unwrap().t_hat, 4);
        assert_eq!(detect_noiseless(&[1, 1, 0, 1], &[0, 1, 1, 1], &m, 8, &cfg).unwrap().t_hat, 0);
        let plain = detect_noiseless(&[1, 1, 0, 1], &[0, 1, 1, 1], &m, 8, &DetectorConfig::default()).unwrap();
        assert_eq!(plain.t_hat, 2);
    }

    #[test]
    fn identity_channel_matches_noiseless() {
        let stats = pair_statistics(&Pmf::uniform(2), &Channel::identity(2)).unwrap();
        let cfg = DetectorConfig::default();
        for code in 0..256u32 {
            let r1: Vec<u8> = (0..4).map(|i| ((code >> i) & 1) as u8).collect();
            let r2: Vec<u8> = (0..4).map(|i| ((code >> (i + 4)) & 1) as u8).collect();
            let a: Decision<f64> = detect_noiseless(&r1, &r2, &uniform(), 8, &cfg).unwrap();
            let b: Decision<f64> = detect_noisy(&r1, &r2, &stats, 8, &cfg).unwrap();
            assert_eq!(a.t_hat, b.t_hat, "{r1:?} {r2:?}");
            for (x, y) in a.scores.unwrap().hypotheses().zip(b.scores.unwrap().hypotheses()) {
                assert!(x.1 == y.1 || (x.1 - y.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uninformative_channel_never_detects() {
        let stats = bsc(0.5);
        let cfg = DetectorConfig::default();
        assert_eq!(detect_noisy(&[0, 1, 1, 0], &[0, 1, 1, 0], &stats, 100, &cfg).unwrap().t_hat, 0);
    }

    #[test]
    fn mdo_examples() {
        let m = uniform();
        let v = min_detectable_overlap(MdoSetting::Noiseless(&m), 1009, 5, None).unwrap();
        assert_eq!(v, Mdo::Value(5.0));
        assert!(min_detectable_overlap(MdoSetting::Noiseless(&m), 20, 12, None).is_err());
        let v = min_detectable_overlap(MdoSetting::Noiseless(&m), 1000 + 23, 12, None).unwrap();
        assert_eq!(v, Mdo::Value(9.0));
        let n = (1u64 << 20) + 199;
        let v = min_detectable_overlap(MdoSetting::Noisy { lambda_max: 2.0f64 }, n, 100, None).unwrap();
        assert!((v.value().unwrap() - 20.0).abs() < 1e-9);
        let v = min_detectable_overlap(MdoSetting::Noisy { lambda_max: 1.64f64 }, n, 100, None).unwrap();
        assert!((v.value().unwrap() - 28.02).abs() < 0.01);
        let v = min_detectable_overlap::<f64>(MdoSetting::Noisy { lambda_max: 1.0 }, n, 100, None).unwrap();
        assert_eq!(v, Mdo::Infinite);
    }

    #[test]
    fn markov_exact_score_examples() {
        let k = MarkovKernel::symmetric(2, 0.1f64).unwrap();
        let model = SourceModel::markov(k.clone());
        let (r1, r2) = ([1u8, 0, 0, 1], [0u8, 1, 1, 0]);
        let s = markov_exact_score(&r1, &r2, &k, 2).unwrap();
        let oracle = model.ln_prob(&r2[2..], Some(&r2[..2])).unwrap();
        assert!((s - oracle).abs() < 1e-12);
        assert_eq!(markov_exact_score(&r1, &r2, &k, 3).unwrap(), f64::NEG_INFINITY);
        let iid = MarkovKernel::new(vec![vec![0.3f64, 0.7], vec![0.3, 0.7]]).unwrap();
        let mem = SourceModel::memoryless(Pmf::new(vec![0.3f64, 0.7]).unwrap());
        let (a, b) = ([0u8, 1, 1, 0, 1], [1u8, 0, 1, 1, 0]);
        let full = detect_noiseless(&a, &b, &mem, 40, &DetectorConfig::default()).unwrap().scores.unwrap();
        let c = mem.ln_prob(&b, None).unwrap();
        for t in 1..=5 {
            let exact = markov_exact_score(&a, &b, &iid, t).unwrap();
            let g = full.score(t as i64);
            if g == f64::NEG_INFINITY {
                assert_eq!(exact, g);
            } else {
                assert!((exact - (g + c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn overlap_counts_match_naive() {
        let a: Vec<u64> = vec![0xDEAD_BEEF_0123_4567, 0x0F0F_F0F0_1234_5678, 0b1011, 0, 0];
        let b: Vec<u64> = vec![0xFFFF_0000_FFFF_0000, 0x1357_9BDF_2468_ACE0, 0b1111, 0, 0];
        let bit = |v: &[u64], i: usize| (v[i / 64] >> (i % 64)) & 1;
        for shift in 0..130 {
            for t in 1..=(132 - shift) {
                let naive: u64 = (0..t).map(|i| bit(&a, shift + i) & bit(&b, i)).sum();
                assert_eq!(masked_overlap_count(&a, &b, shift, t) as u64, naive, "shift {shift} t {t}");
            }
        }
    }
}
