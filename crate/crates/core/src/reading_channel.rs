//! Memoryless reading channels and the statistics of a pair of reads of the same letter.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::num::{golden_section_max, to_base, Real};
use crate::source_models::{DiscreteSampler, Pmf, Symbol};

const NU_TOL: f64 = 1e-9;
const NU_MAX_ITER: usize = 200;

/// Row-stochastic kernel `P_{Y|X}`.
#[derive(Clone, Debug)]
pub struct Channel<R> {
    rows: Vec<Pmf<R>>,
    samplers: Vec<DiscreteSampler>,
    identity: bool,
    errors: Option<ErrorSkipper>,
}

/// Sampler for channels that keep every letter with the same probability `q`.
///
/// Error positions are a Bernoulli(1 - q) process, drawn as geometric gaps;
/// each error letter then comes from the row restricted to the other letters.
#[derive(Clone, Debug)]
struct ErrorSkipper {
    ln_keep: f64,
    substitutes: Vec<DiscreteSampler>,
}

impl ErrorSkipper {
    fn new(rows: &[Vec<f64>]) -> Option<Self> {
        let k = rows.len();
        if k < 2 || rows[0].len() != k {
            return None;
        }
        let keep = rows[0][0];
        if !(0.5..1.0).contains(&keep) || rows.iter().enumerate().any(|(x, r)| r[x] != keep) {
            return None;
        }
        let substitutes = rows
            .iter()
            .enumerate()
            .map(|(x, r)| {
                let mut w = r.clone();
                w[x] = 0.0;
                DiscreteSampler::new(&w)
            })
            .collect();
        Some(Self {
            ln_keep: keep.ln(),
            substitutes,
        })
    }

    /// Number of kept letters before the next error.
    #[inline]
    fn gap<G: RngCore + ?Sized>(&self, rng: &mut G) -> usize {
        let u = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let g = u.ln() / self.ln_keep;
        if g >= usize::MAX as f64 {
            usize::MAX
        } else {
            g as usize
        }
    }

    fn apply<G: RngCore + ?Sized>(&self, x: &[Symbol], out: &mut Vec<Symbol>, rng: &mut G) {
        out.extend_from_slice(x);
        let mut pos = self.gap(rng);
        while pos < out.len() {
            out[pos] = self.substitutes[x[pos] as usize].sample(rng);
            pos = pos.saturating_add(1).saturating_add(self.gap(rng));
        }
    }
}

impl<R: Real> Channel<R> {
    pub fn new(rows: Vec<Vec<R>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::ModelInvalid("channel needs at least one input row".into()));
        }
        let out = rows[0].len();
        if out == 0 || out > 256 {
            return Err(Error::ModelInvalid(format!("output alphabet size {out} unsupported")));
        }
        if rows.iter().any(|r| r.len() != out) {
            return Err(Error::ModelInvalid("channel rows differ in length".into()));
        }
        let rows = rows.into_iter().map(Pmf::new).collect::<Result<Vec<_>>>()?;
        let identity = rows.len() == out && rows.iter().enumerate().all(|(x, r)| r.prob(x) == R::one());
        let plain: Vec<Vec<f64>> = rows.iter().map(|r| r.to_f64()).collect();
        let samplers = plain.iter().map(|r| DiscreteSampler::new(r)).collect();
        let errors = ErrorSkipper::new(&plain);
        Ok(Self {
            rows,
            samplers,
            identity,
            errors,
        })
    }

    /// Noiseless channel on `k` letters.
    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|x| (0..k).map(|y| if x == y { R::one() } else { R::zero() }).collect())
            .collect();
        Self::new(rows).expect("identity rows are valid")
    }

    /// Binary symmetric channel with crossover `eps`.
    pub fn bsc(eps: R) -> Result<Self> {
        if !(eps >= R::zero() && eps <= R::one()) {
            return invalid(format!("crossover {eps} outside [0, 1]"));
        }
        let one = R::one();
        Self::new(vec![vec![one - eps, eps], vec![eps, one - eps]])
    }

    pub fn input_size(&self) -> usize {
        self.rows.len()
    }

    pub fn output_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Pmf<R>] {
        &self.rows
    }

    /// True when every letter is read without error.
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// Passes each symbol through the channel independently.
    pub fn apply<G: RngCore + ?Sized>(&self, x: &[Symbol], rng: &mut G) -> Result<Vec<Symbol>> {
        if let Some(&s) = x.iter().find(|&&s| s as usize >= self.input_size()) {
            return invalid(format!("symbol {s} outside channel input alphabet {}", self.input_size()));
        }
        let mut out = Vec::with_capacity(x.len());
        self.apply_into(x, &mut out, rng);
        Ok(out)
    }

    pub(crate) fn apply_into<G: RngCore + ?Sized>(&self, x: &[Symbol], out: &mut Vec<Symbol>, rng: &mut G) {
        out.clear();
        if self.identity {
            out.extend_from_slice(x);
        } else if let Some(e) = &self.errors {
            e.apply(x, out, rng);
        } else {
            out.extend(x.iter().map(|&s| self.samplers[s as usize].sample(rng)));
        }
    }

    pub fn to_spec(&self) -> ChannelSpec {
        ChannelSpec {
            rows: self.rows.iter().map(|r| r.to_f64()).collect(),
        }
    }

    pub fn from_spec(spec: &ChannelSpec) -> Result<Self> {
        Self::new(spec.rows.iter().map(|r| r.iter().map(|&p| R::of(p)).collect()).collect())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(text)?)
    }
}

/// Free function form of [`Channel::apply`].
pub fn apply_channel<R: Real, G: RngCore + ?Sized>(channel: &Channel<R>, x: &[Symbol], rng: &mut G) -> Result<Vec<Symbol>> {
    channel.apply(x, rng)
}

/// JSON form `{"rows": [[...], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub rows: Vec<Vec<f64>>,
}

/// Likelihood ratio entry; pairs outside the support of `P_{YỸ}` are excluded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lambda<R> {
    Value(R),
    Excluded,
}

impl<R: Real> Lambda<R> {
    pub fn ln(self) -> R {
        match self {
            Lambda::Value(v) => v.ln(),
            Lambda::Excluded => R::neg_infinity(),
        }
    }
}

/// Joint statistics of two independent reads of the same letter.
#[derive(Clone, Debug)]
pub struct PairStats<R> {
    base: usize,
    p_y: Pmf<R>,
    p_yy: Vec<R>,
    lambda: Vec<Lambda<R>>,
    lambda_min: R,
    lambda_max: R,
    mutual_info: R,
    sigma2: R,
    m3: R,
}

/// Computes `P_Y`, `P_{YỸ}`, the `λ` table and the moments of `ln λ` under `P_{YỸ}`.
pub fn pair_statistics<R: Real>(source: &Pmf<R>, channel: &Channel<R>) -> Result<PairStats<R>> {
    if source.len() != channel.input_size() {
        return invalid(format!(
            "source alphabet {} does not match channel input {}",
            source.len(),
            channel.input_size()
        ));
    }
    let m = channel.output_size();
    let mut p_yy = vec![R::zero(); m * m];
    for (x, row) in channel.rows().iter().enumerate() {
        let px = source.prob(x);
        if px == R::zero() {
            continue;
        }
        for y in 0..m {
            let a = px * row.prob(y);
            if a == R::zero() {
                continue;
            }
            for z in 0..m {
                p_yy[y * m + z] = p_yy[y * m + z] + a * row.prob(z);
            }
        }
    }
    let p_y: Vec<R> = (0..m).map(|y| (0..m).map(|z| p_yy[y * m + z]).sum()).collect();
    let mut lambda = vec![Lambda::Excluded; m * m];
    let (mut lo, mut hi) = (R::infinity(), R::neg_infinity());
    let mut mi = R::zero();
    for y in 0..m {
        for z in 0..m {
            let j = p_yy[y * m + z];
            if j > R::zero() {
                let v = j / (p_y[y] * p_y[z]);
                lambda[y * m + z] = Lambda::Value(v);
                lo = lo.min(v);
                hi = hi.max(v);
                mi = mi + j * v.ln();
            }
        }
    }
    let mut sigma2 = R::zero();
    let mut m3 = R::zero();
    for (j, l) in p_yy.iter().zip(&lambda) {
        if let Lambda::Value(v) = l {
            let d = (v.ln() - mi).abs();
            sigma2 = sigma2 + *j * d * d;
            m3 = m3 + *j * d * d * d;
        }
    }
    let p_y = Pmf::new(p_y)?;
    Ok(PairStats {
        base: channel.input_size().max(2),
        p_y,
        p_yy,
        lambda,
        lambda_min: lo,
        lambda_max: hi.max(R::one()),
        mutual_info: mi.max(R::zero()),
        sigma2,
        m3,
    })
}

impl<R: Real> PairStats<R> {
    /// Size of the output alphabet.
    pub fn output_size(&self) -> usize {
        self.p_y.len()
    }

    /// Logarithm base used for reported values (the source alphabet size).
    pub fn base(&self) -> usize {
        self.base
    }

    pub fn p_y(&self) -> &Pmf<R> {
        &self.p_y
    }

    pub fn p_yy(&self, y: usize, z: usize) -> R {
        self.p_yy[y * self.output_size() + z]
    }

    /// Row-major joint table.
    pub fn p_yy_table(&self) -> &[R] {
        &self.p_yy
    }

    /// `P_Y ⊗ P_Y` as a row-major table.
    pub fn product_table(&self) -> Vec<R> {
        let p = self.p_y.probs();
        p.iter().flat_map(|&a| p.iter().map(move |&b| a * b)).collect()
    }

    pub fn lambda(&self, y: usize, z: usize) -> Lambda<R> {
        self.lambda[y * self.output_size() + z]
    }

    pub fn lambda_table(&self) -> &[Lambda<R>] {
        &self.lambda
    }

    /// `ln λ` table with `-∞` on excluded pairs.
    pub fn ln_lambda_table(&self) -> Vec<R> {
        self.lambda.iter().map(|l| l.ln()).collect()
    }

    pub fn lambda_min(&self) -> R {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> R {
        self.lambda_max
    }

    pub fn mutual_info_nats(&self) -> R {
        self.mutual_info
    }

    /// `I(Y;Ỹ)` in base-|X| units.
    pub fn mutual_info(&self) -> R {
        to_base(self.mutual_info, self.base)
    }

    /// Variance of `ln λ(Y,Ỹ)` under `P_{YỸ}` (nats squared).
    pub fn sigma2(&self) -> R {
        self.sigma2
    }

    /// `E|ln λ - I|^3` under `P_{YỸ}` (nats cubed).
    pub fn m3(&self) -> R {
        self.m3
    }

    /// `ln Σ_{supp P_{YỸ}} P_{YỸ}^ν (P_Y⊗P_Y)^{1-ν}`.
    pub fn tilted_log_mgf(&self, nu: R) -> R {
        let q = self.product_table();
        let s: R = self
            .p_yy
            .iter()
            .zip(&q)
            .filter(|(p, _)| **p > R::zero())
            .map(|(&p, &q)| p.powf(nu) * q.powf(R::one() - nu))
            .sum();
        s.ln()
    }

    /// `D_ν(P_{YỸ} || P_Y⊗P_Y)` in nats.
    pub fn divergence_nats(&self, nu: R) -> R {
        renyi_divergence(&self.p_yy, &self.product_table(), nu).expect("P_YY is dominated by P_Y x P_Y")
    }

    fn informative(&self) -> Result<()> {
        if self.mutual_info <= R::tie_eps() * R::tie_eps() {
            return Err(Error::ExponentUndefined("detection impossible: I = 0".into()));
        }
        Ok(())
    }
}

/// `D_ν(p || q)` in nats, summing over the support of `p`.
pub fn renyi_divergence<R: Real>(p: &[R], q: &[R], order: R) -> Result<R> {
    if p.len() != q.len() {
        return invalid("pmfs differ in length");
    }
    if p.iter().zip(q).any(|(a, b)| *a > R::zero() && *b <= R::zero()) {
        return Err(Error::DivergenceUndefined("p is not absolutely continuous w.r.t. q".into()));
    }
    let support = p.iter().zip(q).filter(|(a, _)| **a > R::zero());
    if (order - R::one()).abs() <= R::epsilon() {
        return Ok(support.map(|(&a, &b)| a * (a / b).ln()).sum());
    }
    let s: R = support.map(|(&a, &b)| a.powf(order) * b.powf(R::one() - order)).sum();
    Ok(s.ln() / (order - R::one()))
}

/// Large-deviations exponent, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent<R> {
    Finite(R),
    Infinite,
}

impl<R: Real> Exponent<R> {
    pub fn finite(self) -> Option<R> {
        match self {
            Exponent::Finite(v) => Some(v),
            Exponent::Infinite => None,
        }
    }

    /// Upper bound `exp(-scale · E)` on a probability.
    pub fn tail_bound(self, scale: R) -> R {
        match self {
            Exponent::Finite(v) => (-scale * v).exp(),
            Exponent::Infinite => R::zero(),
        }
    }
}

/// Chernoff exponents of the log-likelihood sums, in nats.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChernoffExponents<R> {
    /// `P[Σ ln λ(Y,Ỹ) ≤ 0] ≤ exp(-t E)`.
    pub e_minus_0: Exponent<R>,
    /// `P[Σ ln λ(Y,Ȳ) > 0] ≤ exp(-t E)` for independent reads.
    pub e_plus: Exponent<R>,
    /// `P[Σ ln λ(Y,Ỹ) ≤ ln n_ℓ] ≤ exp(-t E)`.
    pub e_minus_t_of_1: Exponent<R>,
}

/// Computes the three exponents with `ν` restricted to `[0, 1]`.
pub fn chernoff_exponents<R: Real>(stats: &PairStats<R>, n_ell: R, t: usize) -> Result<ChernoffExponents<R>> {
    stats.informative()?;
    if !(n_ell > R::zero()) || t == 0 {
        return invalid("n_ell and t must be positive");
    }
    let tol = R::of(NU_TOL);
    let (_, neg_min_f) = golden_section_max(|nu| -stats.tilted_log_mgf(nu), R::zero(), R::one(), tol, NU_MAX_ITER);
    let all_positive = stats
        .lambda
        .iter()
        .all(|l| !matches!(l, Lambda::Value(v) if *v <= R::one()));
    let e_minus_0 = if all_positive {
        Exponent::Infinite
    } else {
        Exponent::Finite(neg_min_f)
    };
    let rate = n_ell.ln() / R::of_usize(t);
    let (_, e_t) = golden_section_max(
        |nu| (nu - R::one()) * rate - stats.tilted_log_mgf(nu),
        R::zero(),
        R::one(),
        tol,
        NU_MAX_ITER,
    );
    Ok(ChernoffExponents {
        e_minus_0,
        e_plus: Exponent::Finite(neg_min_f),
        e_minus_t_of_1: Exponent::Finite(e_t.max(R::zero())),
    })
}

/// Minimal `θ` with `A(θ) ≥ ε`, in base-|X| units: `min_{ν∈[0,1)} (1-ν+ε) / ((1-ν) D_ν)`.
pub fn theta_star<R: Real>(stats: &PairStats<R>, epsilon: R) -> Result<R> {
    stats.informative()?;
    if !(epsilon > R::zero() && epsilon < R::one()) {
        return invalid("epsilon must lie in (0, 1)");
    }
    let objective = |nu: R| {
        let d = if nu == R::zero() {
            stats.divergence_nats(nu)
        } else {
            stats.tilted_log_mgf(nu) / (nu - R::one())
        };
        if d <= R::zero() {
            return R::infinity();
        }
        (R::one() - nu + epsilon) / ((R::one() - nu) * d)
    };
    // The objective blows up at ν = 1; a coarse grid brackets the minimum before refining.
    let hi = R::one() - R::of(1e-6);
    let grid = 400;
    let mut best = (R::zero(), objective(R::zero()));
    for i in 1..=grid {
        let nu = hi * R::of_usize(i) / R::of_usize(grid);
        let v = objective(nu);
        if v < best.1 {
            best = (nu, v);
        }
    }
    let step = hi / R::of_usize(grid);
    let lo = (best.0 - step).max(R::zero());
    let up = (best.0 + step).min(hi);
    let (_, neg) = golden_section_max(|nu| -objective(nu), lo, up, R::of(NU_TOL), NU_MAX_ITER);
    let nats = best.1.min(-neg);
    Ok(nats * R::of_usize(stats.base).ln())
}

/// Truncated-MGF bound `2 (ln 2/√(2π) + 12 m₃/σ²) (1/σ) e^{-a}` for a single term (nats).
///
/// For a sum of `t` terms divide by `√t`.
pub fn type1_mgf_bound<R: Real>(stats: &PairStats<R>, a: R) -> Result<R> {
    if !(stats.sigma2 > R::zero()) || stats.sigma2 <= R::of(1e-24) {
        return Err(Error::BoundUndefined("variance of ln lambda is zero".into()));
    }
    let sigma = stats.sigma2.sqrt();
    let two = R::of(2.0);
    let c = R::LN_2() / (two * R::PI()).sqrt() + R::of(12.0) * stats.m3 / stats.sigma2;
    Ok(two * c / sigma * (-a).exp())
}

/// Exponent value with both unit conventions, for JSON reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentRecord {
    pub name: String,
    pub infinite: bool,
    pub nats: Option<f64>,
    pub base: usize,
    pub value_base: Option<f64>,
}

impl ExponentRecord {
    pub fn new<R: Real>(name: &str, e: Exponent<R>, base: usize) -> Self {
        let nats = e.finite().map(|v| v.as_f64());
        Self {
            name: name.to_string(),
            infinite: nats.is_none(),
            nats,
            base,
            value_base: nats.map(|v| v / (base as f64).ln()),
        }
    }
}

impl<R: Real> ChernoffExponents<R> {
    pub fn records(&self, base: usize) -> Vec<ExponentRecord> {
        vec![
            ExponentRecord::new("E_minus_0", self.e_minus_0, base),
            ExponentRecord::new("E_plus", self.e_plus, base),
            ExponentRecord::new("E_minus_t_of_1", self.e_minus_t_of_1, base),
        ]
    }
}
