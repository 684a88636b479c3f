//! First-order Markov kernels: validation, stationary law, matrix powers and
//! the maximum mean-weight cycle used for the minus-infinity Rényi rate.

use rand::{Rng, RngCore};

use super::pmf::{DiscreteSampler, Pmf};
use crate::error::{Error, Result};
use crate::num::Real;

/// Largest supported alphabet for Markov sources.
pub const MAX_MARKOV_ALPHABET: usize = 8;

/// Row-stochastic transition matrix `K(x, x')` of an irreducible aperiodic chain.
#[derive(Clone, Debug)]
pub struct MarkovKernel<R> {
    rows: Vec<Pmf<R>>,
    stationary: Pmf<R>,
    stationary_sampler: DiscreteSampler,
    row_samplers: Vec<DiscreteSampler>,
    /// `K^(2^j)` for `j = 0..64`, row-major, used to jump over long gaps.
    pow2: Vec<Vec<f64>>,
}

impl<R: Real> MarkovKernel<R> {
    pub fn new(rows: Vec<Vec<R>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 || k > MAX_MARKOV_ALPHABET {
            return Err(Error::ModelInvalid(format!(
                "Markov alphabet size {k} outside 1..={MAX_MARKOV_ALPHABET}"
            )));
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::ModelInvalid("kernel must be square".into()));
        }
        let rows = rows.into_iter().map(Pmf::new).collect::<Result<Vec<_>>>()?;
        check_irreducible_aperiodic(&rows)?;
        let stationary = solve_stationary(&rows)?;

        let flat: Vec<f64> = rows.iter().flat_map(|r| r.to_f64()).collect();
        let mut pow2 = Vec::with_capacity(64);
        pow2.push(flat);
        for j in 1..64 {
            let prev = &pow2[j - 1];
            pow2.push(mat_mul(prev, prev, k));
        }
        Ok(Self {
            stationary_sampler: DiscreteSampler::new(&stationary.to_f64()),
            row_samplers: rows.iter().map(|r| DiscreteSampler::new(&r.to_f64())).collect(),
            rows,
            stationary,
            pow2,
        })
    }

    /// Symmetric kernel: `1 - (k-1)ε` on the diagonal, `ε` elsewhere.
    pub fn symmetric(k: usize, eps: R) -> Result<Self> {
        let stay = R::one() - R::of_usize(k - 1) * eps;
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { stay } else { eps }).collect())
            .collect();
        Self::new(rows)
    }

    #[inline]
    pub fn alphabet_size(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn rows(&self) -> &[Pmf<R>] {
        &self.rows
    }

    #[inline]
    pub fn entry(&self, from: usize, to: usize) -> R {
        self.rows[from].prob(to)
    }

    /// Cached stationary distribution `π` with `πK = π`.
    #[inline]
    pub fn stationary(&self) -> &Pmf<R> {
        &self.stationary
    }

    /// `K^s` as a dense row-major matrix.
    pub fn power(&self, s: usize) -> Vec<R> {
        let k = self.alphabet_size();
        let mut result: Vec<R> = (0..k * k)
            .map(|i| if i / k == i % k { R::one() } else { R::zero() })
            .collect();
        let mut base: Vec<R> = self.rows.iter().flat_map(|r| r.probs().to_vec()).collect();
        let mut e = s;
        while e > 0 {
            if e & 1 == 1 {
                result = mat_mul(&result, &base, k);
            }
            base = mat_mul(&base, &base, k);
            e >>= 1;
        }
        result
    }

    /// `max_x ||K^s(x,·) - π||_TV`.
    pub fn max_tv_to_stationary(&self, s: usize) -> R {
        let k = self.alphabet_size();
        let ks = self.power(s);
        (0..k)
            .map(|x| {
                let tv: R = (0..k)
                    .map(|y| (ks[x * k + y] - self.stationary.prob(y)).abs())
                    .sum();
                tv / R::of(2.0)
            })
            .fold(R::zero(), R::max)
    }

    /// Distribution of the state `steps` transitions after `from`, in f64.
    pub(crate) fn row_after(&self, from: u8, steps: u64) -> Vec<f64> {
        let k = self.alphabet_size();
        let mut v = vec![0.0; k];
        v[from as usize] = 1.0;
        let mut e = steps;
        let mut j = 0;
        while e > 0 {
            if e & 1 == 1 {
                let m = &self.pow2[j];
                let mut next = vec![0.0; k];
                for (x, &vx) in v.iter().enumerate() {
                    if vx != 0.0 {
                        for y in 0..k {
                            next[y] += vx * m[x * k + y];
                        }
                    }
                }
                v = next;
            }
            e >>= 1;
            j += 1;
        }
        v
    }

    #[inline]
    pub(crate) fn sample_initial<G: RngCore + ?Sized>(&self, rng: &mut G) -> u8 {
        self.stationary_sampler.sample(rng)
    }

    #[inline]
    pub(crate) fn sample_next<G: RngCore + ?Sized>(&self, from: u8, rng: &mut G) -> u8 {
        self.row_samplers[from as usize].sample(rng)
    }

    /// Samples the state `steps >= 1` transitions after `from`.
    pub(crate) fn sample_after<G: RngCore + ?Sized>(&self, from: u8, steps: u64, rng: &mut G) -> u8 {
        if steps == 1 {
            return self.sample_next(from, rng);
        }
        let v = self.row_after(from, steps);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = from;
        for (y, &p) in v.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = y as u8;
                if u < acc {
                    return y as u8;
                }
            }
        }
        last
    }

    /// Stationary entropy rate `Σ_x π(x) H(K(x,·))` in nats.
    pub fn entropy_rate_nats(&self) -> R {
        self.rows
            .iter()
            .enumerate()
            .map(|(x, row)| self.stationary.prob(x) * row.entropy_nats())
            .sum()
    }

    /// `ln Σ_{x^m} P(x^m)^α` by the transfer matrix of the Hadamard power `K^{∘α}`.
    pub fn block_power_sum_ln(&self, order: R, m: usize) -> R {
        assert!(m >= 1);
        let k = self.alphabet_size();
        let pow = |p: R| if p > R::zero() { p.powf(order) } else { R::zero() };
        let mut v: Vec<R> = self.stationary.probs().iter().map(|&p| pow(p)).collect();
        let mut log_scale = R::zero();
        for _ in 1..m {
            let mut next = vec![R::zero(); k];
            for (x, &vx) in v.iter().enumerate() {
                for (y, nx) in next.iter_mut().enumerate() {
                    *nx = *nx + vx * pow(self.entry(x, y));
                }
            }
            let s: R = next.iter().copied().sum();
            log_scale = log_scale + s.ln();
            v = next.into_iter().map(|x| x / s).collect();
        }
        log_scale + v.into_iter().sum::<R>().ln()
    }

    /// Maximum mean edge weight over cycles of the support digraph with
    /// weights `-ln K(x,x')`, by Karp's algorithm. Nats.
    pub fn max_mean_cycle_neg_log(&self) -> Result<R> {
        let k = self.alphabet_size();
        let w = |u: usize, v: usize| {
            let p = self.entry(u, v);
            if p > R::zero() {
                Some(-p.ln())
            } else {
                None
            }
        };
        // d[j][v]: max weight of a j-edge walk ending at v from a virtual source.
        let ninf = R::neg_infinity();
        let mut d = vec![vec![ninf; k]; k + 1];
        d[0].iter_mut().for_each(|x| *x = R::zero());
        for j in 1..=k {
            for u in 0..k {
                if d[j - 1][u] == ninf {
                    continue;
                }
                for v in 0..k {
                    if let Some(wuv) = w(u, v) {
                        let cand = d[j - 1][u] + wuv;
                        if cand > d[j][v] {
                            d[j][v] = cand;
                        }
                    }
                }
            }
        }
        let mut best = ninf;
        for v in 0..k {
            if d[k][v] == ninf {
                continue;
            }
            let mut worst = R::infinity();
            for j in 0..k {
                if d[j][v] == ninf {
                    continue;
                }
                let mean = (d[k][v] - d[j][v]) / R::of_usize(k - j);
                worst = worst.min(mean);
            }
            best = best.max(worst);
        }
        if best == ninf {
            return Err(Error::ModelInvalid("support digraph has no cycle".into()));
        }
        Ok(best)
    }

    /// `max_{x^t ∈ supp} -ln P(x^t)` under the stationary chain, for `t = 1..=t_max`.
    pub fn max_block_neg_log_prob(&self, t_max: usize) -> Vec<R> {
        let k = self.alphabet_size();
        let ninf = R::neg_infinity();
        let mut v: Vec<R> = (0..k)
            .map(|x| {
                let p = self.stationary.prob(x);
                if p > R::zero() {
                    -p.ln()
                } else {
                    ninf
                }
            })
            .collect();
        let mut out = Vec::with_capacity(t_max);
        for t in 1..=t_max {
            if t > 1 {
                let mut next = vec![ninf; k];
                for x in 0..k {
                    if v[x] == ninf {
                        continue;
                    }
                    for (y, ny) in next.iter_mut().enumerate() {
                        let p = self.entry(x, y);
                        if p > R::zero() {
                            *ny = ny.max(v[x] - p.ln());
                        }
                    }
                }
                v = next;
            }
            out.push(v.iter().copied().fold(ninf, R::max));
        }
        out
    }
}

pub(crate) fn mat_mul<R: Copy + std::ops::Mul<Output = R> + std::ops::Add<Output = R> + Default>(
    a: &[R],
    b: &[R],
    k: usize,
) -> Vec<R> {
    let mut out = vec![R::default(); k * k];
    for i in 0..k {
        for l in 0..k {
            let a_il = a[i * k + l];
            for j in 0..k {
                out[i * k + j] = out[i * k + j] + a_il * b[l * k + j];
            }
        }
    }
    out
}

fn check_irreducible_aperiodic<R: Real>(rows: &[Pmf<R>]) -> Result<()> {
    let k = rows.len();
    let edge = |u: usize, v: usize| rows[u].prob(v) > R::zero();

    // Forward BFS levels from 0; reverse reachability for strong connectivity.
    let mut level = vec![usize::MAX; k];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..k {
            if edge(u, v) && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut back = vec![false; k];
    back[0] = true;
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        for u in 0..k {
            if edge(u, v) && !back[u] {
                back[u] = true;
                stack.push(u);
            }
        }
    }
    if level.iter().any(|&l| l == usize::MAX) || back.iter().any(|b| !b) {
        return Err(Error::ModelInvalid("Markov kernel is reducible".into()));
    }

    // Period = gcd over edges of (level[u] + 1 - level[v]).
    let mut period = 0usize;
    for u in 0..k {
        for v in 0..k {
            if edge(u, v) {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    if period != 1 {
        return Err(Error::ModelInvalid(format!("Markov kernel is periodic (period {period})")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `π(K - I) = 0, Σπ = 1` by Gaussian elimination, then polishes with power steps.
fn solve_stationary<R: Real>(rows: &[Pmf<R>]) -> Result<Pmf<R>> {
    let k = rows.len();
    // Transposed system A π^T = b, with the last equation replaced by normalization.
    let mut a = vec![vec![R::zero(); k + 1]; k];
    for (i, eq) in a.iter_mut().enumerate() {
        for (j, cell) in eq.iter_mut().take(k).enumerate() {
            *cell = rows[j].prob(i) - if i == j { R::one() } else { R::zero() };
        }
    }
    for j in 0..k {
        a[k - 1][j] = R::one();
    }
    a[k - 1][k] = R::one();

    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < R::of(1e-300).max(R::min_positive_value()) {
            return Err(Error::ModelInvalid("singular stationary system".into()));
        }
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != R::zero() {
                    for c in col..=k {
                        let v = a[col][c];
                        a[r][c] = a[r][c] - f * v;
                    }
                }
            }
        }
    }
    let mut pi: Vec<R> = (0..k).map(|i| (a[i][k] / a[i][i]).max(R::zero())).collect();

    for _ in 0..1000 {
        let mut next = vec![R::zero(); k];
        for (x, &px) in pi.iter().enumerate() {
            for (y, ny) in next.iter_mut().enumerate() {
                *ny = *ny + px * rows[x].prob(y);
            }
        }
        let s: R = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v = *v / s);
        let delta = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (*a - *b).abs())
            .fold(R::zero(), R::max);
        pi = next;
        if delta <= R::stationary_tol() * R::of(1e-2) {
            break;
        }
    }
    let s: R = pi.iter().copied().sum();
    pi.iter_mut().for_each(|v| *v = *v / s);
    Pmf::new(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_balance_equations() {
        let k = MarkovKernel::new(vec![vec![0.9f64, 0.1], vec![0.2, 0.8]]).unwrap();
        let pi = k.stationary();
        assert!((pi.prob(0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.prob(1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn reducible_and_periodic_kernels_are_rejected() {
        let identity = MarkovKernel::new(vec![vec![1.0f64, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(identity, Err(Error::ModelInvalid(_))));
        let flip = MarkovKernel::new(vec![vec![0.0f64, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(flip, Err(Error::ModelInvalid(_))));
        let absorbing = MarkovKernel::new(vec![vec![0.5f64, 0.5], vec![0.0, 1.0]]);
        assert!(absorbing.is_err());
    }

    #[test]
    fn symmetric_kernels_have_uniform_stationary_law() {
        for k in 2..=5 {
            for eps in [0.01, 0.1, 0.2] {
                if eps * (k as f64 - 1.0) >= 1.0 {
                    continue;
                }
                let m = MarkovKernel::symmetric(k, eps).unwrap();
                for x in 0..k {
                    assert!((m.stationary().prob(x) - 1.0 / k as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn karp_on_two_state_chain() {
        // Cycles: self-loops (-ln 0.9, -ln 0.8) and 0->1->0 with mean (-ln 0.1 - ln 0.2)/2.
        let m = MarkovKernel::new(vec![vec![0.9f64, 0.1], vec![0.2, 0.8]]).unwrap();
        let expect = (-(0.1f64).ln() - (0.2f64).ln()) / 2.0;
        assert!((m.max_mean_cycle_neg_log().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn pow2_jumps_match_dense_powers() {
        let m = MarkovKernel::new(vec![vec![0.7f64, 0.2, 0.1], vec![0.3, 0.3, 0.4], vec![0.5, 0.0, 0.5]]).unwrap();
        for s in [1usize, 2, 3, 7, 100] {
            let dense = m.power(s);
            for from in 0..3u8 {
                let row = m.row_after(from, s as u64);
                for y in 0..3 {
                    assert!((row[y] - dense[from as usize * 3 + y]).abs() < 1e-12);
                }
            }
        }
    }
}
