//! Scalar abstraction shared by the analytic modules.
//!
//! Everything that computes probabilities, entropies or exponents is generic
//! over [`Real`], implemented for `f32` and `f64`. Internals work in natural
//! logarithms; conversion to base-|X| units happens at the API boundary.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Tolerance for "sums to one" checks on probability vectors.
    fn prob_tol() -> Self;
    /// Tolerance for the stationary-distribution fixed point.
    fn stationary_tol() -> Self;
    /// Log-domain comparison slack before the tie rule engages.
    fn tie_eps() -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f64 {
    fn prob_tol() -> Self {
        1e-12
    }
    fn stationary_tol() -> Self {
        1e-12
    }
    fn tie_eps() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn prob_tol() -> Self {
        1e-5
    }
    fn stationary_tol() -> Self {
        1e-6
    }
    fn tie_eps() -> Self {
        1e-4
    }
}

/// `x * ln(x)` with the `0 ln 0 = 0` convention.
#[inline]
pub fn xlogx<R: Real>(x: R) -> R {
    if x > R::zero() {
        x * x.ln()
    } else {
        R::zero()
    }
}

/// Converts a natural-log quantity to base `k` units.
#[inline]
pub fn to_base<R: Real>(nats: R, k: usize) -> R {
    nats / R::of_usize(k).ln()
}

/// `log_k(x)` computed through natural logs.
#[inline]
pub fn log_base<R: Real>(x: R, k: usize) -> R {
    x.ln() / R::of_usize(k).ln()
}

/// Numerically stable `ln(sum(exp(v)))`. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<R: Real>(values: &[R]) -> R {
    let max = values
        .iter()
        .copied()
        .fold(R::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == R::neg_infinity() {
        return max;
    }
    let s: R = values.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<R> {
    sum: R,
    comp: R,
}

impl<R: Real> CompensatedSum<R> {
    pub fn new() -> Self {
        Self {
            sum: R::zero(),
            comp: R::zero(),
        }
    }

    pub fn add(&mut self, x: R) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp = self.comp + ((self.sum - t) + x);
        } else {
            self.comp = self.comp + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> R {
        self.sum + self.comp
    }
}

/// `ln Γ(x + 1) = ln x!` via Lanczos (g = 7, n = 9), accurate to ~1e-15 relative.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
///
/// Endpoints are evaluated as well, so a maximum sitting on the boundary is
/// returned exactly. Returns `(argmax, max)`.
pub fn golden_section_max<R: Real, F: Fn(R) -> R>(f: F, lo: R, hi: R, tol: R, max_iter: usize) -> (R, R) {
    let inv_phi = (R::of(5.0).sqrt() - R::one()) / R::of(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / R::of(2.0);
    let mut best = (mid, f(mid));
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}
