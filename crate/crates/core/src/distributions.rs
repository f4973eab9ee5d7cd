//! Log-space negative-binomial and binomial primitives with real-valued shape,
//! plus exact samplers for both.
//!
//! The negative binomial follows the "success probability" parameterization
//! `f(x) = C(x + r - 1, x) q^x (1 - q)^r`, so its mean is `r q / (1 - q)`.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Prob(f64);

impl Prob {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Prob(value))
        } else {
            Err(Error::domain(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Prob {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Prob::new(value)
    }
}

/// Roundoff allowed above zero before a log-probability is rejected.
const LOG_PROB_SLACK: f64 = 1e-12;

/// The natural log of a probability, in `[-inf, 0]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb(f64);

impl LogProb {
    /// Values in `(0, 1e-12]` are roundoff and get clamped to zero.
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value > LOG_PROB_SLACK {
            return Err(Error::domain(format!("log-probability {value} is not <= 0")));
        }
        Ok(LogProb(value.min(0.0)))
    }

    pub(crate) fn clamped(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        LogProb(value.min(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The probability itself.
    pub fn prob(self) -> f64 {
        self.0.exp()
    }
}

const LN_FACTORIAL_TABLE: usize = 4096;

/// `ln(n!)`, tabulated for small `n`.
pub fn ln_factorial(n: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        (0..LN_FACTORIAL_TABLE)
            .map(|k| if k < 2 { 0.0 } else { ln_gamma(k as f64 + 1.0) })
            .collect()
    });
    match table.get(n as usize) {
        Some(v) => *v,
        None => ln_gamma(n as f64 + 1.0),
    }
}

/// `k * ln(p)` with the convention `0 * ln 0 = 0`.
#[inline]
pub(crate) fn xlny(k: f64, ln_p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * ln_p
    }
}

/// Generalized `ln C(a, k) = lnΓ(a+1) - lnΓ(k+1) - lnΓ(a-k+1)` for real `a`.
pub fn log_binom_coeff(a: f64, k: u64) -> Result<f64> {
    let rest = a - k as f64;
    if !(rest > -1.0) || !a.is_finite() {
        return Err(Error::domain(format!(
            "log_binom_coeff needs a - k > -1, got a = {a}, k = {k}"
        )));
    }
    Ok(ln_gamma(a + 1.0) - ln_factorial(k) - ln_gamma(rest + 1.0))
}

fn check_nb(r: f64, q: Prob) -> Result<()> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("r must be positive, got {r}")));
    }
    if q.value() >= 1.0 {
        return Err(Error::domain("q must lie in [0,1)"));
    }
    Ok(())
}

/// Unchecked NB log-pmf given `ln q` and `ln(1 - q)`.
#[inline]
pub(crate) fn nb_ln_pmf_raw(x: u64, r: f64, ln_q: f64, ln_1mq: f64) -> f64 {
    let xf = x as f64;
    ln_gamma(xf + r) - ln_gamma(r) - ln_factorial(x) + xlny(xf, ln_q) + r * ln_1mq
}

/// Log-pmf of `NB(r, q)` at `x`.
pub fn nb_log_pmf(x: u64, r: f64, q: Prob) -> Result<LogProb> {
    check_nb(r, q)?;
    let q = q.value();
    Ok(LogProb::clamped(nb_ln_pmf_raw(x, r, q.ln(), (-q).ln_1p())))
}

/// Log-pmf of `Bin(n, theta)` at `y`.
pub fn binom_log_pmf(y: u64, n: u64, theta: Prob) -> Result<LogProb> {
    if y > n {
        return Err(Error::domain(format!("binomial outcome {y} exceeds trials {n}")));
    }
    let th = theta.value();
    let lp = ln_factorial(n) - ln_factorial(y) - ln_factorial(n - y)
        + xlny(y as f64, th.ln())
        + xlny((n - y) as f64, (-th).ln_1p());
    Ok(LogProb::clamped(lp))
}

/// Streaming `log Σ exp(v)` accumulator that rescales as the running maximum grows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub(crate) fn new() -> Self {
        LogSumExp { max: f64::NEG_INFINITY, sum: 0.0 }
    }

    #[inline]
    pub(crate) fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Stable `log Σ exp(v_i)`. All-`-inf` input yields `-inf`.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if max.is_infinite() || max.is_nan() {
        return Ok(max);
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + s.ln())
}

/// Draws from `NB(r, q)` through the gamma–Poisson mixture, exact for real `r`.
pub fn nb_sample<R: Rng + ?Sized>(rng: &mut R, r: f64, q: Prob) -> Result<u64> {
    check_nb(r, q)?;
    Ok(nb_sample_raw(rng, r, q.value()))
}

pub(crate) fn nb_sample_raw<R: Rng + ?Sized>(rng: &mut R, r: f64, q: f64) -> u64 {
    if q <= 0.0 {
        return 0;
    }
    let scale = q / (1.0 - q);
    let rate = Gamma::new(r, scale)
        .expect("shape and scale validated")
        .sample(rng);
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate)
        .expect("positive finite Poisson mean")
        .sample(rng) as u64
}

/// Above this many trials the inverse-CDF start value `(1-θ)^n` can underflow,
/// so trials are summed individually instead.
const BINOM_INVERSION_MAX_N: u64 = 1000;

/// Draws from `Bin(n, theta)` by inverse CDF.
pub fn binom_sample<R: Rng + ?Sized>(rng: &mut R, n: u64, theta: Prob) -> u64 {
    binom_sample_raw(rng, n, theta.value())
}

pub(crate) fn binom_sample_raw<R: Rng + ?Sized>(rng: &mut R, n: u64, theta: f64) -> u64 {
    if n == 0 || theta <= 0.0 {
        return 0;
    }
    if theta >= 1.0 {
        return n;
    }
    if theta > 0.5 {
        return n - binom_sample_raw(rng, n, 1.0 - theta);
    }
    if n > BINOM_INVERSION_MAX_N {
        return (0..n).filter(|_| rng.random::<f64>() < theta).count() as u64;
    }
    let odds = theta / (1.0 - theta);
    let u: f64 = rng.random();
    let mut pk = (n as f64 * (-theta).ln_1p()).exp();
    let mut cdf = pk;
    let mut k = 0;
    while u > cdf && k < n {
        pk *= (n - k) as f64 / (k + 1) as f64 * odds;
        k += 1;
        cdf += pk;
    }
    k
}
