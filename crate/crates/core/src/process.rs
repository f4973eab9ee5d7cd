//! The stationary negative-binomial Markov process.
//!
//! Starting from `X ~ NB(r, q)`, thinning `Y | X ~ Bin(X, θ)` and refilling
//! `X' = Y + NB(r + Y, q(1 - θ))` gives a reversible kernel that leaves
//! `NB(r, q)` invariant. In continuous time the thinning probability decays as
//! `θ_t = (1 - q) / (e^{ct} - q)`, the unique choice that makes the kernels a
//! semigroup. The resulting chain is the linear birth–death–immigration process
//! with rates `λ = cq/(1-q)`, `μ = c/(1-q)`, `ν = cqr/(1-q)`.

use statrs::function::gamma::ln_gamma;

use crate::distributions::{ln_factorial, nb_ln_pmf_raw, xlny, LogProb, LogSumExp, Prob};
use crate::error::{Error, Result};

/// Parameters `(r, q, c)`: NB shape, NB success probability, and decay rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    r: f64,
    q: f64,
    c: f64,
}

impl ModelParams {
    pub fn new(r: f64, q: f64, c: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::domain("r must be positive"));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::domain("q must lie in (0,1)"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain("c must be positive"));
        }
        Ok(ModelParams { r, q, c })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Stationary mean `r q / (1 - q)`.
    pub fn stationary_mean(&self) -> f64 {
        self.r * self.q / (1.0 - self.q)
    }

    /// Same `(r, q)` with the decay rate replaced.
    pub fn with_c(&self, c: f64) -> Result<Self> {
        ModelParams::new(self.r, self.q, c)
    }
}

/// Per-individual birth `lambda`, death `mu` and immigration `nu` rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BDIRates {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
}

/// One row of the transition kernel, truncated at `probs.len() - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub x0: u64,
    pub t: f64,
    pub probs: Vec<f64>,
    /// Probability mass beyond the last entry.
    pub truncation_mass: f64,
}

impl TransitionRow {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `Σ j p(j)` over the stored support.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum()
    }

    /// Most probable value; the first one on ties.
    pub fn mode(&self) -> u64 {
        let mut best = 0;
        for (j, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = j;
            }
        }
        best as u64
    }

    pub fn prob(&self, x1: u64) -> f64 {
        self.probs.get(x1 as usize).copied().unwrap_or(0.0)
    }
}

/// Rates out of state `i` of the infinitesimal generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorRates {
    /// Rate to `i - 1`; zero at `i = 0`.
    pub down: f64,
    /// Rate to `i + 1`.
    pub up: f64,
    /// `-(down + up)`.
    pub diagonal: f64,
}

/// Logs of the quantities the transition mixture is built from.
///
/// `q_tilde = q (1 - θ)` is the success probability of the refill.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    r: f64,
    ln_theta: f64,
    ln_1m_theta: f64,
    ln_qt: f64,
    ln_1m_qt: f64,
}

impl Kernel {
    pub(crate) fn from_theta(r: f64, q: f64, theta: f64) -> Self {
        let ln_1m_theta = (-theta).ln_1p();
        Kernel {
            r,
            ln_theta: theta.ln(),
            ln_1m_theta,
            ln_qt: q.ln() + ln_1m_theta,
            ln_1m_qt: (-(q * (1.0 - theta))).ln_1p(),
        }
    }

    /// Built from `e^{-ct}` directly so neither `e^{ct}` overflows for large
    /// `ct` nor `1 - θ` cancels for small `ct`.
    pub(crate) fn at_time(p: &ModelParams, t: f64) -> Self {
        let ct = p.c * t;
        let decay = (-ct).exp();
        let ln_1mq = (-p.q).ln_1p();
        let ln_denom = (-p.q * decay).ln_1p();
        let ln_1m_theta = if ct == 0.0 {
            f64::NEG_INFINITY
        } else {
            (-(-ct).exp_m1()).ln() - ln_denom
        };
        Kernel {
            r: p.r,
            ln_theta: ln_1mq - ct - ln_denom,
            ln_1m_theta,
            ln_qt: p.q.ln() + ln_1m_theta,
            ln_1m_qt: ln_1mq - ln_denom,
        }
    }

    pub(crate) fn theta(&self) -> f64 {
        self.ln_theta.exp()
    }

    pub(crate) fn q_tilde(&self) -> f64 {
        self.ln_qt.exp()
    }

    pub(crate) fn ln_q_tilde(&self) -> f64 {
        self.ln_qt
    }

    pub(crate) fn ln_1m_q_tilde(&self) -> f64 {
        self.ln_1m_qt
    }

    /// `ln p(x0, x1) = ln Σ_y NB(x1 - y; r + y, q̃) Bin(y; x0, θ)`.
    pub(crate) fn ln_prob(&self, x0: u64, x1: u64) -> f64 {
        let r = self.r;
        // terms shared by every y
        let head = ln_gamma(x1 as f64 + r) + ln_factorial(x0);
        let mut acc = LogSumExp::new();
        for y in 0..=x0.min(x1) {
            let (yf, gap, rest) = (y as f64, (x1 - y) as f64, (x0 - y) as f64);
            let term = head
                - ln_factorial(x1 - y)
                - ln_gamma(r + yf)
                - ln_factorial(y)
                - ln_factorial(x0 - y)
                + xlny(gap, self.ln_qt)
                + (r + yf) * self.ln_1m_qt
                + xlny(yf, self.ln_theta)
                + xlny(rest, self.ln_1m_theta);
            acc.push(term);
        }
        acc.value()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("time must be finite and non-negative, got {t}")))
    }
}

/// `θ_t = (1 - q) / (e^{ct} - q)`: 1 at `t = 0`, decreasing to 0.
pub fn theta(params: &ModelParams, t: f64) -> Result<Prob> {
    check_time(t)?;
    Prob::new(Kernel::at_time(params, t).theta().min(1.0))
}

/// One-step transition log-pmf for an arbitrary thinning probability `theta`.
pub fn discrete_transition_log_pmf(r: f64, q: Prob, theta: Prob, x0: u64, x1: u64) -> Result<LogProb> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain("r must be positive"));
    }
    if q.value() >= 1.0 {
        return Err(Error::domain("q must lie in [0,1)"));
    }
    let k = Kernel::from_theta(r, q.value(), theta.value());
    Ok(LogProb::clamped(k.ln_prob(x0, x1)))
}

/// Continuous-time transition log-pmf `ln P(X_t = x1 | X_0 = x0)`.
///
/// `t = 0` gives the identity kernel.
pub fn transition_log_pmf(params: &ModelParams, t: f64, x0: u64, x1: u64) -> Result<LogProb> {
    check_time(t)?;
    Ok(LogProb::clamped(Kernel::at_time(params, t).ln_prob(x0, x1)))
}

/// Bounds on the support search in [`transition_row`].
#[derive(Debug, Clone, Copy)]
pub struct RowLimits {
    pub max_support: u64,
}

impl Default for RowLimits {
    fn default() -> Self {
        RowLimits { max_support: 1_000_000 }
    }
}

/// Smallest `n` with `P(NB(shape, q̃) > n) < eps`, using logs of `q̃` and `1 - q̃`.
fn nb_quantile_bound(shape: f64, ln_qt: f64, ln_1m_qt: f64, eps: f64, cap: u64) -> Result<u64> {
    if ln_qt == f64::NEG_INFINITY {
        return Ok(0);
    }
    let qt = ln_qt.exp();
    let mean = shape * qt / ln_1m_qt.exp();
    let ln_eps = eps.ln();
    let mut ln_pmf = shape * ln_1m_qt;
    let mut k = 0u64;
    loop {
        // pmf ratios beyond k never exceed rho, so the tail is at most pmf_k rho / (1 - rho)
        let ratio = (shape + k as f64) / (k as f64 + 1.0) * qt;
        let rho = ratio.max(qt);
        if k as f64 >= mean && rho < 1.0 && ln_pmf + rho.ln() - (-rho).ln_1p() < ln_eps {
            return Ok(k);
        }
        ln_pmf += ratio.ln();
        k += 1;
        if k > cap {
            return Err(Error::Resource { needed: k, cap });
        }
    }
}

/// Upper bound on `P(NB(shape, q̃) > m)`.
pub(crate) fn nb_tail_bound(shape: f64, ln_qt: f64, ln_1m_qt: f64, m: u64) -> f64 {
    if ln_qt == f64::NEG_INFINITY {
        return 0.0;
    }
    let qt = ln_qt.exp();
    let mut ln_pmf = shape * ln_1m_qt;
    let mut cdf = ln_pmf.exp();
    for k in 0..m {
        ln_pmf += ((shape + k as f64) / (k as f64 + 1.0) * qt).ln();
        cdf += ln_pmf.exp();
    }
    let rho = ((shape + m as f64) / (m as f64 + 1.0) * qt).max(qt);
    let mean = shape * qt / ln_1m_qt.exp();
    if m as f64 >= mean && rho < 1.0 {
        (ln_pmf + rho.ln() - (-rho).ln_1p()).exp()
    } else {
        (1.0 - cdf).max(0.0)
    }
}

/// Truncation point `N` with `P(X_t > N | X_0 = x0) < eps`.
///
/// `X_t = Y + Z` with `Y <= x0` and `Z` stochastically below `NB(r + x0, q̃)`,
/// so `x0` plus that NB's `1 - eps` quantile bounds the tail.
pub(crate) fn support_bound(kernel: &Kernel, x0: u64, eps: f64, cap: u64) -> Result<u64> {
    let shape = kernel.r + x0 as f64;
    let n = nb_quantile_bound(shape, kernel.ln_qt, kernel.ln_1m_qt, eps, cap)? + x0;
    if n > cap {
        return Err(Error::Resource { needed: n, cap });
    }
    Ok(n)
}

/// Transition probabilities `p_t(x0, ·)` on `0..=N`, with the remaining mass below `eps`.
pub fn transition_row(params: &ModelParams, t: f64, x0: u64, eps: f64) -> Result<TransitionRow> {
    transition_row_with(params, t, x0, eps, RowLimits::default())
}

pub fn transition_row_with(
    params: &ModelParams,
    t: f64,
    x0: u64,
    eps: f64,
    limits: RowLimits,
) -> Result<TransitionRow> {
    check_time(t)?;
    if !(eps > 0.0 && eps <= 1e-4) {
        return Err(Error::domain(format!("eps must lie in (0, 1e-4], got {eps}")));
    }
    let kernel = Kernel::at_time(params, t);
    let n = support_bound(&kernel, x0, eps, limits.max_support)?;
    let probs: Vec<f64> = (0..=n).map(|x1| kernel.ln_prob(x0, x1).exp()).collect();
    let total: f64 = probs.iter().sum();
    Ok(TransitionRow { x0, t, probs, truncation_mass: (1.0 - total).max(0.0) })
}

/// Log-pmf of the stationary law `NB(r, q)`.
pub fn stationary_log_pmf(params: &ModelParams, x: u64) -> LogProb {
    LogProb::clamped(nb_ln_pmf_raw(x, params.r, params.q.ln(), (-params.q).ln_1p()))
}

/// Smallest `n` with stationary tail mass `P(X > n) < eps`.
pub fn stationary_support_bound(params: &ModelParams, eps: f64) -> Result<u64> {
    nb_quantile_bound(params.r, params.q.ln(), (-params.q).ln_1p(), eps, RowLimits::default().max_support)
}

pub fn to_rates(params: &ModelParams) -> BDIRates {
    let scale = params.c / (1.0 - params.q);
    BDIRates { lambda: scale * params.q, mu: scale, nu: scale * params.q * params.r }
}

pub fn from_rates(rates: &BDIRates) -> Result<ModelParams> {
    let BDIRates { lambda, mu, nu } = *rates;
    if !(mu > lambda) {
        return Err(Error::domain(format!(
            "death rate {mu} must exceed birth rate {lambda} for a stationary law"
        )));
    }
    if !(lambda > 0.0) || !(nu > 0.0) {
        return Err(Error::domain("birth and immigration rates must be positive"));
    }
    ModelParams::new(nu / lambda, lambda / mu, mu - lambda)
}

/// Birth–death rates out of state `i`: down `ci/(1-q)`, up `cq(i+r)/(1-q)`.
pub fn generator_rates(params: &ModelParams, i: u64) -> GeneratorRates {
    let scale = params.c / (1.0 - params.q);
    let down = scale * i as f64;
    let up = scale * params.q * (i as f64 + params.r);
    GeneratorRates { down, up, diagonal: -(down + up) }
}

/// `E[X_t | X_0 = x0] = x0 e^{-ct} + m (1 - e^{-ct})`, `m` the stationary mean.
pub fn conditional_mean(params: &ModelParams, t: f64, x0: u64) -> f64 {
    let ct = params.c * t;
    x0 as f64 * (-ct).exp() - params.stationary_mean() * (-ct).exp_m1()
}
