//! Transition probabilities by numerical inversion of the conditional
//! probability generating function, kept as a baseline to benchmark the
//! closed form against.
//!
//! The conditional pgf is sampled at the `n` roots of unity and inverted with
//! a DFT, `p_k = (1/n) Σ_j G(ω^j) ω^{-jk}`. Mass beyond `n` aliases back onto
//! the low entries, so `n` has to cover the support.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::inference::log_likelihood_unchecked;
use crate::process::{nb_tail_bound, stationary_log_pmf, support_bound, Kernel, ModelParams, TransitionRow};
use crate::series::TimeSeries;
use crate::simulate::{simulate_path, substream, SampleSchedule};

/// Largest tail mass past `n_points / 2` that [`invert_transition_row`] accepts.
pub const INVERSION_TAIL_LIMIT: f64 = 1e-8;

/// A conditional-pgf inversion request: row `x0` at time `t` on `n_points` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PgfQuery {
    pub params: ModelParams,
    pub t: f64,
    pub x0: u64,
    n_points: usize,
}

impl PgfQuery {
    pub fn new(params: ModelParams, t: f64, x0: u64, n_points: usize) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain("inversion time must be positive"));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(Error::domain(format!(
                "n_points must be a power of two >= 8, got {n_points}"
            )));
        }
        Ok(PgfQuery { params, t, x0, n_points })
    }

    /// Smallest power of two at least four times the `1e-10` truncation point.
    pub fn with_default_points(params: ModelParams, t: f64, x0: u64) -> Result<Self> {
        let kernel = Kernel::at_time(&params, t);
        let n = support_bound(&kernel, x0, 1e-10, 1 << 24)? as usize + 1;
        PgfQuery::new(params, t, x0, (4 * n).next_power_of_two().max(8))
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

/// `E[z^{X_t} | X_0 = x0] = ([1 - ξ] z^{-1})^r [1 - θ_t ξ]^{x0}`,
/// `ξ = (1 - z) / (1 - q(1 - θ_t) z)`, for `z` on the unit circle.
pub fn pgf_eval(query: &PgfQuery, z: Complex64) -> Result<Complex64> {
    if (z.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::domain(format!("pgf argument {z} is off the unit circle")));
    }
    let kernel = Kernel::at_time(&query.params, query.t);
    Ok(pgf_on_circle(&kernel, query.params.r(), query.x0, z))
}

fn pgf_on_circle(kernel: &Kernel, r: f64, x0: u64, z: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let qt = kernel.q_tilde();
    let xi = (one - z) / (one - qt * z);
    let base = (one - xi) / z;
    // |q̃ z| < 1 keeps the base in the right half-plane, where the principal power is continuous
    assert!(base.re > 0.0, "pgf base {base} left the right half-plane");
    let refill = if r == 1.0 { base } else { base.powf(r) };
    let thinned = one - kernel.theta() * xi;
    refill * powu(thinned, x0)
}

fn powu(mut b: Complex64, mut e: u64) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    acc
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Transition row `p_t(x0, ·)` on `0..n_points` by inverse DFT of pgf samples.
pub fn invert_transition_row(query: &PgfQuery) -> Result<TransitionRow> {
    let kernel = Kernel::at_time(&query.params, query.t);
    let n = query.n_points;
    let half = (n / 2) as u64;
    let tail = if half <= query.x0 {
        1.0
    } else {
        nb_tail_bound(
            query.params.r() + query.x0 as f64,
            kernel.ln_q_tilde(),
            kernel.ln_1m_q_tilde(),
            half - 1 - query.x0,
        )
    };
    if tail > INVERSION_TAIL_LIMIT {
        return Err(Error::Accuracy { tail, support: n / 2, limit: INVERSION_TAIL_LIMIT });
    }

    let probs = invert_on_grid(&kernel, query.params.r(), query.x0, n);
    Ok(TransitionRow { x0: query.x0, t: query.t, probs, truncation_mass: 0.0 })
}

/// DFT inversion on `n` points without the tail check; mass beyond `n` aliases back.
fn invert_on_grid(kernel: &Kernel, r: f64, x0: u64, n: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let z = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / n as f64);
            pgf_on_circle(kernel, r, x0, z)
        })
        .collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));

    let mut probs: Vec<f64> = buf.iter().map(|v| (v.re / n as f64).max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

/// Transition probability `p_t(x0, x1)` through inversion, sized so `x1` is on the grid.
pub fn inversion_transition_prob(params: &ModelParams, t: f64, x0: u64, x1: u64) -> Result<f64> {
    let mut query = PgfQuery::with_default_points(*params, t, x0)?;
    if x1 as usize >= query.n_points / 2 {
        query.n_points = (2 * (x1 as usize + 1)).next_power_of_two();
    }
    Ok(invert_transition_row(&query)?.prob(x1))
}

/// Log-likelihood with every transition obtained by pgf inversion.
pub fn log_likelihood_inversion(params: &ModelParams, series: &TimeSeries, include_initial: bool) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Series("need at least 2 observations".into()));
    }
    let mut total = if include_initial {
        stationary_log_pmf(params, series.counts()[0]).value()
    } else {
        0.0
    };
    for (dt, x0, x1) in series.transitions() {
        total += inversion_transition_prob(params, dt, x0, x1)?.ln();
    }
    Ok(total)
}

/// One benchmark cell: a parameter point and the series whose likelihood is built.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub label: String,
    pub params: ModelParams,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPreset {
    Small,
    PaperLike,
}

/// Length of the benchmark series, matching a 140 + 100 monthly record.
pub const BENCH_SERIES_LEN: usize = 240;

/// Deterministic benchmark cells, each with a simulated monthly series.
pub fn bench_grid(preset: GridPreset) -> Vec<BenchCell> {
    let points: Vec<(f64, f64, f64)> = match preset {
        GridPreset::Small => vec![(2.0, 0.5, 0.5), (6.0865, 0.6031, 0.6848)],
        GridPreset::PaperLike => {
            let mut v = Vec::new();
            for r in [2.0, 6.0865] {
                for q in [0.3, 0.6031] {
                    for c in [0.5, 0.6848] {
                        v.push((r, q, c));
                    }
                }
            }
            v
        }
    };
    points
        .into_iter()
        .enumerate()
        .map(|(i, (r, q, c))| {
            let params = ModelParams::new(r, q, c).expect("grid parameters are valid");
            let schedule = SampleSchedule::Equal { dt: 1.0, n: BENCH_SERIES_LEN };
            let series = simulate_path(&mut substream(2024, i as u64), &params, &schedule, None)
                .expect("valid schedule");
            BenchCell { label: format!("r={r};q={q};c={c}"), params, series }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    /// Median wall time in seconds to build the full log-likelihood.
    pub exact_secs: f64,
    pub inversion_secs: f64,
    /// `inversion_secs / exact_secs`.
    pub ratio: f64,
    /// Largest `|p_exact - p_inversion|` over the series' transitions.
    pub max_abs_diff: f64,
    pub exact_loglik: f64,
    pub inversion_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn max_abs_diff(&self) -> f64 {
        self.rows.iter().map(|r| r.max_abs_diff).fold(0.0, f64::max)
    }

    pub fn min_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
    }

    /// `cell,exact_time,inversion_time,ratio,max_diff`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "exact_time", "inversion_time", "ratio", "max_diff"])?;
        for row in &self.rows {
            w.write_record([
                row.label.clone(),
                row.exact_secs.to_string(),
                row.inversion_secs.to_string(),
                row.ratio.to_string(),
                row.max_abs_diff.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn timed<T>(mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64().max(1e-9)))
}

/// Times exact and inversion likelihood construction on each cell.
pub fn bench_compare(grid: &[BenchCell], repetitions: usize) -> Result<BenchReport> {
    if grid.is_empty() {
        return Err(Error::domain("benchmark grid is empty"));
    }
    let repetitions = repetitions.max(1);
    let mut rows = Vec::with_capacity(grid.len());
    for cell in grid {
        let (p, s) = (&cell.params, &cell.series);
        let mut exact_times = Vec::with_capacity(repetitions);
        let mut inv_times = Vec::with_capacity(repetitions);
        let mut exact_loglik = 0.0;
        let mut inversion_loglik = 0.0;
        for _ in 0..repetitions {
            let (ll, secs) = timed(|| Ok(log_likelihood_unchecked(p, s, true)))?;
            exact_loglik = ll;
            exact_times.push(secs);
            let (ll, secs) = timed(|| log_likelihood_inversion(p, s, true))?;
            inversion_loglik = ll;
            inv_times.push(secs);
        }
        let mut max_abs_diff: f64 = 0.0;
        for (dt, x0, x1) in s.transitions() {
            let exact = Kernel::at_time(p, dt).ln_prob(x0, x1).exp();
            let inv = inversion_transition_prob(p, dt, x0, x1)?;
            max_abs_diff = max_abs_diff.max((exact - inv).abs());
        }
        let exact_secs = median(exact_times);
        let inversion_secs = median(inv_times);
        rows.push(BenchRow {
            label: cell.label.clone(),
            exact_secs,
            inversion_secs,
            ratio: inversion_secs / exact_secs,
            max_abs_diff,
            exact_loglik,
            inversion_loglik,
        });
    }
    Ok(BenchReport { repetitions, rows })
}
