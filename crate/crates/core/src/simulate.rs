//! Exact path simulation through the branching equation
//! `X_t = Bin(X_0, θ_t) + NB(r + Y, q(1 - θ_t))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;

use crate::distributions::{binom_sample_raw, nb_sample_raw};
use crate::error::{Error, Result};
use crate::process::{Kernel, ModelParams};
use crate::series::TimeSeries;

/// The random stream type used throughout the crate.
pub type RandomStream = ChaCha8Rng;

/// Independent stream number `index` derived from `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Observation times for a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSchedule {
    /// `n` observations at `0, dt, 2dt, ...`.
    Equal { dt: f64, n: usize },
    /// `n` observations, the first at 0 and the rest separated by i.i.d. `Exp(rate)` gaps.
    ExponentialArrivals { rate: f64, n: usize },
    Explicit(Vec<f64>),
}

impl SampleSchedule {
    pub fn len(&self) -> usize {
        match self {
            SampleSchedule::Equal { n, .. } | SampleSchedule::ExponentialArrivals { n, .. } => *n,
            SampleSchedule::Explicit(times) => times.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SampleSchedule::Equal { dt, n } => {
                if !(*dt > 0.0 && dt.is_finite()) {
                    return Err(Error::domain("dt must be positive"));
                }
                if *n == 0 {
                    return Err(Error::domain("schedule needs at least one observation"));
                }
            }
            SampleSchedule::ExponentialArrivals { rate, n } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::domain("rate must be positive"));
                }
                if *n == 0 {
                    return Err(Error::domain("schedule needs at least one observation"));
                }
            }
            SampleSchedule::Explicit(times) => {
                if times.is_empty() {
                    return Err(Error::domain("schedule needs at least one observation"));
                }
                if !(times[0] >= 0.0) || times.iter().any(|t| !t.is_finite()) {
                    return Err(Error::domain("explicit times must be finite and start at or after 0"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::domain("explicit times must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    /// Materializes the time stamps, drawing exponential gaps from `rng`.
    pub fn times<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self {
            SampleSchedule::Equal { dt, n } => (0..*n).map(|i| i as f64 * dt).collect(),
            SampleSchedule::ExponentialArrivals { rate, n } => {
                let gap = Exp::new(*rate).expect("validated rate");
                let mut t = 0.0;
                let mut out = Vec::with_capacity(*n);
                out.push(0.0);
                while out.len() < *n {
                    let dt: f64 = gap.sample(rng);
                    // a zero gap would break strict monotonicity
                    if dt > 0.0 && t + dt > t {
                        t += dt;
                        out.push(t);
                    }
                }
                out
            }
            SampleSchedule::Explicit(times) => times.clone(),
        })
    }
}

/// One draw from the stationary law `NB(r, q)`.
pub fn draw_stationary<R: Rng + ?Sized>(rng: &mut R, params: &ModelParams) -> u64 {
    nb_sample_raw(rng, params.r(), params.q())
}

/// Advances the chain from `x0` by `dt`.
pub fn step<R: Rng + ?Sized>(rng: &mut R, params: &ModelParams, x0: u64, dt: f64) -> u64 {
    step_with_kernel(rng, &Kernel::at_time(params, dt), params.r(), x0)
}

fn step_with_kernel<R: Rng + ?Sized>(rng: &mut R, kernel: &Kernel, r: f64, x0: u64) -> u64 {
    let survivors = binom_sample_raw(rng, x0, kernel.theta());
    survivors + nb_sample_raw(rng, r + survivors as f64, kernel.q_tilde())
}

/// Simulates counts at the schedule's times, starting stationary unless `x_init` is given.
pub fn simulate_path<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ModelParams,
    schedule: &SampleSchedule,
    x_init: Option<u64>,
) -> Result<TimeSeries> {
    let times = schedule.times(rng)?;
    let mut counts = Vec::with_capacity(times.len());
    let mut x = x_init.unwrap_or_else(|| draw_stationary(rng, params));
    counts.push(x);
    let mut cached: Option<(f64, Kernel)> = None;
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let kernel = match cached {
            Some((d, k)) if d == dt => k,
            _ => {
                let k = Kernel::at_time(params, dt);
                cached = Some((dt, k));
                k
            }
        };
        x = step_with_kernel(rng, &kernel, params.r(), x);
        counts.push(x);
    }
    TimeSeries::new(times, counts)
}

/// `n_rep` independent paths, replicate `i` drawn from `substream(master_seed, i)`.
pub fn replicate_datasets(
    master_seed: u64,
    params: &ModelParams,
    schedule: &SampleSchedule,
    n_rep: usize,
) -> Result<Vec<TimeSeries>> {
    if n_rep == 0 {
        return Err(Error::domain("need at least one replicate"));
    }
    schedule.validate()?;
    (0..n_rep)
        .into_par_iter()
        .map(|i| simulate_path(&mut substream(master_seed, i as u64), params, schedule, None))
        .collect()
}
