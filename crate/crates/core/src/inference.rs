//! Maximum-likelihood estimation of `(r, q, c)` from exact transition
//! probabilities, and the replicated simulation-study harness.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::diagnostics::mean_sd;
use crate::error::{Error, Result};
use crate::optimize::{nelder_mead, SimplexOptions};
use crate::process::{stationary_log_pmf, Kernel, ModelParams};
use crate::series::TimeSeries;
use crate::simulate::{replicate_datasets, substream, SampleSchedule};

/// Ranges the multi-start points are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartBox {
    pub r: (f64, f64),
    pub q: (f64, f64),
    pub c: (f64, f64),
}

impl Default for StartBox {
    fn default() -> Self {
        StartBox { r: (0.2, 20.0), q: (0.05, 0.95), c: (0.05, 5.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Add the stationary log-density of the first observation.
    pub include_initial: bool,
    pub n_starts: usize,
    pub max_iters: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub start_box: StartBox,
    /// Seed of the Latin-hypercube start design.
    pub seed: u64,
    /// Shortest series accepted by [`fit_mle`].
    pub min_len: usize,
    /// Initial simplex edge in the unconstrained `(ln r, logit q, ln c)` space.
    pub initial_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            include_initial: true,
            n_starts: 5,
            max_iters: 2000,
            f_tol: 1e-8,
            x_tol: 1e-5,
            start_box: StartBox::default(),
            seed: 0,
            min_len: 10,
            initial_step: 0.5,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.max_iters == 0 {
            return Err(Error::domain("n_starts and max_iters must be at least 1"));
        }
        if !(self.f_tol > 0.0 && self.x_tol > 0.0) {
            return Err(Error::domain("tolerances must be positive"));
        }
        let b = &self.start_box;
        let ok = 0.0 < b.r.0 && b.r.0 <= b.r.1
            && 0.0 < b.q.0 && b.q.0 <= b.q.1 && b.q.1 < 1.0
            && 0.0 < b.c.0 && b.c.0 <= b.c.1;
        if !ok {
            return Err(Error::domain("start box must lie inside the parameter space"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// Every observation is the same count; the likelihood has no interior maximum.
    ConstantSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub loglik: f64,
    pub converged: bool,
    /// Objective evaluations used by the winning start.
    pub n_evals: usize,
    pub iterations: usize,
    pub start_used: usize,
    pub warnings: Vec<FitWarning>,
}

/// Log-likelihood of `series` under `params`, the sum of exact transition log-pmfs.
pub fn log_likelihood(params: &ModelParams, series: &TimeSeries, include_initial: bool) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Series("need at least 2 observations".into()));
    }
    Ok(log_likelihood_unchecked(params, series, include_initial))
}

pub(crate) fn log_likelihood_unchecked(params: &ModelParams, series: &TimeSeries, include_initial: bool) -> f64 {
    let mut total = if include_initial {
        stationary_log_pmf(params, series.counts()[0]).value()
    } else {
        0.0
    };
    let mut cached: Option<(f64, Kernel)> = None;
    for (dt, x0, x1) in series.transitions() {
        let kernel = match cached {
            Some((d, k)) if d == dt => k,
            _ => {
                let k = Kernel::at_time(params, dt);
                cached = Some((dt, k));
                k
            }
        };
        total += kernel.ln_prob(x0, x1);
    }
    total
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_unconstrained(p: &ModelParams) -> [f64; 3] {
    [p.r().ln(), logit(p.q()), p.c().ln()]
}

fn from_unconstrained(z: &[f64]) -> Option<ModelParams> {
    // beyond this the back-transform saturates in double precision
    if z.iter().any(|v| !v.is_finite() || v.abs() > 35.0) {
        return None;
    }
    let q = 1.0 / (1.0 + (-z[1]).exp());
    ModelParams::new(z[0].exp(), q, z[2].exp()).ok()
}

/// `n` points stratified along each unconstrained axis of the start box.
fn latin_hypercube(b: &StartBox, n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = substream(seed, u64::MAX);
    let ranges = [
        (b.r.0.ln(), b.r.1.ln()),
        (logit(b.q.0), logit(b.q.1)),
        (b.c.0.ln(), b.c.1.ln()),
    ];
    let columns: Vec<Vec<f64>> = ranges
        .iter()
        .map(|(lo, hi)| {
            let mut col: Vec<f64> = (0..n)
                .map(|k| lo + (hi - lo) * (k as f64 + rng.random::<f64>()) / n as f64)
                .collect();
            col.shuffle(&mut rng);
            col
        })
        .collect();
    (0..n)
        .map(|i| [columns[0][i], columns[1][i], columns[2][i]])
        .collect()
}

fn check_fit_input(series: &TimeSeries, options: &FitOptions) -> Result<Vec<FitWarning>> {
    options.validate()?;
    if series.len() < 2 {
        return Err(Error::Series("need at least 2 observations".into()));
    }
    if series.len() < options.min_len {
        return Err(Error::Series(format!(
            "need at least {} observations, got {}",
            options.min_len,
            series.len()
        )));
    }
    let first = series.counts()[0];
    Ok(if series.counts().iter().all(|&x| x == first) {
        vec![FitWarning::ConstantSeries]
    } else {
        Vec::new()
    })
}

fn run_start(series: &TimeSeries, options: &FitOptions, start: &[f64], step: f64) -> (FitResult, Vec<f64>) {
    let objective = |z: &[f64]| match from_unconstrained(z) {
        Some(p) => -log_likelihood_unchecked(&p, series, options.include_initial),
        None => f64::INFINITY,
    };
    let simplex = SimplexOptions {
        max_iters: options.max_iters,
        f_tol: options.f_tol,
        x_tol: options.x_tol,
        initial_step: step,
    };
    let out = nelder_mead(objective, start, &simplex);
    let params = from_unconstrained(&out.x).expect("simplex optimum has a finite objective");
    let result = FitResult {
        params,
        loglik: -out.f,
        converged: out.converged,
        n_evals: out.evaluations,
        iterations: out.iterations,
        start_used: 0,
        warnings: Vec::new(),
    };
    (result, out.trace)
}

/// Best of `n_starts` simplex searches in `(ln r, logit q, ln c)`.
///
/// Ties on log-likelihood go to the start with fewer evaluations.
pub fn fit_mle(series: &TimeSeries, options: &FitOptions) -> Result<FitResult> {
    let warnings = check_fit_input(series, options)?;
    let starts = latin_hypercube(&options.start_box, options.n_starts, options.seed);
    let results: Vec<FitResult> = starts
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let (mut r, _) = run_start(series, options, z, options.initial_step);
            r.start_used = i;
            r
        })
        .collect();
    let mut best = results
        .into_iter()
        .filter(|r| r.loglik.is_finite())
        .min_by(|a, b| b.loglik.total_cmp(&a.loglik).then(a.n_evals.cmp(&b.n_evals)))
        .ok_or_else(|| Error::domain("likelihood is not finite at any start"))?;
    best.warnings = warnings;
    Ok(best)
}

/// A single simplex search started at `init`, with the best-objective trace.
pub fn fit_mle_from(
    series: &TimeSeries,
    options: &FitOptions,
    init: &ModelParams,
    step: f64,
) -> Result<(FitResult, Vec<f64>)> {
    let warnings = check_fit_input(series, options)?;
    let (mut result, trace) = run_start(series, options, &to_unconstrained(init), step);
    result.warnings = warnings;
    Ok((result, trace))
}

impl FitResult {
    /// Flat `key = value` lines.
    pub fn write_kv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r_hat = {}", self.params.r())?;
        writeln!(w, "q_hat = {}", self.params.q())?;
        writeln!(w, "c_hat = {}", self.params.c())?;
        writeln!(w, "loglik = {}", self.loglik)?;
        writeln!(w, "converged = {}", self.converged)?;
        writeln!(w, "n_evals = {}", self.n_evals)?;
        writeln!(w, "iterations = {}", self.iterations)?;
        writeln!(w, "start_used = {}", self.start_used)?;
        for warning in &self.warnings {
            match warning {
                FitWarning::ConstantSeries => writeln!(w, "warning = constant_series")?,
            }
        }
        Ok(())
    }
}

/// Reads `r_hat`, `q_hat`, `c_hat` back from a [`FitResult::write_kv`] file.
pub fn read_params_kv<R: BufRead>(reader: R) -> Result<ModelParams> {
    let (mut r, mut q, mut c) = (None, None, None);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i as u64 + 1, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
        let slot = match key.trim() {
            "r_hat" => &mut r,
            "q_hat" => &mut q,
            "c_hat" => &mut c,
            _ => continue,
        };
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("invalid number `{}`", value.trim())))?;
        *slot = Some(v);
    }
    match (r, q, c) {
        (Some(r), Some(q), Some(c)) => ModelParams::new(r, q, c),
        _ => Err(Error::Parse { line: 0, message: "missing r_hat, q_hat or c_hat".into() }),
    }
}

/// Replicate estimates for one subsample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySummary {
    pub size: usize,
    pub true_params: ModelParams,
    pub n_requested: usize,
    /// Replicates dropped because their fit did not converge.
    pub n_excluded: usize,
    /// Means of `(r, q, c)` over the retained replicates.
    pub mean: [f64; 3],
    pub sd: [f64; 3],
    pub estimates: Vec<ModelParams>,
}

/// Simulates `n_rep` paths and fits the first `size` observations of each, per size.
pub fn run_simulation_study(
    master_seed: u64,
    true_params: &ModelParams,
    schedule: &SampleSchedule,
    n_rep: usize,
    subsample_sizes: &[usize],
    options: &FitOptions,
) -> Result<Vec<StudySummary>> {
    if subsample_sizes.is_empty() {
        return Err(Error::domain("need at least one subsample size"));
    }
    if let Some(s) = subsample_sizes.iter().find(|&&s| s > schedule.len() || s < 2) {
        return Err(Error::domain(format!(
            "subsample size {s} must lie in 2..={}",
            schedule.len()
        )));
    }
    let data = replicate_datasets(master_seed, true_params, schedule, n_rep)?;
    let jobs: Vec<(usize, usize)> = subsample_sizes
        .iter()
        .flat_map(|&s| (0..n_rep).map(move |i| (s, i)))
        .collect();
    let fits: Vec<Result<FitResult>> = jobs
        .par_iter()
        .map(|&(size, i)| fit_mle(&data[i].prefix(size), options))
        .collect();

    let mut summaries = Vec::with_capacity(subsample_sizes.len());
    for (k, &size) in subsample_sizes.iter().enumerate() {
        let chunk = &fits[k * n_rep..(k + 1) * n_rep];
        let mut estimates = Vec::new();
        for fit in chunk {
            let fit = fit.as_ref().map_err(Clone::clone)?;
            if fit.converged {
                estimates.push(fit.params);
            }
        }
        let column = |f: fn(&ModelParams) -> f64| -> (f64, f64) {
            mean_sd(&estimates.iter().map(f).collect::<Vec<_>>())
        };
        let (mr, sr) = column(ModelParams::r);
        let (mq, sq) = column(ModelParams::q);
        let (mc, sc) = column(ModelParams::c);
        summaries.push(StudySummary {
            size,
            true_params: *true_params,
            n_requested: n_rep,
            n_excluded: n_rep - estimates.len(),
            mean: [mr, mq, mc],
            sd: [sr, sq, sc],
            estimates,
        });
    }
    Ok(summaries)
}

/// One row per size: `size,mean_r,sd_r,mean_q,sd_q,mean_c,sd_c`.
pub fn write_study_csv<W: Write>(summaries: &[StudySummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["size", "mean_r", "sd_r", "mean_q", "sd_q", "mean_c", "sd_c"])?;
    for s in summaries {
        w.write_record([
            s.size.to_string(),
            s.mean[0].to_string(),
            s.sd[0].to_string(),
            s.mean[1].to_string(),
            s.sd[1].to_string(),
            s.mean[2].to_string(),
            s.sd[2].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
