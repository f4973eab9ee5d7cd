//! Point and density forecasts, and rolling-origin evaluation by mean squared
//! error and mean log predictive score.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::inference::{fit_mle, fit_mle_from, FitOptions};
use crate::process::{conditional_mean, transition_log_pmf, transition_row, ModelParams, TransitionRow};
use crate::series::TimeSeries;

/// Conditional mean of the count `horizon_time` after observing `x_last`.
pub fn point_forecast(params: &ModelParams, x_last: u64, horizon_time: f64) -> Result<f64> {
    check_horizon(horizon_time)?;
    Ok(conditional_mean(params, horizon_time, x_last))
}

/// Predictive distribution `horizon_time` after observing `x_last`.
pub fn density_forecast(params: &ModelParams, x_last: u64, horizon_time: f64, eps: f64) -> Result<TransitionRow> {
    check_horizon(horizon_time)?;
    transition_row(params, horizon_time, x_last, eps)
}

fn check_horizon(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("forecast horizon must be positive, got {h}")))
    }
}

/// `(1/n) Σ (ŷ_i - y_i)^2`.
pub fn mean_squared_error(predicted: &[f64], actual: &[u64]) -> f64 {
    assert_eq!(predicted.len(), actual.len());
    predicted
        .iter()
        .zip(actual)
        .map(|(p, y)| (p - *y as f64).powi(2))
        .sum::<f64>()
        / predicted.len() as f64
}

/// `(1/n) Σ log p̂_i(y_i)` from the log predictive masses at the realizations.
pub fn log_predictive_score(log_masses: &[f64]) -> f64 {
    log_masses.iter().sum::<f64>() / log_masses.len() as f64
}

/// Which observation an `h`-step forecast conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    /// Every point of the evaluation window is a target; the forecast for
    /// target `j` conditions on observation `j - h`.
    #[default]
    Target,
    /// Forecast origins run over the window; the target is `h` steps after
    /// the origin, so fewer targets remain for longer horizons.
    Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingConfig {
    /// Observations in the initial training window.
    pub n_train: usize,
    pub horizons: Vec<usize>,
    /// Refit on the expanding window at every origin instead of once.
    pub refit_each_origin: bool,
    pub alignment: Alignment,
    pub fit: FitOptions,
}

impl RollingConfig {
    pub fn new(n_train: usize, horizons: Vec<usize>) -> Self {
        RollingConfig {
            n_train,
            horizons,
            refit_each_origin: true,
            alignment: Alignment::Target,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEval {
    pub horizons: Vec<usize>,
    pub mse_per_h: Vec<f64>,
    pub pl_per_h: Vec<f64>,
    /// Length of the evaluation window.
    pub n_origins: usize,
    /// Number of (conditioning, target) pairs averaged for each horizon.
    pub counts_per_h: Vec<usize>,
    pub refit_each_origin: bool,
    pub warnings: Vec<String>,
}

/// `(conditioning index, target index)` pairs for horizon `h`.
fn pairs(len: usize, n_train: usize, h: usize, alignment: Alignment) -> Vec<(usize, usize)> {
    match alignment {
        Alignment::Target => (n_train..len).map(|j| (j - h, j)).collect(),
        Alignment::Origin => (n_train - 1..len - h).map(|o| (o, o + h)).collect(),
    }
}

fn check_window(series: &TimeSeries, n_train: usize, horizons: &[usize]) -> Result<usize> {
    let max_h = *horizons
        .iter()
        .max()
        .ok_or_else(|| Error::domain("need at least one horizon"))?;
    if horizons.contains(&0) {
        return Err(Error::domain("horizons must be at least 1"));
    }
    if n_train < max_h || n_train == 0 {
        return Err(Error::domain(format!("training window {n_train} shorter than horizon {max_h}")));
    }
    if n_train + max_h > series.len() {
        return Err(Error::domain(format!(
            "training window {n_train} plus horizon {max_h} exceeds series length {}",
            series.len()
        )));
    }
    Ok(max_h)
}

fn score(
    series: &TimeSeries,
    n_train: usize,
    horizons: &[usize],
    alignment: Alignment,
    params_at: impl Fn(usize) -> ModelParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<usize>)> {
    let (times, counts) = (series.times(), series.counts());
    let mut mse = Vec::with_capacity(horizons.len());
    let mut pl = Vec::with_capacity(horizons.len());
    let mut n = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let idx = pairs(series.len(), n_train, h, alignment);
        let mut predicted = Vec::with_capacity(idx.len());
        let mut actual = Vec::with_capacity(idx.len());
        let mut log_masses = Vec::with_capacity(idx.len());
        for &(k, j) in &idx {
            let p = params_at(k);
            let dt = times[j] - times[k];
            predicted.push(point_forecast(&p, counts[k], dt)?);
            actual.push(counts[j]);
            log_masses.push(transition_log_pmf(&p, dt, counts[k], counts[j])?.value());
        }
        mse.push(mean_squared_error(&predicted, &actual));
        pl.push(log_predictive_score(&log_masses));
        n.push(idx.len());
    }
    Ok((mse, pl, n))
}

/// Rolling-origin evaluation with parameters estimated from the data.
///
/// With refitting, the model used at conditioning index `k` is fitted on
/// observations `0..=k`. The first window gets a full multi-start fit; later
/// windows start from the previous optimum. A refit that fails to converge
/// falls back to the previous parameters and records a warning.
pub fn evaluate_rolling(series: &TimeSeries, config: &RollingConfig) -> Result<ForecastEval> {
    let RollingConfig { n_train, ref horizons, refit_each_origin, alignment, ref fit } = *config;
    check_window(series, n_train, horizons)?;
    let mut warnings = Vec::new();

    let fitted: BTreeMap<usize, ModelParams> = if refit_each_origin {
        let mut keys: Vec<usize> = horizons
            .iter()
            .flat_map(|&h| pairs(series.len(), n_train, h, alignment).into_iter().map(|(k, _)| k))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let mut out = BTreeMap::new();
        let mut prev: Option<ModelParams> = None;
        for k in keys {
            let window = series.prefix(k + 1);
            let params = match prev {
                None => {
                    let first = fit_mle(&window, fit)?;
                    if !first.converged {
                        warnings.push(format!("initial fit on {} observations did not converge", k + 1));
                    }
                    first.params
                }
                Some(p) => match fit_mle_from(&window, fit, &p, 0.1) {
                    Ok((r, _)) if r.converged => r.params,
                    _ => {
                        warnings.push(format!("refit on {} observations did not converge; reusing previous fit", k + 1));
                        p
                    }
                },
            };
            out.insert(k, params);
            prev = Some(params);
        }
        out
    } else {
        let first = fit_mle(&series.prefix(n_train), fit)?;
        if !first.converged {
            warnings.push(format!("fit on {n_train} observations did not converge"));
        }
        BTreeMap::from([(usize::MAX, first.params)])
    };

    let lookup = |k: usize| -> ModelParams {
        match fitted.get(&k) {
            Some(p) => *p,
            None => fitted[&usize::MAX],
        }
    };
    let (mse_per_h, pl_per_h, counts_per_h) = score(series, n_train, horizons, alignment, lookup)?;
    Ok(ForecastEval {
        horizons: horizons.clone(),
        mse_per_h,
        pl_per_h,
        n_origins: series.len() - n_train,
        counts_per_h,
        refit_each_origin,
        warnings,
    })
}

/// Rolling evaluation with fixed, known parameters.
pub fn evaluate_fixed(
    series: &TimeSeries,
    params: &ModelParams,
    n_train: usize,
    horizons: &[usize],
    alignment: Alignment,
) -> Result<ForecastEval> {
    check_window(series, n_train, horizons)?;
    let (mse_per_h, pl_per_h, counts_per_h) = score(series, n_train, horizons, alignment, |_| *params)?;
    Ok(ForecastEval {
        horizons: horizons.to_vec(),
        mse_per_h,
        pl_per_h,
        n_origins: series.len() - n_train,
        counts_per_h,
        refit_each_origin: false,
        warnings: Vec::new(),
    })
}

/// One row per horizon: `horizon,mse,pl`.
pub fn write_forecast_csv<W: Write>(eval: &ForecastEval, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["horizon", "mse", "pl"])?;
    for ((h, m), p) in eval.horizons.iter().zip(&eval.mse_per_h).zip(&eval.pl_per_h) {
        w.write_record([h.to_string(), m.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
