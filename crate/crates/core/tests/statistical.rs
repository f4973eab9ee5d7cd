use negbin_core::diagnostics::chi_square_gof;
use negbin_core::forecast::evaluate_fixed;
use negbin_core::inference::{run_simulation_study, FitOptions};
use negbin_core::process::stationary_log_pmf;
use negbin_core::simulate::{replicate_datasets, simulate_path, substream};
use negbin_core::{Alignment, ModelParams, SampleSchedule};

fn params(r: f64, q: f64, c: f64) -> ModelParams {
    ModelParams::new(r, q, c).unwrap()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    0.5 * (xs[(n - 1) / 2] + xs[n / 2])
}

#[test]
fn true_model_scores_best() {
    let truth = params(6.0, 0.6, 0.7);
    let horizons = [1, 2];
    let sched = SampleSchedule::Equal { dt: 1.0, n: 1100 };
    let data = replicate_datasets(11, &truth, &sched, 20).unwrap();
    let mean_pl = |p: &ModelParams| {
        data.iter()
            .map(|s| evaluate_fixed(s, p, 100, &horizons, Alignment::Target).unwrap().pl_per_h[0])
            .sum::<f64>()
            / data.len() as f64
    };
    let best = mean_pl(&truth);
    for q in [0.45, 0.75] {
        let other = mean_pl(&params(6.0, q, 0.7));
        assert!(best > other, "q = {q}: {best} vs {other}");
    }
}

#[test]
fn longer_series_estimate_better() {
    let truth = params(2.0, 0.5, 0.5);
    let sched = SampleSchedule::Equal { dt: 1.0, n: 4000 };
    let study = run_simulation_study(21, &truth, &sched, 20, &[250, 4000], &FitOptions::default()).unwrap();
    let truth_v = [truth.r(), truth.q(), truth.c()];
    let mae = |k: usize| -> Vec<f64> {
        study
            .iter()
            .map(|s| {
                let est = |p: &ModelParams| [p.r(), p.q(), p.c()][k];
                median(s.estimates.iter().map(|p| (est(p) - truth_v[k]).abs()).collect())
            })
            .collect()
    };
    for k in 0..3 {
        let m = mae(k);
        assert!(m[1] < m[0], "parameter {k}: {m:?}");
    }
}

#[test]
fn marginals_stay_stationary() {
    let p = params(2.0, 0.5, 0.5);
    let sched = SampleSchedule::Equal { dt: 1.0, n: 6 };
    let draws: Vec<u64> =
        (0..10_000).map(|i| simulate_path(&mut substream(5, i), &p, &sched, None).unwrap().counts()[5]).collect();
    let probs: Vec<f64> = (0..60).map(|x| stationary_log_pmf(&p, x).prob()).collect();
    assert!(chi_square_gof(&draws, &probs).p_value > 1e-3);
}

#[test]
fn single_dataset_within_three_sds() {
    let truth = params(5.0, 0.7, 1.0);
    let sched = SampleSchedule::Equal { dt: 1.0, n: 1000 };
    let s = &run_simulation_study(31, &truth, &sched, 1, &[1000], &FitOptions::default()).unwrap()[0];
    let sds = [0.3779, 0.0157, 0.0790];
    let truth_v = [truth.r(), truth.q(), truth.c()];
    for k in 0..3 {
        assert!((s.mean[k] - truth_v[k]).abs() < 3.0 * sds[k], "{:?}", s.mean);
    }
}
