//! Fixtures shared by the criterion benchmarks.

use negbin_core::simulate::{simulate_path, substream};
use negbin_core::{ModelParams, SampleSchedule, TimeSeries};

/// A 240-point monthly series simulated at `params`.
pub fn monthly_series(params: &ModelParams, seed: u64) -> TimeSeries {
    let schedule = SampleSchedule::Equal { dt: 1.0, n: 240 };
    simulate_path(&mut substream(seed, 0), params, &schedule, None).expect("valid schedule")
}

/// Parameters close to those fitted on monthly crime counts.
pub fn crime_like_params() -> ModelParams {
    ModelParams::new(6.0865, 0.6031, 0.6848).expect("valid parameters")
}
