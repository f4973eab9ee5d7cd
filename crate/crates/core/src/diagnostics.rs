//! Goodness-of-fit helpers shared by the sampler checks.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of integer draws against `probs` on `0..probs.len()`.
///
/// Adjacent cells are pooled left to right until each expects at least five
/// draws; everything past the last cell, including mass missing from `probs`,
/// falls into the final bin.
pub fn chi_square_gof(draws: &[u64], probs: &[f64]) -> ChiSquare {
    let n = draws.len() as f64;
    let mut observed = vec![0u64; probs.len() + 1];
    for &d in draws {
        let idx = (d as usize).min(probs.len());
        observed[idx] += 1;
    }
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let expected: Vec<f64> = probs.iter().copied().chain(std::iter::once(tail)).collect();

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, p) in observed.iter().zip(&expected) {
        o_acc += *o as f64;
        e_acc += p * n;
        if e_acc >= 5.0 {
            bins.push((o_acc, e_acc));
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += o_acc;
                last.1 += e_acc;
            }
            None => bins.push((o_acc, e_acc)),
        }
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        ChiSquared::new(dof as f64).map(|d| d.sf(statistic)).unwrap_or(0.0)
    };
    ChiSquare { statistic, dof, p_value }
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
