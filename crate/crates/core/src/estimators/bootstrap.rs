//! Percentile bootstrap over Monte Carlo replicas.

use rand::Rng;
use rayon::prelude::*;

use super::{entropy_unchecked, PosteriorBatch};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile interval for `I(S;W)` from resampling whole rows with
/// replacement. Resample `j` draws from its own stream `(seed, j)`, so the
/// interval does not depend on thread scheduling.
pub fn bootstrap_ci(batch: &PosteriorBatch, resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Empty("posterior batch has no rows"));
    }
    if resamples == 0 {
        return Err(Error::param("resamples", "must be at least 1"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param("level", format!("{level} is outside (0, 1)")));
    }
    let m = batch.len();
    let r = batch.num_experts();
    let row_entropy: Vec<f64> = batch.rows().map(entropy_unchecked).collect();

    let mut estimates: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, Purpose::Bootstrap, j as u64);
            let mut marginal = vec![0.0; r];
            let mut h_cond = 0.0;
            for _ in 0..m {
                let i = rng.random_range(0..m);
                for (acc, &q) in marginal.iter_mut().zip(batch.row(i)) {
                    *acc += q;
                }
                h_cond += row_entropy[i];
            }
            marginal.iter_mut().for_each(|p| *p /= m as f64);
            entropy_unchecked(&marginal) - h_cond / m as f64
        })
        .collect();
    estimates.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(&estimates, tail), percentile(&estimates, 1.0 - tail)))
}
