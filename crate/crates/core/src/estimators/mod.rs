//! Plug-in information estimates for the finite bank.
//!
//! Given `M` Monte Carlo posteriors `q_i(.)` over `R` experts, the selected
//! index `W` has empirical marginal `p_r = mean_i q_i(r)`, and
//!
//! ```text
//! H(W)   = -sum_r p_r ln p_r
//! H(W|S) = mean_i ( -sum_r q_i(r) ln q_i(r) )
//! I(S;W) = H(W) - H(W|S)
//! ```
//!
//! All quantities are in nats. `I(S;W)` itself is evaluated as the mean KL
//! divergence of the rows from `p`, which is the same quantity without the
//! cancellation of two nearly equal entropies, and is exactly zero when all
//! rows coincide.

mod bootstrap;
mod bounds;
mod routing;

pub use bootstrap::{bootstrap_ci, percentile};
pub use bounds::{mi_bound, union_bound};
pub use routing::routing_mi;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::selection::check_alpha;

const ROW_SUM_TOL: f64 = 1e-12;
const ENTROPY_SUM_TOL: f64 = 1e-9;

/// `x ln x` with the convention `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `M` selection distributions over `R` experts, one per Monte Carlo sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBatch {
    num_experts: usize,
    data: Vec<f64>,
    alpha: f64,
}

impl PosteriorBatch {
    /// Rows must be non-negative and sum to one within `1e-12`. `alpha` is
    /// recorded for reporting only.
    pub fn new(rows: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        let num_experts = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * num_experts);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != num_experts {
                return Err(Error::DimensionMismatch {
                    what: format!("posterior row {i}"),
                    expected: num_experts,
                    found: row.len(),
                });
            }
            check_distribution(row, ROW_SUM_TOL)
                .map_err(|e| Error::NotADistribution(format!("posterior row {i}: {e}")))?;
            data.extend_from_slice(row);
        }
        Ok(Self {
            num_experts,
            data,
            alpha,
        })
    }

    /// Batch of α-mixture posteriors for the given ERM winners.
    pub fn from_winners(winners: &[usize], num_experts: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if num_experts == 0 {
            return Err(Error::Empty("expert bank has no experts"));
        }
        let floor = (1.0 - alpha) / num_experts as f64;
        let mut data = vec![floor; winners.len() * num_experts];
        for (i, &w) in winners.iter().enumerate() {
            if w >= num_experts {
                return Err(Error::IndexOutOfRange {
                    what: "winner",
                    index: w,
                    bound: num_experts,
                });
            }
            data[i * num_experts + w] = alpha + floor;
        }
        Ok(Self {
            num_experts,
            data,
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        if self.num_experts == 0 {
            0
        } else {
            self.data.len() / self.num_experts
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.num_experts..(i + 1) * self.num_experts]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.num_experts.max(1))
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::Empty("posterior batch has no rows"))
        } else {
            Ok(())
        }
    }
}

fn check_distribution(p: &[f64], tol: f64) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("empty vector".into());
    }
    if let Some((r, &v)) = p.iter().enumerate().find(|(_, &v)| !(v >= 0.0) || !v.is_finite()) {
        return Err(format!("entry {r} is {v}"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

/// Average of the batch rows.
pub fn empirical_marginal(batch: &PosteriorBatch) -> Result<Vec<f64>> {
    batch.ensure_nonempty()?;
    Ok(mean_of_rows(batch.rows(), batch.num_experts(), batch.len()))
}

fn mean_of_rows<'a>(rows: impl Iterator<Item = &'a [f64]>, cols: usize, count: usize) -> Vec<f64> {
    let mut acc = vec![0.0; cols];
    for row in rows {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let n = count as f64;
    acc.into_iter().map(|a| a / n).collect()
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p, ENTROPY_SUM_TOL).map_err(Error::NotADistribution)?;
    Ok(entropy_unchecked(p))
}

/// Mean of the row entropies.
pub fn conditional_entropy(batch: &PosteriorBatch) -> Result<f64> {
    batch.ensure_nonempty()?;
    Ok(batch.rows().map(entropy_unchecked).sum::<f64>() / batch.len() as f64)
}

/// Entropy of an α-mixture posterior over `num_experts` experts. It does not
/// depend on which expert is the winner.
pub fn alpha_mixture_entropy(alpha: f64, num_experts: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if num_experts == 0 {
        return Err(Error::param("num_experts", "must be at least 1"));
    }
    let r = num_experts as f64;
    let floor = (1.0 - alpha) / r;
    Ok(-xlogx(alpha + floor) - (r - 1.0) * xlogx(floor))
}

/// Point estimates of the finite-bank information quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiEstimate {
    pub h_w: f64,
    pub h_w_given_s: f64,
    pub mi: f64,
    /// `mi + (R - 1) / (2M)`.
    pub mi_miller_madow: f64,
    pub marginal: Vec<f64>,
}

/// Miller–Madow bias term `(R - 1) / (2M)`.
pub fn miller_madow_correction(num_experts: usize, replicas: usize) -> f64 {
    (num_experts as f64 - 1.0) / (2.0 * replicas as f64)
}

pub fn estimate_mi(batch: &PosteriorBatch) -> Result<MiEstimate> {
    let marginal = empirical_marginal(batch)?;
    let h_w = entropy_unchecked(&marginal);
    let h_w_given_s = conditional_entropy(batch)?;
    let first = batch.row(0);
    let mi = if batch.rows().all(|row| row == first) {
        0.0
    } else {
        routing::mean_divergence(batch.rows(), &marginal, batch.len())
    };
    Ok(MiEstimate {
        h_w,
        h_w_given_s,
        mi,
        mi_miller_madow: mi + miller_madow_correction(batch.num_experts(), batch.len()),
        marginal,
    })
}

/// Everything reported about `I(S;W)` for one batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiReport {
    pub h_w: f64,
    pub h_w_given_s: f64,
    pub mi: f64,
    pub mi_miller_madow: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
    pub bound_mi: f64,
    /// Set when a negative `mi` was clamped to zero before taking the root.
    pub bound_mi_clamped: bool,
    pub bound_union: f64,
    pub marginal: Vec<f64>,
}

/// Settings for [`mi_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Training sample size `m` used by the bounds.
    pub sample_size: usize,
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

pub fn mi_report(batch: &PosteriorBatch, opts: &ReportOptions) -> Result<MiReport> {
    let est = estimate_mi(batch)?;
    let (ci_low, ci_high) = bootstrap_ci(batch, opts.resamples, opts.level, opts.seed)?;
    Ok(MiReport {
        h_w: est.h_w,
        h_w_given_s: est.h_w_given_s,
        mi: est.mi,
        mi_miller_madow: est.mi_miller_madow,
        ci_low,
        ci_high,
        ci_level: opts.level,
        bootstrap_resamples: opts.resamples,
        bound_mi: mi_bound(est.mi, opts.sample_size)?,
        bound_mi_clamped: est.mi < 0.0,
        bound_union: union_bound(batch.num_experts(), opts.sample_size)?,
        marginal: est.marginal,
    })
}
