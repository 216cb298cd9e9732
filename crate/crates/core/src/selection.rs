//! Data-dependent selection over a finite bank: the ERM winner and the
//! α-mixture posterior that interpolates between a uniform pick (α = 0) and
//! the deterministic winner (α = 1).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::dataset::{ExpertBankDataset, SampleIndices};
use crate::error::{Error, Result};

/// Index of the first expert with the smallest value in `errors`.
///
/// Ties are resolved by exact equality in favour of the smallest index; with
/// 0-1 losses the sample errors are multiples of `1/m`, so ties are exact.
pub fn argmin_first(errors: &[f64]) -> usize {
    let mut best = 0;
    for (r, &e) in errors.iter().enumerate().skip(1) {
        if e < errors[best] {
            best = r;
        }
    }
    best
}

/// Empirical-risk-minimizing expert on `sample`, smallest index on ties.
pub fn erm_select(dataset: &ExpertBankDataset, sample: &SampleIndices) -> Result<usize> {
    Ok(argmin_first(&dataset.empirical_errors(sample)?))
}

/// Selection distribution placing `alpha + (1 - alpha)/R` on the winner and
/// `(1 - alpha)/R` on every other expert.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaPosterior {
    probs: Vec<f64>,
    winner: usize,
    alpha: f64,
}

impl AlphaPosterior {
    pub fn new(num_experts: usize, winner: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if num_experts == 0 {
            return Err(Error::Empty("expert bank has no experts"));
        }
        if winner >= num_experts {
            return Err(Error::IndexOutOfRange {
                what: "winner",
                index: winner,
                bound: num_experts,
            });
        }
        let floor = (1.0 - alpha) / num_experts as f64;
        let mut probs = vec![floor; num_experts];
        probs[winner] = alpha + floor;
        Ok(Self {
            probs,
            winner,
            alpha,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn winner(&self) -> usize {
        self.winner
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("{alpha} is outside [0, 1]")));
    }
    Ok(())
}

/// α-mixture posterior around the ERM winner of `sample`.
pub fn alpha_posterior(
    dataset: &ExpertBankDataset,
    sample: &SampleIndices,
    alpha: f64,
) -> Result<AlphaPosterior> {
    check_alpha(alpha)?;
    let winner = erm_select(dataset, sample)?;
    AlphaPosterior::new(dataset.num_experts(), winner, alpha)
}

/// Draws an expert index from the posterior.
pub fn sample_candidate<R: Rng + ?Sized>(posterior: &AlphaPosterior, rng: &mut R) -> usize {
    if posterior.alpha == 1.0 {
        return posterior.winner;
    }
    WeightedIndex::new(&posterior.probs)
        .expect("posterior weights are positive for alpha < 1")
        .sample(rng)
}
