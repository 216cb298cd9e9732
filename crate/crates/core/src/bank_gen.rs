//! Synthetic expert banks with controlled accuracy and diversity.
//!
//! Only error events are simulated. For item `i` and expert `r`, a uniform
//! `z[i][r]` is taken with probability `w` (the common-noise weight) from a
//! difficulty draw `u[i]` shared by all experts, and otherwise from a private
//! draw. Expert `r` errs iff `z[i][r] < eps[r]`. Each `z` is marginally
//! uniform, so every expert errs with probability exactly `eps[r]`, and
//! items with small `u[i]` are hard for every expert that looks at the
//! shared draw. Two experts disagree with probability
//!
//! ```text
//! w^2 |eps_r - eps_s| + (1 - w^2) (eps_r (1 - eps_s) + eps_s (1 - eps_r)).
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExpertBankDataset, LossKind, LossMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankGenConfig {
    pub num_experts: usize,
    pub n_pool: usize,
    pub n_test: usize,
    pub error_rate_low: f64,
    pub error_rate_high: f64,
    pub common_noise_weight: f64,
    pub seed: u64,
}

impl Default for BankGenConfig {
    /// 25 experts with error rates spread over `[0.08, 0.11]` and pairwise
    /// disagreement in roughly `[0.066, 0.094]`.
    fn default() -> Self {
        Self {
            num_experts: 25,
            n_pool: 20_000,
            n_test: 10_000,
            error_rate_low: 0.08,
            error_rate_high: 0.11,
            common_noise_weight: 0.74,
            seed: 0,
        }
    }
}

impl BankGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_experts == 0 {
            return Err(Error::param("num_experts", "must be at least 1"));
        }
        if self.n_pool == 0 || self.n_test == 0 {
            return Err(Error::param("n_pool/n_test", "must be at least 1"));
        }
        let (lo, hi) = (self.error_rate_low, self.error_rate_high);
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::param("error rates", format!("need 0 <= low <= high <= 1, got [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.common_noise_weight) {
            return Err(Error::param(
                "common_noise_weight",
                format!("{} is outside [0, 1]", self.common_noise_weight),
            ));
        }
        Ok(())
    }

    /// Per-expert error probabilities, evenly spaced from low to high.
    pub fn error_rates(&self) -> Vec<f64> {
        let r = self.num_experts;
        if r == 1 {
            return vec![self.error_rate_low];
        }
        let step = (self.error_rate_high - self.error_rate_low) / (r - 1) as f64;
        (0..r)
            .map(|k| if k == r - 1 { self.error_rate_high } else { self.error_rate_low + step * k as f64 })
            .collect()
    }

    /// Expected symmetric-difference rate of the error sets of two experts.
    pub fn expected_disagreement(&self, eps_r: f64, eps_s: f64) -> f64 {
        let w2 = self.common_noise_weight * self.common_noise_weight;
        w2 * (eps_r - eps_s).abs() + (1.0 - w2) * (eps_r * (1.0 - eps_s) + eps_s * (1.0 - eps_r))
    }
}

fn gen_matrix(cfg: &BankGenConfig, eps: &[f64], rows: usize, purpose: Purpose) -> LossMatrix {
    let r = eps.len();
    let data: Vec<f64> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = stream(cfg.seed, purpose, i as u64);
            let shared: f64 = rng.random();
            let row: Vec<f64> = eps
                .iter()
                .map(|&e| {
                    let use_shared = rng.random::<f64>() < cfg.common_noise_weight;
                    let private: f64 = rng.random();
                    let z = if use_shared { shared } else { private };
                    if z < e {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect();
            row
        })
        .collect();
    LossMatrix::new(rows, r, data).expect("rows * experts entries")
}

/// Generates a zero-one dataset, deterministic in `config.seed`.
pub fn gen_bank(config: &BankGenConfig) -> Result<ExpertBankDataset> {
    config.validate()?;
    let eps = config.error_rates();
    let pool = gen_matrix(config, &eps, config.n_pool, Purpose::PoolRow);
    let test = gen_matrix(config, &eps, config.n_test, Purpose::TestRow);
    let provenance = format!(
        "synthetic bank: seed={} experts={} n_pool={} n_test={} error_rate=[{}, {}] common_noise_weight={}; \
         pool and test rows are independent draws",
        config.seed,
        config.num_experts,
        config.n_pool,
        config.n_test,
        config.error_rate_low,
        config.error_rate_high,
        config.common_noise_weight
    );
    ExpertBankDataset::new(pool, test, LossKind::ZeroOne, provenance)
}

/// Pairwise symmetric-difference rates of the experts' test error sets.
///
/// Experts that err on different items must predict differently there, so
/// this lower-bounds the prediction disagreement.
pub fn disagreement_matrix(dataset: &ExpertBankDataset) -> Result<Vec<Vec<f64>>> {
    if dataset.loss_kind() != LossKind::ZeroOne {
        return Err(Error::param("dataset", "disagreement needs zero_one losses"));
    }
    let test = dataset.test();
    let r = dataset.num_experts();
    let mut counts = vec![vec![0usize; r]; r];
    for row in test.iter_rows() {
        for a in 0..r {
            for b in (a + 1)..r {
                if row[a] != row[b] {
                    counts[a][b] += 1;
                }
            }
        }
    }
    let n = test.rows() as f64;
    let mut out = vec![vec![0.0; r]; r];
    for a in 0..r {
        for b in (a + 1)..r {
            let v = counts[a][b] as f64 / n;
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    Ok(out)
}
