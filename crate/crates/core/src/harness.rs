//! Monte Carlo protocol: draw a training sample, score the bank on it, form
//! the α-mixture posterior, draw an expert, and record its train and test
//! errors. Aggregates the mean errors and gaps together with the
//! information estimates of the resulting posterior batch.
//!
//! Replica `i` takes its sample from stream `(seed, Sample, i)` and its
//! expert draw from `(seed, Draw, i)`. An α-sweep therefore reuses the same
//! samples and winners for every α, and only the posterior changes.

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{ExpertBankDataset, SampleIndices};
use crate::error::{Error, Result};
use crate::estimators::{alpha_mixture_entropy, mi_report, MiReport, PosteriorBatch, ReportOptions};
use crate::rng::{stream, Purpose};
use crate::selection::{argmin_first, check_alpha, sample_candidate, AlphaPosterior};

pub const DEFAULT_HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub alpha: f64,
    /// Training sample size `m`.
    pub sample_size: usize,
    /// Monte Carlo replica count `M`.
    pub replicas: usize,
    pub master_seed: u64,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub histogram_bins: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.7,
            sample_size: 256,
            replicas: 300,
            master_seed: 0,
            bootstrap_resamples: 2000,
            ci_level: 0.95,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, dataset: &ExpertBankDataset) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.sample_size == 0 {
            return Err(Error::param("sample_size", "must be at least 1"));
        }
        if self.sample_size > dataset.num_pool() {
            return Err(Error::param(
                "sample_size",
                format!("m = {} exceeds the pool size {}", self.sample_size, dataset.num_pool()),
            ));
        }
        if self.replicas == 0 {
            return Err(Error::param("replicas", "must be at least 1"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::param("bootstrap_resamples", "must be at least 1"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::param("ci_level", format!("{} is outside (0, 1)", self.ci_level)));
        }
        if self.histogram_bins == 0 {
            return Err(Error::param("histogram_bins", "must be at least 1"));
        }
        Ok(())
    }
}

/// Outcome of one replica at one α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicaRecord {
    pub replica_index: usize,
    pub winner: usize,
    pub sampled: usize,
    pub train_error: f64,
    pub test_error: f64,
    pub gap: f64,
}

/// The α-independent part of a replica: its sample and the bank's errors on it.
#[derive(Debug, Clone)]
pub struct ReplicaDraw {
    pub sample: SampleIndices,
    pub train_errors: Vec<f64>,
    pub winner: usize,
}

/// Equal-width histogram; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GapHistogram {
    /// Bins span the observed range. A zero-width range is widened to one
    /// unit centred on the single value.
    pub fn build(values: &[f64], bins: usize) -> Self {
        assert!(bins > 0 && !values.is_empty());
        let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        edges[bins] = hi;
        let mut counts = vec![0usize; bins];
        for &v in values {
            let k = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub num_experts: usize,
    pub mean_train: f64,
    pub mean_test: f64,
    pub mean_gap: f64,
    pub mean_abs_gap: f64,
    /// Standard error of the per-replica gap.
    pub gap_std_error: f64,
    /// `bound_mi / |mean_gap|`, absent when the mean gap is exactly zero.
    pub looseness: Option<f64>,
    pub mi: MiReport,
    pub histogram: GapHistogram,
    #[serde(skip)]
    pub records: Vec<ReplicaRecord>,
}

/// Draws the samples and ERM winners for `replicas` replicas.
pub fn draw_replicas(dataset: &ExpertBankDataset, config: &ExperimentConfig) -> Result<Vec<ReplicaDraw>> {
    config.validate(dataset)?;
    (0..config.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.master_seed, Purpose::Sample, i as u64);
            let rows = index::sample(&mut rng, dataset.num_pool(), config.sample_size).into_vec();
            let sample = SampleIndices::new(rows)?;
            let train_errors = dataset.empirical_errors(&sample)?;
            let winner = argmin_first(&train_errors);
            Ok(ReplicaDraw {
                sample,
                train_errors,
                winner,
            })
        })
        .collect()
}

fn evaluate(
    dataset: &ExpertBankDataset,
    draws: &[ReplicaDraw],
    test_errors: &[f64],
    config: &ExperimentConfig,
    alpha: f64,
) -> Result<ExperimentReport> {
    check_alpha(alpha)?;
    let r = dataset.num_experts();
    let records: Vec<ReplicaRecord> = draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let posterior = AlphaPosterior::new(r, d.winner, alpha)?;
            let sampled = sample_candidate(&posterior, &mut stream(config.master_seed, Purpose::Draw, i as u64));
            let train_error = d.train_errors[sampled];
            let test_error = test_errors[sampled];
            Ok(ReplicaRecord {
                replica_index: i,
                winner: d.winner,
                sampled,
                train_error,
                test_error,
                gap: test_error - train_error,
            })
        })
        .collect::<Result<_>>()?;

    let m = records.len() as f64;
    let mean_train = records.iter().map(|x| x.train_error).sum::<f64>() / m;
    let mean_test = records.iter().map(|x| x.test_error).sum::<f64>() / m;
    let mean_gap = mean_test - mean_train;
    let mean_abs_gap = records.iter().map(|x| x.gap.abs()).sum::<f64>() / m;
    let gap_std_error = if records.len() > 1 {
        let mu = records.iter().map(|x| x.gap).sum::<f64>() / m;
        let var = records.iter().map(|x| (x.gap - mu).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };

    let winners: Vec<usize> = draws.iter().map(|d| d.winner).collect();
    let batch = PosteriorBatch::from_winners(&winners, r, alpha)?;
    debug_assert!(
        (crate::estimators::conditional_entropy(&batch)? - alpha_mixture_entropy(alpha, r)?).abs() < 1e-12
    );
    let mi = mi_report(
        &batch,
        &ReportOptions {
            sample_size: config.sample_size,
            resamples: config.bootstrap_resamples,
            level: config.ci_level,
            seed: config.master_seed,
        },
    )?;
    let gaps: Vec<f64> = records.iter().map(|x| x.gap).collect();
    let histogram = GapHistogram::build(&gaps, config.histogram_bins);
    let looseness = (mean_gap != 0.0).then(|| mi.bound_mi / mean_gap.abs());

    Ok(ExperimentReport {
        config: ExperimentConfig {
            alpha,
            ..config.clone()
        },
        num_experts: r,
        mean_train,
        mean_test,
        mean_gap,
        mean_abs_gap,
        gap_std_error,
        looseness,
        mi,
        histogram,
        records,
    })
}

/// Runs the protocol at `config.alpha`.
pub fn run_experiment(dataset: &ExpertBankDataset, config: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut reports = alpha_sweep(dataset, config, &[config.alpha])?;
    Ok(reports.remove(0))
}

/// Runs the protocol for every α on a shared set of replicas.
pub fn alpha_sweep(
    dataset: &ExpertBankDataset,
    config: &ExperimentConfig,
    alphas: &[f64],
) -> Result<Vec<ExperimentReport>> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha list"));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let draws = draw_replicas(dataset, config)?;
    let test_errors = dataset.candidate_test_errors();
    alphas
        .iter()
        .map(|&a| evaluate(dataset, &draws, &test_errors, config, a))
        .collect()
}
