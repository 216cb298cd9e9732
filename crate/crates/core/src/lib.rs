//! Finite expert-bank toolkit.
//!
//! Works on per-item × per-expert loss matrices and provides
//!
//! * the data-dependent α-mixture selection rule over a finite bank,
//! * plug-in estimates of the information `I(S;W)` the selected index
//!   carries about the training sample, with Miller–Madow correction,
//!   bootstrap intervals, and the information and union bound proxies,
//! * the routing information `I(X;T)` of a discrete gate and a
//!   Blahut–Arimoto solver tracing the empirical rate-distortion curve of an
//!   unrestricted gate over the bank,
//! * a synthetic bank generator and the Monte Carlo harness tying these
//!   together.

pub mod bank_gen;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod rd;
pub mod report;
pub mod rng;
pub mod selection;

pub use bank_gen::{disagreement_matrix, gen_bank, BankGenConfig};
pub use dataset::{ExpertBankDataset, LossKind, LossMatrix, SampleIndices};
pub use error::{Error, Result};
pub use estimators::{
    alpha_mixture_entropy, bootstrap_ci, conditional_entropy, empirical_marginal, entropy, estimate_mi,
    mi_bound, routing_mi, union_bound, MiEstimate, MiReport, PosteriorBatch,
};
pub use harness::{alpha_sweep, run_experiment, ExperimentConfig, ExperimentReport, ReplicaRecord};
pub use io::{load_dataset, save_dataset};
pub use rd::{ba_solve, gate_objective, log_grid, rd_sweep, BaOptions, GateMatrix, RdPoint};
pub use selection::{alpha_posterior, erm_select, sample_candidate, AlphaPosterior};
