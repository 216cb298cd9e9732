//! Loss matrices and the expert-bank dataset every other module consumes.
//!
//! A dataset holds two row-major matrices, `pool` and `test`, where row `i`
//! is an item and column `t` is an expert: entry `(i, t)` is the loss of
//! expert `t` on item `i`. Producers (the synthetic generator or an external
//! exporter) precompute the losses, so nothing here needs model internals.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether losses are 0-1 indicators or arbitrary values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Bounded,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::ZeroOne => "zero_one",
            LossKind::Bounded => "bounded",
        }
    }
}

/// Dense row-major `items x experts` matrix of losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LossMatrix {
    /// Builds a matrix from row-major data. Entries are not range-checked
    /// here; see [`LossMatrix::validate`].
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "loss matrix data".into(),
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "loss matrix row length".into(),
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Number of items.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of experts.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Mean loss of every expert over all items.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let n = self.rows as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Mean over items of the smallest loss in each row.
    pub fn mean_row_minimum(&self) -> f64 {
        let total: f64 = self
            .iter_rows()
            .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
            .sum();
        total / self.rows as f64
    }

    /// Keeps only the first `n` rows.
    pub fn head(&self, n: usize) -> LossMatrix {
        let n = n.min(self.rows);
        LossMatrix {
            rows: n,
            cols: self.cols,
            data: self.data[..n * self.cols].to_vec(),
        }
    }

    /// Checks the range invariants for the given loss kind.
    pub fn validate(&self, kind: LossKind) -> Result<()> {
        for (idx, &value) in self.data.iter().enumerate() {
            let (row, col) = (idx / self.cols, idx % self.cols);
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::LossOutOfRange { row, col, value });
            }
            if kind == LossKind::ZeroOne && value != 0.0 && value != 1.0 {
                return Err(Error::NonBinaryLoss { row, col, value });
            }
        }
        Ok(())
    }
}

/// Pool and test loss matrices for a bank of `num_experts` experts.
///
/// Immutable after construction; [`ExpertBankDataset::new`] enforces that
/// both matrices are non-empty, share the expert count, and hold losses in
/// `[0, 1]` (exactly 0 or 1 for [`LossKind::ZeroOne`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBankDataset {
    pool: LossMatrix,
    test: LossMatrix,
    loss_kind: LossKind,
    provenance: String,
}

impl ExpertBankDataset {
    pub fn new(
        pool: LossMatrix,
        test: LossMatrix,
        loss_kind: LossKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if pool.cols() == 0 {
            return Err(Error::Empty("expert bank has no experts"));
        }
        if pool.rows() == 0 {
            return Err(Error::Empty("pool matrix has no rows"));
        }
        if test.rows() == 0 {
            return Err(Error::Empty("test matrix has no rows"));
        }
        if test.cols() != pool.cols() {
            return Err(Error::DimensionMismatch {
                what: "test matrix columns".into(),
                expected: pool.cols(),
                found: test.cols(),
            });
        }
        pool.validate(loss_kind)?;
        test.validate(loss_kind)?;
        Ok(Self {
            pool,
            test,
            loss_kind,
            provenance: provenance.into(),
        })
    }

    pub fn num_experts(&self) -> usize {
        self.pool.cols()
    }

    pub fn num_pool(&self) -> usize {
        self.pool.rows()
    }

    pub fn num_test(&self) -> usize {
        self.test.rows()
    }

    pub fn pool(&self) -> &LossMatrix {
        &self.pool
    }

    pub fn test(&self) -> &LossMatrix {
        &self.test
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Test error of every candidate (column means of the test matrix).
    pub fn candidate_test_errors(&self) -> Vec<f64> {
        self.test.column_means()
    }

    /// Empirical error of expert `expert` over the pool rows in `sample`.
    pub fn candidate_empirical_error(&self, sample: &SampleIndices, expert: usize) -> Result<f64> {
        if expert >= self.num_experts() {
            return Err(Error::IndexOutOfRange {
                what: "expert",
                index: expert,
                bound: self.num_experts(),
            });
        }
        sample.check_bound(self.num_pool())?;
        let total: f64 = sample.iter().map(|j| self.pool.get(j, expert)).sum();
        Ok(total / sample.len() as f64)
    }

    /// Empirical errors of all experts over `sample`, in one pass over the rows.
    pub fn empirical_errors(&self, sample: &SampleIndices) -> Result<Vec<f64>> {
        sample.check_bound(self.num_pool())?;
        let mut sums = vec![0.0; self.num_experts()];
        for j in sample.iter() {
            for (s, &v) in sums.iter_mut().zip(self.pool.row(j)) {
                *s += v;
            }
        }
        let m = sample.len() as f64;
        Ok(sums.into_iter().map(|s| s / m).collect())
    }
}

/// A training sample, represented by the distinct pool rows it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndices(Vec<usize>);

impl SampleIndices {
    /// Rejects empty and duplicate index lists. The upper bound is checked
    /// against a dataset when the sample is used.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("sample has no indices"));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(&dup) = indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::param("sample", format!("duplicate index {dup}")));
        }
        Ok(Self(indices))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    fn check_bound(&self, bound: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= bound) {
            Some(&index) => Err(Error::IndexOutOfRange {
                what: "sample row",
                index,
                bound,
            }),
            None => Ok(()),
        }
    }
}
