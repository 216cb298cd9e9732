//! Dataset directory I/O and atomic output files.
//!
//! A dataset directory holds `meta.json`, `pool_losses.csv` and
//! `test_losses.csv`. CSVs are UTF-8 with LF line endings, a header row
//! `e0,e1,...`, one row per item, and numbers in their shortest round-trip
//! decimal form, so a load followed by a save reproduces the files byte for
//! byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{ExpertBankDataset, LossKind, LossMatrix};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const POOL_FILE: &str = "pool_losses.csv";
pub const TEST_FILE: &str = "test_losses.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub num_experts: usize,
    pub num_pool: usize,
    pub num_test: usize,
    pub loss_kind: LossKind,
    pub provenance: String,
}

impl DatasetMeta {
    pub fn of(dataset: &ExpertBankDataset) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            num_experts: dataset.num_experts(),
            num_pool: dataset.num_pool(),
            num_test: dataset.num_test(),
            loss_kind: dataset.loss_kind(),
            provenance: dataset.provenance().to_string(),
        }
    }
}

/// Shortest decimal string that parses back to the same `f64`, in exponent
/// form outside `[1e-5, 1e16)`.
pub fn format_f64(value: f64) -> String {
    let a = value.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{value:e}")
    } else {
        format!("{value}")
    }
}

fn header(cols: usize) -> String {
    (0..cols)
        .map(|c| format!("e{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders a matrix in the dataset CSV layout.
pub fn matrix_to_csv(matrix: &LossMatrix) -> String {
    let mut out = header(matrix.cols());
    out.push('\n');
    for row in matrix.iter_rows() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Parses a matrix CSV with header `e0..e{cols-1}`.
pub fn read_matrix_csv(path: &Path, expected_cols: Option<usize>) -> Result<LossMatrix> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| format_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .clone();
    let cols = headers.len();
    if let Some(expected) = expected_cols {
        if cols != expected {
            return Err(Error::DimensionMismatch {
                what: format!("columns of {}", path.display()),
                expected,
                found: cols,
            });
        }
    }
    for (c, name) in headers.iter().enumerate() {
        if name != format!("e{c}") {
            return Err(format_err(format!("header field {c} is {name:?}, expected \"e{c}\"")));
        }
    }
    let mut data = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| format_err(e.to_string()))?;
        if record.len() != cols {
            return Err(Error::DimensionMismatch {
                what: format!("fields in row {rows} of {}", path.display()),
                expected: cols,
                found: record.len(),
            });
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| format_err(format!("row {rows}: cannot parse {field:?} as a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    LossMatrix::new(rows, cols, data)
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<ExpertBankDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(Error::MissingFile(meta_path));
    }
    let meta: DatasetMeta =
        serde_json::from_str(&fs::read_to_string(&meta_path)?).map_err(|e| Error::Format {
            path: meta_path.clone(),
            reason: e.to_string(),
        })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Format {
            path: meta_path,
            reason: format!("unsupported format_version {}", meta.format_version),
        });
    }
    let pool = read_matrix_csv(&dir.join(POOL_FILE), Some(meta.num_experts))?;
    let test = read_matrix_csv(&dir.join(TEST_FILE), Some(meta.num_experts))?;
    for (what, expected, found) in [
        ("rows of pool_losses.csv", meta.num_pool, pool.rows()),
        ("rows of test_losses.csv", meta.num_test, test.rows()),
    ] {
        if expected != found {
            return Err(Error::DimensionMismatch {
                what: what.into(),
                expected,
                found,
            });
        }
    }
    ExpertBankDataset::new(pool, test, meta.loss_kind, meta.provenance)
}

/// Writes a dataset directory, replacing any existing dataset files.
pub fn save_dataset(dataset: &ExpertBankDataset, dir: impl AsRef<Path>) -> Result<()> {
    OutputDir::create(dir, true)?.write_dataset(dataset)
}

/// Writes `contents` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// An output directory that refuses to clobber existing files unless
/// `overwrite` is set.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
    overwrite: bool,
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>, overwrite: bool) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        Ok(Self { root, overwrite })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Fails if any of `names` already exists and overwriting is off. Call
    /// before computing so that a refusal never leaves partial output.
    pub fn check_writable(&self, names: &[&str]) -> Result<()> {
        if self.overwrite {
            return Ok(());
        }
        for name in names {
            let p = self.root.join(name);
            if p.exists() {
                return Err(Error::WouldOverwrite(p));
            }
        }
        Ok(())
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        self.check_writable(&[name])?;
        let path = self.root.join(name);
        write_atomic(&path, contents)?;
        Ok(path)
    }

    pub fn write_dataset(&self, dataset: &ExpertBankDataset) -> Result<()> {
        self.check_writable(&[META_FILE, POOL_FILE, TEST_FILE])?;
        let mut meta = serde_json::to_string_pretty(&DatasetMeta::of(dataset))
            .expect("meta serializes");
        meta.push('\n');
        self.write(POOL_FILE, matrix_to_csv(dataset.pool()).as_bytes())?;
        self.write(TEST_FILE, matrix_to_csv(dataset.test()).as_bytes())?;
        self.write(META_FILE, meta.as_bytes())?;
        Ok(())
    }
}
