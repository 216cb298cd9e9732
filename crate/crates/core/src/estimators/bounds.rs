//! Generalization-bound proxies for a finite bank.

use crate::error::{Error, Result};

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        Err(Error::param("sample_size", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// Information bound `sqrt(2 I / m)`. Negative estimates (round-off at
/// α = 0) are clamped to zero so the result is never NaN.
pub fn mi_bound(mi: f64, sample_size: usize) -> Result<f64> {
    check_m(sample_size)?;
    Ok((2.0 * mi.max(0.0) / sample_size as f64).sqrt())
}

/// Union bound over `R` hypotheses, `sqrt(ln R / (2m))`.
pub fn union_bound(num_experts: usize, sample_size: usize) -> Result<f64> {
    check_m(sample_size)?;
    if num_experts == 0 {
        return Err(Error::param("num_experts", "must be at least 1"));
    }
    Ok(((num_experts as f64).ln() / (2.0 * sample_size as f64)).sqrt())
}
