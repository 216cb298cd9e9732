//! Plug-in routing information `I(X;T)` of a discrete gate.

use crate::rd::GateMatrix;

/// `(1/N) sum_i sum_t p(t|x_i) ln(p(t|x_i) / pi_t)` where `pi` is the column
/// mean of the gate. Equivalently, the mean KL divergence of each row from
/// the average row.
///
/// Each term is evaluated as `pi_t * phi(p / pi_t - 1)` with
/// `phi(x) = (1 + x) ln(1 + x) - x >= 0`; the added `pi_t - p` terms sum to
/// zero over the items, and the rewrite avoids cancelling first-order terms
/// when rows are close to their mean.
pub fn routing_mi(gate: &GateMatrix) -> f64 {
    mean_divergence(gate.rows(), &gate.column_mean(), gate.num_items())
}

/// Mean KL divergence of `count` rows from `mean`, their column average.
pub(crate) fn mean_divergence<'a>(rows: impl Iterator<Item = &'a [f64]>, mean: &[f64], count: usize) -> f64 {
    let mut total = 0.0;
    for row in rows {
        for (&p, &m) in row.iter().zip(mean) {
            if m > 0.0 {
                total += m * phi(p / m - 1.0);
            } else {
                assert!(p == 0.0, "zero marginal with positive mass");
            }
        }
    }
    total / count as f64
}

/// `(1 + x) ln(1 + x) - x` for `x >= -1`, by series near zero.
fn phi(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // sum_{k>=2} (-1)^k x^k / (k (k - 1))
        let mut term = x * x;
        let mut sum = 0.0;
        for k in 2..10 {
            let kf = k as f64;
            sum += term / (kf * (kf - 1.0));
            term *= -x;
        }
        sum
    } else if x <= -1.0 {
        1.0
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}
