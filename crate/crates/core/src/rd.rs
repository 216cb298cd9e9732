//! Empirical rate-distortion routing over a fixed expert bank.
//!
//! For a loss matrix `l[i][t]` and multiplier `lambda > 0` the gate objective
//! is
//!
//! ```text
//! L(p) = (1/N) sum_i sum_t p(t|i) l[i][t]  +  lambda * I(X;T)
//! ```
//!
//! over unrestricted row-stochastic gates `p`. The Blahut–Arimoto iteration
//! alternates
//!
//! ```text
//! p(t|i) <- pi_t exp(-l[i][t] / lambda) / Z_i
//! pi_t   <- (1/N) sum_i p(t|i)
//! ```
//!
//! Each marginal `pi` also yields the bound `L(p(pi)) <= -lambda * G(pi)`
//! with `G(pi) = (1/N) sum_i ln Z_i(pi)`, and `G` is concave on the simplex.
//! The solver optionally over-relaxes the marginal update along the BA
//! direction, keeping a step only if it raises `G`; this preserves the
//! monotone decrease of `L` while letting the iteration cross the flat
//! large-`lambda` regime, where a plain BA step moves `pi` by `O(1/lambda)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::LossMatrix;
use crate::error::{Error, Result};
use crate::estimators::routing_mi;

const ROW_SUM_TOL: f64 = 1e-10;

/// Row-stochastic routing matrix `p(t|x_i)` with its expert marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    num_items: usize,
    num_experts: usize,
    cond: Vec<f64>,
    marginal: Vec<f64>,
}

impl GateMatrix {
    pub fn new(num_items: usize, num_experts: usize, cond: Vec<f64>) -> Result<Self> {
        if num_items == 0 || num_experts == 0 {
            return Err(Error::Empty("gate matrix"));
        }
        if cond.len() != num_items * num_experts {
            return Err(Error::DimensionMismatch {
                what: "gate matrix data".into(),
                expected: num_items * num_experts,
                found: cond.len(),
            });
        }
        for (i, row) in cond.chunks_exact(num_experts).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::NotADistribution(format!("gate row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotADistribution(format!("gate row {i} sums to {s}")));
            }
        }
        let mut gate = Self {
            num_items,
            num_experts,
            cond,
            marginal: Vec::new(),
        };
        gate.marginal = gate.column_mean();
        Ok(gate)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * r);
        for row in rows {
            if row.len() != r {
                return Err(Error::DimensionMismatch {
                    what: "gate row length".into(),
                    expected: r,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), r, data)
    }

    /// Constant gate routing every item by `dist`.
    pub fn constant(num_items: usize, dist: &[f64]) -> Result<Self> {
        Self::new(num_items, dist.len(), dist.repeat(num_items))
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cond[i * self.num_experts..(i + 1) * self.num_experts]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.cond.chunks_exact(self.num_experts)
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    /// Freshly computed column mean of the conditional matrix.
    pub fn column_mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_experts];
        for row in self.rows() {
            for (a, &p) in acc.iter_mut().zip(row) {
                *a += p;
            }
        }
        acc.into_iter().map(|a| a / self.num_items as f64).collect()
    }
}

/// Value of the gate objective at one gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateObjective {
    pub avg_loss: f64,
    pub rate: f64,
    pub lagrangian: f64,
}

pub fn gate_objective(gate: &GateMatrix, losses: &LossMatrix, lambda: f64) -> Result<GateObjective> {
    if gate.num_items() != losses.rows() || gate.num_experts() != losses.cols() {
        return Err(Error::DimensionMismatch {
            what: "gate vs loss matrix".into(),
            expected: losses.rows() * losses.cols(),
            found: gate.num_items() * gate.num_experts(),
        });
    }
    let total: f64 = gate
        .rows()
        .zip(losses.iter_rows())
        .map(|(p, l)| p.iter().zip(l).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let avg_loss = total / gate.num_items() as f64;
    let rate = routing_mi(gate);
    Ok(GateObjective {
        avg_loss,
        rate,
        lagrangian: avg_loss + lambda * rate,
    })
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    /// Stop once the Lagrangian decreases by less than this between iterations.
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relax the marginal update (see module docs).
    pub extrapolate: bool,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            extrapolate: true,
        }
    }
}

/// One sample of the empirical rate-distortion curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RdPoint {
    pub lambda: f64,
    pub rate: f64,
    pub distortion: f64,
    pub lagrangian: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Experts whose marginal mass reached zero and left the support.
    pub dropped_experts: usize,
    /// Largest increase of the Lagrangian between consecutive iterations
    /// (zero up to round-off for a correct run).
    pub max_lagrangian_increase: f64,
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct BaSolution {
    pub gate: GateMatrix,
    pub point: RdPoint,
    /// Lagrangian after every iteration, starting with the initial tilt.
    pub trace: Vec<f64>,
}

/// Holds the gate rows of a tilt and `G(pi)`.
struct Tilt {
    cond: Vec<f64>,
    log_partition_mean: f64,
}

/// Tilts `pi` by one row of losses, writing `p(.|i)` into `out` when given,
/// and returns `ln Z_i`.
///
/// For `lambda >= 1` every exponent lies in `[-1, 0]` and the row is
/// evaluated as `ln Z = ln_1p(sum_t pi_t expm1(-l_t / lambda))`, which keeps
/// full precision when `Z` is within `1e-6` of one. Smaller `lambda` uses a
/// per-row max shift in the log domain so that no row can underflow.
fn tilt_row(pi: &[f64], log_pi: &[f64], l: &[f64], lambda: f64, out: Option<&mut [f64]>) -> f64 {
    if lambda >= 1.0 {
        let mut s = 0.0;
        for (&p, &x) in pi.iter().zip(l) {
            s += p * (-x / lambda).exp_m1();
        }
        if let Some(out) = out {
            let mut z = 0.0;
            for ((o, &p), &x) in out.iter_mut().zip(pi).zip(l) {
                *o = p * (-x / lambda).exp();
                z += *o;
            }
            out.iter_mut().for_each(|w| *w /= z);
        }
        return s.ln_1p();
    }
    let max = log_pi
        .iter()
        .zip(l)
        .map(|(lp, x)| lp - x / lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max.is_finite(), "row has no support after tilting");
    let mut z = 0.0;
    match out {
        Some(out) => {
            for ((o, lp), x) in out.iter_mut().zip(log_pi).zip(l) {
                *o = (lp - x / lambda - max).exp();
                z += *o;
            }
            out.iter_mut().for_each(|w| *w /= z);
        }
        None => {
            for (lp, x) in log_pi.iter().zip(l) {
                z += (lp - x / lambda - max).exp();
            }
        }
    }
    max + z.ln()
}

fn log_of(pi: &[f64]) -> Vec<f64> {
    pi.iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect()
}

/// Exponentially tilts `pi` by each row's losses.
fn tilt(losses: &LossMatrix, pi: &[f64], lambda: f64) -> Tilt {
    let r = losses.cols();
    let log_pi = log_of(pi);
    let mut cond = vec![0.0; losses.rows() * r];
    let log_z_total: f64 = losses
        .iter_rows()
        .zip(cond.chunks_exact_mut(r))
        .map(|(l, out)| tilt_row(pi, &log_pi, l, lambda, Some(out)))
        .sum();
    Tilt {
        cond,
        log_partition_mean: log_z_total / losses.rows() as f64,
    }
}

/// `G(pi)` alone, without materializing the gate.
fn log_partition_mean(losses: &LossMatrix, pi: &[f64], lambda: f64) -> f64 {
    let log_pi = log_of(pi);
    let total: f64 = losses.iter_rows().map(|l| tilt_row(pi, &log_pi, l, lambda, None)).sum();
    total / losses.rows() as f64
}

fn column_mean(cond: &[f64], r: usize) -> Vec<f64> {
    let n = cond.len() / r;
    let mut acc = vec![0.0; r];
    for row in cond.chunks_exact(r) {
        for (a, &p) in acc.iter_mut().zip(row) {
            *a += p;
        }
    }
    acc.into_iter().map(|a| a / n as f64).collect()
}

fn normalize(pi: &mut [f64]) {
    pi.iter_mut().for_each(|p| {
        if *p < 0.0 {
            *p = 0.0
        }
    });
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
}

/// A step `s >= 1` along `pi_em - pi` that improves `G` over the plain
/// update: the simplex boundary, or the longest doubling step before it if
/// that does better.
fn extrapolated_marginal(losses: &LossMatrix, pi: &[f64], pi_em: &[f64], lambda: f64) -> Vec<f64> {
    let dir: Vec<f64> = pi_em.iter().zip(pi).map(|(a, b)| a - b).collect();
    let mut boundary = f64::INFINITY;
    let mut boundary_idx = None;
    for (t, (&d, &p)) in dir.iter().zip(pi).enumerate() {
        if d < 0.0 && p > 0.0 {
            let s = p / -d;
            if s < boundary {
                boundary = s;
                boundary_idx = Some(t);
            }
        }
    }
    let at = |s: f64| -> Vec<f64> {
        let mut v: Vec<f64> = pi.iter().zip(&dir).map(|(p, d)| p + s * d).collect();
        if s >= boundary {
            if let Some(t) = boundary_idx {
                v[t] = 0.0;
            }
        }
        normalize(&mut v);
        v
    };

    let mut best = pi_em.to_vec();
    let mut best_g = log_partition_mean(losses, &best, lambda);
    // Near a collapse the gain from a short step can sit below the round-off
    // in G, so the boundary point is tried on its own first.
    if boundary.is_finite() {
        let cand = at(boundary);
        let g = log_partition_mean(losses, &cand, lambda);
        if g > best_g {
            best = cand;
            best_g = g;
        }
    }
    let mut step: f64 = 2.0;
    while step < boundary {
        let cand = at(step);
        let g = log_partition_mean(losses, &cand, lambda);
        if g > best_g {
            best = cand;
            best_g = g;
        } else {
            break;
        }
        step *= 2.0;
    }
    best
}

fn gate_at(losses: &LossMatrix, pi: &[f64], lambda: f64) -> (GateMatrix, GateObjective) {
    let t = tilt(losses, pi, lambda);
    debug_assert!(t.log_partition_mean.is_finite());
    let gate = GateMatrix::new(losses.rows(), losses.cols(), t.cond).expect("tilted rows are distributions");
    let obj = gate_objective(&gate, losses, lambda).expect("dimensions agree");
    (gate, obj)
}

/// `c_t = (1/N) sum_i exp(-l[i][t] / lambda) / Z_i(pi)`. At an optimum
/// `c_t = 1` on the support of `pi` and `c_t <= 1` off it.
fn support_ratios(losses: &LossMatrix, pi: &[f64], lambda: f64) -> Vec<f64> {
    let log_pi = log_of(pi);
    let mut acc = vec![0.0; losses.cols()];
    for l in losses.iter_rows() {
        let log_z = tilt_row(pi, &log_pi, l, lambda, None);
        for (a, &x) in acc.iter_mut().zip(l) {
            *a += (-x / lambda - log_z).exp();
        }
    }
    acc.into_iter().map(|a| a / losses.rows() as f64).collect()
}

/// Moves mass towards experts with `c_t > 1`: dropped ones, or ones left
/// with so little mass that the plain update would take too long to grow
/// them back. Takes the largest of `1/2, 1/4, ...` that lowers the
/// Lagrangian below `current`; `None` when no expert qualifies or no step
/// helps.
fn reinstate(
    losses: &LossMatrix,
    pi: &[f64],
    lambda: f64,
    current: f64,
) -> Option<(Vec<f64>, GateMatrix, GateObjective)> {
    let c = support_ratios(losses, pi, lambda);
    let out: Vec<usize> = (0..pi.len()).filter(|&t| c[t] > 1.0 + 1e-9).collect();
    if out.is_empty() {
        return None;
    }
    let mut eta = 0.5;
    for _ in 0..50 {
        let mut cand: Vec<f64> = pi.iter().map(|p| p * (1.0 - eta)).collect();
        for &t in &out {
            cand[t] = eta / out.len() as f64;
        }
        normalize(&mut cand);
        let (gate, obj) = gate_at(losses, &cand, lambda);
        if obj.lagrangian < current {
            return Some((cand, gate, obj));
        }
        eta *= 0.5;
    }
    None
}

fn validate_inputs(losses: &LossMatrix, lambda: f64, init: &[f64]) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("{lambda} must be positive and finite")));
    }
    if losses.rows() == 0 || losses.cols() == 0 {
        return Err(Error::Empty("loss matrix"));
    }
    if let Some(v) = losses.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::param("losses", format!("entry {v} outside [0, 1]")));
    }
    if init.len() != losses.cols() {
        return Err(Error::DimensionMismatch {
            what: "initial marginal".into(),
            expected: losses.cols(),
            found: init.len(),
        });
    }
    if init.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::param("init", "initial marginal must be strictly positive"));
    }
    Ok(())
}

/// Uniform marginal over `num_experts`.
pub fn uniform_init(num_experts: usize) -> Vec<f64> {
    vec![1.0 / num_experts as f64; num_experts]
}

/// Runs the Blahut–Arimoto iteration from the marginal `init`.
pub fn ba_solve(losses: &LossMatrix, lambda: f64, opts: &BaOptions, init: &[f64]) -> Result<BaSolution> {
    validate_inputs(losses, lambda, init)?;
    let r = losses.cols();
    let mut pi = init.to_vec();
    normalize(&mut pi);

    let (mut gate, mut obj) = gate_at(losses, &pi, lambda);
    let mut trace = vec![obj.lagrangian];
    let mut max_increase: f64 = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let pi_em = column_mean(&gate.cond, r);
        pi = if opts.extrapolate {
            extrapolated_marginal(losses, &pi, &pi_em, lambda)
        } else {
            let mut p = pi_em;
            normalize(&mut p);
            p
        };
        let (next_gate, next_obj) = gate_at(losses, &pi, lambda);
        let decrease = obj.lagrangian - next_obj.lagrangian;
        max_increase = max_increase.max(-decrease);
        trace.push(next_obj.lagrangian);
        gate = next_gate;
        obj = next_obj;
        if decrease < opts.tol {
            if let Some((p, g, o)) = reinstate(losses, &pi, lambda, obj.lagrangian) {
                pi = p;
                gate = g;
                obj = o;
                trace.push(obj.lagrangian);
                continue;
            }
            converged = true;
            break;
        }
    }

    let dropped_experts = pi.iter().filter(|&&p| p == 0.0).count();
    let point = RdPoint {
        lambda,
        rate: obj.rate,
        distortion: obj.avg_loss,
        lagrangian: obj.lagrangian,
        iterations,
        converged,
        dropped_experts,
        max_lagrangian_increase: max_increase,
    };
    Ok(BaSolution { gate, point, trace })
}

/// `points` values spaced evenly in log between `min` and `max` inclusive.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::param("lambda range", format!("need 0 < min <= max, got [{min}, {max}]")));
    }
    match points {
        0 => Err(Error::param("points", "must be at least 1")),
        1 => Ok(vec![min]),
        _ => {
            let (a, b) = (min.ln(), max.ln());
            let step = (b - a) / (points - 1) as f64;
            let mut grid: Vec<f64> = (0..points).map(|k| (a + step * k as f64).exp()).collect();
            grid[0] = min;
            grid[points - 1] = max;
            Ok(grid)
        }
    }
}

/// Solves every `lambda` independently from the uniform marginal and returns
/// the points sorted by rate (ascending), ties by distortion (descending).
pub fn rd_sweep(losses: &LossMatrix, lambdas: &[f64], opts: &BaOptions) -> Result<Vec<RdPoint>> {
    if lambdas.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    let init = uniform_init(losses.cols());
    let mut points = lambdas
        .par_iter()
        .map(|&lambda| ba_solve(losses, lambda, opts, &init).map(|s| s.point))
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.rate
            .total_cmp(&b.rate)
            .then(b.distortion.total_cmp(&a.distortion))
            .then(a.lambda.total_cmp(&b.lambda))
    });
    Ok(points)
}

/// Indices of rate-sorted points whose distortion exceeds the previous
/// point's by more than `tol`.
pub fn monotonicity_violations(points: &[RdPoint], tol: f64) -> Vec<usize> {
    (1..points.len())
        .filter(|&k| points[k].distortion > points[k - 1].distortion + tol)
        .collect()
}

/// Indices of interior rate-sorted points lying above the chord of their
/// neighbours by more than `tol`. Flat or kinked segments are expected with
/// 0-1 losses, so these are diagnostics rather than failures.
pub fn convexity_violations(points: &[RdPoint], tol: f64) -> Vec<usize> {
    (1..points.len().saturating_sub(1))
        .filter(|&k| {
            let (a, b, c) = (&points[k - 1], &points[k], &points[k + 1]);
            let span = c.rate - a.rate;
            if span <= 0.0 {
                return false;
            }
            let w = (b.rate - a.rate) / span;
            let chord = a.distortion + w * (c.distortion - a.distortion);
            b.distortion > chord + tol
        })
        .collect()
}
