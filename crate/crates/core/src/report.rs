//! Text renderings of results: `alpha_sweep.csv`, `gap_hist.csv`,
//! `rd_curve.csv` and `mi_report.json`. Every CSV uses LF line endings and
//! shortest round-trip numbers.

use serde::Serialize;

use crate::estimators::MiReport;
use crate::harness::{ExperimentReport, GapHistogram};
use crate::io::format_f64;
use crate::rd::RdPoint;

pub const ALPHA_SWEEP_HEADER: &str =
    "alpha,mi_nats,mi_mm_nats,ci_low,ci_high,bound_mi,bound_union,mean_gap,mean_abs_gap,mean_train,mean_test";
pub const GAP_HIST_HEADER: &str = "bin_left,bin_right,count";
pub const RD_CURVE_HEADER: &str = "lambda,rate_nats,distortion,lagrangian,iterations,converged";

fn line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

pub fn alpha_sweep_csv(reports: &[ExperimentReport]) -> String {
    let mut out = format!("{ALPHA_SWEEP_HEADER}\n");
    for r in reports {
        out += &line(&[
            format_f64(r.config.alpha),
            format_f64(r.mi.mi),
            format_f64(r.mi.mi_miller_madow),
            format_f64(r.mi.ci_low),
            format_f64(r.mi.ci_high),
            format_f64(r.mi.bound_mi),
            format_f64(r.mi.bound_union),
            format_f64(r.mean_gap),
            format_f64(r.mean_abs_gap),
            format_f64(r.mean_train),
            format_f64(r.mean_test),
        ]);
    }
    out
}

pub fn gap_hist_csv(hist: &GapHistogram) -> String {
    let mut out = format!("{GAP_HIST_HEADER}\n");
    for (k, count) in hist.counts.iter().enumerate() {
        out += &line(&[format_f64(hist.edges[k]), format_f64(hist.edges[k + 1]), count.to_string()]);
    }
    out
}

pub fn rd_curve_csv(points: &[RdPoint]) -> String {
    let mut out = format!("{RD_CURVE_HEADER}\n");
    for p in points {
        out += &line(&[
            format_f64(p.lambda),
            format_f64(p.rate),
            format_f64(p.distortion),
            format_f64(p.lagrangian),
            p.iterations.to_string(),
            p.converged.to_string(),
        ]);
    }
    out
}

#[derive(Serialize)]
struct MiReportJson<'a> {
    alpha: f64,
    num_experts: usize,
    sample_size: usize,
    replicas: usize,
    master_seed: u64,
    mean_train: f64,
    mean_test: f64,
    mean_gap: f64,
    mean_abs_gap: f64,
    gap_std_error: f64,
    looseness: Option<f64>,
    #[serde(flatten)]
    mi: &'a MiReport,
}

/// Scalar fields of an experiment and its information report as a JSON
/// object with snake_case keys; entropies are in nats.
pub fn mi_report_json(report: &ExperimentReport) -> String {
    let body = MiReportJson {
        alpha: report.config.alpha,
        num_experts: report.num_experts,
        sample_size: report.config.sample_size,
        replicas: report.config.replicas,
        master_seed: report.config.master_seed,
        mean_train: report.mean_train,
        mean_test: report.mean_test,
        mean_gap: report.mean_gap,
        mean_abs_gap: report.mean_abs_gap,
        gap_std_error: report.gap_std_error,
        looseness: report.looseness,
        mi: &report.mi,
    };
    let mut s = serde_json::to_string_pretty(&body).expect("report serializes");
    s.push('\n');
    s
}
