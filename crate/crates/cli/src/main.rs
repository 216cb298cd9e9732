use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use finbank::io::{read_matrix_csv, OutputDir};
use finbank::rd::uniform_init;
use finbank::report::{alpha_sweep_csv, gap_hist_csv, mi_report_json, rd_curve_csv};
use finbank::{
    alpha_sweep, ba_solve, gen_bank, load_dataset, log_grid, rd_sweep, routing_mi, run_experiment, BaOptions,
    BankGenConfig, ExperimentConfig, GateMatrix, RdPoint,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "finbank", version, about = "Information and routing analysis for finite expert banks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic expert bank.
    GenBank(GenBankArgs),
    /// Run the selection protocol at one α and report I(S;W).
    Mi(MiArgs),
    /// Run the protocol for several α on shared replicas.
    AlphaSweep(SweepArgs),
    /// Trace the empirical rate-distortion curve of an unrestricted gate.
    RdCurve(RdArgs),
    /// Routing information I(X;T) of a gate.
    RoutingMi(RoutingArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace existing output files.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenBankArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    experts: usize,
    #[arg(long, default_value_t = 20_000)]
    n_pool: usize,
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0.08)]
    error_low: f64,
    #[arg(long, default_value_t = 0.11)]
    error_high: f64,
    /// Weight of the shared per-item difficulty variable.
    #[arg(long, default_value_t = 0.74)]
    common_noise: f64,
}

#[derive(Args)]
struct Protocol {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Training sample size.
    #[arg(short = 'm', long = "sample-size", default_value_t = 256)]
    sample_size: usize,
    /// Monte Carlo replicas.
    #[arg(long, default_value_t = 300)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap resamples for the interval on I(S;W).
    #[arg(long, default_value_t = 2000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

impl Protocol {
    fn config(&self, alpha: f64) -> ExperimentConfig {
        ExperimentConfig {
            alpha,
            sample_size: self.sample_size,
            replicas: self.replicas,
            master_seed: self.seed,
            bootstrap_resamples: self.bootstrap,
            ci_level: self.ci_level,
            histogram_bins: self.bins,
        }
    }
}

#[derive(Args)]
struct MiArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    protocol: Protocol,
    #[arg(long, default_value_t = 0.7)]
    alpha: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    protocol: Protocol,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = false, default_value = "0,0.25,0.5,0.7,0.9,1")]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct Solver {
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Leading test rows to route (all rows if the bank has fewer).
    #[arg(long, default_value_t = 2000)]
    items: usize,
}

impl Solver {
    fn options(&self) -> anyhow::Result<BaOptions> {
        if !(self.tol > 0.0) {
            bail!(finbank::Error::InvalidParameter {
                name: "tol",
                reason: format!("{} is not positive", self.tol),
            });
        }
        if self.max_iter == 0 || self.items == 0 {
            bail!(finbank::Error::InvalidParameter {
                name: if self.max_iter == 0 { "max_iter" } else { "items" },
                reason: "must be at least 1".into(),
            });
        }
        Ok(BaOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..BaOptions::default()
        })
    }
}

#[derive(Args)]
struct RdArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e1)]
    lambda_max: f64,
    #[arg(long, default_value_t = 25)]
    points: usize,
    #[command(flatten)]
    solver: Solver,
}

#[derive(Args)]
struct RoutingArgs {
    #[command(flatten)]
    common: Common,
    /// Gate CSV: header e0..e{R-1}, one probability row per item.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    gate: Option<PathBuf>,
    /// Dataset directory; the gate is the solver's fixed point at --lambda.
    #[arg(long, requires = "lambda")]
    data: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    solver: Solver,
}

fn output(common: &Common, names: &[&str]) -> anyhow::Result<OutputDir> {
    let out = OutputDir::create(&common.out, common.force)
        .with_context(|| format!("cannot create {}", common.out.display()))?;
    out.check_writable(names)?;
    Ok(out)
}

fn thread_pool(threads: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let n = match threads {
        Some(0) => bail!(finbank::Error::InvalidParameter {
            name: "threads",
            reason: "must be at least 1".into(),
        }),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn load(path: &Path) -> anyhow::Result<finbank::ExpertBankDataset> {
    Ok(load_dataset(path)?)
}

fn gen_bank_cmd(a: &GenBankArgs) -> anyhow::Result<()> {
    let cfg = BankGenConfig {
        num_experts: a.experts,
        n_pool: a.n_pool,
        n_test: a.n_test,
        error_rate_low: a.error_low,
        error_rate_high: a.error_high,
        common_noise_weight: a.common_noise,
        seed: a.seed,
    };
    cfg.validate()?;
    let out = output(
        &a.common,
        &[finbank::io::META_FILE, finbank::io::POOL_FILE, finbank::io::TEST_FILE],
    )?;
    let ds = thread_pool(a.common.threads)?.install(|| gen_bank(&cfg))?;
    out.write_dataset(&ds)?;
    Ok(())
}

fn mi_cmd(a: &MiArgs) -> anyhow::Result<()> {
    let ds = load(&a.protocol.data)?;
    let cfg = a.protocol.config(a.alpha);
    cfg.validate(&ds)?;
    let out = output(&a.common, &["mi_report.json", "gap_hist.csv"])?;
    let report = thread_pool(a.common.threads)?.install(|| run_experiment(&ds, &cfg))?;
    out.write("mi_report.json", mi_report_json(&report).as_bytes())?;
    out.write("gap_hist.csv", gap_hist_csv(&report.histogram).as_bytes())?;
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> anyhow::Result<()> {
    let ds = load(&a.protocol.data)?;
    for &alpha in &a.alphas {
        a.protocol.config(alpha).validate(&ds)?;
    }
    let cfg = a.protocol.config(a.alphas[0]);
    let out = output(&a.common, &["alpha_sweep.csv"])?;
    let reports = thread_pool(a.common.threads)?.install(|| alpha_sweep(&ds, &cfg, &a.alphas))?;
    out.write("alpha_sweep.csv", alpha_sweep_csv(&reports).as_bytes())?;
    Ok(())
}

fn solver_losses(data: &Path, solver: &Solver) -> anyhow::Result<finbank::LossMatrix> {
    let ds = load(data)?;
    Ok(ds.test().head(solver.items.min(ds.num_test())))
}

fn rd_cmd(a: &RdArgs) -> anyhow::Result<()> {
    let opts = a.solver.options()?;
    let grid = log_grid(a.lambda_min, a.lambda_max, a.points)?;
    let losses = solver_losses(&a.data, &a.solver)?;
    let out = output(&a.common, &["rd_curve.csv"])?;
    let points = thread_pool(a.common.threads)?.install(|| rd_sweep(&losses, &grid, &opts))?;
    out.write("rd_curve.csv", rd_curve_csv(&points).as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct RoutingReport<'a> {
    num_items: usize,
    num_experts: usize,
    routing_mi_nats: f64,
    marginal: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<RdPoint>,
}

fn routing_cmd(a: &RoutingArgs) -> anyhow::Result<()> {
    let out = output(&a.common, &["routing_mi.json"])?;
    let mut solver = None;
    let gate = match (&a.gate, &a.data) {
        (Some(path), _) => {
            let m = read_matrix_csv(path, None)?;
            GateMatrix::new(m.rows(), m.cols(), m.as_slice().to_vec())?
        }
        (None, Some(data)) => {
            let opts = a.solver.options()?;
            let lambda = a.lambda.expect("clap enforces --lambda with --data");
            if !(lambda > 0.0 && lambda.is_finite()) {
                bail!(finbank::Error::InvalidParameter {
                    name: "lambda",
                    reason: format!("{lambda} is not a positive finite number"),
                });
            }
            let losses = solver_losses(data, &a.solver)?;
            let sol = ba_solve(&losses, lambda, &opts, &uniform_init(losses.cols()))?;
            solver = Some(sol.point);
            sol.gate
        }
        (None, None) => unreachable!("clap requires --gate or --data"),
    };
    let report = RoutingReport {
        num_items: gate.num_items(),
        num_experts: gate.num_experts(),
        routing_mi_nats: routing_mi(&gate),
        marginal: gate.marginal(),
        solver,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    out.write("routing_mi.json", text.as_bytes())?;
    Ok(())
}

/// I/O failures exit 1; anything rejected as invalid input exits 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<finbank::Error>() {
        Some(finbank::Error::Io(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenBank(a) => gen_bank_cmd(a),
        Command::Mi(a) => mi_cmd(a),
        Command::AlphaSweep(a) => sweep_cmd(a),
        Command::RdCurve(a) => rd_cmd(a),
        Command::RoutingMi(a) => routing_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
