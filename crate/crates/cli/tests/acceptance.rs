//! Acceptance checks. Each test is one criterion and prints a single
//! `PASS`/`FAIL` line with the measured values; run with
//! `cargo test --release --test acceptance -- --nocapture --test-threads 1`
//! to see them in order.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use finbank::estimators::miller_madow_correction;
use finbank::rd::uniform_init;
use finbank::{
    alpha_mixture_entropy, alpha_sweep, ba_solve, estimate_mi, gen_bank, log_grid, mi_bound, rd_sweep, routing_mi,
    union_bound, BaOptions, BankGenConfig, ExperimentConfig, GateMatrix, LossMatrix, PosteriorBatch,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs `check`, prints one status line, and fails the test on error.
fn criterion(name: &str, check: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = check();
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("PASS  {name}  ({secs:.2}s)  {detail}"),
        Err(detail) => {
            println!("FAIL  {name}  ({secs:.2}s)  {detail}");
            panic!("{name}: {detail}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name} = {got}, expected {want} ± {tol}"))
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Exact mutual information of the joint `p(s, w) = q(w|s) / N`.
fn joint_mi(conditionals: &[Vec<f64>]) -> f64 {
    let n = conditionals.len() as f64;
    let r = conditionals[0].len();
    let col: Vec<f64> = (0..r).map(|w| conditionals.iter().map(|q| q[w]).sum::<f64>() / n).collect();
    let mut mi = 0.0;
    for q in conditionals {
        for (w, &p) in q.iter().enumerate() {
            if p > 0.0 {
                mi += (p / n) * (p / col[w]).ln();
            }
        }
    }
    mi
}

#[test]
fn closed_form_conditional_entropy() {
    criterion("closed-form conditional entropy", || {
        let h = alpha_mixture_entropy(0.7, 25).map_err(|e| e.to_string())?;
        within("H(W|S) at alpha 0.7, R 25", h, 1.5156, 1e-4)?;
        // The same quantity from an explicit 25-point distribution.
        let mut q = [0.3 / 25.0; 25];
        q[0] += 0.7;
        let direct = -q.iter().map(|&p| plogp(p)).sum::<f64>();
        within("closed form vs direct", h, direct, 1e-12)?;
        Ok(format!("H = {h:.6}"))
    });
}

#[test]
fn bound_arithmetic() {
    criterion("bound arithmetic", || {
        let b07 = mi_bound(1.3778, 256).map_err(|e| e.to_string())?;
        let b10 = mi_bound(2.5280, 256).map_err(|e| e.to_string())?;
        let ub = union_bound(25, 256).map_err(|e| e.to_string())?;
        within("mi_bound(1.3778, 256)", b07, 0.1038, 1e-4)?;
        within("mi_bound(2.5280, 256)", b10, 0.1405, 1e-4)?;
        within("union_bound(25, 256)", ub, 0.0793, 5e-4)?;
        Ok(format!("{b07:.5} {b10:.5} {ub:.5}"))
    });
}

#[test]
fn miller_madow_magnitude() {
    criterion("Miller-Madow magnitude", || {
        let mm = miller_madow_correction(25, 300);
        ensure(mm == 0.04, || format!("(R-1)/(2M) = {mm}, expected exactly 0.04"))?;
        Ok(format!("{mm}"))
    });
}

#[test]
fn exhaustive_oracle_equivalence() {
    criterion("exhaustive oracle equivalence", || {
        let rows = [[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let pool = LossMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let ds = finbank::ExpertBankDataset::new(pool.clone(), pool, finbank::LossKind::ZeroOne, "tiny").unwrap();
        let mut samples = Vec::new();
        for a in 0..4 {
            for b in a + 1..4 {
                samples.push([a, b]);
            }
        }
        let mut worst = 0.0f64;
        for alpha in [0.0, 0.3, 0.7, 1.0] {
            // Oracle posterior: hand-rolled ERM and mixture.
            let oracle: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| {
                    let err: Vec<f64> = (0..3).map(|t| rows[s[0]][t] + rows[s[1]][t]).collect();
                    let mut win = 0;
                    for t in 1..3 {
                        if err[t] < err[win] {
                            win = t;
                        }
                    }
                    (0..3).map(|t| (1.0 - alpha) / 3.0 + if t == win { alpha } else { 0.0 }).collect()
                })
                .collect();
            let exact = joint_mi(&oracle);
            let lib: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| {
                    let idx = finbank::SampleIndices::new(s.to_vec()).unwrap();
                    finbank::alpha_posterior(&ds, &idx, alpha).unwrap().into_probs()
                })
                .collect();
            let est = estimate_mi(&PosteriorBatch::new(lib, alpha).unwrap()).unwrap().mi;
            worst = worst.max((est - exact).abs());
            within(&format!("I(S;W) at alpha {alpha}"), est, exact, 1e-12)?;
        }
        Ok(format!("max error {worst:e}"))
    });
}

#[test]
fn alpha_monotonicity_suite() {
    criterion("alpha-monotonicity suite (50 banks)", || {
        let alphas = [0.0, 0.25, 0.5, 0.7, 0.9, 1.0];
        let strategy = (
            2usize..16,
            40usize..400,
            10usize..200,
            0.0f64..0.4,
            0.0f64..0.3,
            0.0f64..=1.0,
            any::<u64>(),
            (1usize..=30, 10usize..120),
        );
        let mut runner = TestRunner::new(Config {
            cases: 50,
            failure_persistence: None,
            ..Config::default()
        });
        let worst_ratio = std::cell::Cell::new(0.0f64);
        runner
            .run(&strategy, |(r, n_pool, n_test, low, spread, noise, seed, (m, replicas))| {
                let ds = gen_bank(&BankGenConfig {
                    num_experts: r,
                    n_pool,
                    n_test,
                    error_rate_low: low,
                    error_rate_high: low + spread,
                    common_noise_weight: noise,
                    seed,
                })
                .unwrap();
                let cfg = ExperimentConfig {
                    sample_size: m,
                    replicas,
                    master_seed: seed ^ 0x5eed,
                    bootstrap_resamples: 20,
                    ..ExperimentConfig::default()
                };
                let reps = alpha_sweep(&ds, &cfg, &alphas).unwrap();
                for w in reps.windows(2) {
                    prop_assert!(w[1].mi.mi >= w[0].mi.mi, "mi fell from {} to {}", w[0].mi.mi, w[1].mi.mi);
                }
                prop_assert!(reps[0].mi.mi.abs() < 1e-9);

                let last = reps.last().unwrap();
                let mut counts = vec![0usize; r];
                for rec in &last.records {
                    counts[rec.winner] += 1;
                }
                let h = -counts
                    .iter()
                    .map(|&c| plogp(c as f64 / replicas as f64))
                    .sum::<f64>();
                prop_assert!((last.mi.mi - h).abs() < 1e-12, "{} vs winner entropy {h}", last.mi.mi);
                let ratio = last.mi.bound_mi / last.mi.bound_union;
                worst_ratio.set(worst_ratio.get().max(ratio));
                prop_assert!(ratio <= 2.0 + 1e-9, "ratio {ratio}");
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        Ok(format!("largest bound ratio {:.4}", worst_ratio.get()))
    });
}

/// Minimum of the 2x2 gate Lagrangian over a grid of step `1/k` on both rows.
fn grid_minimum(l: &[[f64; 2]; 2], lambda: f64, k: usize) -> f64 {
    // plogp on the half-step grid covers both the rows and their mean.
    let h: Vec<f64> = (0..=2 * k).map(|j| plogp(j as f64 / (2 * k) as f64)).collect();
    let mut best = f64::INFINITY;
    for a in 0..=k {
        let p = a as f64 / k as f64;
        let row0 = p * l[0][0] + (1.0 - p) * l[0][1];
        let h0 = h[2 * a] + h[2 * (k - a)];
        for b in 0..=k {
            let q = b as f64 / k as f64;
            let loss = 0.5 * (row0 + q * l[1][0] + (1.0 - q) * l[1][1]);
            let hm = h[a + b] + h[2 * k - a - b];
            let rate = -hm + 0.5 * (h0 + h[2 * b] + h[2 * (k - b)]);
            best = best.min(loss + lambda * rate);
        }
    }
    best
}

#[test]
fn ba_grid_oracle() {
    criterion("BA oracle (20 random 2x2, 3 lambdas)", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let opts = BaOptions::default();
        let mut worst = 0.0f64;
        for case in 0..20 {
            let l = [[rng.random::<f64>(), rng.random()], [rng.random(), rng.random()]];
            let losses = LossMatrix::from_rows(&[l[0].to_vec(), l[1].to_vec()]).unwrap();
            for lambda in [0.05, 0.2, 1.0] {
                let sol = ba_solve(&losses, lambda, &opts, &uniform_init(2)).map_err(|e| e.to_string())?;
                let grid = grid_minimum(&l, lambda, 1000);
                worst = worst.max((sol.point.lagrangian - grid).abs());
                within(&format!("case {case} lambda {lambda}"), sol.point.lagrangian, grid, 1e-3)?;
                for (k, w) in sol.trace.windows(2).enumerate() {
                    ensure(w[1] <= w[0] + 1e-12, || {
                        format!("case {case} lambda {lambda}: Lagrangian rose at iteration {k}: {} -> {}", w[0], w[1])
                    })?;
                }
            }
        }
        Ok(format!("max |BA - grid| {worst:.2e}"))
    });
}

#[test]
fn ba_endpoints_on_default_bank() {
    criterion("BA endpoints on the default bank", || {
        let ds = gen_bank(&BankGenConfig::default()).unwrap();
        let losses = ds.test();
        let opts = BaOptions::default();
        let init = uniform_init(losses.cols());
        let best_column = losses.column_means().into_iter().fold(f64::INFINITY, f64::min);
        let row_min = losses.mean_row_minimum();

        let hi = ba_solve(losses, 1e6, &opts, &init).map_err(|e| e.to_string())?.point;
        ensure(hi.rate < 1e-6, || format!("rate at 1e6 is {}", hi.rate))?;
        within("distortion at 1e6", hi.distortion, best_column, 1e-9)?;
        let lo = ba_solve(losses, 1e-6, &opts, &init).map_err(|e| e.to_string())?.point;
        within("distortion at 1e-6", lo.distortion, row_min, 1e-9)?;

        let grid = log_grid(1e-3, 1e1, 25).unwrap();
        let pts = rd_sweep(losses, &grid, &opts).map_err(|e| e.to_string())?;
        for w in pts.windows(2) {
            ensure(w[1].rate >= w[0].rate, || "sweep is not sorted by rate".into())?;
            ensure(w[1].distortion <= w[0].distortion + 1e-9, || {
                format!("distortion rose from {} to {} at rate {}", w[0].distortion, w[1].distortion, w[1].rate)
            })?;
        }
        Ok(format!(
            "D(1e6) = {:.6}, D(1e-6) = {:.6}, sweep rate {:.2e}..{:.4}",
            hi.distortion,
            lo.distortion,
            pts[0].rate,
            pts[pts.len() - 1].rate
        ))
    });
}

#[test]
fn routing_mi_oracle() {
    criterion("routing-MI oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for g in 0..100 {
            let (n, r) = (rng.random_range(1..12), rng.random_range(1..8));
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut v: Vec<f64> = (0..r)
                        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
                        .collect();
                    if v.iter().sum::<f64>() == 0.0 {
                        v[rng.random_range(0..r)] = 1.0;
                    }
                    let s: f64 = v.iter().sum();
                    v.iter().map(|x| x / s).collect()
                })
                .collect();
            let got = routing_mi(&GateMatrix::from_rows(&rows).map_err(|e| e.to_string())?);
            let want = joint_mi(&rows);
            worst = worst.max((got - want).abs());
            within(&format!("gate {g}"), got, want, 1e-12)?;
        }
        let bij: Vec<Vec<f64>> = (0..8).map(|i| (0..8).map(|t| (i == t) as u8 as f64).collect()).collect();
        let got = routing_mi(&GateMatrix::from_rows(&bij).unwrap());
        ensure(got == 8f64.ln(), || format!("bijective gate gives {got}, expected ln 8"))?;
        Ok(format!("max error {worst:e}, bijective {got}"))
    });
}

fn finbank(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_finbank"))
        .args(args)
        .args(["--threads", threads])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn cli_determinism_across_threads() {
    criterion("CLI determinism across --threads", || {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = tmp.path();
        let run = |threads: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
            let d = root.join(format!("t{threads}"));
            let p = |name: &str| d.join(name).to_string_lossy().into_owned();
            let (bank, out) = (p("bank"), p("out"));
            finbank(&["gen-bank", "--seed", "7", "--n-pool", "4000", "--n-test", "2000", "--out", &bank], threads)?;
            finbank(&["mi", "--data", &bank, "--seed", "1", "--replicas", "200", "--out", &out], threads)?;
            finbank(&["alpha-sweep", "--data", &bank, "--seed", "1", "--replicas", "200", "--out", &out], threads)?;
            finbank(&["rd-curve", "--data", &bank, "--items", "500", "--points", "9", "--out", &out], threads)?;
            finbank(&["routing-mi", "--data", &bank, "--lambda", "0.05", "--items", "500", "--out", &out], threads)?;
            let mut all = files(Path::new(&bank));
            all.extend(files(Path::new(&out)));
            Ok(all)
        };
        let one = run("1")?;
        let counts = ["2", "3", "8"];
        for t in counts {
            let other = run(t)?;
            ensure(other.len() == one.len(), || format!("file sets differ with --threads {t}"))?;
            for ((name, a), (_, b)) in one.iter().zip(&other) {
                ensure(a == b, || format!("{name} differs between --threads 1 and --threads {t}"))?;
            }
        }
        Ok(format!("{} files identical across --threads 1,{}", one.len(), counts.join(",")))
    });
}
