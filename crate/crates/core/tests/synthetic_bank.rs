//! The default synthetic bank against its target operating regime, and the
//! protocol run end to end on it.

use finbank::bank_gen::{disagreement_matrix, gen_bank, BankGenConfig};
use finbank::io::{load_dataset, save_dataset, TEST_FILE};
use finbank::rd::{ba_solve, log_grid, monotonicity_violations, rd_sweep, uniform_init, BaOptions};
use finbank::{alpha_sweep, ExperimentConfig};

#[test]
fn default_bank_matches_target_regime() {
    let cfg = BankGenConfig {
        seed: 7,
        ..BankGenConfig::default()
    };
    let ds = gen_bank(&cfg).unwrap();
    let errs = ds.candidate_test_errors();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!((0.08..=0.11).contains(&mean), "mean column error {mean}");

    // Per-expert error within 3 standard errors of its configured rate.
    for (e, eps) in errs.iter().zip(cfg.error_rates()) {
        let se = (eps * (1.0 - eps) / cfg.n_test as f64).sqrt();
        assert!((e - eps).abs() < 3.0 * se, "{e} vs {eps}");
    }

    // Direct count of symmetric differences, independent of the library helper.
    let test = ds.test();
    let r = ds.num_experts();
    let d = disagreement_matrix(&ds).unwrap();
    for a in 0..r {
        for b in 0..r {
            let count = test.iter_rows().filter(|row| row[a] != row[b]).count();
            let rate = count as f64 / test.rows() as f64;
            assert_eq!(d[a][b], rate);
            if a != b {
                assert!((0.06..=0.10).contains(&rate), "pair ({a},{b}) disagreement {rate}");
            }
        }
    }
}

#[test]
fn generated_bank_round_trips() {
    let cfg = BankGenConfig {
        seed: 7,
        n_pool: 500,
        n_test: 300,
        ..BankGenConfig::default()
    };
    let ds = gen_bank(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let bytes = std::fs::read(dir.path().join(TEST_FILE)).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    save_dataset(&back, dir.path()).unwrap();
    assert_eq!(std::fs::read(dir.path().join(TEST_FILE)).unwrap(), bytes);
}

#[test]
fn alpha_zero_has_no_information_and_unbiased_gap() {
    let ds = gen_bank(&BankGenConfig {
        seed: 11,
        n_pool: 5_000,
        n_test: 5_000,
        ..BankGenConfig::default()
    })
    .unwrap();
    let cfg = ExperimentConfig {
        alpha: 0.0,
        replicas: 3_000,
        bootstrap_resamples: 200,
        master_seed: 3,
        ..ExperimentConfig::default()
    };
    let rep = finbank::run_experiment(&ds, &cfg).unwrap();
    assert!(rep.mi.mi.abs() < 1e-9);
    // With W independent of S, E[train error of r] is the pool column mean,
    // so the gap estimates the bank's own pool-to-test offset.
    let pool = ds.pool().column_means();
    let test = ds.candidate_test_errors();
    let offset = test.iter().zip(&pool).map(|(t, p)| t - p).sum::<f64>() / pool.len() as f64;
    assert!(
        (rep.mean_gap - offset).abs() < 3.0 * rep.gap_std_error,
        "{} vs offset {offset}, se {}",
        rep.mean_gap,
        rep.gap_std_error
    );
}

#[test]
fn sweep_on_default_bank_is_monotone_and_looser_than_gap() {
    let ds = gen_bank(&BankGenConfig {
        seed: 7,
        ..BankGenConfig::default()
    })
    .unwrap();
    let cfg = ExperimentConfig {
        master_seed: 1,
        ..ExperimentConfig::default()
    };
    let alphas = [0.0, 0.25, 0.5, 0.7, 0.9, 1.0];
    let reps = alpha_sweep(&ds, &cfg, &alphas).unwrap();
    for w in reps.windows(2) {
        assert!(w[1].mi.mi >= w[0].mi.mi, "{} then {}", w[0].mi.mi, w[1].mi.mi);
    }
    let last = reps.last().unwrap();
    assert!(last.mi.mi <= 25f64.ln() + 1e-9);
    assert!(last.mi.bound_mi / last.mi.bound_union <= 2.0 + 1e-9);
    for rep in &reps {
        assert!(rep.mean_abs_gap >= rep.mean_gap.abs());
        if rep.config.alpha >= 0.25 {
            assert!(rep.mi.bound_mi > rep.mean_gap.abs());
        }
    }
}

#[test]
fn rd_endpoints_on_default_bank() {
    let ds = gen_bank(&BankGenConfig {
        seed: 7,
        ..BankGenConfig::default()
    })
    .unwrap();
    let losses = ds.test().head(2_000);
    let opts = BaOptions::default();
    let init = uniform_init(losses.cols());

    let best_column = losses.column_means().into_iter().fold(f64::INFINITY, f64::min);
    let collapsed = ba_solve(&losses, 1e6, &opts, &init).unwrap().point;
    assert!(collapsed.rate < 1e-6, "{collapsed:?}");
    assert!((collapsed.distortion - best_column).abs() < 1e-9, "{collapsed:?} vs {best_column}");

    let sharp = ba_solve(&losses, 1e-6, &opts, &init).unwrap().point;
    assert!((sharp.distortion - losses.mean_row_minimum()).abs() < 1e-9, "{sharp:?}");

    let pts = rd_sweep(&losses, &log_grid(1e-3, 10.0, 25).unwrap(), &opts).unwrap();
    assert!(monotonicity_violations(&pts, 1e-9).is_empty(), "{pts:#?}");
    assert!(pts.first().unwrap().rate < 1e-3);
    let top = pts.last().unwrap();
    assert!(top.rate >= 0.9 * sharp.rate && top.rate <= sharp.rate + 1e-9, "{top:?} vs {sharp:?}");
    assert!(top.distortion >= losses.mean_row_minimum() - 1e-12);
}
