//! Acceptance gate: one test per release criterion, with every tolerance
//! pinned here. Each test prints a single PASS line so the suite output
//! doubles as a checklist.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use windvol::diagnostics;
use windvol::evaluate::{self, ProxyKind, ProxySeries};
use windvol::ingest::{self, Station, Variable};
use windvol::mvlogarch;
use windvol::pipeline::{ExperimentConfig, Pipeline};
use windvol::preprocess;
use windvol::sdpd;
use windvol::stgarch::{self, StarmaGarchParams};
use windvol::unigarch::{self, EgarchParams, GarchParams};
use windvol::weights::{self, DirectionalParams};

fn random_stations(n: usize, seed: u64) -> Vec<Station> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Station {
            id: format!("s{i:03}"),
            lon: 0.0,
            lat: 0.0,
            x: rng.gen::<f64>() * 1.5e5,
            y: rng.gen::<f64>() * 1.5e5,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence of every likelihood and the spatial statistic
// ---------------------------------------------------------------------------

const ORACLE_TOL: f64 = 1e-9;

#[test]
fn criterion_1_oracle_equivalence() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    // garch_loglik vs direct recursion
    for _ in 0..5 {
        let p = GarchParams {
            omega: 0.05 + rng.gen::<f64>() * 0.1,
            alpha: 0.05 + rng.gen::<f64>() * 0.1,
            beta: 0.5 + rng.gen::<f64>() * 0.3,
        };
        let e: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() - 0.5).collect();
        let h0 = 0.2;
        let got = unigarch::garch_loglik(&p, &e, h0);
        let mut h = h0;
        let mut want = 0.0;
        for (t, &et) in e.iter().enumerate() {
            if t > 0 {
                h = p.omega + p.alpha * e[t - 1] * e[t - 1] + p.beta * h;
            }
            want += -0.5 * (ln2pi + h.ln() + et * et / h);
        }
        assert!((got - want).abs() <= ORACLE_TOL);
    }

    // egarch_loglik vs direct recursion
    for _ in 0..5 {
        let p = EgarchParams {
            omega: -0.2 + rng.gen::<f64>() * 0.2,
            alpha: 0.1,
            gamma: -0.05,
            beta: 0.9,
        };
        let e: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() - 0.5).collect();
        let ln_h0 = (0.1f64).ln();
        let got = unigarch::egarch_loglik(&p, &e, ln_h0);
        let k = (2.0 / std::f64::consts::PI).sqrt();
        let mut ln_h = ln_h0;
        let mut want = 0.0;
        for (t, &et) in e.iter().enumerate() {
            if t > 0 {
                let z = e[t - 1] / ln_h.exp().sqrt();
                ln_h = p.omega + p.beta * ln_h + p.alpha * (z.abs() - k) + p.gamma * z;
            }
            let h = ln_h.exp();
            want += -0.5 * (ln2pi + h.ln() + et * et / h);
        }
        assert!((got - want).abs() <= ORACLE_TOL);
    }

    // st_loglik vs dense double loop
    for trial in 0..3 {
        let n = 5;
        let t_len = 50;
        let w = weights::knn_weights(&random_stations(n, 30 + trial), 2).unwrap();
        let wd = w.to_dense();
        let p = StarmaGarchParams {
            mu: 0.02,
            phi: -0.3,
            theta: 0.25,
            omega: 0.15,
            alpha: 0.1,
            beta: 0.5,
        };
        let e: Vec<f64> = (0..t_len * n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let got = stgarch::st_loglik(&p, &w, &e).unwrap();

        let mut eps = vec![vec![0.0; n]; t_len];
        for i in 0..n {
            eps[0][i] = e[i] - p.mu;
        }
        for t in 1..t_len {
            for i in 0..n {
                let mut sdev = 0.0;
                let mut seps = 0.0;
                for j in 0..n {
                    sdev += wd[(i, j)] * (e[(t - 1) * n + j] - p.mu);
                    seps += wd[(i, j)] * eps[t - 1][j];
                }
                eps[t][i] = (e[t * n + i] - p.mu) - p.phi * sdev - p.theta * seps;
            }
        }
        let mut h = vec![vec![0.0; n]; t_len];
        for i in 0..n {
            let mean: f64 = (0..t_len).map(|t| eps[t][i]).sum::<f64>() / t_len as f64;
            h[0][i] = ((0..t_len).map(|t| (eps[t][i] - mean).powi(2)).sum::<f64>()
                / (t_len as f64 - 1.0))
                .max(1e-12);
        }
        for t in 1..t_len {
            for i in 0..n {
                let mut ssq = 0.0;
                let mut sh = 0.0;
                for j in 0..n {
                    ssq += wd[(i, j)] * eps[t - 1][j] * eps[t - 1][j];
                    sh += wd[(i, j)] * h[t - 1][j];
                }
                h[t][i] = p.omega + p.alpha * ssq + p.beta * sh;
            }
        }
        let mut want = 0.0;
        for t in 0..t_len {
            for i in 0..n {
                want += -0.5 * (ln2pi + h[t][i].ln() + eps[t][i] * eps[t][i] / h[t][i]);
            }
        }
        assert!((got - want).abs() <= ORACLE_TOL);
    }

    // concentrated SDPD likelihood at fixed rho vs naive reconstruction:
    // verified through the determinant identity plus OLS orthogonality in the
    // module tests; here check the log-determinant term directly
    let w = weights::knn_weights(&random_stations(20, 40), 4).unwrap();
    let wd = w.to_dense();
    for rho in [-0.6, 0.0, 0.7] {
        let got = sdpd::log_abs_det_i_minus_rho_w(&wd, rho).unwrap();
        let n = 20;
        let mut a = nalgebra::DMatrix::<f64>::identity(n, n);
        a -= &wd * rho;
        let want = a.determinant().abs().ln();
        assert!((got - want).abs() <= ORACLE_TOL);
    }

    // morans_i vs the textbook double sum
    for trial in 0..3 {
        let n = 50;
        let w = weights::knn_weights(&random_stations(n, 50 + trial), 5).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let got = diagnostics::morans_i(&x, &w).unwrap().statistic;
        let mean = x.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut s0 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let wij = w.get(i, j);
                num += wij * (x[i] - mean) * (x[j] - mean);
                s0 += wij;
            }
        }
        let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let want = (n as f64 / s0) * num / denom;
        assert!((got - want).abs() <= ORACLE_TOL);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 1 (oracle equivalence, tol {ORACLE_TOL}): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 2. Simulation recovery: joint spatiotemporal model
// ---------------------------------------------------------------------------

const ST_TOL: f64 = 0.05;
const ST_SEEDS: u64 = 10;
const ST_MIN_PASS: usize = 9;

#[test]
fn criterion_2_starmagarch_recovery() {
    let start = std::time::Instant::now();
    let truth = StarmaGarchParams {
        mu: -0.0061,
        phi: -0.5969,
        theta: 0.6601,
        omega: 0.0962,
        alpha: 0.2040,
        beta: 0.5018,
    };
    // paired network: all W eigenvalues sit at +/-1, the spectrum where the
    // spatial ARMA pair is identified; smoothing matrices (their interior
    // eigenvalues near zero) leave (phi, theta) on a flat ridge at this T
    let rows: Vec<Vec<(usize, f64)>> = (0..30).map(|i| vec![(i ^ 1, 1.0)]).collect();
    let w = weights::WeightMatrix::from_raw(30, rows, weights::WeightKind::Custom);
    let mut passes = 0;
    for seed in 0..ST_SEEDS {
        let e = stgarch::st_simulate(&truth, &w, 2000, 300, 1000 + seed).unwrap();
        let fit = stgarch::fit_st(&e, &w).unwrap();
        let est = fit.params.as_array();
        let tru = truth.as_array();
        let ok = (0..6).all(|k| (est[k] - tru[k]).abs() < ST_TOL);
        if ok {
            passes += 1;
        }
    }
    assert!(
        passes >= ST_MIN_PASS,
        "only {passes}/{ST_SEEDS} seeds within {ST_TOL}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!(
        "criterion 2 (joint model recovery, {passes}/{ST_SEEDS} seeds within {ST_TOL}): PASS in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 3. Simulation recovery: univariate models
// ---------------------------------------------------------------------------

const UNI_TOL: f64 = 0.05;

#[test]
fn criterion_3_univariate_recovery() {
    let start = std::time::Instant::now();
    let g_truth = GarchParams {
        omega: 0.1,
        alpha: 0.1,
        beta: 0.8,
    };
    let e_truth = EgarchParams {
        omega: -0.1,
        alpha: 0.15,
        gamma: -0.05,
        beta: 0.9,
    };
    // Monte Carlo recovery over 20 seeds: the per-parameter mean estimate
    // must land within UNI_TOL of the truth (a bias check; single draws sit
    // at ~2-3 sigma of it by construction at T=5000)
    let mut g_mean = [0.0f64; 3];
    let mut e_mean = [0.0f64; 4];
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let e = unigarch::simulate_garch(&g_truth, 5000, &mut rng);
        let fit = unigarch::fit_garch(&e).unwrap();
        assert!(fit.converged, "garch seed {seed} did not converge");
        for (acc, v) in g_mean.iter_mut().zip([fit.omega, fit.alpha, fit.beta]) {
            *acc += v / 20.0;
        }

        let e = unigarch::simulate_egarch(&e_truth, 5000, &mut rng);
        let fit = unigarch::fit_egarch(&e).unwrap();
        assert!(fit.converged, "egarch seed {seed} did not converge");
        for (acc, v) in e_mean
            .iter_mut()
            .zip([fit.omega, fit.alpha, fit.gamma, fit.beta])
        {
            *acc += v / 20.0;
        }
    }
    for (got, want) in g_mean.iter().zip([0.1, 0.1, 0.8]) {
        assert!((got - want).abs() < UNI_TOL, "garch mean {got} vs {want}");
    }
    for (got, want) in e_mean.iter().zip([-0.1, 0.15, -0.05, 0.9]) {
        assert!((got - want).abs() < UNI_TOL, "egarch mean {got} vs {want}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!("criterion 3 (univariate recovery within {UNI_TOL}, 20 seeds): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 4. Simulation recovery: bivariate log-ARCH system
// ---------------------------------------------------------------------------

const MV_TOL: f64 = 0.08;

#[test]
fn criterion_4_mv_recovery() {
    let start = std::time::Instant::now();
    let b = [-0.835, -0.372];
    let psi = [[0.558, 0.163], [0.135, 0.577]];
    let pi = [[0.067, 0.054], [0.022, 0.113]];
    let w = weights::distance_band_weights(&random_stations(20, 3), 5e4);
    let y = mvlogarch::simulate_system(&b, &psi, &pi, &[1.0, 1.0], &w, 1500, 200, 77).unwrap();
    let fit = mvlogarch::fit_spatial_system(&y, &w).unwrap();
    for k in 0..2 {
        assert!((fit.b[k] - b[k]).abs() < MV_TOL, "b[{k}] = {}", fit.b[k]);
        for l in 0..2 {
            assert!(
                (fit.psi[l][k] - psi[l][k]).abs() < MV_TOL,
                "psi[{l}][{k}] = {}",
                fit.psi[l][k]
            );
            assert!(
                (fit.pi[l][k] - pi[l][k]).abs() < MV_TOL,
                "pi[{l}][{k}] = {}",
                fit.pi[l][k]
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:?}");
    println!("criterion 4 (bivariate system recovery within {MV_TOL}): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 5. SDPD filtering removes spatial structure that AR(1) leaves behind
// ---------------------------------------------------------------------------

const MORAN_GAP_PP: f64 = 20.0;

#[test]
fn criterion_5_sdpd_vs_ar1_moran() {
    let start = std::time::Instant::now();
    let n = 20;
    let w = weights::knn_weights(&random_stations(n, 4), 5).unwrap();
    // stationarity for row-stochastic W needs (gamma + lambda)/(1 - rho) < 1
    let gammas = vec![0.2; n];
    let intercepts = vec![0.0; n];
    let y = sdpd::sdpd_simulate(0.6, &gammas, 0.1, &intercepts, 0.5, &w, 800, 200, 9).unwrap();

    // AR(1) track: per-station own-lag filter only
    let mut ar1_resid = vec![0.0; 799 * n];
    for i in 0..n {
        let col: Vec<f64> = (0..800).map(|t| y[t * n + i]).collect();
        let fit = preprocess::fit_ar1(&col).unwrap();
        for t in 0..799 {
            ar1_resid[t * n + i] = fit.residuals[t];
        }
    }
    // SDPD track
    let fit = sdpd::fit_sdpd(&y, &w).unwrap();
    let sdpd_resid = &fit.residuals;

    // share of daily cross-sections with no detectable spatial
    // autocorrelation at the 5% level
    let pass_share = |resid: &[f64]| -> f64 {
        let days = resid.len() / n;
        let mut pass = 0;
        for t in 0..days {
            let x = &resid[t * n..(t + 1) * n];
            let r = diagnostics::morans_i(x, &w).unwrap();
            if r.p_value > 0.05 {
                pass += 1;
            }
        }
        100.0 * pass as f64 / days as f64
    };
    let ar1_pass = pass_share(&ar1_resid);
    let sdpd_pass = pass_share(sdpd_resid);
    assert!(
        sdpd_pass - ar1_pass >= MORAN_GAP_PP,
        "pass rates: sdpd {sdpd_pass:.1}% vs ar1 {ar1_pass:.1}%"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "criterion 5 (Moran pass rate: sdpd {sdpd_pass:.1}% vs ar1 {ar1_pass:.1}%, gap >= {MORAN_GAP_PP}pp): PASS in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 6. Metric identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    // RMSFE >= MAFE on random score rows
    for _ in 0..50 {
        let proxy = ProxySeries {
            kind: ProxyKind::Rv,
            values: (0..40).map(|_| 0.05 + rng.gen::<f64>()).collect(),
            n_cols: 4,
        };
        let h: Vec<f64> = (0..40).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let s = evaluate::score(&h, &proxy).unwrap();
        assert!(s.rmsfe >= s.mafe - 1e-14);
    }

    // score(h, h) = (0, 0)
    let proxy = ProxySeries {
        kind: ProxyKind::Rv,
        values: vec![0.3, 0.6, 1.2, 2.4],
        n_cols: 2,
    };
    let s = evaluate::score(&proxy.values.clone(), &proxy).unwrap();
    assert!(s.rmsfe.abs() <= 1e-12 && s.mafe.abs() <= 1e-12);

    // EWMA fixed point and hand recursion, exact to 1e-12
    let p = evaluate::ewma(&[1.5f64; 30], 1, 0.94).unwrap();
    assert!(p.values.iter().all(|v| (v - 2.25).abs() <= 1e-12));
    let p = evaluate::ewma(&[1.0, 0.0, 0.0], 1, 0.5).unwrap();
    for (got, want) in p.values.iter().zip([1.0, 0.5, 0.25]) {
        assert!((got - want).abs() <= 1e-12);
    }
    println!("criterion 6 (metric identities, tol 1e-12): PASS");
}

// ---------------------------------------------------------------------------
// 7. Weight-matrix invariants over random networks
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_weight_invariants() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..200u64 {
        let n = 3 + (rng.gen::<u64>() % 28) as usize;
        let stations = random_stations(n, 7000 + trial);
        let k = 1 + (rng.gen::<u64>() as usize % (n - 1)).min(7);

        let w = weights::knn_weights(&stations, k).unwrap();
        for i in 0..n {
            let rs = w.row_sum(i);
            assert!((rs - 1.0).abs() < 1e-12 || rs == 0.0);
            assert_eq!(w.rows[i].len(), k, "knn row cardinality");
        }

        let radius = 2e4 + rng.gen::<f64>() * 8e4;
        let w = weights::distance_band_weights(&stations, radius);
        for i in 0..n {
            let rs = w.row_sum(i);
            assert!((rs - 1.0).abs() < 1e-12 || rs == 0.0);
        }

        let params = DirectionalParams {
            prevailing_dir: vec![rng.gen::<f64>() * 360.0; n],
            half_angle_deg: 45.0,
            cutoff_m: 6e4,
            decay_m: 5e4,
        };
        let w = weights::directional_weights(&stations, &params).unwrap();
        let d = weights::pairwise_distances(&stations);
        for i in 0..n {
            let rs = w.row_sum(i);
            assert!((rs - 1.0).abs() < 1e-12 || rs == 0.0);
            for &(j, wij) in &w.rows[i] {
                assert!(wij > 0.0);
                // never a neighbour outside the cutoff
                assert!(d[i * n + j] <= params.cutoff_m);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 7 (weight invariants over 200 networks): PASS in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// 8. Conditional full-data reproduction checks
// ---------------------------------------------------------------------------

/// Expected pooled statistics for the real 141-station panels.
const TABLE_STATS: [(&str, [f64; 6]); 2] = [
    ("ws10", [1.313, 1.475, 0.717, 0.689, 0.2309, 7.036]),
    ("ws100", [2.542, 2.822, 1.417, 1.217, 0.3847, 11.17]),
];
const STATS_TOL: f64 = 0.001;

#[test]
fn criterion_8_real_data_reproduction() {
    // the dataset is user-supplied; point WINDVOL_DATA_DIR at a directory
    // containing ws10.csv and ws100.csv in the panel schema
    let Some(dir) = std::env::var_os("WINDVOL_DATA_DIR") else {
        println!(
            "criterion 8 (real-data reproduction): SKIPPED — set WINDVOL_DATA_DIR to a \
             directory with ws10.csv/ws100.csv exported from the public Agrimonia dataset"
        );
        return;
    };
    let dir = std::path::PathBuf::from(dir);
    for (var, expect) in TABLE_STATS {
        let path = dir.join(format!("{var}.csv"));
        let panel = ingest::load_panel(&path, var.parse::<Variable>().unwrap()).unwrap();
        let s = ingest::descriptive_stats(&panel).unwrap();
        let got = [s.median, s.mean, s.iqr, s.sd, s.min, s.max];
        for (g, e) in got.iter().zip(expect) {
            assert!(
                (g - e).abs() <= STATS_TOL,
                "{var}: computed {g} vs expected {e}"
            );
        }

        // spatial autocorrelation of time-averaged residuals must be
        // positive, significant, and weaker than for the squared residuals
        let rp = preprocess::preprocess_panel(&panel, 365).unwrap();
        let n = rp.n_stations();
        let t = rp.n_rows();
        let mean_res: Vec<f64> = (0..n)
            .map(|i| (0..t).map(|s| rp.residuals[s * n + i]).sum::<f64>() / t as f64)
            .collect();
        let mean_sq: Vec<f64> = (0..n)
            .map(|i| (0..t).map(|s| rp.residuals[s * n + i].powi(2)).sum::<f64>() / t as f64)
            .collect();
        let w = weights::distance_band_weights(&panel.stations, 55_000.0);
        let i_mean = diagnostics::morans_i(&mean_res, &w).unwrap();
        let i_sq = diagnostics::morans_i(&mean_sq, &w).unwrap();
        assert!(i_mean.statistic > 0.0 && i_mean.p_value < 0.05);
        assert!(
            i_sq.statistic > i_mean.statistic,
            "expected I(mean squared) > I(mean): {} vs {}",
            i_sq.statistic,
            i_mean.statistic
        );
    }
    println!("criterion 8 (real-data reproduction, stats tol {STATS_TOL}): PASS");
}

// ---------------------------------------------------------------------------
// 9. Pipeline determinism across runs and thread counts
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_pipeline_determinism() {
    let start = std::time::Instant::now();

    let run = |dir: &std::path::Path, threads: usize| {
        let mut cfg = ExperimentConfig::synthetic_preset(dir);
        cfg.data.synthetic_stations = 4;
        cfg.data.synthetic_days = 760;
        cfg.threads = threads;
        cfg.weights.truncate(2);
        let p = Pipeline::new(cfg).unwrap();
        p.run_all().unwrap();
    };

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let d3 = tempfile::tempdir().unwrap();
    run(d1.path(), 1);
    run(d2.path(), 1);
    run(d3.path(), 3);

    let mut names: Vec<String> = std::fs::read_dir(d1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.iter().any(|f| f == "report.csv"));
    for name in &names {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        let c = std::fs::read(d3.path().join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
        assert!(a == c, "{name} differs across thread counts");
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 9 (determinism over {} artifacts, 2 runs + thread variation): PASS in {elapsed:?}",
        names.len()
    );
}
