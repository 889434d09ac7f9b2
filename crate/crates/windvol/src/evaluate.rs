//! Volatility proxies and out-of-sample forecast scoring. Forecast errors
//! are computed on the logarithmic scale so that multiplicative variance
//! misses are penalized symmetrically, and cells whose proxy is numerically
//! zero are excluded (with a count) rather than floored into the averages.

use serde::Serialize;

use crate::error::{Result, WindvolError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ProxyKind {
    Rv,
    Ewma { lambda: f64 },
    Rv5Sq,
    Rv5Abs,
}

impl std::fmt::Display for ProxyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProxyKind::Rv => write!(f, "rv"),
            ProxyKind::Ewma { lambda } => write!(f, "ewma({lambda})"),
            ProxyKind::Rv5Sq => write!(f, "rv5_sq"),
            ProxyKind::Rv5Abs => write!(f, "rv5_abs"),
        }
    }
}

/// A T x N panel of proxy values; unavailable cells (the seed window of the
/// rolling proxies) hold NaN and are skipped when scoring.
#[derive(Debug, Clone)]
pub struct ProxySeries {
    pub kind: ProxyKind,
    pub values: Vec<f64>,
    pub n_cols: usize,
}

/// Realized-variance proxy: the squared residual.
pub fn rv(eps: &[f64], n_cols: usize) -> ProxySeries {
    ProxySeries {
        kind: ProxyKind::Rv,
        values: eps.iter().map(|v| v * v).collect(),
        n_cols,
    }
}

/// Exponentially weighted moving average of squared residuals,
/// initialized at the first squared residual of each column.
pub fn ewma(eps: &[f64], n_cols: usize, lambda: f64) -> Result<ProxySeries> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(WindvolError::BadLambda(lambda));
    }
    let t_len = eps.len() / n_cols;
    let mut out = vec![0.0; eps.len()];
    for i in 0..n_cols {
        let mut s = eps[i] * eps[i];
        out[i] = s;
        for t in 1..t_len {
            let e2 = eps[t * n_cols + i].powi(2);
            s = lambda * s + (1.0 - lambda) * e2;
            out[t * n_cols + i] = s;
        }
    }
    Ok(ProxySeries {
        kind: ProxyKind::Ewma { lambda },
        values: out,
        n_cols,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rv5Mode {
    Sq,
    Abs,
}

/// Five-day rolling proxy: mean of the last five squared residuals (`Sq`)
/// or the squared mean of the last five absolute residuals (`Abs`). The
/// first four rows are unavailable (NaN).
pub fn rv5(eps: &[f64], n_cols: usize, mode: Rv5Mode) -> Result<ProxySeries> {
    let t_len = eps.len() / n_cols;
    if t_len < 5 {
        return Err(WindvolError::TooShort(t_len));
    }
    let mut out = vec![f64::NAN; eps.len()];
    for i in 0..n_cols {
        for t in 4..t_len {
            let window = (t - 4..=t).map(|s| eps[s * n_cols + i]);
            out[t * n_cols + i] = match mode {
                Rv5Mode::Sq => window.map(|v| v * v).sum::<f64>() / 5.0,
                Rv5Mode::Abs => (window.map(f64::abs).sum::<f64>() / 5.0).powi(2),
            };
        }
    }
    Ok(ProxySeries {
        kind: if mode == Rv5Mode::Sq {
            ProxyKind::Rv5Sq
        } else {
            ProxyKind::Rv5Abs
        },
        values: out,
        n_cols,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Score {
    pub rmsfe: f64,
    pub mafe: f64,
    /// Cells skipped because the proxy was at or below the zero floor.
    pub excluded_zero: usize,
    /// Cells skipped because the proxy was unavailable (rolling seed window).
    pub excluded_unavailable: usize,
    pub n_used: usize,
}

const ZERO_FLOOR: f64 = 1e-12;

/// Log-scale RMSFE and MAFE of a forecast panel against a proxy panel,
/// pooled over all stations and days.
pub fn score(h_hat: &[f64], proxy: &ProxySeries) -> Result<Score> {
    if h_hat.len() != proxy.values.len() {
        return Err(WindvolError::ShapeMismatch(format!(
            "forecast has {} cells, proxy has {}",
            h_hat.len(),
            proxy.values.len()
        )));
    }
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut n_used = 0usize;
    let mut excluded_zero = 0usize;
    let mut excluded_unavailable = 0usize;
    for (&h, &p) in h_hat.iter().zip(&proxy.values) {
        if p.is_nan() {
            excluded_unavailable += 1;
            continue;
        }
        if p <= ZERO_FLOOR {
            excluded_zero += 1;
            continue;
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(WindvolError::InvalidParams(format!(
                "forecast variance must be positive and finite, got {h}"
            )));
        }
        let d = h.ln() - p.ln();
        sq_sum += d * d;
        abs_sum += d.abs();
        n_used += 1;
    }
    if n_used == 0 {
        return Err(WindvolError::AllExcluded);
    }
    Ok(Score {
        rmsfe: (sq_sum / n_used as f64).sqrt(),
        mafe: abs_sum / n_used as f64,
        excluded_zero,
        excluded_unavailable,
        n_used,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreRow {
    pub model: String,
    pub weights: String,
    pub proxy: String,
    pub height: String,
    pub rmsfe: f64,
    pub mafe: f64,
    /// Lowest RMSFE within the (model, proxy, height) block — the layout's
    /// boldface. Ties mark every minimal row.
    pub min_rmsfe: bool,
    pub min_mafe: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastReport {
    pub rows: Vec<ScoreRow>,
}

/// Assemble the comparison table and mark per-block minima, where a block is
/// one (model, proxy, height) combination compared across weight matrices.
pub fn build_report(
    entries: &[(String, String, String, String, f64, f64)],
) -> ForecastReport {
    let mut rows: Vec<ScoreRow> = entries
        .iter()
        .map(|(model, weights, proxy, height, rmsfe, mafe)| ScoreRow {
            model: model.clone(),
            weights: weights.clone(),
            proxy: proxy.clone(),
            height: height.clone(),
            rmsfe: *rmsfe,
            mafe: *mafe,
            min_rmsfe: false,
            min_mafe: false,
        })
        .collect();

    let block_key = |r: &ScoreRow| (r.model.clone(), r.proxy.clone(), r.height.clone());
    let keys: Vec<_> = rows.iter().map(block_key).collect();
    let unique: std::collections::BTreeSet<_> = keys.iter().cloned().collect();
    for key in unique {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| keys[i] == key).collect();
        let min_r = idx.iter().map(|&i| rows[i].rmsfe).fold(f64::INFINITY, f64::min);
        let min_m = idx.iter().map(|&i| rows[i].mafe).fold(f64::INFINITY, f64::min);
        for &i in &idx {
            if rows[i].rmsfe <= min_r {
                rows[i].min_rmsfe = true;
            }
            if rows[i].mafe <= min_m {
                rows[i].min_mafe = true;
            }
        }
    }
    ForecastReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rv_matches_elementwise_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eps: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let p = rv(&eps, 4);
        for (e, v) in eps.iter().zip(&p.values) {
            assert!((v - e * e).abs() < 1e-15);
        }
    }

    #[test]
    fn ewma_hand_recursion() {
        // eps = (1, 0, 0), lambda = 0.5 -> (1, 0.5, 0.25)
        let p = ewma(&[1.0, 0.0, 0.0], 1, 0.5).unwrap();
        assert!((p.values[0] - 1.0).abs() < 1e-15);
        assert!((p.values[1] - 0.5).abs() < 1e-15);
        assert!((p.values[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ewma_constant_is_fixed_point() {
        let eps = vec![1.5; 60];
        let p = ewma(&eps, 3, 0.94).unwrap();
        for v in &p.values {
            assert!((v - 2.25).abs() < 1e-12);
        }
    }

    #[test]
    fn ewma_bad_lambda() {
        assert!(matches!(
            ewma(&[1.0, 2.0], 1, 1.0),
            Err(WindvolError::BadLambda(_))
        ));
        assert!(matches!(
            ewma(&[1.0, 2.0], 1, 0.0),
            Err(WindvolError::BadLambda(_))
        ));
    }

    #[test]
    fn rv5_hand_cases() {
        // constant 2 -> both proxies 4
        let p = rv5(&[2.0; 6], 1, Rv5Mode::Sq).unwrap();
        assert!(p.values[..4].iter().all(|v| v.is_nan()));
        assert!((p.values[4] - 4.0).abs() < 1e-15);
        let p = rv5(&[2.0; 6], 1, Rv5Mode::Abs).unwrap();
        assert!((p.values[5] - 4.0).abs() < 1e-15);

        // (1,1,1,1,-1): sq = 1, abs = 1
        let e = [1.0, 1.0, 1.0, 1.0, -1.0];
        assert!((rv5(&e, 1, Rv5Mode::Sq).unwrap().values[4] - 1.0).abs() < 1e-15);
        assert!((rv5(&e, 1, Rv5Mode::Abs).unwrap().values[4] - 1.0).abs() < 1e-15);

        // (0,0,0,0,5): sq = 5, abs = 1 — robustness difference
        let e = [0.0, 0.0, 0.0, 0.0, 5.0];
        assert!((rv5(&e, 1, Rv5Mode::Sq).unwrap().values[4] - 5.0).abs() < 1e-15);
        assert!((rv5(&e, 1, Rv5Mode::Abs).unwrap().values[4] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rv5_too_short() {
        assert!(matches!(
            rv5(&[1.0; 4], 1, Rv5Mode::Sq),
            Err(WindvolError::TooShort(_))
        ));
    }

    #[test]
    fn rv5_no_lookahead() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut eps: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
        let before = rv5(&eps, 1, Rv5Mode::Sq).unwrap();
        eps[15] = 99.0;
        let after = rv5(&eps, 1, Rv5Mode::Sq).unwrap();
        for t in 0..15 {
            let (b, a) = (before.values[t], after.values[t]);
            assert!(b.is_nan() && a.is_nan() || (b - a).abs() < 1e-15);
        }
        assert!((before.values[15] - after.values[15]).abs() > 1.0);
    }

    #[test]
    fn score_identity_and_constant_ratio() {
        let proxy = ProxySeries {
            kind: ProxyKind::Rv,
            values: vec![0.5, 1.0, 2.0, 4.0],
            n_cols: 2,
        };
        let s = score(&proxy.values.clone(), &proxy).unwrap();
        assert!(s.rmsfe.abs() < 1e-15 && s.mafe.abs() < 1e-15);

        let scaled: Vec<f64> = proxy.values.iter().map(|v| v * std::f64::consts::E).collect();
        let s = score(&scaled, &proxy).unwrap();
        assert!((s.rmsfe - 1.0).abs() < 1e-12);
        assert!((s.mafe - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_excludes_zero_proxy() {
        let proxy = ProxySeries {
            kind: ProxyKind::Rv,
            values: vec![1.0, 0.0, 2.0],
            n_cols: 3,
        };
        let s = score(&[1.0, 1.0, 2.0], &proxy).unwrap();
        assert_eq!(s.excluded_zero, 1);
        assert_eq!(s.n_used, 2);
        assert!(s.rmsfe.abs() < 1e-15);
    }

    #[test]
    fn score_all_excluded() {
        let proxy = ProxySeries {
            kind: ProxyKind::Rv,
            values: vec![0.0, 0.0],
            n_cols: 2,
        };
        assert!(matches!(
            score(&[1.0, 1.0], &proxy),
            Err(WindvolError::AllExcluded)
        ));
    }

    #[test]
    fn rmsfe_dominates_mafe() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = 50;
            let proxy = ProxySeries {
                kind: ProxyKind::Rv,
                values: (0..n).map(|_| 0.1 + rng.gen::<f64>()).collect(),
                n_cols: 5,
            };
            let h: Vec<f64> = (0..n).map(|_| 0.1 + rng.gen::<f64>()).collect();
            let s = score(&h, &proxy).unwrap();
            assert!(s.rmsfe >= s.mafe - 1e-14);
        }
    }

    #[test]
    fn score_symmetric_in_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a: Vec<f64> = (0..30).map(|_| 0.1 + rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..30).map(|_| 0.1 + rng.gen::<f64>()).collect();
        let pa = ProxySeries {
            kind: ProxyKind::Rv,
            values: a.clone(),
            n_cols: 3,
        };
        let pb = ProxySeries {
            kind: ProxyKind::Rv,
            values: b.clone(),
            n_cols: 3,
        };
        let s1 = score(&b, &pa).unwrap();
        let s2 = score(&a, &pb).unwrap();
        assert!((s1.rmsfe - s2.rmsfe).abs() < 1e-14);
        assert!((s1.mafe - s2.mafe).abs() < 1e-14);
    }

    #[test]
    fn report_marks_block_minima() {
        let entries = vec![
            ("garch".into(), "knn".into(), "rv".into(), "ws10".into(), 1.0, 0.8),
            ("garch".into(), "dist".into(), "rv".into(), "ws10".into(), 0.9, 0.85),
            ("garch".into(), "dir".into(), "rv".into(), "ws10".into(), 0.9, 0.9),
            ("sdpd".into(), "knn".into(), "rv".into(), "ws10".into(), 2.0, 1.5),
        ];
        let report = build_report(&entries);
        assert!(!report.rows[0].min_rmsfe && report.rows[0].min_mafe);
        assert!(report.rows[1].min_rmsfe && !report.rows[1].min_mafe);
        assert!(report.rows[2].min_rmsfe && !report.rows[2].min_mafe); // tie rule
        assert!(report.rows[3].min_rmsfe && report.rows[3].min_mafe); // singleton block
    }
}
