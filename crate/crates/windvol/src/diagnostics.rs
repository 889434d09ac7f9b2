//! Statistical tests used across the pipeline: Ljung-Box, ARCH-LM,
//! Moran's I under randomization, excess kurtosis, and pass-rate
//! aggregation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Result, WindvolError};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Degrees of freedom (portmanteau tests) or the Z score (Moran's I).
    pub df_or_z: f64,
    pub p_value: f64,
    /// Isolated nodes dropped (Moran's I only).
    pub dropped: usize,
}

fn chi2_sf(stat: f64, df: f64) -> f64 {
    let dist = ChiSquared::new(df).expect("positive df");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Ljung-Box portmanteau: Q = T(T+2) sum_h rho_h^2 / (T-h), chi-square(lags).
pub fn ljung_box(series: &[f64], lags: usize) -> Result<TestResult> {
    let t = series.len();
    if lags < 1 || t <= lags {
        return Err(WindvolError::TooFewObservations { len: t, lags });
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let denom: f64 = series.iter().map(|v| (v - mean).powi(2)).sum();
    if denom <= 0.0 {
        return Err(WindvolError::ConstantSeries);
    }
    let mut q = 0.0;
    for h in 1..=lags {
        let mut num = 0.0;
        for i in h..t {
            num += (series[i] - mean) * (series[i - h] - mean);
        }
        let rho = num / denom;
        q += rho * rho / (t - h) as f64;
    }
    q *= t as f64 * (t as f64 + 2.0);
    Ok(TestResult {
        statistic: q,
        df_or_z: lags as f64,
        p_value: chi2_sf(q, lags as f64),
        dropped: 0,
    })
}

/// ARCH-LM: auxiliary regression of e_t^2 on its own lags; statistic n R^2,
/// chi-square(lags), where n is the auxiliary sample size.
pub fn arch_lm(residuals: &[f64], lags: usize) -> Result<TestResult> {
    let t = residuals.len();
    if lags < 1 || t <= 2 * lags {
        return Err(WindvolError::TooFewObservations { len: t, lags });
    }
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let n = t - lags;
    let mut x = DMatrix::zeros(n, lags + 1);
    let mut y = DVector::zeros(n);
    for row in 0..n {
        x[(row, 0)] = 1.0;
        for l in 1..=lags {
            x[(row, l)] = sq[row + lags - l];
        }
        y[row] = sq[row + lags];
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or(WindvolError::SingularRegression)?;
    let fitted = &x * &beta;
    let ybar = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    if ss_tot <= 1e-300 {
        return Err(WindvolError::SingularRegression);
    }
    let ss_res: f64 = (0..n).map(|i| (y[i] - fitted[i]).powi(2)).sum();
    let r2 = (1.0 - ss_res / ss_tot).clamp(0.0, 1.0);
    let stat = n as f64 * r2;
    Ok(TestResult {
        statistic: stat,
        df_or_z: lags as f64,
        p_value: chi2_sf(stat, lags as f64),
        dropped: 0,
    })
}

/// Moran's I under the randomization assumption, using S0/S1/S2 moments and
/// the sample kurtosis. Asymmetric weight matrices are handled as-is.
/// Nodes whose weight row is all zero are dropped before the computation.
pub fn morans_i(values: &[f64], w: &WeightMatrix) -> Result<TestResult> {
    if values.len() != w.n {
        return Err(WindvolError::DimensionMismatch(values.len(), w.n));
    }
    // drop isolated rows (and their columns)
    let keep: Vec<usize> = (0..w.n).filter(|i| !w.rows[*i].is_empty()).collect();
    let dropped = w.n - keep.len();
    let n = keep.len();
    if n < 4 {
        return Err(WindvolError::AllZeroWeights);
    }
    let index_of: std::collections::HashMap<usize, usize> =
        keep.iter().enumerate().map(|(a, &b)| (b, a)).collect();

    let z: Vec<f64> = {
        let mean = keep.iter().map(|&i| values[i]).sum::<f64>() / n as f64;
        keep.iter().map(|&i| values[i] - mean).collect()
    };
    let z2: f64 = z.iter().map(|v| v * v).sum();
    if z2 <= 0.0 {
        return Err(WindvolError::ConstantValues);
    }

    // sub-matrix restricted to kept nodes
    let mut wd = vec![0.0; n * n];
    for (a, &i) in keep.iter().enumerate() {
        for &(j, wij) in &w.rows[i] {
            if let Some(&b) = index_of.get(&j) {
                wd[a * n + b] = wij;
            }
        }
    }

    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut cross = 0.0;
    for a in 0..n {
        for b in 0..n {
            let wab = wd[a * n + b];
            s0 += wab;
            s1 += (wab + wd[b * n + a]).powi(2);
            cross += wab * z[a] * z[b];
        }
    }
    s1 *= 0.5;
    if s0 <= 0.0 {
        return Err(WindvolError::AllZeroWeights);
    }
    let mut s2 = 0.0;
    for a in 0..n {
        let row_sum: f64 = (0..n).map(|b| wd[a * n + b]).sum();
        let col_sum: f64 = (0..n).map(|b| wd[b * n + a]).sum();
        s2 += (row_sum + col_sum).powi(2);
    }

    let nf = n as f64;
    let i_stat = (nf / s0) * (cross / z2);
    let e_i = -1.0 / (nf - 1.0);
    let b2 = nf * z.iter().map(|v| v.powi(4)).sum::<f64>() / (z2 * z2);
    let mut var = (nf * ((nf * nf - 3.0 * nf + 3.0) * s1 - nf * s2 + 3.0 * s0 * s0)
        - b2 * ((nf * nf - nf) * s1 - 2.0 * nf * s2 + 6.0 * s0 * s0))
        / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0) * s0 * s0)
        - e_i * e_i;
    if var <= 0.0 {
        // extreme sample kurtosis can push the randomization variance below
        // zero at small n; fall back to the normality-assumption variance
        var = (nf * nf * s1 - nf * s2 + 3.0 * s0 * s0) / ((nf * nf - 1.0) * s0 * s0)
            - e_i * e_i;
    }
    if var <= 0.0 {
        return Err(WindvolError::SingularSystem(
            "non-positive Moran variance".into(),
        ));
    }
    let z_score = (i_stat - e_i) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p = 2.0 * (1.0 - normal.cdf(z_score.abs()));
    Ok(TestResult {
        statistic: i_stat,
        df_or_z: z_score,
        p_value: p.clamp(0.0, 1.0),
        dropped,
    })
}

/// Sample excess kurtosis (biased moment estimator): m4 / m2^2 - 3.
pub fn excess_kurtosis(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(WindvolError::SeriesTooShort { len: n, need: 4 });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let m2 = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if m2 <= 0.0 {
        return Err(WindvolError::ConstantSeries);
    }
    let m4 = series.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Percentage of results with p-value strictly above `level`.
pub fn pass_rates(results: &[TestResult], level: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(WindvolError::EmptyList);
    }
    let pass = results.iter().filter(|r| r.p_value > level).count();
    Ok(100.0 * pass as f64 / results.len() as f64)
}
