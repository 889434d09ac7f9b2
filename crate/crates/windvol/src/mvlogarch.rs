//! Bivariate spatiotemporal log-ARCH for two measurement heights observed on
//! the same station network. Both stages share one simultaneous spatial
//! system: an N x 2 response matrix Y_t is driven by a per-height intercept,
//! a contemporaneous spatial term W Y_t Psi coupling the heights, and a
//! temporal term Y_{t-1} Pi,
//!
//! Y_t = 1 b' + W Y_t Psi + Y_{t-1} Pi + U_t.
//!
//! The mean stage applies this to the residual panels; the volatility stage
//! applies the identical structure to log-squared mean-stage innovations, so
//! the fitted values are log conditional variances. Estimation is Gaussian
//! QML: vectorizing with vec(W Y Psi) = (Psi' (x) W) vec(Y) gives the
//! simultaneity Jacobian ln|det(I_2N - Psi' (x) W)|, evaluated by dense LU,
//! while the intercepts and the two height-specific error variances are
//! concentrated out in closed form.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, WindvolError};
use crate::optim;
use crate::weights::WeightMatrix;

/// One estimated stage of the system (mean or volatility).
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct SystemFit {
    /// Per-height intercepts.
    pub b: [f64; 2],
    /// Contemporaneous spatial coupling, psi[l][k] maps height l into k.
    pub psi: [[f64; 2]; 2],
    /// Temporal coupling, pi[l][k] maps lagged height l into k.
    pub pi: [[f64; 2]; 2],
    /// Per-height innovation variances.
    pub sigma2: [f64; 2],
    pub loglik: f64,
    pub converged: bool,
    /// Row-major (T-1) x 2N residuals, heights stacked column-major within a
    /// row: stations of height 0 first, then height 1.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

/// The full two-stage model.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct MvFit {
    pub mean: SystemFit,
    pub vol: SystemFit,
    /// How many squared innovations were lifted to the transform floor.
    pub floored: usize,
    pub n_stations: usize,
    pub n_obs: usize,
}

/// ln(x^2) with a relative floor so exact or near zeros do not produce
/// -inf: values below 1e-10 * median(x^2) are clamped. Returns the
/// transformed panel and the number of clamped cells.
pub fn log_sq_transform(x: &[f64]) -> Result<(Vec<f64>, usize)> {
    if x.is_empty() {
        return Err(WindvolError::EmptyList);
    }
    let mut sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mut sorted = sq.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    if median <= 0.0 {
        return Err(WindvolError::AllZeroResiduals);
    }
    let floor = 1e-10 * median;
    let mut floored = 0;
    for v in sq.iter_mut() {
        if *v < floor {
            *v = floor;
            floored += 1;
        }
    }
    Ok((sq.iter().map(|v| v.ln()).collect(), floored))
}

/// I_{2N} - Psi' (x) W as a dense matrix, in the column-major stacking used
/// throughout this module (height is the outer block index).
fn system_matrix(psi: &[[f64; 2]; 2], w_dense: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w_dense.nrows();
    let mut m = DMatrix::identity(2 * n, 2 * n);
    for k in 0..2 {
        for l in 0..2 {
            // (Psi' (x) W) block (k, l) = Psi'[k][l] W = psi[l][k] W
            let coef = psi[l][k];
            if coef == 0.0 {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    m[(k * n + i, l * n + j)] -= coef * w_dense[(i, j)];
                }
            }
        }
    }
    m
}

struct Concentrated {
    b: [f64; 2],
    sigma2: [f64; 2],
    loglik: f64,
    residuals: Vec<f64>,
}

/// For fixed (Psi, Pi): closed-form intercepts and variances, and the
/// resulting concentrated quasi-likelihood. `y` is row-major T x 2N.
fn concentrate(
    y: &[f64],
    w: &WeightMatrix,
    w_dense: &DMatrix<f64>,
    psi: &[[f64; 2]; 2],
    pi: &[[f64; 2]; 2],
) -> Option<Concentrated> {
    let n = w.n;
    let width = 2 * n;
    let t_len = y.len() / width;
    let t_eff = t_len - 1;

    let m = system_matrix(psi, w_dense);
    let det = m.lu().determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return None;
    }
    let log_det = det.abs().ln();

    // raw residuals before the intercept: for each t >= 2,
    // R_t[:,k] = Y_t[:,k] - sum_l psi[l][k] W Y_t[:,l] - sum_l pi[l][k] Y_{t-1}[:,l]
    let mut raw = vec![0.0; t_eff * width];
    for t in 0..t_eff {
        let now = &y[(t + 1) * width..(t + 2) * width];
        let prev = &y[t * width..(t + 1) * width];
        let w_now: [Vec<f64>; 2] = [w.mul_vec(&now[..n]), w.mul_vec(&now[n..])];
        for k in 0..2 {
            for i in 0..n {
                let mut v = now[k * n + i];
                for l in 0..2 {
                    v -= psi[l][k] * w_now[l][i];
                    v -= pi[l][k] * prev[l * n + i];
                }
                raw[t * width + k * n + i] = v;
            }
        }
    }

    let obs = (t_eff * n) as f64;
    let mut b = [0.0; 2];
    let mut sigma2 = [0.0; 2];
    for k in 0..2 {
        let mut s = 0.0;
        for t in 0..t_eff {
            for i in 0..n {
                s += raw[t * width + k * n + i];
            }
        }
        b[k] = s / obs;
        let mut ss = 0.0;
        for t in 0..t_eff {
            for i in 0..n {
                let r = raw[t * width + k * n + i] - b[k];
                raw[t * width + k * n + i] = r;
                ss += r * r;
            }
        }
        sigma2[k] = ss / obs;
        if sigma2[k] < 1e-300 {
            return None;
        }
    }
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let loglik = t_eff as f64 * log_det
        - 0.5 * obs * ((ln2pi + sigma2[0].ln() + 1.0) + (ln2pi + sigma2[1].ln() + 1.0));
    Some(Concentrated {
        b,
        sigma2,
        loglik,
        residuals: raw,
    })
}

fn unpack(x: &[f64]) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    (
        [[x[0], x[1]], [x[2], x[3]]],
        [[x[4], x[5]], [x[6], x[7]]],
    )
}

/// Fit one stage of the system by QML. `y` is row-major T x 2N (height 0
/// stations first within a row).
pub fn fit_spatial_system(y: &[f64], w: &WeightMatrix) -> Result<SystemFit> {
    let n = w.n;
    let width = 2 * n;
    if n < 2 {
        return Err(WindvolError::ShapeMismatch("need N >= 2".into()));
    }
    if y.len() % width != 0 {
        return Err(WindvolError::ShapeMismatch(format!(
            "panel length {} not a multiple of 2N = {width}",
            y.len()
        )));
    }
    let t_len = y.len() / width;
    if t_len < 20 {
        return Err(WindvolError::SeriesTooShort {
            len: t_len,
            need: 20,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(WindvolError::NonFinite);
    }
    let w_dense = w.to_dense();

    let nll = |x: &[f64]| {
        let (psi, pi) = unpack(x);
        // keep the search inside a comfortably invertible region
        if x.iter().any(|v| v.abs() > 5.0) {
            return f64::INFINITY;
        }
        match concentrate(y, w, &w_dense, &psi, &pi) {
            Some(c) if c.loglik.is_finite() => -c.loglik,
            _ => f64::INFINITY,
        }
    };

    let starts: [[f64; 8]; 2] = [
        [0.0; 8],
        [0.3, 0.05, 0.05, 0.3, 0.1, 0.0, 0.0, 0.1],
    ];
    let mut best: Option<optim::OptimResult> = None;
    for s in &starts {
        let res = optim::minimize(&nll, s, 400, 1e-8);
        if best.as_ref().map_or(true, |b| res.fval < b.fval) {
            best = Some(res);
        }
    }
    let best = best.unwrap();
    if !best.fval.is_finite() {
        return Err(WindvolError::NonConvergence(
            "no invertible parameter point found".into(),
        ));
    }
    let (psi, pi) = unpack(&best.x);
    let conc = concentrate(y, w, &w_dense, &psi, &pi)
        .ok_or_else(|| WindvolError::NonConvergence("singular at optimum".into()))?;
    Ok(SystemFit {
        b: conc.b,
        psi,
        pi,
        sigma2: conc.sigma2,
        loglik: conc.loglik,
        converged: best.converged,
        residuals: conc.residuals,
    })
}

/// Two-stage fit: spatial system on the paired residual panels, then the
/// same system on log-squared mean-stage innovations.
///
/// `y10` and `y100` are row-major T x N panels for the two heights on the
/// same station ordering.
pub fn fit_mv_logarch(y10: &[f64], y100: &[f64], w: &WeightMatrix) -> Result<MvFit> {
    let n = w.n;
    if y10.len() != y100.len() || y10.len() % n != 0 {
        return Err(WindvolError::DimensionMismatch(y10.len(), y100.len()));
    }
    let t_len = y10.len() / n;
    let width = 2 * n;
    let mut y = vec![0.0; t_len * width];
    for t in 0..t_len {
        y[t * width..t * width + n].copy_from_slice(&y10[t * n..(t + 1) * n]);
        y[t * width + n..(t + 1) * width].copy_from_slice(&y100[t * n..(t + 1) * n]);
    }

    let mean = fit_spatial_system(&y, w)?;
    let (log_sq, floored) = log_sq_transform(&mean.residuals)?;
    let vol = fit_spatial_system(&log_sq, w)?;
    Ok(MvFit {
        mean,
        vol,
        floored,
        n_stations: n,
        n_obs: (t_len - 1) * n * 2,
    })
}

/// Innovations of a fitted stage on an arbitrary panel (row-major T x 2N),
/// with coefficients held fixed. Returns row-major (T-1) x 2N.
pub fn system_residuals(fit: &SystemFit, w: &WeightMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let n = w.n;
    let width = 2 * n;
    if y.len() % width != 0 || y.len() < 2 * width {
        return Err(WindvolError::ShapeMismatch("panel for residuals".into()));
    }
    let t_eff = y.len() / width - 1;
    let mut out = vec![0.0; t_eff * width];
    for t in 0..t_eff {
        let now = &y[(t + 1) * width..(t + 2) * width];
        let prev = &y[t * width..(t + 1) * width];
        let w_now = [w.mul_vec(&now[..n]), w.mul_vec(&now[n..])];
        for k in 0..2 {
            for i in 0..n {
                let mut v = now[k * n + i] - fit.b[k];
                for l in 0..2 {
                    v -= fit.psi[l][k] * w_now[l][i];
                    v -= fit.pi[l][k] * prev[l * n + i];
                }
                out[t * width + k * n + i] = v;
            }
        }
    }
    Ok(out)
}

/// One-step-ahead log-variance forecast: solve the simultaneous system
/// (I - Psi' (x) W) vec(H) = (I (x) 1) b + (Pi' (x) I) vec(Y_T^(ln)) and
/// exponentiate. `last_log_sq` is the final 2N row of the volatility-stage
/// response. Returns per-height variance vectors (h10, h100).
pub fn mv_forecast(
    fit: &SystemFit,
    w: &WeightMatrix,
    last_log_sq: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = w.n;
    if last_log_sq.len() != 2 * n {
        return Err(WindvolError::DimensionMismatch(last_log_sq.len(), 2 * n));
    }
    let w_dense = w.to_dense();
    let m = system_matrix(&fit.psi, &w_dense);
    let mut rhs = nalgebra::DVector::zeros(2 * n);
    for k in 0..2 {
        for i in 0..n {
            let mut v = fit.b[k];
            for l in 0..2 {
                v += fit.pi[l][k] * last_log_sq[l * n + i];
            }
            rhs[k * n + i] = v;
        }
    }
    let sol = m.lu().solve(&rhs).ok_or_else(|| WindvolError::SingularSystem("I - Psi' kron W".into()))?;
    let h10: Vec<f64> = (0..n).map(|i| sol[i].exp()).collect();
    let h100: Vec<f64> = (0..n).map(|i| sol[n + i].exp()).collect();
    Ok((h10, h100))
}

/// Simulate from the simultaneous system with Gaussian innovations (used in
/// tests and synthetic reproduction). Returns row-major T x 2N.
pub fn simulate_system(
    b: &[f64; 2],
    psi: &[[f64; 2]; 2],
    pi: &[[f64; 2]; 2],
    sigma: &[f64; 2],
    w: &WeightMatrix,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let n = w.n;
    let width = 2 * n;
    let w_dense = w.to_dense();
    let m = system_matrix(psi, &w_dense);
    let m_inv = m.try_inverse().ok_or_else(|| WindvolError::SingularSystem("I - Psi' kron W".into()))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normals = [
        Normal::new(0.0, sigma[0]).unwrap(),
        Normal::new(0.0, sigma[1]).unwrap(),
    ];
    let mut prev = vec![0.0; width];
    let mut out = Vec::with_capacity(t_len * width);
    for step in 0..t_len + burn_in {
        let mut rhs = nalgebra::DVector::zeros(width);
        for k in 0..2 {
            for i in 0..n {
                let mut v = b[k] + normals[k].sample(&mut rng);
                for l in 0..2 {
                    v += pi[l][k] * prev[l * n + i];
                }
                rhs[k * n + i] = v;
            }
        }
        let next = &m_inv * rhs;
        prev = next.iter().copied().collect();
        if step >= burn_in {
            out.extend_from_slice(&prev);
        }
    }
    Ok(out)
}
