//! Spatial dynamic panel data model estimated by concentrated quasi-maximum
//! likelihood:
//!
//! y_t = rho W y_t + gamma (.) y_{t-1} + lambda W y_{t-1} + c + eps_t
//!
//! with a station-specific own-lag coefficient `gamma_i`, a station-specific
//! intercept `c_i`, and scalar spatial coefficients `rho` (contemporaneous)
//! and `lambda` (space-time lag). For fixed rho the remaining coefficients
//! are linear, so the likelihood is concentrated down to a one-dimensional
//! search in rho; the simultaneity Jacobian ln|det(I - rho W)| is evaluated
//! by dense LU factorization, which stays valid for asymmetric W.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, WindvolError};
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct SdpdFit {
    pub rho: f64,
    pub lambda: f64,
    pub gammas: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub sigma2: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    /// Row-major (T-1) x N residual matrix.
    #[serde(skip)]
    pub residuals: Vec<f64>,
    pub n_stations: usize,
    pub n_obs: usize,
}

/// ln |det(I - rho W)| via LU. Returns an error when the matrix is singular
/// at this rho (the likelihood treats that as -inf).
pub fn log_abs_det_i_minus_rho_w(w_dense: &DMatrix<f64>, rho: f64) -> Option<f64> {
    let n = w_dense.nrows();
    let mut a = DMatrix::identity(n, n);
    a -= w_dense * rho;
    let det = a.lu().determinant();
    if det.abs() < 1e-300 || !det.is_finite() {
        None
    } else {
        Some(det.abs().ln())
    }
}

struct Concentrated {
    loglik: f64,
    lambda: f64,
    gammas: Vec<f64>,
    intercepts: Vec<f64>,
    sigma2: f64,
    residuals: Vec<f64>,
}

/// For fixed rho, solve the within-station regressions in closed form and
/// return the concentrated likelihood. `y` is row-major T x N.
fn concentrate(
    y: &[f64],
    w: &WeightMatrix,
    w_dense: &DMatrix<f64>,
    rho: f64,
) -> Option<Concentrated> {
    let n = w.n;
    let t_len = y.len() / n;
    let t_eff = t_len - 1;

    let log_det = log_abs_det_i_minus_rho_w(w_dense, rho)?;

    // u_t = (I - rho W) y_t for t = 2..T, stacked (T-1) x N
    let mut u = vec![0.0; t_eff * n];
    let mut wy_lag = vec![0.0; t_eff * n];
    for t in 0..t_eff {
        let y_now = &y[(t + 1) * n..(t + 2) * n];
        let y_prev = &y[t * n..(t + 1) * n];
        let wy_now = w.mul_vec(y_now);
        let wy_prev = w.mul_vec(y_prev);
        for i in 0..n {
            u[t * n + i] = y_now[i] - rho * wy_now[i];
            wy_lag[t * n + i] = wy_prev[i];
        }
    }

    // Frisch-Waugh: residualize u and W y_{t-1} on the per-station block
    // (1, y_{i,t-1}), then a pooled simple regression identifies lambda.
    let mut u_res = vec![0.0; t_eff * n];
    let mut z_res = vec![0.0; t_eff * n];
    // per-station regression moments saved for the back-substitution step
    let mut station_basis = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..t_eff).map(|t| y[t * n + i]).collect(); // y_{i,t-1}
        let xbar = x.iter().sum::<f64>() / t_eff as f64;
        let sxx: f64 = x.iter().map(|v| (v - xbar).powi(2)).sum();
        if sxx < 1e-300 {
            return None;
        }
        let project = |target: &mut [f64], source: &dyn Fn(usize) -> f64| -> (f64, f64) {
            let ybar = (0..t_eff).map(source).sum::<f64>() / t_eff as f64;
            let sxy: f64 = (0..t_eff).map(|t| (x[t] - xbar) * (source(t) - ybar)).sum();
            let slope = sxy / sxx;
            let icept = ybar - slope * xbar;
            for t in 0..t_eff {
                target[t * n + i] = source(t) - icept - slope * x[t];
            }
            (icept, slope)
        };
        let (u_icept, u_slope) = project(&mut u_res, &|t| u[t * n + i]);
        let (z_icept, z_slope) = project(&mut z_res, &|t| wy_lag[t * n + i]);
        station_basis.push((u_icept, u_slope, z_icept, z_slope));
    }

    let szz: f64 = z_res.iter().map(|v| v * v).sum();
    let lambda = if szz < 1e-300 {
        0.0
    } else {
        z_res.iter().zip(&u_res).map(|(z, r)| z * r).sum::<f64>() / szz
    };

    // back out gamma_i and c_i: u_i = c_i + gamma_i y_lag_i + lambda z_i + eps
    let mut gammas = Vec::with_capacity(n);
    let mut intercepts = Vec::with_capacity(n);
    for &(u_icept, u_slope, z_icept, z_slope) in &station_basis {
        gammas.push(u_slope - lambda * z_slope);
        intercepts.push(u_icept - lambda * z_icept);
    }

    let mut residuals = vec![0.0; t_eff * n];
    let mut ssr = 0.0;
    for t in 0..t_eff {
        for i in 0..n {
            let r = u_res[t * n + i] - lambda * z_res[t * n + i];
            residuals[t * n + i] = r;
            ssr += r * r;
        }
    }
    let obs = (t_eff * n) as f64;
    let sigma2 = ssr / obs;
    if sigma2 < 1e-300 {
        return None;
    }
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let loglik = t_eff as f64 * log_det - 0.5 * obs * (ln2pi + sigma2.ln() + 1.0);
    Some(Concentrated {
        loglik,
        lambda,
        gammas,
        intercepts,
        sigma2,
        residuals,
    })
}

/// Fit by grid search over rho followed by golden-section refinement.
pub fn fit_sdpd(y: &[f64], w: &WeightMatrix) -> Result<SdpdFit> {
    let n = w.n;
    if n < 2 {
        return Err(WindvolError::ShapeMismatch("need N >= 2".into()));
    }
    if y.len() % n != 0 {
        return Err(WindvolError::ShapeMismatch(format!(
            "panel length {} not a multiple of N = {n}",
            y.len()
        )));
    }
    let t_len = y.len() / n;
    if t_len < 10 {
        return Err(WindvolError::SeriesTooShort {
            len: t_len,
            need: 10,
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(WindvolError::NonFinite);
    }
    let w_dense = w.to_dense();

    // with no spatial links the likelihood is flat in rho (and lambda has no
    // regressor); report the unidentified parameters as zero
    if w.total_weight() == 0.0 {
        let c = concentrate(y, w, &w_dense, 0.0).ok_or_else(|| {
            WindvolError::NonConvergence("degenerate panel under zero weights".into())
        })?;
        return finish_fit(0.0, c, n, t_len);
    }

    let eval = |rho: f64| -> f64 {
        concentrate(y, w, &w_dense, rho)
            .map(|c| c.loglik)
            .unwrap_or(f64::NEG_INFINITY)
    };

    // coarse grid inside the invertibility interval for row-standardized W
    let lo = -0.995;
    let hi = 0.995;
    let grid_n = 81;
    let mut best_rho = 0.0;
    let mut best_ll = f64::NEG_INFINITY;
    for k in 0..grid_n {
        let rho = lo + (hi - lo) * k as f64 / (grid_n - 1) as f64;
        let ll = eval(rho);
        if ll > best_ll {
            best_ll = ll;
            best_rho = rho;
        }
    }
    if !best_ll.is_finite() {
        return Err(WindvolError::NonConvergence(
            "concentrated likelihood undefined on the whole rho grid".into(),
        ));
    }

    // golden-section refinement on the bracketing interval
    let step = (hi - lo) / (grid_n - 1) as f64;
    let mut a = (best_rho - step).max(lo);
    let mut b = (best_rho + step).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..80 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    let rho = 0.5 * (a + b);
    let conc = concentrate(y, w, &w_dense, rho)
        .ok_or_else(|| WindvolError::NonConvergence("singular system at optimum".into()))?;
    finish_fit(rho, conc, n, t_len)
}

fn finish_fit(rho: f64, conc: Concentrated, n: usize, t_len: usize) -> Result<SdpdFit> {
    let k_params = (2 * n + 2) as f64; // gammas, intercepts, rho, lambda
    let obs = ((t_len - 1) * n) as f64;
    Ok(SdpdFit {
        rho,
        lambda: conc.lambda,
        gammas: conc.gammas,
        intercepts: conc.intercepts,
        sigma2: conc.sigma2,
        loglik: conc.loglik,
        aic: -2.0 * conc.loglik + 2.0 * k_params,
        bic: -2.0 * conc.loglik + k_params * obs.ln(),
        residuals: conc.residuals,
        n_stations: n,
        n_obs: (t_len - 1) * n,
    })
}

/// Reconstruct the model's one-step innovations on an arbitrary panel with
/// the fitted coefficients held fixed (used to carry a fitted filter across
/// the train/test boundary). Returns row-major (T-1) x N.
pub fn sdpd_residuals(fit: &SdpdFit, w: &WeightMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let n = w.n;
    if y.len() % n != 0 || y.len() < 2 * n {
        return Err(WindvolError::ShapeMismatch("panel for residuals".into()));
    }
    let t_len = y.len() / n;
    let mut out = vec![0.0; (t_len - 1) * n];
    for t in 0..t_len - 1 {
        let now = &y[(t + 1) * n..(t + 2) * n];
        let prev = &y[t * n..(t + 1) * n];
        let w_now = w.mul_vec(now);
        let w_prev = w.mul_vec(prev);
        for i in 0..n {
            out[t * n + i] = now[i]
                - fit.rho * w_now[i]
                - fit.intercepts[i]
                - fit.gammas[i] * prev[i]
                - fit.lambda * w_prev[i];
        }
    }
    Ok(out)
}

/// One-step-ahead mean forecast: y-hat_{T+1} = (I - rho W)^{-1}
/// (c + gamma (.) y_T + lambda W y_T).
pub fn sdpd_forecast(fit: &SdpdFit, w: &WeightMatrix, y_last: &[f64]) -> Result<Vec<f64>> {
    let n = w.n;
    if y_last.len() != n {
        return Err(WindvolError::DimensionMismatch(y_last.len(), n));
    }
    let wy = w.mul_vec(y_last);
    let rhs: Vec<f64> = (0..n)
        .map(|i| fit.intercepts[i] + fit.gammas[i] * y_last[i] + fit.lambda * wy[i])
        .collect();
    let mut a = DMatrix::identity(n, n);
    a -= w.to_dense() * fit.rho;
    let rhs_v = nalgebra::DVector::from_column_slice(&rhs);
    let sol = a.lu().solve(&rhs_v).ok_or_else(|| WindvolError::SingularSystem("I - rho W".into()))?;
    Ok(sol.iter().copied().collect())
}

/// Simulate a stable SDPD panel (for testing and synthetic reproduction).
pub fn sdpd_simulate(
    rho: f64,
    gammas: &[f64],
    lambda: f64,
    intercepts: &[f64],
    sigma: f64,
    w: &WeightMatrix,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let n = w.n;
    if gammas.len() != n || intercepts.len() != n {
        return Err(WindvolError::DimensionMismatch(gammas.len(), n));
    }
    let mut a = DMatrix::identity(n, n);
    a -= w.to_dense() * rho;
    let a_inv = a.try_inverse().ok_or_else(|| WindvolError::SingularSystem("I - rho W".into()))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut y = vec![0.0; n];
    let mut out = Vec::with_capacity(t_len * n);
    for step in 0..t_len + burn_in {
        let wy = w.mul_vec(&y);
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                intercepts[i] + gammas[i] * y[i] + lambda * wy[i] + normal.sample(&mut rng)
            })
            .collect();
        let rhs_v = nalgebra::DVector::from_column_slice(&rhs);
        let next = &a_inv * rhs_v;
        y = next.iter().copied().collect();
        if step >= burn_in {
            out.extend_from_slice(&y);
        }
    }
    // an explosive parameterization ((I - rho W)^{-1}(gamma + lambda W) with
    // spectral radius >= 1) silently produces garbage; refuse it here
    if out.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
        return Err(WindvolError::NonConvergence(
            "simulated SDPD process diverged; parameters are non-stationary".into(),
        ));
    }
    Ok(out)
}
