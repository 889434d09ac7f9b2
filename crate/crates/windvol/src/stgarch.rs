//! STARMAGARCH(1,1,1,1): a spatiotemporal ARMA mean equation coupled with a
//! spatially aggregated GARCH variance recursion through a row-standardized
//! weight matrix. Simulation, filtering, Gaussian QML estimation, and
//! recursive one-step-ahead variance forecasting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Result, WindvolError};
use crate::optim;
use crate::weights::WeightMatrix;

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
pub struct StarmaGarchParams {
    pub mu: f64,
    pub phi: f64,
    pub theta: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StarmaGarchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(WindvolError::InvalidParams(format!(
                "omega > 0, alpha, beta >= 0 required, got {self:?}"
            )));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(WindvolError::InvalidParams(format!(
                "alpha + beta = {} >= 1",
                self.alpha + self.beta
            )));
        }
        if self.phi.abs() >= 1.0 || self.theta.abs() >= 1.0 {
            return Err(WindvolError::InvalidParams(format!(
                "|phi| < 1 and |theta| < 1 required, got phi={}, theta={}",
                self.phi, self.theta
            )));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.mu, self.phi, self.theta, self.omega, self.alpha, self.beta]
    }
}

/// JSON has no NaN: boundary-flagged standard errors serialize as null, so
/// map null back to NaN when reading a fit artifact.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let v: Vec<Option<f64>> = serde::Deserialize::deserialize(d)?;
    Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
}

/// A fitted joint spatiotemporal model.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct StFit {
    pub params: StarmaGarchParams,
    /// In the order (mu, phi, theta, omega, alpha, beta).
    #[serde(deserialize_with = "nan_from_null")]
    pub std_errors: Vec<f64>,
    #[serde(deserialize_with = "nan_from_null")]
    pub p_values: Vec<f64>,
    /// True where the estimate sits on the nonnegativity boundary; the
    /// p-value there is fixed at 0.5 by convention.
    pub boundary: Vec<bool>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    /// Row-major T x N paths.
    #[serde(skip)]
    pub h_path: Vec<f64>,
    #[serde(skip)]
    pub eps_path: Vec<f64>,
}

/// Simulate T x N observations from the generative recursion
/// (after discarding `burn_in` rows). Deterministic given `seed`.
pub fn st_simulate(
    params: &StarmaGarchParams,
    w: &WeightMatrix,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    let n = w.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();

    let h_uncond = params.omega / (1.0 - params.alpha - params.beta);
    let mut h = vec![h_uncond; n];
    let mut eps = vec![0.0; n];
    let mut e = vec![params.mu; n];
    let mut out = Vec::with_capacity(t_len * n);

    for step in 0..t_len + burn_in {
        let eps_sq: Vec<f64> = eps.iter().map(|v| v * v).collect();
        let w_eps_sq = w.mul_vec(&eps_sq);
        let w_h = w.mul_vec(&h);
        let w_eps = w.mul_vec(&eps);
        let e_dev: Vec<f64> = e.iter().map(|v| v - params.mu).collect();
        let w_e_dev = w.mul_vec(&e_dev);

        let mut h_new = vec![0.0; n];
        let mut eps_new = vec![0.0; n];
        let mut e_new = vec![0.0; n];
        for i in 0..n {
            h_new[i] = params.omega + params.alpha * w_eps_sq[i] + params.beta * w_h[i];
            let z: f64 = normal.sample(&mut rng);
            eps_new[i] = h_new[i].sqrt() * z;
            e_new[i] =
                params.mu + params.phi * w_e_dev[i] + params.theta * w_eps[i] + eps_new[i];
        }
        h = h_new;
        eps = eps_new;
        e = e_new;
        if step >= burn_in {
            out.extend_from_slice(&e);
        }
    }
    Ok(out)
}

/// Invert the mean recursion to recover innovations, then run the variance
/// recursion. `e` is row-major T x N. Returns (eps, h), both T x N.
pub fn st_filter(
    params: &StarmaGarchParams,
    w: &WeightMatrix,
    e: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = w.n;
    if e.len() % n != 0 || e.is_empty() {
        return Err(WindvolError::ShapeMismatch(format!(
            "panel length {} not a multiple of N = {n}",
            e.len()
        )));
    }
    let t_len = e.len() / n;

    let mut eps = vec![0.0; t_len * n];
    // eps_1 = e_1 - mu
    for i in 0..n {
        eps[i] = e[i] - params.mu;
    }
    let mut prev_eps: Vec<f64> = eps[..n].to_vec();
    for t in 1..t_len {
        let prev_dev: Vec<f64> = (0..n).map(|i| e[(t - 1) * n + i] - params.mu).collect();
        let w_dev = w.mul_vec(&prev_dev);
        let w_eps = w.mul_vec(&prev_eps);
        for i in 0..n {
            eps[t * n + i] =
                (e[t * n + i] - params.mu) - params.phi * w_dev[i] - params.theta * w_eps[i];
        }
        prev_eps.copy_from_slice(&eps[t * n..(t + 1) * n]);
    }

    // h_1 = per-station sample variance of the implied eps
    let mut h = vec![0.0; t_len * n];
    for i in 0..n {
        let mean: f64 = (0..t_len).map(|t| eps[t * n + i]).sum::<f64>() / t_len as f64;
        let var: f64 = (0..t_len)
            .map(|t| (eps[t * n + i] - mean).powi(2))
            .sum::<f64>()
            / (t_len as f64 - 1.0).max(1.0);
        h[i] = var.max(1e-12);
    }
    for t in 1..t_len {
        let prev_sq: Vec<f64> = (0..n).map(|i| eps[(t - 1) * n + i].powi(2)).collect();
        let prev_h: Vec<f64> = h[(t - 1) * n..t * n].to_vec();
        let w_sq = w.mul_vec(&prev_sq);
        let w_h = w.mul_vec(&prev_h);
        for i in 0..n {
            h[t * n + i] = params.omega + params.alpha * w_sq[i] + params.beta * w_h[i];
        }
    }
    Ok((eps, h))
}

/// Gaussian quasi-likelihood of the filtered panel.
pub fn st_loglik(params: &StarmaGarchParams, w: &WeightMatrix, e: &[f64]) -> Result<f64> {
    let (eps, h) = st_filter(params, w, e)?;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    Ok(eps
        .iter()
        .zip(&h)
        .map(|(&et, &ht)| -0.5 * (ln2pi + ht.ln() + et * et / ht))
        .sum())
}

const PERSISTENCE_CAP: f64 = 0.9999;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn from_unconstrained(x: &[f64]) -> StarmaGarchParams {
    let s = PERSISTENCE_CAP * sigmoid(x[4]);
    let alpha = s * sigmoid(x[5]);
    StarmaGarchParams {
        mu: x[0],
        phi: 0.9999 * x[1].tanh(),
        theta: 0.9999 * x[2].tanh(),
        omega: x[3].exp(),
        alpha,
        beta: s - alpha,
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_unconstrained(p: &StarmaGarchParams) -> [f64; 6] {
    let s = (p.alpha + p.beta).clamp(1e-6, PERSISTENCE_CAP - 1e-6);
    let r = (p.alpha / s).clamp(1e-6, 1.0 - 1e-6);
    [
        p.mu,
        (p.phi / 0.9999).clamp(-0.999, 0.999).atanh(),
        (p.theta / 0.9999).clamp(-0.999, 0.999).atanh(),
        p.omega.ln(),
        logit(s / PERSISTENCE_CAP),
        logit(r),
    ]
}

const BOUNDARY_TOL: f64 = 1e-4;

/// QML fit over the transformed parameter space with three deterministic
/// starting points. Standard errors from the numerical Hessian in natural
/// coordinates; nonnegativity-boundary estimates are flagged and get the
/// one-sided p = 0.5 convention.
pub fn fit_st(e: &[f64], w: &WeightMatrix) -> Result<StFit> {
    let n = w.n;
    if n < 2 {
        return Err(WindvolError::ShapeMismatch("need N >= 2".into()));
    }
    if e.len() % n != 0 {
        return Err(WindvolError::ShapeMismatch(format!(
            "panel length {} not a multiple of N = {n}",
            e.len()
        )));
    }
    let t_len = e.len() / n;
    if t_len < 200 {
        return Err(WindvolError::NonConvergence(format!(
            "T = {t_len} too short for a reliable joint fit (need >= 200)"
        )));
    }

    let grand_mean: f64 = e.iter().sum::<f64>() / e.len() as f64;
    let grand_var: f64 =
        e.iter().map(|v| (v - grand_mean).powi(2)).sum::<f64>() / (e.len() as f64 - 1.0);
    if !(grand_var > 1e-300) {
        return Err(WindvolError::DegenerateInput);
    }

    let nll = |x: &[f64]| {
        let p = from_unconstrained(x);
        match st_loglik(&p, w, e) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    // two-stage warm start: the ARMA pair (phi, theta) can sit on a nearly
    // cancelling ridge, so locate the mean parameters first by conditional
    // least squares and variance-target the GARCH start on the implied
    // innovations
    let css = |x: &[f64]| {
        let p = StarmaGarchParams {
            mu: x[0],
            phi: 0.9999 * x[1].tanh(),
            theta: 0.9999 * x[2].tanh(),
            omega: 1.0,
            alpha: 0.0,
            beta: 0.0,
        };
        match st_filter(&p, w, e) {
            Ok((eps, _)) => eps.iter().map(|v| v * v).sum::<f64>(),
            Err(_) => f64::INFINITY,
        }
    };
    let css_fit = optim::minimize(&css, &[grand_mean, 0.0, 0.0], 200, 1e-9);
    let warm_mean = StarmaGarchParams {
        mu: css_fit.x[0],
        phi: 0.9999 * css_fit.x[1].tanh(),
        theta: 0.9999 * css_fit.x[2].tanh(),
        omega: 1.0,
        alpha: 0.0,
        beta: 0.0,
    };
    let warm_var = st_filter(&warm_mean, w, e)
        .map(|(eps, _)| {
            let m = eps.iter().sum::<f64>() / eps.len() as f64;
            eps.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (eps.len() as f64 - 1.0)
        })
        .unwrap_or(grand_var);

    let starts = [
        StarmaGarchParams {
            omega: 0.3 * warm_var,
            alpha: 0.15,
            beta: 0.55,
            ..warm_mean
        },
        StarmaGarchParams {
            mu: grand_mean,
            phi: 0.0,
            theta: 0.0,
            omega: 0.5 * grand_var,
            alpha: 0.1,
            beta: 0.5,
        },
        StarmaGarchParams {
            mu: grand_mean,
            phi: 0.3,
            theta: -0.3,
            omega: 0.1 * grand_var,
            alpha: 0.05,
            beta: 0.85,
        },
        StarmaGarchParams {
            mu: grand_mean,
            phi: -0.5,
            theta: 0.5,
            omega: 0.2 * grand_var,
            alpha: 0.2,
            beta: 0.4,
        },
    ];

    let mut best: Option<optim::OptimResult> = None;
    for s in &starts {
        let res = optim::minimize(&nll, &to_unconstrained(s), 600, 1e-8);
        if best.as_ref().map_or(true, |b| res.fval < b.fval) {
            best = Some(res);
        }
    }
    let best = best.unwrap();
    if !best.fval.is_finite() {
        return Err(WindvolError::NonConvergence("no finite likelihood found".into()));
    }
    let params = from_unconstrained(&best.x);
    let loglik = -best.fval;
    let (eps_path, h_path) = st_filter(&params, w, e)?;

    // Hessian in natural coordinates
    let nll_nat = |p: &[f64]| {
        let pars = StarmaGarchParams {
            mu: p[0],
            phi: p[1],
            theta: p[2],
            omega: p[3],
            alpha: p[4],
            beta: p[5],
        };
        if pars.omega <= 0.0
            || pars.alpha < 0.0
            || pars.beta < 0.0
            || pars.alpha + pars.beta >= 1.0
            || pars.phi.abs() >= 1.0
            || pars.theta.abs() >= 1.0
        {
            return f64::INFINITY;
        }
        match st_loglik(&pars, w, e) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };
    let natural = params.as_array();
    let boundary: Vec<bool> = vec![
        false,
        false,
        false,
        false,
        params.alpha < BOUNDARY_TOL,
        params.beta < BOUNDARY_TOL,
    ];
    // step the boundary coordinates inward so central differences stay feasible
    let mut hess_point = natural;
    for (i, &b) in boundary.iter().enumerate() {
        if b {
            hess_point[i] = hess_point[i].max(1e-3);
        }
    }
    let hess = optim::numerical_hessian(&nll_nat, &hess_point);
    let mut std_errors = optim::standard_errors(&hess);
    let normal = NormalDist::new(0.0, 1.0).unwrap();
    let mut p_values: Vec<f64> = natural
        .iter()
        .zip(&std_errors)
        .map(|(&est, &se)| {
            if se.is_finite() && se > 0.0 {
                2.0 * (1.0 - normal.cdf((est / se).abs()))
            } else {
                f64::NAN
            }
        })
        .collect();
    for (i, &b) in boundary.iter().enumerate() {
        if b {
            std_errors[i] = f64::NAN;
            p_values[i] = 0.5;
        }
    }

    let k = 6.0;
    let obs = (t_len * n) as f64;
    Ok(StFit {
        params,
        std_errors,
        p_values,
        boundary,
        loglik,
        aic: -2.0 * loglik + 2.0 * k,
        bic: -2.0 * loglik + k * obs.ln(),
        converged: best.converged,
        h_path,
        eps_path,
    })
}

/// One-step-ahead variance vector with parameters frozen:
/// h_{T+1} = omega + alpha W (eps_T ^ 2) + beta W h_T.
pub fn st_forecast(
    params: &StarmaGarchParams,
    w: &WeightMatrix,
    eps_last: &[f64],
    h_last: &[f64],
) -> Vec<f64> {
    let sq: Vec<f64> = eps_last.iter().map(|v| v * v).collect();
    let w_sq = w.mul_vec(&sq);
    let w_h = w.mul_vec(h_last);
    (0..w.n)
        .map(|i| params.omega + params.alpha * w_sq[i] + params.beta * w_h[i])
        .collect()
}

/// Rolling one-step-ahead forecasts over a test panel: the filter state is
/// initialized on the training window and advanced one day at a time with
/// realized residuals, so each forecast only uses information up to the
/// previous day. Returns a T_test x N matrix of h-hat.
pub fn st_forecast_path(
    params: &StarmaGarchParams,
    w: &WeightMatrix,
    train: &[f64],
    test: &[f64],
) -> Result<Vec<f64>> {
    let n = w.n;
    if test.len() % n != 0 {
        return Err(WindvolError::ShapeMismatch("test panel".into()));
    }
    let t_test = test.len() / n;
    let (eps, h) = st_filter(params, w, train)?;
    let rows = train.len() / n;
    let mut eps_last: Vec<f64> = eps[(rows - 1) * n..].to_vec();
    let mut h_last: Vec<f64> = h[(rows - 1) * n..].to_vec();
    let mut e_last: Vec<f64> = train[(rows - 1) * n..].to_vec();
    let mut out = Vec::with_capacity(test.len());
    for t in 0..t_test {
        let h_next = st_forecast(params, w, &eps_last, &h_last);
        out.extend_from_slice(&h_next);
        // advance the recursion with the realized observation
        let e_now = &test[t * n..(t + 1) * n];
        let prev_dev: Vec<f64> = e_last.iter().map(|v| v - params.mu).collect();
        let w_dev = w.mul_vec(&prev_dev);
        let w_eps = w.mul_vec(&eps_last);
        let eps_now: Vec<f64> = (0..n)
            .map(|i| (e_now[i] - params.mu) - params.phi * w_dev[i] - params.theta * w_eps[i])
            .collect();
        eps_last = eps_now;
        h_last = h_next;
        e_last = e_now.to_vec();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{knn_weights, WeightMatrix};
    use crate::ingest::Station;
    use rand::prelude::*;

    fn ring_weights(n: usize) -> WeightMatrix {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| vec![((i + n - 1) % n, 1.0), ((i + 1) % n, 1.0)])
            .collect();
        WeightMatrix::from_raw(n, rows, crate::weights::WeightKind::Custom)
    }

    fn random_stations(n: usize, seed: u64) -> Vec<Station> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Station {
                id: format!("s{i:03}"),
                lon: 0.0,
                lat: 0.0,
                x: rng.gen::<f64>() * 1e5,
                y: rng.gen::<f64>() * 1e5,
            })
            .collect()
    }

    #[test]
    fn simulate_decoupled_matches_moments() {
        // alpha = beta = phi = theta = 0: output is mu + sqrt(omega) * noise
        let p = StarmaGarchParams {
            mu: 2.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.25,
            alpha: 0.0,
            beta: 0.0,
        };
        let w = ring_weights(4);
        let e = st_simulate(&p, &w, 10_000, 100, 1).unwrap();
        for i in 0..4 {
            let col: Vec<f64> = (0..10_000).map(|t| e[t * 4 + i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
            assert!((var - 0.25).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.1,
            alpha: 0.5,
            beta: 0.5,
        };
        assert!(p.validate().is_err());
        let w = ring_weights(4);
        assert!(st_simulate(&p, &w, 10, 0, 0).is_err());
    }

    #[test]
    fn zero_weight_matrix_decouples() {
        let p = StarmaGarchParams {
            mu: 0.5,
            phi: 0.4,
            theta: -0.4,
            omega: 0.3,
            alpha: 0.2,
            beta: 0.3,
        };
        let w = WeightMatrix::zero(3);
        let e = st_simulate(&p, &w, 5000, 100, 2).unwrap();
        // with W = 0 the process is iid with variance omega
        for i in 0..3 {
            let col: Vec<f64> = (0..5000).map(|t| e[t * 3 + i]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((mean - 0.5).abs() < 0.05);
            assert!((var - 0.3).abs() < 0.05);
        }
    }

    #[test]
    fn filter_trivial_cases() {
        let w = ring_weights(3);
        // phi = theta = 0 -> eps = e - mu
        let p = StarmaGarchParams {
            mu: 1.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.2,
            alpha: 0.0,
            beta: 0.0,
        };
        let e = vec![1.5, 0.5, 1.0, 2.0, 1.0, 0.0];
        let (eps, h) = st_filter(&p, &w, &e).unwrap();
        for t in 0..2 {
            for i in 0..3 {
                assert!((eps[t * 3 + i] - (e[t * 3 + i] - 1.0)).abs() < 1e-14);
            }
        }
        // alpha = beta = 0 -> h_t = omega for t >= 2
        for i in 0..3 {
            assert!((h[3 + i] - 0.2).abs() < 1e-14);
        }
    }

    #[test]
    fn simulate_then_filter_roundtrip() {
        let p = StarmaGarchParams {
            mu: -0.01,
            phi: -0.5,
            theta: 0.6,
            omega: 0.1,
            alpha: 0.2,
            beta: 0.5,
        };
        let w = knn_weights(&random_stations(10, 3), 3).unwrap();
        let n = 10;
        let t_len = 300;

        // regenerate with the same seed, keeping the pre-sample state by
        // simulating burn_in + T and filtering only the tail
        let e = st_simulate(&p, &w, t_len, 200, 7).unwrap();
        let (eps, _h) = st_filter(&p, &w, &e).unwrap();

        // re-derive eps directly from the mean recursion (ground truth after
        // the first row, where initialization differs)
        for t in 2..t_len.min(50) {
            let prev_dev: Vec<f64> = (0..n).map(|i| e[(t - 1) * n + i] - p.mu).collect();
            let w_dev = w.mul_vec(&prev_dev);
            let prev_eps: Vec<f64> = (0..n).map(|i| eps[(t - 1) * n + i]).collect();
            let w_eps = w.mul_vec(&prev_eps);
            for i in 0..n {
                let expect = (e[t * n + i] - p.mu) - p.phi * w_dev[i] - p.theta * w_eps[i];
                assert!((eps[t * n + i] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn loglik_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..5 {
            let n = 5;
            let t_len = 50;
            let w = knn_weights(&random_stations(n, 100 + trial), 2).unwrap();
            let p = StarmaGarchParams {
                mu: 0.2 * rng.gen::<f64>() - 0.1,
                phi: 0.4 * rng.gen::<f64>() - 0.2,
                theta: 0.4 * rng.gen::<f64>() - 0.2,
                omega: 0.1 + rng.gen::<f64>() * 0.2,
                alpha: 0.1,
                beta: 0.4,
            };
            let e: Vec<f64> = (0..t_len * n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let ll = st_loglik(&p, &w, &e).unwrap();

            // direct double-loop oracle with explicit dense W
            let wd = w.to_dense();
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
                let var: f64 = (0..t_len).map(|t| (eps[t][i] - mean).powi(2)).sum::<f64>()
                    / (t_len as f64 - 1.0);
                h[0][i] = var.max(1e-12);
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
            let mut oracle = 0.0;
            let ln2pi = (2.0 * std::f64::consts::PI).ln();
            for t in 0..t_len {
                for i in 0..n {
                    oracle += -0.5 * (ln2pi + h[t][i].ln() + eps[t][i] * eps[t][i] / h[t][i]);
                }
            }
            assert!((ll - oracle).abs() < 1e-9, "{ll} vs {oracle}");
        }
    }

    #[test]
    fn loglik_decoupled_equals_univariate_sum() {
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.3,
            alpha: 0.0,
            beta: 0.0,
        };
        let w = WeightMatrix::zero(3);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let e: Vec<f64> = (0..300).map(|_| rng.gen::<f64>() - 0.5).collect();
        let ll = st_loglik(&p, &w, &e).unwrap();

        // sum of per-station Gaussian likelihoods with the same h path
        let n = 3;
        let t_len = 100;
        let mut oracle = 0.0;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        for i in 0..n {
            let col: Vec<f64> = (0..t_len).map(|t| e[t * n + i]).collect();
            let mean = col.iter().sum::<f64>() / t_len as f64;
            let var =
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t_len as f64 - 1.0);
            for (t, &v) in col.iter().enumerate() {
                let h = if t == 0 { var } else { 0.3 };
                oracle += -0.5 * (ln2pi + h.ln() + v * v / h);
            }
        }
        assert!((ll - oracle).abs() < 1e-9);
    }

    #[test]
    fn loglik_profile_in_omega() {
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: -0.3,
            theta: 0.4,
            omega: 0.1,
            alpha: 0.15,
            beta: 0.5,
        };
        let w = knn_weights(&random_stations(8, 5), 3).unwrap();
        let e = st_simulate(&p, &w, 1000, 200, 9).unwrap();
        let ll_true = st_loglik(&p, &w, &e).unwrap();
        for bad_omega in [0.5, 1.0, 0.01] {
            let bad = StarmaGarchParams {
                omega: bad_omega,
                ..p
            };
            assert!(st_loglik(&bad, &w, &e).unwrap() < ll_true);
        }
    }

    #[test]
    fn forecast_hand_case() {
        // N = 2, W = [[0,1],[1,0]], omega = 0.1, alpha = 0.2, beta = 0.5,
        // eps_T = (1, 0), h_T = (1, 1) -> h_next = (0.6, 0.8)
        let w = WeightMatrix::from_raw(
            2,
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            crate::weights::WeightKind::Custom,
        );
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.1,
            alpha: 0.2,
            beta: 0.5,
        };
        let h = st_forecast(&p, &w, &[1.0, 0.0], &[1.0, 1.0]);
        assert!((h[0] - 0.6).abs() < 1e-14);
        assert!((h[1] - 0.8).abs() < 1e-14);
    }

    #[test]
    fn forecast_constant_when_alpha_beta_zero() {
        let w = ring_weights(3);
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: 0.0,
            theta: 0.0,
            omega: 0.42,
            alpha: 0.0,
            beta: 0.0,
        };
        let h = st_forecast(&p, &w, &[1.0, -2.0, 3.0], &[0.5, 0.6, 0.7]);
        assert!(h.iter().all(|&v| (v - 0.42).abs() < 1e-14));
    }

    #[test]
    fn fit_recovers_simulated_params() {
        let truth = StarmaGarchParams {
            mu: -0.0061,
            phi: -0.5969,
            theta: 0.6601,
            omega: 0.0962,
            alpha: 0.2040,
            beta: 0.5018,
        };
        // a paired network (all W eigenvalues at +/-1) identifies the nearly
        // cancelling (phi, theta) pair far better than a smoothing matrix,
        // whose interior spectrum carries almost no ARMA information
        let rows: Vec<Vec<(usize, f64)>> = (0..30).map(|i| vec![(i ^ 1, 1.0)]).collect();
        let w = WeightMatrix::from_raw(30, rows, crate::weights::WeightKind::Custom);
        let e = st_simulate(&truth, &w, 2000, 300, 1002).unwrap();
        let fit = fit_st(&e, &w).unwrap();
        let est = fit.params.as_array();
        let tru = truth.as_array();
        for k in 0..6 {
            assert!(
                (est[k] - tru[k]).abs() < 0.05,
                "param {k}: {} vs {}",
                est[k],
                tru[k]
            );
        }
        assert!(fit.h_path.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn fit_short_series_is_error() {
        let w = ring_weights(3);
        let e = vec![0.1; 150];
        assert!(matches!(
            fit_st(&e, &w),
            Err(WindvolError::NonConvergence(_))
        ));
    }

    #[test]
    fn stability_no_variance_drift() {
        let p = StarmaGarchParams {
            mu: 0.0,
            phi: 0.2,
            theta: -0.2,
            omega: 0.1,
            alpha: 0.3,
            beta: 0.6,
        };
        let w = ring_weights(6);
        let e = st_simulate(&p, &w, 100_000, 500, 17).unwrap();
        // rolling variance over windows; regression slope should be flat
        let n = 6;
        let win = 5000;
        let mut vars = Vec::new();
        let t_len = 100_000;
        let mut start = 0;
        while start + win <= t_len {
            let mut s = 0.0;
            let mut s2 = 0.0;
            let cnt = (win * n) as f64;
            for t in start..start + win {
                for i in 0..n {
                    let v = e[t * n + i];
                    s += v;
                    s2 += v * v;
                }
            }
            vars.push(s2 / cnt - (s / cnt).powi(2));
            start += win;
        }
        // slope t-test of rolling variance against window index
        let m = vars.len() as f64;
        let xbar = (m - 1.0) / 2.0;
        let ybar = vars.iter().sum::<f64>() / m;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        for (k, &v) in vars.iter().enumerate() {
            sxy += (k as f64 - xbar) * (v - ybar);
            sxx += (k as f64 - xbar).powi(2);
        }
        let slope = sxy / sxx;
        let resid_ss: f64 = vars
            .iter()
            .enumerate()
            .map(|(k, &v)| (v - ybar - slope * (k as f64 - xbar)).powi(2))
            .sum();
        let se = (resid_ss / (m - 2.0) / sxx).sqrt();
        let t_stat = (slope / se).abs();
        // p > 0.01 two-sided ~ |t| < 2.9 for ~18 dof
        assert!(t_stat < 2.9, "t = {t_stat}");
    }
}
