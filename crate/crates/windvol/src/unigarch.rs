//! Per-station GARCH(1,1) and EGARCH(1,1) by Gaussian maximum likelihood,
//! with information criteria, standardized residuals, and one-step-ahead
//! variance forecasts.

use serde::Serialize;

use crate::error::{Result, WindvolError};
use crate::optim;

pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(WindvolError::InvalidParams(format!(
                "omega > 0, alpha >= 0, beta >= 0 required, got {self:?}"
            )));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(WindvolError::InvalidParams(format!(
                "alpha + beta = {} >= 1",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EgarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl EgarchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.abs() < 1.0
            && self.omega.is_finite()
            && self.alpha.is_finite()
            && self.gamma.is_finite())
        {
            return Err(WindvolError::InvalidParams(format!(
                "|beta| < 1 and finite entries required, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UniModel {
    Garch,
    Egarch,
}

/// A fitted univariate volatility model.
#[derive(Debug, Clone, Serialize)]
pub struct UniFit {
    pub model: UniModel,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    /// EGARCH asymmetry; 0 for GARCH.
    pub gamma: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    #[serde(skip)]
    pub h: Vec<f64>,
    #[serde(skip)]
    pub std_resid: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// h_t = omega + alpha e_{t-1}^2 + beta h_{t-1}, with h_1 = h0.
pub fn garch_filter(params: &GarchParams, e: &[f64], h0: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(e.len());
    h.push(h0);
    for t in 1..e.len() {
        h.push(params.omega + params.alpha * e[t - 1] * e[t - 1] + params.beta * h[t - 1]);
    }
    h
}

pub fn garch_loglik(params: &GarchParams, e: &[f64], h0: f64) -> f64 {
    let h = garch_filter(params, e, h0);
    gaussian_loglik(e, &h)
}

fn gaussian_loglik(e: &[f64], h: &[f64]) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    e.iter()
        .zip(h)
        .map(|(&et, &ht)| -0.5 * (ln2pi + ht.ln() + et * et / ht))
        .sum()
}

/// ln h_t = omega + beta ln h_{t-1} + alpha (|z_{t-1}| - sqrt(2/pi)) + gamma z_{t-1}.
pub fn egarch_filter(params: &EgarchParams, e: &[f64], ln_h0: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(e.len());
    let mut ln_h = ln_h0;
    h.push(ln_h.exp());
    for t in 1..e.len() {
        let z = e[t - 1] / h[t - 1].sqrt();
        ln_h = params.omega + params.beta * ln_h + params.alpha * (z.abs() - SQRT_2_OVER_PI)
            + params.gamma * z;
        h.push(ln_h.exp());
    }
    h
}

pub fn egarch_loglik(params: &EgarchParams, e: &[f64], ln_h0: f64) -> f64 {
    let h = egarch_filter(params, e, ln_h0);
    gaussian_loglik(e, &h)
}

fn sample_variance(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

const PERSISTENCE_CAP: f64 = 0.9999;

// transform: [ln omega, logit(s / cap), logit(alpha / s)]
fn garch_from_unconstrained(x: &[f64]) -> GarchParams {
    let omega = x[0].exp();
    let s = PERSISTENCE_CAP * sigmoid(x[1]);
    let alpha = s * sigmoid(x[2]);
    GarchParams {
        omega,
        alpha,
        beta: s - alpha,
    }
}

fn garch_to_unconstrained(p: &GarchParams) -> [f64; 3] {
    let s = (p.alpha + p.beta).clamp(1e-8, PERSISTENCE_CAP - 1e-8);
    let r = (p.alpha / s).clamp(1e-8, 1.0 - 1e-8);
    [p.omega.ln(), logit(s / PERSISTENCE_CAP), logit(r)]
}

/// GARCH(1,1) Gaussian MLE. h0 is the sample variance of `e`.
pub fn fit_garch(e: &[f64]) -> Result<UniFit> {
    let t = e.len();
    if t < 100 {
        return Err(WindvolError::SeriesTooShort { len: t, need: 100 });
    }
    let var = sample_variance(e);
    if !(var > 1e-300) {
        return Err(WindvolError::DegenerateInput);
    }
    let h0 = var;
    let nll = |x: &[f64]| -garch_loglik(&garch_from_unconstrained(x), e, h0);

    let start = garch_to_unconstrained(&GarchParams {
        omega: 0.1 * var,
        alpha: 0.05,
        beta: 0.85,
    });
    let res = optim::minimize(&nll, &start, 300, 1e-7);
    let params = garch_from_unconstrained(&res.x);
    let loglik = -res.fval;
    if !loglik.is_finite() {
        return Err(WindvolError::NonConvergence("non-finite likelihood".into()));
    }

    let h = garch_filter(&params, e, h0);
    let std_resid: Vec<f64> = e.iter().zip(&h).map(|(&et, &ht)| et / ht.sqrt()).collect();

    // Hessian in natural parameter space
    let nll_nat = |p: &[f64]| {
        let pars = GarchParams {
            omega: p[0],
            alpha: p[1],
            beta: p[2],
        };
        if pars.omega <= 0.0 || pars.alpha < 0.0 || pars.beta < 0.0 || pars.alpha + pars.beta >= 1.0
        {
            return f64::INFINITY;
        }
        -garch_loglik(&pars, e, h0)
    };
    let hess = optim::numerical_hessian(&nll_nat, &[params.omega, params.alpha, params.beta]);
    let std_errors = optim::standard_errors(&hess);

    let p_count = 3.0;
    Ok(UniFit {
        model: UniModel::Garch,
        omega: params.omega,
        alpha: params.alpha,
        beta: params.beta,
        gamma: 0.0,
        loglik,
        aic: -2.0 * loglik + 2.0 * p_count,
        bic: -2.0 * loglik + p_count * (t as f64).ln(),
        converged: res.converged,
        h,
        std_resid,
        std_errors,
    })
}

fn egarch_from_unconstrained(x: &[f64]) -> EgarchParams {
    EgarchParams {
        omega: x[0],
        alpha: x[1],
        gamma: x[2],
        beta: PERSISTENCE_CAP * x[3].tanh(),
    }
}

/// EGARCH(1,1) Gaussian MLE. ln h_1 is the log sample variance of `e`.
pub fn fit_egarch(e: &[f64]) -> Result<UniFit> {
    let t = e.len();
    if t < 100 {
        return Err(WindvolError::SeriesTooShort { len: t, need: 100 });
    }
    let var = sample_variance(e);
    if !(var > 1e-300) {
        return Err(WindvolError::DegenerateInput);
    }
    let ln_h0 = var.ln();
    let nll = |x: &[f64]| {
        let ll = egarch_loglik(&egarch_from_unconstrained(x), e, ln_h0);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };

    // start: omega consistent with ln h = ln var at beta = 0.9
    let start = [0.1 * ln_h0, 0.1, 0.0, (0.9f64 / PERSISTENCE_CAP).atanh()];
    let res = optim::minimize(&nll, &start, 400, 1e-7);
    let params = egarch_from_unconstrained(&res.x);
    let loglik = -res.fval;
    if !loglik.is_finite() {
        return Err(WindvolError::NonConvergence("non-finite likelihood".into()));
    }

    let h = egarch_filter(&params, e, ln_h0);
    let std_resid: Vec<f64> = e.iter().zip(&h).map(|(&et, &ht)| et / ht.sqrt()).collect();

    let nll_nat = |p: &[f64]| {
        let pars = EgarchParams {
            omega: p[0],
            alpha: p[1],
            gamma: p[2],
            beta: p[3],
        };
        if pars.beta.abs() >= 1.0 {
            return f64::INFINITY;
        }
        let ll = egarch_loglik(&pars, e, ln_h0);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let hess = optim::numerical_hessian(
        &nll_nat,
        &[params.omega, params.alpha, params.gamma, params.beta],
    );
    let std_errors = optim::standard_errors(&hess);

    let p_count = 4.0;
    Ok(UniFit {
        model: UniModel::Egarch,
        omega: params.omega,
        alpha: params.alpha,
        beta: params.beta,
        gamma: params.gamma,
        loglik,
        aic: -2.0 * loglik + 2.0 * p_count,
        bic: -2.0 * loglik + p_count * (t as f64).ln(),
        converged: res.converged,
        h,
        std_resid,
        std_errors,
    })
}

/// One-step-ahead conditional variance with parameters frozen.
pub fn uni_forecast(fit: &UniFit, e_last: f64, h_last: f64) -> f64 {
    match fit.model {
        UniModel::Garch => fit.omega + fit.alpha * e_last * e_last + fit.beta * h_last,
        UniModel::Egarch => {
            let z = e_last / h_last.sqrt();
            (fit.omega
                + fit.beta * h_last.ln()
                + fit.alpha * (z.abs() - SQRT_2_OVER_PI)
                + fit.gamma * z)
                .exp()
        }
    }
}

/// Percentage of stations for which EGARCH has the strictly lower criterion
/// value. Ties favour GARCH (fewer parameters).
pub fn model_preference(fits_garch: &[UniFit], fits_egarch: &[UniFit], use_bic: bool) -> Result<f64> {
    if fits_garch.is_empty() || fits_garch.len() != fits_egarch.len() {
        return Err(WindvolError::DimensionMismatch(
            fits_garch.len(),
            fits_egarch.len(),
        ));
    }
    let pick = |f: &UniFit| if use_bic { f.bic } else { f.aic };
    let prefer = fits_garch
        .iter()
        .zip(fits_egarch)
        .filter(|(g, eg)| pick(eg) < pick(g))
        .count();
    Ok(100.0 * prefer as f64 / fits_garch.len() as f64)
}

/// Simulate a GARCH(1,1) path (test and calibration helper).
pub fn simulate_garch<R: rand::Rng>(params: &GarchParams, t: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let burn = 500;
    let mut h = params.omega / (1.0 - params.alpha - params.beta);
    let mut prev_e: f64 = 0.0;
    let mut out = Vec::with_capacity(t);
    for i in 0..t + burn {
        if i > 0 {
            h = params.omega + params.alpha * prev_e * prev_e + params.beta * h;
        }
        prev_e = h.sqrt() * normal.sample(rng);
        if i >= burn {
            out.push(prev_e);
        }
    }
    out
}

/// Simulate an EGARCH(1,1) path.
pub fn simulate_egarch<R: rand::Rng>(params: &EgarchParams, t: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, 1.0).unwrap();
    let burn = 500;
    let mut ln_h = params.omega / (1.0 - params.beta);
    let mut prev_z: f64 = 0.0;
    let mut out = Vec::with_capacity(t);
    for i in 0..t + burn {
        if i > 0 {
            ln_h = params.omega
                + params.beta * ln_h
                + params.alpha * (prev_z.abs() - SQRT_2_OVER_PI)
                + params.gamma * prev_z;
        }
        prev_z = normal.sample(rng);
        let e = ln_h.exp().sqrt() * prev_z;
        if i >= burn {
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn filter_constant_variance() {
        let p = GarchParams {
            omega: 0.3,
            alpha: 0.0,
            beta: 0.0,
        };
        let h = garch_filter(&p, &[1.0, -1.0, 2.0, 0.5], 1.0);
        assert_eq!(h[0], 1.0);
        assert!(h[1..].iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn filter_hand_recursion() {
        let p = GarchParams {
            omega: 0.1,
            alpha: 0.2,
            beta: 0.5,
        };
        let h = garch_filter(&p, &[1.0, 0.0, 0.0], 1.0);
        assert!((h[1] - 0.8).abs() < 1e-15);
        assert!((h[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn filter_unconditional_fixed_point() {
        let p = GarchParams {
            omega: 0.1,
            alpha: 0.2,
            beta: 0.5,
        };
        let h0 = p.omega / (1.0 - p.alpha - p.beta);
        let h = garch_filter(&p, &[0.0; 10], h0);
        // with e = 0 the path decays towards omega / (1 - beta), so only the
        // alpha-free fixed point test applies at alpha = 0
        let p2 = GarchParams {
            omega: 0.1,
            alpha: 0.0,
            beta: 0.5,
        };
        let h0b = p2.omega / (1.0 - p2.beta);
        let hb = garch_filter(&p2, &[0.0; 10], h0b);
        assert!(hb.iter().all(|&v| (v - h0b).abs() < 1e-14));
        assert!(h[0] == h0);
    }

    #[test]
    fn loglik_closed_form() {
        // e = 0, omega = 1, alpha = beta = 0, T = 2, h0 = 1 -> -ln 2pi
        let p = GarchParams {
            omega: 1.0,
            alpha: 0.0,
            beta: 0.0,
        };
        let ll = garch_loglik(&p, &[0.0, 0.0], 1.0);
        assert!((ll + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = GarchParams {
            omega: 0.2,
            alpha: 0.1,
            beta: 0.6,
        };
        let e = simulate_garch(&p, 200, &mut rng);
        let h0 = 1.3;
        let ll = garch_loglik(&p, &e, h0);
        // naive direct recursion and summation
        let mut oracle = 0.0;
        let mut h = h0;
        for t in 0..e.len() {
            if t > 0 {
                h = p.omega + p.alpha * e[t - 1] * e[t - 1] + p.beta * h;
            }
            oracle += -0.5 * ((2.0 * std::f64::consts::PI).ln() + h.ln() + e[t] * e[t] / h);
        }
        assert!((ll - oracle).abs() < 1e-10);
    }

    #[test]
    fn loglik_scaling_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = GarchParams {
            omega: 0.2,
            alpha: 0.1,
            beta: 0.6,
        };
        let e = simulate_garch(&p, 300, &mut rng);
        let c: f64 = 2.5;
        let e_scaled: Vec<f64> = e.iter().map(|v| c * v).collect();
        let p_scaled = GarchParams {
            omega: c * c * p.omega,
            ..p
        };
        let ll = garch_loglik(&p, &e, 1.0);
        let ll_scaled = garch_loglik(&p_scaled, &e_scaled, c * c);
        let shift = e.len() as f64 * c.ln();
        assert!((ll_scaled - (ll - shift)).abs() < 1e-8);
    }

    #[test]
    fn fit_garch_recovery() {
        let truth = GarchParams {
            omega: 0.1,
            alpha: 0.1,
            beta: 0.8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let e = simulate_garch(&truth, 5000, &mut rng);
        let fit = fit_garch(&e).unwrap();
        assert!((fit.omega - truth.omega).abs() < 0.05, "omega {}", fit.omega);
        assert!((fit.alpha - truth.alpha).abs() < 0.05, "alpha {}", fit.alpha);
        assert!((fit.beta - truth.beta).abs() < 0.05, "beta {}", fit.beta);
        assert!(fit.h.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn fit_garch_on_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let e = simulate_garch(
            &GarchParams {
                omega: 1.0,
                alpha: 0.0,
                beta: 0.0,
            },
            3000,
            &mut rng,
        );
        let fit = fit_garch(&e).unwrap();
        assert!(fit.alpha < 0.05, "alpha {}", fit.alpha);
        assert!(fit.alpha + fit.beta < 0.97);
    }

    #[test]
    fn fit_garch_constant_input() {
        assert!(matches!(
            fit_garch(&[1.0; 500]),
            Err(WindvolError::DegenerateInput)
        ));
    }

    #[test]
    fn egarch_filter_constant() {
        let p = EgarchParams {
            omega: 0.4,
            alpha: 0.0,
            gamma: 0.0,
            beta: 0.0,
        };
        let h = egarch_filter(&p, &[1.0, 2.0, 3.0], 0.0);
        assert!((h[1] - 0.4f64.exp()).abs() < 1e-12);
        assert!((h[2] - 0.4f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn egarch_loglik_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = EgarchParams {
            omega: -0.1,
            alpha: 0.15,
            gamma: -0.05,
            beta: 0.9,
        };
        let e = simulate_egarch(&p, 200, &mut rng);
        let ln_h0 = 0.2;
        let ll = egarch_loglik(&p, &e, ln_h0);
        let mut oracle = 0.0;
        let mut ln_h = ln_h0;
        for t in 0..e.len() {
            if t > 0 {
                let z = e[t - 1] / (ln_h / 2.0).exp();
                ln_h = p.omega + p.beta * ln_h + p.alpha * (z.abs() - SQRT_2_OVER_PI) + p.gamma * z;
            }
            let h = ln_h.exp();
            oracle += -0.5 * ((2.0 * std::f64::consts::PI).ln() + h.ln() + e[t] * e[t] / h);
        }
        assert!((ll - oracle).abs() < 1e-10, "{ll} vs {oracle}");
    }

    #[test]
    fn fit_egarch_recovery() {
        let truth = EgarchParams {
            omega: -0.1,
            alpha: 0.15,
            gamma: -0.05,
            beta: 0.9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(200);
        let e = simulate_egarch(&truth, 5000, &mut rng);
        let fit = fit_egarch(&e).unwrap();
        assert!((fit.omega - truth.omega).abs() < 0.05, "omega {}", fit.omega);
        assert!((fit.alpha - truth.alpha).abs() < 0.05, "alpha {}", fit.alpha);
        assert!((fit.gamma - truth.gamma).abs() < 0.05, "gamma {}", fit.gamma);
        assert!((fit.beta - truth.beta).abs() < 0.05, "beta {}", fit.beta);
    }

    #[test]
    fn forecast_cases() {
        let fit = UniFit {
            model: UniModel::Garch,
            omega: 0.1,
            alpha: 0.2,
            beta: 0.5,
            gamma: 0.0,
            loglik: 0.0,
            aic: 0.0,
            bic: 0.0,
            converged: true,
            h: vec![],
            std_resid: vec![],
            std_errors: vec![],
        };
        assert!((uni_forecast(&fit, 1.0, 1.0) - 0.8).abs() < 1e-15);

        let zero = UniFit {
            alpha: 0.0,
            beta: 0.0,
            ..fit.clone()
        };
        assert!((uni_forecast(&zero, 5.0, 3.0) - 0.1).abs() < 1e-15);

        let efit = UniFit {
            model: UniModel::Egarch,
            omega: -0.2,
            alpha: 0.1,
            beta: 0.8,
            gamma: 0.3,
            ..fit
        };
        let h_last: f64 = 1.7;
        let expected = (-0.2 + 0.8 * h_last.ln() - 0.1 * SQRT_2_OVER_PI).exp();
        assert!((uni_forecast(&efit, 0.0, h_last) - expected).abs() < 1e-12);
    }

    #[test]
    fn preference_tie_rule() {
        let mk = |model, aic: f64| UniFit {
            model,
            omega: 0.1,
            alpha: 0.1,
            beta: 0.1,
            gamma: 0.0,
            loglik: 0.0,
            aic,
            bic: aic,
            converged: true,
            h: vec![],
            std_resid: vec![],
            std_errors: vec![],
        };
        let g = vec![mk(UniModel::Garch, 10.0), mk(UniModel::Garch, 10.0)];
        let e_better = vec![mk(UniModel::Egarch, 9.0), mk(UniModel::Egarch, 8.0)];
        let e_tie = vec![mk(UniModel::Egarch, 10.0), mk(UniModel::Egarch, 10.0)];
        assert_eq!(model_preference(&g, &e_better, false).unwrap(), 100.0);
        assert_eq!(model_preference(&g, &e_tie, false).unwrap(), 0.0);
    }

    #[test]
    fn local_optimality_smoke() {
        let truth = GarchParams {
            omega: 0.1,
            alpha: 0.1,
            beta: 0.8,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(300);
        let e = simulate_garch(&truth, 2000, &mut rng);
        let fit = fit_garch(&e).unwrap();
        let h0 = sample_variance(&e);
        use rand::Rng;
        for _ in 0..100 {
            let s: f64 = rng.gen_range(0.0..0.9999);
            let r: f64 = rng.gen_range(0.0..1.0);
            let cand = GarchParams {
                omega: rng.gen_range(0.001..1.0),
                alpha: s * r,
                beta: s * (1.0 - r),
            };
            assert!(garch_loglik(&cand, &e, h0) <= fit.loglik + 1e-6);
        }
    }
}
