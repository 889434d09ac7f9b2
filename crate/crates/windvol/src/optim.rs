//! Small deterministic unconstrained minimizer used by all the likelihood
//! fits: BFGS with a backtracking line search and central-difference
//! gradients, plus a Nelder-Mead polish and a numerical Hessian for
//! standard errors. Constraints are handled by the callers through
//! smooth reparameterizations.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fval: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn grad_step(xi: f64) -> f64 {
    let eps = f64::EPSILON.powf(1.0 / 3.0);
    eps * xi.abs().max(1.0)
}

pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = grad_step(x[i]);
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// BFGS minimization with backtracking (Armijo) line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], max_iter: usize, tol: f64) -> OptimResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(numerical_gradient(f, x.as_slice()));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut iter = 0;

    while iter < max_iter {
        iter += 1;
        let dir = -(&h_inv * &g);
        let slope = g.dot(&dir);
        if !slope.is_finite() || slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            let dir = -g.clone();
            if dir.norm() < tol {
                converged = true;
                break;
            }
            // fall through with a steepest-descent step
            let (xn, fn_, ok) = backtrack(f, &x, fx, &g, &dir);
            if !ok {
                break;
            }
            x = xn;
            fx = fn_;
            g = DVector::from_vec(numerical_gradient(f, x.as_slice()));
            continue;
        }

        let (x_new, f_new, ok) = backtrack(f, &x, fx, &g, &dir);
        if !ok {
            break;
        }
        let g_new = DVector::from_vec(numerical_gradient(f, x_new.as_slice()));
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let i_mat = DMatrix::<f64>::identity(n, n);
            let left = &i_mat - rho * &s * yv.transpose();
            let right = &i_mat - rho * &yv * s.transpose();
            h_inv = &left * h_inv * &right + rho * &s * s.transpose();
        }

        let f_change = (fx - f_new).abs() / fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if g.norm() < tol || f_change < 1e-12 {
            converged = true;
            break;
        }
    }

    OptimResult {
        x: x.as_slice().to_vec(),
        fval: fx,
        converged,
        iterations: iter,
    }
}

fn backtrack<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
    dir: &DVector<f64>,
) -> (DVector<f64>, f64, bool) {
    let slope = g.dot(dir);
    let mut step = 1.0;
    for _ in 0..50 {
        let x_new = x + step * dir;
        let f_new = f(x_new.as_slice());
        if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
            return (x_new, f_new, true);
        }
        step *= 0.5;
    }
    (x.clone(), fx, false)
}

/// Nelder-Mead simplex, used to polish BFGS results on rough surfaces.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
    tol: f64,
) -> OptimResult {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += scale * x0[i].abs().max(0.1);
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iter = 0;
    while iter < max_iter {
        iter += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if (fvals[worst] - fvals[best]).abs() <= tol * (fvals[best].abs().max(1.0)) {
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for k in 0..n {
                centroid[k] += simplex[i][k] / n as f64;
            }
        }

        let point = |coef: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + coef * (centroid[k] - simplex[worst][k]))
                .collect()
        };

        let refl = point(1.0);
        let f_refl = f(&refl);
        if f_refl < fvals[best] {
            let exp = point(2.0);
            let f_exp = f(&exp);
            if f_exp < f_refl {
                simplex[worst] = exp;
                fvals[worst] = f_exp;
            } else {
                simplex[worst] = refl;
                fvals[worst] = f_refl;
            }
        } else if f_refl < fvals[second_worst] {
            simplex[worst] = refl;
            fvals[worst] = f_refl;
        } else {
            let contr = point(-0.5);
            let f_contr = f(&contr);
            if f_contr < fvals[worst] {
                simplex[worst] = contr;
                fvals[worst] = f_contr;
            } else {
                // shrink towards the best vertex
                let best_pt = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for k in 0..n {
                        simplex[i][k] = best_pt[k] + 0.5 * (simplex[i][k] - best_pt[k]);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }

    let (best, &fbest) = fvals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    OptimResult {
        x: simplex[best].clone(),
        fval: fbest,
        converged: iter < max_iter,
        iterations: iter,
    }
}

/// BFGS followed by a Nelder-Mead polish; returns the better of the two.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], max_iter: usize, tol: f64) -> OptimResult {
    let r1 = bfgs(f, x0, max_iter, tol);
    let r2 = nelder_mead(f, &r1.x, 0.05, max_iter, 1e-12);
    if r2.fval < r1.fval {
        OptimResult {
            converged: r1.converged || r2.converged,
            ..r2
        }
    } else {
        r1
    }
}

/// Central-difference Hessian of `f` at `x`.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let f0 = f(x);
    let steps: Vec<f64> = x.iter().map(|&xi| (f64::EPSILON.powf(0.25)) * xi.abs().max(1.0)).collect();
    let mut xp = x.to_vec();
    for i in 0..n {
        // diagonal
        xp[i] = x[i] + steps[i];
        let fp = f(&xp);
        xp[i] = x[i] - steps[i];
        let fm = f(&xp);
        xp[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..n {
            xp[i] = x[i] + steps[i];
            xp[j] = x[j] + steps[j];
            let fpp = f(&xp);
            xp[j] = x[j] - steps[j];
            let fpm = f(&xp);
            xp[i] = x[i] - steps[i];
            xp[j] = x[j] + steps[j];
            let fmp = f(&xp);
            xp[j] = x[j] - steps[j];
            let fmm = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Standard errors from the inverse of a (negative log-likelihood) Hessian.
/// Entries are NaN where the inverse diagonal is non-positive.
pub fn standard_errors(hessian: &DMatrix<f64>) -> Vec<f64> {
    match hessian.clone().try_inverse() {
        Some(inv) => (0..hessian.nrows())
            .map(|i| {
                let v = inv[(i, i)];
                if v > 0.0 {
                    v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; hessian.nrows()],
    }
}
