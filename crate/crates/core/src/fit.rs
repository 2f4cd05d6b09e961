//! Small least-squares toolkit: linear solves and a Levenberg–Marquardt loop
//! with a forward-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the residual sum by less than this
    /// fraction.
    pub rel_tolerance: f64,
    /// Relative forward-difference step.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, rel_tolerance: 1e-10, fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn jacobian(f: &dyn Fn(&[f64], &mut [f64]), p: &[f64], r0: &[f64], step: f64) -> DMatrix<f64> {
    let (m, n) = (r0.len(), p.len());
    let mut jac = DMatrix::zeros(m, n);
    let mut q = p.to_vec();
    let mut r = vec![0.0; m];
    for k in 0..n {
        let h = step * p[k].abs().max(1e-3);
        q[k] = p[k] + h;
        f(&q, &mut r);
        for i in 0..m {
            jac[(i, k)] = (r[i] - r0[i]) / h;
        }
        q[k] = p[k];
    }
    jac
}

/// Minimizes `Σ r_i(p)²`. `f` writes the `n_residuals` residuals for a
/// parameter vector.
pub fn levenberg_marquardt(
    f: &dyn Fn(&[f64], &mut [f64]),
    n_residuals: usize,
    p0: &[f64],
    opts: &LmOptions,
) -> Result<LmResult> {
    let n = p0.len();
    if n_residuals < n {
        return Err(Error::invalid(format!("{n_residuals} residuals cannot determine {n} parameters")));
    }
    let mut p = p0.to_vec();
    let mut r = vec![0.0; n_residuals];
    f(&p, &mut r);
    let mut rss: f64 = r.iter().map(|v| v * v).sum();
    if !rss.is_finite() {
        return Err(Error::numerical("residuals are not finite at the starting point"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n_residuals];
    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(f, &p, &r, opts.fd_step);
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            f(&q, &mut trial);
            let new_rss: f64 = trial.iter().map(|v| v * v).sum();
            if new_rss.is_finite() && new_rss <= rss {
                let improvement = rss - new_rss;
                p = q;
                std::mem::swap(&mut r, &mut trial);
                let old = rss;
                rss = new_rss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement <= opts.rel_tolerance * old || rss == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No downhill step at any damping: a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    let jac = jacobian(f, &p, &r, opts.fd_step);
    // Unidentifiable directions keep the fitted values but get infinite errors.
    let (covariance, std_errors) =
        covariance(&jac, rss).unwrap_or_else(|_| (DMatrix::from_element(n, n, f64::NAN), vec![f64::INFINITY; n]));
    Ok(LmResult { params: p, std_errors, covariance, rss, iterations, converged })
}

/// `(JᵀJ)⁻¹ · rss/(n − p)` and the square roots of its diagonal.
pub fn covariance(jac: &DMatrix<f64>, rss: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (m, n) = jac.shape();
    let jtj = jac.transpose() * jac;
    let inv = jtj
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| jtj.try_inverse())
        .ok_or_else(|| Error::numerical("singular normal matrix; parameters are not identifiable"))?;
    let dof = (m.saturating_sub(n)).max(1) as f64;
    let cov = inv * (rss / dof);
    let se = (0..n).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    Ok((cov, se))
}

/// Ordinary least squares `y ≈ X β`; returns `(β, standard errors, rss)`.
pub fn linear_least_squares(design: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if design.nrows() != y.len() {
        return Err(Error::invalid("design matrix and data differ in length"));
    }
    if design.nrows() < design.ncols() {
        return Err(Error::invalid("fewer data points than parameters"));
    }
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(&yv, 1e-12).map_err(|e| Error::numerical(e.to_string()))?;
    let resid = design * &beta - &yv;
    let rss = resid.norm_squared();
    let (_, se) = covariance(design, rss)?;
    Ok((beta.iter().copied().collect(), se, rss))
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Bisection root of `f` on a bracketing interval.
pub fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::numerical("root is not bracketed"));
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) / 2.0 < tol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
