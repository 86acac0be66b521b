//! Central finite-difference oracles.
//!
//! These are the ground truth every analytic gradient and Hessian in the
//! crate is checked against. Relative errors are measured against
//! `max(1, ‖FD result‖)` so that stationary points, where both sides are
//! near zero, do not blow the ratio up.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Objective, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    #[default]
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub step_h: f64,
    #[serde(default)]
    pub scheme: FdScheme,
    pub rel_tol: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            step_h: 1e-5,
            scheme: FdScheme::Central,
            rel_tol: 1e-5,
        }
    }
}

impl FdConfig {
    pub fn new(step_h: f64, rel_tol: f64) -> Result<Self> {
        let cfg = Self {
            step_h,
            scheme: FdScheme::Central,
            rel_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::InvalidConfig(format!("step_h must be positive, got {}", self.step_h)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("rel_tol must be positive, got {}", self.rel_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheckReport {
    pub max_rel_err_grad: f64,
    pub max_rel_err_hess: f64,
    /// Index of the point with the largest combined error.
    pub worst_point_index: usize,
    pub passed: bool,
}

fn probe(f: &impl Fn(&Vector) -> f64, x: &Vector, coordinate: usize) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteProbe { coordinate })
    }
}

/// `(f(x + h eᵢ) − f(x − h eᵢ)) / 2h` for every coordinate.
pub fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, cfg: &FdConfig) -> Result<Vector> {
    cfg.validate()?;
    let h = cfg.step_h;
    let mut g = Vector::zeros(x.len());
    let mut probe_x = x.clone();
    for i in 0..x.len() {
        probe_x[i] = x[i] + h;
        let fp = probe(&f, &probe_x, i)?;
        probe_x[i] = x[i] - h;
        let fm = probe(&f, &probe_x, i)?;
        probe_x[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Hessian by central second differences of `f`, symmetrized.
///
/// Diagonal: `(f(x+heᵢ) − 2f(x) + f(x−heᵢ)) / h²`.
/// Off-diagonal: the four-point stencil `(f(++) − f(+−) − f(−+) + f(−−)) / 4h²`.
pub fn fd_hessian(f: impl Fn(&Vector) -> f64, x: &Vector, cfg: &FdConfig) -> Result<Matrix> {
    cfg.validate()?;
    let h = cfg.step_h;
    let d = x.len();
    let f0 = probe(&f, x, 0)?;
    let mut hess = Matrix::zeros(d, d);
    let mut p = x.clone();
    for i in 0..d {
        p[i] = x[i] + h;
        let fp = probe(&f, &p, i)?;
        p[i] = x[i] - h;
        let fm = probe(&f, &p, i)?;
        p[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut eval = |si: f64, sj: f64| {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = probe(&f, &p, j);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let fpp = eval(1.0, 1.0)?;
            let fpm = eval(1.0, -1.0)?;
            let fmp = eval(-1.0, 1.0)?;
            let fmm = eval(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Central-difference Jacobian of a vector field, symmetrized. Applied to an
/// analytic gradient this yields a Hessian oracle with `O(ε/h)` rounding
/// error instead of the `O(ε/h²)` of second differences of values.
pub fn fd_jacobian_sym(grad: impl Fn(&Vector) -> Vector, x: &Vector, cfg: &FdConfig) -> Result<Matrix> {
    cfg.validate()?;
    let h = cfg.step_h;
    let d = x.len();
    let mut jac = Matrix::zeros(d, d);
    let mut p = x.clone();
    for j in 0..d {
        p[j] = x[j] + h;
        let gp = grad(&p);
        p[j] = x[j] - h;
        let gm = grad(&p);
        p[j] = x[j];
        if gp.iter().chain(gm.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteProbe { coordinate: j });
        }
        jac.set_column(j, &((gp - gm) / (2.0 * h)));
    }
    Ok(crate::linalg::symmetrize(&jac))
}

fn rel_err(analytic: f64, reference: f64) -> f64 {
    analytic / reference.max(1.0)
}

/// Compares `obj.gradient` / `obj.hessian` with finite-difference oracles at
/// every point and reports the worst relative errors.
///
/// The gradient is checked against differences of `obj.value`; the Hessian
/// against central differences of `obj.gradient`. Since the gradient is
/// itself validated against the values, a pass certifies all three agree.
pub fn check_objective_derivatives(
    obj: &dyn Objective,
    points: &[Vector],
    cfg: &FdConfig,
) -> Result<DerivativeCheckReport> {
    if points.is_empty() {
        return Err(Error::Empty("derivative check needs at least one point"));
    }
    cfg.validate()?;
    let mut max_grad = 0.0_f64;
    let mut max_hess = 0.0_f64;
    let mut worst = (0, f64::NEG_INFINITY);
    for (k, x) in points.iter().enumerate() {
        let fd_g = fd_gradient(|v| obj.value(v), x, cfg)?;
        let fd_h = fd_jacobian_sym(|v| obj.gradient(v), x, cfg)?;
        let eg = rel_err((obj.gradient(x) - &fd_g).norm(), fd_g.norm());
        let eh = rel_err((obj.hessian(x) - &fd_h).norm(), fd_h.norm());
        max_grad = max_grad.max(eg);
        max_hess = max_hess.max(eh);
        if eg.max(eh) > worst.1 {
            worst = (k, eg.max(eh));
        }
    }
    Ok(DerivativeCheckReport {
        max_rel_err_grad: max_grad,
        max_rel_err_hess: max_hess,
        worst_point_index: worst.0,
        passed: max_grad <= cfg.rel_tol && max_hess <= cfg.rel_tol,
    })
}
