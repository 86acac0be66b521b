//! Fixed-step first-order methods and a geometric-decay fit for their traces.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::linalg::uniform_ball;
use crate::sphere::{retract, riemannian_grad, SpherePoint};
use crate::{rng, Error, Objective, Result, Vector};

/// Iterates are stored in full up to this dimension, every 10th above it.
const FULL_TRACE_MAX_DIM: usize = 50;
const THIN_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdConfig {
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl GdConfig {
    pub fn new(step_size: f64, max_iters: usize, grad_tol: f64) -> Result<Self> {
        let cfg = Self {
            step_size,
            max_iters,
            grad_tol,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// `1 / (8·bound)` where `bound ≥ λ₁(M)`, e.g. `‖M‖_F`. Keeps PCA and
/// matrix-completion descent stable on the region the iterates visit.
pub fn default_factorization_step(spectral_bound: f64) -> f64 {
    1.0 / (8.0 * spectral_bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbedGdConfig {
    pub base: GdConfig,
    pub perturb_radius: f64,
    pub perturb_grad_threshold: f64,
    pub perturb_cooldown_iters: usize,
    /// A perturbation counts as an escape when, once the gradient is small
    /// again after the cooldown window, the value has dropped by more than
    /// this below the pre-perturbation value.
    pub escape_decrease: f64,
}

impl PerturbedGdConfig {
    /// Radius `1e-3`, threshold `10·grad_tol`, cooldown `⌈2/step⌉`.
    pub fn from_base(base: GdConfig) -> Self {
        Self {
            base,
            perturb_radius: 1e-3,
            perturb_grad_threshold: 10.0 * base.grad_tol,
            perturb_cooldown_iters: (2.0 / base.step_size).ceil().max(1.0) as usize,
            escape_decrease: 1e-10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.perturb_radius > 0.0) {
            return Err(Error::InvalidConfig("perturb_radius must be positive".into()));
        }
        if !(self.perturb_grad_threshold > 0.0) {
            return Err(Error::InvalidConfig("perturb_grad_threshold must be positive".into()));
        }
        if self.perturb_cooldown_iters < 1 {
            return Err(Error::InvalidConfig("perturb_cooldown_iters must be at least 1".into()));
        }
        if !(self.escape_decrease >= 0.0) {
            return Err(Error::InvalidConfig("escape_decrease must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    GradTol,
    MaxIters,
}

/// Per-iteration history. `values[k]` and `grad_norms[k]` describe iterate
/// `k`; `points` holds a (possibly thinned) subset, with `point_iters` the
/// matching iteration indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerTrace {
    pub points: Vec<Vector>,
    pub point_iters: Vec<usize>,
    pub values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub termination: Termination,
    pub perturbation_events: Vec<usize>,
    pub final_point: Vector,
}

impl OptimizerTrace {
    /// Number of update steps taken.
    pub fn iterations(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("trace has at least one iterate")
    }

    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norms.last().expect("trace has at least one iterate")
    }

    /// CSV with columns `iter,value,grad_norm,perturbed_flag`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "value", "grad_norm", "perturbed_flag"])?;
        let mut events = self.perturbation_events.iter().peekable();
        for (k, (v, g)) in self.values.iter().zip(&self.grad_norms).enumerate() {
            let flag = if events.peek() == Some(&&k) {
                events.next();
                1
            } else {
                0
            };
            w.write_record([k.to_string(), v.to_string(), g.to_string(), flag.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

struct Recorder {
    stride: usize,
    trace: OptimizerTrace,
}

impl Recorder {
    fn new(dim: usize) -> Self {
        Self {
            stride: if dim <= FULL_TRACE_MAX_DIM { 1 } else { THIN_STRIDE },
            trace: OptimizerTrace {
                points: Vec::new(),
                point_iters: Vec::new(),
                values: Vec::new(),
                grad_norms: Vec::new(),
                termination: Termination::MaxIters,
                perturbation_events: Vec::new(),
                final_point: Vector::zeros(dim),
            },
        }
    }

    fn record(&mut self, k: usize, x: &Vector, value: f64, grad_norm: f64) {
        self.trace.values.push(value);
        self.trace.grad_norms.push(grad_norm);
        if k.is_multiple_of(self.stride) {
            self.trace.points.push(x.clone());
            self.trace.point_iters.push(k);
        }
    }

    fn finish(mut self, k: usize, x: Vector, termination: Termination) -> OptimizerTrace {
        if self.trace.point_iters.last() != Some(&k) {
            self.trace.points.push(x.clone());
            self.trace.point_iters.push(k);
        }
        self.trace.final_point = x;
        self.trace.termination = termination;
        self.trace
    }
}

fn evaluate(obj: &dyn Objective, x: &Vector, k: usize) -> Result<(f64, Vector)> {
    let f = obj.value(x);
    let g = obj.gradient(x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { iteration: k });
    }
    Ok((f, g))
}

/// `x ← x − step·∇f(x)` until `‖∇f‖ ≤ grad_tol` or `max_iters` steps.
pub fn gradient_descent(obj: &dyn Objective, x0: &Vector, cfg: &GdConfig) -> Result<OptimizerTrace> {
    cfg.validate()?;
    let mut rec = Recorder::new(x0.len());
    let mut x = x0.clone();
    for k in 0..=cfg.max_iters {
        let (f, g) = evaluate(obj, &x, k)?;
        let gn = g.norm();
        rec.record(k, &x, f, gn);
        if gn <= cfg.grad_tol {
            return Ok(rec.finish(k, x, Termination::GradTol));
        }
        if k == cfg.max_iters {
            return Ok(rec.finish(k, x, Termination::MaxIters));
        }
        x -= g * cfg.step_size;
    }
    unreachable!("loop returns on its last iteration")
}

/// Gradient descent with saddle-escaping noise.
///
/// Whenever `‖∇f‖ ≤ perturb_grad_threshold` and the previous perturbation is
/// at least `perturb_cooldown_iters` old, a uniform draw from the ball of
/// radius `perturb_radius` is added. Once the gradient is small again after
/// a full cooldown window without the value having dropped by
/// `escape_decrease`, the escape has failed: the point is an approximate
/// second-order stationary point, and plain descent polishes it to
/// `grad_tol`.
pub fn perturbed_gradient_descent(
    obj: &dyn Objective,
    x0: &Vector,
    cfg: &PerturbedGdConfig,
    seed: u64,
) -> Result<OptimizerTrace> {
    cfg.validate()?;
    let base = &cfg.base;
    let mut noise = rng::stream(seed, "pgd/perturbation", 0);
    let mut rec = Recorder::new(x0.len());
    let mut x = x0.clone();
    let mut anchor: Option<(usize, f64)> = None;
    let mut polishing = false;
    for k in 0..=base.max_iters {
        let (f, g) = evaluate(obj, &x, k)?;
        let gn = g.norm();
        if polishing {
            if gn <= base.grad_tol {
                rec.record(k, &x, f, gn);
                return Ok(rec.finish(k, x, Termination::GradTol));
            }
        } else if gn <= cfg.perturb_grad_threshold {
            match anchor {
                Some((at, _)) if k - at < cfg.perturb_cooldown_iters => {}
                Some((_, f_anchor)) if f_anchor - f <= cfg.escape_decrease => {
                    polishing = true;
                    if gn <= base.grad_tol {
                        rec.record(k, &x, f, gn);
                        return Ok(rec.finish(k, x, Termination::GradTol));
                    }
                }
                _ => {
                    rec.record(k, &x, f, gn);
                    rec.trace.perturbation_events.push(k);
                    anchor = Some((k, f));
                    x += uniform_ball(x.len(), cfg.perturb_radius, &mut noise);
                    if k == base.max_iters {
                        return Ok(rec.finish(k, x, Termination::MaxIters));
                    }
                    continue;
                }
            }
        }
        rec.record(k, &x, f, gn);
        if k == base.max_iters {
            return Ok(rec.finish(k, x, Termination::MaxIters));
        }
        x -= g * base.step_size;
    }
    unreachable!("loop returns on its last iteration")
}

/// Riemannian gradient ascent on the unit sphere for an ambient objective:
/// `x ← retract(x, step·grad f(x))`, stopping on `‖grad f‖ ≤ grad_tol`.
pub fn riemannian_ascent(obj: &dyn Objective, x0: &SpherePoint, cfg: &GdConfig) -> Result<OptimizerTrace> {
    cfg.validate()?;
    let mut rec = Recorder::new(x0.len());
    let mut x = x0.clone();
    for k in 0..=cfg.max_iters {
        let f = obj.value(&x);
        let rg = riemannian_grad(obj, &x).vec;
        if !f.is_finite() || rg.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: k });
        }
        let gn = rg.norm();
        rec.record(k, &x, f, gn);
        if gn <= cfg.grad_tol {
            return Ok(rec.finish(k, x.into_inner(), Termination::GradTol));
        }
        if k == cfg.max_iters {
            return Ok(rec.finish(k, x.into_inner(), Termination::MaxIters));
        }
        x = retract(&x, &(rg * cfg.step_size))?;
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub is_geometric: bool,
    /// Fitted per-iteration contraction factor `exp(slope)` of `f − f*`.
    pub rate: f64,
    pub r_squared: f64,
    pub n_used: usize,
}

pub const MIN_DECAY_POINTS: usize = 10;
pub const GEOMETRIC_R2: f64 = 0.99;

/// Least-squares fit of `log(f(x_k) − f*)` against `k` over the prefix of
/// the trace where the gap is still above the rounding floor
/// (`1e3·ε_mach·max(1, |f*|)`). Geometric iff the slope is negative and the
/// fit has `R² ≥ 0.99`.
pub fn geometric_decay_check(trace: &OptimizerTrace, f_star: f64) -> Result<DecayFit> {
    let floor = 1e3 * f64::EPSILON * f_star.abs().max(1.0);
    let logs: Vec<f64> = trace
        .values
        .iter()
        .map(|v| v - f_star)
        .take_while(|&gap| gap > floor)
        .map(f64::ln)
        .collect();
    let n = logs.len();
    if n < MIN_DECAY_POINTS {
        return Err(Error::TooFewIterations {
            needed: MIN_DECAY_POINTS,
            got: n,
        });
    }
    let nf = n as f64;
    let mean_k = (nf - 1.0) / 2.0;
    let mean_y = logs.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, y) in logs.iter().enumerate() {
        let dk = k as f64 - mean_k;
        let dy = y - mean_y;
        sxy += dk * dy;
        sxx += dk * dk;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(DecayFit {
        is_geometric: slope < 0.0 && r_squared >= GEOMETRIC_R2,
        rate: slope.exp(),
        r_squared,
        n_used: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{FnObjective, Quadratic};
    use crate::Matrix;

    fn half_norm(d: usize) -> Quadratic {
        Quadratic::new(Matrix::identity(d, d))
    }

    #[test]
    fn gd_on_half_norm_contracts_by_a_quarter() {
        let f = half_norm(3);
        let cfg = GdConfig::new(0.5, 200, 1e-12).unwrap();
        let trace = gradient_descent(&f, &Vector::from_element(3, 1.0), &cfg).unwrap();
        assert_eq!(trace.termination, Termination::GradTol);
        for w in trace.values.windows(2) {
            assert!((w[1] / w[0] - 0.25).abs() < 1e-12);
        }
        assert!(trace.final_point.norm() < 1e-12);
    }

    #[test]
    fn gd_stalls_at_stationary_start() {
        let f = half_norm(2);
        let cfg = GdConfig::new(0.1, 100, 1e-8).unwrap();
        let trace = gradient_descent(&f, &Vector::zeros(2), &cfg).unwrap();
        assert_eq!(trace.iterations(), 0);
        assert_eq!(trace.termination, Termination::GradTol);
    }

    #[test]
    fn gd_reports_divergence_iteration() {
        let f = half_norm(2);
        let cfg = GdConfig::new(1e10, 1000, 1e-8).unwrap();
        let err = gradient_descent(&f, &Vector::from_element(2, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { iteration } if iteration > 0));
    }

    #[test]
    fn gd_hits_iteration_cap() {
        let f = half_norm(2);
        let cfg = GdConfig::new(1e-3, 5, 1e-12).unwrap();
        let trace = gradient_descent(&f, &Vector::from_element(2, 1.0), &cfg).unwrap();
        assert_eq!(trace.termination, Termination::MaxIters);
        assert_eq!(trace.iterations(), 5);
        assert_eq!(trace.values.len(), trace.grad_norms.len());
    }

    #[test]
    fn config_validation() {
        assert!(GdConfig::new(0.0, 10, 1e-6).is_err());
        assert!(GdConfig::new(0.1, 10, 0.0).is_err());
        let mut p = PerturbedGdConfig::from_base(GdConfig::new(0.1, 10, 1e-6).unwrap());
        assert_eq!(p.perturb_cooldown_iters, 20);
        assert!((p.perturb_grad_threshold - 1e-5).abs() < 1e-20);
        p.perturb_cooldown_iters = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn pgd_on_convex_quadratic_matches_gd() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 3.0]));
        let f = Quadratic::new(a);
        let base = GdConfig::new(0.2, 10_000, 1e-9).unwrap();
        let x0 = Vector::from_vec(vec![1.0, -1.0, 0.5]);
        let gd = gradient_descent(&f, &x0, &base).unwrap();
        let pgd = perturbed_gradient_descent(&f, &x0, &PerturbedGdConfig::from_base(base), 3).unwrap();
        assert_eq!(pgd.termination, Termination::GradTol);
        assert!(!pgd.perturbation_events.is_empty());
        assert!((gd.final_point - pgd.final_point).norm() <= 1e-8);
    }

    #[test]
    fn pgd_escapes_saddle_of_two_dim_function() {
        // f = x² − y² + y⁴/2 has a strict saddle at 0 and minima at (0, ±1)
        let f = FnObjective::new(
            2,
            |v| v[0] * v[0] - v[1] * v[1] + 0.5 * v[1].powi(4),
            |v| Vector::from_vec(vec![2.0 * v[0], -2.0 * v[1] + 2.0 * v[1].powi(3)]),
            |v| Matrix::from_diagonal(&Vector::from_vec(vec![2.0, -2.0 + 6.0 * v[1] * v[1]])),
        );
        let base = GdConfig::new(0.05, 100_000, 1e-10).unwrap();
        let cfg = PerturbedGdConfig::from_base(base);
        let plain = gradient_descent(&f, &Vector::zeros(2), &base).unwrap();
        assert_eq!(plain.final_point, Vector::zeros(2));
        let trace = perturbed_gradient_descent(&f, &Vector::zeros(2), &cfg, 11).unwrap();
        assert_eq!(trace.termination, Termination::GradTol);
        assert!((trace.final_point[1].abs() - 1.0).abs() < 1e-8);
        assert!((trace.final_value() + 0.5).abs() < 1e-12);
        assert_eq!(trace.perturbation_events[0], 0);
    }

    #[test]
    fn trace_csv_marks_perturbations() {
        let trace = OptimizerTrace {
            points: vec![],
            point_iters: vec![],
            values: vec![3.0, 2.0, 1.5],
            grad_norms: vec![1.0, 0.5, 0.25],
            termination: Termination::MaxIters,
            perturbation_events: vec![1],
            final_point: Vector::zeros(1),
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "iter,value,grad_norm,perturbed_flag\n0,3,1,0\n1,2,0.5,1\n2,1.5,0.25,0\n");
    }

    #[test]
    fn thinning_above_fifty_dimensions() {
        let f = half_norm(60);
        let cfg = GdConfig::new(0.01, 25, 1e-12).unwrap();
        let trace = gradient_descent(&f, &Vector::from_element(60, 1.0), &cfg).unwrap();
        assert_eq!(trace.point_iters, vec![0, 10, 20, 25]);
        assert_eq!(trace.values.len(), 26);
    }

    #[test]
    fn decay_check_needs_iterations() {
        let f = half_norm(2);
        let cfg = GdConfig::new(0.5, 100, 1e-8).unwrap();
        let trace = gradient_descent(&f, &Vector::zeros(2), &cfg).unwrap();
        assert!(matches!(
            geometric_decay_check(&trace, 0.0),
            Err(Error::TooFewIterations { .. })
        ));
    }

    #[test]
    fn decay_on_quartic_is_not_geometric() {
        // x⁴ from 1: the GD recursion x ← x − 4ηx³ decays like 1/√k
        let f = FnObjective::new(
            1,
            |v| v[0].powi(4),
            |v| Vector::from_element(1, 4.0 * v[0].powi(3)),
            |v| Matrix::from_element(1, 1, 12.0 * v[0] * v[0]),
        );
        let cfg = GdConfig::new(0.05, 2000, 1e-12).unwrap();
        let trace = gradient_descent(&f, &Vector::from_element(1, 1.0), &cfg).unwrap();
        let fit = geometric_decay_check(&trace, 0.0).unwrap();
        assert!(!fit.is_geometric, "{fit:?}");
    }

    #[test]
    fn decay_on_quadratic_is_geometric() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 2.0, 4.0]));
        let f = Quadratic::new(a);
        let cfg = GdConfig::new(1.0 / 8.0, 10_000, 1e-12).unwrap();
        let trace = gradient_descent(&f, &Vector::from_element(3, 1.0), &cfg).unwrap();
        let fit = geometric_decay_check(&trace, 0.0).unwrap();
        assert!(fit.is_geometric, "{fit:?}");
        assert!(fit.rate < 1.0);
    }
}
