//! Landscape verification: point classification, inequality probes and
//! analytic stationary-point oracles.

mod glm;
mod mc;
mod oracles;

pub use glm::{glm_stationary_localization, GlmLocalizationReport};
pub use mc::{
    incoherent_test_vector, mc_claim_check, mc_claim_check_with, mc_concentration_probe, ConcentrationReport,
    McClaimReport, DEFAULT_LOCALIZATION_CONSTANT,
};
pub use oracles::{
    pca_distance_to_global_minima, pca_oracle_sweep, pca_stationary_oracle, tensor_oracle_sweep,
    tensor_stationary_oracle, PcaOracle, PcaStationaryPoint, PcaSweepRow, TensorSweepRow, MAX_ENUMERATION,
};

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::min_eigenvalue;
use crate::rng::{self, Rng};
use crate::sphere::{riemannian_grad, riemannian_hess, tangent_extreme_eigs, SpherePoint};
use crate::{Error, Objective, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierThresholds {
    pub alpha: f64,
    pub beta: f64,
    /// Slack allowed when calling a Hessian positive semidefinite.
    pub hess_psd_tol: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            alpha: 1e-6,
            beta: 1e-6,
            hess_psd_tol: 1e-8,
        }
    }
}

impl ClassifierThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("hess_psd_tol", self.hess_psd_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("certifier.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    LargeGradient,
    StrictSaddle,
    CandidateLocalMin,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::LargeGradient => "LargeGradient",
            Verdict::StrictSaddle => "StrictSaddle",
            Verdict::CandidateLocalMin => "CandidateLocalMin",
        }
    }

    /// The trichotomy: large gradient, else strong negative curvature, else
    /// a candidate local minimum.
    pub fn from_measurements(grad_norm: f64, hess_min_eig: f64, thr: &ClassifierThresholds) -> Self {
        if !(grad_norm < thr.alpha) {
            Verdict::LargeGradient
        } else if hess_min_eig <= -thr.beta {
            Verdict::StrictSaddle
        } else {
            Verdict::CandidateLocalMin
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Geometry {
    Euclidean,
    /// Unit sphere; gradient and Hessian are the Riemannian ones.
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointClassification {
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    pub verdict: Verdict,
    pub dist_to_known_min: Option<f64>,
}

/// Classifies `x` for minimization of `obj`. To classify maxima, pass
/// [`Negated`](crate::objectives::Negated).
pub fn classify_point(
    obj: &dyn Objective,
    x: &Vector,
    thr: &ClassifierThresholds,
    known_minima: Option<&[Vector]>,
    geometry: Geometry,
) -> Result<PointClassification> {
    thr.validate()?;
    let (grad_norm, hess_min_eig) = match geometry {
        Geometry::Euclidean => (obj.gradient(x).norm(), min_eigenvalue(&obj.hessian(x))),
        Geometry::Sphere => {
            let p = SpherePoint::new(x.clone())?;
            let g = riemannian_grad(obj, &p).vec.norm();
            let h = riemannian_hess(obj, &p);
            (g, tangent_extreme_eigs(&h, &p)?.lambda_min)
        }
    };
    let dist_to_known_min = known_minima.map(|ms| ms.iter().map(|m| (x - m).norm()).fold(f64::INFINITY, f64::min));
    Ok(PointClassification {
        grad_norm,
        hess_min_eig,
        verdict: Verdict::from_measurements(grad_norm, hess_min_eig, thr),
        dist_to_known_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionKind {
    /// `⟨∇f(x), x − x*⟩ ≥ τ (f(x) − f(x*))`
    WeakQuasiConvex,
    /// `⟨∇f(x), x − x*⟩ ≥ τ ‖x − x*‖²`
    Rsi,
    /// `‖∇f(x)‖² ≥ μ (f(x) − f(x*))`
    Pl,
}

impl FromStr for ConditionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "weak-quasi-convex" | "weakquasiconvex" | "wqc" => Ok(Self::WeakQuasiConvex),
            "rsi" => Ok(Self::Rsi),
            "pl" => Ok(Self::Pl),
            _ => Err(Error::UnknownCondition(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionProbeReport {
    pub condition: ConditionKind,
    pub parameter: f64,
    pub n_samples: usize,
    pub n_violations: usize,
    /// `min (LHS − RHS)` over the samples.
    pub worst_margin: f64,
    pub worst_index: usize,
}

/// Relative slack below which a negative margin counts as rounding.
const PROBE_ROUNDING: f64 = 1e-10;

/// Checks one of the three inequalities at `n_samples` points drawn by
/// `sampler`. Sample `i` uses its own stream derived from `(seed, i)`, so the
/// report does not depend on thread scheduling.
pub fn probe_condition(
    obj: &dyn Objective,
    x_star: &Vector,
    condition: ConditionKind,
    parameter: f64,
    sampler: &(dyn Fn(&mut Rng) -> Vector + Sync),
    n_samples: usize,
    seed: u64,
) -> Result<ConditionProbeReport> {
    if n_samples == 0 {
        return Err(Error::Empty("probe samples"));
    }
    if !parameter.is_finite() {
        return Err(Error::InvalidConfig(format!("probe parameter must be finite, got {parameter}")));
    }
    let f_star = obj.value(x_star);
    let margins: Vec<(f64, bool)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "certifier/probe", i as u64);
            let x = sampler(&mut r);
            let g = obj.gradient(&x);
            let diff = &x - x_star;
            let (lhs, rhs) = match condition {
                ConditionKind::WeakQuasiConvex => (g.dot(&diff), parameter * (obj.value(&x) - f_star)),
                ConditionKind::Rsi => (g.dot(&diff), parameter * diff.norm_squared()),
                ConditionKind::Pl => (g.norm_squared(), parameter * (obj.value(&x) - f_star)),
            };
            let margin = lhs - rhs;
            let violated = margin < -PROBE_ROUNDING * (1.0 + lhs.abs() + rhs.abs());
            (margin, violated)
        })
        .collect();
    let (worst_index, worst_margin) = margins
        .iter()
        .enumerate()
        .map(|(i, &(m, _))| (i, m))
        .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
    Ok(ConditionProbeReport {
        condition,
        parameter,
        n_samples,
        n_violations: margins.iter().filter(|(_, v)| *v).count(),
        worst_margin,
        worst_index,
    })
}
