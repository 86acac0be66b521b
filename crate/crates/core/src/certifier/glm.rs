use serde::{Deserialize, Serialize};

use crate::objectives::GlmInstance;
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmLocalizationReport {
    /// `‖w − w*‖` per point.
    pub distances: Vec<f64>,
    /// `(C₁B/(γ²λ))·√((d(C₂ + ln(nBR)) + ln(1/δ))/n)`
    pub bound: f64,
    pub within_bound: Vec<bool>,
    /// Covariance eigenvalue used: the population value when the generator
    /// knows it, else the empirical minimum.
    pub lambda_used: f64,
}

/// Distances of the given points to `w*` and the localization radius for
/// caller-supplied universal constants `(C₁, C₂)` and confidence `δ`.
pub fn glm_stationary_localization(
    inst: &GlmInstance,
    points: &[Vector],
    constants: (f64, f64),
    delta: f64,
) -> Result<GlmLocalizationReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (c1, c2) = constants;
    let lambda = inst.lambda_population.unwrap_or(inst.lambda_min_cov);
    let (n, d) = (inst.n_samples() as f64, inst.dim() as f64);
    let log_term = d * (c2 + (n * inst.b * inst.r).ln()) + (1.0 / delta).ln();
    let bound = c1 * inst.b / (inst.gamma * inst.gamma * lambda) * (log_term / n).sqrt();
    let mut distances = Vec::with_capacity(points.len());
    for w in points {
        if w.len() != inst.dim() {
            return Err(Error::InvalidConfig(format!("point has dim {}, instance has {}", w.len(), inst.dim())));
        }
        distances.push((w - &inst.w_star).norm());
    }
    Ok(GlmLocalizationReport {
        within_bound: distances.iter().map(|&r| r <= bound).collect(),
        distances,
        bound,
        lambda_used: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_glm, Family, FamilyParams, GeneratorSpec};

    #[test]
    fn distance_at_truth_is_zero_and_bound_shrinks_with_n() {
        let mk = |n| {
            let spec = GeneratorSpec::new(Family::Glm, 5, 1).with_params(FamilyParams {
                n: Some(n),
                ..Default::default()
            });
            gen_glm(&spec.resolve().unwrap()).unwrap()
        };
        let small = mk(100);
        let rep = glm_stationary_localization(&small, std::slice::from_ref(&small.w_star), (1.0, 1.0), 0.05).unwrap();
        assert_eq!(rep.distances, vec![0.0]);
        assert_eq!(rep.within_bound, vec![true]);
        assert_eq!(rep.lambda_used, 1.0 / 5.0);
        let large = mk(400);
        let rep4 = glm_stationary_localization(&large, &[], (1.0, 1.0), 0.05).unwrap();
        assert!(rep4.bound < rep.bound);
        assert!(glm_stationary_localization(&small, &[], (1.0, 1.0), 1.5).is_err());
    }
}
