use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{min_eigenvalue, quantile};
use crate::objectives::{mc_objective, McInstance};
use crate::rng::{self, Rng};
use crate::{Error, Objective, Result, Vector};

/// Localization constant `C` in `min ‖x ∓ z‖ ≤ C√ε`.
pub const DEFAULT_LOCALIZATION_CONSTANT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub n_trials: usize,
    pub p: f64,
    pub max_abs_deviation: f64,
    pub quantile_99: f64,
    /// `|⟨P_Ω(zzᵀ), zzᵀ⟩/p − ‖z‖⁴|`
    pub ground_truth_deviation: f64,
}

/// Random signs scaled by `1/√d`, clipped to `‖·‖_∞ ≤ 2μ/√d`, then scaled
/// into the unit ball.
pub fn incoherent_test_vector(d: usize, mu: f64, rng: &mut Rng) -> Vector {
    use rand::Rng as _;
    let scale = 1.0 / (d as f64).sqrt();
    let cap = 2.0 * mu * scale;
    let v = Vector::from_fn(d, |_, _| {
        let s = if rng.random::<bool>() { scale } else { -scale };
        s.clamp(-cap, cap)
    });
    let n = v.norm();
    if n > 1.0 {
        v / n
    } else {
        v
    }
}

/// `Σ_{i≤j in pairs} wᵢⱼ uᵢuⱼvᵢvⱼ` with weight 2 off the diagonal, summed in
/// the given order.
fn pair_sum(pairs: impl Iterator<Item = (usize, usize)>, u: &Vector, v: &Vector) -> f64 {
    pairs
        .map(|(i, j)| {
            let t = u[i] * u[j] * v[i] * v[j];
            if i == j {
                t
            } else {
                2.0 * t
            }
        })
        .sum()
}

fn all_pairs(d: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..d).flat_map(move |i| (i..d).map(move |j| (i, j)))
}

/// Monte-Carlo probe of `|⟨P_Ω(uuᵀ), vvᵀ⟩/p − ⟨uuᵀ, vvᵀ⟩|` over incoherent
/// pairs. Both inner products are summed over pairs in the same order, so
/// a complete mask with `p = 1` yields exactly zero.
pub fn mc_concentration_probe(inst: &McInstance, n_trials: usize, seed: u64) -> Result<ConcentrationReport> {
    let d = inst.dim();
    if n_trials == 0 {
        return Err(Error::Empty("concentration trials"));
    }
    let expected = inst.p * (d * d) as f64;
    if expected < 10.0 {
        return Err(Error::InvalidConfig(format!(
            "p·d² = {expected} is below 10; too few expected observations to probe"
        )));
    }
    let omega = &inst.omega;
    let deviation = |u: &Vector, v: &Vector| {
        let observed = pair_sum(omega.iter().copied(), u, v) / inst.p;
        let full = pair_sum(all_pairs(d), u, v);
        (observed - full).abs()
    };
    let devs: Vec<f64> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, "certifier/concentration", t as u64);
            let u = incoherent_test_vector(d, inst.mu, &mut r);
            let v = incoherent_test_vector(d, inst.mu, &mut r);
            deviation(&u, &v)
        })
        .collect();
    Ok(ConcentrationReport {
        n_trials,
        p: inst.p,
        max_abs_deviation: devs.iter().copied().fold(0.0, f64::max),
        quantile_99: quantile(&devs, 0.99).expect("non-empty"),
        ground_truth_deviation: deviation(&inst.z, &inst.z),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McClaimReport {
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    /// `⟨x,z⟩² − (‖x‖⁴ − ε)`
    pub claim1_margin: f64,
    /// `‖x‖² − (1/3 − ε/3)`
    pub claim2_margin: f64,
    /// `min(‖x − z‖, ‖x + z‖)`
    pub distance_to_truth: f64,
    /// `C√ε`
    pub localization_bound: f64,
    pub passed: bool,
}

pub fn mc_claim_check(inst: &McInstance, x: &Vector, epsilon: f64) -> Result<McClaimReport> {
    mc_claim_check_with(inst, x, epsilon, DEFAULT_LOCALIZATION_CONSTANT)
}

/// Evaluates both claim inequalities and the localization bound at `x`,
/// which must lie in `B = {‖x‖_∞ < 2μ/√d}`. The first- and second-order
/// stationarity of `x` is measured and reported, not enforced.
pub fn mc_claim_check_with(
    inst: &McInstance,
    x: &Vector,
    epsilon: f64,
    localization_constant: f64,
) -> Result<McClaimReport> {
    if x.len() != inst.dim() {
        return Err(Error::InvalidConfig(format!("point has dim {}, instance has {}", x.len(), inst.dim())));
    }
    if !inst.in_domain(x) {
        return Err(Error::OutOfDomain(format!(
            "‖x‖_∞ = {} is not below 2μ/√d = {}",
            crate::linalg::inf_norm(x),
            inst.domain_radius()
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    let obj = mc_objective(inst);
    let n2 = x.norm_squared();
    let xz = x.dot(&inst.z);
    let claim1_margin = xz * xz - (n2 * n2 - epsilon);
    let claim2_margin = n2 - (1.0 / 3.0 - epsilon / 3.0);
    let distance_to_truth = (x - &inst.z).norm().min((x + &inst.z).norm());
    let localization_bound = localization_constant * epsilon.sqrt();
    Ok(McClaimReport {
        grad_norm: obj.gradient(x).norm(),
        hess_min_eig: min_eigenvalue(&obj.hessian(x)),
        claim1_margin,
        claim2_margin,
        distance_to_truth,
        localization_bound,
        passed: claim1_margin >= 0.0 && claim2_margin >= 0.0 && distance_to_truth <= localization_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_mc, Family, FamilyParams, GeneratorSpec};

    fn instance(d: usize, p: f64, seed: u64) -> McInstance {
        let spec = GeneratorSpec::new(Family::Mc, d, seed).with_params(FamilyParams {
            epsilon: Some(0.1),
            p: Some(p),
            ..Default::default()
        });
        gen_mc(&spec.resolve().unwrap()).unwrap()
    }

    #[test]
    fn complete_mask_has_zero_deviation() {
        let inst = instance(40, 1.0, 3);
        assert!(inst.is_complete());
        let rep = mc_concentration_probe(&inst, 50, 1).unwrap();
        assert_eq!(rep.max_abs_deviation, 0.0);
        assert_eq!(rep.quantile_99, 0.0);
        assert_eq!(rep.ground_truth_deviation, 0.0);
    }

    #[test]
    fn ground_truth_deviation_matches_direct_evaluation() {
        let inst = instance(60, 0.5, 8);
        let rep = mc_concentration_probe(&inst, 20, 1).unwrap();
        let z = &inst.z;
        let direct = inst.observed_sum(|i, j| (z[i] * z[j]).powi(2)) / inst.p - z.norm_squared().powi(2);
        assert!((rep.ground_truth_deviation - direct.abs()).abs() < 1e-12);
        assert!(rep.max_abs_deviation > 0.0);
    }

    #[test]
    fn too_sparse_to_probe() {
        let mut inst = instance(40, 1.0, 3);
        inst.p = 1e-3;
        assert!(mc_concentration_probe(&inst, 10, 1).is_err());
    }

    #[test]
    fn incoherent_vectors_respect_bounds() {
        let mut r = rng::stream(0, "t", 0);
        for mu in [0.25, 1.0] {
            let v = incoherent_test_vector(50, mu, &mut r);
            assert!(v.norm() <= 1.0 + 1e-12);
            assert!(crate::linalg::inf_norm(&v) <= 2.0 * mu / 50f64.sqrt() + 1e-15);
        }
    }

    #[test]
    fn claims_at_ground_truth() {
        let inst = instance(30, 1.0, 2);
        let rep = mc_claim_check(&inst, &inst.z, 0.1).unwrap();
        assert!((rep.claim1_margin - 0.1).abs() < 1e-12);
        assert!(rep.claim2_margin > 0.0);
        assert!(rep.distance_to_truth < 1e-15);
        assert!(rep.grad_norm < 1e-12);
        assert!(rep.passed);
    }

    #[test]
    fn claim_margins_by_plug_in() {
        let inst = instance(30, 1.0, 2);
        let x = &inst.z * (1.0 + 1e-3);
        let rep = mc_claim_check(&inst, &x, 0.1).unwrap();
        let s: f64 = 1.0 + 1e-3;
        assert!((rep.claim1_margin - (s.powi(2) - s.powi(4) + 0.1)).abs() < 1e-12);
        assert!((rep.distance_to_truth - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn claim_check_rejects_points_outside_domain() {
        let inst = instance(30, 1.0, 2);
        let mut x = inst.z.clone();
        x[0] = 1.0;
        assert!(matches!(mc_claim_check(&inst, &x, 0.1), Err(Error::OutOfDomain(_))));
    }
}
