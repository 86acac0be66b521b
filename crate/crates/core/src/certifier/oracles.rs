use serde::{Deserialize, Serialize};

use super::{classify_point, ClassifierThresholds, Geometry, Verdict};
use crate::objectives::{pca_objective, tensor_ambient, Negated, PcaInstance, TensorInstance};
use crate::sphere::{riemannian_grad, riemannian_hess, tangent_extreme_eigs, SpherePoint};
use crate::{Error, Objective, Result, Vector};

/// Eigenvalues closer than this (relative to `max(1, λ₁)`) are treated as equal.
const DEGENERACY_TOL: f64 = 1e-10;
pub const MAX_ENUMERATION: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaStationaryPoint {
    pub point: Vector,
    /// `λᵢ` for `±√λᵢ vᵢ`; `0` for the origin.
    pub eigenvalue: f64,
    /// Eigen-index `i` (0-based), `None` for the origin.
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaOracle {
    pub points: Vec<PcaStationaryPoint>,
    /// Groups of eigen-indices sharing one positive eigenvalue. Each group
    /// spans a continuum of stationary points; only basis representatives
    /// appear in `points`.
    pub degenerate_groups: Vec<Vec<usize>>,
}

fn eigen_groups(eigvals: &Vector) -> Vec<Vec<usize>> {
    let tol = DEGENERACY_TOL * eigvals.iter().fold(1.0f64, |a, l| a.max(l.abs()));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..eigvals.len() {
        match groups.last_mut() {
            Some(g) if (eigvals[g[0]] - eigvals[i]).abs() <= tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// The origin and `±√λᵢ vᵢ` for every `λᵢ > 0`.
pub fn pca_stationary_oracle(inst: &PcaInstance) -> PcaOracle {
    let mut points = vec![PcaStationaryPoint {
        point: Vector::zeros(inst.dim()),
        eigenvalue: 0.0,
        index: None,
    }];
    for (i, &l) in inst.eigvals.iter().enumerate().filter(|(_, &l)| l > 0.0) {
        let v = inst.eigvecs.column(i) * l.sqrt();
        for sign in [1.0, -1.0] {
            points.push(PcaStationaryPoint {
                point: &v * sign,
                eigenvalue: l,
                index: Some(i),
            });
        }
    }
    let degenerate_groups = eigen_groups(&inst.eigvals)
        .into_iter()
        .filter(|g| g.len() > 1 && inst.eigvals[g[0]] > 0.0)
        .collect();
    PcaOracle {
        points,
        degenerate_groups,
    }
}

/// Distance from `x` to the set of global minimizers `{√λ₁ u : u unit in the
/// top eigenspace}`; for a simple top eigenvalue this is `min ‖x ∓ √λ₁v₁‖`.
pub fn pca_distance_to_global_minima(inst: &PcaInstance, x: &Vector) -> f64 {
    let top = &eigen_groups(&inst.eigvals)[0];
    let u = inst.eigvecs.columns(0, top.len());
    let proj = u * u.tr_mul(x);
    let radial = proj.norm() - inst.eigvals[0].sqrt();
    ((x - &proj).norm_squared() + radial * radial).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSweepRow {
    /// `None` for the origin.
    pub eigen_index: Option<usize>,
    /// `0` for the origin.
    pub sign: i8,
    pub eigenvalue: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    /// `2(λᵢ − λ₁)`, with `λ = 0` at the origin: the exact smallest Hessian
    /// eigenvalue at a non-global stationary point.
    pub expected_hess_min: f64,
    pub verdict: Verdict,
    pub dist_to_global_min: f64,
}

/// Classifies every oracle point.
pub fn pca_oracle_sweep(inst: &PcaInstance, thr: &ClassifierThresholds) -> Result<Vec<PcaSweepRow>> {
    let obj = pca_objective(inst);
    let oracle = pca_stationary_oracle(inst);
    let l1 = inst.eigvals[0];
    oracle
        .points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let c = classify_point(&obj, &p.point, thr, None, Geometry::Euclidean)?;
            Ok(PcaSweepRow {
                eigen_index: p.index,
                sign: if k == 0 { 0 } else if k % 2 == 1 { 1 } else { -1 },
                eigenvalue: p.eigenvalue,
                grad_norm: c.grad_norm,
                hess_min_eig: c.hess_min_eig,
                expected_hess_min: 2.0 * (p.eigenvalue - l1),
                verdict: c.verdict,
                dist_to_global_min: pca_distance_to_global_minima(inst, &p.point),
            })
        })
        .collect()
}

fn pattern_count(n: usize, max_support: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for s in 1..=max_support {
        binom = binom.saturating_mul((n - s + 1) as u128) / s as u128;
        let term = binom.saturating_mul(1u128.checked_shl(s as u32).unwrap_or(u128::MAX));
        total = total.saturating_add(term);
    }
    total
}

fn for_each_support(n: usize, s: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, s: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == s {
            f(cur);
            return;
        }
        for i in start..=(n - (s - cur.len())) {
            cur.push(i);
            rec(i + 1, n, s, cur, f);
            cur.pop();
        }
    }
    rec(0, n, s, &mut Vec::with_capacity(s), f);
}

/// All points `(±1/√s, …, ±1/√s, 0, …)` up to coordinate permutation, with
/// support size `1 ≤ s ≤ max_support`, ordered by `s`, then support
/// (lexicographic), then sign mask.
pub fn tensor_stationary_oracle(n: usize, max_support: usize) -> Result<Vec<SpherePoint>> {
    if n == 0 || max_support == 0 || max_support > n {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= max_support <= n, got n={n}, max_support={max_support}"
        )));
    }
    let count = pattern_count(n, max_support);
    if count > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge(count));
    }
    let mut out = Vec::with_capacity(count as usize);
    for s in 1..=max_support {
        let mag = 1.0 / (s as f64).sqrt();
        for_each_support(n, s, &mut |support| {
            for mask in 0u32..(1u32 << s) {
                let mut x = Vector::zeros(n);
                for (b, &i) in support.iter().enumerate() {
                    x[i] = if mask >> b & 1 == 1 { -mag } else { mag };
                }
                out.push(SpherePoint::normalize(x).expect("nonzero pattern"));
            }
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSweepRow {
    pub support: usize,
    pub riemannian_grad_norm: f64,
    /// Largest eigenvalue of the tangent-restricted Hessian of `f`.
    pub lambda_max: f64,
    /// `vᵀ Hess f v` for `v = (σᵢaᵢ − σⱼaⱼ)/√2` on the first two support
    /// coordinates; `None` for `s = 1`.
    pub pair_direction_form: Option<f64>,
    /// Classification of the point as a maximum (via `−f`).
    pub verdict: Verdict,
}

/// Evaluates every sign pattern of `inst`'s components, mapped into `R^d`
/// as `Σ cᵢ aᵢ`.
pub fn tensor_oracle_sweep(
    inst: &TensorInstance,
    max_support: usize,
    thr: &ClassifierThresholds,
) -> Result<Vec<TensorSweepRow>> {
    inst.validate()?;
    let n = inst.n_components();
    let patterns = tensor_stationary_oracle(n, max_support)?;
    let obj = tensor_ambient(inst);
    let neg = Negated(&obj);
    patterns
        .iter()
        .map(|c| {
            let x = SpherePoint::normalize(inst.components.tr_mul(c.coords()))?;
            let support: Vec<usize> = (0..n).filter(|&i| c[i] != 0.0).collect();
            let h = riemannian_hess(&obj, &x);
            let eigs = tangent_extreme_eigs(&h, &x)?;
            let pair_direction_form = (support.len() >= 2).then(|| {
                let (i, j) = (support[0], support[1]);
                let v = (inst.component(i) * c[i].signum() - inst.component(j) * c[j].signum())
                    / std::f64::consts::SQRT_2;
                v.dot(&(&h * &v))
            });
            let cls = classify_point(&neg, x.coords(), thr, None, Geometry::Sphere)?;
            Ok(TensorSweepRow {
                support: support.len(),
                riemannian_grad_norm: riemannian_grad(&obj as &dyn Objective, &x).vec.norm(),
                lambda_max: eigs.lambda_max,
                pair_direction_form,
                verdict: cls.verdict,
            })
        })
        .collect()
}
