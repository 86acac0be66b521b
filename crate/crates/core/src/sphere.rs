//! Riemannian calculus on the unit sphere `S^{d-1}`.
//!
//! An objective on the sphere is represented by its ambient extension `f̄`
//! (any [`Objective`] on `R^d`); gradient and Hessian are obtained through
//! the tangent projection `P_x = I − xxᵀ`.

use std::ops::Deref;

use crate::linalg::symmetrize;
use crate::{Error, Matrix, Objective, Result, Vector};

const UNIT_TOL: f64 = 1e-10;
const TANGENT_OPERATOR_TOL: f64 = 1e-6;

/// A point with `‖x‖₂ = 1` (within `1e-10`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(Vector);

impl SpherePoint {
    pub fn new(coords: Vector) -> Result<Self> {
        let n = coords.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::OutOfDomain(format!("sphere point must have unit norm, got {n}")));
        }
        Ok(Self(coords))
    }

    /// Rescales a non-zero vector onto the sphere.
    pub fn normalize(v: Vector) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::ZeroRetraction);
        }
        Ok(Self(v / n))
    }

    pub fn coords(&self) -> &Vector {
        &self.0
    }

    pub fn into_inner(self) -> Vector {
        self.0
    }
}

impl Deref for SpherePoint {
    type Target = Vector;
    fn deref(&self) -> &Vector {
        &self.0
    }
}

/// A vector in `T_x S^{d-1} = {v : ⟨x, v⟩ = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub at: SpherePoint,
    pub vec: Vector,
}

/// `P_x = I − xxᵀ`
pub fn projector(x: &SpherePoint) -> Matrix {
    let d = x.len();
    Matrix::identity(d, d) - x.coords() * x.coords().transpose()
}

/// `v − ⟨x, v⟩x`
pub fn project_tangent(x: &SpherePoint, v: &Vector) -> TangentVector {
    let vec = v - x.coords() * x.dot(v);
    TangentVector { at: x.clone(), vec }
}

/// `grad f(x) = P_x ∇f̄(x)`
pub fn riemannian_grad(obj: &dyn Objective, x: &SpherePoint) -> TangentVector {
    project_tangent(x, &obj.gradient(x))
}

/// `Hess f(x) = P_x ∇²f̄(x) P_x − ⟨x, ∇f̄(x)⟩ P_x`, as a `d × d` matrix that
/// annihilates `x`.
pub fn riemannian_hess(obj: &dyn Objective, x: &SpherePoint) -> Matrix {
    let p = projector(x);
    let radial = x.dot(&obj.gradient(x));
    let h = &p * obj.hessian(x) * &p - &p * radial;
    symmetrize(&h)
}

/// Metric-projection retraction `(x + step) / ‖x + step‖`.
pub fn retract(x: &SpherePoint, step: &Vector) -> Result<SpherePoint> {
    SpherePoint::normalize(x.coords() + step)
}

#[derive(Debug, Clone)]
pub struct TangentEigs {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Unit tangent vector attaining `lambda_min`.
    pub dir_min: Vector,
    /// Unit tangent vector attaining `lambda_max`.
    pub dir_max: Vector,
}

/// Extreme eigenvalues of a tangent operator `H` restricted to `T_x`.
///
/// `H + c·xxᵀ` with `c > ‖H‖` moves the normal direction's eigenvalue out of
/// the way; the eigenpair best aligned with `x` is then discarded.
pub fn tangent_extreme_eigs(h: &Matrix, x: &SpherePoint) -> Result<TangentEigs> {
    let leak = (h * x.coords()).norm();
    if leak > TANGENT_OPERATOR_TOL {
        return Err(Error::NotTangentOperator(leak));
    }
    let d = x.len();
    if d < 2 {
        return Err(Error::OutOfDomain("tangent space of S^0 is trivial".into()));
    }
    let c = h.norm() + 1.0;
    let shifted = symmetrize(&(h + x.coords() * x.transpose() * c));
    let eig = nalgebra::SymmetricEigen::new(shifted);
    let normal = (0..d)
        .max_by(|&a, &b| {
            let ca = eig.eigenvectors.column(a).dot(x.coords()).abs();
            let cb = eig.eigenvectors.column(b).dot(x.coords()).abs();
            ca.total_cmp(&cb)
        })
        .expect("d >= 2");
    let mut lo = (f64::INFINITY, 0);
    let mut hi = (f64::NEG_INFINITY, 0);
    for k in (0..d).filter(|&k| k != normal) {
        let l = eig.eigenvalues[k];
        if l < lo.0 {
            lo = (l, k);
        }
        if l > hi.0 {
            hi = (l, k);
        }
    }
    let direction = |k: usize| {
        let v = project_tangent(x, &eig.eigenvectors.column(k).into_owned()).vec;
        let n = v.norm();
        v / n
    };
    Ok(TangentEigs {
        lambda_min: lo.0,
        lambda_max: hi.0,
        dir_min: direction(lo.1),
        dir_max: direction(hi.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{tensor_ambient, TensorInstance};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn e(d: usize, i: usize) -> SpherePoint {
        let mut x = Vector::zeros(d);
        x[i] = 1.0;
        SpherePoint::new(x).unwrap()
    }

    #[test]
    fn projection_examples() {
        let x = e(3, 0);
        assert_eq!(project_tangent(&x, &v(&[3.0, 4.0, 0.0])).vec, v(&[0.0, 4.0, 0.0]));
        assert_eq!(project_tangent(&x, &v(&[0.0, 1.0, -2.0])).vec, v(&[0.0, 1.0, -2.0]));
        assert_eq!(project_tangent(&x, x.coords()).vec, Vector::zeros(3));
    }

    #[test]
    fn rejects_non_unit_points() {
        assert!(SpherePoint::new(v(&[1.0, 1.0])).is_err());
        assert!(SpherePoint::normalize(Vector::zeros(2)).is_err());
    }

    #[test]
    fn tensor_gradient_vanishes_at_maximizer_and_balanced_point() {
        let f = tensor_ambient(&TensorInstance::standard_basis(3, 3));
        assert!(riemannian_grad(&f, &e(3, 0)).vec.norm() < 1e-15);
        let f2 = tensor_ambient(&TensorInstance::standard_basis(2, 2));
        let x = SpherePoint::normalize(v(&[1.0, 1.0])).unwrap();
        assert!(riemannian_grad(&f2, &x).vec.norm() < 1e-14);
    }

    #[test]
    fn tensor_hessian_at_maximizer_is_minus_four_on_tangent() {
        let f = tensor_ambient(&TensorInstance::standard_basis(3, 3));
        let x = e(3, 0);
        let h = riemannian_hess(&f, &x);
        assert!((&h + projector(&x) * 4.0).amax() < 1e-14);
        let eigs = tangent_extreme_eigs(&h, &x).unwrap();
        assert!(eigs.lambda_max <= -4.0 + 1e-8);
        assert!((eigs.lambda_min + 4.0).abs() < 1e-10);
    }

    #[test]
    fn tensor_hessian_at_balanced_points() {
        for s in 2..=4 {
            let d = 5;
            let f = tensor_ambient(&TensorInstance::standard_basis(d, d));
            let mut c = Vector::zeros(d);
            for i in 0..s {
                c[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            let x = SpherePoint::normalize(c.clone()).unwrap();
            let h = riemannian_hess(&f, &x);
            // v = (σ₁, −σ₂, 0, …)/√2 is tangent
            let mut t = Vector::zeros(d);
            t[0] = c[0] / 2f64.sqrt();
            t[1] = -c[1] / 2f64.sqrt();
            assert!(t.dot(&x).abs() < 1e-15);
            let q = t.dot(&(&h * &t));
            assert!((q - 8.0 / s as f64).abs() < 1e-12, "s={s}: {q}");
            let eigs = tangent_extreme_eigs(&h, &x).unwrap();
            assert!(eigs.lambda_max >= 8.0 / s as f64 - 1e-8);
            assert!(eigs.dir_max.dot(&x).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_projector_eigs() {
        let x = SpherePoint::normalize(v(&[1.0, 2.0, -2.0])).unwrap();
        let h = projector(&x) * -4.0;
        let eigs = tangent_extreme_eigs(&h, &x).unwrap();
        assert!((eigs.lambda_min + 4.0).abs() < 1e-12);
        assert!((eigs.lambda_max + 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_tangent_operator_rejected() {
        let x = e(3, 0);
        assert!(matches!(
            tangent_extreme_eigs(&Matrix::identity(3, 3), &x),
            Err(Error::NotTangentOperator(_))
        ));
    }

    #[test]
    fn retraction_examples() {
        let x = e(3, 0);
        assert_eq!(retract(&x, &Vector::zeros(3)).unwrap(), x);
        let r = retract(&x, &v(&[0.0, 1.0, 0.0])).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((r.coords() - v(&[s, s, 0.0])).norm() < 1e-15);
        assert!(matches!(retract(&x, &v(&[-1.0, 0.0, 0.0])), Err(Error::ZeroRetraction)));
    }

    #[test]
    fn retraction_is_second_order() {
        let x = SpherePoint::normalize(v(&[0.3, -0.5, 0.8, 0.1])).unwrap();
        let t_vec = project_tangent(&x, &v(&[1.0, 0.2, -0.4, 0.9])).vec;
        let t_vec = &t_vec / t_vec.norm();
        let gap = |t: f64| (retract(&x, &(&t_vec * t)).unwrap().coords() - (x.coords() + &t_vec * t)).norm();
        let (g2, g3) = (gap(1e-2), gap(1e-3));
        // O(t²): shrinking t by 10 shrinks the gap by ~100
        assert!(g2 <= 1e-4 && g3 <= 1e-6);
        assert!((g2 / g3 - 100.0).abs() < 1.0);
    }

    fn unit_vec(d: usize) -> impl Strategy<Value = Vector> {
        prop::collection::vec(-1.0f64..1.0, d)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
            .prop_map(|v| {
                let v = Vector::from_vec(v);
                let n = v.norm();
                v / n
            })
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_tangent(
            x in unit_vec(5),
            w in prop::collection::vec(-10.0f64..10.0, 5),
        ) {
            let x = SpherePoint::new(x).unwrap();
            let w = Vector::from_vec(w);
            let once = project_tangent(&x, &w).vec;
            let twice = project_tangent(&x, &once).vec;
            prop_assert!(x.dot(&once).abs() <= 1e-12 * (1.0 + w.norm()));
            prop_assert!((once - twice).norm() <= 1e-12 * (1.0 + w.norm()));
        }

        #[test]
        fn retraction_lands_on_sphere(
            x in unit_vec(4),
            s in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let x = SpherePoint::new(x).unwrap();
            let s = Vector::from_vec(s);
            if (x.coords() + &s).norm() > 1e-6 {
                let r = retract(&x, &s).unwrap();
                prop_assert!((r.norm() - 1.0).abs() <= 1e-14);
            }
        }

        #[test]
        fn riemannian_hessian_is_tangent_and_symmetric(x in unit_vec(4), seed in 0u64..1000) {
            let mut rng = crate::rng::stream(seed, "sphere-prop", 0);
            let a = crate::linalg::random_orthonormal(4, 3, &mut rng).unwrap().transpose();
            let f = tensor_ambient(&TensorInstance { components: a, seed });
            let x = SpherePoint::new(x).unwrap();
            let h = riemannian_hess(&f, &x);
            prop_assert_eq!(&h, &h.transpose());
            prop_assert!((&h * x.coords()).norm() <= 1e-10);
            prop_assert!(riemannian_grad(&f, &x).vec.dot(&x).abs() <= 1e-12);
        }
    }
}
