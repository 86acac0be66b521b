//! Problem families behind a uniform [`Objective`] interface.
//!
//! All derivatives are exact. Where a textbook display of a gradient drops a
//! constant factor, the code here keeps it, so that every objective can be
//! checked against finite differences.

mod glm;
mod mc;
mod pca;
mod tensor;

pub use glm::{glm_empirical, glm_population_proxy, Activation, GlmInstance, GlmRisk, PopulationProxy};
pub use mc::{mc_objective, McInstance, McObjective};
pub use pca::{pca_objective, PcaInstance, PcaObjective};
pub use tensor::{tensor_ambient, TensorInstance, TensorObjective};

use serde::{Deserialize, Serialize};

use crate::{Matrix, Vector};

/// A twice-differentiable scalar field on `R^dim`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    /// Dense, exactly symmetric Hessian.
    fn hessian(&self, x: &Vector) -> Matrix;
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        (**self).hessian(x)
    }
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        (**self).hessian(x)
    }
}

/// `-f`, used to classify maxima with minimization-oriented tools.
#[derive(Debug, Clone)]
pub struct Negated<O>(pub O);

impl<O: Objective> Objective for Negated<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, x: &Vector) -> f64 {
        -self.0.value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        -self.0.gradient(x)
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        -self.0.hessian(x)
    }
}

/// `½ xᵀ A x` for a symmetric `A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    a: Matrix,
}

impl Quadratic {
    pub fn new(a: Matrix) -> Self {
        Self {
            a: crate::linalg::symmetrize(&a),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.a * x))
    }
    fn gradient(&self, x: &Vector) -> Vector {
        &self.a * x
    }
    fn hessian(&self, _x: &Vector) -> Matrix {
        self.a.clone()
    }
}

type ScalarFn = Box<dyn Fn(&Vector) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&Vector) -> Vector + Send + Sync>;
type MatrixFn = Box<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Objective assembled from closures; handy for toy functions in tests and
/// for counterexamples such as `x⁴`.
pub struct FnObjective {
    dim: usize,
    value: ScalarFn,
    gradient: VectorFn,
    hessian: MatrixFn,
}

impl FnObjective {
    pub fn new(
        dim: usize,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        hessian: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            hessian: Box::new(hessian),
        }
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        (self.hessian)(x)
    }
}

/// Any generated problem instance, tagged by family in its JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Instance {
    Glm(GlmInstance),
    Pca(PcaInstance),
    Mc(McInstance),
    Tensor(TensorInstance),
}

impl Instance {
    pub fn dim(&self) -> usize {
        match self {
            Instance::Glm(i) => i.dim(),
            Instance::Pca(i) => i.dim(),
            Instance::Mc(i) => i.dim(),
            Instance::Tensor(i) => i.dim(),
        }
    }

    /// The instance's natural objective (the ambient `f̄` for tensors).
    pub fn objective(&self) -> Box<dyn Objective> {
        match self {
            Instance::Glm(i) => Box::new(glm_empirical(i)),
            Instance::Pca(i) => Box::new(pca_objective(i)),
            Instance::Mc(i) => Box::new(mc_objective(i)),
            Instance::Tensor(i) => Box::new(tensor_ambient(i)),
        }
    }
}
