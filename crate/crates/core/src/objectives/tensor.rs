use serde::{Deserialize, Serialize};

use super::Objective;
use crate::linalg::{from_rows, to_rows};
use crate::{Error, Matrix, Result, Vector};

/// Orthogonal fourth-order tensor `T = Σ aᵢ⊗aᵢ⊗aᵢ⊗aᵢ`, stored only through
/// its `n × d` component matrix (rows `aᵢ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorDoc", into = "TensorDoc")]
pub struct TensorInstance {
    pub components: Matrix,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    components: Vec<Vec<f64>>,
    seed: u64,
}

impl From<TensorInstance> for TensorDoc {
    fn from(i: TensorInstance) -> Self {
        TensorDoc {
            components: to_rows(&i.components),
            seed: i.seed,
        }
    }
}

impl TryFrom<TensorDoc> for TensorInstance {
    type Error = Error;

    fn try_from(doc: TensorDoc) -> Result<Self> {
        let inst = TensorInstance {
            components: from_rows(&doc.components, "components")?,
            seed: doc.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl TensorInstance {
    /// Components `e₁ … e_n` in `R^d`.
    pub fn standard_basis(n: usize, d: usize) -> Self {
        Self {
            components: Matrix::identity(n, d),
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn component(&self, i: usize) -> Vector {
        self.components.row(i).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.components.shape();
        if n == 0 || n > d {
            return Err(Error::InvalidInstance(format!(
                "need 1 <= n_components <= d, got n={n}, d={d}"
            )));
        }
        let gram = &self.components * self.components.transpose();
        if (gram - Matrix::identity(n, n)).amax() > 1e-10 {
            return Err(Error::InvalidInstance("components are not orthonormal".into()));
        }
        Ok(())
    }

    /// `max_i |⟨x, aᵢ⟩|`
    pub fn max_alignment(&self, x: &Vector) -> f64 {
        (&self.components * x).amax()
    }
}

/// Ambient extension `f̄(x) = Σᵢ ⟨aᵢ, x⟩⁴` of the tensor objective.
#[derive(Debug, Clone)]
pub struct TensorObjective {
    a: Matrix,
}

impl Objective for TensorObjective {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        (&self.a * x).iter().map(|p| p.powi(4)).sum()
    }

    fn gradient(&self, x: &Vector) -> Vector {
        let cubes = (&self.a * x).map(|p| 4.0 * p.powi(3));
        self.a.tr_mul(&cubes)
    }

    fn hessian(&self, x: &Vector) -> Matrix {
        let weights = (&self.a * x).map(|p| 12.0 * p * p);
        let mut weighted = self.a.clone();
        for (mut row, w) in weighted.row_iter_mut().zip(weights.iter()) {
            row *= *w;
        }
        crate::linalg::symmetrize(&weighted.tr_mul(&self.a))
    }
}

pub fn tensor_ambient(inst: &TensorInstance) -> TensorObjective {
    TensorObjective {
        a: inst.components.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_gives_fourth_power_norm() {
        let f = tensor_ambient(&TensorInstance::standard_basis(3, 3));
        let x = Vector::from_vec(vec![0.6, 0.0, 0.8]);
        assert!((f.value(&x) - (0.6f64.powi(4) + 0.8f64.powi(4))).abs() < 1e-15);
    }

    #[test]
    fn single_component_and_midpoint() {
        let inst = TensorInstance::standard_basis(3, 4);
        let f = tensor_ambient(&inst);
        let a1 = inst.component(0);
        assert_eq!(f.value(&a1), 1.0);
        assert_eq!(f.gradient(&a1), &a1 * 4.0);
        let mid = (inst.component(0) + inst.component(1)) / 2f64.sqrt();
        assert!((f.value(&mid) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hessian_at_first_component() {
        let f = tensor_ambient(&TensorInstance::standard_basis(3, 3));
        let h = f.hessian(&Vector::from_vec(vec![1.0, 0.0, 0.0]));
        let expected = Matrix::from_diagonal(&Vector::from_vec(vec![12.0, 0.0, 0.0]));
        assert_eq!(h, expected);
    }
}
