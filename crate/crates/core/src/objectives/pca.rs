use serde::{Deserialize, Serialize};

use super::Objective;
use crate::linalg::{from_rows, to_rows};
use crate::{Error, Matrix, Result, Vector};

/// Symmetric PSD matrix with its eigendecomposition (eigenvalues descending,
/// eigenvectors as columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PcaDoc", into = "PcaDoc")]
pub struct PcaInstance {
    pub m: Matrix,
    pub eigvals: Vector,
    pub eigvecs: Matrix,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PcaDoc {
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
    eigvals: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    seed: u64,
}

impl From<PcaInstance> for PcaDoc {
    fn from(i: PcaInstance) -> Self {
        PcaDoc {
            m: to_rows(&i.m),
            eigvals: i.eigvals.iter().copied().collect(),
            eigvecs: to_rows(&i.eigvecs),
            seed: i.seed,
        }
    }
}

impl TryFrom<PcaDoc> for PcaInstance {
    type Error = Error;

    fn try_from(doc: PcaDoc) -> Result<Self> {
        let inst = PcaInstance {
            m: from_rows(&doc.m, "M")?,
            eigvals: Vector::from_vec(doc.eigvals),
            eigvecs: from_rows(&doc.eigvecs, "eigvecs")?,
            seed: doc.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl PcaInstance {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let d = self.m.nrows();
        if d == 0 || self.m.ncols() != d || self.eigvals.len() != d || self.eigvecs.shape() != (d, d) {
            return bad("PCA instance shapes are inconsistent".into());
        }
        if self.m != self.m.transpose() {
            return bad("M must be exactly symmetric".into());
        }
        if self.eigvals.iter().any(|&l| l < 0.0) {
            return bad("eigenvalues must be non-negative".into());
        }
        if self.eigvals.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return bad("eigenvalues must be sorted descending".into());
        }
        let gram = self.eigvecs.tr_mul(&self.eigvecs);
        if (gram - Matrix::identity(d, d)).amax() > 1e-10 {
            return bad("eigenvectors are not orthonormal".into());
        }
        if (self.reconstruct() - &self.m).amax() > 1e-10 * (1.0 + self.m.amax()) {
            return bad("M does not match its eigendecomposition".into());
        }
        Ok(())
    }

    /// `Σ λᵢ vᵢ vᵢᵀ`
    pub fn reconstruct(&self) -> Matrix {
        &self.eigvecs * Matrix::from_diagonal(&self.eigvals) * self.eigvecs.transpose()
    }

    /// Global minimum value `½ Σ_{i≥2} λᵢ²`.
    pub fn optimal_value(&self) -> f64 {
        0.5 * self.eigvals.iter().skip(1).map(|l| l * l).sum::<f64>()
    }

    /// Top eigenvector `v₁`.
    pub fn top_eigvec(&self) -> Vector {
        self.eigvecs.column(0).into_owned()
    }
}

/// `g(x) = ½‖M − xxᵀ‖_F²`
#[derive(Debug, Clone)]
pub struct PcaObjective {
    m: Matrix,
}

impl PcaObjective {
    pub fn new(m: Matrix) -> Self {
        Self {
            m: crate::linalg::symmetrize(&m),
        }
    }
}

impl Objective for PcaObjective {
    fn dim(&self) -> usize {
        self.m.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        let d = x.len();
        let mut sum = 0.0;
        for j in 0..d {
            for i in 0..d {
                sum += (self.m[(i, j)] - x[i] * x[j]).powi(2);
            }
        }
        0.5 * sum
    }

    /// `2(‖x‖²x − Mx)`
    fn gradient(&self, x: &Vector) -> Vector {
        (x * x.norm_squared() - &self.m * x) * 2.0
    }

    /// `4xxᵀ + 2‖x‖²I − 2M`
    fn hessian(&self, x: &Vector) -> Matrix {
        let d = x.len();
        let sq = x.norm_squared();
        Matrix::from_fn(d, d, |i, j| {
            let diag = if i == j { 2.0 * sq } else { 0.0 };
            4.0 * x[i] * x[j] + diag - 2.0 * self.m[(i, j)]
        })
    }
}

pub fn pca_objective(inst: &PcaInstance) -> PcaObjective {
    PcaObjective::new(inst.m.clone())
}
