use serde::{Deserialize, Serialize};

use super::Objective;
use crate::linalg::inf_norm;
use crate::{Error, Matrix, Result, Vector};

/// Rank-1 symmetric matrix completion instance `M = zzᵀ` observed on `Ω`.
///
/// `omega` holds each observed unordered pair once as `(i, j)` with `i ≤ j`,
/// sorted; the mask is symmetric by construction, so `(j, i)` is observed
/// whenever `(i, j)` is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "McDoc", into = "McDoc")]
pub struct McInstance {
    pub z: Vector,
    pub mu: f64,
    pub p: f64,
    pub omega: Vec<(usize, usize)>,
    pub epsilon: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct McDoc {
    z: Vec<f64>,
    mu: f64,
    p: f64,
    omega: Vec<[usize; 2]>,
    epsilon: f64,
    seed: u64,
}

impl From<McInstance> for McDoc {
    fn from(i: McInstance) -> Self {
        McDoc {
            z: i.z.iter().copied().collect(),
            mu: i.mu,
            p: i.p,
            omega: i.omega.iter().map(|&(a, b)| [a, b]).collect(),
            epsilon: i.epsilon,
            seed: i.seed,
        }
    }
}

impl TryFrom<McDoc> for McInstance {
    type Error = Error;

    fn try_from(doc: McDoc) -> Result<Self> {
        let inst = McInstance {
            z: Vector::from_vec(doc.z),
            mu: doc.mu,
            p: doc.p,
            omega: doc.omega.into_iter().map(|[a, b]| (a, b)).collect(),
            epsilon: doc.epsilon,
            seed: doc.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl McInstance {
    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let d = self.z.len();
        if d < 2 {
            return bad("matrix completion needs d >= 2".into());
        }
        if (self.z.norm() - 1.0).abs() > 1e-12 {
            return bad(format!("|z| must be 1, got {}", self.z.norm()));
        }
        if inf_norm(&self.z) > self.mu / (d as f64).sqrt() + 1e-12 {
            return bad(format!("|z|_inf exceeds mu/sqrt(d) with mu = {}", self.mu));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0,1], got {}", self.p));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        for w in self.omega.windows(2) {
            if w[0] >= w[1] {
                return bad("omega must be sorted without duplicates".into());
            }
        }
        if let Some(&(i, j)) = self.omega.iter().find(|&&(i, j)| i > j || j >= d) {
            return bad(format!("omega entry ({i},{j}) is not of the form i <= j < d"));
        }
        Ok(())
    }

    /// Whether `(i, j)` (equivalently `(j, i)`) is observed.
    pub fn observed(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.omega.binary_search(&key).is_ok()
    }

    /// Number of observed ordered entries `|Ω|` of the `d × d` mask.
    pub fn n_observed_entries(&self) -> usize {
        self.omega.iter().map(|&(i, j)| if i == j { 1 } else { 2 }).sum()
    }

    /// `Σ_{(i,j)∈Ω} t(i,j)` over ordered pairs, for a symmetric `t`.
    pub fn observed_sum(&self, t: impl Fn(usize, usize) -> f64) -> f64 {
        self.omega
            .iter()
            .map(|&(i, j)| if i == j { t(i, i) } else { 2.0 * t(i, j) })
            .sum()
    }

    /// Domain `B = {x : ‖x‖_∞ < 2μ/√d}`.
    pub fn in_domain(&self, x: &Vector) -> bool {
        inf_norm(x) < self.domain_radius()
    }

    pub fn domain_radius(&self) -> f64 {
        2.0 * self.mu / (self.dim() as f64).sqrt()
    }

    pub fn is_complete(&self) -> bool {
        let d = self.dim();
        self.omega.len() == d * (d + 1) / 2
    }
}

/// `f(x) = ½ Σ_{(i,j)∈Ω} (zᵢzⱼ − xᵢxⱼ)²`
#[derive(Debug, Clone)]
pub struct McObjective {
    z: Vector,
    omega: Vec<(usize, usize)>,
}

impl Objective for McObjective {
    fn dim(&self) -> usize {
        self.z.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let z = &self.z;
        let sum: f64 = self
            .omega
            .iter()
            .map(|&(i, j)| {
                let r = (z[i] * z[j] - x[i] * x[j]).powi(2);
                if i == j { r } else { 2.0 * r }
            })
            .sum();
        0.5 * sum
    }

    /// `2 P_Ω(xxᵀ − zzᵀ) x`
    fn gradient(&self, x: &Vector) -> Vector {
        let z = &self.z;
        let mut g = Vector::zeros(x.len());
        for &(i, j) in &self.omega {
            let r = x[i] * x[j] - z[i] * z[j];
            g[i] += 2.0 * r * x[j];
            if i != j {
                g[j] += 2.0 * r * x[i];
            }
        }
        g
    }

    /// `2 diag(Σ_{j∈Ωᵢ} xⱼ²) + 2 P_Ω(xxᵀ) + 2 P_Ω(xxᵀ − zzᵀ)`, whose quadratic
    /// form is `‖P_Ω(vxᵀ + xvᵀ)‖² − 2⟨P_Ω(zzᵀ − xxᵀ), vvᵀ⟩`.
    fn hessian(&self, x: &Vector) -> Matrix {
        let z = &self.z;
        let d = x.len();
        let mut h = Matrix::zeros(d, d);
        for &(i, j) in &self.omega {
            let cross = 2.0 * x[i] * x[j] + 2.0 * (x[i] * x[j] - z[i] * z[j]);
            if i == j {
                h[(i, i)] += 2.0 * x[i] * x[i] + cross;
            } else {
                h[(i, j)] += cross;
                h[(j, i)] += cross;
                h[(i, i)] += 2.0 * x[j] * x[j];
                h[(j, j)] += 2.0 * x[i] * x[i];
            }
        }
        h
    }
}

pub fn mc_objective(inst: &McInstance) -> McObjective {
    McObjective {
        z: inst.z.clone(),
        omega: inst.omega.clone(),
    }
}
