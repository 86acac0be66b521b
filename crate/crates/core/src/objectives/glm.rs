use serde::{Deserialize, Serialize};

use super::Objective;
use crate::linalg::{from_rows, to_rows};
use crate::{generators, rng, Error, Matrix, Result, Vector};

/// Link function of the model. Only the sigmoid is provided: it lies in
/// `[0, 1]`, has `|σ'|, |σ''| ≤ 1`, and `σ'` is bounded away from zero on
/// every compact interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
}

impl Activation {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn first(self, t: f64) -> f64 {
        let s = self.value(t);
        s * (1.0 - s)
    }

    pub fn second(self, t: f64) -> f64 {
        let s = self.value(t);
        s * (1.0 - s) * (1.0 - 2.0 * s)
    }

    /// `inf σ'` over `[-bound, bound]`; σ' is even and decreasing in `|t|`.
    pub fn min_slope_on(self, bound: f64) -> f64 {
        self.first(bound.abs())
    }

    /// `sup |σ''|`, attained at `σ = ½ ± 1/(2√3)`.
    pub fn max_abs_second(self) -> f64 {
        1.0 / (6.0 * 3f64.sqrt())
    }
}

/// Data and ground truth of a generalized linear model `y = σ(w⋆ᵀx) + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GlmDoc", into = "GlmDoc")]
pub struct GlmInstance {
    /// `n × d`, one sample per row.
    pub x: Matrix,
    pub y: Vector,
    pub activation: Activation,
    pub w_star: Vector,
    pub b: f64,
    pub r: f64,
    pub gamma: f64,
    /// Smallest eigenvalue of the empirical `(1/n) Σ xᵢxᵢᵀ`.
    pub lambda_min_cov: f64,
    /// Population covariance floor when known analytically (`B²/d` for
    /// samples uniform on the radius-`B` sphere).
    pub lambda_population: Option<f64>,
    pub noise_bound: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GlmDoc {
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    activation: Activation,
    w_star: Vec<f64>,
    #[serde(rename = "B")]
    b: f64,
    #[serde(rename = "R")]
    r: f64,
    gamma: f64,
    lambda_min_cov: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_population: Option<f64>,
    noise_bound: f64,
    seed: u64,
}

impl From<GlmInstance> for GlmDoc {
    fn from(i: GlmInstance) -> Self {
        GlmDoc {
            x: to_rows(&i.x),
            y: i.y.iter().copied().collect(),
            activation: i.activation,
            w_star: i.w_star.iter().copied().collect(),
            b: i.b,
            r: i.r,
            gamma: i.gamma,
            lambda_min_cov: i.lambda_min_cov,
            lambda_population: i.lambda_population,
            noise_bound: i.noise_bound,
            seed: i.seed,
        }
    }
}

impl TryFrom<GlmDoc> for GlmInstance {
    type Error = Error;

    fn try_from(doc: GlmDoc) -> Result<Self> {
        let inst = GlmInstance {
            x: from_rows(&doc.x, "X")?,
            y: Vector::from_vec(doc.y),
            activation: doc.activation,
            w_star: Vector::from_vec(doc.w_star),
            b: doc.b,
            r: doc.r,
            gamma: doc.gamma,
            lambda_min_cov: doc.lambda_min_cov,
            lambda_population: doc.lambda_population,
            noise_bound: doc.noise_bound,
            seed: doc.seed,
        };
        inst.validate()?;
        Ok(inst)
    }
}

impl GlmInstance {
    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    /// Checks the model's regularity assumptions.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        let (n, d) = self.x.shape();
        if n == 0 || d == 0 {
            return bad("GLM instance needs at least one sample and one feature".into());
        }
        if self.y.len() != n || self.w_star.len() != d {
            return bad(format!(
                "shape mismatch: X is {n}x{d}, y has {}, w_star has {}",
                self.y.len(),
                self.w_star.len()
            ));
        }
        if !(self.b > 0.0 && self.r > 0.0) || self.b * self.r < 1.0 {
            return bad(format!("need B, R > 0 and B*R >= 1 (B={}, R={})", self.b, self.r));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.noise_bound) {
            return bad(format!("noise_bound must lie in [0,1], got {}", self.noise_bound));
        }
        if self.w_star.norm() > self.r * (1.0 + 1e-9) {
            return bad(format!("|w_star| = {} exceeds R = {}", self.w_star.norm(), self.r));
        }
        for (i, row) in self.x.row_iter().enumerate() {
            if row.norm() > self.b * (1.0 + 1e-9) {
                return bad(format!("|x_{i}| = {} exceeds B = {}", row.norm(), self.b));
            }
            let clean = self.activation.value(row.transpose().dot(&self.w_star));
            if (self.y[i] - clean).abs() > self.noise_bound + 1e-12 {
                return bad(format!("label {i} deviates from the model by more than noise_bound"));
            }
        }
        Ok(())
    }
}

/// Squared risk `(1/2n) Σ (yᵢ − σ(wᵀxᵢ))²` over a fixed sample.
#[derive(Debug, Clone)]
pub struct GlmRisk {
    x: Matrix,
    y: Vector,
    activation: Activation,
}

impl GlmRisk {
    pub fn new(x: Matrix, y: Vector, activation: Activation) -> Self {
        assert_eq!(x.nrows(), y.len(), "one label per sample");
        Self { x, y, activation }
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    /// Value together with the standard error of the per-sample loss mean.
    pub fn value_with_stderr(&self, w: &Vector) -> (f64, f64) {
        let t = &self.x * w;
        let n = self.y.len() as f64;
        let losses: Vec<f64> = t
            .iter()
            .zip(self.y.iter())
            .map(|(&ti, &yi)| 0.5 * (yi - self.activation.value(ti)).powi(2))
            .collect();
        let mean = losses.iter().sum::<f64>() / n;
        let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

impl Objective for GlmRisk {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn value(&self, w: &Vector) -> f64 {
        let t = &self.x * w;
        let sum: f64 = t
            .iter()
            .zip(self.y.iter())
            .map(|(&ti, &yi)| (yi - self.activation.value(ti)).powi(2))
            .sum();
        sum / (2.0 * self.y.len() as f64)
    }

    fn gradient(&self, w: &Vector) -> Vector {
        let n = self.y.len() as f64;
        let t = &self.x * w;
        let coef = Vector::from_iterator(
            t.len(),
            t.iter().zip(self.y.iter()).map(|(&ti, &yi)| {
                (self.activation.value(ti) - yi) * self.activation.first(ti) / n
            }),
        );
        self.x.tr_mul(&coef)
    }

    fn hessian(&self, w: &Vector) -> Matrix {
        let n = self.y.len() as f64;
        let t = &self.x * w;
        let weights = t.iter().zip(self.y.iter()).map(|(&ti, &yi)| {
            let s1 = self.activation.first(ti);
            (s1 * s1 + (self.activation.value(ti) - yi) * self.activation.second(ti)) / n
        });
        // Xᵀ diag(weights) X, built as (W X)ᵀ X
        let mut weighted = self.x.clone();
        for (mut row, wt) in weighted.row_iter_mut().zip(weights) {
            row *= wt;
        }
        crate::linalg::symmetrize(&weighted.tr_mul(&self.x))
    }
}

pub fn glm_empirical(inst: &GlmInstance) -> GlmRisk {
    GlmRisk::new(inst.x.clone(), inst.y.clone(), inst.activation)
}

/// Monte-Carlo stand-in for the population risk: the empirical risk of a
/// fresh sample of `eval_sample_size` points from the instance's generator.
/// It is a frozen proxy, not the exact expectation.
#[derive(Debug, Clone)]
pub struct PopulationProxy {
    pub risk: GlmRisk,
    pub seed: u64,
    pub warning: Option<String>,
}

impl Objective for PopulationProxy {
    fn dim(&self) -> usize {
        self.risk.dim()
    }
    fn value(&self, w: &Vector) -> f64 {
        self.risk.value(w)
    }
    fn gradient(&self, w: &Vector) -> Vector {
        self.risk.gradient(w)
    }
    fn hessian(&self, w: &Vector) -> Matrix {
        self.risk.hessian(w)
    }
}

pub fn glm_population_proxy(inst: &GlmInstance, eval_sample_size: usize, seed: u64) -> PopulationProxy {
    let warning = (eval_sample_size < 10 * inst.n_samples()).then(|| {
        format!(
            "population proxy uses {eval_sample_size} points, fewer than 10x the {} training samples",
            inst.n_samples()
        )
    });
    let mut rng = rng::stream(seed, "glm/proxy", eval_sample_size as u64);
    let (x, y) = generators::sample_glm_data(
        &inst.w_star,
        eval_sample_size,
        inst.b,
        inst.noise_bound,
        inst.activation,
        &mut rng,
    );
    PopulationProxy {
        risk: GlmRisk::new(x, y, inst.activation),
        seed,
        warning,
    }
}
