//! Seeded instance generation for the four problem families.
//!
//! Each random ingredient of an instance (ground truth, data, mask, ...)
//! comes from its own stream keyed by `(seed, family/ingredient, index)`, so
//! the same spec and seed always yield a bit-identical instance, and e.g. a
//! GLM instance with `n = 4·10⁴` shares its `w⋆` but not its samples with
//! the `n = 10⁴` instance of the same seed.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{inf_norm, min_eigenvalue, random_orthonormal, symmetrize, uniform_sphere};
use crate::objectives::{Activation, GlmInstance, Instance, McInstance, PcaInstance, TensorInstance};
use crate::rng::{self, Rng};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Glm,
    Pca,
    Mc,
    Tensor,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Glm => "glm",
            Family::Pca => "pca",
            Family::Mc => "mc",
            Family::Tensor => "tensor",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How the matrix-completion ground truth is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruth {
    /// Random signs over `√d`: `‖z‖_∞ = 1/√d`, the most incoherent choice.
    #[default]
    Signs,
    /// Normalized Gaussian, rejection-sampled until `‖z‖_∞ ≤ μ/√d`.
    Gaussian,
}

/// Family-specific knobs. Unset entries are filled in by
/// [`GeneratorSpec::resolve`]; entries that do not apply to the family are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub family: Family,
    pub d: usize,
    #[serde(default)]
    pub family_params: FamilyParams,
    #[serde(default)]
    pub seed: u64,
}

fn require<T: Clone>(v: &Option<T>, family: Family, name: &str) -> Result<T> {
    v.clone().ok_or_else(|| {
        Error::InvalidConfig(format!("family_params.{name} is required for the {family} family"))
    })
}

impl GeneratorSpec {
    pub fn new(family: Family, d: usize, seed: u64) -> Self {
        Self {
            family,
            d,
            family_params: FamilyParams::default(),
            seed,
        }
    }

    pub fn with_params(mut self, params: FamilyParams) -> Self {
        self.family_params = params;
        self
    }

    /// Fills every defaulted parameter and checks that the set is complete
    /// for the family. The result is what reports echo.
    pub fn resolve(&self) -> Result<GeneratorSpec> {
        if self.d < 2 {
            return Err(Error::InvalidConfig(format!("d must be at least 2, got {}", self.d)));
        }
        let fp = &self.family_params;
        let family = self.family;
        let allowed: &[&str] = match family {
            Family::Glm => &["n", "B", "R", "noise_bound"],
            Family::Pca => &["spectrum", "spectral_gap"],
            Family::Mc => &["mu", "p", "epsilon", "sampling_constant", "ground_truth"],
            Family::Tensor => &["n_components"],
        };
        let present = [
            ("n", fp.n.is_some()),
            ("B", fp.b.is_some()),
            ("R", fp.r.is_some()),
            ("noise_bound", fp.noise_bound.is_some()),
            ("spectrum", fp.spectrum.is_some()),
            ("spectral_gap", fp.spectral_gap.is_some()),
            ("mu", fp.mu.is_some()),
            ("p", fp.p.is_some()),
            ("epsilon", fp.epsilon.is_some()),
            ("sampling_constant", fp.sampling_constant.is_some()),
            ("ground_truth", fp.ground_truth.is_some()),
            ("n_components", fp.n_components.is_some()),
        ];
        if let Some((name, _)) = present.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            return Err(Error::InvalidConfig(format!(
                "family_params.{name} does not apply to the {family} family"
            )));
        }
        let mut out = FamilyParams::default();
        match family {
            Family::Glm => {
                out.n = Some(require(&fp.n, family, "n")?);
                out.b = Some(fp.b.unwrap_or(1.0));
                out.r = Some(fp.r.unwrap_or(1.0));
                out.noise_bound = Some(fp.noise_bound.unwrap_or(0.0));
            }
            Family::Pca => match &fp.spectrum {
                Some(s) => {
                    if s.len() != self.d {
                        return Err(Error::InvalidConfig(format!(
                            "spectrum has {} entries, expected d = {}",
                            s.len(),
                            self.d
                        )));
                    }
                    out.spectrum = Some(s.clone());
                }
                None => out.spectral_gap = Some(fp.spectral_gap.unwrap_or(0.1)),
            },
            Family::Mc => {
                out.mu = Some(fp.mu.unwrap_or(1.0));
                out.epsilon = Some(require(&fp.epsilon, family, "epsilon")?);
                match fp.p {
                    Some(p) => out.p = Some(p),
                    None => out.sampling_constant = Some(fp.sampling_constant.unwrap_or(1.0)),
                }
                out.ground_truth = Some(fp.ground_truth.unwrap_or_default());
            }
            Family::Tensor => out.n_components = Some(fp.n_components.unwrap_or(self.d)),
        }
        Ok(GeneratorSpec {
            family,
            d: self.d,
            family_params: out,
            seed: self.seed,
        })
    }
}

/// Generates the instance described by `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<Instance> {
    Ok(match spec.family {
        Family::Glm => Instance::Glm(gen_glm(spec)?),
        Family::Pca => Instance::Pca(gen_pca(spec)?),
        Family::Mc => Instance::Mc(gen_mc(spec)?),
        Family::Tensor => Instance::Tensor(gen_tensor(spec)?),
    })
}

fn expect_family(spec: &GeneratorSpec, family: Family) -> Result<GeneratorSpec> {
    if spec.family != family {
        return Err(Error::InvalidConfig(format!(
            "expected a {family} spec, got {}",
            spec.family
        )));
    }
    spec.resolve()
}

/// `n` samples uniform on the radius-`b` sphere with labels
/// `σ(w⋆ᵀx) + ε`, `ε ~ U[−noise_bound, noise_bound]`.
pub fn sample_glm_data(
    w_star: &Vector,
    n: usize,
    b: f64,
    noise_bound: f64,
    activation: Activation,
    rng: &mut Rng,
) -> (Matrix, Vector) {
    let d = w_star.len();
    let mut x = Matrix::zeros(n, d);
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let xi = uniform_sphere(d, b, rng);
        let noise = if noise_bound > 0.0 {
            rng.random_range(-noise_bound..=noise_bound)
        } else {
            0.0
        };
        y[i] = activation.value(xi.dot(w_star)) + noise;
        x.set_row(i, &xi.transpose());
    }
    (x, y)
}

pub fn gen_glm(spec: &GeneratorSpec) -> Result<GlmInstance> {
    let spec = expect_family(spec, Family::Glm)?;
    let fp = &spec.family_params;
    let (n, b, r, noise_bound) = (fp.n.unwrap(), fp.b.unwrap(), fp.r.unwrap(), fp.noise_bound.unwrap());
    if !(b > 0.0 && r > 0.0) || b * r < 1.0 {
        return Err(Error::InvalidConfig(format!("need B*R >= 1, got B={b}, R={r}")));
    }
    if !(0.0..=1.0).contains(&noise_bound) {
        return Err(Error::InvalidConfig(format!("noise_bound must lie in [0,1], got {noise_bound}")));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    let activation = Activation::Sigmoid;
    let w_star = uniform_sphere(spec.d, r, &mut rng::stream(spec.seed, "glm/w_star", 0));
    let mut data_rng = rng::stream(spec.seed, "glm/data", n as u64);
    let (x, y) = sample_glm_data(&w_star, n, b, noise_bound, activation, &mut data_rng);
    let cov = symmetrize(&(x.tr_mul(&x) / n as f64));
    let inst = GlmInstance {
        lambda_min_cov: min_eigenvalue(&cov),
        lambda_population: Some(b * b / spec.d as f64),
        gamma: activation.min_slope_on(b * r),
        x,
        y,
        activation,
        w_star,
        b,
        r,
        noise_bound,
        seed: spec.seed,
    };
    inst.validate()?;
    Ok(inst)
}

fn random_spectrum(d: usize, gap: f64, rng: &mut Rng) -> Vec<f64> {
    let mut rest: Vec<f64> = (1..d).map(|_| rng.random_range(0.1..1.0)).collect();
    rest.sort_by(|a, b| b.total_cmp(a));
    let mut spectrum = Vec::with_capacity(d);
    spectrum.push(rest[0] + gap);
    spectrum.extend(rest);
    spectrum
}

pub fn gen_pca(spec: &GeneratorSpec) -> Result<PcaInstance> {
    let spec = expect_family(spec, Family::Pca)?;
    let d = spec.d;
    let spectrum = match (&spec.family_params.spectrum, spec.family_params.spectral_gap) {
        (Some(s), _) => s.clone(),
        (None, Some(gap)) => {
            if !(gap >= 0.0) {
                return Err(Error::InvalidConfig(format!("spectral_gap must be >= 0, got {gap}")));
            }
            random_spectrum(d, gap, &mut rng::stream(spec.seed, "pca/spectrum", 0))
        }
        (None, None) => unreachable!("resolved spec carries a spectrum or a gap"),
    };
    if let Some(l) = spectrum.iter().find(|&&l| !(l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("spectrum entries must be non-negative, got {l}")));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig("spectrum must be sorted descending".into()));
    }
    let q = random_orthonormal(d, d, &mut rng::stream(spec.seed, "pca/basis", 0))?;
    let eigvals = Vector::from_vec(spectrum);
    let m = symmetrize(&(&q * Matrix::from_diagonal(&eigvals) * q.transpose()));
    let inst = PcaInstance {
        m,
        eigvals,
        eigvecs: q,
        seed: spec.seed,
    };
    inst.validate()?;
    Ok(inst)
}

/// Observation probability `min(1, c·μ⁴·(ln d)³ / (d·ε²))`.
pub fn mc_sampling_probability(d: usize, mu: f64, epsilon: f64, constant: f64) -> f64 {
    let ln_d = (d as f64).ln();
    (constant * mu.powi(4) * ln_d.powi(3) / (d as f64 * epsilon * epsilon)).min(1.0)
}

/// Bernoulli(p) mask over unordered pairs `i ≤ j`, diagonal included.
pub fn sample_mask(d: usize, p: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut omega = Vec::new();
    for i in 0..d {
        for j in i..d {
            if p >= 1.0 || rng.random::<f64>() < p {
                omega.push((i, j));
            }
        }
    }
    omega
}

pub fn gen_mc(spec: &GeneratorSpec) -> Result<McInstance> {
    let spec = expect_family(spec, Family::Mc)?;
    let fp = &spec.family_params;
    let d = spec.d;
    let (mu, epsilon) = (fp.mu.unwrap(), fp.epsilon.unwrap());
    if !(mu >= 1.0) {
        return Err(Error::InvalidConfig(format!("mu must be >= 1, got {mu}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let p = match fp.p {
        Some(p) => p,
        None => {
            let c = fp.sampling_constant.unwrap();
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("sampling_constant must be positive, got {c}")));
            }
            mc_sampling_probability(d, mu, epsilon, c)
        }
    };
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidConfig(format!("p must lie in (0,1], got {p}")));
    }
    let pairs = (d * (d + 1) / 2) as f64;
    if p * pairs < 10.0 * d as f64 {
        return Err(Error::InvalidConfig(format!(
            "expected {:.1} observed pairs is below 10*d = {}; instance too sparse",
            p * pairs,
            10 * d
        )));
    }
    let sqrt_d = (d as f64).sqrt();
    let mut z_rng = rng::stream(spec.seed, "mc/z", 0);
    let z = match fp.ground_truth.unwrap_or_default() {
        GroundTruth::Signs => Vector::from_fn(d, |_, _| {
            if z_rng.random::<bool>() { 1.0 / sqrt_d } else { -1.0 / sqrt_d }
        }),
        GroundTruth::Gaussian => {
            let limit = mu / sqrt_d;
            (0..10_000)
                .map(|_| uniform_sphere(d, 1.0, &mut z_rng))
                .find(|z| inf_norm(z) <= limit)
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "no Gaussian ground truth with |z|_inf <= {mu}/sqrt(d) after 10000 draws; raise mu"
                    ))
                })?
        }
    };
    let omega = sample_mask(d, p, &mut rng::stream(spec.seed, "mc/omega", 0));
    let inst = McInstance {
        z,
        mu,
        p,
        omega,
        epsilon,
        seed: spec.seed,
    };
    inst.validate()?;
    Ok(inst)
}

pub fn gen_tensor(spec: &GeneratorSpec) -> Result<TensorInstance> {
    let spec = expect_family(spec, Family::Tensor)?;
    let n = spec.family_params.n_components.unwrap();
    if n == 0 || n > spec.d {
        return Err(Error::InvalidConfig(format!(
            "n_components must lie in 1..=d (d = {}), got {n}",
            spec.d
        )));
    }
    let q = random_orthonormal(spec.d, n, &mut rng::stream(spec.seed, "tensor/components", 0))?;
    let inst = TensorInstance {
        components: q.transpose(),
        seed: spec.seed,
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{glm_empirical, tensor_ambient};
    use crate::Objective;

    fn glm_spec(d: usize, n: usize, b: f64, r: f64, noise: f64, seed: u64) -> GeneratorSpec {
        GeneratorSpec::new(Family::Glm, d, seed).with_params(FamilyParams {
            n: Some(n),
            b: Some(b),
            r: Some(r),
            noise_bound: Some(noise),
            ..Default::default()
        })
    }

    fn mc_spec(d: usize, mu: f64, epsilon: f64, seed: u64) -> GeneratorSpec {
        GeneratorSpec::new(Family::Mc, d, seed).with_params(FamilyParams {
            mu: Some(mu),
            epsilon: Some(epsilon),
            ..Default::default()
        })
    }

    #[test]
    fn noise_free_glm_fits_ground_truth() {
        let inst = gen_glm(&glm_spec(4, 50, 1.0, 1.0, 0.0, 3)).unwrap();
        assert!(inst.y.iter().all(|&y| (0.0..=1.0).contains(&y)));
        let risk = glm_empirical(&inst);
        assert_eq!(risk.value(&inst.w_star), 0.0);
    }

    #[test]
    fn glm_gamma_is_sigmoid_slope_at_br() {
        let inst = gen_glm(&glm_spec(3, 10, 2.0, 1.0, 0.0, 1)).unwrap();
        let s = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((inst.gamma - s * (1.0 - s)).abs() < 1e-15);
        assert!((inst.gamma - 0.105).abs() < 1e-3);
    }

    #[test]
    fn glm_rejects_small_br() {
        assert!(gen_glm(&glm_spec(3, 10, 0.5, 1.0, 0.0, 1)).is_err());
    }

    #[test]
    fn glm_covariance_matches_sphere_law() {
        let inst = gen_glm(&glm_spec(10, 10_000, 1.0, 1.0, 0.0, 9)).unwrap();
        let expected = 1.0 / 10.0;
        assert!((inst.lambda_min_cov - expected).abs() <= 0.2 * expected, "{}", inst.lambda_min_cov);
    }

    #[test]
    fn glm_sizes_share_ground_truth_not_samples() {
        let a = gen_glm(&glm_spec(5, 100, 1.0, 1.0, 0.1, 4)).unwrap();
        let b = gen_glm(&glm_spec(5, 400, 1.0, 1.0, 0.1, 4)).unwrap();
        assert_eq!(a.w_star, b.w_star);
        assert_ne!(a.x.row(0), b.x.row(0));
    }

    #[test]
    fn pca_rank_one_spectrum_and_reconstruction() {
        let mut spectrum = vec![0.0; 6];
        spectrum[0] = 1.0;
        let spec = GeneratorSpec::new(Family::Pca, 6, 2).with_params(FamilyParams {
            spectrum: Some(spectrum),
            ..Default::default()
        });
        let inst = gen_pca(&spec).unwrap();
        let v1 = inst.top_eigvec();
        assert!((&inst.m - &v1 * v1.transpose()).amax() < 1e-12);
        assert!((inst.eigvecs.tr_mul(&inst.eigvecs) - Matrix::identity(6, 6)).amax() < 1e-10);
        assert!((inst.reconstruct() - &inst.m).amax() < 1e-12);
    }

    #[test]
    fn pca_rejects_negative_spectrum() {
        let spec = GeneratorSpec::new(Family::Pca, 2, 2).with_params(FamilyParams {
            spectrum: Some(vec![1.0, -0.5]),
            ..Default::default()
        });
        assert!(gen_pca(&spec).is_err());
    }

    #[test]
    fn pca_random_spectrum_has_gap() {
        let spec = GeneratorSpec::new(Family::Pca, 8, 5).with_params(FamilyParams {
            spectral_gap: Some(0.25),
            ..Default::default()
        });
        let inst = gen_pca(&spec).unwrap();
        assert!(inst.eigvals[0] - inst.eigvals[1] >= 0.25 - 1e-15);
    }

    #[test]
    fn mc_small_epsilon_gives_full_observation() {
        let inst = gen_mc(&mc_spec(20, 1.0, 0.01, 1)).unwrap();
        assert_eq!(inst.p, 1.0);
        assert!(inst.is_complete());
        assert!((inst.z.dot(&inst.z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_mask_density_concentrates() {
        let d = 300;
        let spec = GeneratorSpec::new(Family::Mc, d, 11).with_params(FamilyParams {
            mu: Some(2.0),
            epsilon: Some(0.05),
            sampling_constant: Some(1e-4),
            ..Default::default()
        });
        let inst = gen_mc(&spec).unwrap();
        let pairs = (d * (d + 1) / 2) as f64;
        let density = inst.omega.len() as f64 / pairs;
        let p = inst.p;
        assert!(p < 1.0);
        assert!((density - p).abs() <= 5.0 * (p * (1.0 - p) / pairs).sqrt());
    }

    #[test]
    fn mc_mask_is_symmetric() {
        let spec = GeneratorSpec::new(Family::Mc, 60, 2).with_params(FamilyParams {
            epsilon: Some(0.5),
            p: Some(0.5),
            ..Default::default()
        });
        let inst = gen_mc(&spec).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                assert_eq!(inst.observed(i, j), inst.observed(j, i));
            }
        }
    }

    #[test]
    fn mc_too_sparse_is_rejected() {
        let spec = GeneratorSpec::new(Family::Mc, 100, 2).with_params(FamilyParams {
            epsilon: Some(0.5),
            p: Some(0.05),
            ..Default::default()
        });
        assert!(gen_mc(&spec).is_err());
    }

    #[test]
    fn mc_gaussian_ground_truth_respects_incoherence() {
        let spec = GeneratorSpec::new(Family::Mc, 50, 2).with_params(FamilyParams {
            mu: Some(4.0),
            epsilon: Some(0.5),
            ground_truth: Some(GroundTruth::Gaussian),
            ..Default::default()
        });
        let inst = gen_mc(&spec).unwrap();
        assert!(inf_norm(&inst.z) <= 4.0 / 50f64.sqrt());
    }

    #[test]
    fn tensor_components_are_orthonormal() {
        let spec = GeneratorSpec::new(Family::Tensor, 6, 8);
        let inst = gen_tensor(&spec).unwrap();
        let gram = &inst.components * inst.components.transpose();
        assert!((gram - Matrix::identity(6, 6)).amax() < 1e-12);
        let f = tensor_ambient(&inst);
        assert!((f.value(&inst.component(0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_rejects_overcomplete() {
        let spec = GeneratorSpec::new(Family::Tensor, 3, 8).with_params(FamilyParams {
            n_components: Some(4),
            ..Default::default()
        });
        assert!(gen_tensor(&spec).is_err());
    }

    #[test]
    fn foreign_params_rejected() {
        let spec = GeneratorSpec::new(Family::Tensor, 3, 8).with_params(FamilyParams {
            mu: Some(2.0),
            ..Default::default()
        });
        assert!(spec.resolve().is_err());
        let missing = GeneratorSpec::new(Family::Glm, 3, 8);
        assert!(missing.resolve().is_err());
    }

    #[test]
    fn same_seed_same_instance_via_json() {
        for spec in [
            glm_spec(4, 30, 1.0, 1.0, 0.2, 5),
            GeneratorSpec::new(Family::Pca, 5, 5),
            mc_spec(20, 1.0, 0.9, 5),
            GeneratorSpec::new(Family::Tensor, 4, 5),
        ] {
            let a = generate(&spec).unwrap();
            let b = generate(&spec).unwrap();
            let ja = serde_json::to_string(&a).unwrap();
            assert_eq!(ja, serde_json::to_string(&b).unwrap());
            let back: Instance = serde_json::from_str(&ja).unwrap();
            assert_eq!(back, a);
        }
    }
}
