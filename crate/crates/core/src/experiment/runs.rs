use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_params, AutoOr, Cell, DecaySeries, ExperimentConfig, OptimizerSpec, Outcome, Table};
use crate::certifier::{
    classify_point, glm_stationary_localization, mc_claim_check_with, mc_concentration_probe,
    pca_distance_to_global_minima, pca_oracle_sweep, pca_stationary_oracle, probe_condition, tensor_oracle_sweep,
    tensor_stationary_oracle, ClassifierThresholds, ConcentrationReport, ConditionKind, Geometry, Verdict,
};
use crate::derivative::{check_objective_derivatives, FdConfig};
use crate::generators::{generate, mc_sampling_probability, Family, FamilyParams, GeneratorSpec};
use crate::linalg::{gaussian_vector, max_eigenvalue, median, uniform_ball, uniform_sphere};
use crate::objectives::{
    glm_empirical, glm_population_proxy, tensor_ambient, FnObjective, GlmInstance, Instance, McInstance, Negated,
    PcaInstance, Quadratic, TensorInstance,
};
use crate::optimizers::{
    geometric_decay_check, gradient_descent, perturbed_gradient_descent, riemannian_ascent, GdConfig,
    OptimizerTrace, Termination,
};
use crate::rng::{self, Rng};
use crate::sphere::SpherePoint;
use crate::{Error, Matrix, Objective, Result, Vector};

pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub gens: &'a [GeneratorSpec],
    pub thr: ClassifierThresholds,
}

impl Context<'_> {
    fn n_runs(&self) -> usize {
        self.cfg.n_runs
    }

    fn run_seed(&self, k: usize) -> u64 {
        rng::derive_seed(self.cfg.master_seed, "run", k as u64)
    }

    fn single_generator(&self) -> Result<&GeneratorSpec> {
        match self.gens {
            [g] => Ok(g),
            _ => Err(Error::InvalidConfig(format!(
                "{} takes exactly one generator, got {}",
                self.cfg.experiment,
                self.gens.len()
            ))),
        }
    }

    fn unsupported(&self, family: Family) -> Error {
        Error::Unsupported {
            experiment: self.cfg.experiment.name().to_string(),
            family: family.name().to_string(),
        }
    }

    /// Generator spec used for run `k`.
    fn spec_for_run(&self, gen: &GeneratorSpec, k: usize) -> GeneratorSpec {
        let mut spec = gen.clone();
        if self.cfg.instance_per_run {
            spec.seed = rng::derive_seed(gen.seed, "instance", k as u64);
        }
        spec
    }

    fn instances(&self, gen: &GeneratorSpec) -> Result<Instances> {
        let count = if self.cfg.instance_per_run { self.n_runs() } else { 1 };
        let items = (0..count)
            .into_par_iter()
            .map(|k| generate(&self.spec_for_run(gen, k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Instances { items })
    }

    fn optimizer(&self, family: Family) -> Result<OptimizerSpec> {
        let spec = self
            .cfg
            .optimizer
            .clone()
            .unwrap_or_else(|| OptimizerSpec::default_for(family))
            .resolve();
        let ascent = matches!(spec, OptimizerSpec::RiemannianAscent { .. });
        if ascent != (family == Family::Tensor) {
            return Err(Error::InvalidConfig(format!(
                "optimizer.kind {} does not apply to the {family} family",
                spec.kind_name()
            )));
        }
        Ok(spec)
    }
}

struct Instances {
    items: Vec<Instance>,
}

impl Instances {
    fn get(&self, k: usize) -> &Instance {
        &self.items[k.min(self.items.len() - 1)]
    }
}

fn pca(inst: &Instance) -> &PcaInstance {
    match inst {
        Instance::Pca(i) => i,
        _ => unreachable!("family checked by caller"),
    }
}
fn glm(inst: &Instance) -> &GlmInstance {
    match inst {
        Instance::Glm(i) => i,
        _ => unreachable!("family checked by caller"),
    }
}
fn tensor(inst: &Instance) -> &TensorInstance {
    match inst {
        Instance::Tensor(i) => i,
        _ => unreachable!("family checked by caller"),
    }
}

/// A random point of the family's natural domain: the radius-`R` ball for
/// GLM, the radius-`2√λ₁` ball for PCA, the cube `0.9·B` for matrix
/// completion and the unit sphere for the tensor.
fn domain_point(inst: &Instance, rng: &mut Rng) -> Vector {
    match inst {
        Instance::Glm(i) => uniform_ball(i.dim(), i.r, rng),
        Instance::Pca(i) => uniform_ball(i.dim(), 2.0 * i.eigvals[0].sqrt(), rng),
        Instance::Mc(i) => cube_point(i.dim(), 0.9 * i.domain_radius(), rng),
        Instance::Tensor(i) => uniform_sphere(i.dim(), 1.0, rng),
    }
}

fn cube_point(d: usize, half_width: f64, rng: &mut Rng) -> Vector {
    Vector::from_fn(d, |_, _| rng.random_range(-half_width..half_width))
}

/// Default fixed step when the config says `"auto"`:
/// PCA `1/(8‖M‖_F)` (or `1/(2λ_max)` for the quadratic variant), matrix
/// completion `1/(8‖zzᵀ‖_F)`, GLM `1/L` with `L` a bound on the risk's
/// Hessian, tensor `1/16`.
pub(crate) fn auto_step_size(inst: &Instance, quadratic: bool) -> f64 {
    match inst {
        Instance::Pca(i) if quadratic => 1.0 / (2.0 * i.eigvals[0]),
        Instance::Pca(i) => 1.0 / (8.0 * i.m.norm()),
        Instance::Mc(i) => 1.0 / (8.0 * i.z.norm_squared()),
        Instance::Glm(i) => {
            // per-sample curvature ≤ σ'² + |σ − y|·|σ''| with |σ − y| ≤ 1 + noise
            let act = i.activation;
            let slope_max = act.first(0.0);
            let curv = slope_max * slope_max + (1.0 + i.noise_bound) * act.max_abs_second();
            let cov = i.x.tr_mul(&i.x) / i.n_samples() as f64;
            1.0 / (curv * max_eigenvalue(&cov))
        }
        Instance::Tensor(_) => 1.0 / 16.0,
    }
}

fn resolve_step(spec: &OptimizerSpec, inst: &Instance, quadratic: bool) -> f64 {
    match spec.step_size() {
        AutoOr::Auto => auto_step_size(inst, quadratic),
        AutoOr::Value(s) => s,
    }
}

fn run_optimizer(spec: &OptimizerSpec, obj: &dyn Objective, x0: &Vector, step: f64, seed: u64) -> Result<OptimizerTrace> {
    match spec {
        OptimizerSpec::Gd { .. } => gradient_descent(obj, x0, &spec.gd_config(step)?),
        OptimizerSpec::PerturbedGd { .. } => {
            let cfg = spec.perturbed_config(step)?.expect("perturbed spec");
            perturbed_gradient_descent(obj, x0, &cfg, seed)
        }
        OptimizerSpec::RiemannianAscent { .. } => {
            riemannian_ascent(obj, &SpherePoint::normalize(x0.clone())?, &spec.gd_config(step)?)
        }
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::GradTol => "GradTol",
        Termination::MaxIters => "MaxIters",
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("params serialize")
}

fn verdict_counts<'a>(verdicts: impl Iterator<Item = &'a Cell>) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = [Verdict::LargeGradient, Verdict::StrictSaddle, Verdict::CandidateLocalMin]
        .into_iter()
        .map(|v| (v.name().to_string(), 0))
        .collect();
    for v in verdicts.filter_map(Cell::as_str) {
        *counts.entry(v.to_string()).or_default() += 1;
    }
    counts
}

/// Largest support size whose sign-pattern enumeration stays within the cap.
fn auto_max_support(n: usize) -> usize {
    (1..=n)
        .take_while(|&s| tensor_stationary_oracle_count(n, s) <= crate::certifier::MAX_ENUMERATION)
        .last()
        .unwrap_or(1)
}

fn tensor_stationary_oracle_count(n: usize, s_max: usize) -> u128 {
    let mut total = 0u128;
    let mut binom = 1u128;
    for s in 1..=s_max {
        binom = binom * (n - s + 1) as u128 / s as u128;
        total += binom << s;
    }
    total
}

// ---------------------------------------------------------------- check-grad

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct CheckGradParams {
    pub step_h: f64,
    pub rel_tol: f64,
}

impl Default for CheckGradParams {
    fn default() -> Self {
        let fd = FdConfig::default();
        Self {
            step_h: fd.step_h,
            rel_tol: fd.rel_tol,
        }
    }
}

/// Analytic vs finite-difference derivatives at `n_runs` random domain
/// points per generator.
pub(crate) fn check_grad(ctx: &Context) -> Result<Outcome> {
    let params: CheckGradParams = parse_params(&ctx.cfg.params)?;
    let fd = FdConfig::new(params.step_h, params.rel_tol)?;
    let mut table = Table::new(&["run", "generator", "family", "d", "grad_rel_err", "hess_rel_err", "passed"]);
    let mut max_grad: BTreeMap<String, f64> = BTreeMap::new();
    let mut max_hess: BTreeMap<String, f64> = BTreeMap::new();
    let mut failures = Vec::new();
    for (gi, gen) in ctx.gens.iter().enumerate() {
        let insts = ctx.instances(gen)?;
        let results = (0..ctx.n_runs())
            .into_par_iter()
            .map(|k| {
                let inst = insts.get(k);
                let mut r = rng::stream(ctx.run_seed(k), "check-grad/point", gi as u64);
                let x = domain_point(inst, &mut r);
                check_objective_derivatives(&inst.objective(), &[x], &fd)
            })
            .collect::<Result<Vec<_>>>()?;
        let family = gen.family.name();
        let mut n_failed = 0;
        for (k, rep) in results.iter().enumerate() {
            let g = max_grad.entry(family.to_string()).or_insert(0.0);
            *g = g.max(rep.max_rel_err_grad);
            let h = max_hess.entry(family.to_string()).or_insert(0.0);
            *h = h.max(rep.max_rel_err_hess);
            n_failed += usize::from(!rep.passed);
            table.push(vec![
                k.into(),
                gi.into(),
                family.into(),
                gen.d.into(),
                rep.max_rel_err_grad.into(),
                rep.max_rel_err_hess.into(),
                rep.passed.into(),
            ]);
        }
        if n_failed > 0 {
            failures.push(format!(
                "check-grad[{gi}:{family}]: {n_failed} of {} points exceed relative error {}",
                ctx.n_runs(),
                params.rel_tol
            ));
        }
    }
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.agg("max_rel_err_grad", &max_grad);
    out.agg("max_rel_err_hess", &max_hess);
    out.params = to_json(&params);
    Ok(out)
}

// ------------------------------------------------------------------ optimize

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum ObjectiveChoice {
    /// The family's own objective.
    Native,
    /// `½xᵀMx` built from a PCA instance's matrix.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum StartChoice {
    /// Zero for GLM, random otherwise.
    Auto,
    Zero,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct OptimizeParams {
    pub objective: ObjectiveChoice,
    pub x0: StartChoice,
    /// PCA: required `f − f*`.
    pub value_tol: f64,
    /// PCA: required distance to the global minimizers.
    pub dist_tol: f64,
    /// Tensor: required `1 − max_i |⟨x, aᵢ⟩|`.
    pub align_tol: f64,
    /// Matrix completion: `C` in `min ‖x ∓ z‖ ≤ C√ε`.
    pub localization_constant: f64,
    /// Quadratic variant: also fit the decay of GD on `x⁴`, which must not
    /// look geometric.
    pub quartic_check: bool,
    pub quartic_step: f64,
    pub quartic_iters: usize,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            objective: ObjectiveChoice::Native,
            x0: StartChoice::Auto,
            value_tol: 1e-6,
            dist_tol: 1e-3,
            align_tol: 1e-5,
            localization_constant: crate::certifier::DEFAULT_LOCALIZATION_CONSTANT,
            quartic_check: true,
            quartic_step: 0.05,
            quartic_iters: 2000,
        }
    }
}

fn start_point(inst: &Instance, choice: StartChoice, rng: &mut Rng) -> Vector {
    let d = inst.dim();
    match (choice, inst) {
        (StartChoice::Zero, _) | (StartChoice::Auto, Instance::Glm(_)) => Vector::zeros(d),
        (_, Instance::Pca(i)) => gaussian_vector(d, rng) * (i.eigvals[0] / d as f64).sqrt(),
        (_, Instance::Mc(i)) => cube_point(d, 0.5 * i.domain_radius(), rng),
        (_, Instance::Glm(i)) => uniform_ball(d, i.r, rng),
        (_, Instance::Tensor(_)) => uniform_sphere(d, 1.0, rng),
    }
}

struct RunOut {
    row: Vec<Cell>,
    passed: bool,
    series: Option<DecaySeries>,
}

pub(crate) fn optimize(ctx: &Context) -> Result<Outcome> {
    let params: OptimizeParams = parse_params(&ctx.cfg.params)?;
    let gen = ctx.single_generator()?;
    let family = gen.family;
    let quadratic = params.objective == ObjectiveChoice::Quadratic;
    if quadratic && family != Family::Pca {
        return Err(Error::InvalidConfig(
            "params.objective = quadratic needs a pca generator".into(),
        ));
    }
    let spec = ctx.optimizer(family)?;
    let insts = ctx.instances(gen)?;
    let columns: &[&str] = match (family, quadratic) {
        (Family::Pca, true) => &[
            "run", "step_size", "iterations", "termination", "final_value", "monotone", "is_geometric", "rate",
            "r_squared", "n_used", "passed",
        ],
        (Family::Pca, false) => &[
            "run", "step_size", "iterations", "termination", "n_perturbations", "final_value", "gap", "grad_norm",
            "dist_to_global_min", "passed",
        ],
        (Family::Mc, _) => &[
            "run", "step_size", "iterations", "termination", "n_perturbations", "final_value", "grad_norm",
            "hess_min_eig", "claim1_margin", "claim2_margin", "distance_to_truth", "localization_bound", "in_domain",
            "passed",
        ],
        (Family::Glm, _) => &[
            "run", "step_size", "iterations", "termination", "final_value", "grad_norm", "dist_to_w_star", "passed",
        ],
        (Family::Tensor, _) => &[
            "run", "step_size", "iterations", "termination", "final_value", "max_alignment", "max_norm_drift",
            "passed",
        ],
    };
    let results = (0..ctx.n_runs())
        .into_par_iter()
        .map(|k| {
            let inst = insts.get(k);
            let seed = ctx.run_seed(k);
            let x0 = start_point(inst, params.x0, &mut rng::stream(seed, "optimize/x0", 0));
            let step = resolve_step(&spec, inst, quadratic);
            let label = format!("run{k}");
            match (inst, quadratic) {
                (Instance::Pca(i), true) => {
                    let obj = Quadratic::new(i.m.clone());
                    let trace = run_optimizer(&spec, &obj, &x0, step, seed)?;
                    let monotone = trace.values.windows(2).all(|w| w[1] <= w[0]);
                    let fit = geometric_decay_check(&trace, 0.0).ok();
                    let geometric = fit.is_some_and(|f| f.is_geometric);
                    Ok(RunOut {
                        row: vec![
                            k.into(),
                            step.into(),
                            trace.iterations().into(),
                            termination_name(trace.termination).into(),
                            trace.final_value().into(),
                            monotone.into(),
                            geometric.into(),
                            fit.map(|f| f.rate).into(),
                            fit.map(|f| f.r_squared).into(),
                            fit.map(|f| f.n_used).into(),
                            (geometric && monotone).into(),
                        ],
                        passed: geometric && monotone,
                        series: Some(DecaySeries {
                            label,
                            gaps: trace.values.clone(),
                        }),
                    })
                }
                (Instance::Pca(i), false) => {
                    let obj = inst.objective();
                    let trace = run_optimizer(&spec, &obj, &x0, step, seed)?;
                    let f_star = i.optimal_value();
                    let gap = trace.final_value() - f_star;
                    let dist = pca_distance_to_global_minima(i, &trace.final_point);
                    let passed = gap <= params.value_tol && dist <= params.dist_tol;
                    Ok(RunOut {
                        row: vec![
                            k.into(),
                            step.into(),
                            trace.iterations().into(),
                            termination_name(trace.termination).into(),
                            trace.perturbation_events.len().into(),
                            trace.final_value().into(),
                            gap.into(),
                            trace.final_grad_norm().into(),
                            dist.into(),
                            passed.into(),
                        ],
                        passed,
                        series: Some(DecaySeries {
                            label,
                            gaps: trace.values.iter().map(|v| v - f_star).collect(),
                        }),
                    })
                }
                (Instance::Mc(i), _) => {
                    let obj = inst.objective();
                    let trace = run_optimizer(&spec, &obj, &x0, step, seed)?;
                    let x = &trace.final_point;
                    let claim = match mc_claim_check_with(i, x, i.epsilon, params.localization_constant) {
                        Ok(c) => Some(c),
                        Err(Error::OutOfDomain(_)) => None,
                        Err(e) => return Err(e),
                    };
                    let passed = claim.as_ref().is_some_and(|c| c.passed);
                    Ok(RunOut {
                        row: vec![
                            k.into(),
                            step.into(),
                            trace.iterations().into(),
                            termination_name(trace.termination).into(),
                            trace.perturbation_events.len().into(),
                            trace.final_value().into(),
                            trace.final_grad_norm().into(),
                            claim.as_ref().map(|c| c.hess_min_eig).into(),
                            claim.as_ref().map(|c| c.claim1_margin).into(),
                            claim.as_ref().map(|c| c.claim2_margin).into(),
                            claim.as_ref().map(|c| c.distance_to_truth).into(),
                            (params.localization_constant * i.epsilon.sqrt()).into(),
                            claim.is_some().into(),
                            passed.into(),
                        ],
                        passed,
                        series: Some(DecaySeries {
                            label,
                            gaps: trace.values.clone(),
                        }),
                    })
                }
                (Instance::Glm(i), _) => {
                    let obj = glm_empirical(i);
                    let trace = run_optimizer(&spec, &obj, &x0, step, seed)?;
                    let passed = trace.termination == Termination::GradTol;
                    Ok(RunOut {
                        row: vec![
                            k.into(),
                            step.into(),
                            trace.iterations().into(),
                            termination_name(trace.termination).into(),
                            trace.final_value().into(),
                            trace.final_grad_norm().into(),
                            (&trace.final_point - &i.w_star).norm().into(),
                            passed.into(),
                        ],
                        passed,
                        series: None,
                    })
                }
                (Instance::Tensor(i), _) => {
                    let obj = tensor_ambient(i);
                    let trace = run_optimizer(&spec, &obj, &x0, step, seed)?;
                    let align = i.max_alignment(&trace.final_point);
                    let drift = trace
                        .points
                        .iter()
                        .chain(std::iter::once(&trace.final_point))
                        .map(|p| (p.norm() - 1.0).abs())
                        .fold(0.0, f64::max);
                    let passed = align >= 1.0 - params.align_tol;
                    Ok(RunOut {
                        row: vec![
                            k.into(),
                            step.into(),
                            trace.iterations().into(),
                            termination_name(trace.termination).into(),
                            trace.final_value().into(),
                            align.into(),
                            drift.into(),
                            passed.into(),
                        ],
                        passed,
                        // gap to the global maximum value 1
                        series: Some(DecaySeries {
                            label,
                            gaps: trace.values.iter().map(|v| 1.0 - v).collect(),
                        }),
                    })
                }
            }
        })
        .collect::<Result<Vec<RunOut>>>()?;

    let mut table = Table::new(columns);
    let mut out_traces = Vec::new();
    let mut n_passed = 0;
    for r in results {
        n_passed += usize::from(r.passed);
        table.push(r.row);
        out_traces.extend(r.series);
    }
    let mut out = Outcome::new(table);
    out.traces = out_traces;
    out.agg("n_runs", ctx.n_runs());
    out.agg("n_passed", n_passed);
    let what = match (family, quadratic) {
        (Family::Pca, true) => "geometric, monotone decay".to_string(),
        (Family::Pca, false) => format!("f - f* <= {} and distance <= {}", params.value_tol, params.dist_tol),
        (Family::Mc, _) => "both claims and the localization bound".to_string(),
        (Family::Glm, _) => "gradient tolerance".to_string(),
        (Family::Tensor, _) => format!("max alignment >= 1 - {}", params.align_tol),
    };
    let n = ctx.n_runs();
    out.check(n_passed == n, || {
        format!("optimize[{family}]: {} of {n} runs missed {what}", n - n_passed)
    });
    summarize_optimize(&mut out, family, quadratic);
    if quadratic && params.quartic_check {
        quartic_counterexample(&mut out, &params)?;
    }
    out.params = to_json(&params);
    out.optimizer = Some(spec);
    Ok(out)
}

fn summarize_optimize(out: &mut Outcome, family: Family, quadratic: bool) {
    let worst = |t: &Table, col: &str| t.f64_column(col).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let t = out.table.clone();
    match (family, quadratic) {
        (Family::Pca, true) => {
            let r2 = t.f64_column("r_squared").into_iter().fold(f64::INFINITY, f64::min);
            out.agg("min_r_squared", r2);
        }
        (Family::Pca, false) => {
            out.agg("max_gap", worst(&t, "gap"));
            out.agg("max_dist_to_global_min", worst(&t, "dist_to_global_min"));
        }
        (Family::Mc, _) => {
            out.agg("max_distance_to_truth", worst(&t, "distance_to_truth"));
            let m1 = t.f64_column("claim1_margin").into_iter().fold(f64::INFINITY, f64::min);
            let m2 = t.f64_column("claim2_margin").into_iter().fold(f64::INFINITY, f64::min);
            out.agg("min_claim1_margin", m1);
            out.agg("min_claim2_margin", m2);
        }
        (Family::Glm, _) => {
            out.agg("median_dist_to_w_star", median(&t.f64_column("dist_to_w_star")));
        }
        (Family::Tensor, _) => {
            let a = t.f64_column("max_alignment").into_iter().fold(f64::INFINITY, f64::min);
            out.agg("min_max_alignment", a);
            out.agg("max_norm_drift", worst(&t, "max_norm_drift"));
        }
    }
}

/// `f(x) = x⁴`: not PL at its minimizer, so GD decays sub-geometrically.
fn quartic_counterexample(out: &mut Outcome, params: &OptimizeParams) -> Result<()> {
    let f = FnObjective::new(
        1,
        |v| v[0].powi(4),
        |v| Vector::from_element(1, 4.0 * v[0].powi(3)),
        |v| Matrix::from_element(1, 1, 12.0 * v[0] * v[0]),
    );
    let cfg = GdConfig::new(params.quartic_step, params.quartic_iters, 1e-300)?;
    let trace = gradient_descent(&f, &Vector::from_element(1, 1.0), &cfg)?;
    let fit = geometric_decay_check(&trace, 0.0)?;
    out.agg("quartic_is_geometric", fit.is_geometric);
    out.agg("quartic_r_squared", fit.r_squared);
    out.agg("quartic_rate", fit.rate);
    out.check(!fit.is_geometric, || {
        format!("optimize[quartic]: x^4 decay was fitted as geometric (R² = {})", fit.r_squared)
    });
    out.traces.push(DecaySeries {
        label: "quartic".into(),
        gaps: trace.values,
    });
    Ok(())
}

// ------------------------------------------------------------------- certify

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum Basis {
    /// Components from the generator.
    Generated,
    /// `e₁ … e_n`.
    Standard,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct CertifyParams {
    /// Oracle points must have gradient norm at most this.
    pub oracle_grad_tol: f64,
    /// Slack on Hessian eigenvalue comparisons.
    pub hess_tol: f64,
    /// PCA: use `β = λ₁ − λ₂` instead of `certifier.beta`.
    pub beta_from_gap: bool,
    /// Tensor.
    pub basis: Basis,
    /// Tensor; `"auto"` is the largest size within the enumeration cap.
    pub max_support: AutoOr<usize>,
    /// GLM: condition probed on the population proxy.
    pub condition: String,
    /// GLM: probe parameter; `"auto"` is `2γ`.
    pub tau: AutoOr<f64>,
    pub proxy_size: usize,
    pub n_samples: usize,
    /// GLM: smallest acceptable worst margin is `−slack`.
    pub slack: f64,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self {
            oracle_grad_tol: 1e-9,
            hess_tol: 1e-8,
            beta_from_gap: false,
            basis: Basis::Generated,
            max_support: AutoOr::Auto,
            condition: "weak-quasi-convex".into(),
            tau: AutoOr::Auto,
            proxy_size: 100_000,
            n_samples: 500,
            slack: 1e-3,
        }
    }
}

pub(crate) fn certify(ctx: &Context) -> Result<Outcome> {
    let mut params: CertifyParams = parse_params(&ctx.cfg.params)?;
    let gen = ctx.single_generator()?;
    let out = match gen.family {
        Family::Pca => certify_pca(ctx, gen, &params)?,
        Family::Tensor => certify_tensor(ctx, gen, &mut params)?,
        Family::Glm => certify_glm(ctx, gen, &params)?,
        Family::Mc => return Err(ctx.unsupported(Family::Mc)),
    };
    Ok(Outcome {
        params: to_json(&params),
        ..out
    })
}

fn pca_point_label(index: Option<usize>, sign: i8) -> String {
    match index {
        None => "origin".into(),
        Some(i) => format!("{}v{}", if sign > 0 { '+' } else { '-' }, i + 1),
    }
}

fn certify_pca(ctx: &Context, gen: &GeneratorSpec, params: &CertifyParams) -> Result<Outcome> {
    let insts = ctx.instances(gen)?;
    let mut table = Table::new(&[
        "run", "point", "eigen_index", "eigenvalue", "grad_norm", "hess_min_eig", "expected_hess_min", "verdict",
        "dist_to_global_min",
    ]);
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mut max_grad = 0.0_f64;
    for k in 0..ctx.n_runs() {
        let inst = pca(insts.get(k));
        let mut thr = ctx.thr;
        if params.beta_from_gap {
            thr.beta = inst.eigvals[0] - inst.eigvals[1];
            if !(thr.beta > 0.0) {
                return Err(Error::InvalidConfig("beta_from_gap needs λ₁ > λ₂".into()));
            }
        }
        let degenerate = pca_stationary_oracle(inst).degenerate_groups;
        if !degenerate.is_empty() {
            notes.push(format!("run {k}: degenerate eigenspaces {degenerate:?}; oracle lists basis representatives"));
        }
        let rows = pca_oracle_sweep(inst, &thr)?;
        let mut n_min = 0;
        let mut bad = Vec::new();
        for r in &rows {
            max_grad = max_grad.max(r.grad_norm);
            let label = pca_point_label(r.eigen_index, r.sign);
            if r.grad_norm > params.oracle_grad_tol {
                bad.push(format!("{label}: gradient norm {} above {}", r.grad_norm, params.oracle_grad_tol));
            }
            if r.eigen_index == Some(0) {
                if r.verdict == Verdict::CandidateLocalMin {
                    n_min += 1;
                } else {
                    bad.push(format!("{label}: global minimizer classified {}", r.verdict.name()));
                }
            } else {
                if r.verdict != Verdict::StrictSaddle {
                    bad.push(format!("{label}: classified {}, expected StrictSaddle", r.verdict.name()));
                }
                if r.hess_min_eig > r.expected_hess_min + params.hess_tol {
                    bad.push(format!(
                        "{label}: smallest Hessian eigenvalue {} above 2(λᵢ − λ₁) = {}",
                        r.hess_min_eig, r.expected_hess_min
                    ));
                }
            }
            table.push(vec![
                k.into(),
                label.into(),
                r.eigen_index.into(),
                r.eigenvalue.into(),
                r.grad_norm.into(),
                r.hess_min_eig.into(),
                r.expected_hess_min.into(),
                r.verdict.name().into(),
                r.dist_to_global_min.into(),
            ]);
        }
        if n_min != 2 {
            bad.push(format!("{n_min} candidate local minima, expected exactly ±√λ₁v₁"));
        }
        failures.extend(bad.into_iter().map(|b| format!("certify[pca] run {k}: {b}")));
    }
    let counts = verdict_counts(table.column("verdict"));
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.notes = notes;
    out.agg("verdict_counts", counts);
    out.agg("max_oracle_grad_norm", max_grad);
    Ok(out)
}

fn certify_tensor(ctx: &Context, gen: &GeneratorSpec, params: &mut CertifyParams) -> Result<Outcome> {
    let insts = ctx.instances(gen)?;
    let n = tensor(insts.get(0)).n_components();
    let max_support = match params.max_support {
        AutoOr::Auto => auto_max_support(n),
        AutoOr::Value(s) => s,
    };
    params.max_support = AutoOr::Value(max_support);
    let mut table = Table::new(&[
        "run", "pattern", "support", "riemannian_grad_norm", "lambda_max", "pair_direction_form", "verdict",
    ]);
    let mut failures = Vec::new();
    let mut max_grad = 0.0_f64;
    let mut n_local_max_total = 0;
    for k in 0..ctx.n_runs() {
        let generated = tensor(insts.get(k));
        let inst = match params.basis {
            Basis::Generated => generated.clone(),
            Basis::Standard => TensorInstance::standard_basis(n, generated.dim()),
        };
        let rows = tensor_oracle_sweep(&inst, max_support, &ctx.thr)?;
        let mut bad = Vec::new();
        let mut n_local_max = 0;
        for (p, r) in rows.iter().enumerate() {
            max_grad = max_grad.max(r.riemannian_grad_norm);
            if r.riemannian_grad_norm > params.oracle_grad_tol {
                bad.push(format!("pattern {p}: Riemannian gradient norm {}", r.riemannian_grad_norm));
            }
            let local_max = r.lambda_max <= params.hess_tol;
            n_local_max += usize::from(local_max);
            if local_max != (r.support == 1) {
                bad.push(format!(
                    "pattern {p} (support {}): tangent λ_max = {}",
                    r.support, r.lambda_max
                ));
            }
            if r.support >= 2 {
                let bound = 8.0 / r.support as f64 - params.hess_tol;
                let form = r.pair_direction_form.unwrap_or(f64::NEG_INFINITY);
                if r.lambda_max < bound || form < bound {
                    bad.push(format!(
                        "pattern {p} (support {}): ascent curvature {} / {} below 8/s",
                        r.support, r.lambda_max, form
                    ));
                }
            }
            table.push(vec![
                k.into(),
                p.into(),
                r.support.into(),
                r.riemannian_grad_norm.into(),
                r.lambda_max.into(),
                r.pair_direction_form.into(),
                r.verdict.name().into(),
            ]);
        }
        if n_local_max != 2 * n {
            bad.push(format!("{n_local_max} local maxima, expected {}", 2 * n));
        }
        n_local_max_total += n_local_max;
        failures.extend(bad.into_iter().map(|b| format!("certify[tensor] run {k}: {b}")));
    }
    let counts = verdict_counts(table.column("verdict"));
    let n_points = table.len();
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.agg("n_points", n_points);
    out.agg("n_local_max", n_local_max_total);
    out.agg("verdict_counts_of_negated", counts);
    out.agg("max_oracle_grad_norm", max_grad);
    Ok(out)
}

fn certify_glm(ctx: &Context, gen: &GeneratorSpec, params: &CertifyParams) -> Result<Outcome> {
    let condition: ConditionKind = params.condition.parse()?;
    let insts = ctx.instances(gen)?;
    let mut table = Table::new(&[
        "run", "condition", "parameter", "n_samples", "n_violations", "worst_margin", "proxy_risk_at_w_star", "passed",
    ]);
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mut worst = f64::INFINITY;
    for k in 0..ctx.n_runs() {
        let inst = glm(insts.get(k));
        let proxy = glm_population_proxy(inst, params.proxy_size, rng::derive_seed(ctx.run_seed(k), "proxy", 0));
        notes.extend(proxy.warning.clone());
        let tau = match params.tau {
            AutoOr::Auto => 2.0 * inst.gamma,
            AutoOr::Value(t) => t,
        };
        let (d, r) = (inst.dim(), inst.r);
        let sampler = move |g: &mut Rng| uniform_ball(d, r, g);
        let rep = probe_condition(&proxy, &inst.w_star, condition, tau, &sampler, params.n_samples, ctx.run_seed(k))?;
        let passed = rep.worst_margin >= -params.slack;
        worst = worst.min(rep.worst_margin);
        if !passed {
            failures.push(format!(
                "certify[glm] run {k}: {:?} worst margin {} below -{}",
                condition, rep.worst_margin, params.slack
            ));
        }
        table.push(vec![
            k.into(),
            format!("{condition:?}").into(),
            tau.into(),
            rep.n_samples.into(),
            rep.n_violations.into(),
            rep.worst_margin.into(),
            proxy.value(&inst.w_star).into(),
            passed.into(),
        ]);
    }
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.notes = notes;
    out.agg("worst_margin", worst);
    Ok(out)
}

// ----------------------------------------------------------- landscape-sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct SweepParams {
    pub n_points: usize,
    /// Also classify the analytic stationary points (PCA, tensor).
    pub include_oracle: bool,
    pub max_support: AutoOr<usize>,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            n_points: 200,
            include_oracle: true,
            max_support: AutoOr::Auto,
        }
    }
}

/// Classifies random domain points (and optionally the oracle points) with
/// the strict-saddle trichotomy.
pub(crate) fn landscape_sweep(ctx: &Context) -> Result<Outcome> {
    let mut params: SweepParams = parse_params(&ctx.cfg.params)?;
    let gen = ctx.single_generator()?;
    let family = gen.family;
    let insts = ctx.instances(gen)?;
    if let (Family::Tensor, AutoOr::Auto) = (family, params.max_support) {
        params.max_support = AutoOr::Value(auto_max_support(tensor(insts.get(0)).n_components()));
    }
    let geometry = if family == Family::Tensor { Geometry::Sphere } else { Geometry::Euclidean };
    let mut table = Table::new(&["run", "source", "index", "grad_norm", "hess_min_eig", "verdict"]);
    let mut failures = Vec::new();
    let mut scatter = Vec::new();
    for k in 0..ctx.n_runs() {
        let inst = insts.get(k);
        let base = inst.objective();
        // the tensor problem is a maximization: classify −f
        let obj: Box<dyn Objective> = if family == Family::Tensor { Box::new(Negated(base)) } else { base };
        let mut points: Vec<(&str, Vector)> = (0..params.n_points)
            .map(|i| {
                let mut r = rng::stream(ctx.run_seed(k), "sweep/point", i as u64);
                ("random", domain_point(inst, &mut r))
            })
            .collect();
        if params.include_oracle {
            match inst {
                Instance::Pca(i) => points.extend(pca_stationary_oracle(i).points.into_iter().map(|p| ("oracle", p.point))),
                Instance::Tensor(i) => {
                    let AutoOr::Value(s) = params.max_support else { unreachable!("resolved above") };
                    for c in tensor_stationary_oracle(i.n_components(), s)? {
                        points.push(("oracle", i.components.tr_mul(c.coords())));
                    }
                }
                _ => {}
            }
        }
        let classified = points
            .par_iter()
            .map(|(_, x)| classify_point(&obj, x, &ctx.thr, None, geometry))
            .collect::<Result<Vec<_>>>()?;
        let mut oracle_verdicts = Vec::new();
        let mut index_by_source: BTreeMap<&str, usize> = BTreeMap::new();
        for ((source, _), c) in points.iter().zip(&classified) {
            let idx = index_by_source.entry(source).or_default();
            table.push(vec![
                k.into(),
                (*source).into(),
                (*idx).into(),
                c.grad_norm.into(),
                c.hess_min_eig.into(),
                c.verdict.name().into(),
            ]);
            *idx += 1;
            scatter.push((c.grad_norm, c.hess_min_eig));
            if *source == "oracle" {
                oracle_verdicts.push(c.verdict);
            }
        }
        let n_min = oracle_verdicts.iter().filter(|v| **v == Verdict::CandidateLocalMin).count();
        let n_saddle = oracle_verdicts.iter().filter(|v| **v == Verdict::StrictSaddle).count();
        match inst {
            Instance::Pca(_) if params.include_oracle => {
                let expected = oracle_verdicts.len() - 2;
                if n_min != 2 || n_saddle != expected {
                    failures.push(format!(
                        "landscape-sweep[pca] run {k}: oracle verdicts {n_min} CandidateLocalMin / {n_saddle} StrictSaddle, expected 2 / {expected}"
                    ));
                }
            }
            Instance::Tensor(i) if params.include_oracle => {
                let expected = 2 * i.n_components();
                if n_min != expected {
                    failures.push(format!(
                        "landscape-sweep[tensor] run {k}: {n_min} local maxima among oracle points, expected {expected}"
                    ));
                }
            }
            _ => {}
        }
    }
    let mut by_source: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for source in ["random", "oracle"] {
        let i_src = table.column_index("source").expect("column");
        let i_v = table.column_index("verdict").expect("column");
        let cells: Vec<&Cell> = table
            .rows
            .iter()
            .filter(|r| r[i_src].as_str() == Some(source))
            .map(|r| &r[i_v])
            .collect();
        if !cells.is_empty() {
            by_source.insert(source.to_string(), verdict_counts(cells.into_iter()));
        }
    }
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.scatter = scatter;
    out.agg("verdict_counts", by_source);
    out.params = to_json(&params);
    Ok(out)
}

// ------------------------------------------------------------- concentration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct ConcentrationParams {
    pub n_trials: usize,
    /// Required ratio of the 99th-percentile deviation at `p` and at `2p`
    /// when the default sampling constant misses `ε`.
    pub min_improvement: f64,
    pub max_doublings: usize,
    /// Additional sampling constants probed at `p` and `2p`, for the record.
    pub extra_constants: Vec<f64>,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            min_improvement: 1.2,
            max_doublings: 30,
            extra_constants: Vec::new(),
        }
    }
}

fn mc_with_p(spec: &GeneratorSpec, p: f64) -> GeneratorSpec {
    let mut s = spec.clone();
    s.family_params = FamilyParams {
        p: Some(p.min(1.0)),
        sampling_constant: None,
        ..s.family_params
    };
    s
}

fn probe_row(
    table: &mut Table,
    k: usize,
    label: &str,
    constant: Option<f64>,
    inst: &McInstance,
    rep: &ConcentrationReport,
) {
    table.push(vec![
        k.into(),
        label.into(),
        constant.into(),
        inst.p.into(),
        inst.n_observed_entries().into(),
        rep.quantile_99.into(),
        rep.max_abs_deviation.into(),
        rep.ground_truth_deviation.into(),
        (rep.quantile_99 <= inst.epsilon).into(),
    ]);
}

/// Monte-Carlo check of `|⟨P_Ω(uuᵀ), vvᵀ⟩/p − ⟨uuᵀ, vvᵀ⟩| ≤ ε` at the
/// configured sampling rate, at `p = 1`, and (if needed) along a doubling
/// calibration of the sampling constant.
pub(crate) fn concentration(ctx: &Context) -> Result<Outcome> {
    let params: ConcentrationParams = parse_params(&ctx.cfg.params)?;
    let gen = ctx.single_generator()?;
    if gen.family != Family::Mc {
        return Err(ctx.unsupported(gen.family));
    }
    let fp = &gen.family_params;
    let (mu, eps) = (fp.mu.expect("resolved"), fp.epsilon.expect("resolved"));
    let d = gen.d;
    let mut table = Table::new(&[
        "run", "probe", "sampling_constant", "p", "n_observed", "quantile_99", "max_abs_deviation",
        "ground_truth_deviation", "within_epsilon",
    ]);
    let mut failures = Vec::new();
    let mut calibrated: Vec<serde_json::Value> = Vec::new();
    let mut improvements: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for k in 0..ctx.n_runs() {
        let spec = ctx.spec_for_run(gen, k);
        let seed = ctx.run_seed(k);
        let probe = |s: &GeneratorSpec, tag: u64| -> Result<(McInstance, ConcentrationReport)> {
            let inst = crate::generators::gen_mc(s)?;
            let rep = mc_concentration_probe(&inst, params.n_trials, rng::derive_seed(seed, "probe", tag))?;
            Ok((inst, rep))
        };
        let (inst, rep) = probe(&spec, 0)?;
        probe_row(&mut table, k, "default", fp.sampling_constant, &inst, &rep);
        let default_ok = rep.quantile_99 <= eps;

        let (full, full_rep) = probe(&mc_with_p(&spec, 1.0), 1)?;
        probe_row(&mut table, k, "complete", None, &full, &full_rep);
        if full_rep.max_abs_deviation != 0.0 || full_rep.ground_truth_deviation != 0.0 {
            failures.push(format!(
                "concentration run {k}: deviation with p = 1 is {}, expected exactly 0",
                full_rep.max_abs_deviation
            ));
        }

        if !default_ok {
            let mut prev_q = rep.quantile_99;
            let mut first_ratio = None;
            let mut found = None;
            for j in 1..=params.max_doublings {
                let scale = 2f64.powi(j as i32);
                let p = (inst.p * scale).min(1.0);
                let (ci, cr) = probe(&mc_with_p(&spec, p), 1 + j as u64)?;
                let constant = fp.sampling_constant.map(|c| c * scale);
                probe_row(&mut table, k, &format!("calibration_{j}"), constant, &ci, &cr);
                first_ratio.get_or_insert(prev_q / cr.quantile_99);
                prev_q = cr.quantile_99;
                if cr.quantile_99 <= eps {
                    found = Some((constant, p));
                    break;
                }
                if p >= 1.0 {
                    break;
                }
            }
            let ratio = first_ratio.unwrap_or(f64::NAN);
            calibrated.push(serde_json::json!({
                "run": k,
                "sampling_constant": found.and_then(|f| f.0),
                "p": found.map(|f| f.1),
                "doubling_improvement": ratio,
            }));
            if !(ratio >= params.min_improvement) {
                failures.push(format!(
                    "concentration run {k}: default rate misses ε = {eps} (q99 = {}) and doubling p improves q99 only by {ratio}",
                    rep.quantile_99
                ));
            }
            if found.is_none() {
                failures.push(format!("concentration run {k}: no calibrated rate reached ε = {eps}"));
            }
        }

        for (ei, &c) in params.extra_constants.iter().enumerate() {
            let p = mc_sampling_probability(d, mu, eps, c);
            let tag = 1000 + 2 * ei as u64;
            let mut qs = Vec::new();
            for (label, pp, t) in [(format!("constant_{c}"), p, tag), (format!("constant_{c}_doubled"), 2.0 * p, tag + 1)] {
                match probe(&mc_with_p(&spec, pp), t) {
                    Ok((ci, cr)) => {
                        probe_row(&mut table, k, &label, (pp == p).then_some(c), &ci, &cr);
                        qs.push(cr.quantile_99);
                    }
                    Err(Error::InvalidConfig(msg)) => {
                        failures.push(format!("concentration run {k}: cannot probe constant {c}: {msg}"));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if let [q, q2] = qs[..] {
                improvements.entry(format!("{c}")).or_default().push(q / q2);
            }
        }
    }
    let mut out = Outcome::new(table);
    out.failures = failures;
    out.agg("calibrated", calibrated);
    out.agg("extra_constant_doubling_improvement", improvements);
    out.params = to_json(&params);
    Ok(out)
}

// ------------------------------------------------------------- scaling-study

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub(crate) struct ScalingParams {
    pub n_multiplier: usize,
    pub ratio_min: f64,
    pub ratio_max: f64,
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            n_multiplier: 4,
            ratio_min: 1.3,
            ratio_max: 3.0,
        }
    }
}

/// Distance of the GD endpoint to `w⋆` at `n` and `m·n` samples, one seed
/// per run; the ratio of the medians is checked against a window around
/// `√m`.
pub(crate) fn scaling_study(ctx: &Context) -> Result<Outcome> {
    let params: ScalingParams = parse_params(&ctx.cfg.params)?;
    let gen = ctx.single_generator()?;
    if gen.family != Family::Glm {
        return Err(ctx.unsupported(gen.family));
    }
    if params.n_multiplier < 2 {
        return Err(Error::InvalidConfig("params.n_multiplier must be at least 2".into()));
    }
    let spec = ctx.optimizer(Family::Glm)?;
    let n = gen.family_params.n.expect("resolved");
    let results = (0..ctx.n_runs())
        .into_par_iter()
        .map(|k| {
            let seed = rng::derive_seed(gen.seed, "instance", k as u64);
            let mut dists = [0.0; 2];
            let mut converged = true;
            for (slot, nn) in [n, n * params.n_multiplier].into_iter().enumerate() {
                let mut s = gen.clone();
                s.seed = seed;
                s.family_params.n = Some(nn);
                let inst = generate(&s)?;
                let step = resolve_step(&spec, &inst, false);
                let g = glm(&inst);
                let trace = run_optimizer(&spec, &glm_empirical(g), &Vector::zeros(g.dim()), step, ctx.run_seed(k))?;
                converged &= trace.termination == Termination::GradTol;
                dists[slot] = glm_stationary_localization(g, &[trace.final_point], (1.0, 1.0), 0.05)?.distances[0];
            }
            Ok((seed, dists, converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["run", "seed", "n", "dist_n", "dist_scaled", "ratio", "converged"]);
    for (k, (seed, [a, b], conv)) in results.iter().enumerate() {
        table.push(vec![k.into(), (*seed).into(), n.into(), (*a).into(), (*b).into(), (a / b).into(), (*conv).into()]);
    }
    let med_n = median(&table.f64_column("dist_n")).expect("n_runs >= 1");
    let med_scaled = median(&table.f64_column("dist_scaled")).expect("n_runs >= 1");
    let ratio = med_n / med_scaled;
    let mut out = Outcome::new(table);
    out.agg("median_dist_n", med_n);
    out.agg("median_dist_scaled", med_scaled);
    out.agg("ratio_of_medians", ratio);
    out.agg("median_of_ratios", median(&out.table.f64_column("ratio")));
    out.agg("expected_ratio", (params.n_multiplier as f64).sqrt());
    out.check((params.ratio_min..=params.ratio_max).contains(&ratio), || {
        format!(
            "scaling-study: median distance shrank by {ratio} from n = {n} to n = {}, outside [{}, {}]",
            n * params.n_multiplier,
            params.ratio_min,
            params.ratio_max
        )
    });
    let n_unconverged = results.iter().filter(|r| !r.2).count();
    out.check(n_unconverged == 0, || {
        format!("scaling-study: {n_unconverged} GD runs hit the iteration cap")
    });
    out.params = to_json(&params);
    out.optimizer = Some(spec);
    Ok(out)
}
