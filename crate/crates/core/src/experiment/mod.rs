//! Config-driven experiments with JSON reports and CSV tables.

mod runs;
mod table;

pub use table::{Cell, Table};

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::certifier::ClassifierThresholds;
use crate::generators::{Family, GeneratorSpec};
use crate::optimizers::{GdConfig, PerturbedGdConfig};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CheckGrad,
    Optimize,
    Certify,
    LandscapeSweep,
    Concentration,
    ScalingStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::CheckGrad,
        ExperimentKind::Optimize,
        ExperimentKind::Certify,
        ExperimentKind::LandscapeSweep,
        ExperimentKind::Concentration,
        ExperimentKind::ScalingStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CheckGrad => "check-grad",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::Certify => "certify",
            ExperimentKind::LandscapeSweep => "landscape-sweep",
            ExperimentKind::Concentration => "concentration",
            ExperimentKind::ScalingStudy => "scaling-study",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown experiment `{s}`")))
    }
}

/// A config value that is either `"auto"` (derived per instance) or explicit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr<T> {
    #[default]
    Auto,
    Value(T),
}

impl<T: Serialize> Serialize for AutoOr<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for AutoOr<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        if v == "auto" {
            return Ok(AutoOr::Auto);
        }
        serde_json::from_value(v)
            .map(AutoOr::Value)
            .map_err(|e| D::Error::custom(format!("expected \"auto\" or a value: {e}")))
    }
}

fn default_max_iters() -> usize {
    100_000
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_perturb_radius() -> f64 {
    1e-3
}
fn default_escape_decrease() -> f64 {
    1e-10
}

/// Optimizer section of a config. `step_size: "auto"` picks a per-family
/// default from the instance (PCA `1/(8‖M‖_F)`, matrix completion
/// `1/(8‖z‖²)`, GLM `1/L`, tensor `1/16`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Gd {
        #[serde(default)]
        step_size: AutoOr<f64>,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_grad_tol")]
        grad_tol: f64,
    },
    PerturbedGd {
        #[serde(default)]
        step_size: AutoOr<f64>,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_grad_tol")]
        grad_tol: f64,
        #[serde(default = "default_perturb_radius")]
        perturb_radius: f64,
        /// `None` until resolved to `10·grad_tol`.
        #[serde(default)]
        perturb_grad_threshold: Option<f64>,
        /// `"auto"` means `⌈2/step⌉`.
        #[serde(default)]
        perturb_cooldown_iters: AutoOr<usize>,
        #[serde(default = "default_escape_decrease")]
        escape_decrease: f64,
    },
    RiemannianAscent {
        #[serde(default)]
        step_size: AutoOr<f64>,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_grad_tol")]
        grad_tol: f64,
    },
}

impl OptimizerSpec {
    pub fn default_for(family: Family) -> Self {
        let (step_size, max_iters, grad_tol) = (AutoOr::Auto, default_max_iters(), default_grad_tol());
        match family {
            Family::Pca | Family::Mc => OptimizerSpec::PerturbedGd {
                step_size,
                max_iters,
                grad_tol,
                perturb_radius: default_perturb_radius(),
                perturb_grad_threshold: None,
                perturb_cooldown_iters: AutoOr::Auto,
                escape_decrease: default_escape_decrease(),
            },
            Family::Glm => OptimizerSpec::Gd {
                step_size,
                max_iters,
                grad_tol,
            },
            Family::Tensor => OptimizerSpec::RiemannianAscent {
                step_size,
                max_iters,
                grad_tol,
            },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            OptimizerSpec::Gd { .. } => "gd",
            OptimizerSpec::PerturbedGd { .. } => "perturbed_gd",
            OptimizerSpec::RiemannianAscent { .. } => "riemannian_ascent",
        }
    }

    /// Fills instance-independent defaults.
    pub fn resolve(&self) -> Self {
        let mut out = self.clone();
        if let OptimizerSpec::PerturbedGd {
            grad_tol,
            perturb_grad_threshold,
            ..
        } = &mut out
        {
            perturb_grad_threshold.get_or_insert(10.0 * *grad_tol);
        }
        out
    }

    fn step_size(&self) -> AutoOr<f64> {
        match *self {
            OptimizerSpec::Gd { step_size, .. }
            | OptimizerSpec::PerturbedGd { step_size, .. }
            | OptimizerSpec::RiemannianAscent { step_size, .. } => step_size,
        }
    }

    /// Base config for a concrete step size.
    pub fn gd_config(&self, step: f64) -> Result<GdConfig> {
        match *self {
            OptimizerSpec::Gd { max_iters, grad_tol, .. }
            | OptimizerSpec::PerturbedGd { max_iters, grad_tol, .. }
            | OptimizerSpec::RiemannianAscent { max_iters, grad_tol, .. } => GdConfig::new(step, max_iters, grad_tol),
        }
    }

    pub fn perturbed_config(&self, step: f64) -> Result<Option<PerturbedGdConfig>> {
        let base = self.gd_config(step)?;
        let OptimizerSpec::PerturbedGd {
            perturb_radius,
            perturb_grad_threshold,
            perturb_cooldown_iters,
            escape_decrease,
            ..
        } = *self
        else {
            return Ok(None);
        };
        let mut cfg = PerturbedGdConfig::from_base(base);
        cfg.perturb_radius = perturb_radius;
        if let Some(t) = perturb_grad_threshold {
            cfg.perturb_grad_threshold = t;
        }
        if let AutoOr::Value(c) = perturb_cooldown_iters {
            cfg.perturb_cooldown_iters = c;
        }
        cfg.escape_decrease = escape_decrease;
        cfg.validate()?;
        Ok(Some(cfg))
    }
}

/// Top-level experiment config, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Exactly one of `generator` / `generators` must be given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
    #[serde(default)]
    pub certifier: CertifierSpec,
    #[serde(default = "one")]
    pub n_runs: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Draw a fresh instance per run (seed derived from the generator seed
    /// and run index) instead of sharing one instance.
    #[serde(default)]
    pub instance_per_run: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Experiment-specific settings; unknown keys are rejected.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
}

fn one() -> usize {
    1
}

/// Classifier thresholds with every field optional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifierSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hess_psd_tol: Option<f64>,
}

impl CertifierSpec {
    pub fn resolve(&self) -> Result<ClassifierThresholds> {
        let d = ClassifierThresholds::default();
        let thr = ClassifierThresholds {
            alpha: self.alpha.unwrap_or(d.alpha),
            beta: self.beta.unwrap_or(d.beta),
            hess_psd_tol: self.hess_psd_tol.unwrap_or(d.hess_psd_tol),
        };
        thr.validate()?;
        Ok(thr)
    }
}

fn path_error<E: fmt::Display>(e: serde_path_to_error::Error<E>, prefix: &str) -> Error {
    let path = e.path().to_string();
    let path = match (prefix, path.as_str()) {
        ("", p) => p.to_string(),
        (pre, ".") => pre.to_string(),
        (pre, p) => format!("{pre}.{p}"),
    };
    Error::ConfigParse {
        path,
        message: e.into_inner().to_string(),
    }
}

impl ExperimentConfig {
    /// Parses a JSON document; errors carry the field path and, for syntax
    /// errors, the line and column.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| path_error(e, ""))?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_path_to_error::deserialize(value).map_err(|e| path_error(e, ""))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn generator_specs(&self) -> Result<Vec<GeneratorSpec>> {
        match (&self.generator, &self.generators) {
            (Some(g), None) => Ok(vec![g.clone()]),
            (None, Some(gs)) if !gs.is_empty() => Ok(gs.clone()),
            (None, Some(_)) => Err(Error::InvalidConfig("generators must not be empty".into())),
            (None, None) => Err(Error::InvalidConfig("a generator (or generators) section is required".into())),
            (Some(_), Some(_)) => Err(Error::InvalidConfig("give either generator or generators, not both".into())),
        }
    }
}

/// Parses `params` into an experiment's settings struct, reporting errors
/// under `params.<field>`.
pub(crate) fn parse_params<T: DeserializeOwned + Default>(value: &serde_json::Value) -> Result<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_path_to_error::deserialize(value.clone()).map_err(|e| path_error(e, "params"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub passed: bool,
    /// One entry per failed assertion, naming it.
    pub failures: Vec<String>,
    pub aggregates: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
}

/// `iter → f(x_k) − f*` for one run, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySeries {
    pub label: String,
    pub gaps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config_echo: serde_json::Value,
    pub per_run_rows: Table,
    pub summary: Summary,
    pub wall_time: f64,
    pub version: String,
    #[serde(skip)]
    pub traces: Vec<DecaySeries>,
    /// `(grad_norm, hess_min_eig)` of classified points.
    #[serde(skip)]
    pub scatter: Vec<(f64, f64)>,
}

/// What an experiment body hands back to [`run_experiment`].
pub(crate) struct Outcome {
    pub table: Table,
    pub failures: Vec<String>,
    pub aggregates: BTreeMap<String, serde_json::Value>,
    pub notes: Vec<String>,
    pub traces: Vec<DecaySeries>,
    pub scatter: Vec<(f64, f64)>,
    /// Fully resolved experiment-specific params.
    pub params: serde_json::Value,
    pub optimizer: Option<OptimizerSpec>,
}

impl Outcome {
    pub(crate) fn new(table: Table) -> Self {
        Self {
            table,
            failures: Vec::new(),
            aggregates: BTreeMap::new(),
            notes: Vec::new(),
            traces: Vec::new(),
            scatter: Vec::new(),
            params: serde_json::Value::Null,
            optimizer: None,
        }
    }

    pub(crate) fn agg(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("aggregate serializes");
        self.aggregates.insert(key.to_string(), v);
    }

    pub(crate) fn check(&mut self, ok: bool, failure: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(failure());
        }
    }
}

/// The resolved config as it is echoed into `report.json`.
#[derive(Debug, Clone, Serialize)]
struct ConfigEcho<'a> {
    experiment: ExperimentKind,
    generators: Vec<GeneratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerSpec>,
    certifier: ClassifierThresholds,
    n_runs: usize,
    master_seed: u64,
    instance_per_run: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_dir: Option<&'a Path>,
    params: serde_json::Value,
}

/// Runs the configured experiment. When `output_dir` is set, writes
/// `report.json` and `rows.csv` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    if cfg.n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be at least 1".into()));
    }
    let gens = cfg
        .generator_specs()?
        .iter()
        .map(GeneratorSpec::resolve)
        .collect::<Result<Vec<_>>>()?;
    let thr = cfg.certifier.resolve()?;
    let ctx = runs::Context {
        cfg,
        gens: &gens,
        thr,
    };
    let outcome = match cfg.experiment {
        ExperimentKind::CheckGrad => runs::check_grad(&ctx)?,
        ExperimentKind::Optimize => runs::optimize(&ctx)?,
        ExperimentKind::Certify => runs::certify(&ctx)?,
        ExperimentKind::LandscapeSweep => runs::landscape_sweep(&ctx)?,
        ExperimentKind::Concentration => runs::concentration(&ctx)?,
        ExperimentKind::ScalingStudy => runs::scaling_study(&ctx)?,
    };
    let echo = ConfigEcho {
        experiment: cfg.experiment,
        generators: gens.clone(),
        optimizer: outcome.optimizer.clone(),
        certifier: thr,
        n_runs: cfg.n_runs,
        master_seed: cfg.master_seed,
        instance_per_run: cfg.instance_per_run,
        output_dir: cfg.output_dir.as_deref(),
        params: outcome.params,
    };
    let report = ExperimentReport {
        config_echo: serde_json::to_value(echo)?,
        per_run_rows: outcome.table,
        summary: Summary {
            passed: outcome.failures.is_empty(),
            failures: outcome.failures,
            aggregates: outcome.aggregates,
            notes: outcome.notes,
        },
        wall_time: start.elapsed().as_secs_f64(),
        version: VERSION.to_string(),
        traces: outcome.traces,
        scatter: outcome.scatter,
    };
    if let Some(dir) = &cfg.output_dir {
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// Writes `report.json` and `rows.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))?;
    let csv_path = dir.join("rows.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    report.per_run_rows.write_csv(std::io::BufWriter::new(file))
}

/// Writes plot-ready CSVs under `dir/plots`: one `decay_<label>.csv`
/// (`iter,log10_gap`) per trace, or a header-only `decay.csv` when there are
/// none, and `scatter.csv` (`grad_norm,hess_min_eig`) when points were
/// classified. Returns the files written.
pub fn emit_plots_data(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, table: Table| -> Result<()> {
        let path = plots.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        table.write_csv(std::io::BufWriter::new(file))?;
        written.push(path);
        Ok(())
    };
    if report.traces.is_empty() {
        write("decay.csv".into(), Table::new(&["iter", "log10_gap"]))?;
    }
    for series in &report.traces {
        let mut t = Table::new(&["iter", "log10_gap"]);
        for (k, &gap) in series.gaps.iter().enumerate().take_while(|(_, &g)| g > 0.0) {
            t.push(vec![k.into(), gap.log10().into()]);
        }
        write(format!("decay_{}.csv", series.label), t)?;
    }
    if !report.scatter.is_empty() {
        let mut t = Table::new(&["grad_norm", "hess_min_eig"]);
        for &(g, h) in &report.scatter {
            t.push(vec![g.into(), h.into()]);
        }
        write("scatter.csv".into(), t)?;
    }
    Ok(written)
}
