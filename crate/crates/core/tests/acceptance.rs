//! Acceptance suite. Each criterion runs through the same experiment
//! orchestrator the CLI uses and prints one `PASS`/`FAIL` line to stderr.
//!
//! Run with `cargo test -p landscape-core --test acceptance`.

use std::io::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use landscape_core::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use serde_json::{json, Value};

struct Outcome {
    ok: bool,
    detail: String,
}

fn run(cfg: Value) -> ExperimentReport {
    let cfg = ExperimentConfig::from_value(cfg).expect("valid config");
    run_experiment(&cfg).expect("experiment runs")
}

fn agg<'a>(r: &'a ExperimentReport, key: &str) -> &'a Value {
    r.summary
        .aggregates
        .get(key)
        .unwrap_or_else(|| panic!("aggregate {key} missing"))
}

fn failures(r: &ExperimentReport) -> String {
    if r.summary.failures.is_empty() {
        String::new()
    } else {
        format!("; failures: {}", r.summary.failures.join(" | "))
    }
}

fn derivative_config() -> Value {
    json!({
        "experiment": "check-grad",
        "generators": [
            {"family": "glm", "d": 10, "family_params": {"n": 200, "noise_bound": 0.1}, "seed": 11},
            {"family": "pca", "d": 10, "seed": 12},
            {"family": "mc", "d": 50, "family_params": {"epsilon": 0.1, "p": 0.6}, "seed": 13},
            {"family": "tensor", "d": 10, "seed": 14}
        ],
        "n_runs": 100,
        "master_seed": 1,
        "params": {"rel_tol": 1e-5}
    })
}

fn derivatives() -> Outcome {
    let r = run(derivative_config());
    let ok = r.summary.passed && r.per_run_rows.len() == 400;
    Outcome {
        ok,
        detail: format!(
            "max grad err {}, max hess err {}{}",
            agg(&r, "max_rel_err_grad"),
            agg(&r, "max_rel_err_hess"),
            failures(&r)
        ),
    }
}

fn pca_certify_config() -> Value {
    json!({
        "experiment": "certify",
        "generator": {"family": "pca", "d": 20, "family_params": {"spectral_gap": 0.2}, "seed": 21},
        "master_seed": 2
    })
}

fn pca_landscape() -> Outcome {
    let r = run(pca_certify_config());
    let mut sweep_cfg = pca_certify_config();
    sweep_cfg["experiment"] = json!("landscape-sweep");
    let s = run(sweep_cfg);
    let oracle_counts = &agg(&s, "verdict_counts")["oracle"];
    let ok = r.summary.passed
        && s.summary.passed
        && r.per_run_rows.len() == 41
        && agg(&r, "verdict_counts")["CandidateLocalMin"] == json!(2)
        && agg(&r, "verdict_counts")["StrictSaddle"] == json!(39)
        && oracle_counts["CandidateLocalMin"] == json!(2)
        && oracle_counts["StrictSaddle"] == json!(39);
    Outcome {
        ok,
        detail: format!(
            "{} oracle points, verdicts {}, max oracle grad {}{}{}",
            r.per_run_rows.len(),
            agg(&r, "verdict_counts"),
            agg(&r, "max_oracle_grad_norm"),
            failures(&r),
            failures(&s)
        ),
    }
}

fn pca_optimize_config() -> Value {
    json!({
        "experiment": "optimize",
        "generator": {"family": "pca", "d": 20, "family_params": {"spectral_gap": 0.1}, "seed": 31},
        "optimizer": {"kind": "perturbed_gd", "grad_tol": 1e-8},
        "n_runs": 50,
        "master_seed": 3,
        "params": {"value_tol": 1e-6, "dist_tol": 1e-3}
    })
}

fn pca_optimization() -> Outcome {
    let r = run(pca_optimize_config());
    Outcome {
        ok: r.summary.passed && r.per_run_rows.len() == 50,
        detail: format!(
            "{}/50 runs, max gap {}, max distance {}{}",
            agg(&r, "n_passed"),
            agg(&r, "max_gap"),
            agg(&r, "max_dist_to_global_min"),
            failures(&r)
        ),
    }
}

fn tensor_certify_config() -> Value {
    json!({
        "experiment": "certify",
        "generator": {"family": "tensor", "d": 6, "family_params": {"n_components": 6}, "seed": 41},
        "master_seed": 4,
        "params": {"basis": "standard", "oracle_grad_tol": 1e-9, "hess_tol": 1e-8}
    })
}

fn tensor_landscape() -> Outcome {
    let r = run(tensor_certify_config());
    let ok = r.summary.passed && agg(&r, "n_points") == &json!(728) && agg(&r, "n_local_max") == &json!(12);
    Outcome {
        ok,
        detail: format!(
            "{} patterns, {} local maxima, max grad {}{}",
            agg(&r, "n_points"),
            agg(&r, "n_local_max"),
            agg(&r, "max_oracle_grad_norm"),
            failures(&r)
        ),
    }
}

fn tensor_recovery_config() -> Value {
    json!({
        "experiment": "optimize",
        "generator": {"family": "tensor", "d": 6, "family_params": {"n_components": 6}, "seed": 51},
        "optimizer": {"kind": "riemannian_ascent", "grad_tol": 1e-10},
        "n_runs": 200,
        "instance_per_run": true,
        "master_seed": 5,
        "params": {"align_tol": 1e-5}
    })
}

fn tensor_recovery() -> Outcome {
    let r = run(tensor_recovery_config());
    Outcome {
        ok: r.summary.passed && r.per_run_rows.len() == 200,
        detail: format!(
            "{}/200 runs, min alignment {}, max norm drift {}{}",
            agg(&r, "n_passed"),
            agg(&r, "min_max_alignment"),
            agg(&r, "max_norm_drift"),
            failures(&r)
        ),
    }
}

fn mc_concentration_config() -> Value {
    json!({
        "experiment": "concentration",
        "generator": {"family": "mc", "d": 300, "family_params": {"mu": 1.0, "epsilon": 0.05}, "seed": 61},
        "master_seed": 6,
        "params": {"n_trials": 1000, "min_improvement": 1.2}
    })
}

fn mc_concentration() -> Outcome {
    let r = run(mc_concentration_config());
    let rows = &r.per_run_rows;
    let q99 = rows.f64_column("quantile_99");
    let probes: Vec<&str> = rows.column("probe").filter_map(|c| c.as_str()).collect();
    let complete = probes.iter().position(|p| *p == "complete").expect("complete probe row");
    let max_dev = rows.f64_column("max_abs_deviation");
    Outcome {
        ok: r.summary.passed && max_dev[complete] == 0.0,
        detail: format!(
            "default q99 {} (p = {}), p = 1 deviation {}, calibrated {}{}",
            q99[0],
            rows.f64_column("p")[0],
            max_dev[complete],
            agg(&r, "calibrated"),
            failures(&r)
        ),
    }
}

fn mc_landscape_config() -> Value {
    json!({
        "experiment": "optimize",
        "generator": {"family": "mc", "d": 200, "family_params": {"epsilon": 0.1, "p": 0.15}, "seed": 71},
        "optimizer": {"kind": "perturbed_gd", "grad_tol": 1e-8},
        "n_runs": 20,
        "master_seed": 7,
        "params": {"localization_constant": 5.0}
    })
}

fn mc_landscape() -> Outcome {
    let r = run(mc_landscape_config());
    Outcome {
        ok: r.summary.passed && r.per_run_rows.len() == 20,
        detail: format!(
            "{}/20 runs, max distance {} (bound {}), min claim margins {} / {}{}",
            agg(&r, "n_passed"),
            agg(&r, "max_distance_to_truth"),
            5.0 * 0.1f64.sqrt(),
            agg(&r, "min_claim1_margin"),
            agg(&r, "min_claim2_margin"),
            failures(&r)
        ),
    }
}

fn glm_wqc_config() -> Value {
    json!({
        "experiment": "certify",
        "generator": {"family": "glm", "d": 10, "family_params": {"n": 200, "noise_bound": 0.0}, "seed": 81},
        "master_seed": 8,
        "params": {"condition": "weak-quasi-convex", "tau": "auto", "proxy_size": 100000, "n_samples": 500, "slack": 1e-3}
    })
}

fn glm_quasi_convexity() -> Outcome {
    let r = run(glm_wqc_config());
    Outcome {
        ok: r.summary.passed,
        detail: format!("worst margin {}{}", agg(&r, "worst_margin"), failures(&r)),
    }
}

fn glm_scaling_config() -> Value {
    json!({
        "experiment": "scaling-study",
        "generator": {"family": "glm", "d": 10, "family_params": {"n": 10000, "noise_bound": 0.1}, "seed": 91},
        "n_runs": 20,
        "master_seed": 9,
        "params": {"n_multiplier": 4, "ratio_min": 1.3, "ratio_max": 3.0}
    })
}

fn glm_scaling() -> Outcome {
    let r = run(glm_scaling_config());
    Outcome {
        ok: r.summary.passed,
        detail: format!(
            "median distance {} -> {}, ratio {}{}",
            agg(&r, "median_dist_n"),
            agg(&r, "median_dist_scaled"),
            agg(&r, "ratio_of_medians"),
            failures(&r)
        ),
    }
}

fn decay_config() -> Value {
    json!({
        "experiment": "optimize",
        "generator": {"family": "pca", "d": 10, "seed": 101},
        "optimizer": {"kind": "gd", "step_size": "auto", "grad_tol": 1e-12},
        "master_seed": 10,
        "params": {"objective": "quadratic", "quartic_check": true}
    })
}

fn geometric_decay() -> Outcome {
    let r = run(decay_config());
    let r2 = agg(&r, "min_r_squared").as_f64().unwrap_or(f64::NAN);
    let quartic = agg(&r, "quartic_is_geometric");
    Outcome {
        ok: r.summary.passed && r2 >= 0.99 && quartic == &json!(false),
        detail: format!(
            "quadratic R² {r2}, rate {}, x^4 geometric = {quartic} (R² {}){}",
            r.per_run_rows.f64_column("rate")[0],
            agg(&r, "quartic_r_squared"),
            failures(&r)
        ),
    }
}

fn rows_csv(mut cfg: Value, dir: &Path) -> Vec<u8> {
    cfg["output_dir"] = json!(dir);
    run(cfg);
    std::fs::read(dir.join("rows.csv")).expect("rows.csv written")
}

fn determinism() -> Outcome {
    let configs = [
        ("check-grad", derivative_config()),
        ("pca certify", pca_certify_config()),
        ("pca optimize", pca_optimize_config()),
        ("tensor certify", tensor_certify_config()),
        ("mc concentration", mc_concentration_config()),
        ("mc optimize", mc_landscape_config()),
        ("glm certify", glm_wqc_config()),
        ("decay", decay_config()),
    ];
    let mut differing = Vec::new();
    for (name, cfg) in configs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = rows_csv(cfg.clone(), a.path());
        let second = rows_csv(cfg, b.path());
        if first.is_empty() || first != second {
            differing.push(name);
        }
    }
    Outcome {
        ok: differing.is_empty(),
        detail: if differing.is_empty() {
            "8 experiments rerun, rows.csv identical".into()
        } else {
            format!("rows.csv differs for {differing:?}")
        },
    }
}

/// Runs one criterion and reports it on stderr directly, bypassing the
/// harness's output capture so the line shows up in plain `cargo test` runs.
fn criterion(name: &str, budget: Duration, check: fn() -> Outcome) {
    let start = Instant::now();
    let out = check();
    let elapsed = start.elapsed();
    let ok = out.ok && elapsed <= budget;
    let line = format!(
        "{} [{name}] {:.2}s (budget {}s): {}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        out.detail
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

#[test]
fn criterion_01_derivative_correctness() {
    criterion("1 derivative correctness", Duration::from_secs(30), derivatives);
}

#[test]
fn criterion_02_pca_landscape() {
    criterion("2 PCA landscape", Duration::from_secs(10), pca_landscape);
}

#[test]
fn criterion_03_pca_optimization() {
    criterion("3 PCA optimization", Duration::from_secs(60), pca_optimization);
}

#[test]
fn criterion_04_tensor_landscape() {
    criterion("4 tensor landscape", Duration::from_secs(60), tensor_landscape);
}

#[test]
fn criterion_05_tensor_recovery() {
    criterion("5 tensor recovery", Duration::from_secs(120), tensor_recovery);
}

#[test]
fn criterion_06_mc_concentration() {
    criterion("6 MC concentration", Duration::from_secs(120), mc_concentration);
}

#[test]
fn criterion_07_mc_landscape() {
    criterion("7 MC landscape", Duration::from_secs(300), mc_landscape);
}

#[test]
fn criterion_08_glm_quasi_convexity() {
    criterion("8 GLM quasi-convexity", Duration::from_secs(60), glm_quasi_convexity);
}

#[test]
fn criterion_09_glm_localization_scaling() {
    criterion("9 GLM localization scaling", Duration::from_secs(300), glm_scaling);
}

#[test]
fn criterion_10_geometric_decay() {
    criterion("10 geometric decay", Duration::from_secs(5), geometric_decay);
}

#[test]
fn criterion_11_determinism() {
    criterion("11 determinism", Duration::from_secs(600), determinism);
}
