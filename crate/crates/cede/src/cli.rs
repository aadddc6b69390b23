//! Configuration parsing and run orchestration for the command-line
//! front end.
//!
//! A run is described by one JSON document (strict: unknown keys are
//! rejected so a mistyped `lambdas`/`levels` cannot slip through) plus the
//! subcommand choosing the mode. Outputs are a JSON report document and an
//! optional CSV: the ceded/retained curve for single solves, one row per
//! grid point for sweeps.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::contract::CededContract;
use crate::distortion::DistortionFunction;
use crate::distribution::LossDistribution;
use crate::dual::{solve_constrained, ConstraintSet, DualSolution};
use crate::error::{CedeError, Result};
use crate::oracle::{brute_force_min, cross_validate, OracleResult, Verdict};
use crate::problem::ProblemSpec;
use crate::solver::{solve, SolutionReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Solve,
    Constrained,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when present.
    #[serde(default)]
    pub mode: Option<Mode>,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub constraints: Option<ConstraintsConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub beta: f64,
    pub loading: f64,
    pub risk_distortion: DistortionSpec,
    pub premium_distortion: DistortionSpec,
    #[serde(default)]
    pub lambdas: [f64; 3],
    #[serde(default)]
    pub levels: [Option<f64>; 3],
    pub distribution: LossDistribution,
}

/// Wire form of a distortion function.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DistortionSpec {
    Identity,
    VarStep { level: f64 },
    Tvar { level: f64 },
    ProportionalHazard { exponent: f64 },
    CustomTable { knots: Vec<(f64, f64)> },
}

impl DistortionSpec {
    pub fn build(&self) -> Result<DistortionFunction> {
        match self {
            DistortionSpec::Identity => Ok(DistortionFunction::identity()),
            DistortionSpec::VarStep { level } => DistortionFunction::var_step(*level),
            DistortionSpec::Tvar { level } => DistortionFunction::tvar(*level),
            DistortionSpec::ProportionalHazard { exponent } => {
                DistortionFunction::proportional_hazard(*exponent)
            }
            DistortionSpec::CustomTable { knots } => DistortionFunction::from_table(knots.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsConfig {
    #[serde(default)]
    pub l1: Option<f64>,
    #[serde(default)]
    pub l2: Option<f64>,
    #[serde(default)]
    pub l3: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Layers in the searched family (1 or 2).
    #[serde(default = "default_verify_n")]
    pub n: usize,
    /// Slope grid resolution: slopes are `0, 1/k, ..., 1`.
    #[serde(default = "default_slope_steps")]
    pub slope_steps: usize,
    /// Retention grid size (log-spaced survival levels down to 1e-3).
    #[serde(default = "default_retention_points")]
    pub retention_points: usize,
}

fn default_verify_n() -> usize {
    2
}
fn default_slope_steps() -> usize {
    4
}
fn default_retention_points() -> usize {
    24
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n: default_verify_n(),
            slope_steps: default_slope_steps(),
            retention_points: default_retention_points(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CedeError::Config(e.to_string()))
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        let p = &self.problem;
        let spec = ProblemSpec {
            beta: p.beta,
            loading: p.loading,
            g_alpha: p.risk_distortion.build()?,
            g_gamma: p.premium_distortion.build()?,
            lambdas: p.lambdas,
            levels: p.levels,
            dist: p.distribution.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Everything a run produced; the JSON document is also what lands in
/// `--out-json`.
#[derive(Debug)]
pub struct RunArtifacts {
    pub json: String,
    pub csv: Option<String>,
}

#[derive(Serialize)]
struct SweepRow {
    beta: f64,
    case: String,
    retention: Option<f64>,
    objective: f64,
    degenerate: bool,
}

/// Executes one run. Writes the artifacts when paths are given and also
/// returns them for inspection.
pub fn run(
    mode: Mode,
    config: &RunConfig,
    seed: u64,
    out_json: Option<&Path>,
    out_csv: Option<&Path>,
) -> Result<RunArtifacts> {
    if let Some(m) = config.mode {
        if m != mode {
            return Err(CedeError::Config(format!(
                "config declares mode {:?} but the subcommand requested {:?}",
                m, mode
            )));
        }
    }
    let spec = config.build_problem()?;

    let artifacts = match mode {
        Mode::Solve => {
            let report = solve(&spec)?;
            let csv = contract_curve_csv(&spec, &report.f_star);
            RunArtifacts {
                json: document(mode, seed, json!({ "report": report })),
                csv: Some(csv),
            }
        }
        Mode::Constrained => {
            let constraints = config.constraints.ok_or_else(|| {
                CedeError::Config("constrained mode needs a `constraints` section".into())
            })?;
            let cs = ConstraintSet {
                l1: constraints.l1,
                l2: constraints.l2,
                l3: constraints.l3,
            };
            let sol: DualSolution = solve_constrained(&spec, &cs)?;
            let csv = contract_curve_csv(&spec, &sol.report.f_star);
            RunArtifacts {
                json: document(mode, seed, json!({ "dual": sol })),
                csv: Some(csv),
            }
        }
        Mode::Verify => {
            let vc = config.verify.unwrap_or_default();
            let report = solve(&spec)?;
            let oracle = run_oracle(&spec, &vc)?;
            let verdict: Verdict = cross_validate(&spec, &report, &oracle)?;
            let pass = verdict.pass;
            let artifacts = RunArtifacts {
                json: document(
                    mode,
                    seed,
                    json!({
                        "report": report,
                        "oracle": {
                            "best_objective": oracle.best_objective,
                            "best_contract": oracle.best_contract,
                            "evaluations": oracle.evaluations,
                        },
                        "verdict": verdict,
                    }),
                ),
                csv: Some(contract_curve_csv(&spec, &report.f_star)),
            };
            write_artifacts(&artifacts, out_json, out_csv)?;
            if !pass {
                return Err(CedeError::VerificationFailed(format!(
                    "solver objective exceeds the oracle minimum beyond tolerance {}",
                    verdict.tolerance
                )));
            }
            return Ok(artifacts);
        }
        Mode::Sweep => {
            let sweep = config
                .sweep
                .ok_or_else(|| CedeError::Config("sweep mode needs a `sweep` section".into()))?;
            validate_sweep(&sweep)?;
            let mut rows = Vec::new();
            let mut value = sweep.start;
            while value <= sweep.stop + 1e-12 {
                let mut s = spec.clone();
                match sweep.axis {
                    SweepAxis::Beta => s.beta = value,
                }
                let report = solve(&s)?;
                rows.push(SweepRow {
                    beta: value,
                    case: case_name(&report),
                    retention: top_retention(&report.f_star),
                    objective: report.objective,
                    degenerate: report.degenerate,
                });
                value += sweep.step;
            }
            let csv = sweep_csv(&rows);
            RunArtifacts {
                json: document(mode, seed, json!({ "rows": rows })),
                csv: Some(csv),
            }
        }
    };

    write_artifacts(&artifacts, out_json, out_csv)?;
    Ok(artifacts)
}

fn validate_sweep(sweep: &SweepConfig) -> Result<()> {
    if !(sweep.step > 0.0) || !sweep.step.is_finite() {
        return Err(CedeError::Config(format!(
            "sweep step must be positive, got {}",
            sweep.step
        )));
    }
    if sweep.stop < sweep.start {
        return Err(CedeError::Config(format!(
            "sweep range is empty: start {} exceeds stop {}",
            sweep.start, sweep.stop
        )));
    }
    Ok(())
}

fn run_oracle(spec: &ProblemSpec, vc: &VerifyConfig) -> Result<OracleResult> {
    if vc.slope_steps == 0 || vc.retention_points == 0 {
        return Err(CedeError::Config(
            "verify grids must have at least one step".into(),
        ));
    }
    let slopes: Vec<f64> = (0..=vc.slope_steps)
        .map(|i| i as f64 / vc.slope_steps as f64)
        .collect();
    let retentions = log_spaced_retentions(spec, vc.retention_points);
    brute_force_min(spec, vc.n, &slopes, &retentions)
}

/// `{0}` followed by quantiles at survival levels log-spaced from 0.9 down
/// to 1e-3, so the grid is dense where the objective actually moves.
fn log_spaced_retentions(spec: &ProblemSpec, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let (hi, lo) = (0.9f64, 1e-3f64);
    for i in 0..points {
        let frac = i as f64 / (points - 1).max(1) as f64;
        let level = hi * (lo / hi).powf(frac);
        grid.push(spec.dist.quantile(level));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn document(mode: Mode, seed: u64, body: serde_json::Value) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut doc = json!({
        "timestamp": timestamp,
        "mode": mode,
        "seed": seed,
    });
    if let (Some(obj), Some(extra)) = (doc.as_object_mut(), body.as_object()) {
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }
    let mut out = serde_json::to_string_pretty(&doc).expect("serializable document");
    out.push('\n');
    out
}

fn case_name(report: &SolutionReport) -> String {
    serde_json::to_value(report.case_label)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_else(|| format!("{:?}", report.case_label))
}

/// Retention reported in sweep rows: the highest kink of the contract,
/// absent for the null contract.
fn top_retention(h: &CededContract) -> Option<f64> {
    h.terms().last().map(|t| t.retention)
}

/// Ceded/retained curve on 512 evenly spaced points up to the 1e-4
/// survival quantile, plus the contract kinks.
fn contract_curve_csv(spec: &ProblemSpec, h: &CededContract) -> String {
    let hi = spec.dist.quantile(1e-4);
    let mut xs: Vec<f64> = (0..512).map(|i| hi * i as f64 / 511.0).collect();
    xs.extend(h.kinks());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = String::from("x,f_star,retained\n");
    for x in xs {
        let ceded = h.eval(x);
        out.push_str(&format!("{x},{ceded},{}\n", x - ceded));
    }
    out
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta,case,retention,objective\n");
    for r in rows {
        let retention = r
            .retention
            .map(|d| d.to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.beta, r.case, retention, r.objective));
    }
    out
}

fn write_artifacts(
    artifacts: &RunArtifacts,
    out_json: Option<&Path>,
    out_csv: Option<&Path>,
) -> Result<()> {
    if let Some(path) = out_json {
        fs::write(path, &artifacts.json)?;
    }
    if let (Some(path), Some(csv)) = (out_csv, artifacts.csv.as_ref()) {
        fs::write(path, csv)?;
    }
    Ok(())
}

/// Process exit status for an error, as documented in the README:
/// 2 validation/config, 3 solver, 4 verification.
pub fn exit_code(err: &CedeError) -> i32 {
    match err {
        CedeError::Config(_)
        | CedeError::InvalidParameter(_)
        | CedeError::NonMonotoneTable(_)
        | CedeError::Io(_) => 2,
        CedeError::DivergentIntegral(_)
        | CedeError::NumericalFailure(_)
        | CedeError::ProfileIndeterminate(_)
        | CedeError::UnsupportedShape(_)
        | CedeError::GridTooLarge(_)
        | CedeError::Infeasible(_) => 3,
        CedeError::VerificationFailed(_) => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE_CONFIG: &str = r#"{
        "problem": {
            "beta": 0.7,
            "loading": 0.2,
            "risk_distortion": {"kind": "var_step", "params": {"level": 0.05}},
            "premium_distortion": {"kind": "identity"},
            "lambdas": [0.3, 0.4, 0.3],
            "distribution": {"kind": "exponential", "params": {"rate": 0.001}}
        }
    }"#;

    #[test]
    fn parses_the_example_config() {
        let cfg = RunConfig::from_json(EXAMPLE_CONFIG).unwrap();
        let spec = cfg.build_problem().unwrap();
        assert_eq!(spec.beta, 0.7);
        assert_eq!(spec.lambdas, [0.3, 0.4, 0.3]);
    }

    #[test]
    fn missing_fields_name_the_culprit() {
        let bad = r#"{ "problem": { "loading": 0.2,
            "risk_distortion": {"kind": "identity"},
            "premium_distortion": {"kind": "identity"},
            "distribution": {"kind": "exponential", "params": {"rate": 0.001}} } }"#;
        let err = RunConfig::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("beta"), "diagnostic: {err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = EXAMPLE_CONFIG.replace("\"lambdas\"", "\"lambda\"");
        let err = RunConfig::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("lambda"), "diagnostic: {err}");
    }

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let with_mode = EXAMPLE_CONFIG.replacen('{', "{\"mode\": \"sweep\",", 1);
        let cfg = RunConfig::from_json(&with_mode).unwrap();
        let err = run(Mode::Solve, &cfg, 0, None, None).unwrap_err();
        assert!(matches!(err, CedeError::Config(_)));
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn solve_run_produces_report_and_curve() {
        let cfg = RunConfig::from_json(EXAMPLE_CONFIG).unwrap();
        let art = run(Mode::Solve, &cfg, 0, None, None).unwrap();
        assert!(art.json.contains("\"case_label\": \"B\""));
        let csv = art.csv.unwrap();
        assert!(csv.starts_with("x,f_star,retained\n"));
        // kink row present
        assert!(csv.lines().count() > 500);
    }

    #[test]
    fn exit_codes_partition_the_error_space() {
        assert_eq!(exit_code(&CedeError::Config("x".into())), 2);
        assert_eq!(exit_code(&CedeError::Infeasible("x".into())), 3);
        assert_eq!(exit_code(&CedeError::UnsupportedShape("x".into())), 3);
        assert_eq!(exit_code(&CedeError::VerificationFailed("x".into())), 4);
    }
}
