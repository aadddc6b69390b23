//! Independent verification of solver output: exhaustive search over a
//! discretized contract family and a Monte Carlo estimator of distortion
//! risks built from order statistics.

use serde::Serialize;

use crate::contract::{CededContract, ContractTerm};
use crate::distortion::{DistortionFunction, RiskValue};
use crate::distribution::LossDistribution;
use crate::error::{CedeError, Result};
use crate::problem::{objective_direct, ProblemSpec};
use crate::quad;
use crate::solver::{lagrangian_constants, SolutionReport};

const MAX_EVALUATIONS: u64 = 10_000_000;

/// The searched family: contracts with up to `n` layers, slopes from
/// `slope_grid` and retentions from `retention_grid`.
#[derive(Debug, Clone, Serialize)]
pub struct GridSpec {
    pub n: usize,
    pub slope_grid: Vec<f64>,
    pub retention_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub best_contract: CededContract,
    pub best_objective: f64,
    pub grid: GridSpec,
    pub evaluations: u64,
}

/// Layer risks at every grid retention, for both distortions.
///
/// Built with one sweep of segment integrals from the deepest retention
/// down, so a dense retention grid costs little more than one full
/// quadrature per distortion.
struct LayerCache {
    alpha: Vec<f64>,
    gamma: Vec<f64>,
}

fn layer_values(
    g: &DistortionFunction,
    dist: &LossDistribution,
    retentions: &[f64],
) -> Result<Vec<f64>> {
    let k = retentions.len();
    let mut vals = vec![0.0; k];
    let deepest = crate::distortion::layer_risk(g, dist, retentions[k - 1])?;
    vals[k - 1] = deepest.value;
    let f = |x: f64| g.eval(dist.survival(x));
    let breaks: Vec<f64> = g
        .breakpoints()
        .into_iter()
        .map(|t| dist.quantile(t))
        .collect();
    for i in (0..k - 1).rev() {
        let seg = quad::integrate_with_breakpoints(
            &f,
            retentions[i],
            retentions[i + 1],
            &breaks,
            1e-10,
            1e-9,
        );
        vals[i] = vals[i + 1] + seg.value;
    }
    Ok(vals)
}

impl LayerCache {
    fn build(spec: &ProblemSpec, retentions: &[f64]) -> Result<Self> {
        Ok(LayerCache {
            alpha: layer_values(&spec.g_alpha, &spec.dist, retentions)?,
            gamma: layer_values(&spec.g_gamma, &spec.dist, retentions)?,
        })
    }

    /// Objective gain per unit slope on the layer above grid point `i`.
    fn gain(&self, c: &crate::solver::LagrangianConstants, i: usize) -> f64 {
        c.m2 * self.alpha[i] - c.m3 * self.gamma[i]
    }
}

/// Exhaustively minimizes the objective over the grid family and returns
/// the best contract. Deterministic: ties resolve to the lexicographically
/// first (slope index, retention index) combination.
pub fn brute_force_min(
    spec: &ProblemSpec,
    n: usize,
    slope_grid: &[f64],
    retention_grid: &[f64],
) -> Result<OracleResult> {
    spec.validate()?;
    if !(n == 1 || n == 2) {
        return Err(CedeError::InvalidParameter(format!(
            "oracle supports 1 or 2 layers, got {n}"
        )));
    }
    if slope_grid.is_empty() || retention_grid.is_empty() {
        return Err(CedeError::InvalidParameter(
            "oracle grids must be nonempty".into(),
        ));
    }
    if slope_grid
        .iter()
        .any(|c| !c.is_finite() || *c < 0.0 || *c > 1.0)
    {
        return Err(CedeError::InvalidParameter(
            "slope grid values must lie in [0,1]".into(),
        ));
    }
    if retention_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(CedeError::InvalidParameter(
            "retention grid must be sorted ascending".into(),
        ));
    }

    let nc = slope_grid.len() as u64;
    let nd = retention_grid.len() as u64;
    let evaluations = match n {
        1 => nc * nd,
        _ => nc * nc * nd * (nd + 1) / 2,
    };
    if evaluations > MAX_EVALUATIONS {
        return Err(CedeError::GridTooLarge(evaluations));
    }

    let constants = lagrangian_constants(spec);
    let cache = LayerCache::build(spec, retention_grid)?;
    // full-loss risk = layer at the first grid point plus the ground piece
    let ground = quad::integrate_with_breakpoints(
        &|x: f64| spec.g_alpha.eval(spec.dist.survival(x)),
        0.0,
        retention_grid[0],
        &spec
            .g_alpha
            .breakpoints()
            .into_iter()
            .map(|t| spec.dist.quantile(t))
            .collect::<Vec<_>>(),
        1e-10,
        1e-9,
    );
    let base = constants.m1 * (cache.alpha[0] + ground.value) - constants.d;
    let gains: Vec<f64> = (0..retention_grid.len())
        .map(|i| cache.gain(&constants, i))
        .collect();

    let mut best_val = f64::INFINITY;
    let mut best_terms: Vec<ContractTerm> = vec![];
    match n {
        1 => {
            for &c in slope_grid {
                for (di, &d) in retention_grid.iter().enumerate() {
                    let obj = base - c * gains[di];
                    if obj < best_val {
                        best_val = obj;
                        best_terms = vec![ContractTerm { slope: c, retention: d }];
                    }
                }
            }
        }
        _ => {
            for &c1 in slope_grid {
                for &c2 in slope_grid {
                    if c1 + c2 > 1.0 + 1e-12 {
                        continue;
                    }
                    for d1 in 0..retention_grid.len() {
                        for d2 in d1..retention_grid.len() {
                            let obj = base - c1 * gains[d1] - c2 * gains[d2];
                            if obj < best_val {
                                best_val = obj;
                                best_terms = vec![
                                    ContractTerm {
                                        slope: c1,
                                        retention: retention_grid[d1],
                                    },
                                    ContractTerm {
                                        slope: c2,
                                        retention: retention_grid[d2],
                                    },
                                ];
                            }
                        }
                    }
                }
            }
        }
    }

    let best_contract = CededContract::new(best_terms)?;
    // report the value through the reference evaluator so the reported
    // objective and contract are exactly consistent
    let best_objective = objective_direct(spec, &best_contract)?;
    Ok(OracleResult {
        best_contract,
        best_objective,
        grid: GridSpec {
            n,
            slope_grid: slope_grid.to_vec(),
            retention_grid: retention_grid.to_vec(),
        },
        evaluations,
    })
}

/// Monte Carlo estimate of the distortion risk of `h(X)`: order statistics
/// of a seeded inverse-transform sample weighted by the increments of `g`
/// over the empirical tail-probability grid. The error estimate is a
/// ten-block delete-one jackknife standard error.
pub fn monte_carlo_risk(
    g: &DistortionFunction,
    dist: &LossDistribution,
    h: &CededContract,
    count: usize,
    seed: u64,
) -> Result<RiskValue> {
    if count < 1000 {
        return Err(CedeError::InvalidParameter(format!(
            "monte carlo needs at least 1000 samples, got {count}"
        )));
    }
    let losses = dist.sample_losses(count, seed)?;
    let ceded: Vec<f64> = losses.iter().map(|&x| h.eval(x)).collect();

    let estimate = l_statistic(g, &mut ceded.clone());

    const BLOCKS: usize = 10;
    let block = count / BLOCKS;
    let mut leave_outs = Vec::with_capacity(BLOCKS);
    for b in 0..BLOCKS {
        let lo = b * block;
        let hi = if b == BLOCKS - 1 { count } else { lo + block };
        let mut kept: Vec<f64> = ceded[..lo]
            .iter()
            .chain(ceded[hi..].iter())
            .copied()
            .collect();
        leave_outs.push(l_statistic(g, &mut kept));
    }
    let mean = leave_outs.iter().sum::<f64>() / BLOCKS as f64;
    let ss: f64 = leave_outs.iter().map(|t| (t - mean).powi(2)).sum();
    let se = ((BLOCKS - 1) as f64 / BLOCKS as f64 * ss).sqrt();

    Ok(RiskValue {
        value: estimate,
        abs_error_estimate: se,
    })
}

fn l_statistic(g: &DistortionFunction, values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for (i, &y) in values.iter().enumerate() {
        if y == 0.0 {
            continue;
        }
        let k = i + 1;
        let w = g.eval((n - k + 1) as f64 / nf) - g.eval((n - k) as f64 / nf);
        acc += y * w;
    }
    acc
}

/// Outcome of comparing a solver report against the exhaustive oracle.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub pass: bool,
    /// `oracle objective - report objective`; negative means the solver
    /// claims to beat the grid (legitimate up to grid resolution).
    pub margin: f64,
    pub tolerance: f64,
    pub report_objective: f64,
    pub oracle_objective: f64,
    pub grid: GridSpec,
}

/// Passes when the solver's objective does not exceed the grid minimum by
/// more than the grid-resolution tolerance.
///
/// The tolerance bounds the objective variation within one retention cell
/// by the layer-risk increments across that cell, assuming the slope grid
/// contains the corner slopes 0 and 1 (every dispatch optimum uses them).
pub fn cross_validate(
    spec: &ProblemSpec,
    report: &SolutionReport,
    oracle: &OracleResult,
) -> Result<Verdict> {
    let constants = lagrangian_constants(spec);
    let grid = &oracle.grid.retention_grid;
    let cache = LayerCache::build(spec, grid)?;
    let full_a = crate::distortion::layer_risk(&spec.g_alpha, &spec.dist, 0.0)?.value;
    let full_g = crate::distortion::layer_risk(&spec.g_gamma, &spec.dist, 0.0)?.value;

    let (am2, am3) = (constants.m2.abs(), constants.m3.abs());
    let mut cell = am2 * (full_a - cache.alpha[0]).abs() + am3 * (full_g - cache.gamma[0]).abs();
    for i in 0..grid.len() - 1 {
        let step = am2 * (cache.alpha[i] - cache.alpha[i + 1]).abs()
            + am3 * (cache.gamma[i] - cache.gamma[i + 1]).abs();
        cell = cell.max(step);
    }
    let last = grid.len() - 1;
    cell = cell.max(am2 * cache.alpha[last] + am3 * cache.gamma[last]);

    let tolerance = oracle.grid.n as f64 * cell + 1e-6 * (1.0 + oracle.best_objective.abs());
    let margin = oracle.best_objective - report.objective;
    Ok(Verdict {
        pass: report.objective <= oracle.best_objective + tolerance,
        margin,
        tolerance,
        report_objective: report.objective,
        oracle_objective: oracle.best_objective,
        grid: oracle.grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::distortion_risk;
    use crate::solver::solve;

    fn exp_dist() -> LossDistribution {
        LossDistribution::exponential(0.001).unwrap()
    }

    fn example_spec(beta: f64) -> ProblemSpec {
        ProblemSpec {
            beta,
            loading: 0.2,
            g_alpha: DistortionFunction::var_step(0.05).unwrap(),
            g_gamma: DistortionFunction::identity(),
            lambdas: [0.3, 0.4, 0.3],
            levels: [None; 3],
            dist: exp_dist(),
        }
    }

    fn coarse_retentions() -> Vec<f64> {
        (0..=160).map(|i| i as f64 * 50.0).collect()
    }

    #[test]
    fn grid_minimizer_recovers_the_stop_loss() {
        let spec = example_spec(0.7);
        let slopes = [0.0, 0.25, 0.5, 0.75, 1.0];
        let res = brute_force_min(&spec, 1, &slopes, &coarse_retentions()).unwrap();
        let terms = res.best_contract.terms();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].slope, 1.0);
        assert!(
            (terms[0].retention - 875.0).abs() <= 50.0,
            "retention {}",
            terms[0].retention
        );
    }

    #[test]
    fn flat_objective_keeps_the_zero_row() {
        // m2 = 0 at beta = 0.55: the zero contract is minimal
        let spec = example_spec(0.55);
        let res = brute_force_min(&spec, 1, &[0.0, 0.5, 1.0], &coarse_retentions()).unwrap();
        assert!(res.best_contract.is_zero() || res.best_contract.total_slope() == 0.0);

        // beta = 1/2 with no multipliers: every contract scores the same
        let mut flat = example_spec(0.5);
        flat.lambdas = [0.0; 3];
        let grid = [0.0, 1000.0, 3000.0];
        let a = objective_direct(&flat, &CededContract::zero()).unwrap();
        let res = brute_force_min(&flat, 1, &[0.0, 0.5, 1.0], &grid).unwrap();
        assert!((res.best_objective - a).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn oversized_grids_are_refused() {
        let spec = example_spec(0.7);
        let slopes: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let rets: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        assert!(matches!(
            brute_force_min(&spec, 2, &slopes, &rets),
            Err(CedeError::GridTooLarge(_))
        ));
    }

    #[test]
    fn refining_the_grid_never_worsens_the_minimum() {
        let spec = example_spec(0.7);
        let coarse: Vec<f64> = (0..=40).map(|i| i as f64 * 200.0).collect();
        let fine: Vec<f64> = (0..=80).map(|i| i as f64 * 100.0).collect();
        let slopes = [0.0, 0.5, 1.0];
        let a = brute_force_min(&spec, 1, &slopes, &coarse).unwrap();
        let b = brute_force_min(&spec, 1, &slopes, &fine).unwrap();
        assert!(b.best_objective <= a.best_objective + 1e-9);
    }

    #[test]
    fn monte_carlo_matches_quadrature_on_the_full_loss() {
        let d = exp_dist();
        let full = CededContract::quota_share(1.0).unwrap();
        for g in [
            DistortionFunction::var_step(0.05).unwrap(),
            DistortionFunction::identity(),
        ] {
            let mc = monte_carlo_risk(&g, &d, &full, 1_000_000, 7).unwrap();
            let exact = distortion_risk(&g, &d).unwrap();
            assert!(
                (mc.value - exact.value).abs() <= 3.0 * mc.abs_error_estimate,
                "{g:?}: {} vs {} (se {})",
                mc.value,
                exact.value,
                mc.abs_error_estimate
            );
        }
    }

    #[test]
    fn monte_carlo_concords_on_random_triples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3030);
        for i in 0..30 {
            let dist = if rng.gen_bool(0.5) {
                LossDistribution::exponential(0.001).unwrap()
            } else {
                LossDistribution::pareto(rng.gen_range(2.1..3.0), 1000.0).unwrap()
            };
            let g = match rng.gen_range(0..4) {
                0 => DistortionFunction::identity(),
                1 => DistortionFunction::var_step(rng.gen_range(0.02..0.2)).unwrap(),
                2 => DistortionFunction::tvar(rng.gen_range(0.02..0.2)).unwrap(),
                _ => DistortionFunction::proportional_hazard(rng.gen_range(0.6..0.95)).unwrap(),
            };
            let h = match rng.gen_range(0..3) {
                0 => CededContract::quota_share(rng.gen_range(0.2..1.0)).unwrap(),
                1 => CededContract::stop_loss(dist.quantile(rng.gen_range(0.05..0.8))).unwrap(),
                _ => CededContract::change_loss(
                    rng.gen_range(0.2..1.0),
                    dist.quantile(rng.gen_range(0.05..0.8)),
                )
                .unwrap(),
            };
            let mc = monte_carlo_risk(&g, &dist, &h, 100_000, 1000 + i).unwrap();
            let exact = crate::problem::ceded_risk(&g, &dist, &h).unwrap();
            assert!(
                (mc.value - exact.value).abs() <= 4.0 * mc.abs_error_estimate.max(1e-9),
                "triple {i} ({g:?}, {dist:?}): {} vs {} (se {})",
                mc.value,
                exact.value,
                mc.abs_error_estimate
            );
        }
    }

    #[test]
    fn verdict_equality_when_both_pick_the_null_contract() {
        // the zero-multiplier band: solver and grid both settle on f = 0
        let spec = example_spec(0.55);
        let report = solve(&spec).unwrap();
        let oracle =
            brute_force_min(&spec, 1, &[0.0, 0.5, 1.0], &coarse_retentions()).unwrap();
        let v = cross_validate(&spec, &report, &oracle).unwrap();
        assert!(v.pass);
        assert!(
            v.margin.abs() <= 1e-6 * (1.0 + v.oracle_objective.abs()),
            "margin {}",
            v.margin
        );
    }

    #[test]
    fn null_contract_estimates_exactly_zero() {
        let d = exp_dist();
        let g = DistortionFunction::tvar(0.05).unwrap();
        let mc = monte_carlo_risk(&g, &d, &CededContract::zero(), 1000, 3).unwrap();
        assert_eq!(mc.value, 0.0);
        assert_eq!(mc.abs_error_estimate, 0.0);
    }

    #[test]
    fn tiny_sample_counts_are_rejected() {
        let d = exp_dist();
        let g = DistortionFunction::identity();
        assert!(monte_carlo_risk(&g, &d, &CededContract::zero(), 999, 1).is_err());
    }

    #[test]
    fn verdict_logic_on_corrupted_reports() {
        let spec = example_spec(0.7);
        let report = solve(&spec).unwrap();
        let oracle = brute_force_min(
            &spec,
            1,
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            &(0..=1600).map(|i| i as f64 * 5.0).collect::<Vec<_>>(),
        )
        .unwrap();

        let honest = cross_validate(&spec, &report, &oracle).unwrap();
        assert!(honest.pass, "margin {} tol {}", honest.margin, honest.tolerance);
        assert!(honest.margin.abs() <= 1.0, "margin {}", honest.margin);

        let mut better = report.clone();
        better.objective -= 10.0;
        assert!(cross_validate(&spec, &better, &oracle).unwrap().pass);

        let mut worse = report.clone();
        worse.objective += 10.0;
        let v = cross_validate(&spec, &worse, &oracle).unwrap();
        assert!(!v.pass, "tolerance {} should reject +10", v.tolerance);
    }
}
