//! Constrained problems through a multiplier search.
//!
//! Each candidate multiplier vector turns the constrained problem into an
//! unconstrained solve of the unified objective; the search keeps the
//! feasible candidate with the smallest primal objective. Per coordinate
//! the dual landscape is one-dimensional and cheap to evaluate, so a
//! geometric grid plus golden-section refinement is sufficient. No duality
//! gap is certified beyond the weak-duality check in the tests.

use serde::Serialize;

use crate::contract::CededContract;
use crate::error::{CedeError, Result};
use crate::problem::{
    contract_premium, insurer_total_risk, reinsurer_total_risk, ProblemSpec,
};
use crate::solver::{solve, SolutionReport};

/// Multiplier grid searched per active constraint.
const LAMBDA_GRID: [f64; 8] = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];
/// Absolute multiplier tolerance of the golden-section refinement.
const LAMBDA_TOL: f64 = 1e-6;
/// Coordinate sweeps when several constraints are active.
const SWEEPS: usize = 3;
/// Penalty offset that keeps infeasible scores above every feasible one.
const INFEASIBLE_PENALTY: f64 = 1e12;

/// Monetary caps: insurer total, reinsurer total, premium budget.
/// Absent slots are unconstrained.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ConstraintSet {
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub l3: Option<f64>,
}

impl ConstraintSet {
    pub fn premium_budget(l3: f64) -> Self {
        ConstraintSet {
            l1: None,
            l2: None,
            l3: Some(l3),
        }
    }

    fn levels(&self) -> [Option<f64>; 3] {
        [self.l1, self.l2, self.l3]
    }

    fn validate(&self) -> Result<()> {
        let levels = self.levels();
        if levels.iter().all(Option::is_none) {
            return Err(CedeError::InvalidParameter(
                "constraint set is empty; use the unconstrained solver".into(),
            ));
        }
        for (i, l) in levels.iter().enumerate() {
            if let Some(v) = l {
                if !v.is_finite() {
                    return Err(CedeError::InvalidParameter(format!(
                        "constraint level L{} must be finite, got {v}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn feasibility_tol(level: f64) -> f64 {
    1e-6 * (1.0 + level.abs())
}

/// Result of the multiplier search.
#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub lambdas: [f64; 3],
    pub report: SolutionReport,
    /// `constraint value - level` per slot; `None` where unconstrained.
    pub slacks: [Option<f64>; 3],
    /// `max_i |lambda_i * slack_i|` over the active constraints.
    pub kkt_residual: f64,
    /// The constrained model's own objective at the returned contract.
    pub primal_objective: f64,
}

/// Constraint slacks of a given contract: insurer total, reinsurer total
/// and premium against their caps.
pub fn check_feasibility(
    spec: &ProblemSpec,
    h: &CededContract,
    constraints: &ConstraintSet,
) -> Result<[Option<f64>; 3]> {
    let values = [
        insurer_total_risk(spec, h)?.value,
        reinsurer_total_risk(spec, h)?.value,
        contract_premium(spec, h)?.value,
    ];
    Ok([
        constraints.l1.map(|l| values[0] - l),
        constraints.l2.map(|l| values[1] - l),
        constraints.l3.map(|l| values[2] - l),
    ])
}

struct Evaluation {
    lambdas: [f64; 3],
    report: SolutionReport,
    slacks: [Option<f64>; 3],
    primal: f64,
    feasible: bool,
}

impl Evaluation {
    fn score(&self) -> f64 {
        if self.feasible {
            self.primal
        } else {
            let violation: f64 = self
                .slacks
                .iter()
                .flatten()
                .map(|s| s.max(0.0))
                .sum();
            INFEASIBLE_PENALTY + violation
        }
    }

    /// Ordering for the returned solution: feasibility first, then primal,
    /// then lexicographically smallest multipliers.
    fn better_than(&self, other: &Evaluation) -> bool {
        if self.feasible != other.feasible {
            return self.feasible;
        }
        if self.primal != other.primal {
            return self.primal < other.primal;
        }
        self.lambdas < other.lambdas
    }
}

/// One-dimensional search along `coord`: the geometric grid, a bisection
/// onto the feasibility boundary (where complementary slackness puts a
/// binding optimum), and golden-section passes over the two cells around
/// the best grid point for interior minima. Returns the coordinate value
/// with the best penalized score; every evaluation is offered to `best`.
fn search_coordinate(
    base: &ProblemSpec,
    constraints: &ConstraintSet,
    current: [f64; 3],
    coord: usize,
    best: &mut Option<Evaluation>,
) -> Result<f64> {
    let mut incumbent: (f64, f64) = (f64::INFINITY, current[coord]);
    let mut feasibility = Vec::with_capacity(LAMBDA_GRID.len());
    let mut scores = Vec::with_capacity(LAMBDA_GRID.len());

    let mut probe = |v: f64,
                     best: &mut Option<Evaluation>,
                     incumbent: &mut (f64, f64)|
     -> Result<(f64, bool)> {
        let mut lambdas = current;
        lambdas[coord] = v;
        let ev = evaluate(base, constraints, lambdas)?;
        let score = ev.score();
        let feasible = ev.feasible;
        if best.as_ref().map_or(true, |b| ev.better_than(b)) {
            *best = Some(ev);
        }
        if score < incumbent.0 {
            *incumbent = (score, v);
        }
        Ok((score, feasible))
    };

    for &v in &LAMBDA_GRID {
        let (score, feasible) = probe(v, best, &mut incumbent)?;
        scores.push(score);
        feasibility.push(feasible);
    }

    // Bisect onto the lowest infeasible-to-feasible transition.
    if let Some(j) = (1..LAMBDA_GRID.len()).find(|&j| !feasibility[j - 1] && feasibility[j]) {
        let (mut out, mut in_) = (LAMBDA_GRID[j - 1], LAMBDA_GRID[j]);
        while (in_ - out).abs() > LAMBDA_TOL {
            let mid = 0.5 * (out + in_);
            let (_, feasible) = probe(mid, best, &mut incumbent)?;
            if feasible {
                in_ = mid;
            } else {
                out = mid;
            }
        }
    }

    // Golden-section over both cells adjacent to the best grid point.
    let mut j_star = 0;
    for (j, s) in scores.iter().enumerate() {
        if *s < scores[j_star] {
            j_star = j;
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let cells = [
        (LAMBDA_GRID[j_star.saturating_sub(1)], LAMBDA_GRID[j_star]),
        (
            LAMBDA_GRID[j_star],
            LAMBDA_GRID[(j_star + 1).min(LAMBDA_GRID.len() - 1)],
        ),
    ];
    for (mut a, mut b) in cells {
        if !(b > a) {
            continue;
        }
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = probe(c, best, &mut incumbent)?.0;
        let mut fd = probe(d, best, &mut incumbent)?.0;
        for _ in 0..64 {
            if (b - a).abs() <= LAMBDA_TOL {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = probe(c, best, &mut incumbent)?.0;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = probe(d, best, &mut incumbent)?.0;
            }
        }
    }

    Ok(incumbent.1)
}

fn evaluate(
    base: &ProblemSpec,
    constraints: &ConstraintSet,
    lambdas: [f64; 3],
) -> Result<Evaluation> {
    let mut spec = base.clone();
    spec.lambdas = lambdas;
    spec.levels = constraints.levels();
    let report = solve(&spec)?;
    let slacks = check_feasibility(&spec, &report.f_star, constraints)?;
    let ins = insurer_total_risk(&spec, &report.f_star)?.value;
    let rei = reinsurer_total_risk(&spec, &report.f_star)?.value;
    let primal = spec.beta * ins + (1.0 - spec.beta) * rei;
    let feasible = slacks
        .iter()
        .zip(constraints.levels())
        .all(|(s, l)| match (s, l) {
            (Some(slack), Some(level)) => *slack <= feasibility_tol(level),
            _ => true,
        });
    Ok(Evaluation {
        lambdas,
        report,
        slacks,
        primal,
        feasible,
    })
}

/// Solves the constrained model by coordinate search over the active
/// multipliers: the geometric grid first, then golden-section refinement
/// around the best grid bracket. Returns the feasible evaluation with the
/// smallest primal objective; `Infeasible` if no searched multiplier
/// satisfies every cap.
pub fn solve_constrained(
    base: &ProblemSpec,
    constraints: &ConstraintSet,
) -> Result<DualSolution> {
    base.validate()?;
    constraints.validate()?;
    let active: Vec<usize> = constraints
        .levels()
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|_| i))
        .collect();

    let mut best: Option<Evaluation> = None;
    let mut current = [0.0f64; 3];

    for _ in 0..SWEEPS {
        for &coord in &active {
            current[coord] = search_coordinate(base, constraints, current, coord, &mut best)?;
        }
    }

    let best = best.filter(|ev| ev.feasible).ok_or_else(|| {
        CedeError::Infeasible(format!(
            "no multiplier vector in [0, {}]^k satisfies every constraint",
            LAMBDA_GRID.last().unwrap()
        ))
    })?;

    let kkt_residual = best
        .lambdas
        .iter()
        .zip(best.slacks.iter())
        .filter_map(|(l, s)| s.map(|slack| (l * slack).abs()))
        .fold(0.0, f64::max);

    Ok(DualSolution {
        lambdas: best.lambdas,
        slacks: best.slacks,
        kkt_residual,
        primal_objective: best.primal,
        report: best.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::DistortionFunction;
    use crate::distribution::LossDistribution;
    use crate::problem::objective_direct;

    fn base_spec() -> ProblemSpec {
        ProblemSpec::unconstrained(
            0.7,
            0.2,
            DistortionFunction::var_step(0.05).unwrap(),
            DistortionFunction::identity(),
            LossDistribution::exponential(0.001).unwrap(),
        )
    }

    #[test]
    fn slack_constraint_forces_zero_multiplier() {
        // cap far above the unconstrained optimum's premium: nothing binds
        let base = base_spec();
        let unconstrained = solve(&base).unwrap();
        let premium = contract_premium(&base, &unconstrained.f_star).unwrap().value;

        let sol =
            solve_constrained(&base, &ConstraintSet::premium_budget(premium * 2.0)).unwrap();
        assert_eq!(sol.lambdas, [0.0, 0.0, 0.0]);
        let a = sol.report.f_star.terms();
        let b = unconstrained.f_star.terms();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x.retention - y.retention).abs() < 1e-9);
        }
    }

    #[test]
    fn binding_premium_budget_is_met_with_slackness() {
        let base = base_spec();
        let unconstrained = solve(&base).unwrap();
        let premium = contract_premium(&base, &unconstrained.f_star).unwrap().value;
        let l3 = 0.5 * premium;

        let sol = solve_constrained(&base, &ConstraintSet::premium_budget(l3)).unwrap();
        assert!(sol.lambdas[2] > 0.0, "budget must bind");
        let spec_at = {
            let mut s = base.clone();
            s.lambdas = sol.lambdas;
            s.levels = [None, None, Some(l3)];
            s
        };
        let achieved = contract_premium(&spec_at, &sol.report.f_star).unwrap().value;
        assert!(
            (achieved - l3).abs() <= 1e-3 * l3,
            "premium {achieved} vs budget {l3}"
        );
        assert!(
            sol.kkt_residual <= 1e-3 * (1.0 + sol.primal_objective.abs()),
            "kkt residual {}",
            sol.kkt_residual
        );
    }

    #[test]
    fn feasibility_slacks_match_hand_values() {
        let base = base_spec();
        let zero = CededContract::zero();
        let s = check_feasibility(
            &base,
            &zero,
            &ConstraintSet {
                l1: None,
                l2: Some(0.0),
                l3: None,
            },
        )
        .unwrap();
        assert_eq!(s[0], None);
        assert!(s[1].unwrap().abs() < 1e-12);

        let full = CededContract::quota_share(1.0).unwrap();
        let s = check_feasibility(&base, &full, &ConstraintSet::premium_budget(1200.0)).unwrap();
        assert!(s[2].unwrap().abs() < 1e-3);

        let layer = CededContract::stop_loss(2995.73).unwrap();
        let s = check_feasibility(&base, &layer, &ConstraintSet::premium_budget(100.0)).unwrap();
        assert!((s[2].unwrap() + 40.0).abs() < 0.1, "slack {:?}", s[2]);
    }

    #[test]
    fn insurer_cap_at_the_no_cession_level_is_feasible() {
        let base = base_spec();
        let cap = insurer_total_risk(&base, &CededContract::zero()).unwrap().value;
        let sol = solve_constrained(
            &base,
            &ConstraintSet {
                l1: Some(cap),
                l2: None,
                l3: None,
            },
        )
        .unwrap();
        assert!(sol.slacks[0].unwrap() <= feasibility_tol(cap));
    }

    #[test]
    fn impossible_caps_are_reported_infeasible() {
        let base = base_spec();
        let sol = solve_constrained(
            &base,
            &ConstraintSet {
                l1: Some(100.0),
                l2: None,
                l3: Some(1.0),
            },
        );
        assert!(matches!(sol, Err(CedeError::Infeasible(_))));
    }

    #[test]
    fn weak_duality_against_a_feasible_grid() {
        // dual value at any multiplier bounds every feasible contract's
        // penalized objective from below
        let base = base_spec();
        let l3 = 600.0;
        let constraints = ConstraintSet::premium_budget(l3);
        let feasible_contracts = vec![
            CededContract::zero(),
            CededContract::stop_loss(2000.0).unwrap(),
            CededContract::change_loss(0.3, 1000.0).unwrap(),
        ];
        for &lambda in &[0.0, 0.1, 1.0] {
            let mut spec = base.clone();
            spec.lambdas = [0.0, 0.0, lambda];
            spec.levels = [None, None, Some(l3)];
            let dual_value = solve(&spec).unwrap().objective;
            for h in &feasible_contracts {
                let slack = check_feasibility(&spec, h, &constraints).unwrap()[2].unwrap();
                if slack > 0.0 {
                    continue;
                }
                let lagrangian = objective_direct(&spec, h).unwrap();
                assert!(
                    dual_value <= lagrangian + 1e-6 * (1.0 + lagrangian.abs()),
                    "dual {dual_value} exceeds feasible value {lagrangian} at lambda {lambda}"
                );
            }
        }
    }

    #[test]
    fn tightening_the_budget_never_improves_the_primal() {
        let base = base_spec();
        let unconstrained = solve(&base).unwrap();
        let premium = contract_premium(&base, &unconstrained.f_star).unwrap().value;
        let mut last = f64::NEG_INFINITY;
        for frac in [0.9, 0.7, 0.5, 0.3, 0.1] {
            let sol =
                solve_constrained(&base, &ConstraintSet::premium_budget(frac * premium)).unwrap();
            assert!(
                sol.primal_objective + 1e-6 * (1.0 + sol.primal_objective.abs()) >= last,
                "primal decreased when tightening: {} after {last}",
                sol.primal_objective
            );
            last = sol.primal_objective;
        }
    }
}
