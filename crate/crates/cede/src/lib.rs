//! Optimal reinsurance design under distortion risk measures and
//! distortion premium principles.
//!
//! The library minimizes a convex combination of the insurer's and the
//! reinsurer's total positions over the class of increasing convex
//! 1-Lipschitz ceded-loss functions (sums of stop-loss layers). Risk is
//! measured by a distortion risk measure; the premium is a loaded
//! distortion risk of the ceded loss. Constrained variants (caps on either
//! party's total position or on the premium budget) are handled through a
//! multiplier search over the same unified objective.
//!
//! The geometry of the distortion ratio against the multiplier threshold
//! decides the contract form: null, quota share, stop loss, change loss, or
//! a quota-plus-excess combination. Independent brute-force and Monte Carlo
//! evaluators validate solver output on desk-scale instances.

pub mod cli;
pub mod contract;
pub mod distortion;
pub mod distribution;
pub mod dual;
pub mod error;
pub mod oracle;
pub mod problem;
mod quad;
pub mod solver;

pub use contract::{CededContract, ContractTerm};
pub use distortion::{
    distortion_premium, distortion_risk, distortion_risk_quantile_form, layer_risk,
    ConcaveHint, DistortionFunction, RiskValue,
};
pub use distribution::LossDistribution;
pub use dual::{check_feasibility, solve_constrained, ConstraintSet, DualSolution};
pub use error::{CedeError, Result};
pub use oracle::{brute_force_min, cross_validate, monte_carlo_risk, OracleResult, Verdict};
pub use problem::{
    ceded_risk, contract_premium, insurer_total_risk, objective_direct, objective_quantile_form,
    reinsurer_total_risk, retained_risk_quantile_form, ProblemSpec,
};
pub use solver::{
    cession_gain, cession_gain_density, k_profile, k_ratio, lagrangian_constants, slope_lp, solve,
    CaseLabel, KProfile, KRatio, LagrangianConstants, SolutionReport,
};
