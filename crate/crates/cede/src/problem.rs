//! Problem specification and the unified objective.
//!
//! The objective aggregates the weighted insurer and reinsurer totals plus
//! multiplier terms into `m1 r_a(X) - m2 r_a(h(X)) + m3 r_g(h(X)) - D`,
//! where `r_a`/`r_g` are the risk-measure and premium distortion risks.
//! Two independent evaluation routes are provided: the direct layered form
//! on the loss axis and a quantile-domain sum-of-integrals form.

use crate::contract::CededContract;
use crate::distortion::{
    distortion_premium, distortion_risk, layer_risk, stieltjes_quantile_integral,
    DistortionFunction, RiskValue,
};
use crate::distribution::LossDistribution;
use crate::error::{CedeError, Result};
use crate::solver::lagrangian_constants;

/// Full description of one optimization instance.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    /// Weight of the insurer's total loss in the convex combination.
    pub beta: f64,
    /// Safety loading of the premium principle.
    pub loading: f64,
    /// Distortion for the risk measure (confidence level alpha).
    pub g_alpha: DistortionFunction,
    /// Distortion for the premium principle (confidence level gamma).
    pub g_gamma: DistortionFunction,
    /// Lagrange multipliers for the insurer-risk, reinsurer-risk and
    /// premium-budget constraints.
    pub lambdas: [f64; 3],
    /// Monetary constraint levels; absent levels contribute zero to the
    /// objective offset.
    pub levels: [Option<f64>; 3],
    pub dist: LossDistribution,
}

impl ProblemSpec {
    /// Unconstrained instance: all multipliers zero.
    pub fn unconstrained(
        beta: f64,
        loading: f64,
        g_alpha: DistortionFunction,
        g_gamma: DistortionFunction,
        dist: LossDistribution,
    ) -> Self {
        ProblemSpec {
            beta,
            loading,
            g_alpha,
            g_gamma,
            lambdas: [0.0; 3],
            levels: [None; 3],
            dist,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) || !self.beta.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "beta must lie in [0,1], got {}",
                self.beta
            )));
        }
        if !(self.loading >= 0.0) || !self.loading.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "loading must be nonnegative, got {}",
                self.loading
            )));
        }
        for (i, l) in self.lambdas.iter().enumerate() {
            if !(*l >= 0.0) || !l.is_finite() {
                return Err(CedeError::InvalidParameter(format!(
                    "lambda_{} must be nonnegative, got {l}",
                    i + 1
                )));
            }
        }
        for (i, l) in self.levels.iter().enumerate() {
            if let Some(v) = l {
                if !v.is_finite() {
                    return Err(CedeError::InvalidParameter(format!(
                        "level L{} must be finite, got {v}",
                        i + 1
                    )));
                }
            }
        }
        let s0 = self.dist.survival(0.0);
        for (name, g) in [("alpha", &self.g_alpha), ("gamma", &self.g_gamma)] {
            if let Some(level) = g.var_level().or_else(|| g.tvar_level()) {
                if !(level < s0) {
                    return Err(CedeError::InvalidParameter(format!(
                        "confidence level {name}={level} must be below S(0)={s0}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Constraint offset `D = sum lambda_i * L_i`; absent levels count as 0.
    pub fn constraint_offset(&self) -> f64 {
        self.lambdas
            .iter()
            .zip(self.levels.iter())
            .map(|(l, lev)| l * lev.unwrap_or(0.0))
            .sum()
    }
}

/// Distortion risk of the ceded loss `h(X)`.
///
/// Layers are comonotone functions of the same loss, so the risk is the
/// slope-weighted sum of the layer integrals.
pub fn ceded_risk(
    g: &DistortionFunction,
    dist: &LossDistribution,
    h: &CededContract,
) -> Result<RiskValue> {
    let mut acc = RiskValue::exact(0.0);
    for t in h.terms() {
        acc = acc.add(layer_risk(g, dist, t.retention)?.scale(t.slope));
    }
    Ok(acc)
}

/// Reinsurance premium `(1 + loading) * r_gamma(h(X))`.
pub fn contract_premium(spec: &ProblemSpec, h: &CededContract) -> Result<RiskValue> {
    let risk = ceded_risk(&spec.g_gamma, &spec.dist, h)?;
    distortion_premium(risk, spec.loading)
}

/// Total position of the insurer: retained risk plus premium paid.
///
/// The retained risk uses the comonotone split `r(X - h(X)) = r(X) - r(h(X))`
/// and the premium enters through translation invariance.
pub fn insurer_total_risk(spec: &ProblemSpec, h: &CededContract) -> Result<RiskValue> {
    let full = distortion_risk(&spec.g_alpha, &spec.dist)?;
    let ceded = ceded_risk(&spec.g_alpha, &spec.dist, h)?;
    let premium = contract_premium(spec, h)?;
    Ok(full.sub(ceded).add(premium))
}

/// Total position of the reinsurer: ceded risk less premium received.
/// May be negative when the premium dominates.
pub fn reinsurer_total_risk(spec: &ProblemSpec, h: &CededContract) -> Result<RiskValue> {
    let ceded = ceded_risk(&spec.g_alpha, &spec.dist, h)?;
    let premium = contract_premium(spec, h)?;
    Ok(ceded.sub(premium))
}

/// Distortion risk of the retained loss `X - h(X)`, evaluated through the
/// quantile domain. Exists as an independent route for checking the
/// comonotone-additivity split used by [`insurer_total_risk`].
pub fn retained_risk_quantile_form(
    g: &DistortionFunction,
    dist: &LossDistribution,
    h: &CededContract,
) -> Result<RiskValue> {
    stieltjes_quantile_integral(g, dist, 0.0, 1.0, |q| q - h.eval(q))
}

/// The unified objective in its direct layered form.
pub fn objective_direct(spec: &ProblemSpec, h: &CededContract) -> Result<f64> {
    spec.validate()?;
    let c = lagrangian_constants(spec);
    let full = distortion_risk(&spec.g_alpha, &spec.dist)?;
    let ceded_a = ceded_risk(&spec.g_alpha, &spec.dist, h)?;
    let ceded_g = ceded_risk(&spec.g_gamma, &spec.dist, h)?;
    Ok(c.m1 * full.value - c.m2 * ceded_a.value + c.m3 * ceded_g.value - c.d)
}

/// The unified objective as a sum of quantile-domain integrals over the
/// survival bands between consecutive retentions. Serves as an independent
/// second implementation of [`objective_direct`].
pub fn objective_quantile_form(spec: &ProblemSpec, h: &CededContract) -> Result<f64> {
    spec.validate()?;
    let c = lagrangian_constants(spec);
    let full = stieltjes_quantile_integral(&spec.g_alpha, &spec.dist, 0.0, 1.0, |q| q)?;
    let block_a = quantile_band_sum(&spec.g_alpha, &spec.dist, h)?;
    let block_g = quantile_band_sum(&spec.g_gamma, &spec.dist, h)?;
    Ok(c.m1 * full.value - c.m2 * block_a + c.m3 * block_g - c.d)
}

/// `sum_i sum_{j<=i} C_j int_{S(d_{i+1})}^{S(d_i)} (Q(t) - d_j) dg(t)`
/// plus the final band below `S(d_n)` summed over all terms.
fn quantile_band_sum(
    g: &DistortionFunction,
    dist: &LossDistribution,
    h: &CededContract,
) -> Result<f64> {
    let terms = h.terms();
    let n = terms.len();
    if n == 0 {
        return Ok(0.0);
    }
    let survivals: Vec<f64> = terms.iter().map(|t| dist.survival(t.retention)).collect();
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let (lo, hi) = (survivals[i + 1], survivals[i]);
        for term in &terms[..=i] {
            let d = term.retention;
            let band = stieltjes_quantile_integral(g, dist, lo, hi, |q| q - d)?;
            acc += term.slope * band.value;
        }
    }
    for term in terms {
        let d = term.retention;
        let band = stieltjes_quantile_integral(g, dist, 0.0, survivals[n - 1], |q| q - d)?;
        acc += term.slope * band.value;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractTerm;

    const EXP_VAR_05: f64 = 2995.732273553991;

    fn exp_dist() -> LossDistribution {
        LossDistribution::exponential(0.001).unwrap()
    }

    fn var_identity_spec(beta: f64, lambdas: [f64; 3]) -> ProblemSpec {
        ProblemSpec {
            beta,
            loading: 0.2,
            g_alpha: DistortionFunction::var_step(0.05).unwrap(),
            g_gamma: DistortionFunction::identity(),
            lambdas,
            levels: [None; 3],
            dist: exp_dist(),
        }
    }

    #[test]
    fn ceded_risk_examples() {
        let id = DistortionFunction::identity();
        let full = ceded_risk(&id, &exp_dist(), &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((full.value - 1000.0).abs() < 1e-3);

        let zero = ceded_risk(&id, &exp_dist(), &CededContract::zero()).unwrap();
        assert_eq!(zero.value, 0.0);

        let layer =
            ceded_risk(&id, &exp_dist(), &CededContract::stop_loss(2995.73).unwrap()).unwrap();
        assert!((layer.value - 50.0).abs() < 0.01, "got {}", layer.value);
    }

    #[test]
    fn insurer_total_matches_hand_values() {
        let spec = var_identity_spec(0.7, [0.0; 3]);
        let none = insurer_total_risk(&spec, &CededContract::zero()).unwrap();
        assert!((none.value - EXP_VAR_05).abs() < 0.01);

        let all = insurer_total_risk(&spec, &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((all.value - 1200.0).abs() < 1e-3, "got {}", all.value);

        let mut tvar_spec = spec.clone();
        tvar_spec.g_alpha = DistortionFunction::tvar(0.05).unwrap();
        let t = insurer_total_risk(&tvar_spec, &CededContract::zero()).unwrap();
        assert!((t.value - (EXP_VAR_05 + 1000.0)).abs() < 0.01);
    }

    #[test]
    fn reinsurer_total_matches_hand_values() {
        let spec = var_identity_spec(0.7, [0.0; 3]);
        let none = reinsurer_total_risk(&spec, &CededContract::zero()).unwrap();
        assert_eq!(none.value, 0.0);

        let all = reinsurer_total_risk(&spec, &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((all.value - 1795.73).abs() < 0.01, "got {}", all.value);

        let mut id_spec = spec.clone();
        id_spec.g_alpha = DistortionFunction::identity();
        let neg = reinsurer_total_risk(&id_spec, &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((neg.value + 200.0).abs() < 1e-3, "got {}", neg.value);
    }

    #[test]
    fn objective_direct_examples() {
        let spec = var_identity_spec(1.0, [0.0; 3]);
        let zero = objective_direct(&spec, &CededContract::zero()).unwrap();
        assert!((zero - EXP_VAR_05).abs() < 0.01);

        let full = objective_direct(&spec, &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((full - 1200.0).abs() < 0.01, "got {full}");

        // at beta = 1/2 with no multipliers the objective is flat in h
        let half = var_identity_spec(0.5, [0.0; 3]);
        let a = objective_direct(&half, &CededContract::zero()).unwrap();
        let b = objective_direct(&half, &CededContract::stop_loss(500.0).unwrap()).unwrap();
        assert!((a - 0.5 * EXP_VAR_05).abs() < 0.01);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn quantile_form_agrees_with_direct() {
        let spec = var_identity_spec(1.0, [0.0; 3]);
        let zero = objective_quantile_form(&spec, &CededContract::zero()).unwrap();
        assert!((zero - EXP_VAR_05).abs() < 0.02, "got {zero}");
        let full =
            objective_quantile_form(&spec, &CededContract::quota_share(1.0).unwrap()).unwrap();
        assert!((full - 1200.0).abs() < 0.02, "got {full}");
        for h in [
            CededContract::zero(),
            CededContract::quota_share(1.0).unwrap(),
            CededContract::stop_loss(875.47).unwrap(),
            CededContract::new(vec![
                ContractTerm { slope: 0.3, retention: 100.0 },
                ContractTerm { slope: 0.5, retention: 2000.0 },
            ])
            .unwrap(),
        ] {
            let a = objective_direct(&spec, &h).unwrap();
            let b = objective_quantile_form(&spec, &h).unwrap();
            assert!(
                (a - b).abs() <= 1e-5 * (1.0 + a.abs()),
                "routes disagree on {h:?}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn budget_identity_reconstructs_objective() {
        let spec = ProblemSpec {
            beta: 0.7,
            loading: 0.2,
            g_alpha: DistortionFunction::var_step(0.05).unwrap(),
            g_gamma: DistortionFunction::identity(),
            lambdas: [0.3, 0.4, 0.3],
            levels: [Some(2000.0), Some(500.0), Some(800.0)],
            dist: exp_dist(),
        };
        for h in [
            CededContract::zero(),
            CededContract::stop_loss(875.47).unwrap(),
            CededContract::quota_share(0.6).unwrap(),
        ] {
            let ins = insurer_total_risk(&spec, &h).unwrap().value;
            let rei = reinsurer_total_risk(&spec, &h).unwrap().value;
            let pre = contract_premium(&spec, &h).unwrap().value;
            let [l1, l2, l3] = spec.lambdas;
            let rebuilt = spec.beta * ins
                + (1.0 - spec.beta) * rei
                + l1 * ins
                + l2 * rei
                + l3 * pre
                - spec.constraint_offset();
            let direct = objective_direct(&spec, &h).unwrap();
            assert!(
                (rebuilt - direct).abs() <= 1e-6 * (1.0 + direct.abs()),
                "identity failed on {h:?}: {rebuilt} vs {direct}"
            );
        }
    }

    #[test]
    fn comonotone_split_verified_through_quantile_route() {
        let d = exp_dist();
        for g in [
            DistortionFunction::identity(),
            DistortionFunction::var_step(0.05).unwrap(),
            DistortionFunction::tvar(0.1).unwrap(),
        ] {
            for h in [
                CededContract::stop_loss(1500.0).unwrap(),
                CededContract::quota_share(0.4).unwrap(),
                CededContract::change_loss(0.7, 500.0).unwrap(),
            ] {
                let full = distortion_risk(&g, &d).unwrap();
                let ceded = ceded_risk(&g, &d, &h).unwrap();
                let retained = retained_risk_quantile_form(&g, &d, &h).unwrap();
                let lhs = ceded.value + retained.value;
                assert!(
                    (lhs - full.value).abs() <= 1e-6 * (1.0 + full.value),
                    "split failed for {g:?}/{h:?}: {lhs} vs {}",
                    full.value
                );
            }
        }
    }

    #[test]
    fn validation_catches_bad_specs() {
        let mut spec = var_identity_spec(0.7, [0.0; 3]);
        spec.beta = 1.5;
        assert!(spec.validate().is_err());

        let mut spec = var_identity_spec(0.7, [0.0; 3]);
        spec.lambdas = [-0.1, 0.0, 0.0];
        assert!(spec.validate().is_err());

        // confidence level must stay below S(0)
        let mut spec = var_identity_spec(0.7, [0.0; 3]);
        spec.dist = LossDistribution::empirical(vec![0.0, 0.0, 0.0, 5.0]).unwrap();
        spec.g_alpha = DistortionFunction::var_step(0.5).unwrap();
        assert!(spec.validate().is_err());
    }
}
