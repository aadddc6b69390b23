//! Distortion functions and distortion risk measures.
//!
//! A distortion function is a nondecreasing `g : [0,1] -> [0,1]` with
//! `g(0) = 0` and `g(1) = 1`. The induced risk measure integrates the
//! distorted survival function over the loss axis; an equivalent quantile
//! form integrates the quantile function against `dg`. Both routes are
//! implemented and cross-checked against each other in tests.

use serde::{Deserialize, Serialize};

use crate::distribution::LossDistribution;
use crate::error::{CedeError, Result};
use crate::quad::{self, Integral};

/// Truncation level for infinite supports: integration stops at the
/// `1e-12` survival quantile and the remainder is folded into the error
/// estimate.
pub const TAIL_EPS: f64 = 1e-12;

const STAGE_EPS: [f64; 3] = [1e-6, 1e-9, 1e-12];

/// Quantile levels used as mandatory panel boundaries on the loss axis.
const LADDER: [f64; 10] = [0.9, 0.75, 0.5, 0.25, 0.1, 0.05, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
enum DistortionKind {
    Identity,
    VarStep { level: f64 },
    Tvar { level: f64 },
    ProportionalHazard { exponent: f64 },
    CustomTable { knots: Vec<(f64, f64)> },
}

/// Concavity metadata; concave distortions give coherent risk measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcaveHint {
    Concave,
    NotConcave,
    Unknown,
}

/// A validated distortion function with structural metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistortionFunction {
    kind: DistortionKind,
    discontinuities: Vec<f64>,
    concave_hint: ConcaveHint,
}

impl DistortionFunction {
    /// `g(t) = t`; the induced measure is the expectation.
    pub fn identity() -> Self {
        DistortionFunction {
            kind: DistortionKind::Identity,
            discontinuities: vec![],
            concave_hint: ConcaveHint::Concave,
        }
    }

    /// Step distortion of the value-at-risk quantile: `0` below `level`,
    /// `1` from `level` on.
    pub fn var_step(level: f64) -> Result<Self> {
        check_level(level)?;
        Ok(DistortionFunction {
            kind: DistortionKind::VarStep { level },
            discontinuities: vec![level],
            concave_hint: ConcaveHint::NotConcave,
        })
    }

    /// Tail-value-at-risk distortion: `t / level` below `level`, `1` after.
    pub fn tvar(level: f64) -> Result<Self> {
        check_level(level)?;
        Ok(DistortionFunction {
            kind: DistortionKind::Tvar { level },
            discontinuities: vec![],
            concave_hint: ConcaveHint::Concave,
        })
    }

    /// Proportional-hazard transform `g(t) = t^exponent`, `exponent > 0`.
    pub fn proportional_hazard(exponent: f64) -> Result<Self> {
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "proportional-hazard exponent must be positive, got {exponent}"
            )));
        }
        Ok(DistortionFunction {
            kind: DistortionKind::ProportionalHazard { exponent },
            discontinuities: vec![],
            concave_hint: if exponent <= 1.0 {
                ConcaveHint::Concave
            } else {
                ConcaveHint::NotConcave
            },
        })
    }

    /// Piecewise-linear distortion through `(t, g)` knots from `(0,0)`
    /// to `(1,1)` with strictly increasing `t` and nondecreasing `g`.
    pub fn from_table(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(CedeError::InvalidParameter(
                "distortion table needs at least two knots".into(),
            ));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(CedeError::InvalidParameter(
                "distortion table must run from (0,0) to (1,1)".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(CedeError::InvalidParameter(
                    "distortion table abscissae must strictly increase".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(CedeError::NonMonotoneTable(format!(
                    "g({}) = {} exceeds g({}) = {}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        if knots.iter().any(|&(t, g)| !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&g)) {
            return Err(CedeError::InvalidParameter(
                "distortion table values must lie in [0,1]".into(),
            ));
        }
        let concave = knots
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect::<Vec<_>>()
            .windows(2)
            .all(|s| s[1] <= s[0] + 1e-12);
        Ok(DistortionFunction {
            kind: DistortionKind::CustomTable { knots },
            discontinuities: vec![],
            concave_hint: if concave {
                ConcaveHint::Concave
            } else {
                ConcaveHint::NotConcave
            },
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        match &self.kind {
            DistortionKind::Identity => t,
            DistortionKind::VarStep { level } => {
                if t >= *level {
                    1.0
                } else {
                    0.0
                }
            }
            DistortionKind::Tvar { level } => {
                if t >= *level {
                    1.0
                } else {
                    t / level
                }
            }
            DistortionKind::ProportionalHazard { exponent } => t.powf(*exponent),
            DistortionKind::CustomTable { knots } => {
                let i = knots.partition_point(|&(k, _)| k <= t);
                if i == 0 {
                    return 0.0;
                }
                if i == knots.len() {
                    return 1.0;
                }
                let (t0, g0) = knots[i - 1];
                let (t1, g1) = knots[i];
                g0 + (g1 - g0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Jump points in `(0,1)`; only the step distortion has one.
    pub fn discontinuities(&self) -> &[f64] {
        &self.discontinuities
    }

    /// Size of the jump at `t` (zero where `g` is continuous).
    pub fn jump_size(&self, t: f64) -> f64 {
        match &self.kind {
            DistortionKind::VarStep { level } if (t - level).abs() <= f64::EPSILON => 1.0,
            _ => 0.0,
        }
    }

    /// Jumps and kinks in `(0,1)`: mandatory quadrature panel boundaries.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DistortionKind::Identity | DistortionKind::ProportionalHazard { .. } => vec![],
            DistortionKind::VarStep { level } | DistortionKind::Tvar { level } => vec![*level],
            DistortionKind::CustomTable { knots } => knots[1..knots.len() - 1]
                .iter()
                .map(|&(t, _)| t)
                .collect(),
        }
    }

    /// Density of the absolutely continuous part of `dg`.
    ///
    /// Analytic for the builtin kinds; finite differences (step `1e-7`,
    /// one-sided at kinks and endpoints) for tables.
    pub fn derivative(&self, t: f64) -> f64 {
        match &self.kind {
            DistortionKind::Identity => 1.0,
            DistortionKind::VarStep { .. } => 0.0,
            DistortionKind::Tvar { level } => {
                if t < *level {
                    1.0 / level
                } else {
                    0.0
                }
            }
            DistortionKind::ProportionalHazard { exponent } => {
                exponent * t.powf(exponent - 1.0)
            }
            DistortionKind::CustomTable { knots } => {
                const H: f64 = 1e-7;
                // one-sided into the segment that contains t, so kinks do
                // not smear into the neighbouring slope
                let near = knots
                    .iter()
                    .map(|&(k, _)| k)
                    .find(|k| (t - k).abs() <= H);
                match near {
                    Some(k) if t < k => (self.eval(t) - self.eval(t - H)) / H,
                    Some(_) => (self.eval(t + H) - self.eval(t)) / H,
                    None => (self.eval(t + H) - self.eval(t - H)) / (2.0 * H),
                }
            }
        }
    }

    pub fn concave_hint(&self) -> ConcaveHint {
        self.concave_hint
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, DistortionKind::Identity)
    }

    /// The step level when this is the value-at-risk distortion.
    pub fn var_level(&self) -> Option<f64> {
        match self.kind {
            DistortionKind::VarStep { level } => Some(level),
            _ => None,
        }
    }

    /// The level when this is the tail-value-at-risk distortion.
    pub fn tvar_level(&self) -> Option<f64> {
        match self.kind {
            DistortionKind::Tvar { level } => Some(level),
            _ => None,
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(CedeError::InvalidParameter(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    Ok(())
}

/// A monetary risk figure together with a numerical error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskValue {
    pub value: f64,
    pub abs_error_estimate: f64,
}

impl RiskValue {
    pub fn exact(value: f64) -> Self {
        RiskValue {
            value,
            abs_error_estimate: 0.0,
        }
    }

    pub fn scale(self, k: f64) -> Self {
        RiskValue {
            value: k * self.value,
            abs_error_estimate: k.abs() * self.abs_error_estimate,
        }
    }

    pub fn add(self, other: RiskValue) -> Self {
        RiskValue {
            value: self.value + other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
        }
    }

    pub fn sub(self, other: RiskValue) -> Self {
        RiskValue {
            value: self.value - other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
        }
    }
}

/// Distortion risk of the full loss: the distorted survival function
/// integrated over `[0, inf)`.
pub fn distortion_risk(g: &DistortionFunction, dist: &LossDistribution) -> Result<RiskValue> {
    layer_risk(g, dist, 0.0)
}

/// Distorted survival integral of the layer above `lower`:
/// the risk of the stop-loss payout `(X - lower)+`.
pub fn layer_risk(
    g: &DistortionFunction,
    dist: &LossDistribution,
    lower: f64,
) -> Result<RiskValue> {
    if !lower.is_finite() || lower < 0.0 {
        return Err(CedeError::InvalidParameter(format!(
            "layer retention must be finite and nonnegative, got {lower}"
        )));
    }
    if let LossDistribution::Empirical { sample } = dist {
        return Ok(empirical_layer(g, dist, sample, lower));
    }

    let f = |x: f64| g.eval(dist.survival(x));
    let mut xbreaks: Vec<f64> = LADDER
        .iter()
        .chain([1e-7, 1e-8, 1e-10, 1e-11].iter())
        .map(|&t| dist.quantile(t))
        .collect();
    for t in g.breakpoints() {
        xbreaks.push(dist.quantile(t));
    }

    // Three nested truncation stages; the outer two fund the tail estimate
    // and the divergence check.
    let mut stages = [Integral::default(); 3];
    let mut lo = lower;
    for (i, &eps) in STAGE_EPS.iter().enumerate() {
        let hi = dist.quantile(eps);
        stages[i] = quad::integrate_with_breakpoints(
            &f,
            lo,
            hi,
            &xbreaks,
            quad::ABS_TOL,
            quad::REL_TOL,
        );
        lo = lo.max(hi);
    }

    let partial = stages[0].value + stages[1].value + stages[2].value;
    check_stabilization(stages[1].value, stages[2].value, partial)?;
    let tail = tail_estimate(
        stages[1].value,
        stages[2].value,
        g.eval(TAIL_EPS),
        dist,
        dist.quantile(TAIL_EPS),
    );

    Ok(RiskValue {
        value: partial.max(0.0),
        abs_error_estimate: stages.iter().map(|s| s.abs_error).sum::<f64>() + tail,
    })
}

fn empirical_layer(
    g: &DistortionFunction,
    dist: &LossDistribution,
    sample: &[f64],
    lower: f64,
) -> RiskValue {
    // S is a step function: the integral is an exact finite sum.
    let mut acc = 0.0;
    let mut prev = lower;
    for &x in sample {
        if x > prev {
            acc += g.eval(dist.survival(prev)) * (x - prev);
            prev = x;
        }
    }
    RiskValue::exact(acc)
}

fn check_stabilization(ext1: f64, ext2: f64, partial: f64) -> Result<()> {
    if ext1 > 0.0 && ext2 > 1e-9 * (1.0 + partial.abs()) && ext2 >= 0.9 * ext1 {
        return Err(CedeError::DivergentIntegral(format!(
            "tail increments {ext1:.3e} -> {ext2:.3e} do not decay"
        )));
    }
    Ok(())
}

fn tail_estimate(
    ext1: f64,
    ext2: f64,
    g_at_eps: f64,
    dist: &LossDistribution,
    x_end: f64,
) -> f64 {
    let geometric = if ext1 > 0.0 && ext2 > 0.0 && ext2 < ext1 {
        let q = ext2 / ext1;
        ext2 * q / (1.0 - q)
    } else {
        0.0
    };
    let analytic = if x_end.is_finite() {
        g_at_eps * dist.mean_excess(x_end)
    } else {
        0.0
    };
    geometric.max(analytic)
}

/// The quantile (Choquet) form: maps each tail probability to a value and
/// integrates against `dg` over `(lo, hi]`. Jump contributions are added at
/// the discontinuities of `g`; the absolutely continuous part is quadrature
/// against the analytic (or finite-difference) density.
pub(crate) fn stieltjes_quantile_integral<F: Fn(f64) -> f64>(
    g: &DistortionFunction,
    dist: &LossDistribution,
    lo: f64,
    hi: f64,
    map: F,
) -> Result<RiskValue> {
    debug_assert!((0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0);
    if hi <= lo {
        return Ok(RiskValue::exact(0.0));
    }
    if let LossDistribution::Empirical { sample } = dist {
        return Ok(empirical_stieltjes(g, sample, lo, hi, map));
    }

    let mut jumps = 0.0;
    for &u in g.discontinuities() {
        if u > lo && u <= hi {
            jumps += g.jump_size(u) * map(dist.quantile(u));
        }
    }

    let density = |t: f64| map(dist.quantile(t)) * g.derivative(t);
    let mut tbreaks = g.breakpoints();
    tbreaks.extend_from_slice(&LADDER);
    tbreaks.extend_from_slice(&[1e-7, 1e-8, 1e-10, 1e-11]);

    let mut stages = [Integral::default(); 3];
    let mut upper = hi;
    for (i, &eps) in STAGE_EPS.iter().enumerate() {
        let stage_lo = lo.max(eps);
        stages[i] = quad::integrate_with_breakpoints(
            &density,
            stage_lo.min(upper),
            upper,
            &tbreaks,
            quad::ABS_TOL,
            quad::REL_TOL,
        );
        upper = upper.min(stage_lo);
        if lo >= eps {
            break;
        }
    }

    let partial = stages[0].value + stages[1].value + stages[2].value;
    let mut value = partial + jumps;
    let mut tail = 0.0;
    if lo < STAGE_EPS[2] {
        check_stabilization(stages[1].value, stages[2].value, partial)?;
        // Integration by parts over the truncated band (0, eps]: the band
        // carries the boundary mass g(eps) * map(Q(eps)) plus the same
        // loss-axis tail integral the survival-form route drops. Adding
        // the boundary mass keeps the two routes consistent to quadrature
        // accuracy even on slowly decaying tails.
        let q_end = dist.quantile(STAGE_EPS[2]);
        value += g.eval(STAGE_EPS[2]) * map(q_end);
        tail = tail_estimate(
            stages[1].value,
            stages[2].value,
            g.eval(STAGE_EPS[2]),
            dist,
            q_end,
        );
    }

    Ok(RiskValue {
        value,
        abs_error_estimate: stages.iter().map(|s| s.abs_error).sum::<f64>() + tail,
    })
}

fn empirical_stieltjes<F: Fn(f64) -> f64>(
    g: &DistortionFunction,
    sample: &[f64],
    lo: f64,
    hi: f64,
    map: F,
) -> RiskValue {
    // The quantile is constant on ((k-1)/n, k/n]; the integral is an exact
    // sum of g-increments, jumps of g included.
    let n = sample.len();
    let mut acc = 0.0;
    for k in 1..=n {
        let a = ((k - 1) as f64 / n as f64).max(lo);
        let b = (k as f64 / n as f64).min(hi);
        if b > a {
            acc += map(sample[n - k]) * (g.eval(b) - g.eval(a));
        }
    }
    RiskValue::exact(acc)
}

/// Quantile-form evaluation of the distortion risk; an independent
/// cross-check of [`distortion_risk`].
pub fn distortion_risk_quantile_form(
    g: &DistortionFunction,
    dist: &LossDistribution,
) -> Result<RiskValue> {
    stieltjes_quantile_integral(g, dist, 0.0, 1.0, |q| q)
}

/// Loads a risk figure into a premium: `(1 + loading) * risk`.
///
/// Zero loading is admitted (the premium then degenerates to the distorted
/// expectation itself).
pub fn distortion_premium(risk: RiskValue, loading: f64) -> Result<RiskValue> {
    if !(loading >= 0.0) || !loading.is_finite() {
        return Err(CedeError::InvalidParameter(format!(
            "safety loading must be nonnegative, got {loading}"
        )));
    }
    Ok(risk.scale(1.0 + loading))
}
