//! Optimal-contract dispatch driven by the geometry of the distortion
//! ratio `K(t) = g_alpha(t) / g_gamma(t)` against the threshold
//! `M = m3 / m2`.
//!
//! Where `K` stays on one side of `M` the optimum is a corner (null or full
//! cession). Where `K` crosses `M`, the crossing quantiles become candidate
//! retentions and the optimum is a stop-loss, a quota share, or a
//! quota-plus-excess combination selected by a two-variable linear program
//! over the slope budget. Ratio shapes whose upper level set is not a
//! single interval (more than two crossings, or a split set) are refused
//! rather than mis-solved.

use serde::Serialize;

use crate::contract::CededContract;
use crate::distortion::{layer_risk, DistortionFunction};
use crate::error::{CedeError, Result};
use crate::problem::{objective_direct, ProblemSpec};

/// Multipliers with |m2| at or below this band are treated as zero.
pub const M2_ZERO_BAND: f64 = 1e-12;

/// Tolerance (relative to `max(1, |M|)`) for deciding `K(t) = M`.
const TANGENT_TOL: f64 = 1e-9;

const SCAN_POINTS: usize = 10_000;
const SCAN_EPS: f64 = 1e-6;
/// Bisection refinement target for crossing abscissae.
const ROOT_T_TOL: f64 = 1e-10;

/// Aggregated objective coefficients.
///
/// `m1 = beta + l1`, `m2 = 2 beta - 1 + l1 - l2`,
/// `m3 = (1 + loading) (m2 + l3)`, `d = sum l_i L_i`,
/// `m = m3 / m2` (absent inside the zero band).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LagrangianConstants {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub d: f64,
    pub m: Option<f64>,
}

pub fn lagrangian_constants(spec: &ProblemSpec) -> LagrangianConstants {
    let [l1, l2, l3] = spec.lambdas;
    let m1 = spec.beta + l1;
    let m2 = 2.0 * spec.beta - 1.0 + l1 - l2;
    let m3 = (1.0 + spec.loading) * (m2 + l3);
    let d = spec.constraint_offset();
    let m = if m2.abs() <= M2_ZERO_BAND {
        None
    } else {
        Some(m3 / m2)
    };
    LagrangianConstants { m1, m2, m3, d, m }
}

/// Pointwise value of the distortion ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KRatio {
    Finite(f64),
    /// Premium distortion vanishes while the risk distortion does not.
    PosInfinite,
    /// Both distortions vanish; excluded from scans.
    Indeterminate,
}

pub fn k_ratio(g_alpha: &DistortionFunction, g_gamma: &DistortionFunction, t: f64) -> KRatio {
    let num = g_alpha.eval(t);
    let den = g_gamma.eval(t);
    if den > 0.0 {
        KRatio::Finite(num / den)
    } else if num > 0.0 {
        KRatio::PosInfinite
    } else {
        KRatio::Indeterminate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    VarProfile,
    TvarProfile,
    Concave,
    Scanned,
}

/// Geometry of `K` against a threshold: bounds, the level-set edges
/// `a_hat = min{t : K >= M}` / `b_hat = max{t : K >= M}` (absent when the
/// level set runs to the respective end of `(0,1)` or is empty), and the
/// points where `K` meets `M` exactly.
#[derive(Debug, Clone, Serialize)]
pub struct KProfile {
    pub k_sup: f64,
    pub k_inf: f64,
    pub a_hat: Option<f64>,
    pub b_hat: Option<f64>,
    pub tangency_points: Vec<f64>,
    pub shape: ProfileShape,
}

impl KProfile {
    fn without_threshold(k_sup: f64, k_inf: f64, shape: ProfileShape) -> Self {
        KProfile {
            k_sup,
            k_inf,
            a_hat: None,
            b_hat: None,
            tangency_points: vec![],
            shape,
        }
    }
}

/// Computes the ratio profile for a finite threshold, using analytic fast
/// paths for the step/identity and tail/identity pairs and a refined scan
/// otherwise.
pub fn k_profile(
    g_alpha: &DistortionFunction,
    g_gamma: &DistortionFunction,
    m: f64,
) -> Result<KProfile> {
    if !m.is_finite() {
        return Err(CedeError::InvalidParameter(format!(
            "threshold must be finite, got {m}"
        )));
    }
    profile_impl(g_alpha, g_gamma, Some(m))
}

/// The generic scan path, exposed so the analytic fast paths can be
/// cross-checked against it.
pub fn k_profile_scanned(
    g_alpha: &DistortionFunction,
    g_gamma: &DistortionFunction,
    m: f64,
) -> Result<KProfile> {
    scan_profile(g_alpha, g_gamma, Some(m))
}

fn profile_impl(
    g_alpha: &DistortionFunction,
    g_gamma: &DistortionFunction,
    m: Option<f64>,
) -> Result<KProfile> {
    if g_gamma.is_identity() {
        if let Some(alpha) = g_alpha.var_level() {
            return Ok(var_profile(alpha, m));
        }
        if let Some(alpha) = g_alpha.tvar_level() {
            return Ok(tvar_profile(alpha, m));
        }
    }
    scan_profile(g_alpha, g_gamma, m)
}

fn tangent_tol(m: f64) -> f64 {
    TANGENT_TOL * m.abs().max(1.0)
}

fn var_profile(alpha: f64, m: Option<f64>) -> KProfile {
    let k_sup = 1.0 / alpha;
    let mut p = KProfile::without_threshold(k_sup, 0.0, ProfileShape::VarProfile);
    let Some(m) = m else { return p };
    let tol = tangent_tol(m);
    if m.abs() <= tol {
        // K vanishes on the whole of (0, alpha)
        p.tangency_points = vec![0.5 * alpha];
    } else if (m - k_sup).abs() <= tol {
        p.tangency_points = vec![alpha];
        p.a_hat = Some(alpha);
        p.b_hat = Some(alpha);
    } else if m > 0.0 && m < k_sup {
        p.a_hat = Some(alpha);
        if m > 1.0 {
            p.b_hat = Some(1.0 / m);
            p.tangency_points = vec![1.0 / m];
        }
    }
    p
}

fn tvar_profile(alpha: f64, m: Option<f64>) -> KProfile {
    let k_sup = 1.0 / alpha;
    // the infimum 1 is approached at the right edge but never attained
    let mut p = KProfile::without_threshold(k_sup, 1.0, ProfileShape::TvarProfile);
    let Some(m) = m else { return p };
    let tol = tangent_tol(m);
    if (m - k_sup).abs() <= tol {
        p.b_hat = Some(alpha);
        p.tangency_points = vec![alpha];
    } else if m > 1.0 && m < k_sup {
        p.b_hat = Some(1.0 / m);
        p.tangency_points = vec![1.0 / m];
    }
    p
}

fn scan_profile(
    g_alpha: &DistortionFunction,
    g_gamma: &DistortionFunction,
    m: Option<f64>,
) -> Result<KProfile> {
    let n = SCAN_POINTS;
    let step = (1.0 - 2.0 * SCAN_EPS) / (n - 1) as f64;
    let mut ts = Vec::with_capacity(n);
    let mut ks = Vec::with_capacity(n);
    let mut indeterminate = 0usize;
    for i in 0..n {
        let t = SCAN_EPS + step * i as f64;
        match k_ratio(g_alpha, g_gamma, t) {
            KRatio::Finite(k) => {
                ts.push(t);
                ks.push(k);
            }
            KRatio::PosInfinite => {
                ts.push(t);
                ks.push(f64::INFINITY);
            }
            KRatio::Indeterminate => indeterminate += 1,
        }
    }
    if indeterminate * 100 > n {
        return Err(CedeError::ProfileIndeterminate(format!(
            "{indeterminate} of {n} scan points are 0/0"
        )));
    }

    let k_sup = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k_inf = ks
        .iter()
        .cloned()
        .filter(|k| k.is_finite())
        .fold(f64::INFINITY, f64::min);
    let shape = if ks.iter().all(|k| k.is_finite()) && is_concave(&ts, &ks) {
        ProfileShape::Concave
    } else {
        ProfileShape::Scanned
    };
    let mut p = KProfile::without_threshold(k_sup, k_inf, shape);
    let Some(m) = m else { return Ok(p) };
    let tol = tangent_tol(m);

    for (&t, &k) in ts.iter().zip(ks.iter()) {
        if k.is_finite() && (k - m).abs() <= tol && p.tangency_points.len() < 64 {
            p.tangency_points.push(t);
        }
    }

    // The upper level set {K >= M} must be one contiguous run.
    let member: Vec<bool> = ks.iter().map(|&k| k >= m - tol).collect();
    let mut runs: Vec<(usize, usize)> = vec![];
    let mut i = 0;
    while i < member.len() {
        if member[i] {
            let start = i;
            while i < member.len() && member[i] {
                i += 1;
            }
            runs.push((start, i - 1));
        } else {
            i += 1;
        }
    }
    match runs.len() {
        0 => {}
        1 => {
            let (lo, hi) = runs[0];
            let pred = |t: f64| match k_ratio(g_alpha, g_gamma, t) {
                KRatio::Finite(k) => k >= m - tol,
                KRatio::PosInfinite => true,
                KRatio::Indeterminate => false,
            };
            if lo > 0 {
                p.a_hat = Some(refine_edge(ts[lo], ts[lo - 1], &pred));
            }
            if hi + 1 < member.len() {
                p.b_hat = Some(refine_edge(ts[hi], ts[hi + 1], &pred));
            }
        }
        _ => {
            return Err(CedeError::UnsupportedShape(format!(
                "level set {{K >= M}} splits into {} runs; only single-interval \
                 geometries are solved",
                runs.len()
            )))
        }
    }
    Ok(p)
}

fn is_concave(ts: &[f64], ks: &[f64]) -> bool {
    ks.windows(3).zip(ts.windows(3)).all(|(k, _)| {
        let mid = 0.5 * (k[0] + k[2]);
        k[1] >= mid - 1e-9 * (1.0 + k[1].abs())
    })
}

/// Bisects the membership predicate between a member and a non-member
/// abscissa; returns the boundary to within the root tolerance.
fn refine_edge<P: Fn(f64) -> bool>(member_t: f64, non_member_t: f64, pred: &P) -> f64 {
    let mut inside = member_t;
    let mut outside = non_member_t;
    for _ in 0..80 {
        if (outside - inside).abs() <= ROOT_T_TOL {
            break;
        }
        let mid = 0.5 * (inside + outside);
        if pred(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Marginal gain density of ceding at loss level `x`:
/// `m2 g_alpha(S(x)) - m3 g_gamma(S(x))`.
///
/// Its integral over a layer is the objective improvement from adding unit
/// slope on that layer, which drives both the dispatch and the sign checks.
pub fn cession_gain_density(spec: &ProblemSpec, c: &LagrangianConstants, x: f64) -> f64 {
    let s = spec.dist.survival(x);
    c.m2 * spec.g_alpha.eval(s) - c.m3 * spec.g_gamma.eval(s)
}

/// Objective gain of one unit of slope on the layer above `d`.
pub fn cession_gain(spec: &ProblemSpec, c: &LagrangianConstants, d: f64) -> Result<f64> {
    let la = layer_risk(&spec.g_alpha, &spec.dist, d)?;
    let lg = layer_risk(&spec.g_gamma, &spec.dist, d)?;
    Ok(c.m2 * la.value - c.m3 * lg.value)
}

/// Allocates the slope budget between a quota share (gain `gain_quota` per
/// unit slope) and an excess layer (gain `gain_excess`): maximizes
/// `c1 * gain_quota + c2 * gain_excess` over `c1, c2 >= 0`, `c1 + c2 <= 1`.
/// The optimum sits at a vertex; ties break toward the excess layer.
pub fn slope_lp(gain_quota: f64, gain_excess: f64) -> (f64, f64) {
    if gain_excess >= gain_quota && gain_excess >= 0.0 {
        (0.0, 1.0)
    } else if gain_quota >= 0.0 {
        (1.0, 0.0)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CaseLabel {
    #[serde(rename = "M2_ZERO")]
    M2Zero,
    #[serde(rename = "M_LE_KINF")]
    MLeKInf,
    #[serde(rename = "M_GE_KSUP")]
    MGeKSup,
    A,
    B,
    C,
    D,
    E,
    F,
    #[serde(rename = "DEGENERATE")]
    Degenerate,
}

/// Solver output: constants, ratio geometry, the selected case, the optimal
/// contract and its objective value.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionReport {
    pub constants: LagrangianConstants,
    pub profile: KProfile,
    pub case_label: CaseLabel,
    pub f_star: CededContract,
    pub objective: f64,
    pub degenerate: bool,
    pub degenerate_note: Option<String>,
    /// Slope split `(c1, c2)` of the quota-plus-excess combination, present
    /// only in case F.
    pub case_f_coeffs: Option<(f64, f64)>,
}

/// Solves for the optimal ceded-loss function.
pub fn solve(spec: &ProblemSpec) -> Result<SolutionReport> {
    spec.validate()?;
    let constants = lagrangian_constants(spec);

    if constants.m2.abs() <= M2_ZERO_BAND {
        let profile = profile_impl(&spec.g_alpha, &spec.g_gamma, None)?;
        let degenerate = constants.m3.abs() <= M2_ZERO_BAND;
        let f_star = CededContract::zero();
        let objective = objective_direct(spec, &f_star)?;
        return Ok(SolutionReport {
            constants,
            profile,
            case_label: if degenerate {
                CaseLabel::Degenerate
            } else {
                CaseLabel::M2Zero
            },
            f_star,
            objective,
            degenerate,
            degenerate_note: degenerate.then(|| {
                "objective is constant over the admissible class; the zero contract \
                 is the canonical representative"
                    .into()
            }),
            case_f_coeffs: None,
        });
    }

    let m2 = constants.m2;
    let m = constants.m.expect("m2 outside zero band");
    let profile = profile_impl(&spec.g_alpha, &spec.g_gamma, Some(m))?;

    // Corner regimes: K never drops below / rises above the threshold.
    if m <= profile.k_inf {
        let f_star = if m2 > 0.0 {
            CededContract::quota_share(1.0)?
        } else {
            CededContract::zero()
        };
        return finish(
            spec,
            constants,
            profile,
            CaseLabel::MLeKInf,
            f_star,
            None,
        );
    }
    if m >= profile.k_sup {
        let f_star = if m2 < 0.0 {
            CededContract::quota_share(1.0)?
        } else {
            CededContract::zero()
        };
        return finish(
            spec,
            constants,
            profile,
            CaseLabel::MGeKSup,
            f_star,
            None,
        );
    }

    // Interval regime: the level set {K >= M} is [a_hat, b_hat], with an
    // absent edge meaning it runs to that end of (0,1).
    let d_a = profile.a_hat.map(|a| spec.dist.quantile(a));
    let d_b = spec.dist.quantile(profile.b_hat.unwrap_or(1.0));

    if m2 > 0.0 {
        let gain = cession_gain(spec, &constants, d_b)?;
        let (f_star, label) = if gain > 0.0 {
            let f = if d_b > 0.0 {
                CededContract::stop_loss(d_b)?
            } else {
                CededContract::quota_share(1.0)?
            };
            let label = match (profile.a_hat, profile.b_hat) {
                (_, Some(_)) => CaseLabel::B,
                (Some(_), None) => CaseLabel::D,
                (None, None) => unreachable!("level set cannot cover all of (0,1) here"),
            };
            (f, label)
        } else {
            let label = if profile.a_hat.is_some() {
                CaseLabel::A
            } else {
                CaseLabel::C
            };
            (CededContract::zero(), label)
        };
        return finish(spec, constants, profile, label, f_star, None);
    }

    // m2 < 0: allocate the slope budget between full quota share and the
    // excess layer above the left crossing quantile.
    let gain_quota = cession_gain(spec, &constants, 0.0)?;
    match d_a {
        Some(d_a) => {
            let gain_excess = cession_gain(spec, &constants, d_a)?;
            let (c1, c2) = slope_lp(gain_quota, gain_excess);
            let f_star = if c2 > 0.0 {
                CededContract::stop_loss(d_a)?
            } else if c1 > 0.0 {
                CededContract::quota_share(1.0)?
            } else {
                CededContract::zero()
            };
            let (label, coeffs) = if profile.b_hat.is_some() {
                (CaseLabel::F, Some((c1, c2)))
            } else {
                (CaseLabel::A, None)
            };
            finish(spec, constants, profile, label, f_star, coeffs)
        }
        None => {
            let (f_star, label) = if gain_quota > 0.0 {
                (CededContract::quota_share(1.0)?, CaseLabel::E)
            } else {
                (CededContract::zero(), CaseLabel::B)
            };
            finish(spec, constants, profile, label, f_star, None)
        }
    }
}

fn finish(
    spec: &ProblemSpec,
    constants: LagrangianConstants,
    profile: KProfile,
    case_label: CaseLabel,
    f_star: CededContract,
    case_f_coeffs: Option<(f64, f64)>,
) -> Result<SolutionReport> {
    let objective = objective_direct(spec, &f_star)?;
    // a threshold attained by K makes whole families of contracts optimal
    let boundary = matches!(case_label, CaseLabel::MLeKInf | CaseLabel::MGeKSup);
    let degenerate = boundary && !profile.tangency_points.is_empty();
    Ok(SolutionReport {
        constants,
        profile,
        case_label,
        f_star,
        objective,
        degenerate,
        degenerate_note: degenerate.then(|| {
            "the ratio attains the threshold at the listed tangency points; the \
             reported contract is one of several optima"
                .into()
        }),
        case_f_coeffs,
    })
}
