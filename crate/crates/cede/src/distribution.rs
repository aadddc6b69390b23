//! Ground-up loss distributions: survival function, generalized inverse,
//! moments and deterministic sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{CedeError, Result};

/// A nonnegative ground-up loss with finite mean.
///
/// `survival` is right-continuous; `quantile` is the generalized inverse
/// `inf {x : S(x) <= t}`, which matches the infimum definition of the
/// value-at-risk quantile. Construct through the checked constructors; the
/// empirical variant keeps its sample sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    content = "params",
    rename_all = "snake_case",
    try_from = "RawDistribution"
)]
pub enum LossDistribution {
    Exponential { rate: f64 },
    Pareto { shape: f64, scale: f64 },
    Lognormal { log_mean: f64, log_sd: f64 },
    Empirical { sample: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
enum RawDistribution {
    Exponential { rate: f64 },
    Pareto { shape: f64, scale: f64 },
    Lognormal { log_mean: f64, log_sd: f64 },
    Empirical { sample: Vec<f64> },
}

impl TryFrom<RawDistribution> for LossDistribution {
    type Error = CedeError;

    fn try_from(raw: RawDistribution) -> Result<Self> {
        match raw {
            RawDistribution::Exponential { rate } => LossDistribution::exponential(rate),
            RawDistribution::Pareto { shape, scale } => LossDistribution::pareto(shape, scale),
            RawDistribution::Lognormal { log_mean, log_sd } => {
                LossDistribution::lognormal(log_mean, log_sd)
            }
            RawDistribution::Empirical { sample } => LossDistribution::empirical(sample),
        }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal quantile, polished with one Newton step so that
/// quantile/survival round trips hold to machine precision.
fn normal_quantile(p: f64) -> f64 {
    let n = std_normal();
    let mut z = n.inverse_cdf(p);
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if pdf > 1e-300 {
        z -= (n.cdf(z) - p) / pdf;
    }
    z
}

impl LossDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "exponential rate must be positive and finite, got {rate}"
            )));
        }
        Ok(LossDistribution::Exponential { rate })
    }

    /// Pareto (Lomax) on `[0, inf)` with survival `(scale / (x + scale))^shape`.
    /// Requires `shape > 1` so the mean is finite.
    pub fn pareto(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 1.0) || !shape.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "pareto shape must exceed 1 for a finite mean, got {shape}"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "pareto scale must be positive, got {scale}"
            )));
        }
        Ok(LossDistribution::Pareto { shape, scale })
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        if !log_mean.is_finite() || !(log_sd > 0.0) || !log_sd.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "lognormal requires finite log_mean and positive log_sd, got ({log_mean}, {log_sd})"
            )));
        }
        Ok(LossDistribution::Lognormal { log_mean, log_sd })
    }

    pub fn empirical(mut sample: Vec<f64>) -> Result<Self> {
        if sample.is_empty() {
            return Err(CedeError::InvalidParameter(
                "empirical sample must be nonempty".into(),
            ));
        }
        if sample.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CedeError::InvalidParameter(
                "empirical sample values must be finite and nonnegative".into(),
            ));
        }
        sample.sort_by(f64::total_cmp);
        Ok(LossDistribution::Empirical { sample })
    }

    /// Survival function `S(x) = P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            LossDistribution::Exponential { rate } => (-rate * x).exp(),
            LossDistribution::Pareto { shape, scale } => (scale / (x + scale)).powf(*shape),
            LossDistribution::Lognormal { log_mean, log_sd } => {
                if x == 0.0 {
                    1.0
                } else {
                    let z = (x.ln() - log_mean) / log_sd;
                    std_normal().cdf(-z)
                }
            }
            LossDistribution::Empirical { sample } => {
                let below = sample.partition_point(|&v| v <= x);
                (sample.len() - below) as f64 / sample.len() as f64
            }
        }
    }

    /// Generalized inverse `inf {x : S(x) <= t}` for `t` in `(0, 1]`.
    pub fn quantile(&self, t: f64) -> f64 {
        debug_assert!(t > 0.0 && t <= 1.0, "quantile level out of range: {t}");
        match self {
            LossDistribution::Exponential { rate } => -t.ln() / rate,
            LossDistribution::Pareto { shape, scale } => scale * (t.powf(-1.0 / shape) - 1.0),
            LossDistribution::Lognormal { log_mean, log_sd } => {
                if t >= 1.0 {
                    return 0.0;
                }
                // symmetry keeps the deep tail accurate
                (log_mean - log_sd * normal_quantile(t)).exp()
            }
            LossDistribution::Empirical { sample } => {
                let n = sample.len();
                let k = (t * n as f64).floor() as usize;
                if k >= n {
                    0.0
                } else {
                    sample[n - 1 - k]
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            LossDistribution::Exponential { rate } => 1.0 / rate,
            LossDistribution::Pareto { shape, scale } => scale / (shape - 1.0),
            LossDistribution::Lognormal { log_mean, log_sd } => {
                (log_mean + 0.5 * log_sd * log_sd).exp()
            }
            LossDistribution::Empirical { sample } => {
                sample.iter().sum::<f64>() / sample.len() as f64
            }
        }
    }

    /// Supremum of the support (`+inf` for the parametric families).
    pub fn support_sup(&self) -> f64 {
        match self {
            LossDistribution::Empirical { sample } => *sample.last().expect("nonempty"),
            _ => f64::INFINITY,
        }
    }

    /// Mean excess `E[X - u | X > u]`, used for truncation-error bounds.
    pub fn mean_excess(&self, u: f64) -> f64 {
        match self {
            LossDistribution::Exponential { rate } => 1.0 / rate,
            LossDistribution::Pareto { shape, scale } => (u + scale) / (shape - 1.0),
            LossDistribution::Lognormal { log_mean, log_sd } => {
                let s = self.survival(u);
                if s <= 0.0 || u <= 0.0 {
                    return self.mean();
                }
                let z = (u.ln() - log_mean) / log_sd;
                let partial = self.mean() * std_normal().cdf(-(z - log_sd));
                (partial / s - u).max(0.0)
            }
            LossDistribution::Empirical { sample } => {
                let exceed: Vec<f64> = sample.iter().filter(|&&x| x > u).copied().collect();
                if exceed.is_empty() {
                    0.0
                } else {
                    exceed.iter().map(|x| x - u).sum::<f64>() / exceed.len() as f64
                }
            }
        }
    }

    /// The distribution of `c * X` for `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(CedeError::InvalidParameter(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        match self {
            LossDistribution::Exponential { rate } => LossDistribution::exponential(rate / c),
            LossDistribution::Pareto { shape, scale } => LossDistribution::pareto(*shape, scale * c),
            LossDistribution::Lognormal { log_mean, log_sd } => {
                LossDistribution::lognormal(log_mean + c.ln(), *log_sd)
            }
            LossDistribution::Empirical { sample } => {
                LossDistribution::empirical(sample.iter().map(|x| x * c).collect())
            }
        }
    }

    /// Deterministic inverse-transform sample; the same seed reproduces the
    /// same values in the same order.
    pub fn sample_losses(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(CedeError::InvalidParameter(
                "sample count must be at least 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..count)
            .map(|_| {
                let u: f64 = 1.0 - rng.gen::<f64>(); // in (0, 1]
                self.quantile(u)
            })
            .collect())
    }
}
