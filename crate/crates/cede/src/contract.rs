//! Ceded-loss contracts: nonnegative sums of stop-loss layers
//! `sum_j C_j (x - d_j)+` with slopes summing to at most one.
//!
//! Every member is increasing, convex, 1-Lipschitz, vanishes at zero and
//! never cedes more than the loss. Quota-share, stop-loss and change-loss
//! are the one-term special cases.

use serde::{Deserialize, Serialize};

use crate::error::{CedeError, Result};

/// Slope dust tolerated when validating the total-slope cap, so round-trip
/// serialized contracts are not rejected.
const SLOPE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractTerm {
    pub slope: f64,
    pub retention: f64,
}

/// A validated ceded-loss function; terms are kept sorted by retention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ContractTerm>", into = "Vec<ContractTerm>")]
pub struct CededContract {
    terms: Vec<ContractTerm>,
}

impl CededContract {
    pub fn new(mut terms: Vec<ContractTerm>) -> Result<Self> {
        for t in &terms {
            if !t.slope.is_finite() || t.slope < 0.0 {
                return Err(CedeError::InvalidParameter(format!(
                    "contract slope must be finite and nonnegative, got {}",
                    t.slope
                )));
            }
            if !t.retention.is_finite() || t.retention < 0.0 {
                return Err(CedeError::InvalidParameter(format!(
                    "contract retention must be finite and nonnegative, got {}",
                    t.retention
                )));
            }
        }
        let total: f64 = terms.iter().map(|t| t.slope).sum();
        if total > 1.0 + SLOPE_SLACK {
            return Err(CedeError::InvalidParameter(format!(
                "contract slopes sum to {total}, exceeding 1"
            )));
        }
        terms.retain(|t| t.slope > 0.0);
        terms.sort_by(|a, b| a.retention.total_cmp(&b.retention));
        Ok(CededContract { terms })
    }

    /// The null contract: nothing is ceded.
    pub fn zero() -> Self {
        CededContract { terms: vec![] }
    }

    /// Proportional cession `c * x`.
    pub fn quota_share(c: f64) -> Result<Self> {
        CededContract::new(vec![ContractTerm {
            slope: c,
            retention: 0.0,
        }])
    }

    /// Full cession of the layer above `d`: `(x - d)+`.
    pub fn stop_loss(d: f64) -> Result<Self> {
        CededContract::new(vec![ContractTerm {
            slope: 1.0,
            retention: d,
        }])
    }

    /// Partial cession of the layer above `d`: `c * (x - d)+`.
    pub fn change_loss(c: f64, d: f64) -> Result<Self> {
        CededContract::new(vec![ContractTerm {
            slope: c,
            retention: d,
        }])
    }

    /// Ceded amount at loss `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.slope * (x - t.retention).max(0.0))
            .sum()
    }

    pub fn terms(&self) -> &[ContractTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_slope(&self) -> f64 {
        self.terms.iter().map(|t| t.slope).sum()
    }

    /// Retention points, i.e. the kinks of the payout function.
    pub fn kinks(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = self.terms.iter().map(|t| t.retention).collect();
        ks.dedup();
        ks
    }

    /// Slope of the retained loss `x - h(x)` just right of `x`.
    pub fn retained_slope(&self, x: f64) -> f64 {
        let ceded: f64 = self
            .terms
            .iter()
            .filter(|t| t.retention <= x)
            .map(|t| t.slope)
            .sum();
        1.0 - ceded
    }
}

impl TryFrom<Vec<ContractTerm>> for CededContract {
    type Error = CedeError;

    fn try_from(terms: Vec<ContractTerm>) -> Result<Self> {
        CededContract::new(terms)
    }
}

impl From<CededContract> for Vec<ContractTerm> {
    fn from(c: CededContract) -> Self {
        c.terms
    }
}
