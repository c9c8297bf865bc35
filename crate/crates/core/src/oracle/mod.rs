//! Frequency oracles.
//!
//! Two local randomizers are provided. [`grr`] is generalized randomized
//! response over a small integer domain; [`olh`] is optimized local hashing,
//! which first hashes an arbitrary bit string into `d'` buckets with a
//! per-report public hash and then applies randomized response on the bucket.
//! [`ratio`] computes the worst-case output probability ratio of either
//! mechanism exhaustively, which is the quantity the privacy guarantee bounds.

pub mod grr;
pub mod olh;
pub mod ratio;

use serde::{Deserialize, Serialize};

use crate::bits::BitValue;
use crate::error::{Error, Result};

pub use grr::{grr_estimate, grr_perturb, grr_variance, GrrParams};
pub use olh::{
    olh_aggregate, olh_estimate, olh_hash, olh_perturb, olh_variance, OlhParams, OlhReport,
    SeededHash, SupportCounts,
};
pub use ratio::{ldp_ratio, Mechanism};

/// The privacy parameter ε, in nats.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "privacy budget must be positive and finite, got {epsilon}"
            )));
        }
        Ok(PrivacyBudget(epsilon))
    }

    #[inline]
    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// `e^ε`.
    #[inline]
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    /// The budget divided into `parts` equal shares.
    pub fn split(self, parts: u32) -> Result<Self> {
        if parts == 0 {
            return Err(Error::invalid("cannot split a budget into zero parts"));
        }
        PrivacyBudget::new(self.0 / parts as f64)
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        PrivacyBudget::new(value)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

impl std::fmt::Display for PrivacyBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Indices of the `take` best candidates, ordered by estimate descending
/// and then by value ascending.
pub fn rank_by_estimate(values: &[BitValue], estimates: &[f64], take: usize) -> Vec<usize> {
    assert_eq!(values.len(), estimates.len());
    let cmp = |&a: &usize, &b: &usize| {
        estimates[b]
            .total_cmp(&estimates[a])
            .then_with(|| values[a].cmp(&values[b]))
    };
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let take = take.min(idx.len());
    if take == 0 {
        return Vec::new();
    }
    if take < idx.len() {
        idx.select_nth_unstable_by(take - 1, cmp);
        idx.truncate(take);
    }
    idx.sort_unstable_by(cmp);
    idx
}
