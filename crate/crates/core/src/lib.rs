//! Heavy-hitter identification under local differential privacy.
//!
//! The crate provides the frequency oracles users perturb their values with
//! ([`oracle`]), the prefix extending protocol ([`pem`]) and its two
//! comparison protocols ([`baselines`]), the analytic utility model
//! ([`analysis`]), output metrics ([`metrics`]), synthetic and file-backed
//! datasets ([`datagen`]) and the experiment runner behind the `ldphh` binary
//! ([`harness`]).
//!
//! Every randomized routine takes an explicit master seed; identical inputs
//! produce identical outputs.

pub mod analysis;
pub mod baselines;
pub mod bits;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod pem;
pub mod result;
pub mod rng;

pub use bits::BitValue;
pub use error::{Error, Result};
pub use oracle::PrivacyBudget;
