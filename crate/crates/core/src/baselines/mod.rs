//! Comparison protocols.
//!
//! [`spm`] (segment pairs) and [`mcm`] (multiple channels) identify heavy
//! hitters without prefix extension. Both can either split each user's
//! budget between identification and a final full-value test, or hold out
//! a fraction of users for the final test ([`crate::result::Variant`]).
//! [`joint`] holds the joint-count estimators the pair phase relies on.

pub mod joint;
pub mod mcm;
pub mod spm;

pub use joint::{joint_estimate, joint_estimate_multi, JointEstimateInput};
pub use mcm::{mcm_channel, mcm_client_report, mcm_run, plan_mcm, McmConfig, McmReport};
pub use spm::{plan_spm, spm_client_report, spm_run, SpmConfig, SpmReport};

use crate::error::{Error, Result};

/// Checks a held-out fraction and that both phases keep at least one user.
pub(crate) fn check_fraction(fraction: f64, n: usize) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "held-out fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let held = (fraction * n as f64).round() as usize;
    if n > 0 && (held == 0 || held == n) {
        return Err(Error::invalid(format!(
            "held-out fraction {fraction} leaves an empty phase among {n} users"
        )));
    }
    Ok(())
}
