//! Protocol outputs.

use serde::{Serialize, Serializer};

use crate::baselines::{McmConfig, SpmConfig};
use crate::bits::BitValue;
use crate::pem::{CandidateSet, PemConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Pem,
    Spm,
    Mcm,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pem => "pem",
            Protocol::Spm => "spm",
            Protocol::Mcm => "mcm",
        }
    }
}

/// How a baseline spends its budget: every user splits ε across all of its
/// sub-reports, or a fraction of users is held out for the final test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Split,
    Partition,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Split => "split",
            Variant::Partition => "partition",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProtocolConfig {
    Pem(PemConfig),
    Spm(SpmConfig),
    Mcm(McmConfig),
}

/// An identified value and its estimated population count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(rename = "value_hex", serialize_with = "hex")]
    pub value: BitValue,
    pub estimate: f64,
}

fn hex<S: Serializer>(v: &BitValue, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_hex())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub f1: f64,
    pub ncr: f64,
    /// Mean squared count error over correctly identified values; absent
    /// when nothing true was identified.
    pub var: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub protocol: Protocol,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub config: ProtocolConfig,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub identified: Vec<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    pub queries_used: u64,
    /// Per-round candidate sets, kept for prefix-consistency audits.
    #[serde(skip)]
    pub audit: Vec<CandidateSet>,
}

impl RunResult {
    pub fn values(&self) -> Vec<BitValue> {
        self.identified.iter().map(|e| e.value).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run results always serialize")
    }
}
