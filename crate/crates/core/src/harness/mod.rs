//! Experiment orchestration behind the `ldphh` binary: repeated seeded runs,
//! metric rows, summaries and output encoding.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{self, DistributionSpec, WeightScheme};
use crate::baselines::{mcm_run, plan_mcm, plan_spm, spm_run, McmConfig};
use crate::bits::BitValue;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, exact_counts, GroundTruth};
use crate::oracle::PrivacyBudget;
use crate::pem::{self, gamma_for, PemConfig};
use crate::result::{Protocol, ProtocolConfig, RunResult, Variant};

pub const CSV_HEADER: [&str; 11] = [
    "protocol", "variant", "eps", "k", "theta", "seed", "f1", "ncr", "est_var", "queries", "wall_ms",
];

/// Default query budget, `2^20`.
pub const DEFAULT_QUERY_LIMIT: u64 = 1 << 20;

/// Process exit status for an error: 3 for infeasible configurations, 4 for
/// file problems, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => 3,
        Error::Io { .. } | Error::Parse { .. } => 4,
        _ => 2,
    }
}

/// A protocol and its knobs. Unset knobs fall back to the planned defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolChoice {
    pub protocol: Protocol,
    /// Ignored by PEM.
    pub variant: Variant,
    /// Held-out users in the partition variant.
    pub final_fraction: f64,
    pub eta: Option<u32>,
    pub etas: Option<Vec<u32>>,
    pub shares: Option<Vec<f64>>,
    pub seg_len: Option<u32>,
}

impl ProtocolChoice {
    pub fn new(protocol: Protocol) -> Self {
        ProtocolChoice {
            protocol,
            variant: Variant::Split,
            final_fraction: 0.1,
            eta: None,
            etas: None,
            shares: None,
            seg_len: None,
        }
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn eta(mut self, eta: u32) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn etas(mut self, etas: Vec<u32>) -> Self {
        self.etas = Some(etas);
        self
    }

    pub fn shares(mut self, shares: Vec<f64>) -> Self {
        self.shares = Some(shares);
        self
    }

    /// Concrete configuration for `m`-bit values.
    pub fn build(&self, m: u32, k: usize, eps: PrivacyBudget, query_limit: u64) -> Result<ProtocolConfig> {
        match self.protocol {
            Protocol::Pem => Ok(ProtocolConfig::Pem(self.build_pem(m, k, eps, query_limit)?)),
            Protocol::Spm => {
                let cfg = plan_spm(m, k, query_limit, eps)?;
                Ok(ProtocolConfig::Spm(match self.variant {
                    Variant::Split => cfg,
                    Variant::Partition => cfg.partition(self.final_fraction)?,
                }))
            }
            Protocol::Mcm => {
                let cfg = match self.seg_len {
                    Some(l) => McmConfig::new(m, l, k, eps, query_limit)?,
                    None => plan_mcm(m, k, query_limit, eps)?,
                };
                Ok(ProtocolConfig::Mcm(match self.variant {
                    Variant::Split => cfg,
                    Variant::Partition => cfg.partition(self.final_fraction)?,
                }))
            }
        }
    }

    fn build_pem(&self, m: u32, k: usize, eps: PrivacyBudget, query_limit: u64) -> Result<PemConfig> {
        let mut cfg = match (&self.etas, self.eta) {
            (Some(etas), _) => {
                let base = PemConfig::new(m, gamma_for(k), 1, k, u64::MAX, eps)?;
                let mut cfg = base.with_etas(etas.clone())?;
                cfg.query_limit = query_limit;
                cfg
            }
            (None, Some(eta)) => PemConfig::new(m, gamma_for(k), eta, k, query_limit, eps)?,
            (None, None) => pem::plan(m, k, query_limit, eps)?,
        };
        if let Some(shares) = &self.shares {
            cfg = cfg.with_shares(shares.clone())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs a built configuration; `theta` selects PEM's threshold variant.
pub fn run_protocol(dataset: &[BitValue], cfg: &ProtocolConfig, theta: Option<f64>, seed: u64) -> Result<RunResult> {
    match (cfg, theta) {
        (ProtocolConfig::Pem(c), None) => pem::run_topk(dataset, c, seed),
        (ProtocolConfig::Pem(c), Some(t)) => pem::run_threshold(dataset, c, t, seed),
        (_, Some(_)) => Err(Error::invalid("the threshold variant is only defined for pem")),
        (ProtocolConfig::Spm(c), None) => spm_run(dataset, c, seed),
        (ProtocolConfig::Mcm(c), None) => mcm_run(dataset, c, seed),
    }
}

/// Exact value counts of a dataset, most frequent first.
#[derive(Clone, Debug)]
pub struct Truth {
    ranked: Vec<(BitValue, u64)>,
    n: usize,
}

impl Truth {
    pub fn new(values: &[BitValue]) -> Self {
        Truth {
            ranked: exact_counts(values),
            n: values.len(),
        }
    }

    pub fn top(&self, k: usize) -> GroundTruth {
        GroundTruth::new(self.ranked[..k.min(self.ranked.len())].to_vec()).expect("ranked counts")
    }

    /// Values whose frequency exceeds `theta`.
    pub fn above(&self, theta: f64) -> GroundTruth {
        let keep = self
            .ranked
            .iter()
            .take_while(|e| e.1 as f64 / self.n as f64 > theta)
            .count();
        self.top(keep)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub protocols: Vec<ProtocolChoice>,
    pub eps: Vec<f64>,
    pub k: usize,
    pub theta: Option<f64>,
    pub reps: u32,
    pub master_seed: u64,
    pub query_limit: u64,
    /// Record wall-clock times; off by default so outputs are reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.protocols.is_empty() {
            return Err(Error::invalid("at least one protocol is required"));
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::invalid(format!("ε values must be positive, got {:?}", self.eps)));
        }
        if self.reps == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(())
    }

    /// Seed of repetition `r`.
    pub fn rep_seed(&self, r: u32) -> u64 {
        self.master_seed.wrapping_add(r as u64)
    }
}

/// `seed` column: a repetition seed or a summary label.
#[derive(Clone, Debug, PartialEq)]
pub enum RowSeed {
    Rep(u64),
    Mean,
    Std,
}

impl Serialize for RowSeed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RowSeed::Rep(x) => s.serialize_u64(*x),
            RowSeed::Mean => s.serialize_str("mean"),
            RowSeed::Std => s.serialize_str("std"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub protocol: Protocol,
    /// `topk` or `threshold` for PEM, the budget variant for the baselines.
    pub variant: String,
    pub eps: f64,
    pub k: usize,
    pub theta: Option<f64>,
    pub seed: RowSeed,
    pub f1: f64,
    pub ncr: f64,
    pub est_var: Option<f64>,
    pub queries: f64,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn is_summary(&self) -> bool {
        !matches!(self.seed, RowSeed::Rep(_))
    }

    fn fields(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let seed = match &self.seed {
            RowSeed::Rep(s) => s.to_string(),
            RowSeed::Mean => "mean".into(),
            RowSeed::Std => "std".into(),
        };
        vec![
            self.protocol.name().into(),
            self.variant.clone(),
            self.eps.to_string(),
            self.k.to_string(),
            opt(self.theta),
            seed,
            self.f1.to_string(),
            self.ncr.to_string(),
            opt(self.est_var),
            self.queries.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

fn variant_name(choice: &ProtocolChoice, theta: Option<f64>) -> String {
    match (choice.protocol, theta) {
        (Protocol::Pem, None) => "topk".into(),
        (Protocol::Pem, Some(_)) => "threshold".into(),
        _ => choice.variant.name().into(),
    }
}

/// One repetition of one protocol at one budget.
pub fn run_row(
    dataset: &[BitValue],
    truth: &Truth,
    choice: &ProtocolChoice,
    spec: &ExperimentSpec,
    eps: f64,
    seed: u64,
    m: u32,
) -> Result<ResultRow> {
    let budget = PrivacyBudget::new(eps)?;
    let cfg = choice.build(m, spec.k, budget, spec.query_limit)?;
    let start = Instant::now();
    let result = run_protocol(dataset, &cfg, spec.theta, seed)?;
    let wall_ms = if spec.timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let (gt, k) = match spec.theta {
        Some(t) => {
            let gt = truth.above(t);
            let k = gt.len();
            (gt, k)
        }
        None => (truth.top(spec.k), spec.k),
    };
    let metrics = evaluate(&gt, &result.identified, k);
    Ok(ResultRow {
        protocol: choice.protocol,
        variant: variant_name(choice, spec.theta),
        eps,
        k: spec.k,
        theta: spec.theta,
        seed: RowSeed::Rep(seed),
        f1: metrics.f1,
        ncr: metrics.ncr,
        est_var: metrics.var,
        queries: result.queries_used as f64,
        wall_ms,
    })
}

/// Every protocol × budget × repetition, each group followed by its mean
/// and standard deviation rows.
pub fn run_experiment(dataset: &[BitValue], m: u32, spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let truth = Truth::new(dataset);
    let mut rows = Vec::new();
    for choice in &spec.protocols {
        for &eps in &spec.eps {
            let group: Vec<ResultRow> = (0..spec.reps)
                .into_par_iter()
                .map(|r| run_row(dataset, &truth, choice, spec, eps, spec.rep_seed(r), m))
                .collect::<Result<_>>()?;
            let summary = summarize(&group);
            rows.extend(group);
            rows.extend(summary);
        }
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation rows of a non-empty group.
pub fn summarize(group: &[ResultRow]) -> Vec<ResultRow> {
    let Some(first) = group.first() else {
        return Vec::new();
    };
    let col = |f: fn(&ResultRow) -> f64| mean_std(&group.iter().map(f).collect::<Vec<_>>());
    let vars: Vec<f64> = group.iter().filter_map(|r| r.est_var).collect();
    let var = (!vars.is_empty()).then(|| mean_std(&vars));
    let (f1, ncr, q, t) = (col(|r| r.f1), col(|r| r.ncr), col(|r| r.queries), col(|r| r.wall_ms));
    let row = |seed, pick: fn((f64, f64)) -> f64| ResultRow {
        seed,
        f1: pick(f1),
        ncr: pick(ncr),
        est_var: var.map(pick),
        queries: pick(q),
        wall_ms: pick(t),
        ..first.clone()
    };
    vec![row(RowSeed::Mean, |p| p.0), row(RowSeed::Std, |p| p.1)]
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::io("<output>", std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for r in rows {
        w.write_record(r.fields()).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| Error::io("<output>", e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankProb {
    pub rank: usize,
    pub f: f64,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub config: PemConfig,
    pub per_value: Vec<RankProb>,
    pub score_f1: f64,
    pub score_ncr: f64,
}

/// Analytic identification probabilities and scores of `cfg` over `n` users.
pub fn analyze(dist: &DistributionSpec, cfg: &PemConfig, n: f64) -> Result<AnalysisReport> {
    let freqs = dist.freqs()?;
    let probs = analysis::value_probs(dist, cfg, n)?;
    Ok(AnalysisReport {
        config: cfg.clone(),
        per_value: probs
            .iter()
            .enumerate()
            .map(|(j, &prob)| RankProb {
                rank: j + 1,
                f: freqs.get(j).copied().unwrap_or(0.0),
                prob,
            })
            .collect(),
        score_f1: analysis::utility_score(dist, cfg, n, WeightScheme::F1)?,
        score_ncr: analysis::utility_score(dist, cfg, n, WeightScheme::Ncr)?,
    })
}
