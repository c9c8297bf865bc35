//! The prefix extending method.
//!
//! Users are randomly split into `g` groups. A user in group `i` reports the
//! prefix of its value of length `L_i = min(γ + i·η, m)` through local
//! hashing with the full budget. The aggregator estimates every prefix of
//! length `L_1`, keeps the best `|C_1|` as `C_1`, extends each survivor by
//! the next `L_2 − L_1` bits to form `D_2`, estimates those against group 2,
//! and so on. Candidates of the last round are whole values.
//!
//! The default schedule extends by `η` bits per round with `|C_i| = k` and
//! equal group sizes; [`PemConfig::with_etas`], [`PemConfig::with_cand_sizes`]
//! and [`PemConfig::with_shares`] override it per round.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::{BitValue, MAX_BITS};
use crate::error::{Error, Result};
use crate::oracle::{olh_aggregate, olh_perturb, rank_by_estimate, OlhParams, OlhReport, PrivacyBudget};
use crate::result::{Estimate, Protocol, ProtocolConfig, RunResult};
use crate::rng::{stream, tag};

/// Longest first-round prefix that is enumerated.
pub const MAX_FIRST_PREFIX: u32 = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PemConfig {
    pub m: u32,
    pub gamma: u32,
    pub eta: u32,
    pub g: u32,
    pub k: usize,
    pub cand_size: usize,
    pub query_limit: u64,
    pub eps: PrivacyBudget,
    /// Bits added per round; round 1 covers `γ + etas[0]` bits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cand_sizes: Option<Vec<usize>>,
    /// Fraction of users assigned to each group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shares: Option<Vec<f64>>,
}

/// One round of an expanded configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundPlan {
    pub round: u32,
    /// Length of the prefixes estimated in this round.
    pub prefix_len: u32,
    /// Bits added in this round (`γ + η_1` for the first).
    pub bits: u32,
    /// `|D_i|`.
    pub domain_size: u64,
    /// `|C_i|`.
    pub cand_size: usize,
    pub share: f64,
}

impl PemConfig {
    /// Uniform schedule with `g = ceil((m − γ)/η)`.
    pub fn new(
        m: u32,
        gamma: u32,
        eta: u32,
        k: usize,
        query_limit: u64,
        eps: PrivacyBudget,
    ) -> Result<Self> {
        if m == 0 || m > MAX_BITS {
            return Err(Error::invalid(format!("value length must be in 1..={MAX_BITS}, got {m}")));
        }
        if gamma >= m {
            return Err(Error::invalid(format!("γ = {gamma} leaves no bits to extend in m = {m}")));
        }
        if eta == 0 {
            return Err(Error::invalid("η must be at least 1"));
        }
        let cfg = PemConfig {
            m,
            gamma,
            eta,
            g: (m - gamma).div_ceil(eta),
            k,
            cand_size: k,
            query_limit,
            eps,
            etas: None,
            cand_sizes: None,
            shares: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-round extensions. `g` becomes `etas.len()`.
    pub fn with_etas(mut self, etas: Vec<u32>) -> Result<Self> {
        self.g = etas.len() as u32;
        self.eta = etas.first().copied().unwrap_or(0);
        self.etas = Some(etas);
        if self.cand_sizes.as_ref().is_some_and(|c| c.len() != self.g as usize) {
            self.cand_sizes = None;
        }
        if self.shares.as_ref().is_some_and(|s| s.len() != self.g as usize) {
            self.shares = None;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_cand_sizes(mut self, sizes: Vec<usize>) -> Result<Self> {
        self.cand_sizes = Some(sizes);
        self.validate()?;
        Ok(self)
    }

    /// Group population fractions; must be positive and sum to 1.
    pub fn with_shares(mut self, shares: Vec<f64>) -> Result<Self> {
        self.shares = Some(shares);
        self.validate()?;
        Ok(self)
    }

    pub fn etas(&self) -> Vec<u32> {
        self.etas
            .clone()
            .unwrap_or_else(|| vec![self.eta; self.g as usize])
    }

    pub fn shares(&self) -> Vec<f64> {
        self.shares
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.g as f64; self.g as usize])
    }

    pub fn cand_sizes(&self) -> Vec<usize> {
        self.cand_sizes
            .clone()
            .unwrap_or_else(|| vec![self.cand_size; self.g as usize])
    }

    /// Expands the schedule into rounds.
    pub fn rounds(&self) -> Result<Vec<RoundPlan>> {
        self.rounds_for(None)
    }

    /// Rounds of the threshold variant: intermediate candidate sets are
    /// capped at `ceil(1/θ)`.
    pub fn rounds_for(&self, theta: Option<f64>) -> Result<Vec<RoundPlan>> {
        self.check_shape()?;
        let etas = self.etas();
        let shares = self.shares();
        let mut sizes = self.cand_sizes();
        if let Some(theta) = theta {
            let k_eff = k_eff(theta)?;
            let last = sizes.len() - 1;
            for s in &mut sizes[..last] {
                *s = (*s).min(k_eff);
            }
        }
        let mut out = Vec::with_capacity(etas.len());
        let mut len = 0;
        let mut prev_keep = 0u64;
        for (i, &eta) in etas.iter().enumerate() {
            let next = if i == 0 { self.gamma + eta } else { len + eta }.min(self.m);
            let bits = next - len;
            let domain_size = if i == 0 {
                1u64 << bits
            } else {
                prev_keep.saturating_mul(1u64 << bits.min(63))
            };
            prev_keep = (sizes[i] as u64).min(domain_size);
            len = next;
            out.push(RoundPlan {
                round: i as u32 + 1,
                prefix_len: next,
                bits,
                domain_size,
                cand_size: sizes[i],
                share: shares[i],
            });
        }
        Ok(out)
    }

    /// `Σ_i |D_i|`.
    pub fn queries(&self) -> Result<u64> {
        Ok(self.rounds()?.iter().map(|r| r.domain_size).sum())
    }

    fn check_shape(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_BITS || self.gamma >= self.m {
            return Err(Error::invalid(format!("bad lengths m = {}, γ = {}", self.m, self.gamma)));
        }
        if self.k == 0 || self.cand_size == 0 {
            return Err(Error::invalid("k and the candidate set size must be at least 1"));
        }
        let etas = self.etas();
        let g = self.g as usize;
        if g == 0 || etas.len() != g || etas.contains(&0) {
            return Err(Error::invalid(format!("round schedule {etas:?} does not match g = {g}")));
        }
        let before_last: u32 = self.gamma + etas[..g - 1].iter().sum::<u32>();
        if before_last >= self.m || before_last + etas[g - 1] < self.m {
            return Err(Error::invalid(format!(
                "schedule γ = {}, η = {etas:?} does not end exactly at m = {}",
                self.gamma, self.m
            )));
        }
        if (self.gamma + etas[0]).min(self.m) > MAX_FIRST_PREFIX {
            return Err(Error::Infeasible(format!(
                "first round would enumerate 2^{} prefixes",
                self.gamma + etas[0]
            )));
        }
        if let Some(sizes) = &self.cand_sizes {
            if sizes.len() != g || sizes.contains(&0) {
                return Err(Error::invalid(format!("candidate sizes {sizes:?} do not match g = {g}")));
            }
        }
        if let Some(shares) = &self.shares {
            let total: f64 = shares.iter().sum();
            if shares.len() != g
                || shares.iter().any(|s| !(s.is_finite() && *s > 0.0))
                || (total - 1.0).abs() > 1e-9
            {
                return Err(Error::invalid(format!(
                    "group shares {shares:?} must be {g} positive fractions summing to 1"
                )));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.queries()?;
        if q > self.query_limit {
            return Err(Error::Infeasible(format!(
                "schedule needs {q} queries, limit is {}",
                self.query_limit
            )));
        }
        Ok(())
    }
}

fn k_eff(theta: f64) -> Result<usize> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {theta}")));
    }
    Ok((1.0 / theta).ceil() as usize)
}

/// `ceil(log2 k)`.
pub fn gamma_for(k: usize) -> u32 {
    k.max(1).next_power_of_two().trailing_zeros()
}

/// Cost bound `2^{γ+η}·ceil((m−γ)/η)` used to choose η.
pub fn query_bound(m: u32, gamma: u32, eta: u32) -> Option<u128> {
    if gamma + eta >= 127 {
        return None;
    }
    (1u128 << (gamma + eta)).checked_mul((m - gamma).div_ceil(eta) as u128)
}

/// The default configuration: `γ = ceil(log2 k)`, `|C_i| = k`, and the
/// largest `η` whose query bound fits `query_limit`.
pub fn plan(m: u32, k: usize, query_limit: u64, eps: PrivacyBudget) -> Result<PemConfig> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if m == 0 || m > MAX_BITS {
        return Err(Error::invalid(format!("value length must be in 1..={MAX_BITS}, got {m}")));
    }
    let gamma = gamma_for(k);
    if gamma >= m {
        return Err(Error::Infeasible(format!(
            "k = {k} needs γ = {gamma} bits, but values have only {m}"
        )));
    }
    let eta = (1..=m - gamma)
        .rev()
        .find(|&eta| {
            gamma + eta <= MAX_FIRST_PREFIX
                && query_bound(m, gamma, eta).is_some_and(|q| q <= query_limit as u128)
        })
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no η fits the query limit {query_limit} for m = {m}, k = {k}"
            ))
        })?;
    PemConfig::new(m, gamma, eta, k, query_limit, eps)
}

/// Splits `total` bits into `g` near-equal extensions, larger ones first.
pub fn balanced_etas(total: u32, g: u32) -> Result<Vec<u32>> {
    if g == 0 || g > total {
        return Err(Error::invalid(format!("cannot split {total} bits into {g} rounds")));
    }
    let (base, extra) = (total / g, total % g);
    Ok((0..g).map(|i| base + u32::from(i < extra)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PemReport {
    pub group: u32,
    pub inner: OlhReport,
}

/// A round's surviving prefixes with their (group-level) estimates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateSet {
    pub round: u32,
    pub prefixes: Vec<BitValue>,
    pub estimates: Vec<f64>,
}

fn user_rng(master_seed: u64, user_index: u64) -> ChaCha8Rng {
    stream(master_seed, tag::PEM, user_index)
}

fn draw_group<R: Rng + ?Sized>(rng: &mut R, g: u32, shares: Option<&[f64]>) -> u32 {
    match shares {
        None => rng.random_range(1..=g),
        Some(shares) => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, s) in shares.iter().enumerate() {
                acc += s;
                if u < acc {
                    return i as u32 + 1;
                }
            }
            g
        }
    }
}

/// The group of user `user_index`, uniform over `1..=g`.
pub fn assign_group(user_index: u64, g: u32, master_seed: u64) -> Result<u32> {
    if g == 0 {
        return Err(Error::invalid("g must be at least 1"));
    }
    Ok(draw_group(&mut user_rng(master_seed, user_index), g, None))
}

/// A user's report for `group` (1-based).
pub fn client_report<R: Rng + ?Sized>(
    v: &BitValue,
    group: u32,
    cfg: &PemConfig,
    rng: &mut R,
) -> Result<PemReport> {
    let rounds = cfg.rounds()?;
    let plan = rounds
        .get((group as usize).wrapping_sub(1))
        .ok_or_else(|| Error::invalid(format!("group {group} outside 1..={}", cfg.g)))?;
    if v.len() != cfg.m {
        return Err(Error::invalid(format!("value has {} bits, expected {}", v.len(), cfg.m)));
    }
    let params = OlhParams::new(cfg.eps)?;
    Ok(PemReport {
        group,
        inner: olh_perturb(&v.prefix(plan.prefix_len), &params, rng),
    })
}

/// Simulates every user and buckets the reports by group.
pub fn collect_reports(
    dataset: &[BitValue],
    cfg: &PemConfig,
    master_seed: u64,
) -> Result<Vec<Vec<OlhReport>>> {
    let rounds = cfg.rounds()?;
    if let Some(bad) = dataset.iter().find(|v| v.len() != cfg.m) {
        return Err(Error::invalid(format!("value {bad:?} does not have {} bits", cfg.m)));
    }
    let params = OlhParams::new(cfg.eps)?;
    let lens: Vec<u32> = rounds.iter().map(|r| r.prefix_len).collect();
    let shares = cfg.shares.as_deref();
    let tagged: Vec<(u32, OlhReport)> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = user_rng(master_seed, i as u64);
            let group = draw_group(&mut rng, cfg.g, shares);
            let rep = olh_perturb(&v.prefix(lens[group as usize - 1]), &params, &mut rng);
            (group, rep)
        })
        .collect();
    let mut groups = vec![Vec::new(); cfg.g as usize];
    for (group, rep) in tagged {
        groups[group as usize - 1].push(rep);
    }
    Ok(groups)
}

/// `D_{i+1}`: every prefix of `prev` followed by every pattern of
/// `min(η, m − len)` bits.
pub fn extend_candidates(prev: &CandidateSet, eta: u32, m: u32) -> Result<Vec<BitValue>> {
    let Some(first) = prev.prefixes.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if len >= m || prev.prefixes.iter().any(|p| p.len() != len) {
        return Err(Error::invalid(format!(
            "candidates of length {len} cannot be extended towards m = {m}"
        )));
    }
    let bits = eta.min(m - len);
    if bits > MAX_FIRST_PREFIX {
        return Err(Error::Infeasible(format!("extension by {bits} bits")));
    }
    let mut out = Vec::with_capacity(prev.prefixes.len() << bits);
    for p in &prev.prefixes {
        for pattern in 0..1u64 << bits {
            out.push(p.extend(pattern, bits)?);
        }
    }
    Ok(out)
}

/// Estimates `domain` against one group's reports and keeps the best
/// `cand_size` prefixes.
pub fn identify_round(
    round: u32,
    reports: &[OlhReport],
    domain: &[BitValue],
    cand_size: usize,
    eps: PrivacyBudget,
) -> Result<CandidateSet> {
    let params = OlhParams::new(eps)?;
    let supports = olh_aggregate(reports, domain, &params)?;
    let estimates = supports.estimates(&params);
    let top = rank_by_estimate(domain, &estimates, cand_size);
    Ok(CandidateSet {
        round,
        prefixes: top.iter().map(|&i| domain[i]).collect(),
        estimates: top.iter().map(|&i| estimates[i]).collect(),
    })
}

/// Runs the top-k protocol.
pub fn run_topk(dataset: &[BitValue], cfg: &PemConfig, master_seed: u64) -> Result<RunResult> {
    run(dataset, cfg, None, master_seed)
}

/// Runs the threshold variant: the output keeps final candidates whose
/// estimated frequency exceeds `theta`.
pub fn run_threshold(
    dataset: &[BitValue],
    cfg: &PemConfig,
    theta: f64,
    master_seed: u64,
) -> Result<RunResult> {
    run(dataset, cfg, Some(theta), master_seed)
}

fn run(dataset: &[BitValue], cfg: &PemConfig, theta: Option<f64>, master_seed: u64) -> Result<RunResult> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    cfg.validate()?;
    let rounds = cfg.rounds_for(theta)?;
    let groups = collect_reports(dataset, cfg, master_seed)?;
    let mut audit: Vec<CandidateSet> = Vec::with_capacity(rounds.len());
    let mut queries = 0u64;
    for (plan, reports) in rounds.iter().zip(&groups) {
        let domain = match audit.last() {
            None => BitValue::all(plan.prefix_len)?.collect(),
            Some(prev) => extend_candidates(prev, plan.bits, cfg.m)?,
        };
        if domain.is_empty() {
            break;
        }
        queries += domain.len() as u64;
        audit.push(identify_round(plan.round, reports, &domain, plan.cand_size, cfg.eps)?);
    }
    let last = audit.last().expect("at least one round");
    let n_g = groups.last().map_or(0, Vec::len);
    let scale = if n_g == 0 { 0.0 } else { dataset.len() as f64 / n_g as f64 };
    let scaled = last
        .prefixes
        .iter()
        .zip(&last.estimates)
        .map(|(&value, &e)| Estimate {
            value,
            estimate: e * scale,
        });
    let identified: Vec<Estimate> = match theta {
        None => scaled.take(cfg.k).collect(),
        Some(theta) => scaled
            .filter(|e| e.estimate / dataset.len() as f64 > theta)
            .collect(),
    };
    Ok(RunResult {
        protocol: Protocol::Pem,
        variant: None,
        config: ProtocolConfig::Pem(cfg.clone()),
        seed: master_seed,
        theta,
        identified,
        metrics: None,
        queries_used: queries,
        audit,
    })
}

/// Whether every identified value's prefixes survived every earlier round.
pub fn prefix_consistent(result: &RunResult) -> bool {
    result.identified.iter().all(|e| {
        result.audit.iter().all(|c| {
            let len = c.prefixes.first().map_or(0, BitValue::len);
            c.prefixes.contains(&e.value.prefix(len))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    fn bits(s: &str) -> BitValue {
        BitValue::from_bit_str(s).unwrap()
    }

    /// Independent enumeration of the planning rule.
    fn brute_plan(m: u32, k: usize, limit: u64) -> Option<(u32, u32, u32)> {
        let gamma = (0..).find(|&g| (1u64 << g) >= k as u64).unwrap();
        if gamma >= m {
            return None;
        }
        let mut best = None;
        for eta in 1..=m - gamma {
            let g = (m - gamma + eta - 1) / eta;
            let q = 2f64.powi((gamma + eta) as i32) * g as f64;
            if q <= limit as f64 {
                best = Some((gamma, eta, g));
            }
        }
        best
    }

    #[test]
    fn plan_examples() {
        let c = plan(64, 32, 1 << 20, eps(1.0)).unwrap();
        assert_eq!((c.gamma, c.eta, c.g), (5, 12, 5));
        assert_eq!(brute_plan(64, 32, 1 << 20), Some((5, 12, 5)));
        let c = plan(16, 16, 1 << 20, eps(1.0)).unwrap();
        assert_eq!((c.gamma, c.eta, c.g), (4, 12, 1));
        assert!(matches!(plan(128, 1 << 18, 1 << 20, eps(1.0)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn plan_respects_query_budget() {
        let c = plan(64, 32, 1 << 20, eps(1.0)).unwrap();
        let rounds = c.rounds().unwrap();
        assert_eq!(rounds.len(), 5);
        assert_eq!(rounds[0].domain_size, 1 << 17);
        assert_eq!(rounds[1].domain_size, 32 << 12);
        assert_eq!(rounds.last().unwrap().prefix_len, 64);
        assert_eq!(rounds.last().unwrap().bits, 11);
        assert!(c.queries().unwrap() <= 1 << 20);
    }

    #[test]
    fn balanced_split() {
        assert_eq!(balanced_etas(12, 5).unwrap(), vec![3, 3, 2, 2, 2]);
        assert_eq!(balanced_etas(12, 1).unwrap(), vec![12]);
        assert!(balanced_etas(3, 4).is_err());
    }

    #[test]
    fn schedule_overrides_validate() {
        let c = PemConfig::new(16, 4, 6, 16, 1 << 20, eps(1.0)).unwrap();
        assert_eq!(c.g, 2);
        let c2 = c.clone().with_etas(vec![2, 10]).unwrap();
        assert_eq!(c2.rounds().unwrap()[0].domain_size, 64);
        assert_eq!(c2.rounds().unwrap()[1].domain_size, 16 << 10);
        assert!(c.clone().with_etas(vec![2, 2]).is_err());
        assert!(c.clone().with_etas(vec![12, 2]).is_err());
        assert!(c.clone().with_shares(vec![0.3, 0.3]).is_err());
        assert!(c.clone().with_shares(vec![0.3, 0.7]).is_ok());
        assert!(c.clone().with_cand_sizes(vec![8]).is_err());
        let tight = PemConfig::new(16, 4, 6, 16, 100, eps(1.0));
        assert!(matches!(tight, Err(Error::Infeasible(_))));
    }

    #[test]
    fn group_assignment() {
        for i in 0..50 {
            assert_eq!(assign_group(i, 1, 9).unwrap(), 1);
            assert_eq!(assign_group(i, 5, 9).unwrap(), assign_group(i, 5, 9).unwrap());
        }
        let n = 100_000u64;
        let mut sizes = [0u64; 5];
        for i in 0..n {
            sizes[assign_group(i, 5, 4).unwrap() as usize - 1] += 1;
        }
        let sd = (n as f64 * 0.2 * 0.8).sqrt();
        for s in sizes {
            assert!((s as f64 - 20_000.0).abs() < 4.0 * sd, "{sizes:?}");
        }
    }

    #[test]
    fn client_prefix_lengths() {
        let c = PemConfig::new(24, 4, 10, 16, 1 << 20, eps(1.0)).unwrap();
        let v = BitValue::from_u128(0xabcdef, 24).unwrap();
        let mut rng = user_rng(0, 0);
        assert_eq!(c.rounds().unwrap()[0].prefix_len, 14);
        assert_eq!(c.rounds().unwrap()[1].prefix_len, 24);
        assert!(client_report(&v, 2, &c, &mut rng).is_ok());
        assert!(client_report(&v, 3, &c, &mut rng).is_err());
        assert!(client_report(&v, 0, &c, &mut rng).is_err());
    }

    #[test]
    fn extension_examples() {
        let prev = CandidateSet {
            round: 1,
            prefixes: vec![bits("01")],
            estimates: vec![0.0],
        };
        let out: Vec<String> = extend_candidates(&prev, 2, 8)
            .unwrap()
            .iter()
            .map(|v| v.to_string())
            .collect();
        assert_eq!(out, ["0100", "0101", "0110", "0111"]);
        let clipped = extend_candidates(&prev, 5, 4).unwrap();
        assert_eq!(clipped.len(), 4);
        let empty = CandidateSet {
            round: 1,
            prefixes: vec![],
            estimates: vec![],
        };
        assert!(extend_candidates(&empty, 3, 8).unwrap().is_empty());
        let full = CandidateSet {
            round: 1,
            prefixes: vec![bits("0101")],
            estimates: vec![0.0],
        };
        assert!(extend_candidates(&full, 2, 4).is_err());
    }

    #[test]
    fn small_domain_returns_everything() {
        let domain: Vec<BitValue> = BitValue::all(3).unwrap().collect();
        let c = identify_round(1, &[], &domain, 16, eps(1.0)).unwrap();
        assert_eq!(c.prefixes.len(), 8);
        let c = identify_round(1, &[], &domain, 3, eps(1.0)).unwrap();
        assert_eq!(c.prefixes.len(), 3);
    }

    #[test]
    fn dominant_value_ranks_first() {
        let v = BitValue::from_u128(0b1011_0110_01, 10).unwrap();
        let domain: Vec<BitValue> = BitValue::all(10).unwrap().collect();
        let params = OlhParams::new(eps(4.0)).unwrap();
        let hits = (0..100u64)
            .filter(|&t| {
                let mut rng = stream(t, tag::PEM, 99);
                let reports: Vec<_> = (0..10_000).map(|_| olh_perturb(&v, &params, &mut rng)).collect();
                identify_round(1, &reports, &domain, 4, eps(4.0)).unwrap().prefixes[0] == v
            })
            .count();
        assert!(hits >= 99, "{hits}");
    }

    #[test]
    fn constant_dataset_always_found() {
        let v = BitValue::from_u128(0xbeef, 16).unwrap();
        let data = vec![v; 2_000];
        let cfg = PemConfig::new(16, 2, 7, 4, 1 << 16, eps(2.0)).unwrap();
        for seed in 0..100 {
            let r = run_topk(&data, &cfg, seed).unwrap();
            assert!(r.values().contains(&v), "seed {seed}");
            assert!(prefix_consistent(&r));
            assert_eq!(r.queries_used, cfg.queries().unwrap());
        }
    }

    #[test]
    fn more_slots_than_values_covers_all() {
        let vals: Vec<BitValue> = [3u128, 900, 4000].iter().map(|&x| BitValue::from_u128(x, 12).unwrap()).collect();
        let data: Vec<BitValue> = (0..6_000).map(|i| vals[i % 3]).collect();
        let cfg = PemConfig::new(12, 3, 5, 8, 1 << 16, eps(3.0)).unwrap();
        let mut covered = 0;
        for seed in 0..50 {
            let r = run_topk(&data, &cfg, seed).unwrap();
            assert_eq!(r.identified.len(), 8);
            covered += vals.iter().all(|v| r.values().contains(v)) as usize;
        }
        assert!(covered >= 48, "{covered}");
    }

    #[test]
    fn threshold_above_everything_is_empty() {
        let data: Vec<BitValue> = (0..10_000u128).map(|i| BitValue::from_u128(i % 50, 12).unwrap()).collect();
        let cfg = PemConfig::new(12, 4, 4, 16, 1 << 16, eps(2.0)).unwrap();
        let empty = (0..100)
            .filter(|&s| run_threshold(&data, &cfg, 0.5, s).unwrap().identified.is_empty())
            .count();
        assert!(empty >= 95, "{empty}");
        assert!(run_threshold(&data, &cfg, 0.0, 0).is_err());
    }

    #[test]
    fn threshold_limits_intermediate_sets() {
        let cfg = PemConfig::new(16, 4, 4, 16, 1 << 20, eps(2.0)).unwrap();
        let r = cfg.rounds_for(Some(0.2)).unwrap();
        assert_eq!(r[0].cand_size, 5);
        assert_eq!(r[1].domain_size, 5 << 4);
        assert_eq!(r.last().unwrap().cand_size, 16);
        let tiny = cfg.rounds_for(Some(1e-6)).unwrap();
        assert_eq!(tiny, cfg.rounds().unwrap());
    }

    #[test]
    fn runs_are_deterministic() {
        let data: Vec<BitValue> = (0..3_000u128).map(|i| BitValue::from_u128((i * i) % 97, 10).unwrap()).collect();
        let cfg = PemConfig::new(10, 2, 4, 4, 1 << 12, eps(1.0)).unwrap();
        let a = run_topk(&data, &cfg, 5).unwrap();
        let b = run_topk(&data, &cfg, 5).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.audit, b.audit);
    }

    proptest! {
        #[test]
        fn plan_matches_enumeration(m in 2u32..80, klog in 0u32..8, llog in 4u32..24) {
            let k = 1usize << klog;
            let limit = 1u64 << llog;
            let got = plan(m, k, limit, eps(1.0));
            match brute_plan(m, k, limit) {
                Some((gamma, eta, g)) => {
                    let c = got.unwrap();
                    prop_assert_eq!((c.gamma, c.eta, c.g), (gamma, eta, g));
                    prop_assert!(c.queries().unwrap() <= limit);
                }
                None => prop_assert!(got.is_err()),
            }
        }

        #[test]
        fn extension_cardinality(n in 0usize..6, len in 1u32..10, eta in 1u32..6, m in 10u32..20) {
            let prefixes: Vec<BitValue> = (0..n).map(|i| BitValue::from_u128(i as u128 % (1 << len), len).unwrap()).collect();
            let prev = CandidateSet { round: 1, estimates: vec![0.0; n], prefixes };
            let out = extend_candidates(&prev, eta, m).unwrap();
            prop_assert_eq!(out.len(), n << eta.min(m - len));
        }
    }
}
