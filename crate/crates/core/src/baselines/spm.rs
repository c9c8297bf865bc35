//! The segment pairs method.
//!
//! Values are cut into `g` segments of `s = m/g` bits. Every user picks a
//! random pair of segments `α < β` and reports both through local hashing,
//! plus its whole value for the final test. The aggregator
//!
//! 1. keeps the `k` best patterns of every segment,
//! 2. estimates, within each pair group, the joint count of every
//!    combination of surviving patterns,
//! 3. admits combinations in decreasing estimate order, visiting the pairs
//!    round-robin in lexicographic order, until the a-priori join (a value
//!    is a candidate only if all of its segment pairs were admitted) yields
//!    more than `k` values,
//! 4. returns the `k` joined values with the best full-value estimates.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::check_fraction;
use super::joint::{joint_estimate, JointEstimateInput};
use crate::bits::BitValue;
use crate::error::{Error, Result};
use crate::oracle::olh::{digest, SeededHash};
use crate::oracle::{olh_aggregate, olh_perturb, rank_by_estimate, OlhParams, OlhReport, PrivacyBudget};
use crate::result::{Estimate, Protocol, ProtocolConfig, RunResult, Variant};
use crate::rng::{stream, tag};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpmConfig {
    pub m: u32,
    pub g: u32,
    pub s: u32,
    pub k: usize,
    pub eps: PrivacyBudget,
    pub variant: Variant,
    /// Users reserved for the final test; 0 in the split variant.
    pub final_fraction: f64,
    pub query_limit: u64,
}

impl SpmConfig {
    /// Budget-splitting configuration: three reports at ε/3 each.
    pub fn new(m: u32, g: u32, k: usize, eps: PrivacyBudget, query_limit: u64) -> Result<Self> {
        if g < 2 || m == 0 || m % g != 0 {
            return Err(Error::invalid(format!("m = {m} is not split evenly into g = {g} >= 2 segments")));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let s = m / g;
        if s > 30 {
            return Err(Error::Infeasible(format!("segments of {s} bits cannot be enumerated")));
        }
        let cfg = SpmConfig {
            m,
            g,
            s,
            k,
            eps,
            variant: Variant::Split,
            final_fraction: 0.0,
            query_limit,
        };
        let q = cfg.identification_queries();
        if q > query_limit as u128 {
            return Err(Error::Infeasible(format!(
                "segment and pair phases need {q} queries, limit is {query_limit}"
            )));
        }
        Ok(cfg)
    }

    /// Holds out `fraction` of users for the final test at full ε; the others
    /// report their two segments at ε/2 each.
    pub fn partition(mut self, fraction: f64) -> Result<Self> {
        check_fraction(fraction, 0)?;
        self.variant = Variant::Partition;
        self.final_fraction = fraction;
        Ok(self)
    }

    /// Canonical pairs `(α, β)`, 1-based, in lexicographic order.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        (1..=self.g)
            .flat_map(|a| (a + 1..=self.g).map(move |b| (a, b)))
            .collect()
    }

    /// Budgets of the full-value report and of each segment report.
    pub fn budgets(&self) -> Result<(PrivacyBudget, PrivacyBudget)> {
        match self.variant {
            Variant::Split => Ok((self.eps.split(3)?, self.eps.split(3)?)),
            Variant::Partition => Ok((self.eps, self.eps.split(2)?)),
        }
    }

    /// `g·2^s + C(g,2)·k²`.
    pub fn identification_queries(&self) -> u128 {
        let g = self.g as u128;
        g * (1u128 << self.s) + g * (g - 1) / 2 * (self.k as u128).pow(2)
    }
}

/// Smallest segment count (longest segments) that fits the query limit.
pub fn plan_spm(m: u32, k: usize, query_limit: u64, eps: PrivacyBudget) -> Result<SpmConfig> {
    (2..=m)
        .filter(|g| m % g == 0)
        .find_map(|g| SpmConfig::new(m, g, k, eps, query_limit).ok())
        .ok_or_else(|| Error::Infeasible(format!("no segmentation of m = {m} fits {query_limit} queries")))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegmentPair {
    pub alpha: u32,
    pub beta: u32,
    pub seg_a: OlhReport,
    pub seg_b: OlhReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpmReport {
    /// Full-value report; absent for identification users when users are
    /// partitioned.
    pub full: Option<OlhReport>,
    /// Segment reports; absent for held-out users.
    pub pair: Option<SegmentPair>,
}

/// One user's report. `final_user` only matters in the partition variant.
pub fn spm_client_report<R: Rng + ?Sized>(
    v: &BitValue,
    cfg: &SpmConfig,
    final_user: bool,
    rng: &mut R,
) -> Result<SpmReport> {
    if v.len() != cfg.m {
        return Err(Error::invalid(format!("value has {} bits, expected {}", v.len(), cfg.m)));
    }
    let (full_eps, seg_eps) = cfg.budgets()?;
    let full_params = OlhParams::new(full_eps)?;
    let seg_params = OlhParams::new(seg_eps)?;
    let partition = cfg.variant == Variant::Partition;
    if partition && final_user {
        return Ok(SpmReport {
            full: Some(olh_perturb(v, &full_params, rng)),
            pair: None,
        });
    }
    let pairs = cfg.pairs();
    let (alpha, beta) = pairs[rng.random_range(0..pairs.len())];
    let seg = |i: u32| v.segment((i - 1) * cfg.s, cfg.s);
    let pair = SegmentPair {
        alpha,
        beta,
        seg_a: olh_perturb(&seg(alpha), &seg_params, rng),
        seg_b: olh_perturb(&seg(beta), &seg_params, rng),
    };
    let full = (!partition).then(|| olh_perturb(v, &full_params, rng));
    Ok(SpmReport {
        full,
        pair: Some(pair),
    })
}

fn collect(dataset: &[BitValue], cfg: &SpmConfig, master_seed: u64) -> Result<Vec<SpmReport>> {
    if let Some(bad) = dataset.iter().find(|v| v.len() != cfg.m) {
        return Err(Error::invalid(format!("value {bad:?} does not have {} bits", cfg.m)));
    }
    dataset
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = stream(master_seed, tag::SPM, i as u64);
            let final_user = rng.random::<f64>() < cfg.final_fraction;
            spm_client_report(v, cfg, final_user, &mut rng)
        })
        .collect()
}

/// Bitset over a pair group's users: bit `u` is set when user `u`'s report
/// supports the pattern.
fn support_bits(reports: &[OlhReport], pattern: &BitValue, d_prime: u32) -> Vec<u64> {
    let x = digest(pattern);
    let mut bits = vec![0u64; reports.len().div_ceil(64)];
    for (u, r) in reports.iter().enumerate() {
        if SeededHash::new(r.seed, d_prime).bucket_of_digest(x) == r.y {
            bits[u / 64] |= 1 << (u % 64);
        }
    }
    bits
}

/// Ranked joint estimates of one segment pair, best first.
fn pair_ranking(
    group: &[SegmentPair],
    cand_a: &[BitValue],
    cand_b: &[BitValue],
    params: &OlhParams,
) -> Result<Vec<(usize, usize)>> {
    let ra: Vec<OlhReport> = group.iter().map(|p| p.seg_a).collect();
    let rb: Vec<OlhReport> = group.iter().map(|p| p.seg_b).collect();
    let d = params.d_prime();
    let bits_a: Vec<Vec<u64>> = cand_a.iter().map(|x| support_bits(&ra, x, d)).collect();
    let bits_b: Vec<Vec<u64>> = cand_b.iter().map(|y| support_bits(&rb, y, d)).collect();
    let n = group.len() as u64;
    let count = |b: &[u64]| b.iter().map(|w| w.count_ones() as u64).sum::<u64>();
    let marg_a: Vec<f64> = bits_a.iter().map(|b| params.estimate(count(b), n)).collect();
    let marg_b: Vec<f64> = bits_b.iter().map(|b| params.estimate(count(b), n)).collect();
    let mut scored = Vec::with_capacity(cand_a.len() * cand_b.len());
    for (i, ba) in bits_a.iter().enumerate() {
        for (j, bb) in bits_b.iter().enumerate() {
            let i_ab = ba.iter().zip(bb).map(|(x, y)| (x & y).count_ones() as u64).sum::<u64>();
            let est = joint_estimate(JointEstimateInput {
                i_ab: i_ab as f64,
                n: n as f64,
                n_a_est: marg_a[i],
                n_b_est: marg_b[j],
                p: params.p(),
                q: params.q(),
            })?;
            scored.push(((i, j), est));
        }
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| cand_a[a.0 .0].cmp(&cand_a[b.0 .0]))
            .then_with(|| cand_b[a.0 .1].cmp(&cand_b[b.0 .1]))
    });
    Ok(scored.into_iter().map(|(ij, _)| ij).collect())
}

/// Index assemblies (one pattern index per segment) all of whose segment
/// pairs were admitted. Gives up once more than `cap` assemblies exist.
fn join(
    sizes: &[usize],
    admitted: &HashMap<(usize, usize), HashSet<(usize, usize)>>,
    cap: usize,
) -> Vec<Vec<usize>> {
    let mut partial: Vec<Vec<usize>> = (0..sizes[0]).map(|x| vec![x]).collect();
    for j in 1..sizes.len() {
        let mut next = Vec::new();
        for a in &partial {
            for x in 0..sizes[j] {
                let ok = a
                    .iter()
                    .enumerate()
                    .all(|(i, &xi)| admitted.get(&(i, j)).is_some_and(|s| s.contains(&(xi, x))));
                if ok {
                    let mut b = a.clone();
                    b.push(x);
                    next.push(b);
                }
            }
            if next.len() > cap {
                break;
            }
        }
        partial = next;
        if partial.is_empty() {
            break;
        }
    }
    partial
}

/// Runs the protocol and returns the top-`k` values.
pub fn spm_run(dataset: &[BitValue], cfg: &SpmConfig, master_seed: u64) -> Result<RunResult> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if cfg.variant == Variant::Partition {
        check_fraction(cfg.final_fraction, dataset.len())?;
    }
    let reports = collect(dataset, cfg, master_seed)?;
    let (full_eps, seg_eps) = cfg.budgets()?;
    let seg_params = OlhParams::new(seg_eps)?;
    let full_params = OlhParams::new(full_eps)?;
    let g = cfg.g as usize;
    let mut queries = 0u64;

    let mut per_segment: Vec<Vec<OlhReport>> = vec![Vec::new(); g];
    for p in reports.iter().filter_map(|r| r.pair) {
        per_segment[p.alpha as usize - 1].push(p.seg_a);
        per_segment[p.beta as usize - 1].push(p.seg_b);
    }
    let patterns: Vec<BitValue> = BitValue::all(cfg.s)?.collect();
    let mut cands: Vec<Vec<BitValue>> = Vec::with_capacity(g);
    for seg in &per_segment {
        let est = olh_aggregate(seg, &patterns, &seg_params)?.estimates(&seg_params);
        queries += patterns.len() as u64;
        let top = rank_by_estimate(&patterns, &est, cfg.k);
        cands.push(top.iter().map(|&i| patterns[i]).collect());
    }

    let pairs = cfg.pairs();
    let mut groups: Vec<Vec<SegmentPair>> = vec![Vec::new(); pairs.len()];
    let index: HashMap<(u32, u32), usize> = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    for p in reports.iter().filter_map(|r| r.pair) {
        groups[index[&(p.alpha, p.beta)]].push(p);
    }
    let rankings: Vec<Vec<(usize, usize)>> = pairs
        .par_iter()
        .zip(&groups)
        .map(|(&(a, b), group)| {
            pair_ranking(group, &cands[a as usize - 1], &cands[b as usize - 1], &seg_params)
        })
        .collect::<Result<_>>()?;
    queries += rankings.iter().map(|r| r.len() as u64).sum::<u64>();

    let sizes: Vec<usize> = cands.iter().map(Vec::len).collect();
    let mut admitted: HashMap<(usize, usize), HashSet<(usize, usize)>> = HashMap::new();
    let depth = rankings.iter().map(Vec::len).max().unwrap_or(0);
    let cap = cfg.k.max(1) * 64;
    let mut joined = Vec::new();
    'outer: for t in 0..depth {
        for (pi, &(a, b)) in pairs.iter().enumerate() {
            let Some(&ij) = rankings[pi].get(t) else { continue };
            admitted
                .entry((a as usize - 1, b as usize - 1))
                .or_default()
                .insert(ij);
            if admitted.len() == pairs.len() {
                joined = join(&sizes, &admitted, cap);
                if joined.len() > cfg.k {
                    break 'outer;
                }
            }
        }
    }

    let full_values: Vec<BitValue> = joined
        .iter()
        .map(|a| {
            a.iter()
                .enumerate()
                .try_fold(BitValue::EMPTY, |acc, (j, &x)| acc.concat(&cands[j][x]))
        })
        .collect::<Result<_>>()?;
    let full_reports: Vec<OlhReport> = reports.iter().filter_map(|r| r.full).collect();
    let identified = if full_values.is_empty() {
        Vec::new()
    } else {
        queries += full_values.len() as u64;
        let est = olh_aggregate(&full_reports, &full_values, &full_params)?.estimates(&full_params);
        let scale = if full_reports.is_empty() {
            0.0
        } else {
            dataset.len() as f64 / full_reports.len() as f64
        };
        rank_by_estimate(&full_values, &est, cfg.k)
            .into_iter()
            .map(|i| Estimate {
                value: full_values[i],
                estimate: est[i] * scale,
            })
            .collect()
    };

    Ok(RunResult {
        protocol: Protocol::Spm,
        variant: Some(cfg.variant),
        config: ProtocolConfig::Spm(cfg.clone()),
        seed: master_seed,
        theta: None,
        identified,
        metrics: None,
        queries_used: queries,
        audit: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn four_segments_give_six_pairs() {
        let c = SpmConfig::new(32, 4, 8, eps(1.0), 1 << 16).unwrap();
        assert_eq!(c.pairs().len(), 6);
        assert_eq!(c.pairs()[0], (1, 2));
        assert_eq!(c.pairs()[5], (3, 4));
        let (full, seg) = c.budgets().unwrap();
        assert!((full.epsilon() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(full, seg);
        assert!(SpmConfig::new(30, 4, 8, eps(1.0), 1 << 16).is_err());
    }

    #[test]
    fn planning_prefers_long_segments() {
        let c = plan_spm(32, 8, 1 << 16, eps(1.0)).unwrap();
        assert_eq!((c.g, c.s), (4, 8));
        let c = plan_spm(16, 4, 1 << 16, eps(1.0)).unwrap();
        assert_eq!((c.g, c.s), (2, 8));
    }

    #[test]
    fn pairs_are_canonical_and_uniform() {
        let c = SpmConfig::new(16, 4, 4, eps(1.0), 1 << 16).unwrap();
        let v = BitValue::from_u128(0x1234, 16).unwrap();
        let n = 100_000;
        let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
        for i in 0..n {
            let mut rng = stream(1, tag::SPM, i);
            let p = spm_client_report(&v, &c, false, &mut rng).unwrap().pair.unwrap();
            assert!(p.alpha < p.beta && p.beta <= 4);
            *counts.entry((p.alpha, p.beta)).or_default() += 1;
        }
        let expected = n as f64 / 6.0;
        let stat: f64 = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        assert_eq!(counts.len(), 6);
        assert!(ChiSquared::new(5.0).unwrap().sf(stat) > 0.001);
    }

    #[test]
    fn join_requires_every_pair() {
        let sizes = [2, 2, 2];
        let mut admitted: HashMap<(usize, usize), HashSet<(usize, usize)>> = HashMap::new();
        admitted.insert((0, 1), HashSet::from([(0, 1), (1, 1)]));
        admitted.insert((0, 2), HashSet::from([(0, 0)]));
        admitted.insert((1, 2), HashSet::from([(1, 0), (1, 1)]));
        assert_eq!(join(&sizes, &admitted, 100), vec![vec![0, 1, 0]]);
    }

    #[test]
    fn recovers_dominant_values() {
        let vals = [0xa1b2u128, 0x3c4d, 0x5e6f];
        let data: Vec<BitValue> = (0..30_000)
            .map(|i| BitValue::from_u128(vals[i % 3], 16).unwrap())
            .collect();
        let c = SpmConfig::new(16, 2, 3, eps(6.0), 1 << 16).unwrap();
        let r = spm_run(&data, &c, 3).unwrap();
        let found = r.values();
        for v in vals {
            assert!(found.contains(&BitValue::from_u128(v, 16).unwrap()), "{found:?}");
        }
        assert!(r.queries_used <= c.query_limit);
        let p = c.clone().partition(0.1).unwrap();
        let r = spm_run(&data, &p, 3).unwrap();
        assert_eq!(r.variant, Some(Variant::Partition));
        assert_eq!(r.identified.len(), 3);
        assert!(c.partition(1.0).is_err());
    }

    #[test]
    fn deterministic() {
        let data: Vec<BitValue> = (0..5_000u128).map(|i| BitValue::from_u128(i % 13, 16).unwrap()).collect();
        let c = SpmConfig::new(16, 4, 4, eps(2.0), 1 << 16).unwrap();
        assert_eq!(spm_run(&data, &c, 8).unwrap().to_json(), spm_run(&data, &c, 8).unwrap().to_json());
    }
}
