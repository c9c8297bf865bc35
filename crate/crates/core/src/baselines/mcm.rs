//! The multiple channel method.
//!
//! A public hash assigns every value to one of `h = ceil(k^1.5)` channels.
//! Each user picks a random segment `ℓ` of `L` bits and sends one payload per
//! channel: its own channel carries a local-hashing report of segment `ℓ`,
//! every other channel a report drawn uniformly at random. For each channel
//! and segment the aggregator picks the pattern with the largest estimate,
//! ties going to the smaller pattern; out-of-channel users only add the
//! uniform baseline `n/d'` to every pattern. Concatenating the winners gives
//! one candidate per channel, and the final test keeps the `k` candidates
//! with the best full-value estimates.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::check_fraction;
use crate::bits::BitValue;
use crate::error::{Error, Result};
use crate::oracle::olh::{digest, noise_report, support_counts};
use crate::oracle::{olh_aggregate, olh_perturb, rank_by_estimate, OlhParams, OlhReport, PrivacyBudget};
use crate::result::{Estimate, Protocol, ProtocolConfig, RunResult, Variant};
use crate::rng::{mix64, stream, tag};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McmConfig {
    pub m: u32,
    pub h: u32,
    pub seg_len: u32,
    pub k: usize,
    pub eps: PrivacyBudget,
    pub variant: Variant,
    /// Budget of the full-value report.
    pub eps1: PrivacyBudget,
    /// Budget of the channel payloads.
    pub eps2: PrivacyBudget,
    /// Users reserved for the final test; 0 in the split variant.
    pub final_fraction: f64,
    pub channel_seed: u64,
    pub query_limit: u64,
}

/// `ceil(k^1.5)`, computed exactly.
pub fn channels_for(k: usize) -> u32 {
    let cube = (k as u128).pow(3);
    let mut r = (cube as f64).sqrt() as u128;
    while r * r > cube {
        r -= 1;
    }
    while r * r < cube {
        r += 1;
    }
    r as u32
}

impl McmConfig {
    /// Budget-splitting configuration with `ε1 = ε2 = ε/2`.
    pub fn new(m: u32, seg_len: u32, k: usize, eps: PrivacyBudget, query_limit: u64) -> Result<Self> {
        if seg_len == 0 || m == 0 || m % seg_len != 0 {
            return Err(Error::invalid(format!("m = {m} is not a multiple of the segment length {seg_len}")));
        }
        if seg_len > 30 {
            return Err(Error::Infeasible(format!("segments of {seg_len} bits cannot be enumerated")));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let half = eps.split(2)?;
        let cfg = McmConfig {
            m,
            h: channels_for(k),
            seg_len,
            k,
            eps,
            variant: Variant::Split,
            eps1: half,
            eps2: half,
            final_fraction: 0.0,
            channel_seed: 0x6368_616e_6e65_6c73,
            query_limit,
        };
        let q = cfg.query_bound();
        if q > query_limit as u128 {
            return Err(Error::Infeasible(format!("channel phase needs {q} queries, limit is {query_limit}")));
        }
        Ok(cfg)
    }

    /// Holds out `fraction` of users for the final test; everyone reports at
    /// full ε.
    pub fn partition(mut self, fraction: f64) -> Result<Self> {
        check_fraction(fraction, 0)?;
        self.variant = Variant::Partition;
        self.final_fraction = fraction;
        self.eps1 = self.eps;
        self.eps2 = self.eps;
        Ok(self)
    }

    pub fn with_channels(mut self, h: u32) -> Result<Self> {
        if h == 0 {
            return Err(Error::invalid("at least one channel is required"));
        }
        self.h = h;
        Ok(self)
    }

    pub fn with_channel_seed(mut self, seed: u64) -> Self {
        self.channel_seed = seed;
        self
    }

    pub fn segments(&self) -> u32 {
        self.m / self.seg_len
    }

    /// `h·(m/L)·2^L + h`: every channel-segment pattern plus one final
    /// candidate per channel.
    pub fn query_bound(&self) -> u128 {
        let h = self.h as u128;
        h * self.segments() as u128 * (1u128 << self.seg_len) + h
    }
}

/// Longest segments whose channel phase fits the query limit.
pub fn plan_mcm(m: u32, k: usize, query_limit: u64, eps: PrivacyBudget) -> Result<McmConfig> {
    (1..=m.min(30))
        .rev()
        .filter(|l| m % l == 0)
        .find_map(|l| McmConfig::new(m, l, k, eps, query_limit).ok())
        .ok_or_else(|| Error::Infeasible(format!("no segment length of m = {m} fits {query_limit} queries")))
}

/// Channel of `v` in `0..h`.
pub fn mcm_channel(v: &BitValue, h: u32, channel_seed: u64) -> u32 {
    ((mix64(channel_seed ^ v.key()) as u128 * h as u128) >> 64) as u32
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChannelReport {
    /// 0-based segment index `ℓ`.
    pub seg_index: u32,
    pub payloads: Vec<OlhReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McmReport {
    /// Full-value report; absent for identification users when users are
    /// partitioned.
    pub full: Option<OlhReport>,
    /// Channel payloads; absent for held-out users.
    pub channels: Option<ChannelReport>,
}

/// One user's report. `final_user` only matters in the partition variant.
pub fn mcm_client_report<R: Rng + ?Sized>(
    v: &BitValue,
    cfg: &McmConfig,
    final_user: bool,
    rng: &mut R,
) -> Result<McmReport> {
    if v.len() != cfg.m {
        return Err(Error::invalid(format!("value has {} bits, expected {}", v.len(), cfg.m)));
    }
    let full_params = OlhParams::new(cfg.eps1)?;
    let partition = cfg.variant == Variant::Partition;
    if partition && final_user {
        return Ok(McmReport {
            full: Some(olh_perturb(v, &full_params, rng)),
            channels: None,
        });
    }
    let params = OlhParams::new(cfg.eps2)?;
    let own = mcm_channel(v, cfg.h, cfg.channel_seed);
    let seg_index = rng.random_range(0..cfg.segments());
    let segment = v.segment(seg_index * cfg.seg_len, cfg.seg_len);
    let payloads = (0..cfg.h)
        .map(|c| {
            if c == own {
                olh_perturb(&segment, &params, rng)
            } else {
                noise_report(&params, rng)
            }
        })
        .collect();
    let full = (!partition).then(|| olh_perturb(v, &full_params, rng));
    Ok(McmReport {
        full,
        channels: Some(ChannelReport { seg_index, payloads }),
    })
}

/// Per channel, the winning pattern of every segment.
pub(crate) fn channel_winners(
    reports: &[McmReport],
    cfg: &McmConfig,
) -> Result<Vec<Vec<BitValue>>> {
    let params = OlhParams::new(cfg.eps2)?;
    let segs = cfg.segments() as usize;
    let patterns: Vec<BitValue> = BitValue::all(cfg.seg_len)?.collect();
    let digests: Vec<u32> = patterns.iter().map(digest).collect();
    Ok((0..cfg.h as usize)
        .into_par_iter()
        .map(|c| {
            let mut by_segment: Vec<Vec<OlhReport>> = vec![Vec::new(); segs];
            for ch in reports.iter().filter_map(|r| r.channels.as_ref()) {
                by_segment[ch.seg_index as usize].push(ch.payloads[c]);
            }
            by_segment
                .iter()
                .map(|seg| {
                    let counts = support_counts(seg, &digests, params.d_prime());
                    let n = seg.len() as u64;
                    let est: Vec<f64> = counts.iter().map(|&s| params.estimate(s, n)).collect();
                    patterns[rank_by_estimate(&patterns, &est, 1)[0]]
                })
                .collect()
        })
        .collect())
}

/// Runs the protocol and returns the top-`k` values.
pub fn mcm_run(dataset: &[BitValue], cfg: &McmConfig, master_seed: u64) -> Result<RunResult> {
    if dataset.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    if let Some(bad) = dataset.iter().find(|v| v.len() != cfg.m) {
        return Err(Error::invalid(format!("value {bad:?} does not have {} bits", cfg.m)));
    }
    if cfg.variant == Variant::Partition {
        check_fraction(cfg.final_fraction, dataset.len())?;
    }
    let reports: Vec<McmReport> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let mut rng = stream(master_seed, tag::MCM, i as u64);
            let final_user = rng.random::<f64>() < cfg.final_fraction;
            mcm_client_report(v, cfg, final_user, &mut rng)
        })
        .collect::<Result<_>>()?;

    let winners = channel_winners(&reports, cfg)?;
    let mut queries = cfg.h as u64 * cfg.segments() as u64 * (1u64 << cfg.seg_len);
    let mut candidates: Vec<BitValue> = winners
        .iter()
        .map(|segs| segs.iter().try_fold(BitValue::EMPTY, |acc, s| acc.concat(s)))
        .collect::<Result<_>>()?;
    candidates.sort_unstable();
    candidates.dedup();
    queries += candidates.len() as u64;

    let full_params = OlhParams::new(cfg.eps1)?;
    let full_reports: Vec<OlhReport> = reports.iter().filter_map(|r| r.full).collect();
    let est = olh_aggregate(&full_reports, &candidates, &full_params)?.estimates(&full_params);
    let scale = if full_reports.is_empty() {
        0.0
    } else {
        dataset.len() as f64 / full_reports.len() as f64
    };
    let identified = rank_by_estimate(&candidates, &est, cfg.k)
        .into_iter()
        .map(|i| Estimate {
            value: candidates[i],
            estimate: est[i] * scale,
        })
        .collect();

    Ok(RunResult {
        protocol: Protocol::Mcm,
        variant: Some(cfg.variant),
        config: ProtocolConfig::Mcm(cfg.clone()),
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

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn channel_counts() {
        assert_eq!(channels_for(16), 64);
        assert_eq!(channels_for(8), 23);
        assert_eq!(channels_for(1), 1);
        assert_eq!(channels_for(4), 8);
        assert_eq!(channels_for(2), 3);
    }

    #[test]
    fn planning_picks_longest_feasible_segment() {
        let c = plan_mcm(32, 8, 1 << 16, eps(1.0)).unwrap();
        assert_eq!((c.h, c.seg_len), (23, 8));
        assert!(c.query_bound() <= 1 << 16);
        assert_eq!(c.eps1, eps(0.5));
        let p = c.partition(0.1).unwrap();
        assert_eq!((p.eps1, p.eps2), (eps(1.0), eps(1.0)));
    }

    #[test]
    fn channel_assignment_deterministic() {
        let v = BitValue::from_u128(77, 16).unwrap();
        let c = mcm_channel(&v, 64, 5);
        assert!(c < 64);
        assert_eq!(c, mcm_channel(&v, 64, 5));
    }

    fn pick_pair(h: u32, seed: u64, same: bool) -> (BitValue, BitValue) {
        let a = BitValue::from_u128(0x1234, 16).unwrap();
        let ca = mcm_channel(&a, h, seed);
        let b = (0..u16::MAX as u128)
            .map(|x| BitValue::from_u128(x, 16).unwrap())
            .find(|b| *b != a && (mcm_channel(b, h, seed) == ca) == same && b.segment(0, 8) != a.segment(0, 8) && b.segment(8, 8) != a.segment(8, 8))
            .unwrap();
        (a, b)
    }

    #[test]
    fn separate_channels_do_not_contaminate() {
        let cfg = McmConfig::new(16, 8, 2, eps(8.0), 1 << 16).unwrap().with_channel_seed(9);
        let (a, b) = pick_pair(cfg.h, 9, false);
        let data: Vec<BitValue> = (0..6_000).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let reports: Vec<McmReport> = data
            .iter()
            .enumerate()
            .map(|(i, v)| mcm_client_report(v, &cfg, false, &mut stream(2, tag::MCM, i as u64)).unwrap())
            .collect();
        let w = channel_winners(&reports, &cfg).unwrap();
        let join = |segs: &Vec<BitValue>| segs[0].concat(&segs[1]).unwrap();
        assert_eq!(join(&w[mcm_channel(&a, cfg.h, 9) as usize]), a);
        assert_eq!(join(&w[mcm_channel(&b, cfg.h, 9) as usize]), b);
    }

    #[test]
    fn shared_channel_mixes_values() {
        let cfg = McmConfig::new(16, 8, 2, eps(8.0), 1 << 16).unwrap().with_channel_seed(9);
        let (a, b) = pick_pair(cfg.h, 9, true);
        let data: Vec<BitValue> = (0..6_000).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let reports: Vec<McmReport> = data
            .iter()
            .enumerate()
            .map(|(i, v)| mcm_client_report(v, &cfg, false, &mut stream(2, tag::MCM, i as u64)).unwrap())
            .collect();
        let w = channel_winners(&reports, &cfg).unwrap();
        let segs = &w[mcm_channel(&a, cfg.h, 9) as usize];
        for (j, s) in segs.iter().enumerate() {
            let (sa, sb) = (a.segment(8 * j as u32, 8), b.segment(8 * j as u32, 8));
            assert!(*s == sa || *s == sb);
        }
    }

    #[test]
    fn bitwise_segments_vote() {
        let cfg = McmConfig::new(8, 1, 1, eps(4.0), 1 << 16).unwrap();
        let v = BitValue::from_u128(0b1011_0010, 8).unwrap();
        let r = mcm_run(&vec![v; 4_000], &cfg, 1).unwrap();
        assert_eq!(r.values(), vec![v]);
    }

    #[test]
    fn recovers_dominant_values_in_both_variants() {
        let c = McmConfig::new(16, 8, 2, eps(6.0), 1 << 16).unwrap().with_channel_seed(9);
        let (a, b) = pick_pair(c.h, 9, false);
        let data: Vec<BitValue> = (0..20_000).map(|i| if i % 2 == 0 { a } else { b }).collect();
        for cfg in [c.clone(), c.partition(0.1).unwrap()] {
            let r = mcm_run(&data, &cfg, 4).unwrap();
            for v in [a, b] {
                assert!(r.values().contains(&v), "{:?}", cfg.variant);
            }
            assert!(r.queries_used as u128 <= cfg.query_bound());
            assert_eq!(mcm_run(&data, &cfg, 4).unwrap().to_json(), r.to_json());
        }
    }
}
