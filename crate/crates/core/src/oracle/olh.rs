//! Optimized local hashing.
//!
//! A report is `⟨seed, y⟩`: the user draws a fresh public hash seed, hashes
//! the value into `{1..d'}` and reports the bucket through randomized
//! response over `d'` buckets. The aggregator counts, for each candidate,
//! the reports whose seed maps the candidate onto the reported bucket.
//!
//! The hash family is multiply-add-shift over the 32-bit digest of the
//! value: `h(x) = ((a·x + b) mod 2^64) >> 32` with `(a, b)` derived from the
//! seed by the SplitMix64 mixer, reduced to a bucket by multiply-high. The
//! family is strongly universal, so two distinct values collide under a
//! random seed with probability `1/d'` up to `2^-32` rounding.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grr::GrrParams;
use super::PrivacyBudget;
use crate::bits::BitValue;
use crate::error::{Error, Result};
use crate::rng::mix64;

const MAX_D_PRIME: f64 = (1u64 << 30) as f64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlhParams {
    eps: PrivacyBudget,
    d_prime: u32,
    p: f64,
}

impl OlhParams {
    /// `d' = ceil(e^ε + 1)` and `p = e^ε / (e^ε + d' - 1)`.
    ///
    /// `e^ε + 1` within 1e-9 of an integer is treated as that integer so that
    /// budgets like `ln 3` give `d' = 4` despite rounding in `exp`.
    pub fn new(eps: PrivacyBudget) -> Result<Self> {
        let e = eps.exp();
        let raw = e + 1.0;
        if raw > MAX_D_PRIME {
            return Err(Error::invalid(format!(
                "budget {eps} needs a hashed domain larger than 2^30"
            )));
        }
        let d_prime = if (raw - raw.round()).abs() < 1e-9 {
            raw.round()
        } else {
            raw.ceil()
        } as u32;
        Ok(OlhParams {
            eps,
            d_prime,
            p: e / (e + (d_prime - 1) as f64),
        })
    }

    #[inline]
    pub fn eps(&self) -> PrivacyBudget {
        self.eps
    }

    #[inline]
    pub fn d_prime(&self) -> u32 {
        self.d_prime
    }

    /// Probability that a report supports the user's own value.
    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability that a report supports a value other than the user's.
    #[inline]
    pub fn q(&self) -> f64 {
        1.0 / self.d_prime as f64
    }

    /// Randomized response over the bucket domain.
    pub fn bucket_grr(&self) -> GrrParams {
        GrrParams::new(self.d_prime as u64, self.eps).expect("d' >= 2")
    }

    /// `(I - n/d') / (p - 1/d')`.
    #[inline]
    pub fn estimate(&self, support: u64, n: u64) -> f64 {
        (support as f64 - n as f64 * self.q()) / (self.p - self.q())
    }
}

/// One member of the hash family, ready to map value digests to buckets.
#[derive(Clone, Copy, Debug)]
pub struct SeededHash {
    a: u64,
    b: u64,
    d_prime: u64,
}

impl SeededHash {
    pub fn new(seed: u64, d_prime: u32) -> Self {
        SeededHash {
            a: mix64(seed ^ 0x243f_6a88_85a3_08d3),
            b: mix64(seed ^ 0x1319_8a2e_0370_7344),
            d_prime: d_prime as u64,
        }
    }

    #[inline(always)]
    fn raw(&self, digest: u32) -> u64 {
        self.a.wrapping_mul(digest as u64).wrapping_add(self.b) >> 32
    }

    /// Bucket in `1..=d'`.
    #[inline(always)]
    pub fn bucket_of_digest(&self, digest: u32) -> u32 {
        ((self.raw(digest) * self.d_prime) >> 32) as u32 + 1
    }

    pub fn bucket(&self, v: &BitValue) -> u32 {
        self.bucket_of_digest(digest(v))
    }

    /// The digests that land in bucket `y` form the interval
    /// `[lo, lo + width)` of raw hash values.
    #[inline(always)]
    fn interval(&self, y: u32) -> (u64, u64) {
        let lo = ((y as u64 - 1) << 32).div_ceil(self.d_prime);
        let hi = ((y as u64) << 32).div_ceil(self.d_prime);
        (lo, hi - lo)
    }
}

/// 32-bit digest of a bit string fed to the hash family.
#[inline]
pub fn digest(v: &BitValue) -> u32 {
    let k = v.key();
    (k ^ (k >> 32)) as u32
}

/// Bucket of `v` under the hash identified by `seed`, in `1..=d_prime`.
pub fn olh_hash(seed: u64, v: &BitValue, d_prime: u32) -> u32 {
    SeededHash::new(seed, d_prime).bucket(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OlhReport {
    pub seed: u64,
    pub y: u32,
}

/// Perturbs `v` with a freshly drawn hash seed.
pub fn olh_perturb<R: Rng + ?Sized>(v: &BitValue, params: &OlhParams, rng: &mut R) -> OlhReport {
    let seed = rng.random::<u64>();
    perturb_with_seed(v, seed, params, rng)
}

/// Perturbs `v` under a given hash seed.
pub fn perturb_with_seed<R: Rng + ?Sized>(
    v: &BitValue,
    seed: u64,
    params: &OlhParams,
    rng: &mut R,
) -> OlhReport {
    let bucket = olh_hash(seed, v, params.d_prime);
    let y = params.bucket_grr().perturb_unchecked(bucket as u64 - 1, rng) as u32 + 1;
    OlhReport { seed, y }
}

/// A report carrying no information: uniform seed and uniform bucket.
pub fn noise_report<R: Rng + ?Sized>(params: &OlhParams, rng: &mut R) -> OlhReport {
    OlhReport {
        seed: rng.random(),
        y: rng.random_range(1..=params.d_prime),
    }
}

/// Support counts `I_v` of a candidate list over a batch of reports.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportCounts {
    values: Vec<BitValue>,
    counts: Vec<u64>,
    n: u64,
    index: HashMap<BitValue, usize>,
}

impl SupportCounts {
    fn new(values: Vec<BitValue>, counts: Vec<u64>, n: u64) -> Self {
        let mut index = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            index.entry(*v).or_insert(i);
        }
        SupportCounts {
            values,
            counts,
            n,
            index,
        }
    }

    /// Number of reports aggregated.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn values(&self) -> &[BitValue] {
        &self.values
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn support(&self, v: &BitValue) -> Option<u64> {
        self.index.get(v).map(|&i| self.counts[i])
    }

    /// Estimates for every candidate, in candidate order.
    pub fn estimates(&self, params: &OlhParams) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| params.estimate(c, self.n))
            .collect()
    }

    /// Adds the counts of a disjoint batch aggregated over the same candidates.
    pub fn merge(&mut self, other: &SupportCounts) -> Result<()> {
        if self.values != other.values {
            return Err(Error::invalid("cannot merge supports over different candidates"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n += other.n;
        Ok(())
    }
}

const SHARD: usize = 2048;

/// Counts, for every candidate, the reports that support it.
pub fn olh_aggregate(
    reports: &[OlhReport],
    candidates: &[BitValue],
    params: &OlhParams,
) -> Result<SupportCounts> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to aggregate"));
    }
    let digests: Vec<u32> = candidates.iter().map(digest).collect();
    let counts = support_counts(reports, &digests, params.d_prime);
    Ok(SupportCounts::new(
        candidates.to_vec(),
        counts,
        reports.len() as u64,
    ))
}

/// Support counts over precomputed candidate digests.
pub(crate) fn support_counts(reports: &[OlhReport], digests: &[u32], d_prime: u32) -> Vec<u64> {
    let c = digests.len();
    reports
        .par_chunks(SHARD)
        .fold(
            || vec![0u32; c],
            |mut acc, shard| {
                count_shard(shard, digests, d_prime, &mut acc);
                acc
            },
        )
        .map(|acc| acc.into_iter().map(u64::from).collect::<Vec<u64>>())
        .reduce(
            || vec![0u64; c],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        )
}

fn count_shard(reports: &[OlhReport], digests: &[u32], d_prime: u32, acc: &mut [u32]) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked just above.
        return unsafe { count_shard_avx2(reports, digests, d_prime, acc) };
    }
    count_shard_portable(reports, digests, d_prime, acc)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn count_shard_avx2(reports: &[OlhReport], digests: &[u32], d_prime: u32, acc: &mut [u32]) {
    count_shard_portable(reports, digests, d_prime, acc)
}

// The raw hash is evaluated in 32-bit pieces, which the compiler vectorizes:
// bits 32..64 of `a·x + b` are `hi32(a_lo·x + b_lo) + a_hi·x + b_hi`.
#[inline(always)]
fn count_shard_portable(reports: &[OlhReport], digests: &[u32], d_prime: u32, acc: &mut [u32]) {
    for r in reports {
        let h = SeededHash::new(r.seed, d_prime);
        let (lo, width) = h.interval(r.y);
        let (lo, width) = (lo as u32, width as u32);
        let (a_lo, a_hi) = (h.a as u32 as u64, (h.a >> 32) as u32);
        let (b_lo, b_hi) = (h.b as u32 as u64, (h.b >> 32) as u32);
        for (slot, &x) in acc.iter_mut().zip(digests) {
            let raw = (((a_lo * x as u64 + b_lo) >> 32) as u32)
                .wrapping_add(a_hi.wrapping_mul(x))
                .wrapping_add(b_hi);
            *slot += (raw.wrapping_sub(lo) < width) as u32;
        }
    }
}

/// `(I_v - n/d') / (p - 1/d')`.
pub fn olh_estimate(supports: &SupportCounts, v: &BitValue, params: &OlhParams) -> Result<f64> {
    let support = supports
        .support(v)
        .ok_or_else(|| Error::UnknownCandidate(format!("{v}")))?;
    Ok(params.estimate(support, supports.n))
}

/// `4 n e^ε / (e^ε - 1)^2`.
pub fn olh_variance(n: f64, eps: PrivacyBudget) -> f64 {
    let e = eps.exp();
    n * 4.0 * e / ((e - 1.0) * (e - 1.0))
}

#[derive(Serialize, Deserialize)]
struct ReportRow {
    group: u32,
    seed: u64,
    y: u32,
}

/// Writes reports as `group,seed,y` CSV with a header line.
pub fn write_reports<W: Write>(out: W, reports: &[(u32, OlhReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for &(group, r) in reports {
        w.serialize(ReportRow {
            group,
            seed: r.seed,
            y: r.y,
        })
        .map_err(|e| csv_error(Path::new("<output>"), e))?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// Reads `group,seed,y` CSV; `path` is only used in error messages.
pub fn read_reports<R: Read>(input: R, path: &Path) -> Result<Vec<(u32, OlhReport)>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize::<ReportRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        out.push((
            row.group,
            OlhReport {
                seed: row.seed,
                y: row.y,
            },
        ));
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}
