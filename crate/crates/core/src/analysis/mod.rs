//! Analytic utility model of the prefix extending method.
//!
//! In round `i` the support of the `j`-th heavy prefix is approximately
//! normal with mean `μ_j = n_i(p f_j + q(1 − f_j))` and deviation
//! `σ_j = √(n_i p_j(1 − p_j))`, where `p_j = p f_j + q(1 − f_j)`. The
//! `N_i = |D_i| − k` non-heavy candidates each have mean `μ_0 = n_i q` and
//! deviation `σ_0 = √(n_i q(1 − q))`. The `j`-th heavy prefix survives when
//! it beats the `(c_i − j)`-th largest noise support, approximated by the
//! quantile `T = μ_0 − Φ⁻¹((c_i − j)/N_i)·σ_0`. Rounds are treated as
//! independent, so a value is identified with probability `Π_i P[i][j]`.

pub mod normal;

use serde::{Deserialize, Serialize};

use crate::datagen::{exp_freqs, zipf_freqs};
use crate::error::{Error, Result};
use crate::oracle::{olh_variance, OlhParams, PrivacyBudget};
use crate::pem::{gamma_for, query_bound, PemConfig, MAX_FIRST_PREFIX};

pub use normal::{normal_cdf, normal_inv_cdf};

/// Frequency model `f_j` of the `j`-th most frequent value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec {
    Zipf { s: f64, support: usize, drop: usize },
    Exponential { rate: f64, support: usize },
    Empirical { freqs: Vec<f64> },
}

impl DistributionSpec {
    pub fn zipf(s: f64, support: usize, drop: usize) -> Self {
        DistributionSpec::Zipf { s, support, drop }
    }

    pub fn exponential(rate: f64, support: usize) -> Self {
        DistributionSpec::Exponential { rate, support }
    }

    /// Non-increasing frequencies over the modeled support.
    pub fn freqs(&self) -> Result<Vec<f64>> {
        match self {
            DistributionSpec::Zipf { s, support, drop } => zipf_freqs(*s, *support, *drop),
            DistributionSpec::Exponential { rate, support } => exp_freqs(*rate, *support),
            DistributionSpec::Empirical { freqs } => {
                let total: f64 = freqs.iter().sum();
                if freqs.is_empty()
                    || freqs.iter().any(|f| !(f.is_finite() && *f >= 0.0))
                    || total > 1.0 + 1e-9
                    || freqs.windows(2).any(|w| w[0] < w[1])
                {
                    return Err(Error::invalid(
                        "empirical frequencies must be non-negative, non-increasing and sum to at most 1",
                    ));
                }
                Ok(freqs.clone())
            }
        }
    }

    /// `f_j` for 1-based `j`; 0 beyond the support.
    pub fn f(&self, j: usize) -> Result<f64> {
        Ok(self.freqs()?.get(j.wrapping_sub(1)).copied().unwrap_or(0.0))
    }
}

/// Normal approximation of one round's supports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoundStats {
    pub n_i: f64,
    pub p: f64,
    pub q: f64,
    /// Non-heavy candidates `N_i`.
    pub n_noise: f64,
}

impl RoundStats {
    pub fn new(n_i: f64, eps: PrivacyBudget, n_noise: f64) -> Result<Self> {
        let o = OlhParams::new(eps)?;
        Ok(RoundStats {
            n_i,
            p: o.p(),
            q: o.q(),
            n_noise,
        })
    }

    pub fn p_j(&self, f: f64) -> f64 {
        self.p * f + self.q * (1.0 - f)
    }

    pub fn mu(&self, f: f64) -> f64 {
        self.n_i * self.p_j(f)
    }

    pub fn sigma(&self, f: f64) -> f64 {
        let pj = self.p_j(f);
        (self.n_i * pj * (1.0 - pj)).sqrt()
    }

    pub fn mu0(&self) -> f64 {
        self.n_i * self.q
    }

    pub fn sigma0(&self) -> f64 {
        (self.n_i * self.q * (1.0 - self.q)).sqrt()
    }
}

/// Support level `μ_0 − Φ⁻¹(slots/N)·σ_0` exceeded by about `slots` of the
/// `N` noise candidates. `slots/N` is clamped to `[1/(2N), 1 − 1/(2N)]`.
pub fn rank_threshold(stats: &RoundStats, slots: f64) -> Result<f64> {
    let n = stats.n_noise;
    if !(n >= 1.0) {
        return Err(Error::invalid(format!("need at least one noise candidate, got {n}")));
    }
    let lo = 1.0 / (2.0 * n);
    let frac = (slots / n).clamp(lo, 1.0 - lo);
    let frac = if lo >= 0.5 { 0.5 } else { frac };
    Ok(stats.mu0() - normal_inv_cdf(frac)? * stats.sigma0())
}

/// Probability that the `j`-th heavy prefix, with frequency `f`, is among
/// the `cand_size` survivors: `Φ((μ_j − T_{cand_size − j})/σ_j)`.
pub fn ident_prob(stats: &RoundStats, f: f64, j: usize, cand_size: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::invalid("ranks are 1-based"));
    }
    let t = rank_threshold(stats, cand_size as f64 - j as f64)?;
    let sigma = stats.sigma(f);
    if sigma == 0.0 {
        return Ok(if stats.mu(f) > t { 1.0 } else { 0.0 });
    }
    Ok(normal_cdf((stats.mu(f) - t) / sigma))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    F1,
    Ncr,
}

impl WeightScheme {
    /// `w_j` for `j = 1..=k`, summing to 1.
    pub fn weights(self, k: usize) -> Vec<f64> {
        match self {
            WeightScheme::F1 => vec![1.0 / k as f64; k],
            WeightScheme::Ncr => {
                let total = (k * (k + 1) / 2) as f64;
                (1..=k).map(|j| (k + 1 - j) as f64 / total).collect()
            }
        }
    }
}

/// Per-round statistics of a configuration over `n` users.
pub fn round_stats(cfg: &PemConfig, n: f64) -> Result<Vec<(RoundStats, usize, u64)>> {
    cfg.rounds()?
        .iter()
        .map(|r| {
            let noise = r.domain_size.saturating_sub(cfg.k as u64).max(1) as f64;
            Ok((RoundStats::new(n * r.share, cfg.eps, noise)?, r.cand_size, r.domain_size))
        })
        .collect()
}

/// `Π_i P[i][j]` for `j = 1..=k`.
pub fn value_probs(dist: &DistributionSpec, cfg: &PemConfig, n: f64) -> Result<Vec<f64>> {
    let freqs = dist.freqs()?;
    let rounds = round_stats(cfg, n)?;
    (1..=cfg.k)
        .map(|j| {
            let f = freqs.get(j - 1).copied().unwrap_or(0.0);
            rounds.iter().try_fold(1.0, |acc, (stats, cand, domain)| {
                let p = if *domain <= *cand as u64 {
                    1.0
                } else {
                    ident_prob(stats, f, j, *cand)?
                };
                Ok(acc * p)
            })
        })
        .collect()
}

/// `Σ_j w_j Π_i P[i][j]`.
pub fn utility_score(dist: &DistributionSpec, cfg: &PemConfig, n: f64, weights: WeightScheme) -> Result<f64> {
    let probs = value_probs(dist, cfg, n)?;
    Ok(weights
        .weights(cfg.k)
        .iter()
        .zip(&probs)
        .map(|(w, p)| w * p)
        .sum())
}

/// The feasible `η` (same query rule as [`crate::pem::plan`]) with the best
/// utility score; ties go to the smaller `η`.
pub fn optimize(
    dist: &DistributionSpec,
    m: u32,
    k: usize,
    n: f64,
    eps: PrivacyBudget,
    query_limit: u64,
    weights: WeightScheme,
) -> Result<(PemConfig, f64)> {
    let gamma = gamma_for(k);
    if k == 0 || gamma >= m {
        return Err(Error::Infeasible(format!("k = {k} cannot be identified among {m}-bit values")));
    }
    let mut best: Option<(PemConfig, f64)> = None;
    for eta in 1..=m - gamma {
        let fits = gamma + eta <= MAX_FIRST_PREFIX
            && query_bound(m, gamma, eta).is_some_and(|q| q <= query_limit as u128);
        if !fits {
            continue;
        }
        let cfg = PemConfig::new(m, gamma, eta, k, query_limit, eps)?;
        let score = utility_score(dist, &cfg, n, weights)?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((cfg, score));
        }
    }
    best.ok_or_else(|| Error::Infeasible(format!("no η fits the query limit {query_limit}")))
}

/// `E(x) = (e^x − 1)² / e^x`.
pub fn lemma_e(x: f64) -> f64 {
    let d = x.exp_m1();
    d * d * (-x).exp()
}

/// Whether `E(ε/g) < E(ε)/g`.
pub fn lemma_e_check(eps: f64, g: u32) -> Result<bool> {
    if !(eps > 0.0) || g < 2 {
        return Err(Error::invalid(format!("need ε > 0 and g >= 2, got ε = {eps}, g = {g}")));
    }
    Ok(lemma_e(eps / g as f64) < lemma_e(eps) / g as f64)
}

/// The two quantities compared when deciding between dividing users into
/// `g` groups at full budget (`P1`) and letting every user answer `g`
/// questions at `ε/g` (`P2`). Larger is better.
pub fn compare_partition_vs_split(
    n_i: f64,
    f: f64,
    k: usize,
    n_noise: f64,
    eps: f64,
    g: u32,
) -> Result<(f64, f64)> {
    if g == 0 {
        return Err(Error::invalid("g must be at least 1"));
    }
    let g = g as f64;
    let a = normal_inv_cdf((k as f64 - 1.0) / n_noise)?;
    let b = (f / 2.0) * (1.0 - f / 2.0);
    let c = f * n_i.sqrt() / 2.0;
    let e_full = lemma_e(eps);
    let e_split = lemma_e(eps / g);
    let p1 = a / (1.0 + b * e_full).sqrt() + c / (g / e_full + g * b).sqrt();
    let p2 = a / (1.0 + b * e_split).sqrt() + c / (1.0 / e_split + b).sqrt();
    Ok((p1, p2))
}

/// Users needed so that frequency `f` stands `sigma_multiple` standard
/// deviations above zero, with the deviation coefficient `√(4e^ε/(e^ε−1)²)`
/// rounded to one decimal (`0.7` at `e^ε = 10`) as in the usual back-of-the-
/// envelope calculation. See [`min_population_exact`] for the unrounded one.
pub fn min_population(f: f64, eps: PrivacyBudget, sigma_multiple: f64) -> Result<u64> {
    let coef = (olh_variance(1.0, eps).sqrt() * 10.0).round() / 10.0;
    population(f, sigma_multiple, coef)
}

/// Smallest `n` with `f·n ≥ sigma_multiple·√(4 n e^ε/(e^ε−1)²)`.
pub fn min_population_exact(f: f64, eps: PrivacyBudget, sigma_multiple: f64) -> Result<u64> {
    population(f, sigma_multiple, olh_variance(1.0, eps).sqrt())
}

fn population(f: f64, sigma_multiple: f64, coef: f64) -> Result<u64> {
    if !(f > 0.0 && f < 1.0) || !(sigma_multiple >= 0.0) {
        return Err(Error::invalid(format!("need 0 < f < 1 and a non-negative multiple, got f = {f}")));
    }
    let root = sigma_multiple * coef / f;
    let n = root * root;
    let nearest = n.round();
    Ok(if (n - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        n.ceil() as u64
    })
}
