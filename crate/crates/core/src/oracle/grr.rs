//! Generalized randomized response over the domain `0..d`.

use rand::Rng;

use super::PrivacyBudget;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrrParams {
    d: u64,
    eps: PrivacyBudget,
    p: f64,
    q: f64,
}

impl GrrParams {
    pub fn new(d: u64, eps: PrivacyBudget) -> Result<Self> {
        if d < 2 {
            return Err(Error::invalid(format!("domain size must be at least 2, got {d}")));
        }
        let e = eps.exp();
        let denom = e + (d - 1) as f64;
        Ok(GrrParams {
            d,
            eps,
            p: e / denom,
            q: 1.0 / denom,
        })
    }

    #[inline]
    pub fn d(&self) -> u64 {
        self.d
    }

    #[inline]
    pub fn eps(&self) -> PrivacyBudget {
        self.eps
    }

    /// Probability of reporting the true value.
    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Probability of reporting any one specific other value.
    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `Pr[output = o | input = v]`.
    pub fn prob(&self, v: u64, o: u64) -> f64 {
        if v == o {
            self.p
        } else {
            self.q
        }
    }

    #[inline]
    pub(crate) fn perturb_unchecked<R: Rng + ?Sized>(&self, v: u64, rng: &mut R) -> u64 {
        if rng.random::<f64>() < self.p {
            v
        } else {
            let o = rng.random_range(0..self.d - 1);
            if o >= v {
                o + 1
            } else {
                o
            }
        }
    }
}

pub fn grr_perturb<R: Rng + ?Sized>(v: u64, params: &GrrParams, rng: &mut R) -> Result<u64> {
    if v >= params.d {
        return Err(Error::OutOfDomain {
            value: v,
            domain: params.d,
        });
    }
    Ok(params.perturb_unchecked(v, rng))
}

/// Unbiased count estimate `(I_v - n q) / (p - q)`.
pub fn grr_estimate(reports: &[u64], v: u64, params: &GrrParams) -> Result<f64> {
    if let Some(&bad) = reports.iter().find(|&&r| r >= params.d) {
        return Err(Error::OutOfDomain {
            value: bad,
            domain: params.d,
        });
    }
    let support = reports.iter().filter(|&&r| r == v).count() as f64;
    let n = reports.len() as f64;
    Ok((support - n * params.q) / (params.p - params.q))
}

/// `n (d - 2 + e^ε) / (e^ε - 1)^2`.
pub fn grr_variance(n: f64, d: u64, eps: PrivacyBudget) -> f64 {
    let e = eps.exp();
    n * (d as f64 - 2.0 + e) / ((e - 1.0) * (e - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn binary_ln3_keeps_three_quarters() {
        let g = GrrParams::new(2, eps(3f64.ln())).unwrap();
        assert!((g.p() - 0.75).abs() < 1e-15);
        assert!((g.q() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn large_domain_keep_probability() {
        let g = GrrParams::new(1 << 16, eps(49f64.ln())).unwrap();
        assert!((g.p() - 49.0 / 65584.0).abs() < 1e-15);
    }

    #[test]
    fn estimate_substitution() {
        let g = GrrParams::new(2, eps(3f64.ln())).unwrap();
        let mut reports = vec![0u64; 75];
        reports.extend(std::iter::repeat_n(1, 25));
        assert!((grr_estimate(&reports, 0, &g).unwrap() - 100.0).abs() < 1e-9);
        assert_eq!(grr_estimate(&[], 0, &g).unwrap(), 0.0);
    }

    #[test]
    fn rejects_out_of_domain() {
        let g = GrrParams::new(4, eps(1.0)).unwrap();
        let mut r = rng::stream(0, rng::tag::ORACLE, 0);
        assert!(grr_perturb(4, &g, &mut r).is_err());
        assert!(grr_estimate(&[0, 9], 0, &g).is_err());
        assert!(GrrParams::new(1, eps(1.0)).is_err());
    }

    #[test]
    fn variance_values() {
        let v = grr_variance(1.0, 1 << 16, eps(49f64.ln()));
        assert!((v - 65583.0 / 2304.0).abs() < 1e-9);
        let e = 2f64.exp();
        assert!((grr_variance(5.0, 2, eps(2.0)) - 5.0 * e / ((e - 1.0) * (e - 1.0))).abs() < 1e-12);
        assert_eq!(grr_variance(0.0, 8, eps(1.0)), 0.0);
    }

    #[test]
    fn monte_carlo_unbiased() {
        let g = GrrParams::new(4, eps(3f64.ln())).unwrap();
        let (n, truth, trials) = (10_000usize, 2_000usize, 500u64);
        let ests: Vec<f64> = (0..trials)
            .map(|t| {
                let mut r = rng::stream(11, rng::tag::ORACLE, t);
                let reports: Vec<u64> = (0..n)
                    .map(|i| grr_perturb(if i < truth { 0 } else { 1 + (i % 3) as u64 }, &g, &mut r).unwrap())
                    .collect();
                grr_estimate(&reports, 0, &g).unwrap()
            })
            .collect();
        let mean = ests.iter().sum::<f64>() / trials as f64;
        let var = ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - truth as f64).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    proptest! {
        #[test]
        fn output_distribution_sums_to_one(d in 2u64..300, e in 0.01f64..8.0) {
            let g = GrrParams::new(d, eps(e)).unwrap();
            let total: f64 = (0..d).map(|o| g.prob(0, o)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!((g.p() + (d - 1) as f64 * g.q() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn perturb_stays_in_domain(d in 2u64..64, v in 0u64..64, seed in any::<u64>()) {
            let v = v % d;
            let g = GrrParams::new(d, eps(1.0)).unwrap();
            let mut r = rng::stream(seed, rng::tag::ORACLE, 0);
            for _ in 0..32 {
                prop_assert!(grr_perturb(v, &g, &mut r).unwrap() < d);
            }
        }
    }
}
