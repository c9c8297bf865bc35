//! Exhaustive privacy-ratio computation.

use super::grr::GrrParams;
use super::olh::{OlhParams, SeededHash};
use super::PrivacyBudget;
use crate::bits::BitValue;
use crate::error::{Error, Result};

/// Largest input domain enumerated by [`ldp_ratio`].
pub const MAX_RATIO_DOMAIN: u64 = 1 << 10;

#[derive(Clone, Copy, Debug)]
pub enum Mechanism {
    /// Randomized response over `0..d`.
    Grr { d: u64, eps: PrivacyBudget },
    /// Local hashing over the `d` values of a `ceil(log2 d)`-bit domain,
    /// checked for each of `seeds` hash seeds `0..seeds`.
    Olh {
        d: u64,
        eps: PrivacyBudget,
        seeds: u64,
    },
}

/// `max over v1, v2, o of Pr[o | v1] / Pr[o | v2]`, computed from the full
/// output probability table. For local hashing the table is built per seed
/// and the maximum is taken over seeds.
pub fn ldp_ratio(mech: Mechanism) -> Result<f64> {
    match mech {
        Mechanism::Grr { d, eps } => {
            check_domain(d)?;
            let g = GrrParams::new(d, eps)?;
            let table: Vec<Vec<f64>> = (0..d)
                .map(|v| (0..d).map(|o| g.prob(v, o)).collect())
                .collect();
            table_ratio(&table)
        }
        Mechanism::Olh { d, eps, seeds } => {
            check_domain(d)?;
            if seeds == 0 {
                return Err(Error::invalid("at least one seed is required"));
            }
            let o = OlhParams::new(eps)?;
            let g = o.bucket_grr();
            let bits = 64 - (d - 1).leading_zeros().min(63);
            let values: Vec<BitValue> = (0..d)
                .map(|v| BitValue::from_u128(v as u128, bits))
                .collect::<Result<_>>()?;
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                let h = SeededHash::new(seed, o.d_prime());
                let table: Vec<Vec<f64>> = values
                    .iter()
                    .map(|v| {
                        let b = h.bucket(v) as u64 - 1;
                        (0..o.d_prime() as u64).map(|y| g.prob(b, y)).collect()
                    })
                    .collect();
                worst = worst.max(table_ratio(&table)?);
            }
            Ok(worst)
        }
    }
}

fn check_domain(d: u64) -> Result<()> {
    if !(2..=MAX_RATIO_DOMAIN).contains(&d) {
        return Err(Error::invalid(format!(
            "exhaustive ratio needs 2 <= d <= {MAX_RATIO_DOMAIN}, got {d}"
        )));
    }
    Ok(())
}

/// Rows are inputs, columns outputs. Every row must be a distribution.
fn table_ratio(table: &[Vec<f64>]) -> Result<f64> {
    for row in table {
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("output distribution sums to {total}")));
        }
    }
    let outputs = table[0].len();
    let mut worst: f64 = 0.0;
    for o in 0..outputs {
        let (lo, hi) = table
            .iter()
            .map(|row| row[o])
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        worst = worst.max(if lo == 0.0 { f64::INFINITY } else { hi / lo });
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(x: f64) -> PrivacyBudget {
        PrivacyBudget::new(x).unwrap()
    }

    #[test]
    fn binary_ln3_ratio_is_three() {
        let r = ldp_ratio(Mechanism::Grr { d: 2, eps: eps(3f64.ln()) }).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn grr_grid_matches_e_eps() {
        for d in [2, 3, 4, 16, 100, 256, 1024] {
            for e in [0.1, 0.5, 1.0, 3f64.ln(), 4.0, 7.0] {
                let r = ldp_ratio(Mechanism::Grr { d, eps: eps(e) }).unwrap();
                assert!((r - e.exp()).abs() < 1e-12, "d={d} eps={e} r={r}");
            }
        }
    }

    #[test]
    fn olh_per_seed_bounded() {
        let r = ldp_ratio(Mechanism::Olh {
            d: 16,
            eps: eps(3f64.ln()),
            seeds: 256,
        })
        .unwrap();
        assert!(r <= 3.0 + 1e-12, "{r}");
    }

    #[test]
    fn rejects_oversized_domains() {
        assert!(ldp_ratio(Mechanism::Grr { d: 2048, eps: eps(1.0) }).is_err());
        assert!(ldp_ratio(Mechanism::Grr { d: 1, eps: eps(1.0) }).is_err());
        assert!(ldp_ratio(Mechanism::Olh { d: 8, eps: eps(1.0), seeds: 0 }).is_err());
    }

    #[test]
    fn unbounded_when_an_output_is_impossible() {
        let t = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        assert!(table_ratio(&t).unwrap().is_infinite());
    }
}
