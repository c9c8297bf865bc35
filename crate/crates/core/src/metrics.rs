//! Output quality: F1, normalized cumulative rank and squared count error.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::bits::BitValue;
use crate::error::{Error, Result};
use crate::result::{Estimate, Metrics};

/// The true top values with their exact counts, most frequent first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundTruth {
    entries: Vec<(BitValue, u64)>,
}

impl GroundTruth {
    /// Ranked entries; counts must be non-increasing and values distinct.
    pub fn new(entries: Vec<(BitValue, u64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(Error::invalid("ground-truth counts must be non-increasing"));
        }
        let distinct: HashSet<_> = entries.iter().map(|e| e.0).collect();
        if distinct.len() != entries.len() {
            return Err(Error::invalid("ground-truth values must be distinct"));
        }
        Ok(GroundTruth { entries })
    }

    /// Exact top-`k` by counting, ties broken by ascending value.
    pub fn from_values(values: &[BitValue], k: usize) -> Self {
        let mut ranked = exact_counts(values);
        ranked.truncate(k);
        GroundTruth { entries: ranked }
    }

    pub fn entries(&self) -> &[(BitValue, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The top `k` of this truth.
    pub fn top(&self, k: usize) -> GroundTruth {
        GroundTruth {
            entries: self.entries[..k.min(self.entries.len())].to_vec(),
        }
    }
}

/// Every distinct value with its count, most frequent first, ties by value.
pub fn exact_counts(values: &[BitValue]) -> Vec<(BitValue, u64)> {
    let mut counts: HashMap<BitValue, u64> = HashMap::new();
    for v in values {
        *counts.entry(*v).or_default() += 1;
    }
    let mut ranked: Vec<(BitValue, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn overlap(truth: &GroundTruth, found: &[BitValue]) -> usize {
    let found: HashSet<_> = found.iter().collect();
    truth.entries.iter().filter(|e| found.contains(&e.0)).count()
}

/// Harmonic mean of precision and recall; 0 when nothing overlaps.
pub fn f1(truth: &GroundTruth, found: &[BitValue]) -> f64 {
    let distinct: HashSet<_> = found.iter().collect();
    let hit = overlap(truth, found) as f64;
    if hit == 0.0 {
        return 0.0;
    }
    let p = hit / distinct.len() as f64;
    let r = hit / truth.len() as f64;
    2.0 * p * r / (p + r)
}

/// `Σ_{v ∈ found} q(v) / (k(k+1)/2)` with `q(v_j) = k + 1 − j` for the
/// `j`-th true value and 0 otherwise.
pub fn ncr(truth: &GroundTruth, found: &[BitValue], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let found: HashSet<_> = found.iter().collect();
    let score: usize = truth
        .entries
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, e)| found.contains(&e.0))
        .map(|(j, _)| k - j)
        .sum();
    score as f64 / (k * (k + 1) / 2) as f64
}

/// Mean squared count error over correctly identified values.
pub fn est_var(truth: &GroundTruth, found: &[Estimate]) -> Result<f64> {
    let est: HashMap<BitValue, f64> = found.iter().map(|e| (e.value, e.estimate)).collect();
    let errs: Vec<f64> = truth
        .entries
        .iter()
        .filter_map(|(v, n)| est.get(v).map(|e| (*n as f64 - e).powi(2)))
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// All three metrics for a protocol output against the top `k` of `truth`.
pub fn evaluate(truth: &GroundTruth, found: &[Estimate], k: usize) -> Metrics {
    let truth = truth.top(k);
    let values: Vec<BitValue> = found.iter().map(|e| e.value).collect();
    Metrics {
        f1: f1(&truth, &values),
        ncr: ncr(&truth, &values, k),
        var: est_var(&truth, found).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: u128) -> BitValue {
        BitValue::from_u128(x, 8).unwrap()
    }

    fn truth(k: u128) -> GroundTruth {
        GroundTruth::new((0..k).map(|i| (v(i), 100 - i as u64)).collect()).unwrap()
    }

    #[test]
    fn f1_examples() {
        let t = truth(4);
        assert_eq!(f1(&t, &[v(0), v(1), v(2), v(3)]), 1.0);
        assert_eq!(f1(&t, &[v(0), v(1), v(20), v(30)]), 0.5);
        assert_eq!(f1(&t, &[v(10), v(11)]), 0.0);
        assert_eq!(f1(&t, &[]), 0.0);
    }

    #[test]
    fn ncr_examples() {
        let t = truth(3);
        assert_eq!(ncr(&t, &[v(0), v(1), v(2)], 3), 1.0);
        assert!((ncr(&t, &[v(0), v(2)], 3) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ncr(&t, &[v(9)], 3), 0.0);
    }

    #[test]
    fn est_var_examples() {
        let t = GroundTruth::new(vec![(v(1), 100), (v(2), 50)]).unwrap();
        let exact = [Estimate { value: v(1), estimate: 100.0 }, Estimate { value: v(2), estimate: 50.0 }];
        assert_eq!(est_var(&t, &exact).unwrap(), 0.0);
        let one = [Estimate { value: v(1), estimate: 90.0 }, Estimate { value: v(7), estimate: 3.0 }];
        assert_eq!(est_var(&t, &one).unwrap(), 100.0);
        let none = [Estimate { value: v(7), estimate: 3.0 }];
        assert!(matches!(est_var(&t, &none), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn truth_ranking_breaks_ties_by_value() {
        let data = [v(5), v(3), v(5), v(3), v(9), v(1)];
        let t = GroundTruth::from_values(&data, 3);
        assert_eq!(t.entries(), &[(v(3), 2), (v(5), 2), (v(1), 1)]);
        assert!(GroundTruth::new(vec![(v(1), 1), (v(2), 2)]).is_err());
        assert!(GroundTruth::new(vec![(v(1), 2), (v(1), 2)]).is_err());
    }

    proptest! {
        #[test]
        fn f1_and_ncr_properties(mut found in proptest::collection::vec(0u128..16, 0..8), k in 1u128..8) {
            let t = truth(k);
            found.sort_unstable();
            found.dedup();
            let vals: Vec<BitValue> = found.iter().map(|&x| v(x)).collect();
            let mut rev = vals.clone();
            rev.reverse();
            let (a, b) = (f1(&t, &vals), ncr(&t, &vals, k as usize));
            prop_assert_eq!(a, f1(&t, &rev));
            prop_assert_eq!(b, ncr(&t, &rev, k as usize));
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            if vals.len() == k as usize {
                let hit = found.iter().filter(|&&x| x < k).count() as f64;
                prop_assert!((a - hit / k as f64).abs() < 1e-12);
            }
            // Adding a missing true value never lowers NCR.
            if let Some(missing) = (0..k).find(|x| !found.contains(x)) {
                let mut more = vals.clone();
                more.push(v(missing));
                prop_assert!(ncr(&t, &more, k as usize) > b);
            }
            // Every identified true value contributes at least its own weight.
            for (j, x) in (0..k).enumerate() {
                if found.contains(&x) {
                    prop_assert!(b + 1e-12 >= (k as usize - j) as f64 / (k * (k + 1) / 2) as f64);
                }
            }
            let full = f1(&t, &(0..k).map(v).collect::<Vec<_>>());
            prop_assert_eq!(full, 1.0);
        }
    }
}
