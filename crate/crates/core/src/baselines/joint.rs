//! Joint count estimation from independent per-question reports.
//!
//! A user answering questions `V` through independent oracles supports a
//! pattern on every question in `T ⊆ V` it actually holds with probability
//! `p` and on every other question with probability `q`. The expected joint
//! support is therefore `Σ_{T ⊆ V} n_T (p − q)^{|T|} q^{|V| − |T|}`, with
//! `n_T` the number of users holding the patterns of `T` and `n_∅ = n`.
//! Replacing the proper-subset counts by their unbiased estimates and
//! solving for `n_V` gives an unbiased estimator.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointEstimateInput {
    /// Reports supporting both patterns.
    pub i_ab: f64,
    pub n: f64,
    pub n_a_est: f64,
    pub n_b_est: f64,
    pub p: f64,
    pub q: f64,
}

/// `(I_ab − (ñ_a + ñ_b)·q(p − q) − n q²) / (p − q)²`.
pub fn joint_estimate(input: JointEstimateInput) -> Result<f64> {
    let JointEstimateInput {
        i_ab,
        n,
        n_a_est,
        n_b_est,
        p,
        q,
    } = input;
    let d = p - q;
    if d == 0.0 {
        return Err(Error::DegenerateOracle);
    }
    Ok((i_ab - (n_a_est + n_b_est) * q * d - n * q * q) / (d * d))
}

/// The estimator for `arity` questions. Subsets of `V` are bit masks over
/// `0..arity`; `marginals` must hold an estimate for every non-empty proper
/// subset. The empty subset contributes `n`.
pub fn joint_estimate_multi(
    i_v: f64,
    arity: usize,
    marginals: &HashMap<u32, f64>,
    n: f64,
    p: f64,
    q: f64,
) -> Result<f64> {
    if arity == 0 || arity > 16 {
        return Err(Error::invalid(format!("arity must be in 1..=16, got {arity}")));
    }
    let d = p - q;
    if d == 0.0 {
        return Err(Error::DegenerateOracle);
    }
    let full = (1u32 << arity) - 1;
    let mut acc = i_v;
    for mask in 0..full {
        let est = if mask == 0 {
            n
        } else {
            *marginals.get(&mask).ok_or(Error::MissingMarginal(mask))?
        };
        let t = mask.count_ones() as i32;
        acc -= est * d.powi(t) * q.powi(arity as i32 - t);
    }
    Ok(acc / d.powi(arity as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The appendix expectation with exact counts.
    fn expected_support(n: f64, na: f64, nb: f64, nab: f64, p: f64, q: f64) -> f64 {
        nab * p * p + (na - nab) * p * q + (nb - nab) * q * p + (n - na - nb + nab) * q * q
    }

    #[test]
    fn inverts_the_expectation() {
        let (p, q) = (0.5, 1.0 / 6.0);
        for &(n, na, nb, nab) in &[(3.0, 2.0, 1.0, 1.0), (10.0, 4.0, 7.0, 3.0), (5.0, 5.0, 5.0, 5.0)] {
            let i_ab = expected_support(n, na, nb, nab, p, q);
            let got = joint_estimate(JointEstimateInput {
                i_ab,
                n,
                n_a_est: na,
                n_b_est: nb,
                p,
                q,
            })
            .unwrap();
            assert!((got - nab).abs() < 1e-9, "{got} vs {nab}");
        }
    }

    #[test]
    fn multi_collapses_to_lower_arities() {
        let (p, q, n) = (0.75, 0.25, 40.0);
        let single = joint_estimate_multi(23.0, 1, &HashMap::new(), n, p, q).unwrap();
        assert!((single - (23.0 - n * q) / (p - q)).abs() < 1e-12);
        let marg = HashMap::from([(0b01, 12.0), (0b10, 9.5)]);
        let two = joint_estimate_multi(7.0, 2, &marg, n, p, q).unwrap();
        let pair = joint_estimate(JointEstimateInput {
            i_ab: 7.0,
            n,
            n_a_est: 12.0,
            n_b_est: 9.5,
            p,
            q,
        })
        .unwrap();
        assert!((two - pair).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let degenerate = JointEstimateInput {
            i_ab: 1.0,
            n: 1.0,
            n_a_est: 0.0,
            n_b_est: 0.0,
            p: 0.3,
            q: 0.3,
        };
        assert!(matches!(joint_estimate(degenerate), Err(Error::DegenerateOracle)));
        let marg = HashMap::from([(0b001, 1.0), (0b010, 1.0), (0b100, 1.0), (0b011, 1.0), (0b101, 1.0)]);
        assert!(matches!(
            joint_estimate_multi(1.0, 3, &marg, 3.0, 0.5, 0.25),
            Err(Error::MissingMarginal(0b110))
        ));
    }
}
