//! Popularity-based blocking: frequency sorting, mass equipartition, and
//! block-level query probabilities.

use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::prob::ProbabilityMatrix;

/// Empirical per-object query frequencies (raw counts, not normalized).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    counts: Vec<f64>,
}

impl FrequencyTable {
    pub fn new(counts: Vec<f64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Structure("frequency table is empty".into()));
        }
        if counts.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::Structure(
                "frequencies must be finite and >= 0".into(),
            ));
        }
        if counts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Degenerate("total frequency mass is zero".into()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_sorted_descending(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] >= w[1])
    }

    /// Reorder counts by a permutation: entry `r` of the result is
    /// `counts[perm[r]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.counts.len() {
            return Err(Error::Shape("permutation length mismatch".into()));
        }
        let counts = perm.iter().map(|&i| self.counts[i]).collect();
        FrequencyTable::new(counts)
    }
}

/// Indices ordered by descending frequency, ties broken by ascending
/// original index (stable): `i < i'  =>  f_i >= f_{i'}` after reordering.
pub fn sort_by_frequency(freqs: &FrequencyTable) -> Vec<usize> {
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs.counts()[b].partial_cmp(&freqs.counts()[a]).unwrap());
    order
}

/// Partition a descending frequency table into `k` contiguous blocks of
/// (nearly) equal total mass. Boundary `t_b` is placed at the prefix-sum
/// crossing of the threshold `b * total / k`, choosing whichever side of the
/// crossing deviates less from the threshold. Returns the offsets vector
/// `t` of length `k` with `t_0 = 0`.
pub fn equipartition(freqs: &FrequencyTable, k: usize) -> Result<Vec<usize>> {
    if !freqs.is_sorted_descending() {
        return Err(Error::Structure(
            "equipartition expects frequencies sorted in descending order".into(),
        ));
    }
    let nonzero = freqs.counts().iter().filter(|&&f| f > 0.0).count();
    if k == 0 || k > nonzero {
        return Err(Error::InfeasiblePartition(format!(
            "cannot split {nonzero} positive-mass positions into {k} nonempty blocks"
        )));
    }
    let n = freqs.len();
    let total = freqs.total();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &f in freqs.counts() {
        prefix.push(prefix.last().unwrap() + f);
    }

    let mut offsets = vec![0usize];
    for b in 1..k {
        let target = total * b as f64 / k as f64;
        let lo = offsets[b - 1] + 1; // current block keeps at least one element
        let hi = n - (k - b); // leave one element per remaining block
        // first boundary in [lo, hi] whose prefix mass reaches the threshold
        let mut t = lo;
        while t < hi && prefix[t] < target {
            t += 1;
        }
        if t > lo && (target - prefix[t - 1]).abs() <= (prefix[t] - target).abs() {
            t -= 1;
        }
        offsets.push(t);
    }
    Ok(offsets)
}

/// Block-level probability vector `p`. With `pi` given, `p_i = sum_j pi_ij`;
/// without it, blocks are treated as categorical features where exactly one
/// row per block is queried, so `p_i = 1 / n_i`.
pub fn block_probabilities(
    structure: &BlockStructure,
    pi: Option<&ProbabilityMatrix>,
) -> Result<Vec<f64>> {
    match pi {
        Some(pi) => {
            pi.check_shape(structure)?;
            Ok(pi.row_marginals())
        }
        None => Ok(structure
            .row_sizes()
            .iter()
            .map(|&n| 1.0 / n as f64)
            .collect()),
    }
}

/// Block masses induced by an offsets vector over a frequency table.
pub fn block_masses(freqs: &FrequencyTable, offsets: &[usize]) -> Vec<f64> {
    let n = freqs.len();
    let mut out = Vec::with_capacity(offsets.len());
    for (b, &start) in offsets.iter().enumerate() {
        let end = offsets.get(b + 1).copied().unwrap_or(n);
        out.push(freqs.counts()[start..end].iter().sum());
    }
    out
}

/// Block sizes (row counts) induced by an offsets vector.
pub fn block_sizes(total_len: usize, offsets: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(offsets.len());
    for (b, &start) in offsets.iter().enumerate() {
        let end = offsets.get(b + 1).copied().unwrap_or(total_len);
        out.push(end - start);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sort_examples() {
        let t = FrequencyTable::new(vec![1.0, 3.0, 2.0]).unwrap();
        assert_eq!(sort_by_frequency(&t), vec![1, 2, 0]);

        let ties = FrequencyTable::new(vec![5.0, 5.0, 5.0]).unwrap();
        assert_eq!(sort_by_frequency(&ties), vec![0, 1, 2]);

        let zeros = FrequencyTable::new(vec![0.0, 0.0, 9.0]).unwrap();
        assert_eq!(sort_by_frequency(&zeros), vec![2, 0, 1]);
    }

    #[test]
    fn equipartition_exact_halves() {
        let t = FrequencyTable::new(vec![4.0, 2.0, 1.0, 1.0]).unwrap();
        let offsets = equipartition(&t, 2).unwrap();
        assert_eq!(offsets, vec![0, 1]);
        assert_eq!(block_masses(&t, &offsets), vec![4.0, 4.0]);
    }

    #[test]
    fn equipartition_singletons() {
        let t = FrequencyTable::new(vec![1.0; 4]).unwrap();
        assert_eq!(equipartition(&t, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn equipartition_heavy_head() {
        // brute force over all split points confirms (0, 1) minimizes the
        // max deviation from total/2 = 8
        let t = FrequencyTable::new(vec![8.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let offsets = equipartition(&t, 2).unwrap();
        let brute_best = (1..t.len())
            .min_by(|&a, &b| {
                let dev = |s: usize| {
                    let m: f64 = t.counts()[..s].iter().sum();
                    let rest = t.total() - m;
                    (m - 8.0).abs().max((rest - 8.0).abs())
                };
                dev(a).partial_cmp(&dev(b)).unwrap()
            })
            .unwrap();
        assert_eq!(offsets, vec![0, brute_best]);
        assert_eq!(offsets, vec![0, 1]);
    }

    #[test]
    fn equipartition_infeasible() {
        let t = FrequencyTable::new(vec![5.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            equipartition(&t, 2),
            Err(Error::InfeasiblePartition(_))
        ));
    }

    #[test]
    fn equipartition_requires_sorted() {
        let t = FrequencyTable::new(vec![1.0, 3.0]).unwrap();
        assert!(equipartition(&t, 2).is_err());
    }

    #[test]
    fn block_probabilities_modes() {
        let s = BlockStructure::new(vec![10, 1000], vec![1]).unwrap();
        let p = block_probabilities(&s, None).unwrap();
        assert_relative_eq!(p[0], 0.1);
        assert_relative_eq!(p[1], 0.001);

        let s2 = BlockStructure::new(vec![5, 5], vec![3]).unwrap();
        let even = ProbabilityMatrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(block_probabilities(&s2, Some(&even)).unwrap(), vec![0.5, 0.5]);
        let skew = ProbabilityMatrix::from_rows(vec![vec![0.9], vec![0.1]]).unwrap();
        let p = block_probabilities(&s2, Some(&skew)).unwrap();
        assert_relative_eq!(p[0], 0.9);
        assert_relative_eq!(p[1], 0.1);
    }

    proptest! {
        #[test]
        fn sort_yields_valid_permutation_and_descending(counts in proptest::collection::vec(0.0f64..100.0, 1..40)) {
            prop_assume!(counts.iter().sum::<f64>() > 0.0);
            let t = FrequencyTable::new(counts.clone()).unwrap();
            let order = sort_by_frequency(&t);
            let mut seen = vec![false; counts.len()];
            for &i in &order {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
            let sorted = t.permuted(&order).unwrap();
            prop_assert!(sorted.is_sorted_descending());
        }

        // Each boundary lands within half the crossing element of its mass
        // threshold, so block masses stay within one max frequency of
        // total/k and the spread stays within twice the max frequency.
        #[test]
        fn equipartition_mass_spread_bounded(
            counts in proptest::collection::vec(0.01f64..50.0, 4..60),
            k in 2usize..6,
        ) {
            let t = FrequencyTable::new(counts).unwrap();
            prop_assume!(k <= t.len());
            let sorted = t.permuted(&sort_by_frequency(&t)).unwrap();
            let offsets = equipartition(&sorted, k).unwrap();
            prop_assert_eq!(offsets[0], 0);
            prop_assert!(offsets.windows(2).all(|w| w[0] < w[1]));
            let masses = block_masses(&sorted, &offsets);
            let max_f = sorted.counts()[0];
            let spread = masses.iter().cloned().fold(f64::MIN, f64::max)
                - masses.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(spread <= 2.0 * max_f + 1e-9, "spread {} > 2x max freq {}", spread, max_f);
        }
    }
}
