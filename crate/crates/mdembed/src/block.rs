//! Block structure of a target matrix: row and column block sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes `(n_1..n_{k_W})` and `(m_1..m_{k_V})` partitioning an `n x m`
/// matrix into `k_W x k_V` contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
}

impl BlockStructure {
    pub fn new(row_sizes: Vec<usize>, col_sizes: Vec<usize>) -> Result<Self> {
        let s = Self {
            row_sizes,
            col_sizes,
        };
        s.validate()?;
        Ok(s)
    }

    /// Stacked row blocks over a single column block, the shape used by the
    /// collaborative-filtering experiments.
    pub fn stacked(row_sizes: Vec<usize>, m: usize) -> Result<Self> {
        Self::new(row_sizes, vec![m])
    }

    /// Re-check invariants, e.g. after deserializing from an external file.
    pub fn validate(&self) -> Result<()> {
        if self.row_sizes.is_empty() || self.col_sizes.is_empty() {
            return Err(Error::Structure(
                "block structure needs at least one row and one column block".into(),
            ));
        }
        if self.row_sizes.iter().any(|&s| s == 0) || self.col_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Structure("block sizes must be >= 1".into()));
        }
        Ok(())
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.row_sizes
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.col_sizes
    }

    /// Total row count `n`.
    pub fn n(&self) -> usize {
        self.row_sizes.iter().sum()
    }

    /// Total column count `m`.
    pub fn m(&self) -> usize {
        self.col_sizes.iter().sum()
    }

    pub fn num_row_blocks(&self) -> usize {
        self.row_sizes.len()
    }

    pub fn num_col_blocks(&self) -> usize {
        self.col_sizes.len()
    }

    /// Cumulative row starts: `t_1 = 0`, `t_{i+1} = t_i + n_i`.
    pub fn row_offsets(&self) -> Vec<usize> {
        offsets_of(&self.row_sizes)
    }

    pub fn col_offsets(&self) -> Vec<usize> {
        offsets_of(&self.col_sizes)
    }

    /// Shape `(n_i, m_j)` of block `(i, j)`.
    pub fn block_shape(&self, i: usize, j: usize) -> (usize, usize) {
        (self.row_sizes[i], self.col_sizes[j])
    }

    /// Map a global row index to `(row block, local index)`.
    pub fn locate_row(&self, x: usize) -> Result<(usize, usize)> {
        locate(x, &self.row_offsets(), &self.row_sizes)
    }

    /// Map a global column index to `(column block, local index)`.
    pub fn locate_col(&self, y: usize) -> Result<(usize, usize)> {
        locate(y, &self.col_offsets(), &self.col_sizes)
    }
}

pub(crate) fn offsets_of(sizes: &[usize]) -> Vec<usize> {
    let mut t = Vec::with_capacity(sizes.len());
    let mut acc = 0;
    for &s in sizes {
        t.push(acc);
        acc += s;
    }
    t
}

/// Offset lookup: the block `i` with `t_i <= x < t_i + n_i`, plus `x - t_i`.
pub(crate) fn locate(x: usize, offsets: &[usize], sizes: &[usize]) -> Result<(usize, usize)> {
    let total: usize = sizes.iter().sum();
    if x >= total {
        return Err(Error::Index(format!("index {x} >= total size {total}")));
    }
    // partition_point returns the count of offsets <= x; the owning block is one before.
    let i = offsets.partition_point(|&t| t <= x) - 1;
    Ok((i, x - offsets[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_cumulative() {
        let s = BlockStructure::new(vec![3, 5, 2], vec![4]).unwrap();
        assert_eq!(s.row_offsets(), vec![0, 3, 8]);
        assert_eq!(s.n(), 10);
        assert_eq!(s.m(), 4);
    }

    #[test]
    fn rejects_zero_sizes() {
        assert!(BlockStructure::new(vec![3, 0], vec![4]).is_err());
        assert!(BlockStructure::new(vec![], vec![4]).is_err());
    }

    #[test]
    fn locate_row_examples() {
        let s = BlockStructure::stacked(vec![3, 5], 4).unwrap();
        assert_eq!(s.locate_row(0).unwrap(), (0, 0));
        assert_eq!(s.locate_row(4).unwrap(), (1, 1));
        assert_eq!(s.locate_row(7).unwrap(), (1, 4));
        assert!(s.locate_row(8).is_err());
    }

    #[test]
    fn locate_matches_linear_scan() {
        let s = BlockStructure::new(vec![2, 7, 1, 4], vec![3]).unwrap();
        let offsets = s.row_offsets();
        for x in 0..s.n() {
            let (i, local) = s.locate_row(x).unwrap();
            // oracle: linear scan over cumulative sums
            let mut oi = 0;
            while oi + 1 < offsets.len() && offsets[oi + 1] <= x {
                oi += 1;
            }
            assert_eq!((i, local), (oi, x - offsets[oi]));
        }
    }

    #[test]
    fn serde_round_trip() {
        let s = BlockStructure::new(vec![3, 5], vec![4, 1]).unwrap();
        let js = serde_json::to_string(&s).unwrap();
        let back: BlockStructure = serde_json::from_str(&js).unwrap();
        assert_eq!(s, back);
    }
}
