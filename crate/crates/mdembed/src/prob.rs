//! Block sampling probability matrix and its derived quantities.

use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;

/// How far the stored entries may drift from summing to exactly 1.
pub const SUM_TOL: f64 = 1e-9;

/// A `k_W x k_V` matrix of block sampling probabilities. Entries are
/// normalized to sum to 1 on construction; the pre-normalization sum is kept
/// for reference since upstream sources often provide raw masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pi: BlockGrid<f64>,
    original_sum: f64,
}

impl ProbabilityMatrix {
    /// Build from nonnegative block masses, normalizing to a total of 1.
    pub fn new(pi: BlockGrid<f64>) -> Result<Self> {
        if pi.items().iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Structure(
                "probability entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = pi.items().iter().sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate("probability mass sums to zero".into()));
        }
        let normalized = pi.map(|_, _, &v| v / sum);
        Ok(Self {
            pi: normalized,
            original_sum: sum,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_w = rows.len();
        if k_w == 0 || rows[0].is_empty() {
            return Err(Error::Structure("probability matrix is empty".into()));
        }
        let k_v = rows[0].len();
        if rows.iter().any(|r| r.len() != k_v) {
            return Err(Error::Shape("ragged probability matrix".into()));
        }
        ProbabilityMatrix::new(BlockGrid::from_vec(
            k_w,
            k_v,
            rows.into_iter().flatten().collect(),
        )?)
    }

    /// Uniform probability over all blocks.
    pub fn uniform(k_w: usize, k_v: usize) -> Result<Self> {
        Self::new(BlockGrid::filled(k_w, k_v, 1.0))
    }

    /// The two vertically stacked blocks case: popular mass `1 - eps` on top,
    /// rare mass `eps` below. Requires `0 < eps < 1/2`.
    pub fn two_block(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::Domain(format!("eps must be in (0, 1/2), got {eps}")));
        }
        Self::from_rows(vec![vec![1.0 - eps], vec![eps]])
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi.items().iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Structure(
                "probability entries must be finite and >= 0".into(),
            ));
        }
        let sum: f64 = self.pi.items().iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Structure(format!(
                "probability entries sum to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(())
    }

    pub fn num_row_blocks(&self) -> usize {
        self.pi.rows()
    }

    pub fn num_col_blocks(&self) -> usize {
        self.pi.cols()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        *self.pi.get(i, j)
    }

    pub fn grid(&self) -> &BlockGrid<f64> {
        &self.pi
    }

    pub fn original_sum(&self) -> f64 {
        self.original_sum
    }

    /// Block-level probability vector `p_i = sum_j pi_ij` over row blocks.
    pub fn row_marginals(&self) -> Vec<f64> {
        (0..self.pi.rows())
            .map(|i| (0..self.pi.cols()).map(|j| self.entry(i, j)).sum())
            .collect()
    }

    pub fn col_marginals(&self) -> Vec<f64> {
        (0..self.pi.cols())
            .map(|j| (0..self.pi.rows()).map(|i| self.entry(i, j)).sum())
            .collect()
    }

    /// Check that this matrix and the block structure agree on block counts.
    pub fn check_shape(&self, structure: &BlockStructure) -> Result<()> {
        if self.pi.rows() != structure.num_row_blocks()
            || self.pi.cols() != structure.num_col_blocks()
        {
            return Err(Error::Shape(format!(
                "probability matrix is {}x{}, structure has {}x{} blocks",
                self.pi.rows(),
                self.pi.cols(),
                structure.num_row_blocks(),
                structure.num_col_blocks()
            )));
        }
        Ok(())
    }

    /// Minimum marginal sampling rate
    /// `eps = min{ min_i (1/n_i) sum_j pi_ij, min_j (1/m_j) sum_i pi_ij }`.
    pub fn min_marginal_rate(&self, structure: &BlockStructure) -> Result<f64> {
        self.check_shape(structure)?;
        let row_min = self
            .row_marginals()
            .iter()
            .zip(structure.row_sizes())
            .map(|(&p, &n)| p / n as f64)
            .fold(f64::INFINITY, f64::min);
        let col_min = self
            .col_marginals()
            .iter()
            .zip(structure.col_sizes())
            .map(|(&p, &m)| p / m as f64)
            .fold(f64::INFINITY, f64::min);
        Ok(row_min.min(col_min))
    }

    /// Size of the low-sample sub-matrix: the row (or column) count of the
    /// block-row (or block-column) attaining the minimum marginal rate.
    pub fn low_sample_size(&self, structure: &BlockStructure) -> Result<usize> {
        self.check_shape(structure)?;
        let (mut best_rate, mut best_size) = (f64::INFINITY, 0);
        for (p, &n) in self.row_marginals().iter().zip(structure.row_sizes()) {
            let rate = p / n as f64;
            if rate < best_rate {
                best_rate = rate;
                best_size = n;
            }
        }
        for (p, &m) in self.col_marginals().iter().zip(structure.col_sizes()) {
            let rate = p / m as f64;
            if rate < best_rate {
                best_rate = rate;
                best_size = m;
            }
        }
        Ok(best_size)
    }
}
