//! Ground-truth block matrices and sampled observations.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;
use crate::spectral::{numerical_rank, singular_values};

/// A dense target matrix with known block structure and per-block ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBlockMatrix {
    pub data: DMatrix<f64>,
    pub structure: BlockStructure,
    pub block_ranks: BlockGrid<usize>,
    /// Rank of the full matrix as claimed by the producer (generators set
    /// this by construction; `verify_ranks` re-derives it numerically).
    pub rank: usize,
}

impl TargetBlockMatrix {
    pub fn new(
        data: DMatrix<f64>,
        structure: BlockStructure,
        block_ranks: BlockGrid<usize>,
        rank: usize,
    ) -> Result<Self> {
        structure.validate()?;
        if data.nrows() != structure.n() || data.ncols() != structure.m() {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, structure expects {}x{}",
                data.nrows(),
                data.ncols(),
                structure.n(),
                structure.m()
            )));
        }
        if block_ranks.rows() != structure.num_row_blocks()
            || block_ranks.cols() != structure.num_col_blocks()
        {
            return Err(Error::Shape("block rank grid does not match structure".into()));
        }
        for ((i, j), &r) in block_ranks.iter() {
            let (n_i, m_j) = structure.block_shape(i, j);
            if r > n_i.min(m_j) {
                return Err(Error::Structure(format!(
                    "block ({i},{j}) rank {r} exceeds min({n_i},{m_j})"
                )));
            }
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structure("matrix entries must be finite".into()));
        }
        Ok(Self {
            data,
            structure,
            block_ranks,
            rank,
        })
    }

    /// Derive block ranks and total rank numerically from a dense matrix.
    pub fn from_dense(data: DMatrix<f64>, structure: BlockStructure) -> Result<Self> {
        structure.validate()?;
        if data.nrows() != structure.n() || data.ncols() != structure.m() {
            return Err(Error::Shape(format!(
                "matrix is {}x{}, structure expects {}x{}",
                data.nrows(),
                data.ncols(),
                structure.n(),
                structure.m()
            )));
        }
        let row_off = structure.row_offsets();
        let col_off = structure.col_offsets();
        let block_ranks = BlockGrid::from_fn(
            structure.num_row_blocks(),
            structure.num_col_blocks(),
            |i, j| {
                let (n_i, m_j) = structure.block_shape(i, j);
                let block = data.view((row_off[i], col_off[j]), (n_i, m_j)).into_owned();
                numerical_rank(&singular_values(&block))
            },
        );
        let rank = numerical_rank(&singular_values(&data));
        Self::new(data, structure, block_ranks, rank)
    }

    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let row_off = self.structure.row_offsets();
        let col_off = self.structure.col_offsets();
        let (n_i, m_j) = self.structure.block_shape(i, j);
        self.data
            .view((row_off[i], col_off[j]), (n_i, m_j))
            .into_owned()
    }

    /// Check the claimed per-block ranks against numerical ranks from SVD.
    pub fn verify_ranks(&self) -> Result<()> {
        for ((i, j), &claimed) in self.block_ranks.iter() {
            let numeric = numerical_rank(&singular_values(&self.block(i, j)));
            if numeric > claimed {
                return Err(Error::Structure(format!(
                    "block ({i},{j}) has numerical rank {numeric} > claimed {claimed}"
                )));
            }
        }
        Ok(())
    }
}

/// One revealed entry `(k, l, M_kl)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// The training sample: revealed entries, the expected count they were drawn
/// for, and the sampling seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub entries: Vec<Observation>,
    pub expected_count: f64,
    pub seed: u64,
}

impl ObservationSet {
    /// Check in-range indices, no duplicate coordinates, and values equal to
    /// the source matrix entries.
    pub fn validate_against(&self, m: &TargetBlockMatrix) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for obs in &self.entries {
            if obs.row >= m.data.nrows() || obs.col >= m.data.ncols() {
                return Err(Error::Index(format!(
                    "observation ({}, {}) outside {}x{}",
                    obs.row,
                    obs.col,
                    m.data.nrows(),
                    m.data.ncols()
                )));
            }
            if !seen.insert((obs.row, obs.col)) {
                return Err(Error::Structure(format!(
                    "duplicate observation at ({}, {})",
                    obs.row, obs.col
                )));
            }
            if obs.value != m.data[(obs.row, obs.col)] {
                return Err(Error::Structure(format!(
                    "observation value at ({}, {}) differs from source",
                    obs.row, obs.col
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
