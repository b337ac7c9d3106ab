//! The runnable mixed-dimension embedding layer: block tables, projections
//! into the base dimension, and offset lookup.

use nalgebra::{DMatrix, RowDVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block;
use crate::error::{Error, Result};
use crate::layout::MDLayout;
use crate::rng::{derive_seed, rng_from, streams};

/// Projection lifting a block's rows into the base dimension. Blocks already
/// at the base dimension keep an identity marker instead of a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Identity,
    Dense(DMatrix<f64>),
}

/// Weight initialization for embedding blocks and projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Uniform Xavier: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    XavierUniform,
    /// Every entry set to the given constant.
    Constant(f64),
}

/// Embedding vectors are row vectors throughout; a lookup of global index
/// `x` in block `i` returns `E_i[x - t_i] * P_i`, always of length
/// `base_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MDEmbeddingLayer {
    blocks: Vec<DMatrix<f64>>,
    projections: Vec<Projection>,
    offsets: Vec<usize>,
    base_dim: usize,
}

impl MDEmbeddingLayer {
    /// Build a layer from an integral layout over the given block row counts.
    /// Deterministic for a fixed seed; matrix `k` of the layer draws from
    /// substream `LAYER_INIT + k`.
    pub fn build(
        layout: &MDLayout,
        row_sizes: &[usize],
        init: Init,
        seed: u64,
    ) -> Result<MDEmbeddingLayer> {
        if layout.dims.len() != row_sizes.len() {
            return Err(Error::Shape(format!(
                "layout has {} dims, {} blocks were given",
                layout.dims.len(),
                row_sizes.len()
            )));
        }
        let dims = layout.dims_as_usize()?;
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Structure("layer dimensions must be >= 1".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d > layout.base_dim) {
            return Err(Error::Structure(format!(
                "block dimension {d} exceeds base dimension {}",
                layout.base_dim
            )));
        }
        let mut blocks = Vec::with_capacity(dims.len());
        let mut projections = Vec::with_capacity(dims.len());
        let mut stream = streams::LAYER_INIT;
        for (&n_i, &d_i) in row_sizes.iter().zip(&dims) {
            blocks.push(init_matrix(n_i, d_i, init, seed, stream));
            stream += 1;
            if d_i == layout.base_dim {
                projections.push(Projection::Identity);
            } else {
                projections.push(Projection::Dense(init_matrix(
                    d_i,
                    layout.base_dim,
                    init,
                    seed,
                    stream,
                )));
                stream += 1;
            }
        }
        Ok(MDEmbeddingLayer {
            blocks,
            projections,
            offsets: block::offsets_of(row_sizes),
            base_dim: layout.base_dim,
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.ncols()).collect()
    }

    /// Total embedding vectors `n`.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.blocks[i]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.blocks[i]
    }

    pub fn projection(&self, i: usize) -> &Projection {
        &self.projections[i]
    }

    pub fn projection_mut(&mut self, i: usize) -> &mut Projection {
        &mut self.projections[i]
    }

    /// Embedding vector for global index `x`: the block row lifted into the
    /// base dimension. Read-only; safe to call concurrently.
    pub fn forward(&self, x: usize) -> Result<RowDVector<f64>> {
        let (i, local) = self.locate(x)?;
        let row = self.blocks[i].row(local);
        Ok(match &self.projections[i] {
            Projection::Identity => row.into_owned(),
            Projection::Dense(p) => row * p,
        })
    }

    /// Multi-hot lookup: fetch every index and reduce elementwise.
    pub fn forward_multi(&self, indices: &[usize], reduce: Reduce) -> Result<RowDVector<f64>> {
        if indices.is_empty() {
            return Err(Error::Structure("multi-hot lookup needs at least one index".into()));
        }
        let mut acc = self.forward(indices[0])?;
        for &x in &indices[1..] {
            acc += self.forward(x)?;
        }
        if reduce == Reduce::Mean {
            acc /= indices.len() as f64;
        }
        Ok(acc)
    }

    /// Offset lookup `(block, local)` for a global index.
    pub fn locate(&self, x: usize) -> Result<(usize, usize)> {
        locate(x, &self.offsets, &self.block_sizes())
    }

    /// Gradients of `||forward(x) - target||^2` with respect to the looked-up
    /// embedding row and (when dense) the block's projection.
    pub fn squared_error_grads(
        &self,
        x: usize,
        target: &RowDVector<f64>,
    ) -> Result<LookupGrads> {
        if target.len() != self.base_dim {
            return Err(Error::Shape("target length must equal base dimension".into()));
        }
        let (i, local) = self.locate(x)?;
        let out = self.forward(x)?;
        let err = 2.0 * (out - target);
        let row = self.blocks[i].row(local).into_owned();
        Ok(match &self.projections[i] {
            Projection::Identity => LookupGrads {
                block: i,
                local,
                row_grad: err,
                projection_grad: None,
            },
            Projection::Dense(p) => LookupGrads {
                block: i,
                local,
                row_grad: &err * p.transpose(),
                projection_grad: Some(row.transpose() * err),
            },
        })
    }
}

/// Reduction applied by multi-hot lookups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Sum,
    Mean,
}

/// Gradients returned by [`MDEmbeddingLayer::squared_error_grads`].
#[derive(Debug, Clone, PartialEq)]
pub struct LookupGrads {
    pub block: usize,
    pub local: usize,
    pub row_grad: RowDVector<f64>,
    pub projection_grad: Option<DMatrix<f64>>,
}

/// Standalone offset lookup over an explicit offsets/sizes pair.
pub fn locate(x: usize, offsets: &[usize], sizes: &[usize]) -> Result<(usize, usize)> {
    block::locate(x, offsets, sizes)
}

fn init_matrix(rows: usize, cols: usize, init: Init, seed: u64, stream: u64) -> DMatrix<f64> {
    match init {
        Init::Constant(c) => DMatrix::from_element(rows, cols, c),
        Init::XavierUniform => {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let mut rng = rng_from(derive_seed(seed, stream), stream);
            DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
        }
    }
}
