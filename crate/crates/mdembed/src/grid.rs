//! Row-major grid of per-block values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `k_W x k_V` grid holding one value per block of a block matrix.
/// Indexed `(i, j)` = (row block, column block), stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGrid<T> {
    rows: usize,
    cols: usize,
    items: Vec<T>,
}

impl<T> BlockGrid<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut items = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                items.push(f(i, j));
            }
        }
        Self { rows, cols, items }
    }

    /// Wrap a row-major vector. Errors when the length is not `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, items: Vec<T>) -> Result<Self> {
        if items.len() != rows * cols {
            return Err(Error::Shape(format!(
                "grid expects {}x{}={} items, got {}",
                rows,
                cols,
                rows * cols,
                items.len()
            )));
        }
        Ok(Self { rows, cols, items })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.items[i * self.cols + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.items[i * self.cols + j]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &T)> {
        let cols = self.cols;
        self.items
            .iter()
            .enumerate()
            .map(move |(n, v)| ((n / cols, n % cols), v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(usize, usize, &T) -> U) -> BlockGrid<U> {
        BlockGrid::from_fn(self.rows, self.cols, |i, j| f(i, j, self.get(i, j)))
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }
}

impl<T: Clone> BlockGrid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            items: vec![value; rows * cols],
        }
    }
}
