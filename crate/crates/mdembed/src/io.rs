//! File formats: dense CSV matrices, frequency and spectra CSV, JSON
//! documents, and directory-based layer serialization.
//!
//! CSV floats are written with Rust's shortest round-trip formatting, so
//! write-then-read reproduces values exactly. Matrix CSV readers skip an
//! optional header row.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::BlockGrid;
use crate::layer::{MDEmbeddingLayer, Projection};
use crate::prob::ProbabilityMatrix;
use crate::spectral::SpectralProfile;

/// Write a dense matrix as row-major CSV without a header.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&m[(r, c)].to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a dense CSV matrix; a non-numeric first row is treated as a header.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(e) if ln == 0 => {
                // header row
                let _ = e;
            }
            Err(e) => {
                return Err(Error::Parse(format!(
                    "{}:{}: bad number: {e}",
                    path.display(),
                    ln + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse(format!("{}: ragged rows", path.display())));
    }
    let nrows = rows.len();
    Ok(DMatrix::from_fn(nrows, cols, |r, c| rows[r][c]))
}

/// Read block sampling probabilities from a dense CSV (masses are
/// normalized on ingest).
pub fn read_pi_csv(path: &Path) -> Result<ProbabilityMatrix> {
    let m = read_matrix_csv(path)?;
    let grid = BlockGrid::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    ProbabilityMatrix::new(grid)
}

/// Read an `id,count` frequency CSV (header optional). Ids must be the
/// complete range `0..n`; counts are returned in id order.
pub fn read_freq_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let id = parts.next().map(str::trim).unwrap_or_default();
        let count = parts.next().map(str::trim);
        let (Ok(id), Some(count)) = (id.parse::<usize>(), count) else {
            if ln == 0 {
                continue; // header
            }
            return Err(Error::Parse(format!(
                "{}:{}: expected `id,count`",
                path.display(),
                ln + 1
            )));
        };
        let count: f64 = count.parse().map_err(|e| {
            Error::Parse(format!("{}:{}: bad count: {e}", path.display(), ln + 1))
        })?;
        pairs.push((id, count));
    }
    if pairs.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let n = pairs.len();
    let mut counts = vec![f64::NAN; n];
    for (id, c) in pairs {
        if id >= n || !counts[id].is_nan() {
            return Err(Error::Parse(format!(
                "{}: ids must be exactly 0..{n} without repeats",
                path.display()
            )));
        }
        counts[id] = c;
    }
    Ok(counts)
}

/// Write per-block spectra as `block_i,block_j,k,sigma` rows (1-based k).
pub fn write_spectra_csv(path: &Path, spectra: &SpectralProfile) -> Result<()> {
    let mut out = String::from("block_i,block_j,k,sigma\n");
    for ((i, j), sv) in spectra.grid().iter() {
        for (k, s) in sv.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i, j, k + 1, s));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a `block_i,block_j,k,sigma` spectra CSV (header optional). Block
/// grid shape is inferred from the maximum indices; every block must list
/// `k = 1..r` contiguously.
pub fn read_spectra_csv(path: &Path) -> Result<SpectralProfile> {
    let text = fs::read_to_string(path)?;
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Parse(format!(
                "{}:{}: expected `block_i,block_j,k,sigma`",
                path.display(),
                ln + 1
            )));
        }
        match (
            parts[0].parse::<usize>(),
            parts[1].parse::<usize>(),
            parts[2].parse::<usize>(),
            parts[3].parse::<f64>(),
        ) {
            (Ok(i), Ok(j), Ok(k), Ok(s)) => entries.push((i, j, k, s)),
            _ if ln == 0 => {} // header
            _ => {
                return Err(Error::Parse(format!(
                    "{}:{}: bad spectra row",
                    path.display(),
                    ln + 1
                )))
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let k_w = entries.iter().map(|e| e.0).max().unwrap() + 1;
    let k_v = entries.iter().map(|e| e.1).max().unwrap() + 1;
    let mut lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k_w * k_v];
    for (i, j, k, s) in entries {
        if k == 0 {
            return Err(Error::Parse(format!(
                "{}: singular value indices are 1-based",
                path.display()
            )));
        }
        lists[i * k_v + j].push((k, s));
    }
    let mut grid_items = Vec::with_capacity(k_w * k_v);
    for (b, mut pairs) in lists.into_iter().enumerate() {
        pairs.sort_by_key(|&(k, _)| k);
        for (pos, &(k, _)) in pairs.iter().enumerate() {
            if k != pos + 1 {
                return Err(Error::Parse(format!(
                    "{}: block ({},{}) is missing k = {}",
                    path.display(),
                    b / k_v,
                    b % k_v,
                    pos + 1
                )));
            }
        }
        grid_items.push(pairs.into_iter().map(|(_, s)| s).collect::<Vec<f64>>());
    }
    SpectralProfile::new(BlockGrid::from_vec(k_w, k_v, grid_items)?)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Layer header written alongside the per-block CSV files.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct LayerHeader {
    offsets: Vec<usize>,
    block_sizes: Vec<usize>,
    dims: Vec<usize>,
    base_dim: usize,
    /// "identity" or "dense" per block.
    projections: Vec<String>,
}

/// Save a layer into a directory: `header.json`, `block_<i>.csv` per block
/// and `proj_<i>.csv` per dense projection.
pub fn save_layer(dir: &Path, layer: &MDEmbeddingLayer) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = LayerHeader {
        offsets: layer.offsets().to_vec(),
        block_sizes: layer.block_sizes(),
        dims: layer.dims(),
        base_dim: layer.base_dim(),
        projections: (0..layer.num_blocks())
            .map(|i| match layer.projection(i) {
                Projection::Identity => "identity".to_string(),
                Projection::Dense(_) => "dense".to_string(),
            })
            .collect(),
    };
    write_json(&dir.join("header.json"), &header)?;
    for i in 0..layer.num_blocks() {
        write_matrix_csv(&dir.join(format!("block_{i}.csv")), layer.block(i))?;
        if let Projection::Dense(p) = layer.projection(i) {
            write_matrix_csv(&dir.join(format!("proj_{i}.csv")), p)?;
        }
    }
    Ok(())
}

/// Load a layer previously written by [`save_layer`].
pub fn load_layer(dir: &Path) -> Result<MDEmbeddingLayer> {
    let header: LayerHeader = read_json(&dir.join("header.json"))?;
    let layout = crate::layout::MDLayout::new(
        header.dims.iter().map(|&d| d as f64).collect(),
        header.base_dim,
    )?;
    let mut layer = MDEmbeddingLayer::build(
        &layout,
        &header.block_sizes,
        crate::layer::Init::Constant(0.0),
        0,
    )?;
    for i in 0..header.block_sizes.len() {
        let block = read_matrix_csv(&dir.join(format!("block_{i}.csv")))?;
        if block.shape() != (header.block_sizes[i], header.dims[i]) {
            return Err(Error::Shape(format!(
                "block {i} file is {:?}, header says ({}, {})",
                block.shape(),
                header.block_sizes[i],
                header.dims[i]
            )));
        }
        *layer.block_mut(i) = block;
        match header.projections.get(i).map(String::as_str) {
            Some("identity") => *layer.projection_mut(i) = Projection::Identity,
            Some("dense") => {
                let p = read_matrix_csv(&dir.join(format!("proj_{i}.csv")))?;
                if p.shape() != (header.dims[i], header.base_dim) {
                    return Err(Error::Shape(format!("projection {i} has wrong shape")));
                }
                *layer.projection_mut(i) = Projection::Dense(p);
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown projection kind {other:?} for block {i}"
                )))
            }
        }
    }
    Ok(layer)
}
