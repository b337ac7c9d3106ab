//! Deterministic generators for block matrices with controlled ranks,
//! spectra and rank additivity.
//!
//! Orthonormal factors come from QR decompositions of seeded standard-normal
//! matrices, which makes range disjointness (and hence rank additivity) a
//! construction guarantee rather than a high-probability event.

use nalgebra::DMatrix;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;
use crate::prob::ProbabilityMatrix;
use crate::rng::{rng_from, streams};
use crate::spectral::power_spectrum;
use crate::target::TargetBlockMatrix;

/// Per-block singular value model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectrumSpec {
    /// `sigma_k = rho * k^(-beta)`.
    Power { rho: f64, beta: f64 },
    /// Explicit nonincreasing positive list; its length must equal the rank.
    Explicit { sigmas: Vec<f64> },
    /// All singular values equal to `value`.
    Flat { value: f64 },
}

impl SpectrumSpec {
    /// Materialize `r` singular values, validating positivity and order.
    pub fn resolve(&self, r: usize) -> Result<Vec<f64>> {
        let sv = match self {
            SpectrumSpec::Power { rho, beta } => {
                if *rho <= 0.0 || *beta < 0.0 {
                    return Err(Error::Domain("power spectrum needs rho > 0, beta >= 0".into()));
                }
                power_spectrum(*rho, *beta, r)
            }
            SpectrumSpec::Explicit { sigmas } => {
                if sigmas.len() != r {
                    return Err(Error::Shape(format!(
                        "explicit spectrum has {} values, rank is {r}",
                        sigmas.len()
                    )));
                }
                sigmas.clone()
            }
            SpectrumSpec::Flat { value } => {
                if *value <= 0.0 {
                    return Err(Error::Domain("flat spectrum needs a positive value".into()));
                }
                vec![*value; r]
            }
        };
        if sv.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::Domain("singular values must be positive".into()));
        }
        if sv.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Domain("singular values must be nonincreasing".into()));
        }
        Ok(sv)
    }
}

/// Recipe for a synthetic target: structure, per-block ranks and spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub structure: BlockStructure,
    pub block_ranks: BlockGrid<usize>,
    pub spectra: BlockGrid<SpectrumSpec>,
    pub seed: u64,
}

impl SynthSpec {
    /// Every block with the same spectrum model.
    pub fn uniform_spectrum(
        structure: BlockStructure,
        block_ranks: BlockGrid<usize>,
        spectrum: SpectrumSpec,
        seed: u64,
    ) -> Self {
        let spectra = BlockGrid::filled(
            structure.num_row_blocks(),
            structure.num_col_blocks(),
            spectrum,
        );
        Self {
            structure,
            block_ranks,
            spectra,
            seed,
        }
    }
}

/// Matrix with orthonormal columns drawn from a seeded Gaussian via QR.
/// Column signs are fixed by making the R diagonal nonnegative.
fn random_orthonormal(rows: usize, cols: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    assert!(cols <= rows, "orthonormal factor needs cols <= rows");
    let mut rng = rng_from(seed, stream);
    let g = DMatrix::from_fn(rows, cols, |_, _| -> f64 {
        rand::Rng::sample(&mut rng, StandardNormal)
    });
    let (mut q, r) = g.qr().unpack();
    for c in 0..cols {
        if r[(c, c)] < 0.0 {
            for i in 0..rows {
                q[(i, c)] = -q[(i, c)];
            }
        }
    }
    q
}

/// One low-rank block `U diag(sigma) V^T` with the requested spectrum.
pub fn gen_low_rank_block(
    n: usize,
    m: usize,
    r: usize,
    spectrum: &SpectrumSpec,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if r > n.min(m) {
        return Err(Error::Structure(format!(
            "rank {r} exceeds min({n}, {m})"
        )));
    }
    if r == 0 {
        return Ok(DMatrix::zeros(n, m));
    }
    let sigmas = spectrum.resolve(r)?;
    let u = random_orthonormal(n, r, seed, streams::SYNTH_ROW);
    let v = random_orthonormal(m, r, seed, streams::SYNTH_COL);
    Ok(scaled_product(&u, &sigmas, &v))
}

fn scaled_product(u: &DMatrix<f64>, sigmas: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut us = u.clone();
    for (k, &s) in sigmas.iter().enumerate() {
        for i in 0..us.nrows() {
            us[(i, k)] *= s;
        }
    }
    us * v.transpose()
}

/// Generate a rank-additive target matrix. Within each block row the column
/// spaces of the blocks are slices of one orthonormal basis (and likewise for
/// row spaces within each block column), so ranges intersect only at the
/// origin and the total rank is exactly the sum of block ranks.
pub fn gen_rank_additive(spec: &SynthSpec) -> Result<TargetBlockMatrix> {
    let s = &spec.structure;
    s.validate()?;
    let (k_w, k_v) = (s.num_row_blocks(), s.num_col_blocks());
    if spec.block_ranks.rows() != k_w || spec.block_ranks.cols() != k_v {
        return Err(Error::Shape("block rank grid does not match structure".into()));
    }
    if spec.spectra.rows() != k_w || spec.spectra.cols() != k_v {
        return Err(Error::Shape("spectra grid does not match structure".into()));
    }

    // feasibility: each block row/column must fit its disjoint subspaces
    for i in 0..k_w {
        let need: usize = (0..k_v).map(|j| *spec.block_ranks.get(i, j)).sum();
        let n_i = s.row_sizes()[i];
        if need > n_i {
            return Err(Error::Structure(format!(
                "block row {i}: total rank {need} exceeds n_{i} = {n_i}"
            )));
        }
    }
    for j in 0..k_v {
        let need: usize = (0..k_w).map(|i| *spec.block_ranks.get(i, j)).sum();
        let m_j = s.col_sizes()[j];
        if need > m_j {
            return Err(Error::Structure(format!(
                "block column {j}: total rank {need} exceeds m_{j} = {m_j}"
            )));
        }
    }

    // one orthonormal basis per block row (column spaces) and per block
    // column (row spaces); each block takes a disjoint slice
    let row_bases: Vec<DMatrix<f64>> = (0..k_w)
        .map(|i| {
            let total: usize = (0..k_v).map(|j| *spec.block_ranks.get(i, j)).sum();
            let n_i = s.row_sizes()[i];
            if total == 0 {
                DMatrix::zeros(n_i, 0)
            } else {
                random_orthonormal(n_i, total, spec.seed, streams::SYNTH_ROW + i as u64)
            }
        })
        .collect();
    let col_bases: Vec<DMatrix<f64>> = (0..k_v)
        .map(|j| {
            let total: usize = (0..k_w).map(|i| *spec.block_ranks.get(i, j)).sum();
            let m_j = s.col_sizes()[j];
            if total == 0 {
                DMatrix::zeros(m_j, 0)
            } else {
                random_orthonormal(m_j, total, spec.seed, streams::SYNTH_COL + j as u64)
            }
        })
        .collect();

    let row_off = s.row_offsets();
    let col_off = s.col_offsets();
    let mut data = DMatrix::zeros(s.n(), s.m());
    let mut row_used = vec![0usize; k_w];
    let mut col_used = vec![0usize; k_v];
    for i in 0..k_w {
        for j in 0..k_v {
            let r = *spec.block_ranks.get(i, j);
            if r == 0 {
                continue;
            }
            let sigmas = spec.spectra.get(i, j).resolve(r)?;
            let u = row_bases[i].columns(row_used[i], r).into_owned();
            let v = col_bases[j].columns(col_used[j], r).into_owned();
            row_used[i] += r;
            col_used[j] += r;
            let block = scaled_product(&u, &sigmas, &v);
            let (n_i, m_j) = s.block_shape(i, j);
            for bi in 0..n_i {
                for bj in 0..m_j {
                    data[(row_off[i] + bi, col_off[j] + bj)] = block[(bi, bj)];
                }
            }
        }
    }

    let rank: usize = spec.block_ranks.items().iter().sum();
    TargetBlockMatrix::new(data, s.clone(), spec.block_ranks.clone(), rank)
}

/// The two vertically stacked blocks scenario: popular block of rank `r1` on
/// top, rare block of rank `r2` below, with sampling mass `(1-eps, eps)`.
/// Each block gets a flat spectrum at `sqrt(n m / r)` so matrix entries come
/// out with unit variance, the scale the SGD defaults are tuned for.
/// Requires `0 < eps < 1/2`.
pub fn gen_two_block_scenario(
    n_per_block: usize,
    m: usize,
    r1: usize,
    r2: usize,
    eps: f64,
    seed: u64,
) -> Result<(TargetBlockMatrix, ProbabilityMatrix)> {
    let pi = ProbabilityMatrix::two_block(eps)?;
    let structure = BlockStructure::stacked(vec![n_per_block, n_per_block], m)?;
    let area = (n_per_block * m) as f64;
    let flat = |r: usize| SpectrumSpec::Flat {
        value: if r == 0 { 1.0 } else { (area / r as f64).sqrt() },
    };
    let spec = SynthSpec {
        structure,
        block_ranks: BlockGrid::from_vec(2, 1, vec![r1, r2])?,
        spectra: BlockGrid::from_vec(2, 1, vec![flat(r1), flat(r2)])?,
        seed,
    };
    Ok((gen_rank_additive(&spec)?, pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{numerical_rank, singular_values};
    use approx::assert_relative_eq;

    #[test]
    fn zero_rank_block_is_zero() {
        let m = gen_low_rank_block(5, 4, 0, &SpectrumSpec::Flat { value: 1.0 }, 1).unwrap();
        assert_eq!(m, DMatrix::zeros(5, 4));
    }

    #[test]
    fn flat_full_rank_has_unit_singular_values() {
        let m = gen_low_rank_block(6, 4, 4, &SpectrumSpec::Flat { value: 1.0 }, 2).unwrap();
        for s in singular_values(&m) {
            assert_relative_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn power_spectrum_reproduced_by_svd() {
        let m = gen_low_rank_block(20, 15, 8, &SpectrumSpec::Power { rho: 10.0, beta: 0.5 }, 3)
            .unwrap();
        let sv = singular_values(&m);
        let want = power_spectrum(10.0, 0.5, 8);
        for (got, want) in sv.iter().zip(&want) {
            assert_relative_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_low_rank_block(10, 8, 3, &SpectrumSpec::Flat { value: 2.0 }, 7).unwrap();
        let b = gen_low_rank_block(10, 8, 3, &SpectrumSpec::Flat { value: 2.0 }, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_block_scenario_ranks() {
        let (t, pi) = gen_two_block_scenario(30, 20, 8, 2, 0.1, 11).unwrap();
        assert_eq!(numerical_rank(&singular_values(&t.block(0, 0))), 8);
        assert_eq!(numerical_rank(&singular_values(&t.block(1, 0))), 2);
        assert_relative_eq!(pi.entry(0, 0), 0.9);
        assert_relative_eq!(pi.entry(1, 0), 0.1);
        // construction keeps total rank additive
        assert_eq!(numerical_rank(&singular_values(&t.data)), 10);
    }

    #[test]
    fn two_block_scenario_rejects_eps_half() {
        assert!(gen_two_block_scenario(10, 10, 2, 1, 0.5, 1).is_err());
    }

    #[test]
    fn rank_budget_feasibility_checked() {
        let structure = BlockStructure::new(vec![3, 10], vec![10]).unwrap();
        let spec = SynthSpec::uniform_spectrum(
            structure,
            BlockGrid::from_vec(2, 1, vec![4, 1]).unwrap(), // 4 > n_0 = 3
            SpectrumSpec::Flat { value: 1.0 },
            0,
        );
        assert!(gen_rank_additive(&spec).is_err());
    }

    #[test]
    fn four_block_rank_additive() {
        let structure = BlockStructure::new(vec![12, 9], vec![10, 11]).unwrap();
        let spec = SynthSpec::uniform_spectrum(
            structure,
            BlockGrid::from_vec(2, 2, vec![1, 2, 1, 1]).unwrap(),
            SpectrumSpec::Flat { value: 1.0 },
            5,
        );
        let t = gen_rank_additive(&spec).unwrap();
        assert_eq!(numerical_rank(&singular_values(&t.data)), 5);
        t.verify_ranks().unwrap();
    }
}
