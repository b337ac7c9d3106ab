//! Singular value spectra: per-block profiles, power-law fits, incoherence
//! and per-block conditioning diagnostics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;

/// Numerical-rank tolerance relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-8;

/// A thin singular value decomposition `M = U diag(sigma) V^T` with
/// `p = min(n, m)` columns, singular values descending. Columns whose
/// singular value is numerically zero are zeroed rather than completed to an
/// orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub sigmas: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD via the symmetric eigendecomposition of the smaller Gram
/// matrix, singular values refined as `||M v_k||`. The bidiagonal SVD can
/// silently lose accuracy on severely rank-deficient inputs; the Gram route
/// is reliable for the small dense matrices this crate works with.
pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (n, cols) = m.shape();
    if n < cols {
        let t = thin_svd(&m.transpose());
        return ThinSvd {
            u: t.v,
            sigmas: t.sigmas,
            v: t.u,
        };
    }
    // n >= cols: eigendecompose M^T M (cols x cols)
    let eig = SymmetricEigen::new(m.transpose() * m);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut v = DMatrix::zeros(cols, cols);
    for (c, &k) in order.iter().enumerate() {
        v.column_mut(c).copy_from(&eig.eigenvectors.column(k));
    }
    let mut pairs: Vec<(f64, usize)> = (0..cols)
        .map(|c| ((m * v.column(c)).norm(), c))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let sigmas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut v_sorted = DMatrix::zeros(cols, cols);
    let mut u = DMatrix::zeros(n, cols);
    let cutoff = sigmas.first().copied().unwrap_or(0.0) * f64::EPSILON.sqrt() * 1e-4;
    for (c, &(s, src)) in pairs.iter().enumerate() {
        v_sorted.column_mut(c).copy_from(&v.column(src));
        if s > cutoff && s > 0.0 {
            let col = m * v.column(src) / s;
            u.column_mut(c).copy_from(&col);
        }
    }
    ThinSvd {
        u,
        sigmas,
        v: v_sorted,
    }
}

/// Singular values of a matrix in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    thin_svd(m).sigmas
}

/// Best rank-`r` factors `(W, V)` with `W = U_r diag(sigma_r)` so that
/// `W V^T` is the truncated-SVD approximation.
pub fn truncated_factors(m: &DMatrix<f64>, r: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(r <= m.nrows().min(m.ncols()), "rank exceeds matrix size");
    let svd = thin_svd(m);
    let mut w = DMatrix::zeros(m.nrows(), r);
    let mut v = DMatrix::zeros(m.ncols(), r);
    for k in 0..r {
        w.column_mut(k).copy_from(&(svd.u.column(k) * svd.sigmas[k]));
        v.column_mut(k).copy_from(&svd.v.column(k));
    }
    (w, v)
}

/// Count of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(svals: &[f64]) -> usize {
    let max = svals.first().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0;
    }
    svals.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Descending singular values of one block, truncated at numerical rank.
pub fn spectral_decay(block: &DMatrix<f64>) -> Vec<f64> {
    let sv = singular_values(block);
    let r = numerical_rank(&sv);
    sv[..r].to_vec()
}

/// A least-squares power-law fit `sigma(k) ~= rho * k^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub rho: f64,
    pub beta: f64,
    /// Mean squared residual of log sigma against the fitted line.
    pub residual: f64,
}

/// Fit `log sigma_k = log rho - beta log k` by least squares over `k = 1..r`.
pub fn power_fit(sigmas: &[f64]) -> Result<PowerFit> {
    if sigmas.len() < 2 {
        return Err(Error::Degenerate(
            "power fit needs at least two singular values".into(),
        ));
    }
    if sigmas.iter().any(|&s| s <= 0.0) {
        return Err(Error::Degenerate(
            "power fit needs strictly positive singular values".into(),
        ));
    }
    let n = sigmas.len() as f64;
    let xs: Vec<f64> = (1..=sigmas.len()).map(|k| (k as f64).ln()).collect();
    let ys: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / n;
    Ok(PowerFit {
        rho: intercept.exp(),
        beta: -slope,
        residual,
    })
}

/// Analytic power-decay spectrum `sigma_k = rho * k^(-beta)` for `k = 1..=r`.
pub fn power_spectrum(rho: f64, beta: f64, r: usize) -> Vec<f64> {
    (1..=r).map(|k| rho * (k as f64).powf(-beta)).collect()
}

/// Per-block descending singular-value lists, optionally annotated with
/// power-law fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    spectra: BlockGrid<Vec<f64>>,
    fits: Option<BlockGrid<Option<PowerFit>>>,
}

impl SpectralProfile {
    pub fn new(spectra: BlockGrid<Vec<f64>>) -> Result<Self> {
        for ((i, j), sv) in spectra.iter() {
            if sv.iter().any(|&s| !s.is_finite() || s <= 0.0) {
                return Err(Error::Structure(format!(
                    "block ({i},{j}) spectrum has non-positive entries"
                )));
            }
            if sv.windows(2).any(|w| w[0] < w[1]) {
                return Err(Error::Structure(format!(
                    "block ({i},{j}) spectrum is not nonincreasing"
                )));
            }
        }
        Ok(Self {
            spectra,
            fits: None,
        })
    }

    /// SVD every block of a dense matrix under the given structure.
    pub fn from_matrix(data: &DMatrix<f64>, structure: &BlockStructure) -> Result<Self> {
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
        let spectra = BlockGrid::from_fn(
            structure.num_row_blocks(),
            structure.num_col_blocks(),
            |i, j| {
                let (n_i, m_j) = structure.block_shape(i, j);
                let block = data.view((row_off[i], col_off[j]), (n_i, m_j)).into_owned();
                spectral_decay(&block)
            },
        );
        SpectralProfile::new(spectra)
    }

    /// Same power spectrum `rho k^(-beta)` in every block, truncated at each
    /// block's maximum possible rank `min(n_i, m_j)`.
    pub fn power(structure: &BlockStructure, rho: f64, beta: f64) -> Result<Self> {
        if rho <= 0.0 || beta < 0.0 {
            return Err(Error::Domain("power spectrum needs rho > 0, beta >= 0".into()));
        }
        let spectra = BlockGrid::from_fn(
            structure.num_row_blocks(),
            structure.num_col_blocks(),
            |i, j| {
                let (n_i, m_j) = structure.block_shape(i, j);
                power_spectrum(rho, beta, n_i.min(m_j))
            },
        );
        SpectralProfile::new(spectra)
    }

    pub fn grid(&self) -> &BlockGrid<Vec<f64>> {
        &self.spectra
    }

    pub fn block(&self, i: usize, j: usize) -> &[f64] {
        self.spectra.get(i, j)
    }

    pub fn num_row_blocks(&self) -> usize {
        self.spectra.rows()
    }

    pub fn num_col_blocks(&self) -> usize {
        self.spectra.cols()
    }

    /// Attach per-block power fits (None where fewer than two values).
    pub fn with_power_fits(mut self) -> Self {
        let fits = self.spectra.map(|_, _, sv| power_fit(sv).ok());
        self.fits = Some(fits);
        self
    }

    pub fn fits(&self) -> Option<&BlockGrid<Option<PowerFit>>> {
        self.fits.as_ref()
    }

    pub fn check_shape(&self, structure: &BlockStructure) -> Result<()> {
        if self.spectra.rows() != structure.num_row_blocks()
            || self.spectra.cols() != structure.num_col_blocks()
        {
            return Err(Error::Shape(format!(
                "spectral profile is {}x{} blocks, structure has {}x{}",
                self.spectra.rows(),
                self.spectra.cols(),
                structure.num_row_blocks(),
                structure.num_col_blocks()
            )));
        }
        Ok(())
    }
}

/// Incoherence, condition number and aspect ratio of one block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub incoherence: f64,
    pub condition: f64,
    pub aspect: f64,
}

/// Incoherence `mu = max(max_i (n/r) ||U_i||^2, max_j (m/r) ||V_j||^2)`
/// over the rank-`r` singular subspaces. Always in `[1, max(n,m)/r]`.
pub fn incoherence(block: &DMatrix<f64>) -> Result<f64> {
    let svd = thin_svd(block);
    let r = numerical_rank(&svd.sigmas);
    if r == 0 {
        return Err(Error::Degenerate("incoherence of a zero matrix".into()));
    }
    let n = block.nrows() as f64;
    let m = block.ncols() as f64;
    let mut mu: f64 = 0.0;
    for i in 0..block.nrows() {
        let lev: f64 = (0..r).map(|c| svd.u[(i, c)] * svd.u[(i, c)]).sum();
        mu = mu.max(n / r as f64 * lev);
    }
    for j in 0..block.ncols() {
        let lev: f64 = (0..r).map(|c| svd.v[(j, c)] * svd.v[(j, c)]).sum();
        mu = mu.max(m / r as f64 * lev);
    }
    Ok(mu)
}

/// Diagnostics for one block: incoherence, condition number sigma_1/sigma_r
/// at the numerical rank, and aspect ratio max(n,m)/min(n,m).
pub fn block_diagnostics(block: &DMatrix<f64>) -> Result<BlockDiagnostics> {
    let sv = spectral_decay(block);
    if sv.is_empty() {
        return Err(Error::Degenerate("diagnostics of a zero matrix".into()));
    }
    let condition = sv[0] / *sv.last().unwrap();
    let aspect = block.nrows().max(block.ncols()) as f64 / block.nrows().min(block.ncols()) as f64;
    Ok(BlockDiagnostics {
        incoherence: incoherence(block)?,
        condition,
        aspect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_fit_recovers_exact_model() {
        let sv = power_spectrum(10.0, 0.5, 8);
        let fit = power_fit(&sv).unwrap();
        assert_relative_eq!(fit.rho, 10.0, max_relative = 1e-10);
        assert_relative_eq!(fit.beta, 0.5, max_relative = 1e-10);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn power_fit_flat_spectrum() {
        let fit = power_fit(&[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(fit.beta, 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.rho, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn power_fit_needs_two_values() {
        assert!(power_fit(&[1.0]).is_err());
    }

    #[test]
    fn incoherence_flat_orthonormal_is_one() {
        // scaled identity: perfectly flat leverage scores
        let m = DMatrix::<f64>::identity(6, 6) * 3.0;
        assert_relative_eq!(incoherence(&m).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn incoherence_spike_is_n() {
        // e1 e1^T: a single standard-basis spike has leverage 1 on one row
        let n = 9;
        let mut m = DMatrix::<f64>::zeros(n, n);
        m[(0, 0)] = 1.0;
        assert_relative_eq!(incoherence(&m).unwrap(), n as f64, epsilon = 1e-9);
    }

    #[test]
    fn incoherence_rejects_zero_matrix() {
        let m = DMatrix::<f64>::zeros(4, 4);
        assert!(incoherence(&m).is_err());
    }

    #[test]
    fn spectrum_validation() {
        let bad = BlockGrid::from_vec(1, 1, vec![vec![1.0, 2.0]]).unwrap();
        assert!(SpectralProfile::new(bad).is_err());
        let ok = BlockGrid::from_vec(1, 1, vec![vec![2.0, 1.0]]).unwrap();
        assert!(SpectralProfile::new(ok).is_ok());
    }
}
