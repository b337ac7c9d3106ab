//! Dimension sizing: the temperature power-law rule, the spectrum-driven
//! optimal allocation under a parameter budget, its power-law closed form,
//! and the sample-complexity / performance-gap calculators.

use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;
use crate::layout::MDLayout;
use crate::prob::ProbabilityMatrix;
use crate::spectral::{BlockDiagnostics, SpectralProfile};

/// Popularity-based dimension sizing: `lambda = d_bar * ||p||_inf^(-alpha)`
/// and `d_i = lambda * p_i^alpha`. The most popular block always maps to the
/// base dimension exactly; dimensions are left unrounded.
pub fn power_law_sizing(p: &[f64], base_dim: usize, alpha: f64) -> Result<MDLayout> {
    if p.is_empty() {
        return Err(Error::Structure("probability vector is empty".into()));
    }
    if p.iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::Structure(
            "probability entries must be positive".into(),
        ));
    }
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("temperature must be >= 0, got {alpha}")));
    }
    if base_dim == 0 {
        return Err(Error::Structure("base dimension must be >= 1".into()));
    }
    let p_max = p.iter().cloned().fold(f64::MIN, f64::max);
    // d_i = d_bar * (p_i / p_max)^alpha keeps the max component exactly d_bar
    let dims: Vec<f64> = p
        .iter()
        .map(|&pi| base_dim as f64 * (pi / p_max).powf(alpha))
        .collect();
    let mut layout = MDLayout::new(dims, base_dim)?;
    layout.temperature = Some(alpha);
    layout.scale = Some(base_dim as f64 * p_max.powf(-alpha));
    Ok(layout)
}

/// Result of an optimal-allocation solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    /// Integer block-wise embedding dimensions `d_ij`.
    pub block_dims: BlockGrid<usize>,
    /// Continuous solution of the convex relaxation (budget exactly spent,
    /// one fractional marginal term).
    pub relaxed_dims: BlockGrid<f64>,
    /// Row embedding block dimensions `(d_w)_i = sum_j d_ij`.
    pub row_dims: Vec<usize>,
    /// Column embedding block dimensions `(d_v)_j = sum_i d_ij`.
    pub col_dims: Vec<usize>,
    /// Row-side layout; base dimension is the assembled width `sum_ij d_ij`.
    pub layout: MDLayout,
    /// Lagrange multiplier parameterizing the returned allocation.
    pub lambda: f64,
    /// Parameters actually consumed, `sum_ij (n_i + m_j) d_ij`.
    pub achieved_budget: u64,
    /// Predicted residual `sum_ij pi_ij/(n_i m_j) * sum_{k > d_ij} sigma_k^2`.
    pub objective_bound: f64,
}

struct Item {
    threshold: f64,
    i: usize,
    j: usize,
    cost: u64,
}

/// Per-block spectra truncated at min(n_i, m_j) with shape checks applied.
fn truncated_spectra(
    spectra: &SpectralProfile,
    structure: &BlockStructure,
) -> Result<BlockGrid<Vec<f64>>> {
    spectra.check_shape(structure)?;
    Ok(spectra.grid().map(|i, j, sv| {
        let cap = structure.block_shape(i, j);
        let cap = cap.0.min(cap.1);
        sv[..sv.len().min(cap)].to_vec()
    }))
}

fn collect_items(
    spectra: &BlockGrid<Vec<f64>>,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
) -> Vec<Item> {
    let mut items = Vec::new();
    for ((i, j), sv) in spectra.iter() {
        let (n_i, m_j) = structure.block_shape(i, j);
        let p = pi.entry(i, j);
        if p <= 0.0 {
            continue; // unsampled blocks never earn a dimension
        }
        let cost = (n_i + m_j) as u64;
        for &s in sv {
            items.push(Item {
                threshold: s * s * p / ((n_i + m_j) as f64 * n_i as f64 * m_j as f64),
                i,
                j,
                cost,
            });
        }
    }
    // descending threshold; ties broken by block then index for determinism
    items.sort_by(|a, b| {
        b.threshold
            .partial_cmp(&a.threshold)
            .unwrap()
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    items
}

/// Dimensions `d_ij(lambda) = #{k : sigma_ij(k)^2 >= lambda (n_i+m_j)(n_i m_j) / pi_ij}`.
fn dims_at_lambda(items: &[Item], k_w: usize, k_v: usize, lambda: f64) -> BlockGrid<usize> {
    let mut dims = BlockGrid::filled(k_w, k_v, 0usize);
    for item in items {
        if item.threshold >= lambda {
            *dims.get_mut(item.i, item.j) += 1;
        }
    }
    dims
}

fn allocation_cost(dims: &BlockGrid<usize>, structure: &BlockStructure) -> u64 {
    dims.iter()
        .map(|((i, j), &d)| {
            let (n_i, m_j) = structure.block_shape(i, j);
            (n_i + m_j) as u64 * d as u64
        })
        .sum()
}

/// Optimal block-wise embedding dimensions under a parameter budget.
///
/// Solves the water-filling condition of the budgeted reconstruction
/// problem: a singular value `sigma_ij(k)` earns a dimension when
/// `sigma_ij(k)^2 >= lambda (n_i+m_j)(n_i m_j)/pi_ij`. The multiplier is
/// found by log-scale bisection between full-rank-everywhere and
/// all-dims-zero; since integer allocations cannot meet the budget exactly,
/// the largest feasible allocation in the lambda family is returned.
pub fn optimal_dims(
    spectra: &SpectralProfile,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
    budget: u64,
) -> Result<SizingResult> {
    if budget == 0 {
        return Err(Error::Structure("budget must be positive".into()));
    }
    pi.check_shape(structure)?;
    let truncated = truncated_spectra(spectra, structure)?;
    let items = collect_items(&truncated, pi, structure);
    if items.is_empty() {
        return Err(Error::Degenerate(
            "no positive spectral mass on sampled blocks".into(),
        ));
    }
    let (k_w, k_v) = (structure.num_row_blocks(), structure.num_col_blocks());

    let lambda_min = items.iter().map(|it| it.threshold).fold(f64::MAX, f64::min);
    let lambda_max = 2.0 * items.iter().map(|it| it.threshold).fold(f64::MIN, f64::max);

    let full = dims_at_lambda(&items, k_w, k_v, lambda_min);
    let lambda = if allocation_cost(&full, structure) <= budget {
        lambda_min
    } else {
        // invariant: cost(hi) <= budget < cost(lo)
        let (mut lo, mut hi) = (lambda_min, lambda_max);
        for _ in 0..200 {
            let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
            if !(mid > lo && mid < hi) {
                break; // interval exhausted at f64 resolution
            }
            let cost = allocation_cost(&dims_at_lambda(&items, k_w, k_v, mid), structure);
            if cost <= budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let block_dims = dims_at_lambda(&items, k_w, k_v, lambda);
    let relaxed_dims = relax_allocation(&items, k_w, k_v, budget);
    Ok(finish_result(
        block_dims,
        relaxed_dims,
        &truncated,
        pi,
        structure,
        budget,
        lambda,
    ))
}

/// Exact solution of the continuous relaxation: walk items in threshold
/// order, spending the budget; the marginal item gets a fractional share.
fn relax_allocation(items: &[Item], k_w: usize, k_v: usize, budget: u64) -> BlockGrid<f64> {
    let mut dims = BlockGrid::filled(k_w, k_v, 0f64);
    let mut remaining = budget as f64;
    for item in items {
        let cost = item.cost as f64;
        if remaining <= 0.0 {
            break;
        }
        if remaining >= cost {
            *dims.get_mut(item.i, item.j) += 1.0;
            remaining -= cost;
        } else {
            *dims.get_mut(item.i, item.j) += remaining / cost;
            remaining = 0.0;
        }
    }
    dims
}

fn finish_result(
    block_dims: BlockGrid<usize>,
    relaxed_dims: BlockGrid<f64>,
    truncated: &BlockGrid<Vec<f64>>,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
    budget: u64,
    lambda: f64,
) -> SizingResult {
    let (k_w, k_v) = (block_dims.rows(), block_dims.cols());
    let row_dims: Vec<usize> = (0..k_w)
        .map(|i| (0..k_v).map(|j| *block_dims.get(i, j)).sum())
        .collect();
    let col_dims: Vec<usize> = (0..k_v)
        .map(|j| (0..k_w).map(|i| *block_dims.get(i, j)).sum())
        .collect();
    let total: usize = row_dims.iter().sum();

    let mut objective_bound = 0.0;
    for ((i, j), sv) in truncated.iter() {
        let (n_i, m_j) = structure.block_shape(i, j);
        let weight = pi.entry(i, j) / (n_i as f64 * m_j as f64);
        let d = *block_dims.get(i, j);
        objective_bound += weight * sv.iter().skip(d).map(|s| s * s).sum::<f64>();
    }

    let mut layout = MDLayout {
        dims: row_dims.iter().map(|&d| d as f64).collect(),
        base_dim: total.max(1),
        budget: Some(budget),
        temperature: None,
        scale: Some(lambda),
    };
    layout.budget = Some(budget);

    SizingResult {
        achieved_budget: allocation_cost(&block_dims, structure),
        block_dims,
        relaxed_dims,
        row_dims,
        col_dims,
        layout,
        lambda,
        objective_bound,
    }
}

/// Closed-form allocation when every block follows the same power decay
/// `sigma_ij(k) = rho_ij k^(-beta)`:
/// `d_ij = Lambda * zeta_ij * pi_ij^(1/(2 beta))` with
/// `zeta_ij = ((n_i+m_j)(n_i m_j)/rho_ij^2)^(-1/(2 beta))` and `Lambda`
/// chosen so the budget is exactly spent. Dimensions are capped at
/// `min(n_i, m_j)` and rounded down.
pub fn optimal_dims_power_law(
    rho: &BlockGrid<f64>,
    beta: f64,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
    budget: u64,
) -> Result<SizingResult> {
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::Structure(format!(
            "power decay exponent must be positive, got {beta}"
        )));
    }
    if budget == 0 {
        return Err(Error::Structure("budget must be positive".into()));
    }
    pi.check_shape(structure)?;
    if rho.rows() != structure.num_row_blocks() || rho.cols() != structure.num_col_blocks() {
        return Err(Error::Shape("rho grid does not match structure".into()));
    }
    if rho.items().iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Structure("spectral norms rho must be positive".into()));
    }

    let exponent = 1.0 / (2.0 * beta);
    let zeta = rho.map(|i, j, &r| {
        let (n_i, m_j) = structure.block_shape(i, j);
        (((n_i + m_j) * n_i * m_j) as f64 / (r * r)).powf(-exponent)
    });
    let mut denom = 0.0;
    for ((i, j), &z) in zeta.iter() {
        let (n_i, m_j) = structure.block_shape(i, j);
        denom += (n_i + m_j) as f64 * z * pi.entry(i, j).powf(exponent);
    }
    if denom <= 0.0 {
        return Err(Error::Degenerate("no sampled block to allocate to".into()));
    }
    let capital_lambda = budget as f64 / denom;

    let relaxed = zeta.map(|i, j, &z| {
        let (n_i, m_j) = structure.block_shape(i, j);
        let cap = n_i.min(m_j) as f64;
        (capital_lambda * z * pi.entry(i, j).powf(exponent)).min(cap)
    });
    let block_dims = relaxed.map(|_, _, &d| d.floor() as usize);

    // spectra implied by the power model, for the objective bound
    let spectra = BlockGrid::from_fn(structure.num_row_blocks(), structure.num_col_blocks(), |i, j| {
        let (n_i, m_j) = structure.block_shape(i, j);
        crate::spectral::power_spectrum(*rho.get(i, j), beta, n_i.min(m_j))
    });

    let lambda = capital_lambda.powf(-2.0 * beta);
    Ok(finish_result(
        block_dims,
        relaxed,
        &spectra,
        pi,
        structure,
        budget,
        lambda,
    ))
}

/// Recovered spectral mass of a (possibly fractional) dimension: full squares
/// up to floor(d), a fractional share of the next one, nothing beyond the
/// spectrum.
fn recovered_mass(sv: &[f64], d: f64) -> f64 {
    let d = d.max(0.0).min(sv.len() as f64);
    let whole = d.floor() as usize;
    let mut mass: f64 = sv[..whole].iter().map(|s| s * s).sum();
    if whole < sv.len() {
        mass += (d - whole as f64) * sv[whole] * sv[whole];
    }
    mass
}

/// Weighted spectral-mass gap between a mixed-dimension allocation and the
/// uniform allocation `B/(n+m)` at the same budget:
/// `sum_ij pi_ij/(n_i m_j) * (recovered_ij(d_ij) - recovered_ij(B/(n+m)))`.
/// Positive means the mixed allocation recovers more popularity-weighted
/// mass, i.e. achieves lower weighted reconstruction error.
pub fn ud_gap(
    spectra: &SpectralProfile,
    pi: &ProbabilityMatrix,
    md_dims: &BlockGrid<usize>,
    structure: &BlockStructure,
    budget: u64,
) -> Result<f64> {
    pi.check_shape(structure)?;
    let truncated = truncated_spectra(spectra, structure)?;
    if md_dims.rows() != truncated.rows() || md_dims.cols() != truncated.cols() {
        return Err(Error::Shape("dimension grid does not match spectra".into()));
    }
    let uniform = budget as f64 / (structure.n() + structure.m()) as f64;
    let mut gap = 0.0;
    for ((i, j), sv) in truncated.iter() {
        let (n_i, m_j) = structure.block_shape(i, j);
        let weight = pi.entry(i, j) / (n_i as f64 * m_j as f64);
        let d_md = *md_dims.get(i, j) as f64;
        gap += weight * (recovered_mass(sv, d_md) - recovered_mass(sv, uniform));
    }
    Ok(gap)
}

/// Upper bound on the loss of rounding a fractional relaxation solution
/// down to integers: `sum_ij pi_ij * sigma_ij(floor(d_ij) + 1)^2`
/// (zero where the spectrum is exhausted).
pub fn relaxation_gap_bound(
    spectra: &SpectralProfile,
    pi: &ProbabilityMatrix,
    fractional_dims: &BlockGrid<f64>,
) -> Result<f64> {
    if fractional_dims.rows() != spectra.num_row_blocks()
        || fractional_dims.cols() != spectra.num_col_blocks()
    {
        return Err(Error::Shape("dimension grid does not match spectra".into()));
    }
    let mut bound = 0.0;
    for ((i, j), sv) in spectra.grid().iter() {
        let next = fractional_dims.get(i, j).max(0.0).floor() as usize;
        if next < sv.len() {
            bound += pi.entry(i, j) * sv[next] * sv[next];
        }
    }
    Ok(bound)
}

/// Output of [`agnostic_recovery_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgnosticBound {
    /// `exp(-r n_eps delta^2 / (3 (1 - delta)))`: the best success
    /// probability any popularity-agnostic algorithm can achieve below the
    /// sample threshold.
    pub probability: f64,
    /// The sample threshold `N <= (r / eps)(1 - delta)` the bound applies to.
    pub sample_threshold: f64,
}

/// Recovery upper bound for popularity-agnostic algorithms: with at most
/// `(r/eps)(1-delta)` expected samples, recovery probability is at most
/// `exp(-r n_eps delta^2 / (3(1-delta)))`, where `n_eps` is the size of the
/// low-sample sub-matrix.
pub fn agnostic_recovery_bound(
    r: usize,
    eps: f64,
    n_eps: usize,
    delta: f64,
) -> Result<AgnosticBound> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain(format!("delta must be in (0, 1/2), got {delta}")));
    }
    if r == 0 || n_eps == 0 {
        return Err(Error::Domain("rank and sub-matrix size must be >= 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must be in (0, 1), got {eps}")));
    }
    let exponent = (r * n_eps) as f64 * delta * delta / (3.0 * (1.0 - delta));
    Ok(AgnosticBound {
        probability: (-exponent).exp(),
        sample_threshold: r as f64 / eps * (1.0 - delta),
    })
}

/// Output of [`md_sample_requirement`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRequirement {
    /// `max_ij N*_ij`: expected samples sufficient for block-wise
    /// factorization to complete every block.
    pub n_samples: f64,
    /// The block attaining the maximum.
    pub binding_block: (usize, usize),
}

/// Sufficient expected sample count for block-wise mixed-dimension
/// factorization:
/// `N*_ij = C0 pi_ij^-1 nhat_ij r_ij kappa_ij^2 alpha_ij
///          max(mu_ij ln nhat_ij, sqrt(alpha_ij) mu_ij^2 r_ij^6 kappa_ij^4)`
/// with `nhat_ij = min(n_i, m_j)`; the requirement is the max over blocks
/// with positive rank. `C0` is a free universal constant.
pub fn md_sample_requirement(
    block_ranks: &BlockGrid<usize>,
    diagnostics: &BlockGrid<BlockDiagnostics>,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
    c0: f64,
) -> Result<SampleRequirement> {
    if c0 <= 0.0 {
        return Err(Error::Domain("C0 must be positive".into()));
    }
    pi.check_shape(structure)?;
    if block_ranks.rows() != structure.num_row_blocks()
        || block_ranks.cols() != structure.num_col_blocks()
    {
        return Err(Error::Shape("block rank grid does not match structure".into()));
    }
    let mut best: Option<SampleRequirement> = None;
    for ((i, j), &r) in block_ranks.iter() {
        if r == 0 {
            continue;
        }
        let p = pi.entry(i, j);
        if p <= 0.0 {
            return Err(Error::InfeasibleRate(format!(
                "block ({i},{j}) has rank {r} but zero sampling probability"
            )));
        }
        let d = diagnostics.get(i, j);
        if !(d.incoherence.is_finite() && d.condition.is_finite() && d.aspect.is_finite()) {
            return Err(Error::Degenerate(format!(
                "block ({i},{j}) diagnostics are not finite"
            )));
        }
        let (n_i, m_j) = structure.block_shape(i, j);
        let nhat = n_i.min(m_j) as f64;
        let r_f = r as f64;
        let inner = (d.incoherence * nhat.ln()).max(
            d.aspect.sqrt() * d.incoherence * d.incoherence * r_f.powi(6) * d.condition.powi(4),
        );
        let n_star =
            c0 / p * nhat * r_f * d.condition * d.condition * d.aspect * inner;
        if best.map_or(true, |b| n_star > b.n_samples) {
            best = Some(SampleRequirement {
                n_samples: n_star,
                binding_block: (i, j),
            });
        }
    }
    best.ok_or_else(|| Error::Degenerate("no block has positive rank".into()))
}
