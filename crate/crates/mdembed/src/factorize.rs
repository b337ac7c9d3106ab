//! Block-wise factorization: Bernoulli observation sampling, per-block SGD,
//! projection assembly, popularity-weighted evaluation and recovery checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::BlockStructure;
use crate::error::{Error, Result};
use crate::grid::BlockGrid;
use crate::prob::ProbabilityMatrix;
use crate::rng::{derive_seed, rng_from, streams};
use crate::spectral::{self, BlockDiagnostics};
use crate::target::{Observation, ObservationSet, TargetBlockMatrix};

/// Default tolerance for declaring a matrix recovered (relative Frobenius).
pub const RECOVERY_TOL: f64 = 1e-3;

/// Minibatch SGD settings for per-block factorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Factor entries start as N(0, (init_scale / sqrt(rank))^2). Small
    /// inits keep unobserved predictions near zero until the observed
    /// structure propagates.
    pub init_scale: f64,
    pub seed: u64,
    /// Relative observed-MSE change below which an epoch counts as a plateau.
    pub convergence_tol: f64,
    /// Consecutive plateau epochs before stopping early.
    pub max_plateau_epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-2,
            epochs: 500,
            batch_size: 32,
            init_scale: 0.1,
            seed: 0,
            convergence_tol: 1e-8,
            max_plateau_epochs: 5,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be >= 1".into()));
        }
        if self.convergence_tol < 0.0 {
            return Err(Error::Domain("convergence tolerance must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            seed,
            ..self.clone()
        }
    }
}

/// A local observation `(row, col, value)` within one block.
pub type LocalObs = (usize, usize, f64);

/// Draw block-wise Bernoulli observations: entry `(k, l)` in block `(i, j)`
/// is revealed independently with probability `N pi_ij / (n_i m_j)`, so the
/// expected number of revealed entries is `N`.
pub fn sample_observations(
    m: &TargetBlockMatrix,
    pi: &ProbabilityMatrix,
    n_expected: f64,
    seed: u64,
) -> Result<ObservationSet> {
    pi.check_shape(&m.structure)?;
    if !(n_expected >= 0.0) {
        return Err(Error::Domain("expected sample count must be >= 0".into()));
    }
    // per-entry inclusion probabilities, validated per block
    let probs = pi.grid().map(|i, j, &p| {
        let (n_i, m_j) = m.structure.block_shape(i, j);
        n_expected * p / (n_i as f64 * m_j as f64)
    });
    for ((i, j), &q) in probs.iter() {
        if q > 1.0 + 1e-12 {
            return Err(Error::InfeasibleRate(format!(
                "block ({i},{j}): inclusion probability {q:.6} > 1 at N = {n_expected}"
            )));
        }
    }
    let row_off = m.structure.row_offsets();
    let col_off = m.structure.col_offsets();
    let mut rng = rng_from(seed, streams::SAMPLER);
    let mut entries = Vec::new();
    for (bi, &r0) in row_off.iter().enumerate() {
        for local_r in 0..m.structure.row_sizes()[bi] {
            let row = r0 + local_r;
            for (bj, &c0) in col_off.iter().enumerate() {
                let q = (*probs.get(bi, bj)).min(1.0);
                for local_c in 0..m.structure.col_sizes()[bj] {
                    let col = c0 + local_c;
                    if rng.random::<f64>() < q {
                        entries.push(Observation {
                            row,
                            col,
                            value: m.data[(row, col)],
                        });
                    }
                }
            }
        }
    }
    Ok(ObservationSet {
        entries,
        expected_count: n_expected,
        seed,
    })
}

/// Split a global observation set into per-block local observations.
pub fn split_by_block(
    obs: &ObservationSet,
    structure: &BlockStructure,
) -> Result<BlockGrid<Vec<LocalObs>>> {
    let mut grid = BlockGrid::filled(
        structure.num_row_blocks(),
        structure.num_col_blocks(),
        Vec::new(),
    );
    for o in &obs.entries {
        let (i, lr) = structure.locate_row(o.row)?;
        let (j, lc) = structure.locate_col(o.col)?;
        grid.get_mut(i, j).push((lr, lc, o.value));
    }
    Ok(grid)
}

/// Observed-entry mean squared error of a factor pair.
pub fn observed_mse(w: &DMatrix<f64>, v: &DMatrix<f64>, obs: &[LocalObs]) -> f64 {
    if obs.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(k, l, val) in obs {
        let pred = w.row(k).dot(&v.row(l));
        let e = pred - val;
        acc += e * e;
    }
    acc / obs.len() as f64
}

/// Analytic gradient of the observed mean squared error with respect to both
/// factors. Used by the finite-difference checks and shared with the SGD
/// step (which applies it per minibatch).
pub fn observed_grads(
    w: &DMatrix<f64>,
    v: &DMatrix<f64>,
    obs: &[LocalObs],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut gw = DMatrix::zeros(w.nrows(), w.ncols());
    let mut gv = DMatrix::zeros(v.nrows(), v.ncols());
    if obs.is_empty() {
        return (gw, gv);
    }
    let scale = 2.0 / obs.len() as f64;
    for &(k, l, val) in obs {
        let e = scale * (w.row(k).dot(&v.row(l)) - val);
        for c in 0..w.ncols() {
            gw[(k, c)] += e * v[(l, c)];
            gv[(l, c)] += e * w[(k, c)];
        }
    }
    (gw, gv)
}

/// Factors and training trace for one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrainResult {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Observed-entry MSE at the end of every epoch (at least one entry).
    pub trajectory: Vec<f64>,
    pub final_mse: f64,
}

/// Factor one block at the given rank by minibatch SGD on squared error over
/// the observed entries. Deterministic for a fixed config seed. A rank of 0
/// returns empty factors with the observed energy as residual; empty
/// observations return the initial factors with zero observed loss.
pub fn sgd_factor_block(
    obs: &[LocalObs],
    n: usize,
    m: usize,
    rank: usize,
    cfg: &SgdConfig,
) -> Result<BlockTrainResult> {
    cfg.validate()?;
    if rank > n.min(m) {
        return Err(Error::Structure(format!(
            "rank {rank} exceeds min({n}, {m})"
        )));
    }
    for &(k, l, _) in obs {
        if k >= n || l >= m {
            return Err(Error::Index(format!(
                "local observation ({k}, {l}) outside {n}x{m} block"
            )));
        }
    }
    if rank == 0 {
        let energy = if obs.is_empty() {
            0.0
        } else {
            obs.iter().map(|&(_, _, v)| v * v).sum::<f64>() / obs.len() as f64
        };
        return Ok(BlockTrainResult {
            w: DMatrix::zeros(n, 0),
            v: DMatrix::zeros(m, 0),
            trajectory: vec![energy],
            final_mse: energy,
        });
    }

    let mut rng = rng_from(cfg.seed, streams::SGD);
    let s = cfg.init_scale / (rank as f64).sqrt();
    let mut w = DMatrix::from_fn(n, rank, |_, _| s * rng.sample::<f64, _>(StandardNormal));
    let mut v = DMatrix::from_fn(m, rank, |_, _| s * rng.sample::<f64, _>(StandardNormal));

    if obs.is_empty() {
        return Ok(BlockTrainResult {
            w,
            v,
            trajectory: vec![0.0],
            final_mse: 0.0,
        });
    }

    let mut order: Vec<usize> = (0..obs.len()).collect();
    // gradient accumulators, cleared per touched row to stay O(batch * rank)
    let mut gw = DMatrix::<f64>::zeros(n, rank);
    let mut gv = DMatrix::<f64>::zeros(m, rank);
    let mut touched_w: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut touched_v: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    let mut stamp_w = vec![u32::MAX; n];
    let mut stamp_v = vec![u32::MAX; m];
    let mut batch_id: u32 = 0;

    let mut trajectory = Vec::with_capacity(cfg.epochs.min(4096));
    let mut prev = f64::INFINITY;
    let mut plateau = 0usize;
    for _epoch in 0..cfg.epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for batch in order.chunks(cfg.batch_size) {
            touched_w.clear();
            touched_v.clear();
            for &idx in batch {
                let (k, l, val) = obs[idx];
                let e = w.row(k).dot(&v.row(l)) - val;
                if stamp_w[k] != batch_id {
                    stamp_w[k] = batch_id;
                    touched_w.push(k);
                    gw.row_mut(k).fill(0.0);
                }
                if stamp_v[l] != batch_id {
                    stamp_v[l] = batch_id;
                    touched_v.push(l);
                    gv.row_mut(l).fill(0.0);
                }
                for c in 0..rank {
                    gw[(k, c)] += e * v[(l, c)];
                    gv[(l, c)] += e * w[(k, c)];
                }
            }
            // batch gradient = sum of per-sample gradients; the learning
            // rate is per-sample, as usual for factorization SGD
            let step = 2.0 * cfg.learning_rate;
            for &k in &touched_w {
                for c in 0..rank {
                    w[(k, c)] -= step * gw[(k, c)];
                }
            }
            for &l in &touched_v {
                for c in 0..rank {
                    v[(l, c)] -= step * gv[(l, c)];
                }
            }
            batch_id = batch_id.wrapping_add(1);
        }
        let mse = observed_mse(&w, &v, obs);
        if !mse.is_finite() {
            return Err(Error::Numerical(
                "sgd diverged (non-finite observed mse); lower the learning rate".into(),
            ));
        }
        trajectory.push(mse);
        let rel = (mse - prev).abs() / prev.max(f64::MIN_POSITIVE);
        if rel < cfg.convergence_tol {
            plateau += 1;
            if plateau >= cfg.max_plateau_epochs {
                break;
            }
        } else {
            plateau = 0;
        }
        prev = mse;
    }
    let final_mse = *trajectory.last().unwrap();
    Ok(BlockTrainResult {
        w,
        v,
        trajectory,
        final_mse,
    })
}

/// Per-block factors `(W_ij, V_ij)` of shapes `n_i x r_ij` and `m_j x r_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFactors {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

/// Assembled mixed-dimension factors: per-block embeddings plus the row and
/// column embedding blocks and their 0/1 projections into the joint rank.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub block_factors: BlockGrid<BlockFactors>,
    /// `Wbar_i = [W_i1 .. W_ikV]`, shape `n_i x d_w^i`.
    pub row_blocks: Vec<DMatrix<f64>>,
    /// `Vbar_j = [V_1j .. V_kWj]`, shape `m_j x d_v^j`.
    pub col_blocks: Vec<DMatrix<f64>>,
    /// `P_W^i`, shape `d_w^i x r`: one identity band at the block row offset.
    pub row_projections: Vec<DMatrix<f64>>,
    /// `P_V^j`, shape `d_v^j x r`: identity bands interleaved per block.
    pub col_projections: Vec<DMatrix<f64>>,
    pub total_rank: usize,
}

/// Assemble per-block factors into mixed-dimension embeddings. The joint
/// rank dimension concatenates the blocks in row-major order; `W_ij` and
/// `V_ij` both map to that block's global offset, so the expanded products
/// `Wbar_i P_W^i` slide whole block rows while `Vbar_j P_V^j` interleave.
pub fn assemble_md(
    factors: BlockGrid<BlockFactors>,
    block_ranks: &BlockGrid<usize>,
) -> Result<FactorPair> {
    let (k_w, k_v) = (factors.rows(), factors.cols());
    if block_ranks.rows() != k_w || block_ranks.cols() != k_v {
        return Err(Error::Shape("rank grid does not match factor grid".into()));
    }
    for ((i, j), f) in factors.iter() {
        let r = *block_ranks.get(i, j);
        if f.w.ncols() != r || f.v.ncols() != r {
            return Err(Error::Shape(format!(
                "block ({i},{j}) factors have {} / {} columns, rank is {r}",
                f.w.ncols(),
                f.v.ncols()
            )));
        }
    }
    for i in 0..k_w {
        let n_i = factors.get(i, 0).w.nrows();
        if (1..k_v).any(|j| factors.get(i, j).w.nrows() != n_i) {
            return Err(Error::Shape(format!("block row {i} has inconsistent W row counts")));
        }
    }
    for j in 0..k_v {
        let m_j = factors.get(0, j).v.nrows();
        if (1..k_w).any(|i| factors.get(i, j).v.nrows() != m_j) {
            return Err(Error::Shape(format!("block column {j} has inconsistent V row counts")));
        }
    }

    let total_rank: usize = block_ranks.items().iter().sum();
    // global column offset of block (i, j) in the joint rank dimension
    let mut col_start = BlockGrid::filled(k_w, k_v, 0usize);
    {
        let mut acc = 0usize;
        for i in 0..k_w {
            for j in 0..k_v {
                *col_start.get_mut(i, j) = acc;
                acc += *block_ranks.get(i, j);
            }
        }
    }

    let mut row_blocks = Vec::with_capacity(k_w);
    let mut row_projections = Vec::with_capacity(k_w);
    for i in 0..k_w {
        let n_i = factors.get(i, 0).w.nrows();
        let d_w: usize = (0..k_v).map(|j| *block_ranks.get(i, j)).sum();
        let mut wbar = DMatrix::zeros(n_i, d_w);
        let mut used = 0;
        for j in 0..k_v {
            let r = *block_ranks.get(i, j);
            wbar.view_mut((0, used), (n_i, r))
                .copy_from(&factors.get(i, j).w);
            used += r;
        }
        // P_W^i = [0 | I | 0] with the identity at this block row's offset
        let start = *col_start.get(i, 0);
        let mut p = DMatrix::zeros(d_w, total_rank);
        for k in 0..d_w {
            p[(k, start + k)] = 1.0;
        }
        row_blocks.push(wbar);
        row_projections.push(p);
    }

    let mut col_blocks = Vec::with_capacity(k_v);
    let mut col_projections = Vec::with_capacity(k_v);
    for j in 0..k_v {
        let m_j = factors.get(0, j).v.nrows();
        let d_v: usize = (0..k_w).map(|i| *block_ranks.get(i, j)).sum();
        let mut vbar = DMatrix::zeros(m_j, d_v);
        let mut p = DMatrix::zeros(d_v, total_rank);
        let mut used = 0;
        for i in 0..k_w {
            let r = *block_ranks.get(i, j);
            vbar.view_mut((0, used), (m_j, r))
                .copy_from(&factors.get(i, j).v);
            let start = *col_start.get(i, j);
            for k in 0..r {
                p[(used + k, start + k)] = 1.0;
            }
            used += r;
        }
        col_blocks.push(vbar);
        col_projections.push(p);
    }

    Ok(FactorPair {
        block_factors: factors,
        row_blocks,
        col_blocks,
        row_projections,
        col_projections,
        total_rank,
    })
}

impl FactorPair {
    /// Expanded row-side term `Wbar_i P_W^i` of shape `n_i x r`.
    pub fn expanded_row(&self, i: usize) -> DMatrix<f64> {
        &self.row_blocks[i] * &self.row_projections[i]
    }

    /// Expanded column-side term `Vbar_j P_V^j` of shape `m_j x r`.
    pub fn expanded_col(&self, j: usize) -> DMatrix<f64> {
        &self.col_blocks[j] * &self.col_projections[j]
    }
}

/// Reconstruct the dense matrix from assembled factors:
/// stacked `Wbar_i P_W^i` times stacked `(Vbar_j P_V^j)` transposed.
pub fn reconstruct(fp: &FactorPair) -> DMatrix<f64> {
    let n: usize = fp.row_blocks.iter().map(|b| b.nrows()).sum();
    let m: usize = fp.col_blocks.iter().map(|b| b.nrows()).sum();
    let mut a = DMatrix::zeros(n, fp.total_rank);
    let mut row = 0;
    for i in 0..fp.row_blocks.len() {
        let e = fp.expanded_row(i);
        a.view_mut((row, 0), (e.nrows(), fp.total_rank)).copy_from(&e);
        row += e.nrows();
    }
    let mut b = DMatrix::zeros(m, fp.total_rank);
    let mut col = 0;
    for j in 0..fp.col_blocks.len() {
        let e = fp.expanded_col(j);
        b.view_mut((col, 0), (e.nrows(), fp.total_rank)).copy_from(&e);
        col += e.nrows();
    }
    a * b.transpose()
}

/// Popularity-weighted MSE
/// `L_pi = sum_ij pi_ij / (n_i m_j) ||M_ij - Mhat_ij||_F^2`.
pub fn weighted_mse(
    m: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
    pi: &ProbabilityMatrix,
    structure: &BlockStructure,
) -> Result<f64> {
    if m.shape() != m_hat.shape() {
        return Err(Error::Shape("matrices have different shapes".into()));
    }
    if m.nrows() != structure.n() || m.ncols() != structure.m() {
        return Err(Error::Shape("matrix does not match structure".into()));
    }
    pi.check_shape(structure)?;
    let row_off = structure.row_offsets();
    let col_off = structure.col_offsets();
    let mut total = 0.0;
    for i in 0..structure.num_row_blocks() {
        for j in 0..structure.num_col_blocks() {
            let (n_i, m_j) = structure.block_shape(i, j);
            let mut fro = 0.0;
            for r in 0..n_i {
                for c in 0..m_j {
                    let d = m[(row_off[i] + r, col_off[j] + c)]
                        - m_hat[(row_off[i] + r, col_off[j] + c)];
                    fro += d * d;
                }
            }
            total += pi.entry(i, j) / (n_i as f64 * m_j as f64) * fro;
        }
    }
    Ok(total)
}

/// Numerical recovery: relative Frobenius error strictly below `tol`.
/// A zero target counts as recovered only by an exactly zero reconstruction.
pub fn recovered(m: &DMatrix<f64>, m_hat: &DMatrix<f64>, tol: f64) -> bool {
    let norm = m.norm();
    if norm == 0.0 {
        return m_hat.norm() == 0.0;
    }
    (m - m_hat).norm() / norm < tol
}

/// Rank report produced by [`rank_additive_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub additive: bool,
    pub total_rank: usize,
    pub block_ranks: BlockGrid<usize>,
    pub sum_of_block_ranks: usize,
}

/// Numerically check rank additivity: the matrix rank equals the sum of all
/// block ranks (SVD ranks at the shared relative tolerance).
pub fn rank_additive_check(m: &TargetBlockMatrix) -> RankReport {
    let total_rank = spectral::numerical_rank(&spectral::singular_values(&m.data));
    let block_ranks = BlockGrid::from_fn(
        m.structure.num_row_blocks(),
        m.structure.num_col_blocks(),
        |i, j| spectral::numerical_rank(&spectral::singular_values(&m.block(i, j))),
    );
    let sum_of_block_ranks = block_ranks.items().iter().sum();
    RankReport {
        additive: total_rank == sum_of_block_ranks,
        total_rank,
        block_ranks,
        sum_of_block_ranks,
    }
}

/// Per-block diagnostics for every block of a target. Zero blocks (rank 0)
/// get vacuous unit diagnostics; no sample-requirement term ever reads them.
pub fn diagnostics_grid(m: &TargetBlockMatrix) -> BlockGrid<BlockDiagnostics> {
    BlockGrid::from_fn(
        m.structure.num_row_blocks(),
        m.structure.num_col_blocks(),
        |i, j| {
            let block = m.block(i, j);
            spectral::block_diagnostics(&block).unwrap_or(BlockDiagnostics {
                incoherence: 1.0,
                condition: 1.0,
                aspect: block.nrows().max(block.ncols()) as f64
                    / block.nrows().min(block.ncols()) as f64,
            })
        },
    )
}

/// Rank assignment for a training run: per-block ranks (block-wise
/// factorization) or one uniform rank over the un-blocked matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RankPlan {
    Blockwise { ranks: BlockGrid<usize> },
    Uniform { rank: usize },
}

/// One held-out test coordinate with its squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub row: usize,
    pub col: usize,
    pub sq_err: f64,
}

/// Per-block training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: (usize, usize),
    pub rank: usize,
    pub n_observed: usize,
    pub final_mse: f64,
    pub trajectory: Vec<f64>,
}

/// End-to-end training outcome. Wall time is kept in memory only so that
/// serialized reports stay byte-identical across reruns of the same seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub block_reports: Vec<BlockReport>,
    /// Exact popularity-weighted MSE against the dense target.
    pub weighted_mse: f64,
    /// Mean squared error over held-out pi-distributed test coordinates
    /// (absent when every coordinate was observed).
    pub heldout_mse: Option<f64>,
    pub per_block_test_mse: BlockGrid<Option<f64>>,
    pub test_entries: Vec<TestEntry>,
    pub recovered: bool,
    pub relative_frobenius: f64,
    pub n_observed: usize,
    pub expected_n: f64,
    #[serde(skip)]
    pub wall_time_secs: f64,
    /// Dense reconstruction, kept out of serialized reports.
    #[serde(skip)]
    pub reconstruction: Option<DMatrix<f64>>,
}

/// Cap on held-out test draws.
const MAX_TEST_DRAWS: usize = 100_000;

/// Sample -> factor -> assemble -> evaluate. Blockwise plans factor each
/// block at its own rank on an independent substream and may run
/// concurrently; the uniform plan factors the whole matrix at one rank.
pub fn train_pipeline(
    m: &TargetBlockMatrix,
    pi: &ProbabilityMatrix,
    n_expected: f64,
    plan: &RankPlan,
    cfg: &SgdConfig,
    recovery_tol: f64,
) -> Result<TrainReport> {
    let start = std::time::Instant::now();
    cfg.validate()?;
    let obs = sample_observations(m, pi, n_expected, cfg.seed)?;
    let n_observed = obs.len();

    let (m_hat, block_reports) = match plan {
        RankPlan::Blockwise { ranks } => {
            if ranks.rows() != m.structure.num_row_blocks()
                || ranks.cols() != m.structure.num_col_blocks()
            {
                return Err(Error::Shape("rank grid does not match structure".into()));
            }
            for ((i, j), &r) in ranks.iter() {
                let (n_i, m_j) = m.structure.block_shape(i, j);
                if r > n_i.min(m_j) {
                    return Err(Error::Structure(format!(
                        "block ({i},{j}) rank {r} exceeds min({n_i},{m_j})"
                    )));
                }
            }
            let local = split_by_block(&obs, &m.structure)?;
            let k_v = m.structure.num_col_blocks();
            let jobs: Vec<((usize, usize), &Vec<LocalObs>, usize, SgdConfig)> = local
                .iter()
                .map(|((i, j), o)| {
                    let block_seed = derive_seed(cfg.seed, streams::SGD + (i * k_v + j) as u64);
                    ((i, j), o, *ranks.get(i, j), cfg.with_seed(block_seed))
                })
                .collect();
            let results: Vec<Result<BlockTrainResult>> = jobs
                .par_iter()
                .map(|((i, j), o, rank, block_cfg)| {
                    let (n_i, m_j) = m.structure.block_shape(*i, *j);
                    sgd_factor_block(o, n_i, m_j, *rank, block_cfg)
                })
                .collect();
            let mut factors = Vec::with_capacity(results.len());
            let mut reports = Vec::with_capacity(results.len());
            for (((i, j), o, rank, _), res) in jobs.iter().zip(results) {
                let res = res?;
                reports.push(BlockReport {
                    block: (*i, *j),
                    rank: *rank,
                    n_observed: o.len(),
                    final_mse: res.final_mse,
                    trajectory: res.trajectory.clone(),
                });
                factors.push(BlockFactors { w: res.w, v: res.v });
            }
            let grid = BlockGrid::from_vec(
                m.structure.num_row_blocks(),
                m.structure.num_col_blocks(),
                factors,
            )?;
            let fp = assemble_md(grid, ranks)?;
            (reconstruct(&fp), reports)
        }
        RankPlan::Uniform { rank } => {
            let local: Vec<LocalObs> = obs
                .entries
                .iter()
                .map(|o| (o.row, o.col, o.value))
                .collect();
            let res = sgd_factor_block(
                &local,
                m.structure.n(),
                m.structure.m(),
                *rank,
                &cfg.with_seed(derive_seed(cfg.seed, streams::SGD)),
            )?;
            let m_hat = &res.w * res.v.transpose();
            let report = BlockReport {
                block: (0, 0),
                rank: *rank,
                n_observed: local.len(),
                final_mse: res.final_mse,
                trajectory: res.trajectory,
            };
            (m_hat, vec![report])
        }
    };

    let weighted = weighted_mse(&m.data, &m_hat, pi, &m.structure)?;
    let rec = recovered(&m.data, &m_hat, recovery_tol);
    let rel = if m.data.norm() == 0.0 {
        if m_hat.norm() == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (&m.data - &m_hat).norm() / m.data.norm()
    };

    let heldout = draw_heldout(m, pi, &obs, &m_hat, cfg.seed)?;
    Ok(TrainReport {
        block_reports,
        weighted_mse: weighted,
        heldout_mse: heldout.mse,
        per_block_test_mse: heldout.per_block,
        test_entries: heldout.entries,
        recovered: rec,
        relative_frobenius: rel,
        n_observed,
        expected_n: n_expected,
        wall_time_secs: start.elapsed().as_secs_f64(),
        reconstruction: Some(m_hat),
    })
}

struct Heldout {
    mse: Option<f64>,
    per_block: BlockGrid<Option<f64>>,
    entries: Vec<TestEntry>,
}

/// Draw pi-distributed test coordinates from the unobserved cells: block by
/// pi (renormalized over blocks that still have unobserved cells), cell
/// uniform within the block's unobserved set. Test size is
/// min(10% of entries, 100k).
fn draw_heldout(
    m: &TargetBlockMatrix,
    pi: &ProbabilityMatrix,
    obs: &ObservationSet,
    m_hat: &DMatrix<f64>,
    seed: u64,
) -> Result<Heldout> {
    let s = &m.structure;
    let (n, cols) = (s.n(), s.m());
    let mut observed = vec![false; n * cols];
    for o in &obs.entries {
        observed[o.row * cols + o.col] = true;
    }
    let k_v = s.num_col_blocks();
    let mut unobserved: Vec<Vec<(usize, usize)>> =
        vec![Vec::new(); s.num_row_blocks() * k_v];
    let row_blocks: Vec<usize> = {
        let mut v = Vec::with_capacity(n);
        for (i, &sz) in s.row_sizes().iter().enumerate() {
            v.extend(std::iter::repeat(i).take(sz));
        }
        v
    };
    let col_blocks: Vec<usize> = {
        let mut v = Vec::with_capacity(cols);
        for (j, &sz) in s.col_sizes().iter().enumerate() {
            v.extend(std::iter::repeat(j).take(sz));
        }
        v
    };
    for r in 0..n {
        for c in 0..cols {
            if !observed[r * cols + c] {
                unobserved[row_blocks[r] * k_v + col_blocks[c]].push((r, c));
            }
        }
    }

    let weights: Vec<f64> = (0..s.num_row_blocks() * k_v)
        .map(|b| {
            if unobserved[b].is_empty() {
                0.0
            } else {
                pi.entry(b / k_v, b % k_v)
            }
        })
        .collect();
    let total_w: f64 = weights.iter().sum();
    let draws = ((n * cols) / 10).min(MAX_TEST_DRAWS);
    if total_w <= 0.0 || draws == 0 {
        return Ok(Heldout {
            mse: None,
            per_block: BlockGrid::filled(s.num_row_blocks(), k_v, None),
            entries: Vec::new(),
        });
    }

    let mut rng = rng_from(seed, streams::HELDOUT);
    let mut entries = Vec::with_capacity(draws);
    let mut block_acc = vec![(0.0f64, 0usize); weights.len()];
    for _ in 0..draws {
        let mut u = rng.random::<f64>() * total_w;
        let mut b = 0;
        for (idx, &w) in weights.iter().enumerate() {
            if u < w || idx == weights.len() - 1 {
                b = idx;
                break;
            }
            u -= w;
        }
        // guard against landing on a zero-weight trailing block
        while weights[b] == 0.0 {
            b -= 1;
        }
        let cell = unobserved[b][rng.random_range(0..unobserved[b].len())];
        let d = m.data[cell] - m_hat[cell];
        let sq = d * d;
        entries.push(TestEntry {
            row: cell.0,
            col: cell.1,
            sq_err: sq,
        });
        block_acc[b].0 += sq;
        block_acc[b].1 += 1;
    }
    let mse = entries.iter().map(|e| e.sq_err).sum::<f64>() / entries.len() as f64;
    let per_block = BlockGrid::from_fn(s.num_row_blocks(), k_v, |i, j| {
        let (acc, cnt) = block_acc[i * k_v + j];
        if cnt == 0 {
            None
        } else {
            Some(acc / cnt as f64)
        }
    });
    Ok(Heldout {
        mse: Some(mse),
        per_block,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_low_rank_block, gen_two_block_scenario, SpectrumSpec};
    use approx::assert_relative_eq;

    fn two_block_target() -> (TargetBlockMatrix, ProbabilityMatrix) {
        gen_two_block_scenario(20, 15, 3, 1, 0.1, 42).unwrap()
    }

    fn dense_obs(block: &DMatrix<f64>) -> Vec<LocalObs> {
        let mut out = Vec::with_capacity(block.len());
        for k in 0..block.nrows() {
            for l in 0..block.ncols() {
                out.push((k, l, block[(k, l)]));
            }
        }
        out
    }

    #[test]
    fn sampling_zero_n_is_empty() {
        let (t, pi) = two_block_target();
        let obs = sample_observations(&t, &pi, 0.0, 1).unwrap();
        assert!(obs.is_empty());
    }

    #[test]
    fn sampling_full_matrix_when_probability_one() {
        // single block, N = n*m makes the inclusion probability exactly 1
        let block = gen_low_rank_block(6, 5, 2, &SpectrumSpec::Flat { value: 1.0 }, 3).unwrap();
        let s = BlockStructure::new(vec![6], vec![5]).unwrap();
        let t = TargetBlockMatrix::from_dense(block, s).unwrap();
        let pi = ProbabilityMatrix::uniform(1, 1).unwrap();
        let obs = sample_observations(&t, &pi, 30.0, 5).unwrap();
        assert_eq!(obs.len(), 30);
        obs.validate_against(&t).unwrap();
    }

    #[test]
    fn sampling_rejects_infeasible_rate() {
        let (t, pi) = two_block_target();
        // popular block: q = N * 0.9 / 300 > 1 for N > 333
        let err = sample_observations(&t, &pi, 400.0, 1);
        assert!(matches!(err, Err(Error::InfeasibleRate(_))));
    }

    #[test]
    fn sampling_counts_match_binomial_oracle() {
        let (t, pi) = two_block_target();
        let n_expected = 250.0;
        let mut counts = [0usize; 2];
        let seeds = 50u64;
        for seed in 0..seeds {
            let obs = sample_observations(&t, &pi, n_expected, seed).unwrap();
            let split = split_by_block(&obs, &t.structure).unwrap();
            counts[0] += split.get(0, 0).len();
            counts[1] += split.get(1, 0).len();
        }
        // mean counts (225, 25) within 3 sigma of the binomial aggregate
        for (b, want_p) in [(0usize, 0.9), (1, 0.1)] {
            let trials = (300 * seeds as usize) as f64;
            let q = n_expected * want_p / 300.0;
            let sigma = (trials * q * (1.0 - q)).sqrt();
            let want = trials * q;
            let got = counts[b] as f64;
            assert!(
                (got - want).abs() < 3.0 * sigma,
                "block {b}: got {got}, want {want} +- {}",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn sgd_grads_match_finite_differences() {
        let mut rng = crate::rng::rng_from(3, 1);
        let w = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let obs: Vec<LocalObs> = (0..5)
            .flat_map(|k| (0..5).map(move |l| (k, l, ((k * 5 + l) as f64).sin())))
            .collect();
        let (gw, gv) = observed_grads(&w, &v, &obs);
        let h = 1e-6;
        let loss = |w: &DMatrix<f64>, v: &DMatrix<f64>| observed_mse(w, v, &obs);
        for r in 0..5 {
            for c in 0..2 {
                let mut wp = w.clone();
                wp[(r, c)] += h;
                let mut wm = w.clone();
                wm[(r, c)] -= h;
                let fd = (loss(&wp, &v) - loss(&wm, &v)) / (2.0 * h);
                assert_relative_eq!(gw[(r, c)], fd, max_relative = 1e-5, epsilon = 1e-9);

                let mut vp = v.clone();
                vp[(r, c)] += h;
                let mut vm = v.clone();
                vm[(r, c)] -= h;
                let fd = (loss(&w, &vp) - loss(&w, &vm)) / (2.0 * h);
                assert_relative_eq!(gv[(r, c)], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sgd_fits_fully_observed_rank_one_block() {
        let block = gen_low_rank_block(10, 8, 1, &SpectrumSpec::Flat { value: 2.0 }, 7).unwrap();
        let obs = dense_obs(&block);
        let cfg = SgdConfig {
            learning_rate: 0.05,
            epochs: 2000,
            convergence_tol: 1e-12,
            max_plateau_epochs: 10,
            seed: 5,
            ..Default::default()
        };
        let res = sgd_factor_block(&obs, 10, 8, 1, &cfg).unwrap();
        assert!(res.final_mse < 1e-6, "final mse {}", res.final_mse);
    }

    #[test]
    fn sgd_rank_matching_block_reaches_svd_oracle() {
        let block = gen_low_rank_block(12, 10, 3, &SpectrumSpec::Flat { value: 1.0 }, 9).unwrap();
        let obs = dense_obs(&block);
        let cfg = SgdConfig {
            learning_rate: 0.08,
            epochs: 4000,
            convergence_tol: 1e-13,
            max_plateau_epochs: 20,
            seed: 2,
            ..Default::default()
        };
        let res = sgd_factor_block(&obs, 12, 10, 3, &cfg).unwrap();
        let m_hat = &res.w * res.v.transpose();
        let rel = (&block - &m_hat).norm() / block.norm();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn sgd_rank_zero_reports_energy() {
        let obs = vec![(0, 0, 2.0), (1, 1, -2.0)];
        let res = sgd_factor_block(&obs, 2, 2, 0, &SgdConfig::default()).unwrap();
        assert_eq!(res.w.ncols(), 0);
        assert_relative_eq!(res.final_mse, 4.0);
    }

    #[test]
    fn sgd_empty_observations_keeps_init() {
        let res = sgd_factor_block(&[], 4, 3, 2, &SgdConfig::default()).unwrap();
        assert_eq!(res.final_mse, 0.0);
        assert_eq!(res.trajectory, vec![0.0]);
        assert_eq!(res.w.nrows(), 4);
    }

    #[test]
    fn sgd_more_rank_never_hurts_training_mse() {
        let block = gen_low_rank_block(10, 10, 4, &SpectrumSpec::Power { rho: 3.0, beta: 0.7 }, 4)
            .unwrap();
        let obs = dense_obs(&block);
        let cfg = SgdConfig {
            learning_rate: 0.05,
            epochs: 3000,
            convergence_tol: 1e-13,
            max_plateau_epochs: 15,
            seed: 8,
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for rank in [1usize, 2, 4] {
            let res = sgd_factor_block(&obs, 10, 10, rank, &cfg).unwrap();
            assert!(
                res.final_mse <= prev + 1e-9,
                "rank {rank}: {} > {prev}",
                res.final_mse
            );
            prev = res.final_mse;
        }
    }

    #[test]
    fn sgd_deterministic() {
        let obs = vec![(0, 0, 1.0), (1, 2, -0.5), (2, 1, 0.25)];
        let cfg = SgdConfig {
            epochs: 50,
            ..Default::default()
        };
        let a = sgd_factor_block(&obs, 3, 3, 2, &cfg).unwrap();
        let b = sgd_factor_block(&obs, 3, 3, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn exact_factors(t: &TargetBlockMatrix) -> BlockGrid<BlockFactors> {
        BlockGrid::from_fn(
            t.structure.num_row_blocks(),
            t.structure.num_col_blocks(),
            |i, j| {
                let (w, v) =
                    spectral::truncated_factors(&t.block(i, j), *t.block_ranks.get(i, j));
                BlockFactors { w, v }
            },
        )
    }

    #[test]
    fn two_block_projection_layout() {
        let (t, _) = two_block_target();
        let fp = assemble_md(exact_factors(&t), &t.block_ranks).unwrap();
        // P_W^1 = [I, 0], P_W^2 = [0, I] with ranks (3, 1)
        let p1 = &fp.row_projections[0];
        let p2 = &fp.row_projections[1];
        assert_eq!(p1.shape(), (3, 4));
        assert_eq!(p2.shape(), (1, 4));
        for k in 0..3 {
            assert_eq!(p1[(k, k)], 1.0);
        }
        assert_eq!(p2[(0, 3)], 1.0);
        assert_eq!(p1.iter().filter(|&&x| x != 0.0).count(), 3);
        assert_eq!(p2.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn four_block_expanded_pattern() {
        // ranks (1, 2, 1, 1): Vbar_1 P_V^1 = [V11, 0, V21, 0] positionally
        let structure = BlockStructure::new(vec![8, 7], vec![6, 9]).unwrap();
        let ranks = BlockGrid::from_vec(2, 2, vec![1usize, 2, 1, 1]).unwrap();
        let spec = crate::synth::SynthSpec::uniform_spectrum(
            structure,
            ranks.clone(),
            SpectrumSpec::Flat { value: 1.0 },
            3,
        );
        let t = crate::synth::gen_rank_additive(&spec).unwrap();
        let fp = assemble_md(exact_factors(&t), &ranks).unwrap();

        let ev = fp.expanded_col(0); // m_1 x r, r = 5
        assert_eq!(ev.shape(), (6, 5));
        let v11 = &fp.block_factors.get(0, 0).v;
        let v21 = &fp.block_factors.get(1, 0).v;
        // columns: [0] = V11, [1..3] zero, [3] = V21, [4] zero
        assert_eq!(ev.column(0), v11.column(0));
        assert!(ev.column(1).iter().all(|&x| x == 0.0));
        assert!(ev.column(2).iter().all(|&x| x == 0.0));
        assert_eq!(ev.column(3), v21.column(0));
        assert!(ev.column(4).iter().all(|&x| x == 0.0));

        let ew = fp.expanded_row(0); // [W11, W12, 0, 0]
        let w11 = &fp.block_factors.get(0, 0).w;
        let w12 = &fp.block_factors.get(0, 1).w;
        assert_eq!(ew.column(0), w11.column(0));
        assert_eq!(ew.column(1), w12.column(0));
        assert_eq!(ew.column(2), w12.column(1));
        assert!(ew.column(3).iter().all(|&x| x == 0.0));
        assert!(ew.column(4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projections_have_orthonormal_rows() {
        let (t, _) = two_block_target();
        let fp = assemble_md(exact_factors(&t), &t.block_ranks).unwrap();
        for p in fp.row_projections.iter().chain(&fp.col_projections) {
            assert!(p.iter().all(|&x| x == 0.0 || x == 1.0));
            let gram = p * p.transpose();
            assert!((gram - DMatrix::identity(p.nrows(), p.nrows())).norm() < 1e-14);
        }
    }

    #[test]
    fn reconstruct_exact_factors_reproduces_target() {
        let (t, _) = two_block_target();
        let fp = assemble_md(exact_factors(&t), &t.block_ranks).unwrap();
        let m_hat = reconstruct(&fp);
        let rel = (&t.data - &m_hat).norm() / t.data.norm();
        assert!(rel < 1e-10, "relative error {rel}");
    }

    #[test]
    fn reconstruct_zero_factors_is_zero() {
        let ranks = BlockGrid::from_vec(1, 1, vec![2usize]).unwrap();
        let factors = BlockGrid::from_vec(
            1,
            1,
            vec![BlockFactors {
                w: DMatrix::zeros(4, 2),
                v: DMatrix::zeros(3, 2),
            }],
        )
        .unwrap();
        let fp = assemble_md(factors, &ranks).unwrap();
        assert_eq!(reconstruct(&fp), DMatrix::zeros(4, 3));
    }

    #[test]
    fn single_block_assembly_is_plain_product() {
        let w = DMatrix::from_fn(5, 2, |i, j| (i + j) as f64);
        let v = DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 * 0.5);
        let ranks = BlockGrid::from_vec(1, 1, vec![2usize]).unwrap();
        let factors =
            BlockGrid::from_vec(1, 1, vec![BlockFactors { w: w.clone(), v: v.clone() }]).unwrap();
        let fp = assemble_md(factors, &ranks).unwrap();
        // projections are identity; reconstruction is exactly W V^T
        assert_eq!(reconstruct(&fp), &w * v.transpose());
    }

    #[test]
    fn weighted_mse_examples() {
        let (t, pi) = two_block_target();
        assert_relative_eq!(weighted_mse(&t.data, &t.data, &pi, &t.structure).unwrap(), 0.0);

        // uniform pi over a single block reduces to the plain MSE
        let block = gen_low_rank_block(6, 5, 2, &SpectrumSpec::Flat { value: 1.0 }, 1).unwrap();
        let s = BlockStructure::new(vec![6], vec![5]).unwrap();
        let t1 = TargetBlockMatrix::from_dense(block.clone(), s.clone()).unwrap();
        let pi1 = ProbabilityMatrix::uniform(1, 1).unwrap();
        let zero = DMatrix::zeros(6, 5);
        let want = block.iter().map(|x| x * x).sum::<f64>() / 30.0;
        assert_relative_eq!(
            weighted_mse(&t1.data, &zero, &pi1, &s).unwrap(),
            want,
            max_relative = 1e-12
        );
    }

    #[test]
    fn weighted_mse_matches_monte_carlo() {
        let (t, pi) = two_block_target();
        let m_hat = DMatrix::zeros(t.data.nrows(), t.data.ncols());
        let exact = weighted_mse(&t.data, &m_hat, &pi, &t.structure).unwrap();

        // Monte-Carlo oracle: draw pi-distributed coordinates
        let mut rng = crate::rng::rng_from(123, 9);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let block = if rng.random::<f64>() < 0.9 { 0 } else { 1 };
            let r = 20 * block + rng.random_range(0..20);
            let c = rng.random_range(0..15);
            let d = t.data[(r, c)] - m_hat[(r, c)];
            acc += d * d;
        }
        let mc = acc / draws as f64;
        assert_relative_eq!(exact, mc, max_relative = 0.01);
    }

    #[test]
    fn recovered_boundary_is_strict() {
        let m = DMatrix::from_element(3, 3, 1.0);
        assert!(recovered(&m, &m, 1e-12));
        let zero = DMatrix::zeros(3, 3);
        assert!(!recovered(&m, &zero, 0.5));
        // perturbation at exactly tol * ||M||_F must not count as recovered
        // exactly representable case: ||M|| = 4, tol = 0.25, error norm = 1
        let mut m2 = DMatrix::zeros(3, 3);
        m2[(1, 1)] = 4.0;
        let mut hat2 = m2.clone();
        hat2[(0, 0)] = 1.0;
        assert!(!recovered(&m2, &hat2, 0.25));
        assert!(recovered(&m2, &hat2, 0.2500001));
    }

    #[test]
    fn rank_additivity_examples() {
        // block-diagonal rank-1 blocks, zero off-diagonal: additive
        let mut data = DMatrix::zeros(8, 8);
        for r in 0..4 {
            for c in 0..4 {
                data[(r, c)] = 1.0;
                data[(4 + r, 4 + c)] = 2.0;
            }
        }
        let s = BlockStructure::new(vec![4, 4], vec![4, 4]).unwrap();
        let t = TargetBlockMatrix::from_dense(data, s).unwrap();
        let rep = rank_additive_check(&t);
        assert!(rep.additive);
        assert_eq!(rep.total_rank, 2);

        // identical blocks stacked vertically share their row space: not additive
        let block = gen_low_rank_block(5, 6, 2, &SpectrumSpec::Flat { value: 1.0 }, 2).unwrap();
        let mut stacked = DMatrix::zeros(10, 6);
        stacked.view_mut((0, 0), (5, 6)).copy_from(&block);
        stacked.view_mut((5, 0), (5, 6)).copy_from(&block);
        let s2 = BlockStructure::stacked(vec![5, 5], 6).unwrap();
        let t2 = TargetBlockMatrix::from_dense(stacked, s2).unwrap();
        let rep2 = rank_additive_check(&t2);
        assert!(!rep2.additive);
        assert_eq!(rep2.total_rank, 2);
        assert_eq!(rep2.sum_of_block_ranks, 4);
    }

    #[test]
    fn generated_targets_are_rank_additive_across_seeds() {
        for seed in 0..100 {
            let (t, _) = gen_two_block_scenario(15, 12, 3, 2, 0.2, seed).unwrap();
            assert!(rank_additive_check(&t).additive, "seed {seed}");
        }
    }

    #[test]
    fn pipeline_fully_observed_recovers() {
        let (t, _) = two_block_target();
        // feasible uniform-rate sampling that observes everything:
        // q_ij = N pi_ij / (n_i m_j) = 1 for pi proportional to block areas
        let pi_area = ProbabilityMatrix::from_rows(vec![vec![0.5], vec![0.5]]).unwrap();
        let plan = RankPlan::Blockwise {
            ranks: t.block_ranks.clone(),
        };
        let cfg = SgdConfig {
            learning_rate: 0.08,
            epochs: 4000,
            convergence_tol: 1e-13,
            max_plateau_epochs: 20,
            seed: 3,
            ..Default::default()
        };
        let report = train_pipeline(&t, &pi_area, 600.0, &plan, &cfg, 1e-2).unwrap();
        assert_eq!(report.n_observed, 600);
        assert!(report.recovered, "rel err {}", report.relative_frobenius);
        assert!(report.heldout_mse.is_none());
    }

    #[test]
    fn pipeline_zero_samples_reports_pi_energy() {
        let (t, pi) = two_block_target();
        let plan = RankPlan::Blockwise {
            ranks: t.block_ranks.clone(),
        };
        let cfg = SgdConfig {
            init_scale: 1e-3,
            ..Default::default()
        };
        let report = train_pipeline(&t, &pi, 0.0, &plan, &cfg, 1e-3).unwrap();
        assert!(!report.recovered);
        let zero = DMatrix::zeros(t.data.nrows(), t.data.ncols());
        let energy = weighted_mse(&t.data, &zero, &pi, &t.structure).unwrap();
        assert_relative_eq!(report.weighted_mse, energy, max_relative = 1e-2);
        // heldout draws estimate the same energy
        let heldout = report.heldout_mse.unwrap();
        assert_relative_eq!(heldout, energy, max_relative = 0.2);
    }

    #[test]
    fn pipeline_deterministic_under_threads() {
        let (t, pi) = two_block_target();
        let plan = RankPlan::Blockwise {
            ranks: t.block_ranks.clone(),
        };
        let cfg = SgdConfig {
            epochs: 30,
            seed: 11,
            ..Default::default()
        };
        let a = train_pipeline(&t, &pi, 200.0, &plan, &cfg, 1e-3).unwrap();
        let b = train_pipeline(&t, &pi, 200.0, &plan, &cfg, 1e-3).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
