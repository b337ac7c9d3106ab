//! Mixed-dimension embedding layers and block-wise matrix factorization.
//!
//! An embedding table is split into blocks and each block gets its own
//! dimension, lifted to a common base dimension by a projection. The crate
//! provides:
//!
//! - popularity-based blocking of frequency-sorted objects ([`blocking`]),
//! - dimension sizing rules: the temperature power law and the
//!   spectrum-driven optimal allocation under a parameter budget ([`sizing`]),
//! - the runnable mixed-dimension layer with offset lookup ([`layer`]),
//! - block-wise Bernoulli sampling, per-block SGD factorization and
//!   projection assembly ([`factorize`]),
//! - deterministic synthetic targets with controlled spectra ([`synth`]),
//! - experiment sweeps over temperature/budget/sample grids ([`sweep`]).
//!
//! See the `examples/` directory for one runnable walk-through per
//! capability, and the `mdembed` binary for the file-based interface.

pub mod block;
pub mod blocking;
pub mod error;
pub mod factorize;
pub mod grid;
pub mod io;
pub mod layer;
pub mod layout;
pub mod prob;
pub mod rng;
pub mod sizing;
pub mod spectral;
pub mod sweep;
pub mod synth;
pub mod target;

pub use block::BlockStructure;
pub use error::{Error, Result};
pub use factorize::{
    assemble_md, rank_additive_check, reconstruct, recovered, sample_observations,
    sgd_factor_block, train_pipeline, weighted_mse, BlockFactors, FactorPair, RankPlan,
    SgdConfig, TrainReport,
};
pub use grid::BlockGrid;
pub use layer::{Init, MDEmbeddingLayer, Projection, Reduce};
pub use layout::{param_count, round_dims, MDLayout, RoundMode};
pub use prob::ProbabilityMatrix;
pub use sizing::{
    agnostic_recovery_bound, md_sample_requirement, optimal_dims, optimal_dims_power_law,
    power_law_sizing, relaxation_gap_bound, ud_gap, AgnosticBound, SampleRequirement,
    SizingResult,
};
pub use spectral::{BlockDiagnostics, PowerFit, SpectralProfile};
pub use sweep::{run_sweep, PartitionRule, Scenario, SweepConfig, SweepResults};
pub use synth::{SpectrumSpec, SynthSpec};
pub use target::{Observation, ObservationSet, TargetBlockMatrix};
