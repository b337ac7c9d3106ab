//! Command-line interface over the library: sizing, blocking, synthesis,
//! training, evaluation and sweeps, all file-based.
//!
//! Exit codes: 0 on success, 2 on validation errors, 3 on infeasible
//! configurations.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mdembed::blocking::{block_masses, block_sizes, equipartition, sort_by_frequency, FrequencyTable};
use mdembed::error::{Error, Result};
use mdembed::factorize::{rank_additive_check, recovered, train_pipeline, weighted_mse, RankPlan, SgdConfig};
use mdembed::io;
use mdembed::layout::{round_dims, RoundMode};
use mdembed::sizing::{optimal_dims, power_law_sizing};
use mdembed::sweep::{emit_popularity_partition_report, results_csv, run_sweep, summarize, PartitionRule, SweepConfig};
use mdembed::synth::{gen_rank_additive, SynthSpec};
use mdembed::target::TargetBlockMatrix;
use mdembed::BlockStructure;

#[derive(Parser)]
#[command(name = "mdembed", version, about = "Mixed-dimension embedding toolkit")]
struct Cli {
    /// Seed override for commands that draw randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output path; file or directory depending on the subcommand.
    /// Single-document commands print to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Power-law dimension sizing from a frequency CSV (`id,count`).
    /// Each row is one block's mass unless --blocks groups ids first.
    Size {
        #[arg(long)]
        freqs: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 32)]
        base_dim: usize,
        /// Rounding mode: floor, nearest or pow2. Unrounded when omitted.
        #[arg(long)]
        round: Option<String>,
        /// Sort ids and equipartition them into this many blocks first.
        #[arg(long)]
        blocks: Option<usize>,
    },

    /// Spectrum-driven optimal allocation under a parameter budget.
    OptimalSize {
        /// Spectra CSV: `block_i,block_j,k,sigma`.
        #[arg(long)]
        spectra: PathBuf,
        /// Block probabilities as dense CSV (normalized on ingest).
        #[arg(long)]
        pi: PathBuf,
        /// Block structure JSON.
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long)]
        budget: u64,
    },

    /// Sort a frequency table and equipartition it into k blocks.
    Block {
        #[arg(long)]
        freqs: PathBuf,
        #[arg(long)]
        k: usize,
    },

    /// Generate a rank-additive target matrix from a spec JSON.
    /// Writes the matrix CSV to --out plus a `<stem>.meta.json` sidecar.
    Synth {
        #[arg(long)]
        spec: PathBuf,
    },

    /// Sample observations and run block-wise (or uniform) factorization.
    Train {
        /// Dense target matrix CSV.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
        /// Rank plan JSON: {"mode":"blockwise","ranks":...} or
        /// {"mode":"uniform","rank":R}.
        #[arg(long)]
        ranks: PathBuf,
        #[arg(long)]
        n_samples: f64,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 0.1)]
        init_scale: f64,
        #[arg(long, default_value_t = 1e-3)]
        recovery_tol: f64,
    },

    /// Evaluate a reconstruction against a target matrix.
    Eval {
        #[arg(long)]
        matrix: PathBuf,
        /// Reconstruction CSV to score.
        #[arg(long)]
        approx: PathBuf,
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        blocks: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },

    /// Run a temperature/budget/sample-size grid from a config JSON.
    /// Writes results.csv, summary.json and partition CSVs into --out.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("mdembed: failed to size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mdembed: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn emit<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => io::write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value)
                .map_err(|e| Error::Parse(format!("serialize: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Size {
            freqs,
            alpha,
            base_dim,
            round,
            blocks,
        } => {
            let counts = io::read_freq_csv(freqs)?;
            let table = FrequencyTable::new(counts)?;
            let p = match blocks {
                Some(k) => {
                    let sorted = table.permuted(&sort_by_frequency(&table))?;
                    let offsets = equipartition(&sorted, *k)?;
                    block_masses(&sorted, &offsets)
                }
                None => table.counts().to_vec(),
            };
            let total: f64 = p.iter().sum();
            let p: Vec<f64> = p.iter().map(|&x| x / total).collect();
            let mut layout = power_law_sizing(&p, *base_dim, *alpha)?;
            if let Some(mode) = round {
                let mode: RoundMode = mode.parse()?;
                layout = round_dims(&layout, mode);
            }
            emit(cli.out.as_deref(), &layout)
        }

        Command::OptimalSize {
            spectra,
            pi,
            blocks,
            budget,
        } => {
            let spectra = io::read_spectra_csv(spectra)?;
            let pi = io::read_pi_csv(pi)?;
            let structure: BlockStructure = io::read_json(blocks)?;
            structure.validate()?;
            let result = optimal_dims(&spectra, &pi, &structure, *budget)?;
            emit(cli.out.as_deref(), &result)
        }

        Command::Block { freqs, k } => {
            let counts = io::read_freq_csv(freqs)?;
            let table = FrequencyTable::new(counts)?;
            let permutation = sort_by_frequency(&table);
            let sorted = table.permuted(&permutation)?;
            let offsets = equipartition(&sorted, *k)?;
            #[derive(serde::Serialize)]
            struct BlockOut {
                permutation: Vec<usize>,
                offsets: Vec<usize>,
                block_sizes: Vec<usize>,
                block_masses: Vec<f64>,
            }
            let out = BlockOut {
                block_sizes: block_sizes(sorted.len(), &offsets),
                block_masses: block_masses(&sorted, &offsets),
                permutation,
                offsets,
            };
            emit(cli.out.as_deref(), &out)
        }

        Command::Synth { spec } => {
            let mut spec: SynthSpec = io::read_json(spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let out = cli.out.as_deref().ok_or_else(|| {
                Error::Structure("synth writes two files; --out is required".into())
            })?;
            let target = gen_rank_additive(&spec)?;
            io::write_matrix_csv(out, &target.data)?;
            #[derive(serde::Serialize)]
            struct Sidecar<'a> {
                structure: &'a BlockStructure,
                block_ranks: &'a mdembed::BlockGrid<usize>,
                rank: usize,
                spectra: mdembed::BlockGrid<Vec<f64>>,
                seed: u64,
            }
            let spectra = spec.block_ranks.map(|i, j, &r| {
                spec.spectra.get(i, j).resolve(r).unwrap_or_default()
            });
            let sidecar = Sidecar {
                structure: &target.structure,
                block_ranks: &target.block_ranks,
                rank: target.rank,
                spectra,
                seed: spec.seed,
            };
            io::write_json(&sidecar_path(out), &sidecar)
        }

        Command::Train {
            matrix,
            pi,
            blocks,
            ranks,
            n_samples,
            lr,
            epochs,
            batch_size,
            init_scale,
            recovery_tol,
        } => {
            let data = io::read_matrix_csv(matrix)?;
            let structure: BlockStructure = io::read_json(blocks)?;
            structure.validate()?;
            let target = TargetBlockMatrix::from_dense(data, structure)?;
            let pi = io::read_pi_csv(pi)?;
            let plan: RankPlan = io::read_json(ranks)?;
            let cfg = SgdConfig {
                learning_rate: *lr,
                epochs: *epochs,
                batch_size: *batch_size,
                init_scale: *init_scale,
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            let report = train_pipeline(&target, &pi, *n_samples, &plan, &cfg, *recovery_tol)?;
            eprintln!(
                "trained in {:.2}s: weighted mse {:.6e}, recovered {}",
                report.wall_time_secs, report.weighted_mse, report.recovered
            );
            emit(cli.out.as_deref(), &report)
        }

        Command::Eval {
            matrix,
            approx,
            pi,
            blocks,
            tol,
        } => {
            let data = io::read_matrix_csv(matrix)?;
            let m_hat = io::read_matrix_csv(approx)?;
            let structure: BlockStructure = io::read_json(blocks)?;
            structure.validate()?;
            let pi = io::read_pi_csv(pi)?;
            let target = TargetBlockMatrix::from_dense(data, structure.clone())?;
            #[derive(serde::Serialize)]
            struct EvalOut {
                weighted_mse: f64,
                relative_frobenius: f64,
                recovered: bool,
                tol: f64,
                rank_report: mdembed::factorize::RankReport,
            }
            let norm = target.data.norm();
            let rel = if norm == 0.0 {
                f64::INFINITY
            } else {
                (&target.data - &m_hat).norm() / norm
            };
            let out = EvalOut {
                weighted_mse: weighted_mse(&target.data, &m_hat, &pi, &structure)?,
                relative_frobenius: rel,
                recovered: recovered(&target.data, &m_hat, *tol),
                tol: *tol,
                rank_report: rank_additive_check(&target),
            };
            emit(cli.out.as_deref(), &out)
        }

        Command::Sweep { config } => {
            let mut cfg: SweepConfig = io::read_json(config)?;
            if let Some(seed) = cli.seed {
                cfg.base_seed = seed;
            }
            let out = cli.out.as_deref().ok_or_else(|| {
                Error::Structure("sweep writes a directory; --out is required".into())
            })?;
            std::fs::create_dir_all(out)?;
            let results = run_sweep(&cfg)?;
            std::fs::write(out.join("results.csv"), results_csv(&results))?;
            io::write_json(&out.join("summary.json"), &summarize(&results))?;
            std::fs::write(
                out.join("partitions_mass.csv"),
                emit_popularity_partition_report(&results, PartitionRule::MassThirds),
            )?;
            std::fs::write(
                out.join("partitions_block.csv"),
                emit_popularity_partition_report(&results, PartitionRule::RowBlocks),
            )?;
            eprintln!(
                "sweep done: {} rows -> {}",
                results.rows.len(),
                out.display()
            );
            Ok(())
        }
    }
}

/// `m.csv` -> `m.meta.json` next to it.
fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}
