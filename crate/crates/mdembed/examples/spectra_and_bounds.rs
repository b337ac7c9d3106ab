//! Spectral diagnostics: per-block singular values, power-law fits,
//! incoherence and condition numbers, and the sample-complexity calculators
//! built on them.
//!
//! ```bash
//! cargo run --example spectra_and_bounds
//! ```

use mdembed::factorize::diagnostics_grid;
use mdembed::grid::BlockGrid;
use mdembed::sizing::{agnostic_recovery_bound, md_sample_requirement};
use mdembed::spectral::{power_fit, SpectralProfile};
use mdembed::synth::{gen_rank_additive, SpectrumSpec, SynthSpec};
use mdembed::{BlockStructure, ProbabilityMatrix};

fn main() -> mdembed::Result<()> {
    let structure = BlockStructure::stacked(vec![80, 80], 60)?;
    let ranks = BlockGrid::from_vec(2, 1, vec![10usize, 6])?;
    let spec = SynthSpec::uniform_spectrum(
        structure,
        ranks.clone(),
        SpectrumSpec::Power { rho: 40.0, beta: 0.7 },
        1,
    );
    let target = gen_rank_additive(&spec)?;

    // recover the decay model from the generated blocks
    let profile = SpectralProfile::from_matrix(&target.data, &target.structure)?;
    for ((i, j), sigmas) in profile.grid().iter() {
        let fit = power_fit(sigmas)?;
        println!(
            "block ({i},{j}): {} singular values, fit rho = {:.3}, beta = {:.3}, residual {:.1e}",
            sigmas.len(),
            fit.rho,
            fit.beta,
            fit.residual
        );
    }

    let diags = diagnostics_grid(&target);
    for ((i, j), d) in diags.iter() {
        println!(
            "block ({i},{j}): incoherence {:.2}, condition {:.2}, aspect {:.2}",
            d.incoherence, d.condition, d.aspect
        );
    }

    // sample-complexity view of the same instance under skewed sampling
    let pi = ProbabilityMatrix::two_block(0.15)?;
    let req = md_sample_requirement(&ranks, &diags, &pi, &target.structure, 1.0)?;
    println!(
        "\nblock-wise completion wants N >= {:.2e} (binding block {:?}, C0 = 1)",
        req.n_samples, req.binding_block
    );

    let eps = pi.min_marginal_rate(&target.structure)?;
    let n_eps = pi.low_sample_size(&target.structure)?;
    for delta in [0.1, 0.25, 0.4] {
        let b = agnostic_recovery_bound(target.rank, eps, n_eps, delta)?;
        println!(
            "agnostic algorithms below N = {:>8.0}: success probability <= {:.3e} (delta = {delta})",
            b.sample_threshold, b.probability
        );
    }
    Ok(())
}
