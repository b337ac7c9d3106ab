//! Allocate dimensions optimally under a parameter budget from block
//! spectra, compare against the power-law closed form, and measure the gap
//! to a uniform allocation.
//!
//! ```bash
//! cargo run --example optimal_allocation
//! ```

use mdembed::grid::BlockGrid;
use mdembed::sizing::{optimal_dims, optimal_dims_power_law, relaxation_gap_bound, ud_gap};
use mdembed::spectral::SpectralProfile;
use mdembed::{BlockStructure, ProbabilityMatrix};

fn main() -> mdembed::Result<()> {
    // two stacked blocks, popular block sampled 9x more often
    let structure = BlockStructure::stacked(vec![400, 400], 300)?;
    let pi = ProbabilityMatrix::two_block(0.1)?;
    let beta = 0.5;
    let spectra = SpectralProfile::power(&structure, 10.0, beta)?;

    println!("{:>8} {:>12} {:>14} {:>14} {:>12}", "budget", "dims", "objective", "ud_gap", "lambda");
    for budget in [7_000u64, 14_000, 28_000, 56_000] {
        let res = optimal_dims(&spectra, &pi, &structure, budget)?;
        let gap = ud_gap(&spectra, &pi, &res.block_dims, &structure, budget)?;
        println!(
            "{budget:>8} {:>12} {:>14.6e} {:>14.6e} {:>12.3e}",
            format!("{:?}", res.block_dims.items()),
            res.objective_bound,
            gap,
            res.lambda,
        );
    }

    // the closed form under uniform power decay agrees within one dimension
    let budget = 28_000;
    let res = optimal_dims(&spectra, &pi, &structure, budget)?;
    let rho = BlockGrid::filled(2, 1, 10.0);
    let closed = optimal_dims_power_law(&rho, beta, &pi, &structure, budget)?;
    println!(
        "\nsolver dims {:?} vs closed form {:?} (continuous {:.2?})",
        res.block_dims.items(),
        closed.block_dims.items(),
        closed.relaxed_dims.items(),
    );
    println!(
        "dimension ratio {:.3} vs ((1-eps)/eps)^(1/2beta) = {:.3}",
        closed.relaxed_dims.get(0, 0) / closed.relaxed_dims.get(1, 0),
        (0.9f64 / 0.1).powf(1.0 / (2.0 * beta))
    );

    let bound = relaxation_gap_bound(&spectra, &pi, &res.relaxed_dims)?;
    println!("rounding loss bound at the relaxed solution: {bound:.6e}");
    Ok(())
}
