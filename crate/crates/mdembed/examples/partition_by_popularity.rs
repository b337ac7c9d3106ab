//! Block an object catalogue by empirical popularity: sort by frequency,
//! equipartition the mass into k blocks, and read off block probabilities.
//!
//! ```bash
//! cargo run --example partition_by_popularity
//! ```

use mdembed::blocking::{
    block_masses, block_sizes, block_probabilities, equipartition, sort_by_frequency,
    FrequencyTable,
};
use mdembed::BlockStructure;

fn main() -> mdembed::Result<()> {
    // a zipf-ish catalogue of 1000 objects
    let counts: Vec<f64> = (1..=1000).map(|i| 10_000.0 / i as f64).collect();
    let table = FrequencyTable::new(counts)?;

    let order = sort_by_frequency(&table);
    let sorted = table.permuted(&order)?;
    println!(
        "total mass {:.0}, top object holds {:.1}%",
        sorted.total(),
        100.0 * sorted.counts()[0] / sorted.total()
    );

    for k in [4, 8, 16] {
        let offsets = equipartition(&sorted, k)?;
        let sizes = block_sizes(sorted.len(), &offsets);
        let masses = block_masses(&sorted, &offsets);
        println!("\nk = {k}: offsets {offsets:?}");
        println!("  block sizes  {sizes:?}");
        println!(
            "  block masses {:?}",
            masses.iter().map(|m| m.round()).collect::<Vec<_>>()
        );
    }

    // block-level probabilities for an 8-way partition
    let offsets = equipartition(&sorted, 8)?;
    let sizes = block_sizes(sorted.len(), &offsets);
    let structure = BlockStructure::stacked(sizes, 1)?;
    let p = block_probabilities(&structure, None)?;
    println!("\nper-feature block probabilities (1/n_i): {p:?}");
    Ok(())
}
