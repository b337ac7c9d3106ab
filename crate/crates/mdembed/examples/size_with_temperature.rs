//! Size embedding dimensions with the temperature rule: dimensions scale as
//! p^alpha, the most popular block pinned to the base dimension.
//!
//! ```bash
//! cargo run --example size_with_temperature
//! ```

use mdembed::layout::{param_count, round_dims, RoundMode};
use mdembed::sizing::power_law_sizing;

fn main() -> mdembed::Result<()> {
    // block probabilities from four categorical features of very different
    // cardinality: p_i = 1/n_i
    let sizes = [10usize, 200, 5_000, 100_000];
    let p: Vec<f64> = sizes.iter().map(|&n| 1.0 / n as f64).collect();
    let base_dim = 32;

    println!("block sizes {sizes:?}\n");
    println!("{:>6} {:>30} {:>30} {:>12}", "alpha", "dims", "pow2 dims", "params");
    for alpha in [0.0, 0.2, 0.3, 0.4, 0.6, 1.0] {
        let layout = power_law_sizing(&p, base_dim, alpha)?;
        let rounded = round_dims(&layout, RoundMode::Pow2);
        let params = param_count(&rounded, &sizes)?;
        println!(
            "{alpha:>6.1} {:>30} {:>30} {params:>12}",
            format!("{:.2?}", layout.dims),
            format!("{:?}", rounded.dims),
        );
    }
    println!("\nalpha = 0 is the uniform layer; alpha = 1 is fully proportional.");
    Ok(())
}
