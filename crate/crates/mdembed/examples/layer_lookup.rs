//! Build a mixed-dimension embedding layer, look up vectors through the
//! offset table and projections, and round-trip it through disk.
//!
//! ```bash
//! cargo run --example layer_lookup
//! ```

use mdembed::io::{load_layer, save_layer};
use mdembed::layer::{Init, MDEmbeddingLayer, Projection, Reduce};
use mdembed::layout::MDLayout;

fn main() -> mdembed::Result<()> {
    // three blocks at dimensions (16, 4, 1), base dimension 16
    let layout = MDLayout::new(vec![16.0, 4.0, 1.0], 16)?;
    let row_sizes = [50usize, 500, 5_000];
    let layer = MDEmbeddingLayer::build(&layout, &row_sizes, Init::XavierUniform, 42)?;

    println!("layer: {} vectors, base dim {}", layer.len(), layer.base_dim());
    for (i, proj) in (0..layer.num_blocks()).map(|i| (i, layer.projection(i))) {
        let kind = match proj {
            Projection::Identity => "identity".to_string(),
            Projection::Dense(p) => format!("{}x{} projection", p.nrows(), p.ncols()),
        };
        println!("  block {i}: {}x{} table, {kind}", row_sizes[i], layer.dims()[i]);
    }

    // lookups cross block boundaries transparently
    for x in [0usize, 49, 50, 549, 550, 5_549] {
        let (block, local) = layer.locate(x)?;
        let e = layer.forward(x)?;
        println!("x = {x:>5} -> block {block} row {local:>4}, ||e|| = {:.4}", e.norm());
    }

    // multi-hot lookup with mean reduction
    let bag = layer.forward_multi(&[3, 77, 140, 4_000], Reduce::Mean)?;
    println!("mean-reduced bag of 4 lookups, ||e|| = {:.4}", bag.norm());

    // save to a directory (JSON header + one CSV per table/projection)
    let dir = std::env::temp_dir().join("mdembed_layer_example");
    save_layer(&dir, &layer)?;
    let back = load_layer(&dir)?;
    assert_eq!(layer, back);
    println!("saved and reloaded bit-identically from {}", dir.display());
    Ok(())
}
