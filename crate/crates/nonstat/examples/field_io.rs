//! Field-file round trips and per-node standardization.
//!
//! ```text
//! cargo run --example field_io
//! ```

use nonstat::grid::{standardize, Field, FieldEnsemble, Grid};
use nonstat::io::{read_ensemble, write_ensemble};
use rand::prelude::*;

fn main() -> nonstat::Result<()> {
    let dir = std::env::temp_dir().join("nonstat-field-io");
    std::fs::create_dir_all(&dir)?;

    // a little 12x10 ensemble with 6 replicates
    let grid = Grid::new(12, 10, 1.0, 1.0, 0)?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
    let replicates: Vec<Field> = (0..6)
        .map(|r| {
            let values = (0..grid.interior_len())
                .map(|k| (k as f64 / 17.0).sin() + 0.3 * rng.random::<f64>() + r as f64 * 0.1)
                .collect();
            Field::new(grid, values)
        })
        .collect::<nonstat::Result<_>>()?;
    let ensemble = FieldEnsemble::new(grid, replicates)?;

    let path = dir.join("ensemble.nsf");
    write_ensemble(&ensemble, &path)?;
    let back = read_ensemble(&path)?;
    println!(
        "wrote and re-read {}: {} replicates on a {}x{} grid, values identical: {}",
        path.display(),
        back.len(),
        back.grid().nx(),
        back.grid().ny(),
        back == ensemble
    );

    let (standardized, mean, sd) = standardize(&ensemble)?;
    let node = (4, 5);
    println!(
        "node {:?}: mean {:.4}, sd {:.4}; standardized values {:?}",
        node,
        mean.get(node.0, node.1),
        sd.get(node.0, node.1),
        standardized
            .node_values(node.0, node.1)
            .iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
