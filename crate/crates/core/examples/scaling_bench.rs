//! Times dense and sparsified solves on growing puzzles with an untrained
//! model and writes the table and plot to a temporary directory.

use reassembly::pipeline::bench::{bench, to_csv, write_outputs};
use reassembly::pipeline::RunConfig;

fn main() -> reassembly::Result<()> {
    let cfg = RunConfig::default().with_overrides(&["bench.sizes=[16, 64, 144]", "bench.repeats=2", "denoiser.hidden=32"])?;
    let rows = bench(&cfg)?;
    print!("{}", to_csv(&rows));
    let dir = std::env::temp_dir().join("reassembly-bench");
    write_outputs(&rows, &dir)?;
    println!("outputs in {}", dir.display());
    Ok(())
}
