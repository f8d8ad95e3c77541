//! Builds the complete assembly graph for a 30×30 puzzle and its
//! sparsified counterpart with virtual hubs.

use reassembly::graph::{AssemblyGraph, SparsifierConfig};

fn main() -> reassembly::Result<()> {
    let m = 900;
    let complete = AssemblyGraph::complete(m)?;
    println!("complete: {} edges, {} bytes of edge state", complete.edges().len(), complete.edge_memory_estimate());
    for prune in [0.0, 0.2, 0.6, 0.8] {
        let g = complete.sparsify(&SparsifierConfig { prune_fraction: prune, ..Default::default() })?;
        let total = g.edges().len() + g.virtual_edge_count();
        println!(
            "prune {prune}: {} real + {} hub edges, complete/sparse edge ratio {:.2}, connected: {}",
            g.edges().len(),
            g.virtual_edge_count(),
            complete.edges().len() as f64 / total as f64,
            g.is_connected()
        );
    }
    Ok(())
}
