//! Piece graphs: the complete graph over pieces, its sparsified form with
//! virtual hub nodes, and conversion to neighbor lists.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Neighborhoods;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssemblyGraph {
    pieces: usize,
    /// Undirected real edges `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    virtual_count: usize,
    sparsified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparsifierConfig {
    pub prune_fraction: f64,
    pub virtual_count: usize,
    pub expander_degree: usize,
    pub seed: u64,
}

impl Default for SparsifierConfig {
    fn default() -> Self {
        SparsifierConfig { prune_fraction: 0.8, virtual_count: 8, expander_degree: 3, seed: 0 }
    }
}

impl SparsifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::Config(format!("prune_fraction {} outside [0, 1)", self.prune_fraction)));
        }
        if self.expander_degree == 0 {
            return Err(Error::Config("expander_degree must be at least 1".into()));
        }
        Ok(())
    }

    /// Real edges kept out of `m` pieces.
    pub fn retained_edges(&self, m: usize) -> usize {
        let total = m * m.saturating_sub(1) / 2;
        ((1.0 - self.prune_fraction) * total as f64).round() as usize
    }
}

impl AssemblyGraph {
    pub fn complete(pieces: usize) -> Result<Self> {
        if pieces == 0 {
            return Err(Error::EmptyInput("a graph needs at least one piece".into()));
        }
        let edges = (0..pieces).flat_map(|i| (i + 1..pieces).map(move |j| (i, j))).collect();
        Ok(AssemblyGraph { pieces, edges, virtual_count: 0, sparsified: false })
    }

    pub fn pieces(&self) -> usize {
        self.pieces
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn virtual_count(&self) -> usize {
        self.virtual_count
    }

    pub fn is_sparsified(&self) -> bool {
        self.sparsified
    }

    pub fn node_count(&self) -> usize {
        self.pieces + self.virtual_count
    }

    pub fn virtual_edge_count(&self) -> usize {
        self.virtual_count * self.pieces
    }

    /// Edge count used as the memory proxy.
    pub fn edge_memory_estimate(&self) -> usize {
        self.edges.len() + self.virtual_edge_count()
    }

    /// Neighbor lists with self first; virtual nodes follow the pieces and
    /// link to every piece.
    pub fn neighborhoods(&self) -> Arc<Neighborhoods> {
        let n = self.node_count();
        let mut lists: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in &self.edges {
            lists[i].push(j);
            lists[j].push(i);
        }
        for v in self.pieces..n {
            for i in 0..self.pieces {
                lists[i].push(v);
                lists[v].push(i);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut l in lists {
            l[1..].sort_unstable();
            targets.extend(l);
            offsets.push(targets.len());
        }
        Arc::new(Neighborhoods { offsets, targets })
    }

    /// Whether every node (virtual included) is reachable from node 0.
    pub fn is_connected(&self) -> bool {
        let nb = self.neighborhoods();
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in nb.of(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Keeps edges from random Hamiltonian cycles, tops up with uniformly
    /// drawn edges to the retention count and attaches virtual hubs.
    pub fn sparsify(&self, cfg: &SparsifierConfig) -> Result<AssemblyGraph> {
        if self.sparsified {
            return Err(Error::Config("graph is already sparsified".into()));
        }
        cfg.validate()?;
        let m = self.pieces;
        let target = cfg.retained_edges(m);
        if cfg.virtual_count == 0 && m > 1 && target < m - 1 {
            return Err(Error::Config(format!(
                "keeping {target} of {} edges cannot connect {m} pieces without virtual nodes",
                self.edges.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut kept: HashSet<(usize, usize)> = HashSet::with_capacity(target);
        let mut order: Vec<usize> = (0..m).collect();
        'cycles: for _ in 0..cfg.expander_degree {
            if m < 2 {
                break;
            }
            order.shuffle(&mut rng);
            for k in 0..m {
                if kept.len() >= target {
                    break 'cycles;
                }
                let (a, b) = (order[k], order[(k + 1) % m]);
                if a != b {
                    kept.insert((a.min(b), a.max(b)));
                }
            }
        }
        if kept.len() < target {
            let mut rest: Vec<(usize, usize)> = self.edges.iter().copied().filter(|e| !kept.contains(e)).collect();
            let need = target - kept.len();
            let (chosen, _) = rest.partial_shuffle(&mut rng, need);
            kept.extend(chosen.iter().copied());
        }
        let mut edges: Vec<(usize, usize)> = kept.into_iter().collect();
        edges.sort_unstable();
        let out = AssemblyGraph { pieces: m, edges, virtual_count: cfg.virtual_count, sparsified: true };
        if !out.is_connected() {
            return Err(Error::Config(format!("sparsified graph over {m} pieces is disconnected")));
        }
        Ok(out)
    }
}

/// Complete graph over nodes carrying feature vectors of one shared width.
pub fn build_complete(features: &[Vec<f64>]) -> Result<AssemblyGraph> {
    let first = features.first().ok_or_else(|| Error::EmptyInput("no pieces".into()))?;
    if let Some(bad) = features.iter().find(|f| f.len() != first.len()) {
        return Err(Error::Dimension(format!("feature widths {} and {} differ", first.len(), bad.len())));
    }
    AssemblyGraph::complete(features.len())
}

/// Relabels nodes: piece `i` becomes `perm[i]`.
pub fn relabel(edges: &[(usize, usize)], perm: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = edges
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (perm[i], perm[j]);
            (a.min(b), a.max(b))
        })
        .collect();
    out.sort_unstable();
    out
}

/// Writes `i,j,kind` rows.
pub fn edges_csv(g: &AssemblyGraph) -> String {
    let mut s = String::from("source,target,kind\n");
    for &(i, j) in &g.edges {
        s.push_str(&format!("{i},{j},real\n"));
    }
    for v in 0..g.virtual_count {
        for i in 0..g.pieces {
            s.push_str(&format!("{},{i},virtual\n", g.pieces + v));
        }
    }
    s
}
