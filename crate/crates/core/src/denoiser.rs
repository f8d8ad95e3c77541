//! Graph denoiser: predicts clean poses from piece features and noisy poses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{unit_row, Neighborhoods, Tape, Var};
use crate::geometry::{Angle2D, Quaternion, Rotation};
use crate::graph::AssemblyGraph;
use crate::params::ParamSet;
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Attention,
    PlainGcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub time_dim: usize,
    pub backend: Backend,
    pub single_step: bool,
    /// Learnable hub rows available to sparsified graphs.
    pub virtual_slots: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            layers: 4,
            hidden: 256,
            heads: 8,
            time_dim: 64,
            backend: Backend::Attention,
            single_step: false,
            virtual_slots: 8,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!("hidden {} must be a positive multiple of heads {}", self.hidden, self.heads)));
        }
        if self.layers == 0 {
            return Err(Error::Config("denoiser needs at least one layer".into()));
        }
        Ok(())
    }
}

/// Sinusoidal embedding of `t / T`.
pub fn time_embed(t: usize, steps: usize, dim: usize) -> Result<Vec<f64>> {
    if t == 0 || t > steps {
        return Err(Error::Domain(format!("timestep {t} outside [1, {steps}]")));
    }
    let x = t as f64 / steps as f64;
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (1000f64).powf(i as f64 / half.max(1) as f64);
        out.push((x * freq).sin());
        out.push((x * freq).cos());
    }
    if dim % 2 == 1 {
        out.push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    q: (usize, usize),
    k: usize,
    v: (usize, usize),
    o: (usize, usize),
    gate: (usize, usize),
    ff1: (usize, usize),
    ff2: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    feature_dim: usize,
    space_dim: usize,
    input: (usize, usize),
    virtual_rows: Option<usize>,
    layers: Vec<Layer>,
    trans_head: (usize, usize),
    rot_head: (usize, usize),
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserOutput {
    /// Hidden states of every node, hubs included.
    pub states: Var,
    /// `M × n` translation predictions.
    pub translation: Var,
    /// `M × 2` or `M × 4` rotation head before normalization.
    pub rotation_raw: Var,
}

/// A decoded pose prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PosePrediction {
    pub translation: Vec<f64>,
    pub rotation: Rotation,
    /// The rotation head was (numerically) zero and the identity was emitted.
    pub degenerate: bool,
}

fn linear_ids<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, i: usize, o: usize, rng: &mut R) -> (usize, usize) {
    (params.add_weight(&format!("{name}.w"), i, o, rng), params.add_zeros(&format!("{name}.b"), 1, o))
}

impl Denoiser {
    /// `space_dim` is 2 for puzzles and 3 for fragments.
    pub fn new<R: Rng + ?Sized>(
        cfg: DenoiserConfig,
        feature_dim: usize,
        space_dim: usize,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if space_dim != 2 && space_dim != 3 {
            return Err(Error::Config(format!("space dimension {space_dim} is not 2 or 3")));
        }
        let h = cfg.hidden;
        let rot_dim = if space_dim == 2 { 2 } else { 4 };
        let in_dim = feature_dim + space_dim + rot_dim + cfg.time_dim;
        let input = linear_ids(params, "den.input", in_dim, h, rng);
        let virtual_rows = (cfg.virtual_slots > 0).then(|| params.add_zeros("den.virtual", cfg.virtual_slots, feature_dim));
        let mut layers = Vec::new();
        for l in 0..cfg.layers {
            let p = format!("den.layer{l}");
            layers.push(Layer {
                q: linear_ids(params, &format!("{p}.q"), h, h, rng),
                k: params.add_weight(&format!("{p}.k.w"), h, h, rng),
                v: linear_ids(params, &format!("{p}.v"), h, h, rng),
                o: linear_ids(params, &format!("{p}.o"), h, h, rng),
                gate: linear_ids(params, &format!("{p}.gate"), 2 * h, 1, rng),
                ff1: linear_ids(params, &format!("{p}.ff1"), h, 2 * h, rng),
                ff2: linear_ids(params, &format!("{p}.ff2"), 2 * h, h, rng),
            });
        }
        let trans_head = linear_ids(params, "den.translation", h, space_dim, rng);
        let rot_head = linear_ids(params, "den.rotation", h, rot_dim, rng);
        Ok(Denoiser { cfg, feature_dim, space_dim, input, virtual_rows, layers, trans_head, rot_head })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn rotation_dim(&self) -> usize {
        if self.space_dim == 2 {
            2
        } else {
            4
        }
    }

    /// Width of the per-node pose input (translation plus rotation features).
    pub fn pose_dim(&self) -> usize {
        self.space_dim + self.rotation_dim()
    }

    fn check(tape: &Tape, v: Var, stage: impl FnOnce() -> String) -> Result<()> {
        if tape.value(v).is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence { stage: stage(), detail: "non-finite activation".into() })
        }
    }

    /// One message-passing layer over `x`.
    pub fn layer(&self, tape: &mut Tape, vars: &[Var], index: usize, x: Var, nbrs: &std::sync::Arc<Neighborhoods>) -> Var {
        let l = &self.layers[index];
        let lin = |tape: &mut Tape, x: Var, (w, b): (usize, usize)| tape.linear(x, vars[w], vars[b]);
        let v = lin(tape, x, l.v);
        let mixed = match self.cfg.backend {
            Backend::Attention => {
                let q = lin(tape, x, l.q);
                let k = tape.matmul(x, vars[l.k]);
                tape.attention(q, k, v, self.cfg.heads, nbrs.clone())
            }
            Backend::PlainGcn => tape.neighbor_mean(v, nbrs.clone()),
        };
        let att = lin(tape, mixed, l.o);
        let both = tape.concat_cols(&[x, att]);
        let g = lin(tape, both, l.gate);
        let g = tape.sigmoid(g);
        let y = tape.gate(g, x, att);
        let f = lin(tape, y, l.ff1);
        let f = tape.silu(f);
        let f = lin(tape, f, l.ff2);
        tape.add(y, f)
    }

    /// Runs the network. `features` is `M × feature_dim`; `poses` holds one
    /// row of noisy translation and rotation features per piece.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        graph: &AssemblyGraph,
        features: Var,
        poses: &Matrix,
        t: usize,
        steps: usize,
    ) -> Result<DenoiserOutput> {
        let m = graph.pieces();
        let fm = tape.value(features);
        if fm.rows != m || fm.cols != self.feature_dim {
            return Err(Error::Dimension(format!(
                "features are {}x{}, expected {m}x{}",
                fm.rows, fm.cols, self.feature_dim
            )));
        }
        if poses.rows != m || poses.cols != self.pose_dim() {
            return Err(Error::Dimension(format!(
                "poses are {}x{}, expected {m}x{}",
                poses.rows,
                poses.cols,
                self.pose_dim()
            )));
        }
        let temb = time_embed(t, steps, self.cfg.time_dim)?;
        let side = |rows: usize, pose: Option<&Matrix>| {
            let w = self.pose_dim() + temb.len();
            let mut s = Matrix::zeros(rows, w);
            for r in 0..rows {
                let row = s.row_mut(r);
                if let Some(p) = pose {
                    row[..p.cols].copy_from_slice(p.row(r));
                }
                row[self.pose_dim()..].copy_from_slice(&temb);
            }
            s
        };
        let real_side = tape.input(side(m, Some(poses)));
        let mut x = tape.concat_cols(&[features, real_side]);
        let hubs = graph.virtual_count();
        if hubs > 0 {
            let rows = self
                .virtual_rows
                .filter(|_| hubs <= self.cfg.virtual_slots)
                .ok_or_else(|| Error::Config(format!("graph has {hubs} hubs, model has {}", self.cfg.virtual_slots)))?;
            let hub_feat = tape.head_rows(vars[rows], hubs);
            let hub_side = tape.input(side(hubs, None));
            let hub_x = tape.concat_cols(&[hub_feat, hub_side]);
            x = tape.concat_rows(&[x, hub_x]);
        }
        let mut x = tape.linear(x, vars[self.input.0], vars[self.input.1]);
        Self::check(tape, x, || "denoiser input".into())?;
        let nbrs = graph.neighborhoods();
        for l in 0..self.layers.len() {
            x = self.layer(tape, vars, l, x, &nbrs);
            Self::check(tape, x, || format!("denoiser layer {l}"))?;
        }
        let real = if hubs > 0 { tape.head_rows(x, m) } else { x };
        let translation = tape.linear(real, vars[self.trans_head.0], vars[self.trans_head.1]);
        let rotation_raw = tape.linear(real, vars[self.rot_head.0], vars[self.rot_head.1]);
        Self::check(tape, rotation_raw, || "denoiser readout".into())?;
        Ok(DenoiserOutput { states: x, translation, rotation_raw })
    }

    /// Decodes head values into poses.
    pub fn decode(&self, tape: &Tape, out: &DenoiserOutput) -> Vec<PosePrediction> {
        decode_heads(tape.value(out.translation), tape.value(out.rotation_raw))
    }
}

/// Normalizes rotation-head rows, falling back to the identity when a row is
/// degenerate. Quaternions come back with canonical sign.
pub fn decode_heads(translation: &Matrix, rotation_raw: &Matrix) -> Vec<PosePrediction> {
    (0..translation.rows)
        .map(|i| {
            let raw = rotation_raw.row(i);
            let (unit, degenerate) = match unit_row(raw) {
                Some((u, _)) => (u, false),
                None => {
                    let mut id = vec![0.0; raw.len()];
                    id[0] = 1.0;
                    (id, true)
                }
            };
            let rotation = if unit.len() == 2 {
                Rotation::Planar(Angle2D::project(unit[0], unit[1]).0)
            } else {
                Rotation::Spatial(Quaternion::new(unit[0], unit[1], unit[2], unit[3]).canonical())
            };
            PosePrediction { translation: translation.row(i).to_vec(), rotation, degenerate }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparsifierConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(backend: Backend, space_dim: usize, seed: u64) -> (Denoiser, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let cfg = DenoiserConfig { layers: 2, hidden: 8, heads: 2, time_dim: 4, backend, single_step: false, virtual_slots: 2 };
        let d = Denoiser::new(cfg, 5, space_dim, &mut params, &mut rng).unwrap();
        // Nonzero biases and hub rows so every tensor participates.
        for v in params.values_mut() {
            for x in &mut v.data {
                if *x == 0.0 {
                    *x = rng.random_range(-0.3..0.3);
                }
            }
        }
        (d, params)
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn run(d: &Denoiser, params: &ParamSet, g: &AssemblyGraph, feats: &Matrix, poses: &Matrix) -> (Tape, DenoiserOutput) {
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let f = tape.input(feats.clone());
        let out = d.forward(&mut tape, &vars, g, f, poses, 3, 10).unwrap();
        (tape, out)
    }

    #[test]
    fn time_embedding() {
        assert_eq!(time_embed(5, 10, 8).unwrap(), time_embed(5, 10, 8).unwrap());
        let a = time_embed(1, 2, 2).unwrap();
        let b = time_embed(2, 2, 2).unwrap();
        assert!(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() > 0.0);
        let all: Vec<Vec<f64>> = (1..=300).map(|t| time_embed(t, 300, 64).unwrap()).collect();
        for i in 0..300 {
            for j in i + 1..300 {
                assert!(all[i] != all[j]);
            }
        }
        assert!(matches!(time_embed(0, 10, 4), Err(Error::Domain(_))));
        assert!(matches!(time_embed(11, 10, 4), Err(Error::Domain(_))));
    }

    #[test]
    fn single_node_self_attention() {
        let (d, params) = small(Backend::Attention, 2, 1);
        let g = AssemblyGraph::complete(1).unwrap();
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let x = tape.input(Matrix::from_vec(1, 8, (0..8).map(|v| v as f64 * 0.1).collect()));
        let nb = g.neighborhoods();
        let y = d.layer(&mut tape, &vars, 0, x, &nb);
        assert_eq!(tape.value(y).shape(), (1, 8));
        assert!(tape.last_attention_weights().unwrap().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn zero_params_fall_back_to_identity() {
        let (d, mut params) = small(Backend::Attention, 3, 2);
        params.set_all_zero();
        let g = AssemblyGraph::complete(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tape, out) = run(&d, &params, &g, &random(3, 5, &mut rng), &random(3, 7, &mut rng));
        for p in d.decode(&tape, &out) {
            assert!(p.degenerate);
            assert_eq!(p.rotation, Rotation::Spatial(Quaternion::IDENTITY));
        }
    }

    #[test]
    fn permuting_nodes_permutes_outputs() {
        for backend in [Backend::Attention, Backend::PlainGcn] {
            let (d, params) = small(backend, 2, 4);
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let g = AssemblyGraph::complete(5).unwrap();
            let (f, p) = (random(5, 5, &mut rng), random(5, 4, &mut rng));
            let perm = [3, 0, 4, 1, 2];
            let mut fp = Matrix::zeros(5, 5);
            let mut pp = Matrix::zeros(5, 4);
            for (i, &j) in perm.iter().enumerate() {
                fp.row_mut(j).copy_from_slice(f.row(i));
                pp.row_mut(j).copy_from_slice(p.row(i));
            }
            let (ta, oa) = run(&d, &params, &g, &f, &p);
            let (tb, ob) = run(&d, &params, &g, &fp, &pp);
            let (ya, yb) = (ta.value(oa.translation), tb.value(ob.translation));
            for (i, &j) in perm.iter().enumerate() {
                for (x, y) in ya.row(i).iter().zip(yb.row(j)) {
                    assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn masking_an_edge_changes_the_endpoint() {
        let (d, params) = small(Backend::Attention, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (f, p) = (random(4, 5, &mut rng), random(4, 4, &mut rng));
        let full = AssemblyGraph::complete(4).unwrap();
        let sparse = full
            .sparsify(&SparsifierConfig { prune_fraction: 0.5, virtual_count: 0, expander_degree: 1, seed: 3 })
            .unwrap();
        let (ta, oa) = run(&d, &params, &full, &f, &p);
        let (tb, ob) = run(&d, &params, &sparse, &f, &p);
        let dropped: Vec<_> = full.edges().iter().filter(|e| !sparse.edges().contains(e)).collect();
        let (i, _) = *dropped[0];
        assert_ne!(ta.value(oa.translation).row(i), tb.value(ob.translation).row(i));
    }

    #[test]
    fn hub_rows_receive_no_readout_gradient() {
        let (d, params) = small(Backend::Attention, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = AssemblyGraph::complete(4)
            .unwrap()
            .sparsify(&SparsifierConfig { prune_fraction: 0.5, virtual_count: 2, expander_degree: 2, seed: 1 })
            .unwrap();
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let f = tape.input(random(4, 5, &mut rng));
        let out = d.forward(&mut tape, &vars, &g, f, &random(4, 4, &mut rng), 2, 10).unwrap();
        let loss = tape.sq_err(out.translation, Matrix::zeros(4, 2), vec![1.0; 4]);
        let grads = tape.backward(loss);
        let gs = grads.of(out.states).unwrap();
        assert_eq!(gs.rows, 6);
        assert!(gs.data[4 * 8..].iter().all(|v| *v == 0.0));
        assert!(gs.data[..4 * 8].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn dimension_checks() {
        let (d, params) = small(Backend::Attention, 2, 10);
        let g = AssemblyGraph::complete(3).unwrap();
        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let f = tape.input(Matrix::zeros(3, 4));
        assert!(matches!(d.forward(&mut tape, &vars, &g, f, &Matrix::zeros(3, 4), 1, 5), Err(Error::Dimension(_))));
    }
}
