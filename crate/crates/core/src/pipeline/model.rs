//! Encoder plus denoiser behind one parameter set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::data::{Pieces, Task, TaskKind};
use crate::denoiser::Denoiser;
use crate::encoders::{CloudEncoder, PatchEncoder};
use crate::graph::AssemblyGraph;
use crate::params::ParamSet;
use crate::pipeline::config::{RunConfig, SparsifyConfig};
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PieceEncoder {
    Patch(PatchEncoder),
    Cloud(CloudEncoder),
}

impl PieceEncoder {
    pub fn output_dim(&self) -> usize {
        match self {
            PieceEncoder::Patch(e) => e.output_dim(),
            PieceEncoder::Cloud(e) => e.output_dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub task: TaskKind,
    pub encoder: PieceEncoder,
    pub denoiser: Denoiser,
    pub params: ParamSet,
}

/// Evenly strided subset of `count` points; the cloud itself when it
/// already has that many.
pub fn subsample(cloud: &[[f64; 3]], count: usize) -> Vec<[f64; 3]> {
    if cloud.len() <= count {
        return cloud.to_vec();
    }
    (0..count).map(|i| cloud[i * cloud.len() / count]).collect()
}

impl Model {
    /// Fresh model initialized from `cfg.seed`.
    pub fn new(cfg: &RunConfig) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::new();
        let (encoder, space_dim) = match cfg.task {
            TaskKind::Puzzle2d => (PieceEncoder::Patch(PatchEncoder::new(cfg.patch_encoder.clone(), &mut params, &mut rng)?), 2),
            TaskKind::Frag3d => (PieceEncoder::Cloud(CloudEncoder::new(cfg.cloud_encoder.clone(), &mut params, &mut rng)?), 3),
        };
        let denoiser = Denoiser::new(cfg.denoiser.clone(), encoder.output_dim(), space_dim, &mut params, &mut rng)?;
        Ok(Model { task: cfg.task, encoder, denoiser, params })
    }

    pub fn space_dim(&self) -> usize {
        self.denoiser.space_dim()
    }

    pub fn check_task(&self, task: &Task) -> Result<()> {
        if task.kind() != self.task {
            return Err(Error::Config(format!("model is for {:?} but the task is {:?}", self.task, task.kind())));
        }
        if task.is_empty() {
            return Err(Error::EmptyInput("task has no pieces".into()));
        }
        Ok(())
    }

    /// Clouds as the encoder sees them.
    pub fn encoder_clouds(&self, task: &Task) -> Option<Vec<Vec<[f64; 3]>>> {
        match (&self.encoder, &task.pieces) {
            (PieceEncoder::Cloud(e), Pieces::Clouds(c)) => Some(c.iter().map(|c| subsample(c, e.config().points)).collect()),
            _ => None,
        }
    }

    /// Records the encoder on `tape`, giving an `M × feature_dim` value.
    pub fn encode(&self, tape: &mut Tape, vars: &[Var], task: &Task) -> Result<Var> {
        self.check_task(task)?;
        match (&self.encoder, &task.pieces) {
            (PieceEncoder::Patch(e), Pieces::Patches(p)) => e.forward(tape, vars, p),
            (PieceEncoder::Cloud(e), Pieces::Clouds(_)) => e.forward(tape, vars, &self.encoder_clouds(task).unwrap()),
            _ => Err(Error::Config("encoder does not match the piece type".into())),
        }
    }

    /// Piece features without gradient tracking.
    pub fn features(&self, task: &Task) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let h = self.encode(&mut tape, &vars, task)?;
        Ok(tape.value(h).clone())
    }
}

/// Complete graph over `pieces`, sparsified when enabled. Graphs with fewer
/// than three pieces stay complete.
pub fn build_graph(pieces: usize, cfg: &SparsifyConfig, seed: u64) -> Result<AssemblyGraph> {
    let g = AssemblyGraph::complete(pieces)?;
    if !cfg.enabled || pieces < 3 {
        return Ok(g);
    }
    g.sparsify(&cfg.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tasks, GenerateConfig};

    #[test]
    fn model_matches_task_kind() {
        let cfg = RunConfig { denoiser: crate::denoiser::DenoiserConfig { hidden: 32, heads: 4, layers: 1, ..Default::default() }, ..Default::default() };
        let model = Model::new(&cfg).unwrap();
        let tasks = generate_tasks(&GenerateConfig { count: 1, image_size: 16, grid_sizes: vec![2], ..Default::default() }).unwrap();
        assert_eq!(model.features(&tasks[0]).unwrap().shape(), (4, 128));
        let frags = generate_tasks(&GenerateConfig { task: TaskKind::Frag3d, count: 1, ..Default::default() }).unwrap();
        assert!(matches!(model.features(&frags[0]), Err(Error::Config(_))));
        assert_eq!(Model::new(&cfg).unwrap(), model);
    }

    #[test]
    fn subsample_is_strided() {
        let c: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let s = subsample(&c, 5);
        assert_eq!(s.iter().map(|p| p[0]).collect::<Vec<_>>(), vec![0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!(subsample(&c, 20).len(), 10);
    }
}
