//! Reverse-chain sampler.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::Tape;
use crate::data::{prior_poses, Task};
use crate::diffusion::{
    ancestral_std, posterior_step_rotation, readout_2d, reverse_step_euclidean_between, reverse_step_rotation_between,
    rotation_x0_to_eps, x0_to_eps, NoiseSchedule, RotationStep,
};
use crate::geometry::{quat_to_matrix, Igso3Table, Pose, Rotation, RotationMatrix3};
use crate::graph::AssemblyGraph;
use crate::pipeline::config::{RunConfig, ScheduleConfig};
use crate::pipeline::model::{build_graph, Model};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Anything that maps the current noisy state to clean-pose estimates.
pub trait PosePredictor {
    /// `poses` has one row of translation and rotation features per piece.
    fn predict(&mut self, poses: &Matrix, t: usize) -> Result<Vec<Pose>>;
}

/// Always answers with the ground truth.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub gt: Vec<Pose>,
}

impl PosePredictor for OraclePredictor {
    fn predict(&mut self, _poses: &Matrix, _t: usize) -> Result<Vec<Pose>> {
        Ok(self.gt.clone())
    }
}

/// A trained model with cached piece features and a fixed graph.
pub struct ModelPredictor<'a> {
    model: &'a Model,
    features: Matrix,
    graph: AssemblyGraph,
    steps: usize,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Model, task: &Task, graph: AssemblyGraph, steps: usize) -> Result<Self> {
        Ok(ModelPredictor { model, features: model.features(task)?, graph, steps })
    }

    pub fn graph(&self) -> &AssemblyGraph {
        &self.graph
    }
}

impl PosePredictor for ModelPredictor<'_> {
    fn predict(&mut self, poses: &Matrix, t: usize) -> Result<Vec<Pose>> {
        let mut tape = Tape::new();
        let vars = self.model.params.bind(&mut tape);
        let feats = tape.input(self.features.clone());
        let out = self.model.denoiser.forward(&mut tape, &vars, &self.graph, feats, poses, t, self.steps)?;
        Ok(self
            .model
            .denoiser
            .decode(&tape, &out)
            .into_iter()
            .map(|p| Pose { translation: p.translation, rotation: p.rotation })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RotState {
    Planar([f64; 2]),
    Spatial(RotationMatrix3),
}

impl RotState {
    fn of(r: &Rotation) -> Result<RotState> {
        Ok(match r {
            Rotation::Planar(a) => RotState::Planar([a.c, a.s]),
            Rotation::Spatial(q) => RotState::Spatial(quat_to_matrix(q)?),
        })
    }

    fn features(&self) -> Vec<f64> {
        match self {
            RotState::Planar(v) => v.to_vec(),
            RotState::Spatial(r) => r.to_quaternion().to_array().to_vec(),
        }
    }

    fn readout(&self) -> Rotation {
        match self {
            RotState::Planar(v) => Rotation::Planar(readout_2d(*v).0),
            RotState::Spatial(r) => Rotation::Spatial(r.to_quaternion()),
        }
    }
}

/// Final poses and the timesteps the sampler visited.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub poses: Vec<Pose>,
    pub visited: Vec<usize>,
}

fn diverged(t: usize, what: &str) -> Error {
    Error::Divergence { stage: format!("sampler at t={t}"), detail: format!("non-finite {what}") }
}

/// Runs the reverse chain from `init`. In single-step mode the prediction
/// at `t = T` is returned as is.
pub fn run_sampler<R: Rng + ?Sized>(
    predictor: &mut dyn PosePredictor,
    init: &[Pose],
    sched: &NoiseSchedule,
    cfg: &ScheduleConfig,
    single_step: bool,
    rng: &mut R,
) -> Result<SolveOutcome> {
    if init.is_empty() {
        return Err(Error::EmptyInput("no pieces to solve".into()));
    }
    let mut trans: Vec<Vec<f64>> = init.iter().map(|p| p.translation.clone()).collect();
    let mut rots: Vec<RotState> = init.iter().map(|p| RotState::of(&p.rotation)).collect::<Result<_>>()?;
    let rows = |trans: &[Vec<f64>], rots: &[RotState]| {
        Matrix::from_rows(&trans.iter().zip(rots).map(|(t, r)| t.iter().copied().chain(r.features()).collect()).collect::<Vec<_>>())
    };
    let top = sched.steps();
    if single_step {
        let poses = predictor.predict(&rows(&trans, &rots), top)?;
        return Ok(SolveOutcome { poses, visited: vec![top] });
    }
    let visited = sched.timesteps(cfg.stride);
    let mut tables: HashMap<(usize, usize), Igso3Table> = HashMap::new();
    for (i, &t) in visited.iter().enumerate() {
        let t_prev = visited.get(i + 1).copied().unwrap_or(0);
        let x0 = predictor.predict(&rows(&trans, &rots), t)?;
        if x0.len() != trans.len() {
            return Err(Error::Dimension(format!("predictor returned {} poses for {} pieces", x0.len(), trans.len())));
        }
        let sigma = if cfg.stochastic && t_prev > 0 { ancestral_std(t, t_prev, sched) } else { 0.0 };
        for (k, pred) in x0.iter().enumerate() {
            let eps = x0_to_eps(&trans[k], &pred.translation, t, sched)?;
            let mut next = reverse_step_euclidean_between(&trans[k], &eps, t, t_prev, sched)?;
            if sigma > 0.0 {
                for v in &mut next {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(diverged(t, "translation"));
            }
            trans[k] = next;
            rots[k] = match (rots[k], RotState::of(&pred.rotation)?) {
                (RotState::Planar(v), RotState::Planar(p)) => {
                    let eps = x0_to_eps(&v, &p, t, sched)?;
                    let mut n = reverse_step_euclidean_between(&v, &eps, t, t_prev, sched)?;
                    if sigma > 0.0 {
                        for c in &mut n {
                            *c += sigma * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                    RotState::Planar([n[0], n[1]])
                }
                (RotState::Spatial(r), RotState::Spatial(p)) => {
                    let mut n = match cfg.rotation_step {
                        RotationStep::Posterior => posterior_step_rotation(&r, &p, t, t_prev, sched)?,
                        RotationStep::ClosedForm => {
                            let eps = rotation_x0_to_eps(&r, &p, t, sched)?;
                            reverse_step_rotation_between(&r, &eps, t, t_prev, sched)?
                        }
                    };
                    if sigma > 1e-6 {
                        if !tables.contains_key(&(t, t_prev)) {
                            tables.insert((t, t_prev), Igso3Table::new(sigma * sigma)?);
                        }
                        n = tables[&(t, t_prev)].sample(&n, rng);
                    }
                    RotState::Spatial(n.renormalized())
                }
                _ => return Err(Error::Dimension("prediction and state disagree on rotation type".into())),
            };
            if rots[k].features().iter().any(|v| !v.is_finite()) {
                return Err(diverged(t, "rotation"));
            }
        }
    }
    let poses = trans.into_iter().zip(&rots).map(|(translation, r)| Pose { translation, rotation: r.readout() }).collect();
    Ok(SolveOutcome { poses, visited })
}

/// Solves from `init` with the trained model.
pub fn solve_from(model: &Model, task: &Task, init: &[Pose], cfg: &RunConfig, seed: u64) -> Result<SolveOutcome> {
    model.check_task(task)?;
    let sched = cfg.schedule.build()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = build_graph(task.len(), &cfg.sparsify, rng.random())?;
    let mut predictor = ModelPredictor::new(model, task, graph, sched.steps())?;
    run_sampler(&mut predictor, init, &sched, &cfg.schedule, cfg.denoiser.single_step, &mut rng)
}

/// Solves from a fresh prior draw; a pure function of its inputs.
pub fn solve(model: &Model, task: &Task, cfg: &RunConfig, seed: u64) -> Result<Vec<Pose>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = prior_poses(task.len(), model.space_dim(), &mut rng);
    Ok(solve_from(model, task, &init, cfg, rng.random())?.poses)
}
