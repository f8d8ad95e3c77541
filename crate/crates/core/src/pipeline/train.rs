//! Training: noisy-pose sampling, the loss graph and the epoch loop.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ChamferTarget, Tape, Var};
use crate::data::{Task, TaskKind};
use crate::diffusion::{DiffusionBatch, NoiseSchedule};
use crate::graph::AssemblyGraph;
use crate::metrics::pose_cloud;
use crate::pipeline::config::{BatchMode, LossWeights, RunConfig};
use crate::pipeline::model::{build_graph, Model};
use crate::pipeline::optim::Optimizer;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Everything random about one training example.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub t: usize,
    /// Noisy translation and rotation features, one row per piece.
    pub poses: Matrix,
    pub graph: AssemblyGraph,
}

/// Loss components of one example or batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub translation: f64,
    pub rotation: f64,
    pub chamfer: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.total += o.total;
        self.translation += o.translation;
        self.rotation += o.rotation;
        self.chamfer += o.chamfer;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss: LossParts,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub steps: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    Plateau,
    TimeBudget,
    Monitor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: Vec<EpochRecord>,
    pub stop: StopReason,
    pub seconds: f64,
}

/// Draws `t`, the forward-chain noise and the graph for one task.
pub fn draw_sample<R: Rng + ?Sized>(
    model: &Model,
    task: &Task,
    cfg: &RunConfig,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Result<TrainingSample> {
    let t = if cfg.denoiser.single_step { sched.steps() } else { rng.random_range(1..=sched.steps()) };
    let noisy = DiffusionBatch::noise_poses(&task.gt, t, sched, rng)?;
    let rows: Vec<Vec<f64>> = noisy
        .translations
        .iter()
        .zip(&noisy.rotations)
        .map(|(tr, r)| tr.iter().copied().chain(r.features()).collect())
        .collect();
    let graph = build_graph(task.len(), &cfg.sparsify, rng.random())?;
    if rows.first().map(Vec::len) != Some(model.denoiser.pose_dim()) {
        return Err(Error::Dimension("pose rows do not match the denoiser".into()));
    }
    Ok(TrainingSample { t, poses: Matrix::from_rows(&rows), graph })
}

/// Records the weighted loss of one example, scaled by `scale`. Each term is
/// a mean over the task's pieces.
pub fn sample_loss(
    model: &Model,
    task: &Task,
    sample: &TrainingSample,
    weights: &LossWeights,
    steps: usize,
    scale: f64,
) -> Result<(Tape, Var, LossParts)> {
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let feats = model.encode(&mut tape, &vars, task)?;
    let out = model.denoiser.forward(&mut tape, &vars, &sample.graph, feats, &sample.poses, sample.t, steps)?;
    let m = task.len();
    let w = vec![scale / m as f64; m];
    let trans_target = Matrix::from_rows(&task.gt.iter().map(|p| p.translation.clone()).collect::<Vec<_>>());
    let rot_target = Matrix::from_rows(&task.gt.iter().map(|p| p.rotation.params()).collect::<Vec<_>>());
    let lt = tape.sq_err(out.translation, trans_target, w.clone());
    let lr = tape.rotation_loss(out.rotation_raw, rot_target, w.clone());
    let mut terms = vec![(lt, weights.translation), (lr, weights.rotation)];
    let mut lc = None;
    if weights.chamfer > 0.0 && model.task == TaskKind::Frag3d {
        let clouds = model.encoder_clouds(task).expect("fragment task");
        let targets = clouds
            .iter()
            .zip(&task.gt)
            .map(|(c, g)| {
                let posed = pose_cloud(c, g)?;
                Ok(Some(ChamferTarget {
                    local: Matrix::from_rows(&c.iter().map(|p| p.to_vec()).collect::<Vec<_>>()),
                    posed_gt: Matrix::from_rows(&posed.iter().map(|p| p.to_vec()).collect::<Vec<_>>()),
                    weight: scale / m as f64,
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let v = tape.chamfer_loss(out.translation, out.rotation_raw, targets);
        terms.push((v, weights.chamfer));
        lc = Some(v);
    }
    let total = tape.weighted_sum(&terms);
    let parts = LossParts {
        total: tape.value(total).data[0],
        translation: tape.value(lt).data[0],
        rotation: tape.value(lr).data[0],
        chamfer: lc.map_or(0.0, |v| tape.value(v).data[0]),
    };
    if !parts.total.is_finite() {
        return Err(Error::Divergence { stage: format!("loss at t={}", sample.t), detail: "non-finite loss".into() });
    }
    Ok((tape, total, parts))
}

/// Model, optimizer and RNG stream of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: RunConfig,
    pub model: Model,
    pub optimizer: Optimizer,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub epoch: usize,
    sched: NoiseSchedule,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Trainer> {
        cfg.validate()?;
        let model = Model::new(&cfg)?;
        let optimizer = Optimizer::new(cfg.optimizer.clone(), &model.params);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_5eed);
        let sched = cfg.schedule.build()?;
        Ok(Trainer { cfg, model, optimizer, rng, step: 0, epoch: 0, sched })
    }

    /// Restores a run from saved parts.
    pub fn resume(cfg: RunConfig, model: Model, optimizer: Optimizer, rng: ChaCha8Rng, step: u64, epoch: usize) -> Result<Trainer> {
        let sched = cfg.schedule.build()?;
        Ok(Trainer { cfg, model, optimizer, rng, step, epoch, sched })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.sched
    }

    /// One optimizer update on the mean loss of `batch`.
    pub fn train_step(&mut self, batch: &[&Task]) -> Result<StepRecord> {
        if batch.is_empty() {
            return Err(Error::Config("empty training batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads: Vec<Option<Matrix>> = vec![None; self.model.params.len()];
        let mut loss = LossParts::default();
        for task in batch {
            let sample = draw_sample(&self.model, task, &self.cfg, &self.sched, &mut self.rng)?;
            let (tape, total, parts) = sample_loss(&self.model, task, &sample, &self.cfg.loss, self.sched.steps(), scale)
                .map_err(|e| match e {
                    Error::Divergence { stage, detail } => {
                        Error::Divergence { stage: format!("step {}: {stage}", self.step), detail }
                    }
                    other => other,
                })?;
            loss.add(&parts);
            for (acc, g) in grads.iter_mut().zip(tape.backward(total).into_params()) {
                match (acc.as_mut(), g) {
                    (Some(a), Some(g)) => a.add_assign(&g),
                    (None, Some(g)) => *acc = Some(g),
                    _ => {}
                }
            }
        }
        let grad_norm = self.optimizer.apply(&mut self.model.params, &mut grads).map_err(|e| match e {
            Error::Divergence { detail, .. } => Error::Divergence { stage: format!("step {}", self.step), detail },
            other => other,
        })?;
        self.step += 1;
        Ok(StepRecord { step: self.step, loss, grad_norm })
    }

    fn batches(&mut self, tasks: &[Task]) -> Vec<Vec<usize>> {
        let size = self.cfg.train.batch_size;
        let mut order: Vec<usize> = (0..tasks.len()).collect();
        order.shuffle(&mut self.rng);
        let mut batches: Vec<Vec<usize>> = match self.cfg.train.batch_mode {
            BatchMode::Mixed => order.chunks(size).map(<[usize]>::to_vec).collect(),
            BatchMode::PerSize => {
                let mut sizes: Vec<usize> = tasks.iter().map(Task::len).collect();
                sizes.sort_unstable();
                sizes.dedup();
                sizes
                    .iter()
                    .flat_map(|&s| {
                        let group: Vec<usize> = order.iter().copied().filter(|&i| tasks[i].len() == s).collect();
                        group.chunks(size).map(<[usize]>::to_vec).collect::<Vec<_>>()
                    })
                    .collect()
            }
        };
        batches.shuffle(&mut self.rng);
        batches
    }

    /// Runs epochs until the epoch limit, a loss plateau, the time budget or
    /// the monitor asks to stop. The monitor sees the model after each epoch.
    pub fn fit(
        &mut self,
        tasks: &[Task],
        mut monitor: impl FnMut(&Model, &EpochRecord) -> Result<bool>,
    ) -> Result<TrainSummary> {
        if tasks.is_empty() {
            return Err(Error::Config("no training instances".into()));
        }
        for t in tasks {
            self.model.check_task(t)?;
        }
        let start = Instant::now();
        let tc = self.cfg.train.clone();
        let mut best = f64::INFINITY;
        let mut stale = 0;
        let mut epochs = Vec::new();
        let mut stop = StopReason::MaxEpochs;
        while self.epoch < tc.epochs {
            let epoch_start = Instant::now();
            let mut sum = 0.0;
            let batches = self.batches(tasks);
            for b in &batches {
                let batch: Vec<&Task> = b.iter().map(|&i| &tasks[i]).collect();
                sum += self.train_step(&batch)?.loss.total;
            }
            self.epoch += 1;
            let rec = EpochRecord {
                epoch: self.epoch,
                mean_loss: sum / batches.len() as f64,
                steps: self.step,
                seconds: epoch_start.elapsed().as_secs_f64(),
            };
            let halt = monitor(&self.model, &rec)?;
            if rec.mean_loss < best * (1.0 - tc.min_delta) {
                best = rec.mean_loss;
                stale = 0;
            } else {
                stale += 1;
            }
            epochs.push(rec);
            if halt {
                stop = StopReason::Monitor;
                break;
            }
            if tc.patience > 0 && stale >= tc.patience {
                stop = StopReason::Plateau;
                break;
            }
            if tc.time_budget > 0.0 && start.elapsed().as_secs_f64() >= tc.time_budget {
                stop = StopReason::TimeBudget;
                break;
            }
        }
        Ok(TrainSummary { epochs, stop, seconds: start.elapsed().as_secs_f64() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_tasks, GenerateConfig};
    use crate::denoiser::DenoiserConfig;
    use crate::encoders::PatchEncoderConfig;
    use crate::pipeline::config::{Algorithm, OptimizerConfig};

    fn small_cfg() -> RunConfig {
        RunConfig {
            schedule: crate::pipeline::config::ScheduleConfig { steps: 50, ..Default::default() },
            denoiser: DenoiserConfig { hidden: 32, heads: 4, layers: 2, time_dim: 16, ..Default::default() },
            patch_encoder: PatchEncoderConfig { channels: vec![8, 8], feature_dim: 32, ..Default::default() },
            optimizer: OptimizerConfig { algorithm: Algorithm::Adam, lr: 3e-3, ..Default::default() },
            ..Default::default()
        }
    }

    fn puzzle(count: usize) -> Vec<Task> {
        generate_tasks(&GenerateConfig { count, image_size: 16, grid_sizes: vec![2], ..Default::default() }).unwrap()
    }

    #[test]
    fn identical_state_gives_identical_steps() {
        let tasks = puzzle(2);
        let batch: Vec<&Task> = tasks.iter().collect();
        let mut a = Trainer::new(small_cfg()).unwrap();
        let mut b = a.clone();
        let ra = a.train_step(&batch).unwrap();
        let rb = b.train_step(&batch).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.model.params, b.model.params);
        assert!(matches!(a.train_step(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn loss_decreases_on_one_puzzle() {
        let tasks = puzzle(1);
        let mut tr = Trainer::new(small_cfg()).unwrap();
        let sample = draw_sample(&tr.model, &tasks[0], &tr.cfg, tr.schedule(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let fixed = |tr: &Trainer| sample_loss(&tr.model, &tasks[0], &sample, &tr.cfg.loss, 50, 1.0).unwrap().2.total;
        let before = fixed(&tr);
        let mut window = Vec::new();
        for _ in 0..200 {
            window.push(tr.train_step(&[&tasks[0]]).unwrap().loss.total);
        }
        let after = fixed(&tr);
        assert!(after < 0.2 * before, "{before} -> {after}");
        let head: f64 = window[..20].iter().sum();
        let tail: f64 = window[180..].iter().sum();
        assert!(tail < head);
    }

    #[test]
    fn hubs_and_dropped_pieces_add_no_loss_terms() {
        let tasks = puzzle(1);
        let mut cfg = small_cfg();
        cfg.sparsify.enabled = true;
        let model = Model::new(&cfg).unwrap();
        let sched = cfg.schedule.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sample = draw_sample(&model, &tasks[0], &cfg, &sched, &mut rng).unwrap();
        assert!(sample.graph.virtual_count() > 0);
        let (tape, total, parts) = sample_loss(&model, &tasks[0], &sample, &cfg.loss, 50, 1.0).unwrap();
        assert!((parts.total - parts.translation - parts.rotation).abs() < 1e-12);
        let grads = tape.backward(total);
        assert!(grads.param(model.params.find("den.virtual").unwrap()).is_some());
        let zero = LossWeights { translation: 0.0, rotation: 0.0, chamfer: 0.0 };
        let (tape, total, parts) = sample_loss(&model, &tasks[0], &sample, &zero, 50, 1.0).unwrap();
        assert_eq!(parts.total, 0.0);
        let grads = tape.backward(total).into_params();
        assert!(grads.iter().flatten().all(|g| g.data.iter().all(|v| *v == 0.0)));
    }
}
