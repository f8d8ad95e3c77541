//! Training, sampling, evaluation, benchmarks and ablations.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod model;
pub mod optim;
pub mod solve;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::data::{Task, TaskKind};
use crate::metrics::EvalReport;
use crate::Result;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use eval::{evaluate, evaluate_with};
pub use model::Model;
pub use solve::{run_sampler, solve, OraclePredictor, PosePredictor};
pub use train::{TrainSummary, Trainer};

/// Training-set accuracy: direct comparison for puzzles, part accuracy for
/// fragments.
pub fn headline(report: &EvalReport, kind: TaskKind) -> f64 {
    match kind {
        TaskKind::Puzzle2d => report.direct_comparison.map_or(0.0, |s| s.mean),
        TaskKind::Frag3d => report.part_accuracy.map_or(0.0, |s| s.mean),
    }
}

/// Trains on `tasks`, checking training-set accuracy every
/// `train.eval_every` epochs on the first evaluation seed and stopping once
/// it reaches `train.target_accuracy`. `log` receives one line per epoch.
pub fn fit(trainer: &mut Trainer, tasks: &[Task], mut log: impl FnMut(&str)) -> Result<TrainSummary> {
    let cfg = trainer.cfg.clone();
    let mut probe = cfg.clone();
    probe.eval.seeds.truncate(1);
    probe.eval.missing = 0.0;
    trainer.fit(tasks, |model, rec| {
        let mut line = format!("epoch {:>4}  loss {:.5}  steps {}  {:.1}s", rec.epoch, rec.mean_loss, rec.steps, rec.seconds);
        let mut halt = false;
        if cfg.train.eval_every > 0 && rec.epoch % cfg.train.eval_every == 0 {
            let acc = headline(&evaluate(model, tasks, &probe)?, cfg.task);
            line.push_str(&format!("  train accuracy {acc:.3}"));
            halt = acc >= cfg.train.target_accuracy;
        }
        log(&line);
        Ok(halt)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub overrides: Vec<String>,
    pub epochs: usize,
    pub final_loss: f64,
    pub accuracy: f64,
    pub report: EvalReport,
}

/// Trains and evaluates every configured variant from scratch.
pub fn ablate(base: &RunConfig, tasks: &[Task], mut log: impl FnMut(&str)) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for v in &base.ablate.variants {
        let cfg = base.with_overrides(&v.set)?;
        log(&format!("variant {}", v.name));
        let mut trainer = Trainer::new(cfg.clone())?;
        let summary = fit(&mut trainer, tasks, &mut log)?;
        let report = evaluate(&trainer.model, tasks, &cfg)?;
        rows.push(AblationRow {
            name: v.name.clone(),
            overrides: v.set.clone(),
            epochs: summary.epochs.len(),
            final_loss: summary.epochs.last().map_or(f64::NAN, |e| e.mean_loss),
            accuracy: headline(&report, cfg.task),
            report,
        });
    }
    Ok(rows)
}
