//! Trains a small puzzle model for a few epochs and reports training-set
//! direct comparison. Pass a TOML config path to use your own settings.

use reassembly::data::generate_tasks;
use reassembly::pipeline::{evaluate, fit, headline, RunConfig, Trainer};

fn main() -> reassembly::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::default().with_overrides(&[
            "data.count=8",
            "data.grid_sizes=[2]",
            "data.image_size=24",
            "data.rotate=false",
            "schedule.steps=50",
            "denoiser.hidden=32",
            "optimizer.algorithm=adam",
            "optimizer.lr=0.001",
            "train.epochs=400",
            "train.batch_size=4",
            "train.patience=0",
            "train.eval_every=100",
            "eval.seeds=[0]",
        ])?,
    };
    let tasks = generate_tasks(&cfg.data)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let summary = fit(&mut trainer, &tasks, |line| println!("{line}"))?;
    let report = evaluate(&trainer.model, &tasks, &cfg)?;
    println!("stopped ({:?}); direct comparison {:.3}", summary.stop, headline(&report, cfg.task));
    Ok(())
}
