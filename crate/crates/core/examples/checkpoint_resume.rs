//! Shows that stopping, saving and resuming gives the same parameters as an
//! uninterrupted run.

use reassembly::data::generate_tasks;
use reassembly::pipeline::{Checkpoint, RunConfig, Trainer};

fn main() -> reassembly::Result<()> {
    let cfg = RunConfig::default().with_overrides(&[
        "data.count=4",
        "data.grid_sizes=[2]",
        "data.image_size=16",
        "schedule.steps=20",
        "denoiser.hidden=16",
        "train.batch_size=2",
    ])?;
    let tasks = generate_tasks(&cfg.data)?;
    let batches: Vec<Vec<&_>> = tasks.chunks(2).map(|c| c.iter().collect()).collect();

    let mut straight = Trainer::new(cfg.clone())?;
    for b in batches.iter().chain(&batches) {
        straight.train_step(b)?;
    }

    let mut first = Trainer::new(cfg)?;
    for b in &batches {
        first.train_step(b)?;
    }
    let path = std::env::temp_dir().join("reassembly-resume.ckpt");
    Checkpoint::of(&first).save(&path)?;
    let mut resumed = Checkpoint::load(&path)?.trainer()?;
    for b in &batches {
        resumed.train_step(b)?;
    }

    let same = straight.model.params.iter().zip(resumed.model.params.iter()).all(|((_, a), (_, b))| a == b);
    println!("checkpoint {} bytes; resumed run matches uninterrupted run: {same}", std::fs::metadata(&path)?.len());
    Ok(())
}
