//! Trains a small fragment model with the chamfer term switched on, then
//! solves one instance and prints each piece's error.

use reassembly::data::generate_tasks;
use reassembly::geometry::geodesic_distance;
use reassembly::metrics::{piece_chamfers, rmse_translation};
use reassembly::pipeline::{fit, solve, RunConfig, Trainer};

fn main() -> reassembly::Result<()> {
    let cfg = RunConfig::default().with_overrides(&[
        "task=frag3d",
        "data.task=frag3d",
        "data.count=4",
        "data.piece_counts=[2, 3]",
        "cloud_encoder.points=200",
        "schedule.steps=50",
        "denoiser.hidden=32",
        "loss.chamfer=0.5",
        "optimizer.algorithm=adam",
        "optimizer.lr=0.001",
        "train.epochs=400",
        "train.batch_size=2",
        "train.patience=0",
    ])?;
    let tasks = generate_tasks(&cfg.data)?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let summary = fit(&mut trainer, &tasks, |line| println!("{line}"))?;
    println!("{} epochs, last loss {:.4}", summary.epochs.len(), summary.epochs.last().map_or(f64::NAN, |e| e.mean_loss));

    let task = &tasks[0];
    let pred = solve(&trainer.model, task, &cfg, 0)?;
    let clouds = task.clouds().expect("fragment task");
    let chamfers = piece_chamfers(clouds, &pred, &task.gt)?;
    for (i, (p, g)) in pred.iter().zip(&task.gt).enumerate() {
        let rot = geodesic_distance(&p.rotation.matrix3()?, &g.rotation.matrix3()?).to_degrees();
        println!("piece {i}: rotation error {rot:6.1} deg, chamfer {:.4}", chamfers[i]);
    }
    let (gt_t, pred_t): (Vec<_>, Vec<_>) = task.gt.iter().zip(&pred).map(|(g, p)| (g.translation.clone(), p.translation.clone())).unzip();
    println!("translation rmse {:.4}", rmse_translation(&gt_t, &pred_t)?);
    Ok(())
}
