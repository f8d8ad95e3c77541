//! Scores hand-made predictions with the puzzle and fragment metrics.

use reassembly::data::{generate_fragments, ShapeKind};
use reassembly::geometry::{Angle2D, Pose, Quaternion};
use reassembly::metrics::{cell_center, chamfer_distance, direct_comparison, part_accuracy, DEFAULT_PA_THRESHOLD};

fn main() -> reassembly::Result<()> {
    let n = 3;
    let gt: Vec<Pose> = (0..n * n).map(|k| Pose::planar(cell_center(k % n, n), cell_center(k / n, n), Angle2D::quarter_turns(k as i64))).collect();
    let mut pred = gt.clone();
    pred[0].translation[0] += 0.2;
    pred[1] = Pose::planar(pred[1].translation[0], pred[1].translation[1], Angle2D::quarter_turns(0));
    pred.swap(4, 5);
    let dc = direct_comparison(&gt, &pred, n)?;
    println!("direct comparison {:.3} ({} of {}), collisions {}", dc.fraction, dc.successes, dc.evaluated, dc.collisions);

    let set = generate_fragments(ShapeKind::Box, 4, 3)?;
    let truth = &set.gt_poses;
    let mut guess = truth.clone();
    guess[2].translation[2] += 0.3;
    guess[3] = Pose::spatial(set.centroids[3], Quaternion::new(0.0, 1.0, 0.0, 0.0));
    println!("chamfer between fragments 0 and 1: {:.4}", chamfer_distance(&set.fragments[0], &set.fragments[1])?);
    println!("part accuracy: {:.3}", part_accuracy(&set.fragments, &guess, truth, DEFAULT_PA_THRESHOLD)?);
    Ok(())
}
