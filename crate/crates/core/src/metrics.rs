//! Losses and evaluation metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{geodesic_distance, Pose, Rotation};
use crate::{Error, Result};

pub const CHAMFER_CONVENTION: &str =
    "symmetric sum of mean squared nearest-neighbour distances (P to Q plus Q to P)";
pub const DEFAULT_PA_THRESHOLD: f64 = 0.01;

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a} ground-truth pieces but {b} predictions")));
    }
    Ok(())
}

/// Mean squared translation error over pieces.
pub fn loss_translation(gt: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    check_len(gt.len(), pred.len())?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        check_len(g.len(), p.len())?;
        total += g.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / gt.len() as f64)
}

/// Mean of `‖R_gtᵀ R_pred − I‖²_F`.
pub fn loss_rotation(gt: &[Rotation], pred: &[Rotation]) -> Result<f64> {
    check_len(gt.len(), pred.len())?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        if g.dim() != p.dim() {
            return Err(Error::Dimension("mixed planar and spatial rotations".into()));
        }
        let rel = g.matrix3()?.transpose().mul(&p.matrix3()?);
        total += (rel.as_matrix() - nalgebra::Matrix3::identity()).norm_squared();
    }
    Ok(total / gt.len() as f64)
}

/// Exact nearest-neighbour index over 3D points.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Point indices arranged as an implicit balanced tree.
    order: Vec<usize>,
}

fn sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        fn build(points: &[[f64; 3]], idx: &mut [usize], depth: usize) {
            if idx.len() <= 1 {
                return;
            }
            let axis = depth % 3;
            let mid = idx.len() / 2;
            idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
            let (left, right) = idx.split_at_mut(mid);
            build(points, left, depth + 1);
            build(points, &mut right[1..], depth + 1);
        }
        build(points, &mut order, 0);
        KdTree { points: points.to_vec(), order }
    }

    /// Smallest squared distance from `q` to the indexed points.
    pub fn nearest_sq(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.order, 0, q, &mut best);
        best
    }

    fn search(&self, idx: &[usize], depth: usize, q: &[f64; 3], best: &mut f64) {
        if idx.is_empty() {
            return;
        }
        let mid = idx.len() / 2;
        let p = &self.points[idx[mid]];
        let d = sq(p, q);
        if d < *best {
            *best = d;
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { (&idx[..mid], &idx[mid + 1..]) } else { (&idx[mid + 1..], &idx[..mid]) };
        self.search(near, depth + 1, q, best);
        if diff * diff <= *best {
            self.search(far, depth + 1, q, best);
        }
    }
}

fn mean_nearest(from: &[[f64; 3]], to: &KdTree) -> f64 {
    from.iter().map(|p| to.nearest_sq(p)).sum::<f64>() / from.len() as f64
}

/// Symmetric Chamfer distance through kd-trees.
pub fn chamfer_distance(p: &[[f64; 3]], q: &[[f64; 3]]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput("chamfer distance of an empty cloud".into()));
    }
    Ok(mean_nearest(p, &KdTree::new(q)) + mean_nearest(q, &KdTree::new(p)))
}

/// Quadratic-time reference for [`chamfer_distance`].
pub fn chamfer_distance_brute(p: &[[f64; 3]], q: &[[f64; 3]]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyInput("chamfer distance of an empty cloud".into()));
    }
    let side = |a: &[[f64; 3]], b: &[[f64; 3]]| {
        a.iter().map(|x| b.iter().map(|y| sq(x, y)).fold(f64::INFINITY, f64::min)).sum::<f64>() / a.len() as f64
    };
    Ok(side(p, q) + side(q, p))
}

/// Applies rotation then translation to a centered cloud.
pub fn pose_cloud(cloud: &[[f64; 3]], pose: &Pose) -> Result<Vec<[f64; 3]>> {
    let r = pose.rotation.matrix3()?;
    let mut t = [0.0; 3];
    for (dst, src) in t.iter_mut().zip(&pose.translation) {
        *dst = *src;
    }
    Ok(cloud
        .iter()
        .map(|p| {
            let v = r.apply(&Vector3::new(p[0], p[1], p[2]));
            [v.x + t[0], v.y + t[1], v.z + t[2]]
        })
        .collect())
}

/// Per-piece posed Chamfer distances.
pub fn piece_chamfers(pieces: &[Vec<[f64; 3]>], pred: &[Pose], gt: &[Pose]) -> Result<Vec<f64>> {
    check_len(pieces.len(), pred.len())?;
    check_len(pieces.len(), gt.len())?;
    pieces
        .iter()
        .zip(pred.iter().zip(gt))
        .map(|(c, (p, g))| chamfer_distance(&pose_cloud(c, p)?, &pose_cloud(c, g)?))
        .collect()
}

/// Fraction of pieces whose posed Chamfer distance is below `threshold`.
pub fn part_accuracy(pieces: &[Vec<[f64; 3]>], pred: &[Pose], gt: &[Pose], threshold: f64) -> Result<f64> {
    let cds = piece_chamfers(pieces, pred, gt)?;
    if cds.is_empty() {
        return Ok(0.0);
    }
    Ok(cds.iter().filter(|&&d| d < threshold).count() as f64 / cds.len() as f64)
}

/// Relative rotation angle in radians.
pub fn rotation_error(gt: &Rotation, pred: &Rotation) -> Result<f64> {
    Ok(geodesic_distance(&gt.matrix3()?, &pred.matrix3()?))
}

pub fn rmse_rotation_deg(gt: &[Rotation], pred: &[Rotation]) -> Result<f64> {
    check_len(gt.len(), pred.len())?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (g, p) in gt.iter().zip(pred) {
        total += rotation_error(g, p)?.powi(2);
    }
    Ok((total / gt.len() as f64).sqrt().to_degrees())
}

pub fn rmse_translation(gt: &[Vec<f64>], pred: &[Vec<f64>]) -> Result<f64> {
    Ok(loss_translation(gt, pred)?.sqrt())
}

/// Lattice cell containing a board coordinate; boundaries go to the lower cell.
pub fn snap_cell(x: f64, n: usize) -> usize {
    let u = (x + 1.0) * n as f64 / 2.0;
    (u.ceil() - 1.0).clamp(0.0, n as f64 - 1.0) as usize
}

/// Center of lattice cell `i` on `[-1, 1]`.
pub fn cell_center(i: usize, n: usize) -> f64 {
    (2 * i + 1) as f64 / n as f64 - 1.0
}

fn quarter(rot: &Rotation) -> Result<u8> {
    match rot {
        Rotation::Planar(a) => Ok(a.snap_quarter()),
        Rotation::Spatial(_) => Err(Error::Dimension("direct comparison needs planar rotations".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectComparison {
    pub fraction: f64,
    pub successes: usize,
    pub evaluated: usize,
    /// Pieces whose snapped cell is shared with another piece.
    pub collisions: usize,
    pub per_piece: Vec<bool>,
}

/// Snaps predictions to the `n × n` lattice and nearest quarter turn and
/// counts pieces whose cell and rotation both match.
pub fn direct_comparison(gt: &[Pose], pred: &[Pose], n: usize) -> Result<DirectComparison> {
    check_len(gt.len(), pred.len())?;
    if n == 0 {
        return Err(Error::Config("lattice side must be positive".into()));
    }
    let mut per_piece = Vec::with_capacity(gt.len());
    let mut cells = Vec::with_capacity(gt.len());
    for (g, p) in gt.iter().zip(pred) {
        let gc = (snap_cell(g.translation[0], n), snap_cell(g.translation[1], n));
        let pc = (snap_cell(p.translation[0], n), snap_cell(p.translation[1], n));
        per_piece.push(gc == pc && quarter(&g.rotation)? == quarter(&p.rotation)?);
        cells.push(pc);
    }
    let collisions = cells.iter().filter(|c| cells.iter().filter(|d| d == c).count() > 1).count();
    let successes = per_piece.iter().filter(|&&s| s).count();
    let evaluated = gt.len();
    let fraction = if evaluated == 0 { 0.0 } else { successes as f64 / evaluated as f64 };
    Ok(DirectComparison { fraction, successes, evaluated, collisions, per_piece })
}

/// Metrics for one solved instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceRecord {
    pub piece: usize,
    pub rotation_error_deg: f64,
    pub translation_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub rmse_rotation_deg: f64,
    pub rmse_translation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub part_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_comparison: Option<DirectComparison>,
    pub pieces: Vec<PieceRecord>,
}

/// Scores one instance. `clouds` enables the Chamfer-based metrics and
/// `lattice` the puzzle metric.
pub fn score_instance(
    gt: &[Pose],
    pred: &[Pose],
    clouds: Option<&[Vec<[f64; 3]>]>,
    lattice: Option<usize>,
    pa_threshold: f64,
) -> Result<InstanceMetrics> {
    check_len(gt.len(), pred.len())?;
    let gr: Vec<Rotation> = gt.iter().map(|p| p.rotation).collect();
    let pr: Vec<Rotation> = pred.iter().map(|p| p.rotation).collect();
    let gtr: Vec<Vec<f64>> = gt.iter().map(|p| p.translation.clone()).collect();
    let ptr: Vec<Vec<f64>> = pred.iter().map(|p| p.translation.clone()).collect();
    let chamfers = clouds.map(|c| piece_chamfers(c, pred, gt)).transpose()?;
    let dc = lattice.map(|n| direct_comparison(gt, pred, n)).transpose()?;
    let mut pieces = Vec::with_capacity(gt.len());
    for i in 0..gt.len() {
        let te = gtr[i].iter().zip(&ptr[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        pieces.push(PieceRecord {
            piece: i,
            rotation_error_deg: rotation_error(&gr[i], &pr[i])?.to_degrees(),
            translation_error: te,
            chamfer: chamfers.as_ref().map(|c| c[i]),
            placed: dc.as_ref().map(|d| d.per_piece[i]),
        });
    }
    let part_accuracy = chamfers.as_ref().map(|c| {
        if c.is_empty() {
            0.0
        } else {
            c.iter().filter(|&&d| d < pa_threshold).count() as f64 / c.len() as f64
        }
    });
    Ok(InstanceMetrics {
        rmse_rotation_deg: rmse_rotation_deg(&gr, &pr)?,
        rmse_translation: rmse_translation(&gtr, &ptr)?,
        part_accuracy,
        direct_comparison: dc,
        pieces,
    })
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

/// Aggregated evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub chamfer_convention: String,
    pub part_accuracy_threshold: f64,
    pub seeds: Vec<u64>,
    pub instances: usize,
    pub evaluated_pieces: usize,
    pub rmse_rotation_deg: Summary,
    pub rmse_translation: Summary,
    /// `rmse_translation` scaled by 100.
    pub rmse_translation_e2: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub part_accuracy: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_comparison: Option<Summary>,
    pub collisions: usize,
    /// One entry per (seed, instance).
    pub per_instance: Vec<InstanceMetrics>,
}

impl EvalReport {
    /// Combines per-seed runs. Every metric is first averaged over the
    /// pieces of one seed, then summarized across seeds.
    pub fn from_runs(runs: &[(u64, Vec<InstanceMetrics>)], pa_threshold: f64) -> EvalReport {
        let mut rot = Vec::new();
        let mut tr = Vec::new();
        let mut pa = Vec::new();
        let mut dc = Vec::new();
        let mut collisions = 0;
        let mut evaluated = 0;
        for (_, inst) in runs {
            let pieces: Vec<&PieceRecord> = inst.iter().flat_map(|m| &m.pieces).collect();
            let count = pieces.len().max(1) as f64;
            evaluated += pieces.len();
            rot.push((pieces.iter().map(|p| p.rotation_error_deg.powi(2)).sum::<f64>() / count).sqrt());
            tr.push((pieces.iter().map(|p| p.translation_error.powi(2)).sum::<f64>() / count).sqrt());
            if inst.iter().all(|m| m.part_accuracy.is_some()) && !inst.is_empty() {
                let ok = pieces.iter().filter(|p| p.chamfer.is_some_and(|c| c < pa_threshold)).count();
                pa.push(ok as f64 / count);
            }
            if inst.iter().all(|m| m.direct_comparison.is_some()) && !inst.is_empty() {
                let ok = pieces.iter().filter(|p| p.placed == Some(true)).count();
                dc.push(ok as f64 / count);
                collisions += inst.iter().map(|m| m.direct_comparison.as_ref().unwrap().collisions).sum::<usize>();
            }
        }
        let tr_summary = Summary::of(&tr);
        EvalReport {
            chamfer_convention: CHAMFER_CONVENTION.into(),
            part_accuracy_threshold: pa_threshold,
            seeds: runs.iter().map(|(s, _)| *s).collect(),
            instances: runs.first().map_or(0, |(_, i)| i.len()),
            evaluated_pieces: evaluated,
            rmse_rotation_deg: Summary::of(&rot),
            rmse_translation: tr_summary,
            rmse_translation_e2: Summary { mean: tr_summary.mean * 100.0, std: tr_summary.std * 100.0 },
            part_accuracy: (!pa.is_empty()).then(|| Summary::of(&pa)),
            direct_comparison: (!dc.is_empty()).then(|| Summary::of(&dc)),
            collisions,
            per_instance: runs.iter().flat_map(|(_, i)| i.iter().cloned()).collect(),
        }
    }
}
