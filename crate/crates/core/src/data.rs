//! Synthetic tasks: procedural images cut into square puzzles, procedural
//! solids fractured by plane cuts, shuffling into the chain prior, and the
//! dataset file format.

use std::path::Path;

use nalgebra::Vector3;
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::archive::{Archive, ArchiveWriter, TensorData};
use crate::encoders::{center_piece, Patch};
use crate::geometry::{random_unit_vector, uniform_rotation, Angle2D, Pose, Quaternion, Rotation};
use crate::metrics::{cell_center, snap_cell};
use crate::{Error, Result};

pub const FRAGMENT_POINTS: usize = 1000;
pub const DATASET_MAGIC: &[u8; 8] = b"RSMBDATA";
pub const DATASET_VERSION: u32 = 1;

/// Square RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub size: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(size: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != size * size * 3 {
            return Err(Error::Dimension(format!("image buffer has {} bytes, expected {}", data.len(), size * size * 3)));
        }
        Ok(Image { size, data })
    }

    pub fn crop(&self, row: usize, col: usize, side: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(side * side * 3);
        for r in row..row + side {
            let start = (r * self.size + col) * 3;
            out.extend_from_slice(&self.data[start..start + side * 3]);
        }
        out
    }

    fn paste(&mut self, row: usize, col: usize, patch: &Patch) {
        let side = patch.size();
        for r in 0..side {
            let dst = ((row + r) * self.size + col) * 3;
            self.data[dst..dst + side * 3].copy_from_slice(&patch.data()[r * side * 3..(r + 1) * side * 3]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImageStyle {
    /// Gradient background, random figures and texture.
    Structured,
    /// A centered face-like layout with consistent semantic structure.
    Portrait,
}

fn random_color<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn blend(px: &mut [f64; 3], c: [f64; 3], a: f64) {
    for k in 0..3 {
        px[k] = px[k] * (1.0 - a) + c[k] * a;
    }
}

enum Figure {
    Disc { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, hw: f64, hh: f64, cos: f64, sin: f64 },
    Tri { p: [[f64; 2]; 3] },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
}

impl Figure {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Figure::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Figure::Ellipse { cx, cy, rx, ry } => ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0,
            Figure::Rect { cx, cy, hw, hh, cos, sin } => {
                let (dx, dy) = (x - cx, y - cy);
                (dx * cos + dy * sin).abs() <= hw && (-dx * sin + dy * cos).abs() <= hh
            }
            Figure::Tri { p } => {
                let s = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
                let (d1, d2, d3) = (s(p[0], p[1]), s(p[1], p[2]), s(p[2], p[0]));
                !((d1 < 0.0 || d2 < 0.0 || d3 < 0.0) && (d1 > 0.0 || d2 > 0.0 || d3 > 0.0))
            }
        }
    }
}

/// Renders a procedural image in unit coordinates `[0, 1]²`.
pub fn synth_image(size: usize, style: ImageStyle, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c0, c1) = (random_color(&mut rng), random_color(&mut rng));
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let (freq, phase, amp) = (rng.random_range(3.0..12.0), rng.random_range(0.0..6.3), rng.random_range(0.02..0.08));
    let mut figures: Vec<(Figure, [f64; 3], f64)> = Vec::new();
    match style {
        ImageStyle::Structured => {
            for _ in 0..rng.random_range(4..8) {
                let (cx, cy) = (rng.random(), rng.random());
                let f = match rng.random_range(0..3) {
                    0 => Figure::Disc { cx, cy, r: rng.random_range(0.08..0.3) },
                    1 => {
                        let a: f64 = rng.random_range(0.0..3.2);
                        Figure::Rect {
                            cx,
                            cy,
                            hw: rng.random_range(0.05..0.3),
                            hh: rng.random_range(0.05..0.3),
                            cos: a.cos(),
                            sin: a.sin(),
                        }
                    }
                    _ => Figure::Tri { p: [[rng.random(), rng.random()], [rng.random(), rng.random()], [rng.random(), rng.random()]] },
                };
                figures.push((f, random_color(&mut rng), rng.random_range(0.6..0.95)));
            }
        }
        ImageStyle::Portrait => {
            let skin = [rng.random_range(0.6..0.95), rng.random_range(0.45..0.75), rng.random_range(0.35..0.6)];
            let hair = [rng.random_range(0.0..0.5), rng.random_range(0.0..0.35), rng.random_range(0.0..0.25)];
            let cx = rng.random_range(0.45..0.55);
            figures.push((Figure::Rect { cx, cy: 0.95, hw: 0.4, hh: 0.15, cos: 1.0, sin: 0.0 }, random_color(&mut rng), 0.95));
            figures.push((Figure::Ellipse { cx, cy: 0.4, rx: 0.3, ry: 0.33 }, hair, 0.95));
            figures.push((Figure::Ellipse { cx, cy: 0.5, rx: 0.24, ry: 0.3 }, skin, 1.0));
            for side in [-1.0, 1.0] {
                figures.push((Figure::Disc { cx: cx + side * 0.09, cy: 0.44, r: 0.035 }, [0.1, 0.1, 0.15], 1.0));
            }
            figures.push((Figure::Ellipse { cx, cy: 0.66, rx: 0.08, ry: 0.025 }, [0.7, 0.15, 0.2], 1.0));
        }
    }
    let mut data = Vec::with_capacity(size * size * 3);
    for r in 0..size {
        for c in 0..size {
            let (x, y) = ((c as f64 + 0.5) / size as f64, (r as f64 + 0.5) / size as f64);
            let g = ((x - 0.5) * dir.cos() + (y - 0.5) * dir.sin() + 0.5).clamp(0.0, 1.0);
            let mut px = [0.0; 3];
            for k in 0..3 {
                px[k] = c0[k] + (c1[k] - c0[k]) * g;
            }
            for (f, col, a) in &figures {
                if f.contains(x, y) {
                    blend(&mut px, *col, *a);
                }
            }
            let tex = amp * (freq * (x + 0.7 * y) + phase).sin();
            for v in px {
                let noise: f64 = rng.random_range(-0.03..0.03);
                data.push(((v + tex + noise).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    Image { size, data }
}

/// Every third image is a portrait.
pub fn synth_corpus(count: usize, size: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| {
            let style = if i % 3 == 2 { ImageStyle::Portrait } else { ImageStyle::Structured };
            synth_image(size, style, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
        })
        .collect()
}

/// An image cut into an `n × n` grid of patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PuzzleInstance {
    pub n: usize,
    /// Stored rasters in row-major cell order, already turned when rotation
    /// is enabled.
    pub patches: Vec<Patch>,
    /// Cell center and the quarter turn that restores each stored raster.
    pub gt_poses: Vec<Pose>,
    pub present: Vec<bool>,
    pub seed: u64,
}

impl PuzzleInstance {
    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    /// Same puzzle with a fresh uniformly drawn set of removed pieces.
    pub fn with_missing(&self, missing_fraction: f64, seed: u64) -> Result<PuzzleInstance> {
        let mut out = self.clone();
        out.present = missing_mask(self.n * self.n, missing_fraction, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(out)
    }
}

fn missing_mask<R: Rng + ?Sized>(total: usize, fraction: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..=0.9).contains(&fraction) {
        return Err(Error::Config(format!("missing fraction {fraction} outside [0, 0.9]")));
    }
    let removed = (fraction * total as f64).round() as usize;
    let mut present = vec![true; total];
    for i in index::sample(rng, total, removed) {
        present[i] = false;
    }
    Ok(present)
}

/// Cuts `image` into `n × n` patches.
pub fn generate_puzzle(image: &Image, n: usize, rotate: bool, missing_fraction: f64, seed: u64) -> Result<PuzzleInstance> {
    if n == 0 || image.size % n != 0 {
        return Err(Error::Config(format!("image side {} is not divisible by {n}", image.size)));
    }
    let side = image.size / n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches = Vec::with_capacity(n * n);
    let mut gt_poses = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let patch = Patch::new(side, image.crop(r * side, c * side, side))?;
            let k = if rotate { rng.random_range(0..4i64) } else { 0 };
            patches.push(patch.rot90(k));
            gt_poses.push(Pose::planar(cell_center(c, n), cell_center(r, n), Angle2D::quarter_turns(-k)));
        }
    }
    let present = missing_mask(n * n, missing_fraction, &mut rng)?;
    Ok(PuzzleInstance { n, patches, gt_poses, present, seed })
}

/// Places stored patches by snapping `poses` (one per present piece, in cell
/// order) to the lattice. Absent cells stay black.
pub fn reassemble(inst: &PuzzleInstance, poses: &[Pose]) -> Result<Image> {
    let side = inst.patches.first().map_or(0, Patch::size);
    let mut img = Image { size: side * inst.n, data: vec![0; side * side * inst.n * inst.n * 3] };
    let present: Vec<usize> = (0..inst.patches.len()).filter(|&i| inst.present[i]).collect();
    if present.len() != poses.len() {
        return Err(Error::Dimension(format!("{} present pieces but {} poses", present.len(), poses.len())));
    }
    for (&i, pose) in present.iter().zip(poses) {
        let Rotation::Planar(a) = pose.rotation else {
            return Err(Error::Dimension("puzzle poses must be planar".into()));
        };
        let (c, r) = (snap_cell(pose.translation[0], inst.n), snap_cell(pose.translation[1], inst.n));
        img.paste(r * side, c * side, &inst.patches[i].rot90(a.snap_quarter() as i64));
    }
    Ok(img)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Box,
    Cylinder,
    Sphere,
    Composite,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Sphere, ShapeKind::Composite];
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Solid {
    Box([f64; 3]),
    Cylinder { radius: f64, half_height: f64 },
    Ellipsoid([f64; 3]),
    Composite { half: [f64; 3], ball: f64 },
}

impl Solid {
    fn draw<R: Rng + ?Sized>(kind: ShapeKind, rng: &mut R) -> Solid {
        let mut r = |a: f64, b: f64| rng.random_range(a..b);
        match kind {
            ShapeKind::Box => Solid::Box([r(0.25, 0.5), r(0.25, 0.5), r(0.25, 0.5)]),
            ShapeKind::Cylinder => Solid::Cylinder { radius: r(0.25, 0.45), half_height: r(0.3, 0.5) },
            ShapeKind::Sphere => Solid::Ellipsoid([r(0.3, 0.5), r(0.3, 0.5), r(0.3, 0.5)]),
            ShapeKind::Composite => Solid::Composite { half: [r(0.15, 0.3), r(0.15, 0.3), r(0.15, 0.3)], ball: r(0.15, 0.25) },
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Solid::Box(h) => (0..3).all(|k| p[k].abs() <= h[k]),
            Solid::Cylinder { radius, half_height } => p[0] * p[0] + p[1] * p[1] <= radius * radius && p[2].abs() <= half_height,
            Solid::Ellipsoid(a) => (0..3).map(|k| (p[k] / a[k]).powi(2)).sum::<f64>() <= 1.0,
            Solid::Composite { half, ball } => {
                let in_box = (p[0] + 0.15).abs() <= half[0] && p[1].abs() <= half[1] && p[2].abs() <= half[2];
                let in_ball = (p[0] - 0.2).powi(2) + p[1] * p[1] + p[2] * p[2] <= ball * ball;
                in_box || in_ball
            }
        }
    }
}

/// A cut plane `{x : (x − point)·normal = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl Plane {
    pub fn side(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|k| (p[k] - self.point[k]) * self.normal[k]).sum()
    }
}

/// A solid fractured into point-cloud fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentSet {
    /// Centered fragments, `FRAGMENT_POINTS` points each.
    pub fragments: Vec<Vec<[f64; 3]>>,
    pub centroids: Vec<[f64; 3]>,
    /// Canonical-frame poses: translation = centroid, identity rotation.
    pub gt_poses: Vec<Pose>,
    pub shape: ShapeKind,
    pub planes: Vec<Plane>,
    /// Volume samples before cutting.
    pub samples: Vec<[f64; 3]>,
    /// Sample index behind every fragment point.
    pub source: Vec<Vec<usize>>,
    pub seed: u64,
}

fn f32_round(p: [f64; 3]) -> [f64; 3] {
    [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64]
}

/// Samples the solid's interior and recursively splits it with random planes.
pub fn generate_fragments(shape: ShapeKind, num_pieces: usize, seed: u64) -> Result<FragmentSet> {
    if !(2..=20).contains(&num_pieces) {
        return Err(Error::Config(format!("fragment count {num_pieces} outside [2, 20]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solid = Solid::draw(shape, &mut rng);
    let total = FRAGMENT_POINTS * num_pieces;
    let mut samples = Vec::with_capacity(total);
    while samples.len() < total {
        let p = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        if solid.contains(p) {
            samples.push(f32_round(p));
        }
    }
    let mut cells: Vec<Vec<usize>> = vec![(0..total).collect()];
    let mut planes = Vec::new();
    while cells.len() < num_pieces {
        let (target, _) = cells.iter().enumerate().max_by_key(|(_, c)| c.len()).unwrap();
        let cell = cells.swap_remove(target);
        let mut centroid = [0.0; 3];
        for &i in &cell {
            for k in 0..3 {
                centroid[k] += samples[i][k] / cell.len() as f64;
            }
        }
        let min_side = (cell.len() * 15 / 100).max(30);
        let mut split = None;
        for _ in 0..100 {
            let pick = samples[cell[rng.random_range(0..cell.len())]];
            let point: [f64; 3] = std::array::from_fn(|k| 0.6 * centroid[k] + 0.4 * pick[k]);
            let n = random_unit_vector(&mut rng);
            let plane = Plane { point, normal: [n.x, n.y, n.z] };
            let (a, b): (Vec<usize>, Vec<usize>) = cell.iter().partition(|&&i| plane.side(samples[i]) > 0.0);
            if a.len() >= min_side && b.len() >= min_side {
                split = Some((plane, a, b));
                break;
            }
        }
        let (plane, a, b) = split.ok_or_else(|| Error::Domain("no admissible cut plane after 100 draws".into()))?;
        planes.push(plane);
        cells.push(a);
        cells.push(b);
    }
    let mut fragments = Vec::with_capacity(num_pieces);
    let mut centroids = Vec::with_capacity(num_pieces);
    let mut source = Vec::with_capacity(num_pieces);
    for cell in cells {
        let mut pick: Vec<usize> = if cell.len() >= FRAGMENT_POINTS {
            index::sample(&mut rng, cell.len(), FRAGMENT_POINTS).into_iter().map(|k| cell[k]).collect()
        } else {
            let mut v = cell.clone();
            v.extend((0..FRAGMENT_POINTS - cell.len()).map(|_| cell[rng.random_range(0..cell.len())]));
            v
        };
        pick.sort_unstable();
        let pts: Vec<[f64; 3]> = pick.iter().map(|&i| samples[i]).collect();
        let (centered, c) = center_piece(&pts)?;
        fragments.push(centered);
        centroids.push(c);
        source.push(pick);
    }
    let gt_poses = centroids.iter().map(|c| Pose::spatial(*c, Quaternion::IDENTITY)).collect();
    Ok(FragmentSet { fragments, centroids, gt_poses, shape, planes, samples, source, seed })
}

/// Piece content of a task.
#[derive(Debug, Clone, PartialEq)]
pub enum Pieces {
    Patches(Vec<Patch>),
    Clouds(Vec<Vec<[f64; 3]>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Puzzle2d,
    Frag3d,
}

/// A shuffled task: pieces in random order, each with its ground truth and a
/// pose drawn from the chain prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub pieces: Pieces,
    pub gt: Vec<Pose>,
    pub init: Vec<Pose>,
    /// Task piece `i` is source piece `permutation[i]`.
    pub permutation: Vec<usize>,
    /// Grid side for puzzles.
    pub lattice: Option<usize>,
    pub seed: u64,
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self.pieces {
            Pieces::Patches(_) => TaskKind::Puzzle2d,
            Pieces::Clouds(_) => TaskKind::Frag3d,
        }
    }

    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    pub fn space_dim(&self) -> usize {
        match self.kind() {
            TaskKind::Puzzle2d => 2,
            TaskKind::Frag3d => 3,
        }
    }

    pub fn clouds(&self) -> Option<&[Vec<[f64; 3]>]> {
        match &self.pieces {
            Pieces::Clouds(c) => Some(c),
            Pieces::Patches(_) => None,
        }
    }

    /// `inverse[source] = task index`.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (i, &s) in self.permutation.iter().enumerate() {
            inv[s] = i;
        }
        inv
    }
}

/// Draws prior poses: standard normal translations and uniform rotations.
pub fn prior_poses<R: Rng + ?Sized>(count: usize, space_dim: usize, rng: &mut R) -> Vec<Pose> {
    (0..count)
        .map(|_| {
            let t: Vec<f64> = (0..space_dim).map(|_| rng.sample(StandardNormal)).collect();
            let rotation = if space_dim == 2 {
                Rotation::Planar(Angle2D::from_radians(rng.random_range(0.0..std::f64::consts::TAU)))
            } else {
                Rotation::Spatial(uniform_rotation(rng).to_quaternion())
            };
            Pose { translation: t, rotation }
        })
        .collect()
}

/// Present puzzle pieces in random order with prior initial poses.
pub fn shuffle_puzzle(inst: &PuzzleInstance, seed: u64) -> Task {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..inst.patches.len()).filter(|&i| inst.present[i]).collect();
    permutation.shuffle(&mut rng);
    let patches = permutation.iter().map(|&i| inst.patches[i].clone()).collect();
    let gt = permutation.iter().map(|&i| inst.gt_poses[i].clone()).collect();
    let init = prior_poses(permutation.len(), 2, &mut rng);
    Task { pieces: Pieces::Patches(patches), gt, init, permutation, lattice: Some(inst.n), seed }
}

/// Fragments in random order, each turned by a uniform rotation; the ground
/// truth rotation undoes it.
pub fn shuffle_fragments(set: &FragmentSet, seed: u64) -> Task {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..set.fragments.len()).collect();
    permutation.shuffle(&mut rng);
    let mut clouds = Vec::with_capacity(permutation.len());
    let mut gt = Vec::with_capacity(permutation.len());
    for &i in &permutation {
        let r = uniform_rotation(&mut rng);
        clouds.push(
            set.fragments[i]
                .iter()
                .map(|p| {
                    let v = r.apply(&Vector3::new(p[0], p[1], p[2]));
                    f32_round([v.x, v.y, v.z])
                })
                .collect(),
        );
        gt.push(Pose::spatial(set.centroids[i], r.transpose().to_quaternion()));
    }
    let init = prior_poses(permutation.len(), 3, &mut rng);
    Task { pieces: Pieces::Clouds(clouds), gt, init, permutation, lattice: None, seed }
}

/// Removes `round(fraction · len)` pieces chosen uniformly; the survivors
/// keep their order.
pub fn drop_pieces(task: &Task, fraction: f64, seed: u64) -> Result<Task> {
    let keep = missing_mask(task.len(), fraction, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let pick = |v: &[Pose]| v.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| p.clone()).collect::<Vec<_>>();
    let pieces = match &task.pieces {
        Pieces::Patches(p) => Pieces::Patches(p.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| x.clone()).collect()),
        Pieces::Clouds(c) => Pieces::Clouds(c.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| x.clone()).collect()),
    };
    Ok(Task {
        pieces,
        gt: pick(&task.gt),
        init: pick(&task.init),
        permutation: task.permutation.iter().zip(&keep).filter(|(_, k)| **k).map(|(p, _)| *p).collect(),
        lattice: task.lattice,
        seed: task.seed,
    })
}

/// What to generate for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub task: TaskKind,
    pub count: usize,
    /// Puzzle grid sides, cycled over instances.
    pub grid_sizes: Vec<usize>,
    pub image_size: usize,
    pub rotate: bool,
    pub missing: f64,
    /// Fragment counts, cycled over instances.
    pub piece_counts: Vec<usize>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            task: TaskKind::Puzzle2d,
            count: 50,
            grid_sizes: vec![2, 3, 4],
            image_size: 48,
            rotate: true,
            missing: 0.0,
            piece_counts: vec![2, 3, 4],
            seed: 0,
        }
    }
}

/// Unshuffled sources behind a generated dataset.
#[derive(Debug, Clone)]
pub enum Sources {
    Puzzles(Vec<PuzzleInstance>),
    Fragments(Vec<FragmentSet>),
}

pub fn generate_sources(cfg: &GenerateConfig) -> Result<Sources> {
    if cfg.count == 0 {
        return Err(Error::Config("count must be positive".into()));
    }
    match cfg.task {
        TaskKind::Puzzle2d => {
            if cfg.grid_sizes.is_empty() {
                return Err(Error::Config("grid_sizes is empty".into()));
            }
            let images = synth_corpus(cfg.count, cfg.image_size, cfg.seed);
            let puzzles = images
                .iter()
                .enumerate()
                .map(|(i, img)| {
                    let n = cfg.grid_sizes[i % cfg.grid_sizes.len()];
                    generate_puzzle(img, n, cfg.rotate, cfg.missing, cfg.seed.wrapping_add(7919 * i as u64))
                })
                .collect::<Result<_>>()?;
            Ok(Sources::Puzzles(puzzles))
        }
        TaskKind::Frag3d => {
            if cfg.piece_counts.is_empty() {
                return Err(Error::Config("piece_counts is empty".into()));
            }
            let sets = (0..cfg.count)
                .map(|i| {
                    let shape = ShapeKind::ALL[i % 4];
                    let k = cfg.piece_counts[i % cfg.piece_counts.len()];
                    generate_fragments(shape, k, cfg.seed.wrapping_add(7919 * i as u64))
                })
                .collect::<Result<_>>()?;
            Ok(Sources::Fragments(sets))
        }
    }
}

impl Sources {
    pub fn shuffle(&self, seed: u64) -> Vec<Task> {
        match self {
            Sources::Puzzles(p) => p.iter().enumerate().map(|(i, x)| shuffle_puzzle(x, seed.wrapping_add(i as u64))).collect(),
            Sources::Fragments(f) => f.iter().enumerate().map(|(i, x)| shuffle_fragments(x, seed.wrapping_add(i as u64))).collect(),
        }
    }
}

pub fn generate_tasks(cfg: &GenerateConfig) -> Result<Vec<Task>> {
    Ok(generate_sources(cfg)?.shuffle(cfg.seed ^ 0x5eed))
}

fn pose_rows(poses: &[Pose]) -> Vec<f64> {
    poses.iter().flat_map(|p| p.state()).collect()
}

fn poses_from_rows(rows: &[f64], dim: usize) -> Vec<Pose> {
    let width = if dim == 2 { 4 } else { 7 };
    rows.chunks_exact(width)
        .map(|r| {
            if dim == 2 {
                Pose::planar(r[0], r[1], Angle2D { c: r[2], s: r[3] })
            } else {
                Pose::spatial([r[0], r[1], r[2]], Quaternion::new(r[3], r[4], r[5], r[6]))
            }
        })
        .collect()
}

/// Writes tasks to one file: manifest plus checksummed tensors.
pub fn write_dataset(path: &Path, tasks: &[Task]) -> Result<()> {
    let mut w = ArchiveWriter::new();
    let mut entries = Vec::with_capacity(tasks.len());
    for (i, t) in tasks.iter().enumerate() {
        let m = t.len();
        match &t.pieces {
            Pieces::Patches(ps) => {
                let side = ps.first().map_or(0, Patch::size);
                let data = ps.iter().flat_map(|p| p.data().iter().copied()).collect();
                w.add(&format!("{i}.patches"), &[m, side, side, 3], TensorData::U8(data))?;
            }
            Pieces::Clouds(cs) => {
                let k = cs.first().map_or(0, Vec::len);
                let data = cs.iter().flat_map(|c| c.iter().flat_map(|p| p.map(|v| v as f32))).collect();
                w.add(&format!("{i}.clouds"), &[m, k, 3], TensorData::F32(data))?;
            }
        }
        let width = if t.space_dim() == 2 { 4 } else { 7 };
        w.add(&format!("{i}.gt"), &[m, width], TensorData::F64(pose_rows(&t.gt)))?;
        w.add(&format!("{i}.init"), &[m, width], TensorData::F64(pose_rows(&t.init)))?;
        w.add(&format!("{i}.permutation"), &[m], TensorData::U32(t.permutation.iter().map(|&p| p as u32).collect()))?;
        entries.push(json!({
            "index": i,
            "kind": t.kind(),
            "pieces": m,
            "lattice": t.lattice,
            "seed": t.seed,
        }));
    }
    let header = json!({
        "format": "reassembly-dataset",
        "version": DATASET_VERSION,
        "count": tasks.len(),
        "conventions": {
            "board": "[-1, 1]^2, cell centers (2i+1)/n - 1, x = column, y = row",
            "planar_pose": "[x, y, cos, sin]",
            "spatial_pose": "[tx, ty, tz, qw, qx, qy, qz]",
            "rotation": "ground truth maps the stored piece into the assembled frame",
            "byte_order": "little-endian",
        },
        "instances": entries,
    });
    w.write(path, DATASET_MAGIC, header)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Task>> {
    let a = Archive::read(path, DATASET_MAGIC)?;
    let version = a.header()["version"].as_u64();
    if version != Some(DATASET_VERSION as u64) {
        return Err(Error::Load { offset: 16, detail: format!("dataset version {version:?}, expected {DATASET_VERSION}") });
    }
    let instances = a.header()["instances"]
        .as_array()
        .ok_or_else(|| Error::Load { offset: 16, detail: "manifest lacks instances".into() })?;
    let mut tasks = Vec::with_capacity(instances.len());
    for (i, meta) in instances.iter().enumerate() {
        let kind: TaskKind = serde_json::from_value(meta["kind"].clone())?;
        let lattice = meta["lattice"].as_u64().map(|v| v as usize);
        let seed = meta["seed"].as_u64().unwrap_or(0);
        let (pieces, dim) = match kind {
            TaskKind::Puzzle2d => {
                let (shape, data) = a.u8s(&format!("{i}.patches"))?;
                let chunk = shape[1] * shape[2] * 3;
                let ps = data.chunks_exact(chunk.max(1)).map(|c| Patch::new(shape[1], c.to_vec())).collect::<Result<_>>()?;
                (Pieces::Patches(ps), 2)
            }
            TaskKind::Frag3d => {
                let (shape, data) = a.f32s(&format!("{i}.clouds"))?;
                let clouds = data
                    .chunks_exact((shape[1] * 3).max(1))
                    .map(|c| c.chunks_exact(3).map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect())
                    .collect();
                (Pieces::Clouds(clouds), 3)
            }
        };
        let gt = poses_from_rows(&a.f64s(&format!("{i}.gt"))?.1, dim);
        let init = poses_from_rows(&a.f64s(&format!("{i}.init"))?.1, dim);
        let permutation = a.u32s(&format!("{i}.permutation"))?.1.into_iter().map(|p| p as usize).collect();
        tasks.push(Task { pieces, gt, init, permutation, lattice, seed });
    }
    Ok(tasks)
}
