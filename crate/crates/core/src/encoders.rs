//! Piece encoders.
//!
//! The planar encoder runs one shared convolution stack over the four
//! quarter-turn copies of a patch and stacks the pooled outputs in rotation
//! order, so turning the patch cyclically shifts the feature blocks. The
//! spatial encoder works on vector channels: linear maps mix channels but
//! never coordinates, and the only nonlinearity rescales each channel by a
//! function of its norm, so rotating the cloud rotates every channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{MapShape, Tape, Var};
use crate::geometry::RotationMatrix3;
use crate::params::ParamSet;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// A square RGB raster, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patch {
    size: usize,
    data: Vec<u8>,
}

impl Patch {
    pub fn new(size: usize, data: Vec<u8>) -> Result<Self> {
        Patch::from_raster(size, size, data)
    }

    pub fn from_raster(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height != width {
            return Err(Error::Dimension(format!("patch is {height}x{width}, expected square")));
        }
        if height == 0 || height % 2 != 0 {
            return Err(Error::Dimension(format!("patch side {height} must be positive and even")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Dimension(format!(
                "patch buffer has {} bytes, expected {}",
                data.len(),
                height * width * 3
            )));
        }
        Ok(Patch { size: height, data })
    }

    pub fn filled(size: usize, rgb: [u8; 3]) -> Result<Self> {
        Patch::new(size, rgb.iter().copied().cycle().take(size * size * 3).collect())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.size + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Content turned counter-clockwise by `k` quarter turns.
    pub fn rot90(&self, k: i64) -> Patch {
        let p = self.size;
        let mut out = self.clone();
        for _ in 0..k.rem_euclid(4) {
            let src = out.clone();
            for r in 0..p {
                for c in 0..p {
                    let s = (c * p + (p - 1 - r)) * 3;
                    let d = (r * p + c) * 3;
                    out.data[d..d + 3].copy_from_slice(&src.data[s..s + 3]);
                }
            }
        }
        out
    }

    /// `size² × 3` matrix with values in `[0, 1]`.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.size * self.size, 3, self.data.iter().map(|&v| v as f64 / 255.0).collect())
    }
}

/// Translates a cloud so its centroid is the origin.
pub fn center_piece(points: &[[f64; 3]]) -> Result<(Vec<[f64; 3]>, [f64; 3])> {
    if points.is_empty() {
        return Err(Error::EmptyInput("cannot center an empty cloud".into()));
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    for v in &mut c {
        *v /= n;
    }
    let centered = points.iter().map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]]).collect();
    Ok((centered, c))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderVariant {
    #[default]
    Equivariant,
    NonEquivariant,
    Invariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchEncoderConfig {
    pub channels: Vec<usize>,
    /// Width of the equivariant feature; four blocks of `feature_dim / 4`.
    pub feature_dim: usize,
    /// The last feature map is averaged over a `grid × grid` layout of cells
    /// before the head; 1 is global pooling.
    pub grid: usize,
    pub variant: EncoderVariant,
}

impl Default for PatchEncoderConfig {
    fn default() -> Self {
        PatchEncoderConfig { channels: vec![8, 16, 32], feature_dim: 128, grid: 2, variant: EncoderVariant::Equivariant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudEncoderConfig {
    /// Vector channels per layer; the feature width is `3 × last`.
    pub channels: Vec<usize>,
    pub points: usize,
    pub variant: EncoderVariant,
}

impl Default for CloudEncoderConfig {
    fn default() -> Self {
        CloudEncoderConfig { channels: vec![16, 32, 42], points: 1000, variant: EncoderVariant::Equivariant }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchEncoder {
    cfg: PatchEncoderConfig,
    convs: Vec<(usize, usize)>,
    head: (usize, usize),
}

impl PatchEncoder {
    pub fn new<R: Rng + ?Sized>(cfg: PatchEncoderConfig, params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.channels.contains(&0) {
            return Err(Error::Config("patch encoder needs nonzero channel counts".into()));
        }
        if cfg.feature_dim == 0 || cfg.feature_dim % 4 != 0 {
            return Err(Error::Config(format!("feature_dim {} must be a positive multiple of 4", cfg.feature_dim)));
        }
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, &c) in cfg.channels.iter().enumerate() {
            let w = params.add_uniform(&format!("enc2d.conv{i}.w"), 9 * cin, c, 9 * cin, 9 * c, rng);
            let b = params.add_zeros(&format!("enc2d.conv{i}.b"), 1, c);
            convs.push((w, b));
            cin = c;
        }
        let out = match cfg.variant {
            EncoderVariant::NonEquivariant => cfg.feature_dim,
            _ => cfg.feature_dim / 4,
        };
        if cfg.grid == 0 {
            return Err(Error::Config("patch encoder grid must be positive".into()));
        }
        let head = (params.add_weight("enc2d.head.w", cin * cfg.grid * cfg.grid, out, rng), params.add_zeros("enc2d.head.b", 1, out));
        Ok(PatchEncoder { cfg, convs, head })
    }

    pub fn config(&self) -> &PatchEncoderConfig {
        &self.cfg
    }

    pub fn output_dim(&self) -> usize {
        match self.cfg.variant {
            EncoderVariant::Invariant => self.cfg.feature_dim / 4,
            _ => self.cfg.feature_dim,
        }
    }

    /// Encodes equally sized patches into an `M × output_dim` value.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], patches: &[Patch]) -> Result<Var> {
        let first = patches.first().ok_or_else(|| Error::EmptyInput("no patches to encode".into()))?;
        let p = first.size();
        if patches.iter().any(|q| q.size() != p) {
            return Err(Error::Dimension("patches in one call must share a size".into()));
        }
        let copies = if self.cfg.variant == EncoderVariant::NonEquivariant { 1 } else { 4 };
        let mut data = Vec::with_capacity(patches.len() * copies * p * p * 3);
        for patch in patches {
            for k in 0..copies {
                data.extend(patch.rot90(k as i64).to_matrix().data);
            }
        }
        let mut shape = MapShape { batch: patches.len() * copies, h: p, w: p };
        let mut x = tape.input(Matrix::from_vec(shape.pixels(), 3, data));
        for (i, &(w, b)) in self.convs.iter().enumerate() {
            let y = tape.conv3x3(x, vars[w], shape);
            let y = tape.add_bias(y, vars[b]);
            x = tape.silu(y);
            if i + 1 < self.convs.len() && shape.h % 2 == 0 && shape.h >= 2 {
                x = tape.avg_pool2(x, shape);
                shape = shape.pooled();
            }
        }
        let pooled = tape.grid_pool(x, shape, self.cfg.grid);
        let h = tape.linear(pooled, vars[self.head.0], vars[self.head.1]);
        let block = self.cfg.feature_dim / 4;
        Ok(match self.cfg.variant {
            EncoderVariant::NonEquivariant => h,
            EncoderVariant::Equivariant => tape.reshape(h, patches.len(), 4 * block),
            EncoderVariant::Invariant => tape.group_mean(h, 4),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudEncoder {
    cfg: CloudEncoderConfig,
    /// Equivariant: (mix, gate scale, gate shift). Scalar variant: (w, b, unused).
    layers: Vec<(usize, usize, usize)>,
    head: Option<(usize, usize)>,
}

impl CloudEncoder {
    pub fn new<R: Rng + ?Sized>(cfg: CloudEncoderConfig, params: &mut ParamSet, rng: &mut R) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.channels.contains(&0) {
            return Err(Error::Config("cloud encoder needs nonzero channel counts".into()));
        }
        if cfg.points == 0 {
            return Err(Error::Config("cloud encoder needs a positive point count".into()));
        }
        let mut layers = Vec::new();
        let mut head = None;
        if cfg.variant == EncoderVariant::NonEquivariant {
            let mut cin = 3;
            for (i, &c) in cfg.channels.iter().enumerate() {
                let w = params.add_weight(&format!("enc3d.mlp{i}.w"), cin, c, rng);
                let b = params.add_zeros(&format!("enc3d.mlp{i}.b"), 1, c);
                layers.push((w, b, usize::MAX));
                cin = c;
            }
            let out = 3 * cin;
            head = Some((params.add_weight("enc3d.head.w", cin, out, rng), params.add_zeros("enc3d.head.b", 1, out)));
        } else {
            let mut cin = 1;
            for (i, &c) in cfg.channels.iter().enumerate() {
                let w = params.add_weight(&format!("enc3d.vn{i}.w"), 2 * cin, c, rng);
                let a = params.push(&format!("enc3d.vn{i}.gate_scale"), Matrix::from_vec(1, c, vec![1.0; c]));
                let b = params.add_zeros(&format!("enc3d.vn{i}.gate_shift"), 1, c);
                layers.push((w, a, b));
                cin = c;
            }
        }
        Ok(CloudEncoder { cfg, layers, head })
    }

    pub fn config(&self) -> &CloudEncoderConfig {
        &self.cfg
    }

    pub fn output_dim(&self) -> usize {
        let c = *self.cfg.channels.last().unwrap_or(&0);
        match self.cfg.variant {
            EncoderVariant::Invariant => c,
            _ => 3 * c,
        }
    }

    /// Encodes centered clouds into an `F × output_dim` value.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], clouds: &[Vec<[f64; 3]>]) -> Result<Var> {
        if clouds.is_empty() {
            return Err(Error::EmptyInput("no clouds to encode".into()));
        }
        let n = self.cfg.points;
        if let Some(bad) = clouds.iter().find(|c| c.len() != n) {
            return Err(Error::Dimension(format!("cloud has {} points, expected {n}", bad.len())));
        }
        if self.cfg.variant == EncoderVariant::NonEquivariant {
            let data = clouds.iter().flat_map(|c| c.iter().flatten().copied()).collect();
            let mut x = tape.input(Matrix::from_vec(clouds.len() * n, 3, data));
            for &(w, b, _) in &self.layers {
                let y = tape.linear(x, vars[w], vars[b]);
                x = tape.silu(y);
            }
            let pooled = tape.group_mean(x, n);
            let (w, b) = self.head.expect("scalar head");
            return Ok(tape.linear(pooled, vars[w], vars[b]));
        }
        let mut data = Vec::with_capacity(clouds.len() * 3 * n);
        for c in clouds {
            for a in 0..3 {
                data.extend(c.iter().map(|p| p[a]));
            }
        }
        let mut v = tape.input(Matrix::from_vec(clouds.len() * 3 * n, 1, data));
        for &(w, a, b) in &self.layers {
            let mean = tape.group_mean(v, n);
            let spread = tape.repeat_rows(mean, n);
            let u = tape.concat_cols(&[v, spread]);
            let mixed = tape.matmul(u, vars[w]);
            v = tape.vn_gate(mixed, vars[a], vars[b], n);
        }
        let pooled = tape.group_mean(v, n);
        let h = tape.block_transpose(pooled, 3);
        if self.cfg.variant == EncoderVariant::Invariant {
            let c = *self.cfg.channels.last().unwrap();
            let mut sum = Matrix::zeros(3 * c, c);
            for ch in 0..c {
                for a in 0..3 {
                    sum.set(3 * ch + a, ch, 1.0);
                }
            }
            let sum = tape.input(sum);
            let sq = tape.mul(h, h);
            let sq = tape.matmul(sq, sum);
            return Ok(tape.sqrt(sq));
        }
        Ok(h)
    }
}

/// Runs a patch encoder outside of training.
pub fn encode_patch_c4(enc: &PatchEncoder, params: &ParamSet, patch: &Patch) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let h = enc.forward(&mut tape, &vars, std::slice::from_ref(patch))?;
    Ok(tape.value(h).data.clone())
}

/// Runs a cloud encoder outside of training.
pub fn encode_cloud_vn(enc: &CloudEncoder, params: &ParamSet, cloud: &[[f64; 3]]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let h = enc.forward(&mut tape, &vars, &[cloud.to_vec()])?;
    Ok(tape.value(h).data.clone())
}

/// Quarter-turn action on a four-block feature: block `j` takes block `j + k`.
pub fn group_act_c4(k: i64, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() % 4 != 0 {
        return Err(Error::Dimension(format!("feature length {} is not four blocks", h.len())));
    }
    let block = h.len() / 4;
    let k = k.rem_euclid(4) as usize;
    Ok((0..4).flat_map(|j| h[((j + k) % 4) * block..((j + k) % 4 + 1) * block].iter().copied()).collect())
}

/// Rotates every 3-vector channel of a spatial feature by `r`.
pub fn group_act_so3(r: &RotationMatrix3, h: &[f64]) -> Result<Vec<f64>> {
    if h.len() % 3 != 0 {
        return Err(Error::Dimension(format!("feature length {} is not a set of 3-vectors", h.len())));
    }
    let m = r.as_matrix();
    let mut out = vec![0.0; h.len()];
    for (o, v) in out.chunks_exact_mut(3).zip(h.chunks_exact(3)) {
        for a in 0..3 {
            o[a] = m[(a, 0)] * v[0] + m[(a, 1)] * v[1] + m[(a, 2)] * v[2];
        }
    }
    Ok(out)
}

/// Re-initializes an encoder of the given variant with otherwise identical
/// configuration.
pub fn degrade_patch_encoder<R: Rng + ?Sized>(
    enc: &PatchEncoder,
    variant: EncoderVariant,
    params: &mut ParamSet,
    rng: &mut R,
) -> Result<PatchEncoder> {
    PatchEncoder::new(PatchEncoderConfig { variant, ..enc.cfg.clone() }, params, rng)
}

pub fn degrade_cloud_encoder<R: Rng + ?Sized>(
    enc: &CloudEncoder,
    variant: EncoderVariant,
    params: &mut ParamSet,
    rng: &mut R,
) -> Result<CloudEncoder> {
    CloudEncoder::new(CloudEncoderConfig { variant, ..enc.cfg.clone() }, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::uniform_rotation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_patch(size: usize, rng: &mut ChaCha8Rng) -> Patch {
        Patch::new(size, (0..size * size * 3).map(|_| rng.random()).collect()).unwrap()
    }

    fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
        let raw: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.4)])
            .collect();
        center_piece(&raw).unwrap().0
    }

    fn planar(variant: EncoderVariant, seed: u64) -> (PatchEncoder, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let cfg = PatchEncoderConfig { channels: vec![4, 6, 8], feature_dim: 16, grid: 2, variant };
        (PatchEncoder::new(cfg, &mut params, &mut rng).unwrap(), params)
    }

    fn spatial(variant: EncoderVariant, seed: u64) -> (CloudEncoder, ParamSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let cfg = CloudEncoderConfig { channels: vec![4, 6, 5], points: 64, variant };
        (CloudEncoder::new(cfg, &mut params, &mut rng).unwrap(), params)
    }

    #[test]
    fn rot90_has_order_four_and_turns_counter_clockwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_patch(6, &mut rng);
        assert_eq!(p.rot90(4), p);
        assert_eq!(p.rot90(1).rot90(3), p);
        let q = p.rot90(1);
        // top-right corner moves to top-left
        assert_eq!(q.pixel(0, 0), p.pixel(0, 5));
    }

    #[test]
    fn patch_shape_errors() {
        assert!(matches!(Patch::from_raster(4, 6, vec![0; 72]), Err(Error::Dimension(_))));
        assert!(matches!(Patch::new(4, vec![0; 10]), Err(Error::Dimension(_))));
    }

    #[test]
    fn centering() {
        let (c, m) = center_piece(&[[1.0, 2.0, 3.0]; 5]).unwrap();
        assert_eq!(m, [1.0, 2.0, 3.0]);
        assert!(c.iter().all(|p| p.iter().all(|v| *v == 0.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let raw: Vec<[f64; 3]> = (0..50).map(|_| [rng.random(), rng.random(), rng.random::<f64>() * 7.0]).collect();
            let (once, m) = center_piece(&raw).unwrap();
            for (a, b) in once.iter().zip(&raw) {
                for k in 0..3 {
                    assert!((a[k] + m[k] - b[k]).abs() < 1e-12);
                }
            }
            let (twice, m2) = center_piece(&once).unwrap();
            assert!(m2.iter().all(|v| v.abs() < 1e-9));
            for (a, b) in once.iter().zip(&twice) {
                for k in 0..3 {
                    assert!((a[k] - b[k]).abs() < 1e-12);
                }
            }
        }
        assert!(matches!(center_piece(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn planar_encoder_is_exactly_equivariant() {
        let (enc, params) = planar(EncoderVariant::Equivariant, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..100 {
            let p = random_patch(if i % 2 == 0 { 8 } else { 12 }, &mut rng);
            let h = encode_patch_c4(&enc, &params, &p).unwrap();
            let turned = encode_patch_c4(&enc, &params, &p.rot90(1)).unwrap();
            assert_eq!(turned, group_act_c4(1, &h).unwrap());
            assert_eq!(encode_patch_c4(&enc, &params, &p.rot90(4)).unwrap(), h);
        }
        let flat = encode_patch_c4(&enc, &params, &Patch::filled(8, [10, 200, 90]).unwrap()).unwrap();
        let b = flat.len() / 4;
        for k in 1..4 {
            assert_eq!(flat[..b], flat[k * b..(k + 1) * b]);
        }
    }

    #[test]
    fn planar_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (inv, ip) = planar(EncoderVariant::Invariant, 6);
        let (neq, np) = planar(EncoderVariant::NonEquivariant, 6);
        assert_eq!(inv.output_dim(), 4);
        let mut violations = 0;
        for _ in 0..100 {
            let p = random_patch(8, &mut rng);
            let a = encode_patch_c4(&inv, &ip, &p).unwrap();
            let b = encode_patch_c4(&inv, &ip, &p.rot90(1)).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-6));
            let h = encode_patch_c4(&neq, &np, &p).unwrap();
            let t = encode_patch_c4(&neq, &np, &p.rot90(1)).unwrap();
            let want = group_act_c4(1, &h).unwrap();
            let residual = t.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if residual > 1e-3 {
                violations += 1;
            }
        }
        assert!(violations >= 90, "{violations}");
    }

    #[test]
    fn c4_action_laws() {
        let h: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(group_act_c4(0, &h).unwrap(), h);
        let mut g = h.clone();
        for _ in 0..4 {
            g = group_act_c4(1, &g).unwrap();
        }
        assert_eq!(g, h);
        assert_eq!(group_act_c4(1, &group_act_c4(2, &h).unwrap()).unwrap(), group_act_c4(3, &h).unwrap());
        assert!(group_act_c4(1, &h[..5]).is_err());
    }

    fn rotate_cloud(r: &RotationMatrix3, c: &[[f64; 3]]) -> Vec<[f64; 3]> {
        c.iter()
            .map(|p| {
                let v = r.apply(&nalgebra::Vector3::new(p[0], p[1], p[2]));
                [v.x, v.y, v.z]
            })
            .collect()
    }

    fn rel_residual(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / n.max(1e-12)
    }

    #[test]
    fn spatial_encoder_is_equivariant() {
        let (enc, params) = spatial(EncoderVariant::Equivariant, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let cloud = random_cloud(64, &mut rng);
            let r = uniform_rotation(&mut rng);
            let h = encode_cloud_vn(&enc, &params, &cloud).unwrap();
            let turned = encode_cloud_vn(&enc, &params, &rotate_cloud(&r, &cloud)).unwrap();
            assert!(rel_residual(&turned, &group_act_so3(&r, &h).unwrap()) < 1e-5);
            for (a, b) in turned.chunks(3).zip(h.chunks(3)) {
                let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
                assert!((na - nb).abs() < 1e-6);
            }
        }
        let cloud = random_cloud(64, &mut rng);
        let h = encode_cloud_vn(&enc, &params, &cloud).unwrap();
        assert_eq!(encode_cloud_vn(&enc, &params, &rotate_cloud(&RotationMatrix3::identity(), &cloud)).unwrap(), h);
        assert!(matches!(encode_cloud_vn(&enc, &params, &cloud[..10]), Err(Error::Dimension(_))));
    }

    #[test]
    fn spatial_variants() {
        let (inv, ip) = spatial(EncoderVariant::Invariant, 9);
        let (neq, np) = spatial(EncoderVariant::NonEquivariant, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut violations = 0;
        for _ in 0..20 {
            let cloud = random_cloud(64, &mut rng);
            let r = uniform_rotation(&mut rng);
            let a = encode_cloud_vn(&inv, &ip, &cloud).unwrap();
            let b = encode_cloud_vn(&inv, &ip, &rotate_cloud(&r, &cloud)).unwrap();
            assert!(rel_residual(&b, &a) < 1e-5);
            let h = encode_cloud_vn(&neq, &np, &cloud).unwrap();
            let t = encode_cloud_vn(&neq, &np, &rotate_cloud(&r, &cloud)).unwrap();
            if rel_residual(&t, &group_act_so3(&r, &h).unwrap()) > 1e-3 {
                violations += 1;
            }
        }
        assert!(violations >= 18);
    }

    #[test]
    fn so3_action_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (r1, r2) = (uniform_rotation(&mut rng), uniform_rotation(&mut rng));
            let h: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = group_act_so3(&r1, &group_act_so3(&r2, &h).unwrap()).unwrap();
            let b = group_act_so3(&r1.mul(&r2), &h).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        }
        let h = [1.0, 2.0, 3.0];
        assert_eq!(group_act_so3(&RotationMatrix3::identity(), &h).unwrap(), h.to_vec());
    }
}
