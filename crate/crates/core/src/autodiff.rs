//! A small reverse-mode tape over dense matrices.
//!
//! Every operation the encoders, the denoiser and the losses need is a node
//! on the [`Tape`]; [`Tape::backward`] walks the nodes in reverse and returns
//! gradients for every parameter and every intermediate value. Fused ops
//! (attention, convolution, vector-channel gating, pose losses) carry their
//! own caches so the backward pass never recomputes the forward.

use std::sync::Arc;

use crate::tensor::{gemm, Matrix};

/// Handle to a value on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Neighbor lists in compressed-row form. Row `i` lists the nodes whose
/// messages node `i` aggregates; self-loops are stored explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Neighborhoods {
    pub fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Spatial layout of a batch of square-ish feature maps stored as
/// `(batch·h·w) × channels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapShape {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
}

impl MapShape {
    pub fn pixels(&self) -> usize {
        self.batch * self.h * self.w
    }

    pub fn pooled(&self) -> MapShape {
        MapShape { batch: self.batch, h: self.h / 2, w: self.w / 2 }
    }
}

/// Pixel indices of each cell when an `h × w` map is split into a `g × g`
/// grid; cells overlap by one pixel when a side is not divisible by `g`.
fn grid_cells(shape: MapShape, g: usize) -> Vec<Vec<usize>> {
    let span = |i: usize, n: usize| (i * n / g)..((i + 1) * n).div_ceil(g);
    let mut cells = Vec::with_capacity(g * g);
    for i in 0..g {
        for j in 0..g {
            cells.push(span(i, shape.h).flat_map(|y| span(j, shape.w).map(move |x| y * shape.w + x)).collect());
        }
    }
    cells
}

/// Per-piece data for the posed Chamfer loss.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    /// Piece points in its stored (centered, shuffled) frame.
    pub local: Matrix,
    /// Ground-truth posed points.
    pub posed_gt: Matrix,
    pub weight: f64,
}

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Silu(Var),
    Sigmoid(Var),
    Sqrt(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Reshape(Var),
    Gate { gate: Var, a: Var, b: Var },
    GroupMean(Var, usize),
    RepeatRows(Var, usize),
    BlockTranspose(Var, usize),
    Attention { q: Var, k: Var, v: Var, heads: usize, nbrs: Arc<Neighborhoods>, weights: Vec<f64> },
    NeighborMean(Var, Arc<Neighborhoods>),
    Conv3x3 { x: Var, w: Var, shape: MapShape, cols: Matrix },
    AvgPool2(Var, MapShape),
    GridPool(Var, MapShape, usize),
    VnGate { x: Var, a: Var, b: Var, points: usize, norms: Vec<f64>, gates: Vec<f64> },
    SqErr { pred: Var, target: Matrix, weights: Vec<f64> },
    RotLoss { raw: Var, target: Matrix, weights: Vec<f64> },
    Chamfer { trans: Var, raw: Var, dtrans: Matrix, draw: Matrix },
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    vars: Vec<Option<Matrix>>,
    params: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to a tape value, if any flowed there.
    pub fn of(&self, v: Var) -> Option<&Matrix> {
        self.vars[v.0].as_ref()
    }

    /// Gradient with respect to parameter `id`.
    pub fn param(&self, id: usize) -> Option<&Matrix> {
        self.params.get(id).and_then(|g| g.as_ref())
    }

    pub fn into_params(self) -> Vec<Option<Matrix>> {
        self.params
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_count: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Normalizes a rotation-head row; `None` when the row is degenerate.
pub fn unit_row(u: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 1e-12) || !n.is_finite() {
        return None;
    }
    Some((u.iter().map(|v| v / n).collect(), n))
}

/// Rotation matrix (row-major) of a unit quaternion `[w, x, y, z]`.
fn quat_rows(q: &[f64]) -> [f64; 9] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ]
}

/// `∂L/∂q` given `∂L/∂R` for the map in [`quat_rows`].
fn quat_rows_backward(q: &[f64], d: &[f64; 9]) -> [f64; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = 2.0 * (-z * d[1] + y * d[2] + z * d[3] - x * d[5] - y * d[6] + x * d[7]);
    let dx = 2.0 * (y * d[1] + z * d[2] + y * d[3] - 2.0 * x * d[4] - w * d[5] + z * d[6] + w * d[7]
        - 2.0 * x * d[8]);
    let dy = 2.0 * (-2.0 * y * d[0] + x * d[1] + w * d[2] + x * d[3] + z * d[5] - w * d[6] + z * d[7]
        - 2.0 * y * d[8]);
    let dz = 2.0 * (-2.0 * z * d[0] - w * d[1] + x * d[2] + w * d[3] - 2.0 * z * d[4] + y * d[5]
        + x * d[6]
        + y * d[7]);
    [dw, dx, dy, dz]
}

/// Chain rule through `q = u/|u|`.
fn unit_backward(q: &[f64], n: f64, dq: &[f64]) -> Vec<f64> {
    let dot: f64 = q.iter().zip(dq).map(|(a, b)| a * b).sum();
    q.iter().zip(dq).map(|(qi, di)| (di - qi * dot) / n).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    /// Registers parameter `id` with its current value.
    pub fn param(&mut self, id: usize, value: &Matrix) -> Var {
        self.param_count = self.param_count.max(id + 1);
        self.push(value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// Adds a `1 × c` row to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let mut v = self.value(x).clone();
        let b = self.value(bias);
        assert_eq!(b.rows, 1);
        assert_eq!(b.cols, v.cols);
        for r in 0..v.rows {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        self.push(v, Op::AddBias(x, bias))
    }

    /// `x · w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        let data = self.value(a).data.iter().zip(&bv.data).map(|(x, y)| x * y).collect();
        let v = Matrix::from_vec(bv.rows, bv.cols, data);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let mut v = self.value(a).clone();
        v.scale(k);
        self.push(v, Op::Scale(a, k))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data.iter().map(|&x| x * sigmoid(x)).collect();
        let v = Matrix::from_vec(src.rows, src.cols, data);
        self.push(v, Op::Silu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data.iter().map(|&x| sigmoid(x)).collect();
        let v = Matrix::from_vec(src.rows, src.cols, data);
        self.push(v, Op::Sigmoid(a))
    }

    /// `sqrt(x + 1e-12)`, smooth at zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let data = src.data.iter().map(|&x| (x + 1e-12).sqrt()).collect();
        let v = Matrix::from_vec(src.rows, src.cols, data);
        self.push(v, Op::Sqrt(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let m = self.value(*p);
                assert_eq!(m.rows, rows, "concat_cols row mismatch");
                out.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&m.data);
        }
        let v = Matrix::from_vec(data.len() / cols.max(1), cols, data);
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    /// First `n` rows.
    pub fn head_rows(&mut self, x: Var, n: usize) -> Var {
        let m = self.value(x);
        assert!(n <= m.rows);
        let v = Matrix::from_vec(n, m.cols, m.data[..n * m.cols].to_vec());
        self.push(v, Op::SliceRows(x, n))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(x);
        assert_eq!(m.len(), rows * cols, "reshape size");
        let v = Matrix::from_vec(rows, cols, m.data.clone());
        self.push(v, Op::Reshape(x))
    }

    /// `g ⊙ a + (1 − g) ⊙ b` with one gate value per row.
    pub fn gate(&mut self, gate: Var, a: Var, b: Var) -> Var {
        let (g, av, bv) = (self.value(gate), self.value(a), self.value(b));
        assert_eq!(g.cols, 1);
        let mut out = Matrix::zeros(av.rows, av.cols);
        for r in 0..av.rows {
            let gr = g.data[r];
            for c in 0..av.cols {
                out.data[r * av.cols + c] = gr * av.get(r, c) + (1.0 - gr) * bv.get(r, c);
            }
        }
        self.push(out, Op::Gate { gate, a, b })
    }

    /// Mean over consecutive groups of `group` rows.
    pub fn group_mean(&mut self, x: Var, group: usize) -> Var {
        let m = self.value(x);
        assert_eq!(m.rows % group, 0);
        let out_rows = m.rows / group;
        let mut out = Matrix::zeros(out_rows, m.cols);
        let inv = 1.0 / group as f64;
        for g in 0..out_rows {
            for r in g * group..(g + 1) * group {
                for (o, v) in out.row_mut(g).iter_mut().zip(m.row(r)) {
                    *o += v;
                }
            }
            for o in out.row_mut(g) {
                *o *= inv;
            }
        }
        self.push(out, Op::GroupMean(x, group))
    }

    /// Repeats every row `times` times consecutively.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let m = self.value(x);
        let mut out = Matrix::zeros(m.rows * times, m.cols);
        for r in 0..m.rows * times {
            out.row_mut(r).copy_from_slice(m.row(r / times));
        }
        self.push(out, Op::RepeatRows(x, times))
    }

    /// `(f·block + a, c) ↦ (f, c·block + a)`.
    pub fn block_transpose(&mut self, x: Var, block: usize) -> Var {
        let m = self.value(x);
        assert_eq!(m.rows % block, 0);
        let f = m.rows / block;
        let mut out = Matrix::zeros(f, m.cols * block);
        for fi in 0..f {
            for a in 0..block {
                for c in 0..m.cols {
                    out.data[fi * m.cols * block + c * block + a] = m.get(fi * block + a, c);
                }
            }
        }
        self.push(out, Op::BlockTranspose(x, block))
    }

    /// Multi-head scaled dot-product attention restricted to neighborhoods.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, nbrs: Arc<Neighborhoods>) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let n = qm.rows;
        let width = qm.cols;
        assert_eq!(width % heads, 0);
        assert_eq!(nbrs.nodes(), n);
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = vec![0.0; nbrs.targets.len() * heads];
        let mut out = Matrix::zeros(n, width);
        let mut scores = Vec::new();
        for i in 0..n {
            let base = nbrs.offsets[i];
            let js = nbrs.of(i);
            let qi = qm.row(i);
            for h in 0..heads {
                let qh = &qi[h * dh..(h + 1) * dh];
                scores.clear();
                let mut max = f64::NEG_INFINITY;
                for &j in js {
                    let kh = &km.row(j)[h * dh..(h + 1) * dh];
                    let s = qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f64>() * scale;
                    max = max.max(s);
                    scores.push(s);
                }
                let mut z = 0.0;
                for s in scores.iter_mut() {
                    *s = (*s - max).exp();
                    z += *s;
                }
                let orow = &mut out.data[i * width + h * dh..i * width + (h + 1) * dh];
                for (e, (&j, s)) in js.iter().zip(&scores).enumerate() {
                    let a = s / z;
                    weights[(base + e) * heads + h] = a;
                    let vh = &vm.row(j)[h * dh..(h + 1) * dh];
                    for (o, vv) in orow.iter_mut().zip(vh) {
                        *o += a * vv;
                    }
                }
            }
        }
        self.push(out, Op::Attention { q, k, v, heads, nbrs, weights })
    }

    /// Attention weights of an attention node, indexed `[edge · heads + h]`
    /// in neighborhood order.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Weights of the most recent attention node.
    pub fn last_attention_weights(&self) -> Option<&[f64]> {
        self.nodes.iter().rev().find_map(|n| match &n.op {
            Op::Attention { weights, .. } => Some(weights.as_slice()),
            _ => None,
        })
    }

    /// Uniform average over each neighborhood.
    pub fn neighbor_mean(&mut self, x: Var, nbrs: Arc<Neighborhoods>) -> Var {
        let m = self.value(x);
        let mut out = Matrix::zeros(m.rows, m.cols);
        for i in 0..m.rows {
            let js = nbrs.of(i);
            let inv = 1.0 / js.len() as f64;
            for &j in js {
                for (o, v) in out.row_mut(i).iter_mut().zip(m.row(j)) {
                    *o += v * inv;
                }
            }
        }
        self.push(out, Op::NeighborMean(x, nbrs))
    }

    /// 3×3 convolution with zero padding; `w` is `(9·c_in) × c_out` with
    /// rows ordered `(ky, kx, c_in)`.
    pub fn conv3x3(&mut self, x: Var, w: Var, shape: MapShape) -> Var {
        let xm = self.value(x);
        let cin = xm.cols;
        assert_eq!(xm.rows, shape.pixels());
        let mut cols = Matrix::zeros(shape.pixels(), 9 * cin);
        let (h, wd) = (shape.h as isize, shape.w as isize);
        for b in 0..shape.batch {
            for y in 0..h {
                for xx in 0..wd {
                    let row = (b * shape.h * shape.w) + (y as usize) * shape.w + xx as usize;
                    let dst = cols.row_mut(row);
                    for ky in 0..3isize {
                        let sy = y + ky - 1;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for kx in 0..3isize {
                            let sx = xx + kx - 1;
                            if sx < 0 || sx >= wd {
                                continue;
                            }
                            let src = (b * shape.h * shape.w) + sy as usize * shape.w + sx as usize;
                            let off = ((ky * 3 + kx) as usize) * cin;
                            dst[off..off + cin].copy_from_slice(xm.row(src));
                        }
                    }
                }
            }
        }
        let out = cols.matmul(self.value(w));
        self.push(out, Op::Conv3x3 { x, w, shape, cols })
    }

    /// 2×2 average pooling; odd trailing rows/columns are dropped.
    pub fn avg_pool2(&mut self, x: Var, shape: MapShape) -> Var {
        let m = self.value(x);
        let ps = shape.pooled();
        let mut out = Matrix::zeros(ps.pixels(), m.cols);
        for b in 0..shape.batch {
            for y in 0..ps.h {
                for xx in 0..ps.w {
                    let orow = b * ps.h * ps.w + y * ps.w + xx;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let src = b * shape.h * shape.w + (2 * y + dy) * shape.w + 2 * xx + dx;
                        for (o, v) in out.row_mut(orow).iter_mut().zip(m.row(src)) {
                            *o += 0.25 * v;
                        }
                    }
                }
            }
        }
        self.push(out, Op::AvgPool2(x, shape))
    }

    /// Averages each map over a `g × g` grid of (possibly overlapping) cells
    /// and flattens them: `(batch·h·w) × c ↦ batch × (g·g·c)`, cell-major.
    pub fn grid_pool(&mut self, x: Var, shape: MapShape, g: usize) -> Var {
        let m = self.value(x);
        let c = m.cols;
        let mut out = Matrix::zeros(shape.batch, g * g * c);
        for b in 0..shape.batch {
            for (cell, pixels) in grid_cells(shape, g).iter().enumerate() {
                let inv = 1.0 / pixels.len() as f64;
                let dst = &mut out.row_mut(b)[cell * c..(cell + 1) * c];
                for &p in pixels {
                    for (o, v) in dst.iter_mut().zip(m.row(b * shape.h * shape.w + p)) {
                        *o += inv * v;
                    }
                }
            }
        }
        self.push(out, Op::GridPool(x, shape, g))
    }

    /// Direction-preserving gate on vector channels: `v ↦ v · σ(a|v| + b)`.
    /// Rows are laid out `(piece, axis, point)` with `points` points per
    /// piece; `a` and `b` are `1 × channels`.
    pub fn vn_gate(&mut self, x: Var, a: Var, b: Var, points: usize) -> Var {
        let (xm, am, bm) = (self.value(x), self.value(a), self.value(b));
        let c = xm.cols;
        let pieces = xm.rows / (3 * points);
        assert_eq!(pieces * 3 * points, xm.rows);
        let mut out = Matrix::zeros(xm.rows, c);
        let mut norms = vec![0.0; pieces * points * c];
        let mut gates = vec![0.0; pieces * points * c];
        for f in 0..pieces {
            for p in 0..points {
                let rows = [f * 3 * points + p, f * 3 * points + points + p, f * 3 * points + 2 * points + p];
                for ch in 0..c {
                    let v = [xm.get(rows[0], ch), xm.get(rows[1], ch), xm.get(rows[2], ch)];
                    let nrm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + 1e-12).sqrt();
                    let g = sigmoid(am.data[ch] * nrm + bm.data[ch]);
                    let idx = (f * points + p) * c + ch;
                    norms[idx] = nrm;
                    gates[idx] = g;
                    for (k, r) in rows.iter().enumerate() {
                        out.set(*r, ch, v[k] * g);
                    }
                }
            }
        }
        self.push(out, Op::VnGate { x, a, b, points, norms, gates })
    }

    /// `Σ_i w_i ‖pred_i − target_i‖²` as a `1 × 1` value.
    pub fn sq_err(&mut self, pred: Var, target: Matrix, weights: Vec<f64>) -> Var {
        let p = self.value(pred);
        assert_eq!(p.shape(), target.shape());
        assert_eq!(weights.len(), p.rows);
        let mut total = 0.0;
        for r in 0..p.rows {
            if weights[r] == 0.0 {
                continue;
            }
            let e: f64 = p.row(r).iter().zip(target.row(r)).map(|(a, b)| (a - b) * (a - b)).sum();
            total += weights[r] * e;
        }
        self.push(Matrix::from_vec(1, 1, vec![total]), Op::SqErr { pred, target, weights })
    }

    /// `Σ_i w_i ‖R(gt_i)ᵀ R(r̂_i) − I‖²_F` where `r̂_i` is the normalized raw
    /// head row. Two columns mean planar `[c, s]` rotations, four mean
    /// quaternions; the closed forms are `4(1 − gt·r̂)` and `8(1 − (gt·r̂)²)`.
    /// Degenerate rows fall back to the identity with zero gradient.
    pub fn rotation_loss(&mut self, raw: Var, target: Matrix, weights: Vec<f64>) -> Var {
        let u = self.value(raw);
        assert_eq!(u.shape(), target.shape());
        assert!(u.cols == 2 || u.cols == 4);
        let mut total = 0.0;
        for r in 0..u.rows {
            if weights[r] == 0.0 {
                continue;
            }
            let q = match unit_row(u.row(r)) {
                Some((q, _)) => q,
                None => {
                    let mut id = vec![0.0; u.cols];
                    id[0] = 1.0;
                    id
                }
            };
            let d: f64 = q.iter().zip(target.row(r)).map(|(a, b)| a * b).sum();
            let l = if u.cols == 2 { 4.0 * (1.0 - d) } else { 8.0 * (1.0 - d * d) };
            total += weights[r] * l;
        }
        self.push(Matrix::from_vec(1, 1, vec![total]), Op::RotLoss { raw, target, weights })
    }

    /// Posed Chamfer loss: piece `i` is posed as `R(q̂_i) p + ŝ_i` and compared
    /// with its ground-truth posed cloud using the symmetric sum of mean
    /// squared nearest-neighbor distances.
    pub fn chamfer_loss(&mut self, trans: Var, raw: Var, targets: Vec<Option<ChamferTarget>>) -> Var {
        let (tm, um) = (self.value(trans), self.value(raw));
        assert_eq!(tm.cols, 3);
        assert_eq!(um.cols, 4);
        let mut dtrans = Matrix::zeros(tm.rows, 3);
        let mut draw = Matrix::zeros(um.rows, 4);
        let mut total = 0.0;
        for (i, target) in targets.iter().enumerate() {
            let Some(target) = target else { continue };
            let Some((q, n)) = unit_row(um.row(i)) else { continue };
            let r = quat_rows(&q);
            let s = tm.row(i);
            let k = target.local.rows;
            let mut posed = Matrix::zeros(k, 3);
            for p in 0..k {
                let l = target.local.row(p);
                let o = posed.row_mut(p);
                for a in 0..3 {
                    o[a] = r[3 * a] * l[0] + r[3 * a + 1] * l[1] + r[3 * a + 2] * l[2] + s[a];
                }
            }
            let g = &target.posed_gt;
            let mut dposed = Matrix::zeros(k, 3);
            let mut loss = 0.0;
            let inv_p = 1.0 / k as f64;
            for p in 0..k {
                let (mut best, mut arg) = (f64::INFINITY, 0);
                for j in 0..g.rows {
                    let d = sq_dist(posed.row(p), g.row(j));
                    if d < best {
                        best = d;
                        arg = j;
                    }
                }
                loss += best * inv_p;
                for a in 0..3 {
                    dposed.data[p * 3 + a] += 2.0 * inv_p * (posed.get(p, a) - g.get(arg, a));
                }
            }
            let inv_g = 1.0 / g.rows as f64;
            for j in 0..g.rows {
                let (mut best, mut arg) = (f64::INFINITY, 0);
                for p in 0..k {
                    let d = sq_dist(posed.row(p), g.row(j));
                    if d < best {
                        best = d;
                        arg = p;
                    }
                }
                loss += best * inv_g;
                for a in 0..3 {
                    dposed.data[arg * 3 + a] += 2.0 * inv_g * (posed.get(arg, a) - g.get(j, a));
                }
            }
            total += target.weight * loss;
            let mut dr = [0.0; 9];
            for p in 0..k {
                let l = target.local.row(p);
                for a in 0..3 {
                    let dp = dposed.get(p, a) * target.weight;
                    dtrans.data[i * 3 + a] += dp;
                    for b in 0..3 {
                        dr[3 * a + b] += dp * l[b];
                    }
                }
            }
            let dq = quat_rows_backward(&q, &dr);
            let du = unit_backward(&q, n, &dq);
            draw.row_mut(i).copy_from_slice(&du);
        }
        self.push(Matrix::from_vec(1, 1, vec![total]), Op::Chamfer { trans, raw, dtrans, draw })
    }

    /// `Σ_k w_k x_k` over `1 × 1` values.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let total = terms.iter().map(|(v, w)| w * self.value(*v).data[0]).sum();
        self.push(Matrix::from_vec(1, 1, vec![total]), Op::WeightedSum(terms.to_vec()))
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Matrix>> = (0..self.param_count).map(|_| None).collect();
        grads[output.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(dout) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => match &mut params[*id] {
                    Some(existing) => existing.add_assign(&dout),
                    slot @ None => *slot = Some(dout.clone()),
                },
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, dout.matmul_nt(bv));
                    acc(&mut grads, *b, av.matmul_tn(&dout));
                }
                Op::AddBias(x, b) => {
                    let mut db = Matrix::zeros(1, dout.cols);
                    for r in 0..dout.rows {
                        for (o, v) in db.data.iter_mut().zip(dout.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *x, dout.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, dout.clone());
                    acc(&mut grads, *b, dout.clone());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = dout.data.iter().zip(&bv.data).map(|(d, y)| d * y).collect();
                    let db = dout.data.iter().zip(&av.data).map(|(d, x)| d * x).collect();
                    acc(&mut grads, *a, Matrix::from_vec(dout.rows, dout.cols, da));
                    acc(&mut grads, *b, Matrix::from_vec(dout.rows, dout.cols, db));
                }
                Op::Scale(a, k) => {
                    let mut d = dout.clone();
                    d.scale(*k);
                    acc(&mut grads, *a, d);
                }
                Op::Silu(a) => {
                    let x = self.value(*a);
                    let d = dout
                        .data
                        .iter()
                        .zip(&x.data)
                        .map(|(d, &x)| {
                            let s = sigmoid(x);
                            d * (s + x * s * (1.0 - s))
                        })
                        .collect();
                    acc(&mut grads, *a, Matrix::from_vec(dout.rows, dout.cols, d));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let d = dout.data.iter().zip(&y.data).map(|(d, y)| d * y * (1.0 - y)).collect();
                    acc(&mut grads, *a, Matrix::from_vec(dout.rows, dout.cols, d));
                }
                Op::Sqrt(a) => {
                    let y = &node.value;
                    let d = dout.data.iter().zip(&y.data).map(|(d, y)| 0.5 * d / y).collect();
                    acc(&mut grads, *a, Matrix::from_vec(dout.rows, dout.cols, d));
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = self.value(*p).cols;
                        let mut d = Matrix::zeros(dout.rows, c);
                        for r in 0..dout.rows {
                            d.row_mut(r).copy_from_slice(&dout.row(r)[off..off + c]);
                        }
                        acc(&mut grads, *p, d);
                        off += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        let m = self.value(*p);
                        acc(&mut grads, *p, Matrix::from_vec(m.rows, m.cols, dout.data[off..off + len].to_vec()));
                        off += len;
                    }
                }
                Op::SliceRows(x, n) => {
                    let src = self.value(*x);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    d.data[..n * src.cols].copy_from_slice(&dout.data);
                    acc(&mut grads, *x, d);
                }
                Op::Reshape(x) => {
                    let src = self.value(*x);
                    acc(&mut grads, *x, Matrix::from_vec(src.rows, src.cols, dout.data.clone()));
                }
                Op::Gate { gate, a, b } => {
                    let (g, av, bv) = (self.value(*gate), self.value(*a), self.value(*b));
                    let mut da = Matrix::zeros(av.rows, av.cols);
                    let mut db = Matrix::zeros(av.rows, av.cols);
                    let mut dg = Matrix::zeros(g.rows, 1);
                    for r in 0..av.rows {
                        let gr = g.data[r];
                        let mut s = 0.0;
                        for c in 0..av.cols {
                            let d = dout.get(r, c);
                            da.data[r * av.cols + c] = gr * d;
                            db.data[r * av.cols + c] = (1.0 - gr) * d;
                            s += d * (av.get(r, c) - bv.get(r, c));
                        }
                        dg.data[r] = s;
                    }
                    acc(&mut grads, *gate, dg);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::GroupMean(x, group) => {
                    let src = self.value(*x);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    let inv = 1.0 / *group as f64;
                    for r in 0..src.rows {
                        for (o, v) in d.row_mut(r).iter_mut().zip(dout.row(r / group)) {
                            *o = v * inv;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::RepeatRows(x, times) => {
                    let src = self.value(*x);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for r in 0..dout.rows {
                        for (o, v) in d.row_mut(r / times).iter_mut().zip(dout.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::BlockTranspose(x, block) => {
                    let src = self.value(*x);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    let f = src.rows / block;
                    for fi in 0..f {
                        for a in 0..*block {
                            for c in 0..src.cols {
                                d.set(fi * block + a, c, dout.data[fi * src.cols * block + c * block + a]);
                            }
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Attention { q, k, v, heads, nbrs, weights } => {
                    let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                    let width = qm.cols;
                    let dh = width / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Matrix::zeros(qm.rows, width);
                    let mut dk = Matrix::zeros(km.rows, width);
                    let mut dv = Matrix::zeros(vm.rows, width);
                    let mut dalpha = Vec::new();
                    for i in 0..qm.rows {
                        let base = nbrs.offsets[i];
                        let js = nbrs.of(i);
                        for h in 0..*heads {
                            let range = h * dh..(h + 1) * dh;
                            let go = &dout.row(i)[range.clone()];
                            dalpha.clear();
                            let mut dot = 0.0;
                            for (e, &j) in js.iter().enumerate() {
                                let a = weights[(base + e) * heads + h];
                                let vh = &vm.row(j)[range.clone()];
                                let da: f64 = go.iter().zip(vh).map(|(x, y)| x * y).sum();
                                dot += a * da;
                                dalpha.push(da);
                                for (o, g) in dv.row_mut(j)[range.clone()].iter_mut().zip(go) {
                                    *o += a * g;
                                }
                            }
                            for (e, &j) in js.iter().enumerate() {
                                let a = weights[(base + e) * heads + h];
                                let ds = a * (dalpha[e] - dot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                for c in range.clone() {
                                    dq.data[i * width + c] += ds * km.data[j * width + c];
                                    dk.data[j * width + c] += ds * qm.data[i * width + c];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::NeighborMean(x, nbrs) => {
                    let src = self.value(*x);
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for i in 0..src.rows {
                        let js = nbrs.of(i);
                        let inv = 1.0 / js.len() as f64;
                        for &j in js {
                            for (o, g) in d.row_mut(j).iter_mut().zip(dout.row(i)) {
                                *o += g * inv;
                            }
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Conv3x3 { x, w, shape, cols } => {
                    let wm = self.value(*w);
                    acc(&mut grads, *w, cols.matmul_tn(&dout));
                    let xm = self.value(*x);
                    if !matches!(self.nodes[x.0].op, Op::Input) {
                        let cin = xm.cols;
                        let mut dcols = Matrix::zeros(cols.rows, cols.cols);
                        gemm(&dout, false, wm, true, &mut dcols, 0.0);
                        let mut dx = Matrix::zeros(xm.rows, cin);
                        let (h, wd) = (shape.h as isize, shape.w as isize);
                        for b in 0..shape.batch {
                            for y in 0..h {
                                for xx in 0..wd {
                                    let row = b * shape.h * shape.w + y as usize * shape.w + xx as usize;
                                    for ky in 0..3isize {
                                        let sy = y + ky - 1;
                                        if sy < 0 || sy >= h {
                                            continue;
                                        }
                                        for kx in 0..3isize {
                                            let sx = xx + kx - 1;
                                            if sx < 0 || sx >= wd {
                                                continue;
                                            }
                                            let src = b * shape.h * shape.w + sy as usize * shape.w + sx as usize;
                                            let off = ((ky * 3 + kx) as usize) * cin;
                                            let g = &dcols.data[row * 9 * cin + off..row * 9 * cin + off + cin];
                                            for (o, v) in dx.row_mut(src).iter_mut().zip(g) {
                                                *o += v;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                        acc(&mut grads, *x, dx);
                    }
                }
                Op::AvgPool2(x, shape) => {
                    let src = self.value(*x);
                    let ps = shape.pooled();
                    let mut d = Matrix::zeros(src.rows, src.cols);
                    for b in 0..shape.batch {
                        for y in 0..ps.h {
                            for xx in 0..ps.w {
                                let orow = b * ps.h * ps.w + y * ps.w + xx;
                                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                                    let s = b * shape.h * shape.w + (2 * y + dy) * shape.w + 2 * xx + dx;
                                    for (o, g) in d.row_mut(s).iter_mut().zip(dout.row(orow)) {
                                        *o += 0.25 * g;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::GridPool(x, shape, g) => {
                    let src = self.value(*x);
                    let c = src.cols;
                    let mut d = Matrix::zeros(src.rows, c);
                    for b in 0..shape.batch {
                        for (cell, pixels) in grid_cells(*shape, *g).iter().enumerate() {
                            let inv = 1.0 / pixels.len() as f64;
                            let up = &dout.row(b)[cell * c..(cell + 1) * c];
                            for &p in pixels {
                                for (o, v) in d.row_mut(b * shape.h * shape.w + p).iter_mut().zip(up) {
                                    *o += inv * v;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, d);
                }
                Op::VnGate { x, a, b, points, norms, gates } => {
                    let (xm, am) = (self.value(*x), self.value(*a));
                    let c = xm.cols;
                    let pts = *points;
                    let pieces = xm.rows / (3 * pts);
                    let mut dx = Matrix::zeros(xm.rows, c);
                    let mut da = Matrix::zeros(1, c);
                    let mut db = Matrix::zeros(1, c);
                    for f in 0..pieces {
                        for p in 0..pts {
                            let rows = [f * 3 * pts + p, f * 3 * pts + pts + p, f * 3 * pts + 2 * pts + p];
                            for ch in 0..c {
                                let idx = (f * pts + p) * c + ch;
                                let (nrm, g) = (norms[idx], gates[idx]);
                                let v = [xm.get(rows[0], ch), xm.get(rows[1], ch), xm.get(rows[2], ch)];
                                let go = [dout.get(rows[0], ch), dout.get(rows[1], ch), dout.get(rows[2], ch)];
                                let dg = go[0] * v[0] + go[1] * v[1] + go[2] * v[2];
                                let dz = dg * g * (1.0 - g);
                                da.data[ch] += dz * nrm;
                                db.data[ch] += dz;
                                let dn = dz * am.data[ch] / nrm;
                                for k in 0..3 {
                                    dx.data[rows[k] * c + ch] += go[k] * g + dn * v[k];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::SqErr { pred, target, weights } => {
                    let p = self.value(*pred);
                    let g = dout.data[0];
                    let mut d = Matrix::zeros(p.rows, p.cols);
                    for r in 0..p.rows {
                        if weights[r] == 0.0 {
                            continue;
                        }
                        for c in 0..p.cols {
                            d.data[r * p.cols + c] = 2.0 * g * weights[r] * (p.get(r, c) - target.get(r, c));
                        }
                    }
                    acc(&mut grads, *pred, d);
                }
                Op::RotLoss { raw, target, weights } => {
                    let u = self.value(*raw);
                    let g = dout.data[0];
                    let mut d = Matrix::zeros(u.rows, u.cols);
                    for r in 0..u.rows {
                        if weights[r] == 0.0 {
                            continue;
                        }
                        let Some((q, n)) = unit_row(u.row(r)) else { continue };
                        let t = target.row(r);
                        let dot: f64 = q.iter().zip(t).map(|(a, b)| a * b).sum();
                        let k = if u.cols == 2 { -4.0 } else { -16.0 * dot };
                        let dq: Vec<f64> = t.iter().map(|ti| g * weights[r] * k * ti).collect();
                        d.row_mut(r).copy_from_slice(&unit_backward(&q, n, &dq));
                    }
                    acc(&mut grads, *raw, d);
                }
                Op::Chamfer { trans, raw, dtrans, draw } => {
                    let g = dout.data[0];
                    let mut dt = dtrans.clone();
                    dt.scale(g);
                    let mut du = draw.clone();
                    du.scale(g);
                    acc(&mut grads, *trans, dt);
                    acc(&mut grads, *raw, du);
                }
                Op::WeightedSum(terms) => {
                    for (v, w) in terms {
                        acc(&mut grads, *v, Matrix::from_vec(1, 1, vec![w * dout.data[0]]));
                    }
                }
            }
            grads[idx] = Some(dout);
        }
        Gradients { vars: grads, params }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Checks every parameter of `build` against central differences.
    fn check(params: &[Matrix], build: impl Fn(&mut Tape, &[Var]) -> Var) {
        let run = |ps: &[Matrix]| {
            let mut tape = Tape::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect();
            let out = build(&mut tape, &vars);
            (tape, out)
        };
        let (tape, out) = run(params);
        let grads = tape.backward(out);
        let h = 1e-5;
        for (id, p) in params.iter().enumerate() {
            let analytic = grads.param(id).cloned().unwrap_or_else(|| Matrix::zeros(p.rows, p.cols));
            let mut num = Matrix::zeros(p.rows, p.cols);
            for e in 0..p.len() {
                let mut plus = params.to_vec();
                plus[id].data[e] += h;
                let mut minus = params.to_vec();
                minus[id].data[e] -= h;
                let (tp, op) = run(&plus);
                let (tm, om) = run(&minus);
                num.data[e] = (tp.value(op).data[0] - tm.value(om).data[0]) / (2.0 * h);
            }
            let mut diff = analytic.clone();
            for (d, n) in diff.data.iter_mut().zip(&num.data) {
                *d -= n;
            }
            let rel = diff.norm() / analytic.norm().max(num.norm()).max(1e-12);
            assert!(rel < 1e-6, "param {id}: rel err {rel}\n{analytic:?}\n{num:?}");
        }
    }

    fn nbrs(lists: &[Vec<usize>]) -> Arc<Neighborhoods> {
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        for l in lists {
            targets.extend(l);
            offsets.push(targets.len());
        }
        Arc::new(Neighborhoods { offsets, targets })
    }

    #[test]
    fn dense_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = vec![random(4, 3, &mut rng), random(3, 5, &mut rng), random(1, 5, &mut rng), random(4, 1, &mut rng)];
        check(&params, |t, v| {
            let y = t.linear(v[0], v[1], v[2]);
            let y = t.silu(y);
            let g = t.sigmoid(v[3]);
            let z = t.scale(y, 0.7);
            let m = t.gate(g, y, z);
            let s = t.mul(m, y);
            let sq = t.mul(s, s);
            let s = t.sqrt(sq);
            let c = t.concat_cols(&[s, v[0]]);
            let c = t.concat_rows(&[c, c]);
            let c = t.head_rows(c, 4);
            let r = t.reshape(c, 8, 4);
            let gm = t.group_mean(r, 2);
            let rep = t.repeat_rows(gm, 2);
            let bt = t.block_transpose(rep, 2);
            let h = t.head_rows(bt, 3);
            let target = Matrix::zeros(3, 8);
            t.sq_err(h, target, vec![0.5, 0.0, 1.0])
        });
    }

    #[test]
    fn attention_gradients_and_row_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = vec![random(4, 6, &mut rng), random(4, 6, &mut rng), random(4, 6, &mut rng)];
        let nb = nbrs(&[vec![0, 1, 2], vec![1, 0], vec![2, 3, 0], vec![3]]);
        let nb2 = nb.clone();
        check(&params, move |t, v| {
            let a = t.attention(v[0], v[1], v[2], 2, nb2.clone());
            let m = t.neighbor_mean(a, nb2.clone());
            t.sq_err(m, Matrix::zeros(4, 6), vec![1.0; 4])
        });
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect();
        let a = tape.attention(vars[0], vars[1], vars[2], 2, nb.clone());
        let w = tape.attention_weights(a).unwrap();
        for i in 0..4 {
            for h in 0..2 {
                let s: f64 = (nb.offsets[i]..nb.offsets[i + 1]).map(|e| w[e * 2 + h]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_and_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shape = MapShape { batch: 2, h: 4, w: 5 };
        let params = vec![random(shape.pixels(), 2, &mut rng), random(18, 3, &mut rng)];
        check(&params, move |t, v| {
            let c = t.conv3x3(v[0], v[1], shape);
            let p = t.avg_pool2(c, shape);
            let s = t.silu(p);
            let ps = shape.pooled();
            let a = t.sq_err(s, Matrix::zeros(ps.pixels(), 3), vec![1.0; ps.pixels()]);
            let q = t.grid_pool(c, MapShape { batch: 2, h: 4, w: 5 }, 2);
            let q = t.mul(q, q);
            let b = t.sq_err(q, Matrix::zeros(2, 12), vec![1.0, 0.5]);
            t.weighted_sum(&[(a, 1.0), (b, 1.0)])
        });
    }

    #[test]
    fn grid_cells_cover_odd_maps() {
        let cells = grid_cells(MapShape { batch: 1, h: 3, w: 3 }, 2);
        assert_eq!(cells[0], vec![0, 1, 3, 4]);
        assert_eq!(cells[3], vec![4, 5, 7, 8]);
        let whole = grid_cells(MapShape { batch: 1, h: 4, w: 4 }, 1);
        assert_eq!(whole[0], (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn vn_gate_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = vec![random(2 * 3 * 5, 3, &mut rng), random(1, 3, &mut rng), random(1, 3, &mut rng)];
        check(&params, |t, v| {
            let g = t.vn_gate(v[0], v[1], v[2], 5);
            t.sq_err(g, Matrix::zeros(30, 3), vec![1.0; 30])
        });
    }

    #[test]
    fn rotation_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let planar_t = Matrix::from_rows(&[vec![0.6, 0.8], vec![0.0, 1.0], vec![1.0, 0.0]]);
        let spatial_t = Matrix::from_rows(&[vec![0.5, 0.5, 0.5, 0.5], vec![1.0, 0.0, 0.0, 0.0]]);
        let params = vec![random(3, 2, &mut rng), random(2, 4, &mut rng)];
        check(&params, move |t, v| {
            let a = t.rotation_loss(v[0], planar_t.clone(), vec![1.0, 0.5, 0.0]);
            let b = t.rotation_loss(v[1], spatial_t.clone(), vec![1.0, 1.0]);
            t.weighted_sum(&[(a, 1.0), (b, 0.3)])
        });
    }

    #[test]
    fn chamfer_loss_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let local = random(6, 3, &mut rng);
        let posed_gt = random(7, 3, &mut rng);
        let params = vec![random(2, 3, &mut rng), random(2, 4, &mut rng)];
        let targets = vec![None, Some(ChamferTarget { local, posed_gt, weight: 0.5 })];
        check(&params, move |t, v| t.chamfer_loss(v[0], v[1], targets.clone()));
    }
}
