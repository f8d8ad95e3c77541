//! Rotation representations and SO(3) numerics.
//!
//! Rotations live in three interchangeable forms: unit quaternions, 3x3
//! rotation matrices, and axis-angle vectors of the Lie algebra so(3). The
//! geodesic flow `geodesic_scale` and the isotropic Gaussian on SO(3)
//! (`igso3_pdf`, `Igso3Table`, `igso3_sample`) drive the rotational diffusion
//! chain. Planar rotations are carried as `[cos θ, sin θ]` pairs.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating externally supplied rotation matrices.
pub const ROTATION_INPUT_TOL: f64 = 1e-6;

/// Distance from π below which the log map is treated as branch-ambiguous.
pub const PI_BRANCH_TOL: f64 = 1e-6;

/// Grid resolution of the tabulated IGSO(3) angle CDF.
pub const IGSO3_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn normalize(&self) -> Result<Quaternion> {
        let n = self.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(Error::InvalidRotation(format!(
                "quaternion norm {n} cannot be normalized"
            )));
        }
        Ok(Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Sign convention for serialization: `w >= 0`, ties broken by the first
    /// nonzero imaginary component being positive.
    pub fn canonical(&self) -> Quaternion {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Quaternion::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            *self
        }
    }

    pub fn neg(&self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * other`.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Shepperd's largest-component extraction; result has `w >= 0`.
    pub fn from_matrix(r: &RotationMatrix3) -> Quaternion {
        let m = r.as_matrix();
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let candidates = [tr, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        let mut best = 0;
        for i in 1..4 {
            if candidates[i] > candidates[best] {
                best = i;
            }
        }
        let q = match best {
            0 => {
                let s = (1.0 + tr).sqrt() * 2.0;
                Quaternion::new(
                    0.25 * s,
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                )
            }
            1 => {
                let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
                Quaternion::new(
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    0.25 * s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                )
            }
            2 => {
                let s = (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
                Quaternion::new(
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    0.25 * s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                )
            }
            _ => {
                let s = (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt() * 2.0;
                Quaternion::new(
                    (m[(1, 0)] - m[(0, 1)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                    0.25 * s,
                )
            }
        };
        let n = q.norm();
        Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n).canonical()
    }
}

/// Rotation matrix of a quaternion. The input is normalized first, so any
/// nonzero quaternion is accepted.
pub fn quat_to_matrix(q: &Quaternion) -> Result<RotationMatrix3> {
    let q = q.normalize()?;
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Ok(RotationMatrix3(m))
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix3(Matrix3<f64>);

impl RotationMatrix3 {
    pub fn identity() -> Self {
        RotationMatrix3(Matrix3::identity())
    }

    /// Validates orthonormality and orientation within [`ROTATION_INPUT_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let r = RotationMatrix3(m);
        let (orth, det) = r.residuals();
        if !(orth <= ROTATION_INPUT_TOL && (det - 1.0).abs() <= ROTATION_INPUT_TOL) {
            return Err(Error::InvalidRotation(format!(
                "orthonormality residual {orth:e}, determinant {det}"
            )));
        }
        Ok(r)
    }

    /// Wraps a matrix the caller already knows to be a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        RotationMatrix3(m)
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        RotationMatrix3::new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn as_matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Frobenius norm of `RᵀR − I` and the determinant.
    pub fn residuals(&self) -> (f64, f64) {
        let orth = (self.0.transpose() * self.0 - Matrix3::identity()).norm();
        (orth, self.0.determinant())
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix3(self.0.transpose())
    }

    pub fn mul(&self, other: &RotationMatrix3) -> Self {
        RotationMatrix3(self.0 * other.0)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.0 * p
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let s = vee_skew(&self.0).norm();
        s.atan2(c)
    }

    pub fn to_quaternion(&self) -> Quaternion {
        Quaternion::from_matrix(self)
    }

    /// Projects back onto SO(3) through the quaternion representation.
    pub fn renormalized(&self) -> Self {
        quat_to_matrix(&self.to_quaternion()).expect("extracted quaternion has unit norm")
    }
}

/// `(R − Rᵀ)/2` read out as a 3-vector; equals `sin θ · axis`.
fn vee_skew(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Element of so(3): rotation axis scaled by the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngleVector(pub Vector3<f64>);

impl AxisAngleVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        AxisAngleVector(Vector3::new(x, y, z))
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        AxisAngleVector(self.0 * gamma)
    }
}

/// Rodrigues' formula.
pub fn matrix_exp(v: &AxisAngleVector) -> RotationMatrix3 {
    let theta = v.0.norm();
    let k = hat(&v.0);
    let (a, b) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    RotationMatrix3(Matrix3::identity() + k * a + k * k * b)
}

/// Log map with angle in `[0, π]`. Angles close to π go through the
/// quaternion extraction, which avoids dividing by `sin θ ≈ 0`.
pub fn matrix_log(r: &RotationMatrix3) -> AxisAngleVector {
    let m = r.as_matrix();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    if c > -0.9 {
        let s = vee_skew(m);
        let sn = s.norm();
        let theta = sn.atan2(c);
        let factor = if theta < 1e-4 {
            1.0 + theta * theta / 6.0
        } else {
            theta / theta.sin()
        };
        AxisAngleVector(s * factor)
    } else {
        let q = Quaternion::from_matrix(r);
        let v = Vector3::new(q.x, q.y, q.z);
        let vn = v.norm();
        let theta = 2.0 * vn.atan2(q.w);
        AxisAngleVector(v * (theta / vn))
    }
}

/// Whether a geodesic operation had to pick a branch at angle ≈ π.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchStatus {
    Unique,
    AmbiguousAtPi,
}

/// Geodesic flow from the identity: `exp(γ · log R)`.
pub fn geodesic_scale(gamma: f64, r: &RotationMatrix3) -> RotationMatrix3 {
    geodesic_scale_checked(gamma, r).0
}

/// Like [`geodesic_scale`] but also reports whether `R` sat on the π branch
/// cut, in which case the canonical log branch was used.
pub fn geodesic_scale_checked(gamma: f64, r: &RotationMatrix3) -> (RotationMatrix3, BranchStatus) {
    let log = matrix_log(r);
    let status = if (PI - log.angle()).abs() < PI_BRANCH_TOL {
        BranchStatus::AmbiguousAtPi
    } else {
        BranchStatus::Unique
    };
    (matrix_exp(&log.scaled(gamma)), status)
}

/// Angle of `R1ᵀ R2`, in `[0, π]`.
pub fn geodesic_distance(r1: &RotationMatrix3, r2: &RotationMatrix3) -> f64 {
    r1.transpose().mul(r2).angle()
}

fn igso3_lmax(eps2: f64) -> usize {
    if eps2 < 0.05 {
        2000
    } else {
        200
    }
}

fn check_eps2(eps2: f64) -> Result<()> {
    if !(eps2 > 0.0) || !eps2.is_finite() {
        return Err(Error::Domain(format!("IGSO(3) variance must be positive, got {eps2}")));
    }
    Ok(())
}

/// Largest truncation residue the series may leave before the closed-form
/// small-variance expansion takes over.
const IGSO3_TAIL_TOL: f64 = 1e-12;

/// Small-variance expansion of the series (Poisson summation, three image
/// terms). Agrees with the fully converged series to ~1e-11 for eps2 ≤ 1e-2.
fn igso3_small_variance(omega: f64, eps2: f64) -> f64 {
    let eps = eps2.sqrt();
    let images: f64 = [-1.0, 0.0, 1.0]
        .iter()
        .map(|k| {
            let w = omega - 2.0 * PI * k;
            w * (-w * w / (4.0 * eps2)).exp()
        })
        .sum();
    let half = 0.5 * omega;
    if half.sin() == 0.0 {
        return 0.0;
    }
    // (1 − cos ω)/(2 sin(ω/2)) = sin(ω/2)
    half.sin() / PI * PI.sqrt() * (eps2 / 4.0).exp() / (eps * eps2) * images
}

/// Truncated series without domain checks or clamping. Terms whose weight
/// has underflowed are skipped; they cannot change the sum. When the
/// truncation point still carries non-negligible weight the closed-form
/// expansion is used instead.
fn igso3_series(omega: f64, eps2: f64) -> f64 {
    let lmax = igso3_lmax(eps2);
    let lf = lmax as f64;
    if (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * eps2).exp() > IGSO3_TAIL_TOL {
        return igso3_small_variance(omega, eps2);
    }
    let mut sum = 0.0;
    for l in 0..=lmax {
        let lf = l as f64;
        let weight = (2.0 * lf + 1.0) * (-lf * (lf + 1.0) * eps2).exp();
        if weight < 1e-300 {
            break;
        }
        sum += weight * ((lf + 0.5) * omega).sin();
    }
    // (1 − cos ω)/sin(ω/2) = 2 sin(ω/2), which removes the removable
    // singularity at ω = 0.
    2.0 * (0.5 * omega).sin() / PI * sum
}

/// Angle marginal of the isotropic Gaussian on SO(3) with variance `eps2`.
pub fn igso3_pdf(omega: f64, eps2: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&omega) {
        return Err(Error::Domain(format!("rotation angle {omega} outside [0, π]")));
    }
    check_eps2(eps2)?;
    Ok(igso3_series(omega, eps2).max(0.0))
}

/// Tabulated inverse CDF of the IGSO(3) angle marginal for one variance.
#[derive(Debug, Clone)]
pub struct Igso3Table {
    eps2: f64,
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl Igso3Table {
    pub fn new(eps2: f64) -> Result<Self> {
        check_eps2(eps2)?;
        let n = IGSO3_GRID;
        let grid: Vec<f64> = (0..n).map(|i| PI * i as f64 / (n - 1) as f64).collect();
        let pdf: Vec<f64> = grid.iter().map(|&w| igso3_series(w, eps2).max(0.0)).collect();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * (pdf[i] + pdf[i - 1]) * (grid[i] - grid[i - 1]);
        }
        let total = cdf[n - 1];
        if !(total > 0.0) {
            return Err(Error::Domain(format!("IGSO(3) density vanished for eps2 = {eps2}")));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Igso3Table { eps2, grid, cdf })
    }

    pub fn eps2(&self) -> f64 {
        self.eps2
    }

    /// Inverse CDF with linear interpolation between grid nodes.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = self.cdf.partition_point(|&c| c < u);
        if idx == 0 {
            return self.grid[0];
        }
        if idx >= self.cdf.len() {
            return PI;
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let (g0, g1) = (self.grid[idx - 1], self.grid[idx]);
        if c1 <= c0 {
            return g1;
        }
        g0 + (u - c0) / (c1 - c0) * (g1 - g0)
    }

    /// Tabulated CDF evaluated at `omega`, linear between nodes.
    pub fn cdf_at(&self, omega: f64) -> f64 {
        let omega = omega.clamp(0.0, PI);
        let h = PI / (IGSO3_GRID - 1) as f64;
        let i = ((omega / h) as usize).min(IGSO3_GRID - 2);
        let frac = (omega - self.grid[i]) / h;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// `mean · exp(ω û)` with û uniform on the sphere.
    pub fn sample<R: Rng + ?Sized>(&self, mean: &RotationMatrix3, rng: &mut R) -> RotationMatrix3 {
        let omega = self.sample_angle(rng);
        let axis = random_unit_vector(rng);
        mean.mul(&matrix_exp(&AxisAngleVector(axis * omega)))
    }
}

/// One-off IGSO(3) sample; builds the CDF table on every call. Long-running
/// callers should keep an [`Igso3Table`] instead.
pub fn igso3_sample<R: Rng + ?Sized>(
    mean: &RotationMatrix3,
    eps2: f64,
    rng: &mut R,
) -> Result<RotationMatrix3> {
    Ok(Igso3Table::new(eps2)?.sample(mean, rng))
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Haar-uniform rotation via Shoemake's subgroup algorithm.
pub fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> RotationMatrix3 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random::<f64>() * 2.0 * PI;
    let u3: f64 = rng.random::<f64>() * 2.0 * PI;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
    quat_to_matrix(&q).expect("Shoemake quaternion has unit norm")
}

/// Outcome of projecting a 2-vector onto the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    AlreadyUnit,
    Projected,
    /// Zero input; angle 0 was substituted.
    Degenerate,
}

/// Planar rotation stored as `[cos θ, sin θ]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle2D {
    pub c: f64,
    pub s: f64,
}

impl Angle2D {
    pub const ZERO: Angle2D = Angle2D { c: 1.0, s: 0.0 };

    pub fn from_radians(theta: f64) -> Self {
        Angle2D { c: theta.cos(), s: theta.sin() }
    }

    /// k quarter turns counterclockwise.
    pub fn quarter_turns(k: i64) -> Self {
        match k.rem_euclid(4) {
            0 => Angle2D { c: 1.0, s: 0.0 },
            1 => Angle2D { c: 0.0, s: 1.0 },
            2 => Angle2D { c: -1.0, s: 0.0 },
            _ => Angle2D { c: 0.0, s: -1.0 },
        }
    }

    pub fn radians(&self) -> f64 {
        self.s.atan2(self.c)
    }

    pub fn project(c: f64, s: f64) -> (Angle2D, Projection) {
        let n = (c * c + s * s).sqrt();
        if !(n > 1e-12) || !n.is_finite() {
            return (Angle2D::ZERO, Projection::Degenerate);
        }
        let status = if (n - 1.0).abs() <= 1e-6 {
            Projection::AlreadyUnit
        } else {
            Projection::Projected
        };
        (Angle2D { c: c / n, s: s / n }, status)
    }

    pub fn inverse(&self) -> Angle2D {
        Angle2D { c: self.c, s: -self.s }
    }

    /// Nearest multiple of π/2, as a quarter-turn count in `0..4`. Exact
    /// ties resolve to the smaller angle.
    pub fn snap_quarter(&self) -> u8 {
        let theta = self.radians().rem_euclid(2.0 * PI);
        let k = theta / (0.5 * PI);
        let lower = k.floor();
        let pick = if k - lower > 0.5 { lower + 1.0 } else { lower };
        (pick as i64).rem_euclid(4) as u8
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        angle2d_to_matrix(self)
    }
}

/// Composition of planar rotations (angle addition). Inputs off the unit
/// circle are projected first; the returned status says whether that happened.
pub fn angle2d_compose(a: &Angle2D, b: &Angle2D) -> (Angle2D, Projection) {
    let (a, sa) = Angle2D::project(a.c, a.s);
    let (b, sb) = Angle2D::project(b.c, b.s);
    let out = Angle2D { c: a.c * b.c - a.s * b.s, s: a.s * b.c + a.c * b.s };
    let status = match (sa, sb) {
        (Projection::Degenerate, _) | (_, Projection::Degenerate) => Projection::Degenerate,
        (Projection::Projected, _) | (_, Projection::Projected) => Projection::Projected,
        _ => Projection::AlreadyUnit,
    };
    (out, status)
}

pub fn angle2d_to_matrix(a: &Angle2D) -> Matrix2<f64> {
    Matrix2::new(a.c, -a.s, a.s, a.c)
}

/// Rotation component of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Rotation {
    Planar(Angle2D),
    Spatial(Quaternion),
}

impl Rotation {
    /// Flat parameter vector: `[c, s]` or `[w, x, y, z]`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Rotation::Planar(a) => vec![a.c, a.s],
            Rotation::Spatial(q) => q.to_array().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Rotation::Planar(_) => 2,
            Rotation::Spatial(_) => 4,
        }
    }

    pub fn matrix3(&self) -> Result<RotationMatrix3> {
        match self {
            Rotation::Spatial(q) => quat_to_matrix(q),
            Rotation::Planar(a) => {
                let m = a.to_matrix();
                Ok(RotationMatrix3::from_matrix_unchecked(Matrix3::new(
                    m[(0, 0)],
                    m[(0, 1)],
                    0.0,
                    m[(1, 0)],
                    m[(1, 1)],
                    0.0,
                    0.0,
                    0.0,
                    1.0,
                )))
            }
        }
    }
}

/// Translation plus rotation of one piece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec<f64>,
    pub rotation: Rotation,
}

impl Pose {
    pub fn planar(x: f64, y: f64, angle: Angle2D) -> Self {
        Pose { translation: vec![x, y], rotation: Rotation::Planar(angle) }
    }

    pub fn spatial(t: [f64; 3], q: Quaternion) -> Self {
        Pose { translation: t.to_vec(), rotation: Rotation::Spatial(q) }
    }

    /// Concatenated `[s, r]` state vector used by the diffusion chain.
    pub fn state(&self) -> Vec<f64> {
        let mut v = self.translation.clone();
        v.extend(self.rotation.params());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rz(theta: f64) -> RotationMatrix3 {
        matrix_exp(&AxisAngleVector::new(0.0, 0.0, theta))
    }

    fn assert_so3(r: &RotationMatrix3) {
        let (orth, det) = r.residuals();
        assert!(orth < 1e-8 && (det - 1.0).abs() < 1e-8, "orth {orth} det {det}");
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = quat_to_matrix(&Quaternion::IDENTITY).unwrap();
        assert_eq!(*r.as_matrix(), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let h = (PI / 4.0).cos();
        let r = quat_to_matrix(&Quaternion::new(h, 0.0, 0.0, (PI / 4.0).sin())).unwrap();
        let want = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r.as_matrix() - want).norm() < 1e-15);
        assert!((rz(PI / 2.0).as_matrix() - want).norm() < 1e-15);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        let err = quat_to_matrix(&Quaternion::new(0.0, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidRotation(_)));
    }

    #[test]
    fn double_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let q = uniform_rotation(&mut rng).to_quaternion();
            let a = quat_to_matrix(&q).unwrap();
            let b = quat_to_matrix(&q.neg()).unwrap();
            assert!((a.as_matrix() - b.as_matrix()).norm() < 1e-15);
        }
    }

    #[test]
    fn canonical_sign() {
        let q = Quaternion::new(-0.5, 0.5, -0.5, 0.5).canonical();
        assert!(q.w > 0.0);
        let q = Quaternion::new(0.0, -1.0, 0.0, 0.0).canonical();
        assert_eq!(q.x, 1.0);
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(matrix_log(&RotationMatrix3::identity()).0, Vector3::zeros());
    }

    #[test]
    fn axis_angle_round_trip_through_quaternion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let axis = random_unit_vector(&mut rng);
            let angle = rng.random::<f64>() * 3.0;
            let v = AxisAngleVector(axis * angle);
            let q = matrix_exp(&v).to_quaternion();
            let back = matrix_log(&quat_to_matrix(&q).unwrap());
            assert!((back.0 - v.0).norm() < 1e-8, "{:?} vs {:?}", back, v);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let axis = random_unit_vector(&mut rng);
            let r = matrix_exp(&AxisAngleVector(axis * rng.random::<f64>() * 3.0));
            let back = matrix_exp(&matrix_log(&r));
            assert!((back.as_matrix() - r.as_matrix()).norm() < 1e-7);
            assert_so3(&back);
        }
    }

    #[test]
    fn log_near_pi_is_stable() {
        for eps in [1e-3, 1e-6, 1e-9, 0.0] {
            let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
            let r = matrix_exp(&AxisAngleVector(axis * (PI - eps)));
            let v = matrix_log(&r);
            assert!((v.angle() - (PI - eps)).abs() < 1e-7);
            assert!((matrix_exp(&v).as_matrix() - r.as_matrix()).norm() < 1e-7);
        }
    }

    #[test]
    fn non_orthonormal_matrix_rejected() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix3::new(m).is_err());
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix3::new(reflection).is_err());
    }

    #[test]
    fn geodesic_scale_basics() {
        let r = rz(PI / 2.0);
        assert!((geodesic_scale(0.0, &r).as_matrix() - Matrix3::identity()).norm() < 1e-15);
        assert!((geodesic_scale(1.0, &r).as_matrix() - r.as_matrix()).norm() < 1e-12);
        let half = geodesic_scale(0.5, &r);
        assert!((half.as_matrix() - rz(PI / 4.0).as_matrix()).norm() < 1e-12);
    }

    #[test]
    fn geodesic_scale_composition_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 500 {
            let r = uniform_rotation(&mut rng);
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            let theta = r.angle();
            if theta * (a * b).abs() >= PI - 1e-3 || theta * b.abs() >= PI - 1e-3 {
                continue;
            }
            let lhs = geodesic_scale(a, &geodesic_scale(b, &r));
            let rhs = geodesic_scale(a * b, &r);
            assert!((lhs.as_matrix() - rhs.as_matrix()).norm() < 1e-7);
            checked += 1;
        }
    }

    #[test]
    fn geodesic_scale_flags_pi_branch() {
        let r = rz(PI);
        assert_eq!(geodesic_scale_checked(0.5, &r).1, BranchStatus::AmbiguousAtPi);
        assert_eq!(geodesic_scale_checked(0.5, &rz(1.0)).1, BranchStatus::Unique);
    }

    #[test]
    fn geodesic_distance_values() {
        let i = RotationMatrix3::identity();
        assert_eq!(geodesic_distance(&i, &i), 0.0);
        assert!((geodesic_distance(&i, &rz(PI / 2.0)) - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn geodesic_distance_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let a = uniform_rotation(&mut rng);
            let b = uniform_rotation(&mut rng);
            let c = uniform_rotation(&mut rng);
            let ab = geodesic_distance(&a, &b);
            assert!((0.0..=PI).contains(&ab));
            assert!((ab - geodesic_distance(&b, &a)).abs() < 1e-12);
            assert!(ab <= geodesic_distance(&a, &c) + geodesic_distance(&c, &b) + 1e-9);
        }
    }

    fn trapezoid(eps2: f64, n: usize) -> f64 {
        let h = PI / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * igso3_pdf(i as f64 * h, eps2).unwrap()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn igso3_pdf_normalizes() {
        for eps2 in [0.01, 0.1, 1.0] {
            let z = trapezoid(eps2, 10_000);
            assert!((z - 1.0).abs() < 1e-3, "eps2 {eps2}: {z}");
        }
    }

    #[test]
    fn igso3_pdf_large_variance_is_uniform_marginal() {
        let mut sup: f64 = 0.0;
        for i in 0..=1000 {
            let w = PI * i as f64 / 1000.0;
            let uniform = (1.0 - w.cos()) / PI;
            sup = sup.max((igso3_pdf(w, 100.0).unwrap() - uniform).abs());
        }
        assert!(sup < 1e-4, "{sup}");
    }

    #[test]
    fn igso3_pdf_concentrates_for_small_variance() {
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 0..=2000 {
            let w = PI * i as f64 / 2000.0;
            let p = igso3_pdf(w, 0.01).unwrap();
            if p > best {
                best = p;
                arg = w;
            }
        }
        assert!(arg < 0.5, "argmax {arg}");
    }

    #[test]
    fn small_variance_expansion_matches_series() {
        for eps2 in [1e-2, 1e-3, 1e-4] {
            for i in 1..200 {
                let w = PI * i as f64 / 200.0;
                let a = igso3_series(w, eps2);
                let b = igso3_small_variance(w, eps2);
                assert!((a - b).abs() < 1e-9, "eps2 {eps2} w {w}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn igso3_pdf_domain_errors() {
        assert!(igso3_pdf(-0.1, 0.1).is_err());
        assert!(igso3_pdf(PI + 0.1, 0.1).is_err());
        assert!(igso3_pdf(1.0, 0.0).is_err());
        assert!(igso3_pdf(1.0, -1.0).is_err());
    }

    #[test]
    fn igso3_tiny_variance_stays_near_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean = uniform_rotation(&mut rng);
        let table = Igso3Table::new(1e-6).unwrap();
        for _ in 0..1000 {
            let s = table.sample(&mean, &mut rng);
            assert_so3(&s);
            assert!(geodesic_distance(&s, &mean) < 0.05);
        }
    }

    #[test]
    fn angle2d_composition() {
        let (r, _) = angle2d_compose(&Angle2D::ZERO, &Angle2D { c: 0.0, s: 1.0 });
        assert!((r.c - 0.0).abs() < 1e-15 && (r.s - 1.0).abs() < 1e-15);
        for a in 0..4 {
            for b in 0..4 {
                let (r, _) = angle2d_compose(&Angle2D::quarter_turns(a), &Angle2D::quarter_turns(b));
                assert_eq!(r, Angle2D::quarter_turns(a + b));
            }
        }
        let m = angle2d_to_matrix(&Angle2D { c: 0.0, s: 1.0 });
        assert_eq!(m, Matrix2::new(0.0, -1.0, 1.0, 0.0));
    }

    #[test]
    fn angle2d_projection_flags() {
        assert_eq!(Angle2D::project(0.0, 0.0).1, Projection::Degenerate);
        assert_eq!(Angle2D::project(3.0, 4.0).1, Projection::Projected);
        let (_, st) = angle2d_compose(&Angle2D { c: 2.0, s: 0.0 }, &Angle2D::ZERO);
        assert_eq!(st, Projection::Projected);
    }

    #[test]
    fn snapping_quarter_turns() {
        assert_eq!(Angle2D::from_radians(0.1).snap_quarter(), 0);
        assert_eq!(Angle2D::from_radians(PI / 2.0 + 0.7).snap_quarter(), 1);
        assert_eq!(Angle2D::from_radians(-PI / 2.0).snap_quarter(), 3);
        assert_eq!(Angle2D::from_radians(PI - 0.3).snap_quarter(), 2);
        assert_eq!(Angle2D::from_radians(2.0 * PI - 0.2).snap_quarter(), 0);
    }
}
