//! Noise schedules and the forward/reverse chains.
//!
//! Translations and planar rotation vectors follow the Euclidean chain
//! `x_t = √ᾱ_t x₀ + √(1−ᾱ_t) z`. Spatial rotations follow the SO(3) chain
//! built from the geodesic flow and the isotropic Gaussian on SO(3). Timesteps
//! are 1-based; `ᾱ_0 = 1`.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    geodesic_scale, Angle2D, Igso3Table, Pose, Projection, Quaternion, Rotation, RotationMatrix3,
};

/// Linear β schedule with cumulative products and lazily built IGSO(3)
/// tables, one per timestep.
#[derive(Debug)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    igso3: Vec<OnceLock<Igso3Table>>,
}

impl Clone for NoiseSchedule {
    fn clone(&self) -> Self {
        NoiseSchedule {
            beta: self.beta.clone(),
            alpha: self.alpha.clone(),
            alpha_bar: self.alpha_bar.clone(),
            igso3: (0..self.beta.len()).map(|_| OnceLock::new()).collect(),
        }
    }
}

impl NoiseSchedule {
    pub fn new(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one timestep".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + i as f64 * (beta_end - beta_start) / (steps - 1) as f64
                }
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            igso3: (0..steps).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::Domain(format!("timestep {t} outside [1, {}]", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// IGSO(3) table with variance `1 − ᾱ_t`, built on first use.
    pub fn igso3_table(&self, t: usize) -> Result<&Igso3Table> {
        self.check(t)?;
        if let Some(table) = self.igso3[t - 1].get() {
            return Ok(table);
        }
        let table = Igso3Table::new(1.0 - self.alpha_bar(t))?;
        Ok(self.igso3[t - 1].get_or_init(|| table))
    }

    /// Descending timesteps `T, T−s, …` ending at 1.
    pub fn timesteps(&self, stride: usize) -> Vec<usize> {
        let stride = stride.max(1);
        let mut ts: Vec<usize> = (1..=self.steps()).rev().step_by(stride).collect();
        if *ts.last().unwrap() != 1 {
            ts.push(1);
        }
        ts
    }

    /// Effective single-step `α` between `t` and an earlier `t_prev`.
    fn alpha_between(&self, t: usize, t_prev: usize) -> f64 {
        self.alpha_bar(t) / self.alpha_bar(t_prev)
    }
}

fn same_len(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{what}: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `√ᾱ_t x₀ + √(1−ᾱ_t) z`.
pub fn forward_euclidean(x0: &[f64], t: usize, z: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check(t)?;
    same_len(x0, z, "forward noise")?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(z).map(|(x, z)| a * x + b * z).collect())
}

fn noise_scale(t: usize, sched: &NoiseSchedule) -> Result<f64> {
    sched.check(t)?;
    let s = (1.0 - sched.alpha_bar(t)).sqrt();
    if !(s > 0.0) {
        return Err(Error::Domain(format!("ᾱ_{t} = 1 leaves no noise to recover")));
    }
    Ok(s)
}

/// Noise implied by a clean-state prediction: `(x_t − √ᾱ_t x̂₀)/√(1−ᾱ_t)`.
pub fn x0_to_eps(x_t: &[f64], x0_hat: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    same_len(x_t, x0_hat, "x0_to_eps")?;
    let s = noise_scale(t, sched)?;
    let a = sched.alpha_bar(t).sqrt();
    Ok(x_t.iter().zip(x0_hat).map(|(x, x0)| (x - a * x0) / s).collect())
}

/// Inverse of [`x0_to_eps`].
pub fn eps_to_x0(x_t: &[f64], eps: &[f64], t: usize, sched: &NoiseSchedule) -> Result<Vec<f64>> {
    same_len(x_t, eps, "eps_to_x0")?;
    let s = noise_scale(t, sched)?;
    let a = sched.alpha_bar(t).sqrt();
    Ok(x_t.iter().zip(eps).map(|(x, e)| (x - s * e) / a).collect())
}

/// Deterministic reverse step `x_{t−1} = (x_t − (1−α_t)/√(1−ᾱ_t) ε̂)/√α_t`.
pub fn reverse_step_euclidean(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    reverse_step_euclidean_between(x_t, eps_hat, t, t - 1, sched)
}

/// Reverse step jumping from `t` to any earlier `t_prev`, using the effective
/// `α = ᾱ_t/ᾱ_{t_prev}`. Reduces to [`reverse_step_euclidean`] for adjacent
/// steps.
pub fn reverse_step_euclidean_between(
    x_t: &[f64],
    eps_hat: &[f64],
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<Vec<f64>> {
    sched.check(t)?;
    if t_prev >= t {
        return Err(Error::Domain(format!("reverse step needs t_prev < t, got {t_prev} >= {t}")));
    }
    same_len(x_t, eps_hat, "reverse step")?;
    let alpha = if t_prev + 1 == t { sched.alpha(t) } else { sched.alpha_between(t, t_prev) };
    let coef = (1.0 - alpha) / (1.0 - sched.alpha_bar(t)).sqrt();
    let inv = 1.0 / alpha.sqrt();
    Ok(x_t.iter().zip(eps_hat).map(|(x, e)| inv * (x - coef * e)).collect())
}

/// Standard deviation of the optional ancestral noise between `t` and
/// `t_prev`: `√((1−ᾱ_{t'})/(1−ᾱ_t) · (1 − ᾱ_t/ᾱ_{t'}))`.
pub fn ancestral_std(t: usize, t_prev: usize, sched: &NoiseSchedule) -> f64 {
    let ab_t = sched.alpha_bar(t);
    let ab_p = sched.alpha_bar(t_prev);
    ((1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p)).max(0.0).sqrt()
}

/// Samples `r_t ~ IG(λ(√ᾱ_t, r₀), 1 − ᾱ_t)`.
pub fn forward_rotation_so3<R: Rng + ?Sized>(
    r0: &RotationMatrix3,
    t: usize,
    rng: &mut R,
    sched: &NoiseSchedule,
) -> Result<RotationMatrix3> {
    Ok(forward_rotation_so3_with_noise(r0, t, rng, sched)?.0)
}

/// Like [`forward_rotation_so3`], also returning the injected noise rotation
/// `N` with `r_t = λ(√ᾱ_t, r₀) · N`.
pub fn forward_rotation_so3_with_noise<R: Rng + ?Sized>(
    r0: &RotationMatrix3,
    t: usize,
    rng: &mut R,
    sched: &NoiseSchedule,
) -> Result<(RotationMatrix3, RotationMatrix3)> {
    let table = sched.igso3_table(t)?;
    let noise = table.sample(&RotationMatrix3::identity(), rng);
    let mean = geodesic_scale(sched.alpha_bar(t).sqrt(), r0);
    Ok((mean.mul(&noise), noise))
}

/// Rotational noise implied by a clean prediction:
/// `λ(1/√(1−ᾱ_t), λ(√ᾱ_t, R̂₀)ᵀ R_t)`.
pub fn rotation_x0_to_eps(
    r_t: &RotationMatrix3,
    r0_hat: &RotationMatrix3,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<RotationMatrix3> {
    let s = noise_scale(t, sched)?;
    let residual = geodesic_scale(sched.alpha_bar(t).sqrt(), r0_hat).transpose().mul(r_t);
    Ok(geodesic_scale(1.0 / s, &residual))
}

/// Reverse rotation step in the closed form
/// `λ(√ᾱ_{t−1}/α_t, R_t) · λ((1−ᾱ_{t−1})/√ᾱ_t, ε̂)ᵀ`.
pub fn reverse_step_rotation(
    r_t: &RotationMatrix3,
    eps_rot_hat: &RotationMatrix3,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<RotationMatrix3> {
    reverse_step_rotation_between(r_t, eps_rot_hat, t, t - 1, sched)
}

pub fn reverse_step_rotation_between(
    r_t: &RotationMatrix3,
    eps_rot_hat: &RotationMatrix3,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<RotationMatrix3> {
    sched.check(t)?;
    if t_prev >= t {
        return Err(Error::Domain(format!("reverse step needs t_prev < t, got {t_prev} >= {t}")));
    }
    let alpha = if t_prev + 1 == t { sched.alpha(t) } else { sched.alpha_between(t, t_prev) };
    let ab_prev = sched.alpha_bar(t_prev);
    let a = ab_prev.sqrt() / alpha;
    let b = (1.0 - ab_prev) / sched.alpha_bar(t).sqrt();
    Ok(geodesic_scale(a, r_t).mul(&geodesic_scale(b, eps_rot_hat).transpose()))
}

/// Reverse rotation step from the posterior-mean form of the Euclidean chain:
/// with `N_t = λ(√ᾱ_t, R̂₀)ᵀ R_t`, returns
/// `λ(√ᾱ_{t'}, R̂₀) · λ(√α(1−ᾱ_{t'})/(1−ᾱ_t), N_t)` where `α = ᾱ_t/ᾱ_{t'}`.
/// For adjacent steps the Euclidean analogue is exactly the reverse step
/// with `ε̂` derived from `x̂₀`.
pub fn posterior_step_rotation(
    r_t: &RotationMatrix3,
    r0_hat: &RotationMatrix3,
    t: usize,
    t_prev: usize,
    sched: &NoiseSchedule,
) -> Result<RotationMatrix3> {
    sched.check(t)?;
    if t_prev >= t {
        return Err(Error::Domain(format!("reverse step needs t_prev < t, got {t_prev} >= {t}")));
    }
    let ab_t = sched.alpha_bar(t);
    let ab_prev = sched.alpha_bar(t_prev);
    let alpha = ab_t / ab_prev;
    let keep = alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t);
    let residual = geodesic_scale(ab_t.sqrt(), r0_hat).transpose().mul(r_t);
    Ok(geodesic_scale(ab_prev.sqrt(), r0_hat).mul(&geodesic_scale(keep, &residual)))
}

/// Forward chain on the raw `[cos θ, sin θ]` vector.
pub fn forward_rotation_2d(
    r0: &Angle2D,
    t: usize,
    z: [f64; 2],
    sched: &NoiseSchedule,
) -> Result<[f64; 2]> {
    let v = forward_euclidean(&[r0.c, r0.s], t, &z, sched)?;
    Ok([v[0], v[1]])
}

/// Projects a diffused 2-vector back onto the circle.
pub fn readout_2d(v: [f64; 2]) -> (Angle2D, Projection) {
    Angle2D::project(v[0], v[1])
}

/// Injected noise for one piece's rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationNoise {
    Planar([f64; 2]),
    Spatial(RotationMatrix3),
}

/// Noisy poses of one task at a single timestep, with the noise that
/// produced them.
#[derive(Debug, Clone)]
pub struct DiffusionBatch {
    pub t: usize,
    pub translations: Vec<Vec<f64>>,
    pub rotations: Vec<NoisyRotation>,
    pub translation_noise: Vec<Vec<f64>>,
    pub rotation_noise: Vec<RotationNoise>,
}

/// Current rotation state of a piece inside the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisyRotation {
    /// Unprojected 2-vector.
    Planar([f64; 2]),
    Spatial(RotationMatrix3),
}

impl NoisyRotation {
    /// Network input encoding: the raw 2-vector, or the canonical quaternion.
    pub fn features(&self) -> Vec<f64> {
        match self {
            NoisyRotation::Planar(v) => v.to_vec(),
            NoisyRotation::Spatial(r) => r.to_quaternion().to_array().to_vec(),
        }
    }

    pub fn to_rotation(&self) -> Rotation {
        match self {
            NoisyRotation::Planar(v) => Rotation::Planar(readout_2d(*v).0),
            NoisyRotation::Spatial(r) => Rotation::Spatial(r.to_quaternion()),
        }
    }
}

impl DiffusionBatch {
    /// Applies the forward chains to every clean pose at timestep `t`.
    pub fn noise_poses<R: Rng + ?Sized>(
        clean: &[Pose],
        t: usize,
        sched: &NoiseSchedule,
        rng: &mut R,
    ) -> Result<DiffusionBatch> {
        sched.check(t)?;
        let mut batch = DiffusionBatch {
            t,
            translations: Vec::with_capacity(clean.len()),
            rotations: Vec::with_capacity(clean.len()),
            translation_noise: Vec::with_capacity(clean.len()),
            rotation_noise: Vec::with_capacity(clean.len()),
        };
        for pose in clean {
            let z: Vec<f64> =
                (0..pose.translation.len()).map(|_| rng.sample(StandardNormal)).collect();
            batch.translations.push(forward_euclidean(&pose.translation, t, &z, sched)?);
            batch.translation_noise.push(z);
            match pose.rotation {
                Rotation::Planar(a) => {
                    let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                    batch.rotations.push(NoisyRotation::Planar(forward_rotation_2d(&a, t, z, sched)?));
                    batch.rotation_noise.push(RotationNoise::Planar(z));
                }
                Rotation::Spatial(q) => {
                    let r0 = crate::geometry::quat_to_matrix(&q)?;
                    let (rt, n) = forward_rotation_so3_with_noise(&r0, t, rng, sched)?;
                    batch.rotations.push(NoisyRotation::Spatial(rt));
                    batch.rotation_noise.push(RotationNoise::Spatial(n));
                }
            }
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.translations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.translations.is_empty()
    }
}

/// Spatial rotation from a raw 4-vector prediction.
pub fn quaternion_matrix(q: [f64; 4]) -> Result<RotationMatrix3> {
    crate::geometry::quat_to_matrix(&Quaternion::from_array(q))
}

/// How spatial rotations move between timesteps at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RotationStep {
    /// [`posterior_step_rotation`].
    #[default]
    Posterior,
    /// [`reverse_step_rotation`] fed with [`rotation_x0_to_eps`].
    ClosedForm,
}
