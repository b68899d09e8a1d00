//! Rectified flow matching.
//!
//! Data `x0` and noise `x1` are joined by the straight path
//! `x_t = (1 - t) x0 + t x1`, whose velocity is the constant `x1 - x0`. The
//! model regresses that velocity; sampling integrates it backwards from
//! `t = 1` (pure noise) to `t = 0` with Euler steps.

use crate::error::{config_err, contract_err, Result};
use crate::rng::Rng;
use crate::tensor::{Float, Graph, Tensor, Var};

pub const DEFAULT_SAMPLE_STEPS: usize = 20;

/// One training example on the straight path.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBatch<T> {
    pub x0: Tensor<T>,
    pub x1: Tensor<T>,
    pub t: f64,
    pub xt: Tensor<T>,
}

impl<T: Float> FlowBatch<T> {
    pub fn new(x0: Tensor<T>, x1: Tensor<T>, t: f64) -> Result<Self> {
        let xt = interpolate(&x0, &x1, t)?;
        Ok(FlowBatch { x0, x1, t, xt })
    }

    /// Draws `x1 ~ N(0, I)` and, unless given, `t ~ U[0, 1]` from `rng`.
    pub fn draw(x0: Tensor<T>, t: Option<f64>, rng: &mut Rng) -> Result<Self> {
        let t = t.unwrap_or_else(|| rng.uniform());
        let x1 = Tensor::randn(x0.shape(), 1.0, rng);
        Self::new(x0, x1, t)
    }

    /// Regression target `x1 - x0`.
    pub fn target(&self) -> Tensor<T> {
        velocity_target(&self.x0, &self.x1).expect("shapes checked at construction")
    }
}

/// `(1 - t) x0 + t x1`.
pub fn interpolate<T: Float>(x0: &Tensor<T>, x1: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(contract_err!("interpolation time {t} outside [0, 1]"));
    }
    if x0.shape() != x1.shape() {
        return Err(contract_err!("x0 {:?} and x1 {:?} differ in shape", x0.shape(), x1.shape()));
    }
    if t == 0.0 {
        return Ok(x0.clone());
    }
    if t == 1.0 {
        return Ok(x1.clone());
    }
    let (a, b) = (T::from_f64(1.0 - t), T::from_f64(t));
    x0.zip_map(x1, |p, q| a * p + b * q)
}

/// The straight-path velocity `x1 - x0`; with `x1` playing the noise `eps`
/// this is also the `eps - x0` target.
pub fn velocity_target<T: Float>(x0: &Tensor<T>, x1: &Tensor<T>) -> Result<Tensor<T>> {
    x1.zip_map(x0, |a, b| a - b)
}

/// Mean squared error between a predicted velocity and the batch target.
pub fn fm_loss<T: Float>(g: &mut Graph<T>, prediction: Var, batch: &FlowBatch<T>) -> Result<Var> {
    g.mse(prediction, &batch.target())
}

/// A velocity field evaluated without gradients.
pub trait VelocityField<T: Float> {
    fn velocity(&self, x: &Tensor<T>, t: f64) -> Result<Tensor<T>>;
}

impl<T: Float, F> VelocityField<T> for F
where
    F: Fn(&Tensor<T>, f64) -> Result<Tensor<T>>,
{
    fn velocity(&self, x: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
        self(x, t)
    }
}

/// Classifier-free guidance: `v_u + w (v_c - v_u)`.
pub struct Guided<C, U> {
    pub cond: C,
    pub uncond: U,
    pub scale: f64,
}

impl<T: Float, C: VelocityField<T>, U: VelocityField<T>> VelocityField<T> for Guided<C, U> {
    fn velocity(&self, x: &Tensor<T>, t: f64) -> Result<Tensor<T>> {
        let vc = self.cond.velocity(x, t)?;
        if self.scale == 1.0 {
            return Ok(vc);
        }
        let vu = self.uncond.velocity(x, t)?;
        let w = T::from_f64(self.scale);
        vu.zip_map(&vc, |u, c| u + w * (c - u))
    }
}

/// Euler integration from `x(1) = start` down to `t = 0` in `steps` equal
/// steps: `x(t - dt) = x(t) - dt * v(x(t), t)`.
pub fn integrate<T: Float>(field: &impl VelocityField<T>, start: Tensor<T>, steps: usize) -> Result<Tensor<T>> {
    if steps == 0 {
        return Err(config_err!("sampler needs at least one step"));
    }
    let dt = 1.0 / steps as f64;
    let mut x = start;
    for i in 0..steps {
        let t = 1.0 - i as f64 * dt;
        let v = field.velocity(&x, t)?;
        if v.shape() != x.shape() {
            return Err(contract_err!("velocity {:?} does not match state {:?}", v.shape(), x.shape()));
        }
        let step = T::from_f64(dt);
        x = x.zip_map(&v, |a, b| a - step * b)?;
    }
    Ok(x)
}

/// Draws the starting noise from `seed` and integrates to `t = 0`.
pub fn sample<T: Float>(field: &impl VelocityField<T>, shape: &[usize], steps: usize, seed: u64) -> Result<Tensor<T>> {
    if steps == 0 {
        return Err(config_err!("sampler needs at least one step"));
    }
    let mut rng = Rng::new(seed).split("sample-noise");
    integrate(field, Tensor::randn(shape, 1.0, &mut rng), steps)
}
