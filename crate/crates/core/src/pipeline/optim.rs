use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::net::{ParamStore, TrainState};
use crate::numerics::Scalar;

/// Cosine annealing from `lr0` at step 0 to `eta_min` at `total`.
pub fn cosine_lr(step: u64, total: u64, lr0: f64, eta_min: f64) -> f64 {
    if total == 0 {
        return lr0;
    }
    let t = step.min(total) as f64 / total as f64;
    eta_min + (lr0 - eta_min) * 0.5 * (1.0 + (PI * t).cos())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected Adam update. `grads` must name every parameter; a
/// non-finite gradient aborts before any tensor is touched.
pub fn adam_step<T: Scalar>(state: &mut TrainState<T>, grads: &ParamStore<T>, opt: AdamParams) -> Result<()> {
    for (name, p) in state.params.iter() {
        let g = grads.get(name)?;
        if g.shape() != p.shape() {
            return Err(Error::Config(format!("{name}: gradient shape {:?} != parameter {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let (b1, b2) = (T::from_f64_lossy(opt.beta1), T::from_f64_lossy(opt.beta2));
    let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - opt.beta1), T::from_f64_lossy(1.0 - opt.beta2));
    let step_size = T::from_f64_lossy(opt.lr / c1);
    let inv_sqrt_c2 = T::from_f64_lossy(1.0 / c2.sqrt());
    let eps = T::from_f64_lossy(opt.eps);
    for (name, p) in state.params.iter_mut() {
        let g = grads.get(name)?.data();
        let m = state.m.get_mut(name)?.data_mut();
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = b1 * *mi + one_b1 * gi;
        }
        let m = state.m.get(name)?.data();
        let v = state.v.get_mut(name)?.data_mut();
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = b2 * *vi + one_b2 * gi * gi;
        }
        let v = state.v.get(name)?.data();
        for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m).zip(v) {
            *pi = *pi - step_size * mi / (vi.sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, t)| t.data().iter())
        .map(|v| v.to_f64_lossy().powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = T::from_f64_lossy(max_norm / norm);
        for (_, t) in grads.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}
