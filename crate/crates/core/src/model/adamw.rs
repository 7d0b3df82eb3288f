//! AdamW with global-norm gradient clipping and linear warmup.
//!
//! Per step `t` (0-based) with learning rate `η_t = η · min(1, t / warmup)`:
//!
//! ```text
//! g  ← g · min(1, clip / ‖g‖)          (norm over all parameters)
//! θ  ← θ · (1 − η_t · wd)
//! m  ← β₁ m + (1 − β₁) g
//! v  ← β₂ v + (1 − β₂) g²
//! θ  ← θ − η_t · m̂ / (√v̂ + ε)          (m̂, v̂ bias-corrected with t + 1)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub warmup_fraction: f64,
    pub total_steps: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: 2.0,
            warmup_fraction: 0.1,
            total_steps: 2000,
        }
    }
}

impl AdamWConfig {
    pub fn warmup_steps(&self) -> usize {
        (self.warmup_fraction * self.total_steps as f64).ceil() as usize
    }

    /// Learning rate applied by the update with 0-based index `step`.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let w = self.warmup_steps();
        if w == 0 || step >= w {
            self.lr
        } else {
            self.lr * step as f64 / w as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamWState<T> {
    pub config: AdamWConfig,
    step: usize,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

/// What a single update did, for logging.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub learning_rate: f64,
    pub grad_norm: f64,
    pub clip_scale: f64,
}

impl<T: Real> AdamWState<T> {
    /// Zero moments for parameter tensors of the given lengths.
    pub fn new(config: AdamWConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.v
    }
}

/// Applies one AdamW update in place.
pub fn adamw_step<T: Real>(
    state: &mut AdamWState<T>,
    params: &mut [&mut [T]],
    grads: &[&[T]],
) -> Result<StepInfo> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameter tensors, {} gradient tensors, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {i}: param {} grad {} moment {}",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }

    let cfg = &state.config;
    let grad_norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum::<T>()
        .sqrt();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    let clip = T::lit(cfg.clip_norm);
    let clip_scale = if grad_norm > clip {
        clip / grad_norm
    } else {
        T::one()
    };

    let lr_f = cfg.learning_rate(state.step);
    let lr = T::lit(lr_f);
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let t = (state.step + 1) as i32;
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let eps = T::lit(cfg.eps);
    let decay = T::one() - lr * T::lit(cfg.weight_decay);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.len() {
            let gi = g[i] * clip_scale;
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    state.step += 1;
    Ok(StepInfo {
        learning_rate: lr_f,
        grad_norm: grad_norm.as_f64(),
        clip_scale: clip_scale.as_f64(),
    })
}
