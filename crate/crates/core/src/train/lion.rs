//! Sign-momentum optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LionConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl Default for LionConfig {
    fn default() -> Self {
        LionConfig {
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LionState {
    pub config: LionConfig,
    /// One buffer per parameter block; allocated on the first step.
    pub momentum: Vec<Vec<f64>>,
    pub step: u64,
}

impl LionState {
    pub fn new(config: LionConfig) -> Result<Self> {
        for (name, b) in [("beta1", config.beta1), ("beta2", config.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("lion {name} must lie in (0, 1), got {b}")));
            }
        }
        if !(config.weight_decay >= 0.0) {
            return Err(Error::invalid("lion weight decay must be non-negative"));
        }
        Ok(LionState {
            config,
            momentum: Vec::new(),
            step: 0,
        })
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One update over all parameter blocks:
///
/// ```text
/// c = β1·m + (1−β1)·g
/// p ← p − lr·(sign(c) + λ·p)
/// m ← β2·m + (1−β2)·g
/// ```
pub fn lion_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut LionState, lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{} parameter blocks but {} gradient blocks", params.len(), grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::shape(format!("block {i}: {} parameters, {} gradients", p.len(), g.len())));
        }
    }
    if state.momentum.is_empty() {
        state.momentum = params.iter().map(|p| vec![0.0; p.len()]).collect();
    } else if state.momentum.len() != params.len()
        || state.momentum.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::shape("optimizer state does not match parameters"));
    }
    let LionConfig {
        beta1,
        beta2,
        weight_decay,
    } = state.config;
    for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut state.momentum) {
        for ((pv, &gv), mv) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()) {
            let c = beta1 * *mv + (1.0 - beta1) * gv;
            *pv -= lr * (sign(c) + weight_decay * *pv);
            *mv = beta2 * *mv + (1.0 - beta2) * gv;
        }
    }
    state.step += 1;
    Ok(())
}
