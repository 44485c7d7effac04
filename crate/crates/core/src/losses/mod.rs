//! Training objectives with analytic gradients.

pub mod bce;
pub mod dbce;
pub mod focal;
pub mod kl;
pub mod marginal;

pub use bce::bce_loss;
pub use dbce::{dbce, dbce_with, softmin, DbceResult};
pub use focal::{focal_loss, zero_fraction, FocalParams};
pub use kl::{latent_kl, smoothed_kl, smoothed_kl_grad, LatentKl, KL_EPSILON};
pub use marginal::{marginal_rmse_loss, soft_marginals, MarginalLoss};

use ndarray::Array2;

use crate::error::{Error, Result};

/// Predictions are clamped into `[PROB_FLOOR, 1 − PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-7;

/// A scalar loss and its gradient with respect to the predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Clamped probability and the derivative of the clamp (1 inside, 0 outside).
#[inline]
pub(crate) fn clamp_prob(p: f64) -> (f64, f64) {
    if p < PROB_FLOOR {
        (PROB_FLOOR, 0.0)
    } else if p > 1.0 - PROB_FLOOR {
        (1.0 - PROB_FLOOR, 0.0)
    } else {
        (p, 1.0)
    }
}

pub(crate) fn same_shape(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}
