use ndarray::{Array2, Zip};

use super::same_shape;
use crate::error::{Error, Result};

/// Smoothing constant for KL between proportion vectors.
pub const KL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentKl {
    pub value: f64,
    pub grad_mu: Array2<f64>,
    pub grad_logsig: Array2<f64>,
}

/// KL to the unit normal with `logsig` read as log-variance, averaged over
/// rows: `(1/n)·Σ −½·(1 + s − μ² − eˢ)`.
pub fn latent_kl(mu: &Array2<f64>, logsig: &Array2<f64>) -> Result<LatentKl> {
    same_shape(mu, logsig, "latent kl")?;
    let n = mu.nrows().max(1) as f64;
    let mut total = 0.0;
    let mut grad_mu = Array2::zeros(mu.raw_dim());
    let mut grad_logsig = Array2::zeros(mu.raw_dim());
    Zip::from(&mut grad_mu)
        .and(&mut grad_logsig)
        .and(mu)
        .and(logsig)
        .for_each(|gm, gs, &m, &s| {
            let es = s.exp();
            total += -0.5 * (1.0 + s - m * m - es);
            *gm = m / n;
            *gs = -0.5 * (1.0 - es) / n;
        });
    Ok(LatentKl {
        value: total / n,
        grad_mu,
        grad_logsig,
    })
}

/// `Σ (a+ε)·ln((a+ε)/(b+ε))`.
pub fn smoothed_kl(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("kl: lengths {} and {}", a.len(), b.len())));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid("kl epsilon must be positive"));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x + eps) * ((x + eps) / (y + eps)).ln())
        .sum())
}

/// Gradient of [`smoothed_kl`] with respect to `b`.
pub fn smoothed_kl_grad(a: &[f64], b: &[f64], eps: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| -(x + eps) / (y + eps)).collect()
}
