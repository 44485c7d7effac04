use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{clamp_prob, same_shape, LossGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    /// Weight of the positive (`t = 1`) term, in `[0, 1]`.
    pub alpha: f64,
    /// Modulation exponent, `≥ 0`.
    pub gamma: f64,
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("focal alpha must lie in [0, 1], got {alpha}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("focal gamma must be non-negative, got {gamma}")));
        }
        Ok(FocalParams { alpha, gamma })
    }
}

/// Fraction of zero entries; the default focal alpha for one-hot data.
pub fn zero_fraction(x: &Array2<f64>) -> f64 {
    if x.is_empty() {
        return 0.5;
    }
    x.iter().filter(|&&v| v == 0.0).count() as f64 / x.len() as f64
}

/// `−(1/N)·Σ [α·t·(1−p)^γ·ln p + (1−α)·(1−t)·p^γ·ln(1−p)]`, `p` clamped.
pub fn focal_loss(pred: &Array2<f64>, target: &Array2<f64>, params: FocalParams) -> Result<LossGrad> {
    same_shape(pred, target, "focal")?;
    let FocalParams { alpha, gamma } = FocalParams::new(params.alpha, params.gamma)?;
    let n = pred.nrows().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let (pc, inside) = clamp_prob(p);
        let q = 1.0 - pc;
        let (lp, lq) = (pc.ln(), q.ln());
        let pos = alpha * t;
        let neg = (1.0 - alpha) * (1.0 - t);
        total += pos * q.powf(gamma) * lp + neg * pc.powf(gamma) * lq;
        // d/dp of the bracket, before the leading minus
        let d_pos = if gamma == 0.0 {
            1.0 / pc
        } else {
            -gamma * q.powf(gamma - 1.0) * lp + q.powf(gamma) / pc
        };
        let d_neg = if gamma == 0.0 {
            -1.0 / q
        } else {
            gamma * pc.powf(gamma - 1.0) * lq - pc.powf(gamma) / q
        };
        *g = -inside * (pos * d_pos + neg * d_neg) / n;
    });
    Ok(LossGrad {
        value: -total / n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::bce_loss;
    use ndarray::array;

    #[test]
    fn gamma_zero_half_alpha_is_half_bce() {
        let p = array![[0.3, 0.7, 0.05], [0.9, 0.1, 0.5]];
        let t = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        let f = focal_loss(&p, &t, FocalParams::new(0.5, 0.0).unwrap()).unwrap();
        let b = bce_loss(&p, &t).unwrap();
        assert!((f.value - 0.5 * b.value).abs() <= 1e-12 * b.value);
    }

    #[test]
    fn hand_evaluated_entry() {
        let f = focal_loss(&array![[0.9]], &array![[1.0]], FocalParams::new(0.25, 2.0).unwrap()).unwrap();
        let expected = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
        assert!((f.value - expected).abs() < 1e-15);
        assert!((f.value - 2.634e-4).abs() < 1e-7);
    }

    #[test]
    fn well_classified_entries_vanish_faster_than_bce() {
        let params = FocalParams::new(0.5, 2.0).unwrap();
        let mut prev_ratio = f64::INFINITY;
        for p in [0.9, 0.99, 0.999] {
            let f = focal_loss(&array![[p]], &array![[1.0]], params).unwrap().value;
            let b = bce_loss(&array![[p]], &array![[1.0]]).unwrap().value;
            let ratio = f / b;
            assert!(ratio < prev_ratio);
            prev_ratio = ratio;
        }
        assert!(prev_ratio < 1e-5);
    }

    #[test]
    fn invalid_params() {
        assert!(FocalParams::new(1.5, 2.0).is_err());
        assert!(FocalParams::new(0.5, -1.0).is_err());
    }

    #[test]
    fn alpha_from_zero_ratio() {
        let x = array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        assert_eq!(zero_fraction(&x), 0.75);
    }
}
