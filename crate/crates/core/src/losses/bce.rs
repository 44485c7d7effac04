use ndarray::{Array2, Zip};

use super::{clamp_prob, same_shape, LossGrad};
use crate::error::Result;

/// Row-averaged binary cross-entropy summed over columns:
/// `−(1/N)·Σ [t·ln p + (1−t)·ln(1−p)]` with `p` clamped.
pub fn bce_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<LossGrad> {
    same_shape(pred, target, "bce")?;
    let n = pred.nrows().max(1) as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let (pc, inside) = clamp_prob(p);
        total += t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        *g = -inside * (t / pc - (1.0 - t) / (1.0 - pc)) / n;
    });
    Ok(LossGrad {
        value: -total / n,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_reconstruction_is_near_zero() {
        let t = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(bce_loss(&t, &t).unwrap().value <= 1e-5);
    }

    #[test]
    fn hand_evaluated_pair() {
        let l = bce_loss(&array![[0.8, 0.2]], &array![[1.0, 0.0]]).unwrap();
        let expected = -(0.8f64.ln() + 0.8f64.ln());
        assert!((l.value - expected).abs() < 1e-12);
        assert!((l.value - 0.4463).abs() < 1e-4);
    }

    #[test]
    fn uniform_half_is_d_ln2() {
        let d = 7;
        let l = bce_loss(&Array2::from_elem((1, d), 0.5), &Array2::from_shape_fn((1, d), |(_, j)| (j % 2) as f64)).unwrap();
        assert!((l.value - d as f64 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        assert!(bce_loss(&array![[0.5]], &array![[1.0, 0.0]]).is_err());
    }
}
