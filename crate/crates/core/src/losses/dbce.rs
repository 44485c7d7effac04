//! Decoupled binary cross-entropy.
//!
//! Each generated row is scored against a soft minimum over all microdata
//! rows rather than a fixed partner row. For generated row `i`:
//!
//! ```text
//! bce_i[j]    = per-column-mean BCE of x̂_i against x_j
//! softIndex_i = softmin(bce_i, τ)
//! softmin_i   = ⟨softIndex_i, bce_i⟩
//! ```
//!
//! The loss is the mean of `softmin_i`; `soft_index = Σ_i softIndex_i`
//! and the diversity penalty is `KL(uniform(N) ‖ soft_index / N_t)`.
//! Gradients flow through both the BCE values and the soft weights.

use ndarray::{Array1, Array2};

use super::kl::{smoothed_kl, smoothed_kl_grad, KL_EPSILON};
use super::clamp_prob;
use crate::error::{Error, Result};
use crate::par::{map_indexed, Exec};

/// `softmax(−values/τ)`.
pub fn softmin(values: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("softmin temperature must be positive, got {temperature}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmin input".into()));
    }
    Ok(softmin_unchecked(values, temperature))
}

fn softmin_unchecked(values: &[f64], temperature: f64) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = values.iter().map(|v| (-(v - min) / temperature).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbceResult {
    pub dbce_loss: f64,
    pub norm_kl: f64,
    /// Accumulated soft assignment per microdata row; sums to `N_t`.
    pub soft_index: Vec<f64>,
    pub per_row_softmin: Vec<f64>,
    pub grad_loss: Array2<f64>,
    pub grad_norm_kl: Array2<f64>,
}

/// Sparse view of the reference rows: `(column, value)` for nonzero entries.
fn nonzeros(x: &Array2<f64>) -> Vec<Vec<(usize, f64)>> {
    x.rows()
        .into_iter()
        .map(|r| r.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(c, &v)| (c, v)).collect())
        .collect()
}

/// Log terms of one generated row: `ln p − ln(1−p)`, `Σ ln(1−p)`, clamp mask.
pub(crate) struct RowLogs {
    logit: Vec<f64>,
    log_q_sum: f64,
    p: Vec<f64>,
    inside: Vec<f64>,
}

fn row_logs(row: ndarray::ArrayView1<f64>) -> RowLogs {
    let mut logit = Vec::with_capacity(row.len());
    let mut p = Vec::with_capacity(row.len());
    let mut inside = Vec::with_capacity(row.len());
    let mut log_q_sum = 0.0;
    for &v in row {
        let (pc, m) = clamp_prob(v);
        let lq = (1.0 - pc).ln();
        logit.push(pc.ln() - lq);
        log_q_sum += lq;
        p.push(pc);
        inside.push(m);
    }
    RowLogs {
        logit,
        log_q_sum,
        p,
        inside,
    }
}

/// Pairwise per-column-mean BCE of one generated row against every
/// reference row.
pub(crate) fn bce_row(logs: &RowLogs, refs: &[Vec<(usize, f64)>], d: f64) -> Vec<f64> {
    refs.iter()
        .map(|nz| {
            let mut s = logs.log_q_sum;
            for &(c, v) in nz {
                s += v * logs.logit[c];
            }
            -s / d
        })
        .collect()
}

/// Minimum per-column-mean BCE of each prediction row against all
/// reference rows.
pub(crate) fn min_bce_rows(pred: &Array2<f64>, reference: &Array2<f64>, exec: Exec) -> Vec<f64> {
    let refs = nonzeros(reference);
    let d = pred.ncols() as f64;
    map_indexed(pred.nrows(), exec, |i| {
        let logs = row_logs(pred.row(i));
        bce_row(&logs, &refs, d).into_iter().fold(f64::INFINITY, f64::min)
    })
}

pub fn dbce(generated: &Array2<f64>, microdata: &Array2<f64>, temperature: f64) -> Result<DbceResult> {
    dbce_with(generated, microdata, temperature, Exec::default())
}

pub fn dbce_with(generated: &Array2<f64>, microdata: &Array2<f64>, temperature: f64, exec: Exec) -> Result<DbceResult> {
    if generated.ncols() != microdata.ncols() {
        return Err(Error::shape(format!(
            "dbce: generated width {} vs microdata width {}",
            generated.ncols(),
            microdata.ncols()
        )));
    }
    if microdata.nrows() == 0 {
        return Err(Error::invalid("dbce: empty microdata"));
    }
    if generated.nrows() == 0 {
        return Err(Error::invalid("dbce: no generated rows"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("softmin temperature must be positive, got {temperature}")));
    }
    let n_t = generated.nrows();
    let n = microdata.nrows();
    let d = generated.ncols() as f64;
    let refs = nonzeros(microdata);

    // pass 1: pairwise BCE, soft weights and soft minimum per generated row
    let rows: Vec<(RowLogs, Vec<f64>, Vec<f64>, f64)> = map_indexed(n_t, exec, |i| {
        let logs = row_logs(generated.row(i));
        let b = bce_row(&logs, &refs, d);
        let s = softmin_unchecked(&b, temperature);
        let m: f64 = s.iter().zip(&b).map(|(a, c)| a * c).sum();
        (logs, b, s, m)
    });
    if rows.iter().any(|r| !r.3.is_finite()) {
        return Err(Error::NonFinite("dbce soft minimum".into()));
    }
    let mut soft_index = vec![0.0; n];
    for (_, _, s, _) in &rows {
        for (acc, v) in soft_index.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let per_row_softmin: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let dbce_loss = per_row_softmin.iter().sum::<f64>() / n_t as f64;
    let uniform = vec![1.0 / n as f64; n];
    let q: Vec<f64> = soft_index.iter().map(|v| v / n_t as f64).collect();
    let norm_kl = smoothed_kl(&uniform, &q, KL_EPSILON)?;
    let dkl_dq = smoothed_kl_grad(&uniform, &q, KL_EPSILON);

    // pass 2: pull both objectives back to the generated probabilities
    let grads: Vec<(Vec<f64>, Vec<f64>)> = map_indexed(n_t, exec, |i| {
        let (logs, b, s, m) = &rows[i];
        let gbar: f64 = s.iter().zip(&dkl_dq).map(|(a, g)| a * g).sum();
        let scale_loss = 1.0 / n_t as f64;
        let scale_kl = -1.0 / (n_t as f64 * temperature);
        let mut g_loss = vec![0.0; n];
        let mut g_kl = vec![0.0; n];
        for j in 0..n {
            g_loss[j] = scale_loss * s[j] * (1.0 - (b[j] - m) / temperature);
            g_kl[j] = scale_kl * s[j] * (dkl_dq[j] - gbar);
        }
        (
            pull_back(logs, &g_loss, &refs, d),
            pull_back(logs, &g_kl, &refs, d),
        )
    });
    let width = generated.ncols();
    let mut grad_loss = Array2::zeros((n_t, width));
    let mut grad_norm_kl = Array2::zeros((n_t, width));
    for (i, (gl, gk)) in grads.into_iter().enumerate() {
        grad_loss.row_mut(i).assign(&Array1::from(gl));
        grad_norm_kl.row_mut(i).assign(&Array1::from(gk));
    }
    Ok(DbceResult {
        dbce_loss,
        norm_kl,
        soft_index,
        per_row_softmin,
        grad_loss,
        grad_norm_kl,
    })
}

/// Given `G_j = ∂L/∂bce_i[j]`, returns `∂L/∂p_i`.
fn pull_back(logs: &RowLogs, g: &[f64], refs: &[Vec<(usize, f64)>], d: f64) -> Vec<f64> {
    let total: f64 = g.iter().sum();
    let mut a = vec![0.0; logs.p.len()];
    for (gj, nz) in g.iter().zip(refs) {
        for &(c, v) in nz {
            a[c] += gj * v;
        }
    }
    a.iter()
        .enumerate()
        .map(|(c, &ac)| {
            let p = logs.p[c];
            logs.inside[c] * (-ac / p + (total - ac) / (1.0 - p)) / d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::bce_loss;
    use ndarray::array;

    #[test]
    fn softmin_symmetric_and_sharp() {
        assert_eq!(softmin(&[1.0, 1.0], 3.0).unwrap(), vec![0.5, 0.5]);
        let w = softmin(&[0.0, 100.0], 1.0).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!((w[1] / (-100f64).exp() - 1.0).abs() < 1e-9);
        assert!(softmin(&[0.0], 0.0).is_err());
    }

    #[test]
    fn single_pair_is_plain_bce_per_column() {
        let p = array![[0.7, 0.3, 0.2, 0.8]];
        let x = array![[1.0, 0.0, 0.0, 1.0]];
        let r = dbce(&p, &x, 1.0).unwrap();
        let b = bce_loss(&p, &x).unwrap().value / 4.0;
        assert!((r.dbce_loss - b).abs() < 1e-14);
        assert_eq!(r.soft_index, vec![1.0]);
    }

    #[test]
    fn collapse_onto_one_row_penalized() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let p = array![[0.99, 0.01], [0.99, 0.01], [0.99, 0.01]];
        let r = dbce(&p, &x, 0.1).unwrap();
        assert!(r.soft_index[0] > 2.9);
        assert!(r.norm_kl > 0.1);
        assert!((r.soft_index.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn width_and_empty_errors() {
        assert!(dbce(&array![[0.5, 0.5]], &array![[1.0]], 1.0).is_err());
        assert!(dbce(&array![[0.5]], &Array2::zeros((0, 1)), 1.0).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let p = Array2::from_shape_fn((9, 6), |(i, j)| 0.1 + 0.8 * (((i * 5 + j * 3) % 7) as f64 / 7.0));
        let x = Array2::from_shape_fn((11, 6), |(i, j)| ((i + j) % 2) as f64);
        let a = dbce_with(&p, &x, 0.7, Exec::Sequential).unwrap();
        let b = dbce_with(&p, &x, 0.7, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
