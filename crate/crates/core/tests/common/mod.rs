#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tractsynth::ingest::{load_microdata, Microdata};
use tractsynth::oracle::oracle_schema;

pub const FLOOR: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(FLOOR, 1.0 - FLOOR)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn sanity_fixture() -> Microdata {
    load_microdata(
        fixture("sanity_households.csv"),
        fixture("sanity_persons.csv"),
        &oracle_schema(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows of independent one-hot blocks with the given group widths.
pub fn random_onehot(rng: &mut ChaCha8Rng, rows: usize, groups: &[usize]) -> Array2<f64> {
    let width: usize = groups.iter().sum();
    let mut x = Array2::zeros((rows, width));
    for i in 0..rows {
        let mut off = 0;
        for &g in groups {
            x[[i, off + rng.random_range(0..g)]] = 1.0;
            off += g;
        }
    }
    x
}

pub fn random_probs(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(lo..hi))
}

/// Plain BCE between two rows, averaged over columns.
pub fn pair_bce(p: &[f64], x: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(x)
        .map(|(&p, &t)| {
            let p = clamp(p);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    -s / p.len() as f64
}

pub struct BruteDbce {
    pub loss: f64,
    pub norm_kl: f64,
    pub soft_index: Vec<f64>,
}

/// Double loop over generated and reference rows, written without any of
/// the library's kernels.
pub fn brute_dbce(gen: &Array2<f64>, micro: &Array2<f64>, tau: f64, eps: f64) -> BruteDbce {
    let (nt, n) = (gen.nrows(), micro.nrows());
    let mut soft_index = vec![0.0; n];
    let mut loss = 0.0;
    for i in 0..nt {
        let p: Vec<f64> = gen.row(i).to_vec();
        let mut b = vec![0.0; n];
        for j in 0..n {
            let x: Vec<f64> = micro.row(j).to_vec();
            b[j] = pair_bce(&p, &x);
        }
        let mut w = vec![0.0; n];
        let mut z = 0.0;
        for j in 0..n {
            // shift-free softmax; inputs are small enough here
            w[j] = (-b[j] / tau).exp();
            z += w[j];
        }
        let mut m = 0.0;
        for j in 0..n {
            w[j] /= z;
            m += w[j] * b[j];
            soft_index[j] += w[j];
        }
        loss += m;
    }
    loss /= nt as f64;
    let mut norm_kl = 0.0;
    for &s in &soft_index {
        let u = 1.0 / n as f64 + eps;
        norm_kl += u * (u / (s / nt as f64 + eps)).ln();
    }
    BruteDbce {
        loss,
        norm_kl,
        soft_index,
    }
}

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-5;

fn central<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &mut [f64], i: usize, h: f64) -> f64 {
    let o = x[i];
    x[i] = o + h;
    let up = f(x);
    x[i] = o - h;
    let dn = f(x);
    x[i] = o;
    (up - dn) / (2.0 * h)
}

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR)
}

/// Largest relative error between `grad` and central differences of `f`.
/// A coordinate above `tol` is measured again with step `h/10`, since a ReLU
/// boundary inside the first step invalidates that difference.
pub fn fd_max_rel_error<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64], grad: &[f64], h: f64, tol: f64) -> (f64, usize) {
    let mut x = point.to_vec();
    let mut worst = (0.0, 0);
    for i in 0..x.len() {
        let mut err = rel(grad[i], central(&mut f, &mut x, i, h));
        if err > tol {
            err = rel(grad[i], central(&mut f, &mut x, i, h / 10.0));
        }
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}
