mod common;

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use tractsynth::ingest::{empirical_marginals, restructure, ColumnLayout};
use tractsynth::losses::{bce_loss, dbce, focal_loss, marginal_rmse_loss, FocalParams};
use tractsynth::nn::group_softmax_forward;
use tractsynth::oracle::{oracle_schema, sample_microdata, OracleParams};

use common::*;

fn probs(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(0.0..=1.0f64, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn binary(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(prop::bool::ANY, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v.into_iter().map(|b| b as u8 as f64).collect()).unwrap())
}

fn permuted(x: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    x.select(Axis(0), perm)
}

fn perm(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn focal_reduces_to_half_bce(p in probs(3, 7), t in binary(3, 7)) {
        let f = focal_loss(&p, &t, FocalParams::new(0.5, 0.0).unwrap()).unwrap();
        let b = bce_loss(&p, &t).unwrap();
        prop_assert!((f.value - 0.5 * b.value).abs() <= 1e-12 * b.value.abs().max(1.0));
        for (gf, gb) in f.grad.iter().zip(&b.grad) {
            prop_assert!((gf - 0.5 * gb).abs() <= 1e-12 * gb.abs().max(1.0));
        }
    }

    #[test]
    fn dbce_is_row_permutation_invariant(
        gen in probs(5, 6),
        micro in binary(7, 6),
        pg in perm(5),
        pm in perm(7),
        tau in 0.05..2.0f64,
    ) {
        let a = dbce(&gen, &micro, tau).unwrap();
        let b = dbce(&permuted(&gen, &pg), &permuted(&micro, &pm), tau).unwrap();
        prop_assert!((a.dbce_loss - b.dbce_loss).abs() <= 1e-12);
        prop_assert!((a.norm_kl - b.norm_kl).abs() <= 1e-12);
        for (k, &j) in pm.iter().enumerate() {
            prop_assert!((b.soft_index[k] - a.soft_index[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn soft_index_mass_and_norm_kl(gen in probs(6, 5), micro in binary(4, 5), tau in 0.01..2.0f64) {
        let r = dbce(&gen, &micro, tau).unwrap();
        let total: f64 = r.soft_index.iter().sum();
        prop_assert!((total - 6.0).abs() <= 1e-6);
        prop_assert!(r.norm_kl >= -1e-12);
        let uniform = r.soft_index.iter().all(|s| (s / 6.0 - 0.25).abs() <= 1e-9);
        if uniform {
            prop_assert!(r.norm_kl <= 1e-9);
        } else if r.soft_index.iter().any(|s| (s / 6.0 - 0.25).abs() > 1e-3) {
            prop_assert!(r.norm_kl > 0.0);
        }
    }

    #[test]
    fn dbce_matches_double_loop(gen in probs(4, 9), micro in binary(5, 9), tau in 0.1..1.0f64) {
        let lib = dbce(&gen, &micro, tau).unwrap();
        let brute = brute_dbce(&gen, &micro, tau, tractsynth::losses::KL_EPSILON);
        prop_assert!((lib.dbce_loss - brute.loss).abs() <= 1e-9 * brute.loss.max(1.0));
        prop_assert!((lib.norm_kl - brute.norm_kl).abs() <= 1e-9 * brute.norm_kl.max(1.0));
    }

    #[test]
    fn marginal_loss_ignores_row_order(logits in prop::collection::vec(-3.0..3.0f64, 6 * 38), p in perm(6), seed in 0u64..100) {
        let schema = oracle_schema();
        let layout = ColumnLayout::new(&schema).unwrap();
        let x = Array2::from_shape_vec((6, 38), logits).unwrap();
        let probs = group_softmax_forward(&x, &layout.group_ranges()).unwrap();
        let target = empirical_marginals(&restructure(&sample_microdata(&OracleParams::shifted(), 30, seed), &schema).unwrap()).unwrap();
        let a = marginal_rmse_loss(&probs, &target, &layout).unwrap();
        let b = marginal_rmse_loss(&permuted(&probs, &p), &target, &layout).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12);
    }

    #[test]
    fn loss_gradients_match_differences(p in prop::collection::vec(0.05..0.95f64, 12), t in binary(2, 6), gamma in 0.0..3.0f64, alpha in 0.0..=1.0f64) {
        let pred = Array2::from_shape_vec((2, 6), p.clone()).unwrap();
        let fp = FocalParams::new(alpha, gamma).unwrap();
        let g = focal_loss(&pred, &t, fp).unwrap().grad;
        let f = |v: &[f64]| focal_loss(&Array2::from_shape_vec((2, 6), v.to_vec()).unwrap(), &t, fp).unwrap().value;
        prop_assert!(fd_max_rel_error(f, &p, g.as_slice().unwrap(), 1e-5, 1e-4).0 <= 1e-4);
        let g = bce_loss(&pred, &t).unwrap().grad;
        let f = |v: &[f64]| bce_loss(&Array2::from_shape_vec((2, 6), v.to_vec()).unwrap(), &t).unwrap().value;
        prop_assert!(fd_max_rel_error(f, &p, g.as_slice().unwrap(), 1e-5, 1e-4).0 <= 1e-4);
    }
}

#[test]
fn finite_difference_checker_catches_a_wrong_gradient() {
    let f = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let (err, idx) = fd_max_rel_error(f, &[1.0, 2.0], &[2.0, 4.4], 1e-5, 1e-4);
    assert!(err > 0.05);
    assert_eq!(idx, 1);
}
