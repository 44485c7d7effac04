use proptest::prelude::*;
use tractsynth::eval::{
    chi_square_test, compare_marginals, dcr_table, joint_pair_metrics, kl_metric, rmse_metric, DcrLevel,
    METRIC_EPSILON,
};
use tractsynth::ingest::{empirical_marginals, restructure, RestructuredTable};
use tractsynth::oracle::{oracle_schema, sample_microdata, OracleParams};
use tractsynth::par::Exec;

fn proportions(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..1.0f64, len).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn table(seed: u64, n: usize) -> RestructuredTable {
    restructure(&sample_microdata(&OracleParams::baseline(), n, seed), &oracle_schema()).unwrap()
}

proptest! {
    #[test]
    fn rmse_is_symmetric(a in proportions(6), b in proportions(6)) {
        prop_assert_eq!(rmse_metric(&a, &b).unwrap(), rmse_metric(&b, &a).unwrap());
    }

    #[test]
    fn chi_square_of_own_proportions_is_one(counts in prop::collection::vec(0u32..500, 2..12)) {
        prop_assume!(counts.iter().filter(|&&c| c > 0).count() >= 2);
        let obs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let total: f64 = obs.iter().sum();
        let exp: Vec<f64> = obs.iter().map(|c| c / total).collect();
        prop_assert_eq!(chi_square_test(&obs, &exp).unwrap().p_value, 1.0);
    }

    #[test]
    fn metrics_ignore_row_order(seed in 0u64..500, shuffle_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = table(seed, 60);
        let r = table(seed + 1, 80);
        let mut b = a.clone();
        b.rows.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(shuffle_seed));
        let (ma, mb, mr) = (empirical_marginals(&a).unwrap(), empirical_marginals(&b).unwrap(), empirical_marginals(&r).unwrap());
        let schema = &a.schema;
        prop_assert_eq!(
            compare_marginals(schema, &ma, &mr, None, METRIC_EPSILON).unwrap(),
            compare_marginals(schema, &mb, &mr, None, METRIC_EPSILON).unwrap()
        );
        prop_assert_eq!(
            joint_pair_metrics(&a, &r, METRIC_EPSILON).unwrap(),
            joint_pair_metrics(&b, &r, METRIC_EPSILON).unwrap()
        );
        let mut da = dcr_table(&a, &r, DcrLevel::Household, Exec::Sequential).unwrap();
        let mut db = dcr_table(&b, &r, DcrLevel::Household, Exec::Sequential).unwrap();
        da.sort_by(f64::total_cmp);
        db.sort_by(f64::total_cmp);
        prop_assert_eq!(da, db);
    }

    #[test]
    fn self_comparisons_are_zero(seed in 0u64..500) {
        let t = table(seed, 50);
        let j = joint_pair_metrics(&t, &t, METRIC_EPSILON).unwrap();
        prop_assert!(j.pairs.iter().all(|p| p.rmse == 0.0 && p.kl == 0.0));
        for level in [DcrLevel::Household, DcrLevel::Person] {
            let d = dcr_table(&t, &t, level, Exec::default()).unwrap();
            prop_assert!(d.iter().all(|&x| x <= 1e-5));
        }
    }
}

#[test]
fn kl_is_directed() {
    let a = [0.7, 0.2, 0.1];
    let b = [0.2, 0.3, 0.5];
    let ab = kl_metric(&a, &b, METRIC_EPSILON).unwrap();
    let ba = kl_metric(&b, &a, METRIC_EPSILON).unwrap();
    assert!((ab - ba).abs() > 1e-3);
}
