use ndarray::Array2;
use proptest::prelude::*;
use tractsynth::ingest::ColumnLayout;
use tractsynth::nn::{group_softmax_forward, Mode, ReparamMode};
use tractsynth::oracle::oracle_schema;
use tractsynth::vae::{from_bytes, to_bytes, VaeConfig, VaeModel};

fn small_model(seed: u64) -> VaeModel {
    let cfg = VaeConfig::mirrored(vec![8, 8, 6, 6, 4, 4], 3, ReparamMode::Standard);
    VaeModel::init(&oracle_schema(), cfg, seed).unwrap()
}

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-scale..scale, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn group_softmax_lies_on_simplexes(x in matrix(5, 38, 40.0)) {
        let layout = ColumnLayout::new(&oracle_schema()).unwrap();
        let groups = layout.group_ranges();
        let y = group_softmax_forward(&x, &groups).unwrap();
        prop_assert!(y.iter().all(|&v| v > 0.0));
        for row in y.rows() {
            for g in &groups {
                let s: f64 = row.slice(ndarray::s![g.clone()]).sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn decode_is_pure_and_on_simplexes(seed in 0u64..1000, z in matrix(6, 3, 3.0)) {
        let model = small_model(seed);
        let a = model.decode(&z, Mode::Eval).unwrap();
        let b = model.decode(&z, Mode::Eval).unwrap();
        prop_assert_eq!(&a, &b);
        let train_a = model.decode(&z, Mode::Train).unwrap();
        prop_assert_eq!(train_a, model.decode(&z, Mode::Train).unwrap());
        let layout = ColumnLayout::new(&oracle_schema()).unwrap();
        for row in a.rows() {
            for g in layout.group_ranges() {
                let s: f64 = row.slice(ndarray::s![g]).sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn encode_eval_is_pure(seed in 0u64..1000, x in matrix(4, 38, 1.0)) {
        let model = small_model(seed);
        prop_assert_eq!(model.encode(&x, Mode::Eval).unwrap(), model.encode(&x, Mode::Eval).unwrap());
    }

    #[test]
    fn persistence_is_bit_exact(seed in 0u64..1000, x in matrix(4, 38, 1.0)) {
        let mut model = small_model(seed);
        // move the running statistics off their initial values
        let (_, _, tape) = model.encode_with_tape(&x, Mode::Train).unwrap();
        let (_, dtape) = model.decode_with_tape(&Array2::ones((4, 3)), Mode::Train).unwrap();
        model.commit_running_stats(&tape, &dtape);
        let bytes = to_bytes(&model);
        let back = from_bytes(&bytes, &oracle_schema()).unwrap();
        prop_assert_eq!(to_bytes(&back), bytes);
        prop_assert_eq!(back, model);
    }
}
