use proptest::prelude::*;
use tractsynth::ingest::{
    decode_onehot, empirical_marginals, encode_onehot, restructure, DecodeMode, HouseholdRecord, Microdata,
};
use tractsynth::oracle::oracle_schema;

/// Oracle-schema microdata with 1..=3 persons per household and no NA anchors.
fn microdata() -> impl Strategy<Value = Microdata> {
    let person = (0usize..2, 0usize..6).prop_map(|(s, a)| vec![s, a]);
    let household = ((0usize..2, 0usize..4, 0usize..2), prop::collection::vec(person, 1..=3));
    prop::collection::vec(household, 1..40).prop_map(|hs| Microdata {
        households: hs
            .into_iter()
            .enumerate()
            .map(|(i, ((t, v, r), persons))| HouseholdRecord {
                id: format!("h{i}"),
                values: vec![t, v, r],
                persons,
            })
            .collect(),
    })
}

proptest! {
    #[test]
    fn restructure_preserves_person_multiset(md in microdata()) {
        let schema = oracle_schema();
        let table = restructure(&md, &schema).unwrap();
        let mut flat: Vec<(String, Vec<usize>, Vec<usize>)> = table.flatten();
        let mut source: Vec<(String, Vec<usize>, Vec<usize>)> = md
            .households
            .iter()
            .flat_map(|h| h.persons.iter().map(move |p| (h.id.clone(), h.values.clone(), p.clone())))
            .collect();
        flat.sort();
        source.sort();
        prop_assert_eq!(flat, source);
    }

    #[test]
    fn onehot_codec_is_identity(md in microdata()) {
        let table = restructure(&md, &oracle_schema()).unwrap();
        let enc = encode_onehot(&table).unwrap();
        let (back, _) = decode_onehot(&enc, DecodeMode::Argmax, 0).unwrap();
        prop_assert_eq!(&back, &table);
        prop_assert_eq!(empirical_marginals(&back).unwrap(), empirical_marginals(&table).unwrap());
    }

    #[test]
    fn encoded_rows_have_one_hot_per_group(md in microdata()) {
        let enc = encode_onehot(&restructure(&md, &oracle_schema()).unwrap()).unwrap();
        let groups = enc.layout.groups.len() as f64;
        for row in enc.values.rows() {
            prop_assert_eq!(row.sum(), groups);
            for g in &enc.layout.groups {
                let block = row.slice(ndarray::s![g.range()]);
                prop_assert_eq!(block.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert!(block.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }
}
