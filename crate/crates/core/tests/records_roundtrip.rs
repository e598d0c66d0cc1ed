use proptest::prelude::*;
use topoexplain::records::{
    load_embeddings, load_records, write_embeddings, write_records, EmbeddingTable, PredictionRecord, RecordFormat,
    RecordSet,
};

fn record_set() -> impl Strategy<Value = RecordSet> {
    (1usize..6, 1usize..20).prop_flat_map(|(dim, n)| {
        prop::collection::vec(
            (
                0usize..5,
                0.0..=1.0_f64,
                0.0..=1.0_f64,
                prop::collection::vec("[a-z][a-z0-9_]{0,6}", 0..8),
                prop::collection::vec(-1e6..1e6_f64, dim),
            ),
            n,
        )
        .prop_map(|rows| {
            let records = rows
                .into_iter()
                .enumerate()
                .map(|(i, (label, p, t, tokens, embedding))| PredictionRecord {
                    id: format!("r{i}"),
                    label,
                    mean_pred_conf: p,
                    mean_truth_conf: t,
                    tokens,
                    embedding,
                })
                .collect();
            RecordSet::infer_classes(records).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(set in record_set()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, &set, RecordFormat::Csv).unwrap();
        prop_assert_eq!(load_records(&path, RecordFormat::Csv).unwrap(), set);
    }

    #[test]
    fn jsonl_round_trip(set in record_set()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_records(&path, &set, RecordFormat::Jsonl).unwrap();
        prop_assert_eq!(load_records(&path, RecordFormat::Jsonl).unwrap(), set);
    }

    #[test]
    fn embedding_round_trip(rows in prop::collection::btree_map("[a-z]{1,8}", prop::collection::vec(-1e3..1e3_f64, 3), 1..30)) {
        let table = EmbeddingTable::from_pairs(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        write_embeddings(&path, &table).unwrap();
        prop_assert_eq!(load_embeddings(&path).unwrap(), table);
    }
}
