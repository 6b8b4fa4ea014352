mod common;

use birthrisk::domain::{FeatureKind, Value};
use birthrisk::ingest::{apply_imputer, encode, fit_imputer, select_features, Dataset, Encoding, FeatureSubset};
use birthrisk::model::ModelSpec;
use birthrisk::sampling::{grid_search, resample_indices, stratified_kfold, SampleRatio};
use birthrisk::synth::{default_config, generate, GeneratorConfig};
use common::labels;
use proptest::prelude::*;

fn small_dataset(n: usize, seed: u64) -> Dataset {
    let cfg = GeneratorConfig { target_rate: 0.05, n_probe: 20_000, ..default_config() };
    generate(n, &cfg, seed).unwrap().dataset
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn imputing_twice_changes_nothing(seed: u64) {
        let ds = small_dataset(400, seed);
        let imp = fit_imputer(&ds).unwrap();
        let once = apply_imputer(&ds, &imp).unwrap();
        let twice = apply_imputer(&once, &imp).unwrap();
        prop_assert_eq!(once.records(), twice.records());
        prop_assert_eq!(once.missing_count(), 0);
    }

    #[test]
    fn encoding_is_deterministic_and_one_hot(seed: u64) {
        let ds = small_dataset(300, seed);
        let filled = apply_imputer(&ds, &fit_imputer(&ds).unwrap()).unwrap();
        let (a, ya) = encode(&filled).unwrap();
        let (b, yb) = encode(&filled).unwrap();
        let bits = |m: &birthrisk::ingest::FeatureMatrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(ya, yb);
        for spec in ds.schema().features().iter().filter(|f| f.kind == FeatureKind::Categorical) {
            let block: Vec<usize> = a
                .columns()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.source == spec.name && matches!(c.encoding, Encoding::OneHot(_)))
                .map(|(j, _)| j)
                .collect();
            prop_assert_eq!(block.len(), spec.categories.len());
            for i in 0..a.n_rows() {
                prop_assert_eq!(block.iter().map(|&j| a.get(i, j)).sum::<f64>(), 1.0);
            }
        }
        prop_assert_eq!(select_features(&a, FeatureSubset::All).unwrap(), a);
    }

    #[test]
    fn resampling_keeps_minority_and_caps_majority(
        y in proptest::collection::vec(0u8..2, 2..500),
        seed: u64,
    ) {
        let yl = labels(&y);
        prop_assume!(yl.positives() > 0 && yl.negatives() > 0);
        for ratio in SampleRatio::ALL {
            let idx = resample_indices(&yl, ratio, seed).unwrap();
            let mut minority: Vec<usize> = idx.iter().copied().filter(|&i| y[i] == 1).collect();
            minority.sort_unstable();
            let all_minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
            prop_assert_eq!(&minority, &all_minority);
            let majority = idx.len() - minority.len();
            if ratio == SampleRatio::OneToTen && yl.negatives() < 10 * yl.positives() {
                prop_assert_eq!(majority, yl.negatives());
            }
        }
    }
}

#[test]
fn grid_table_has_one_entry_per_point_and_fold() {
    let ds = small_dataset(2_000, 5);
    let filled = apply_imputer(&ds, &fit_imputer(&ds).unwrap()).unwrap();
    let (m, y) = encode(&filled).unwrap();
    let m = select_features(&m, FeatureSubset::Bwap).unwrap();
    let plan = stratified_kfold(&y, 4, 8).unwrap();
    let grid = vec![
        ModelSpec::Ridge { alpha: 0.1 },
        ModelSpec::Ridge { alpha: 10.0 },
        ModelSpec::Gnb { var_smoothing: 1e-9 },
    ];
    let result = grid_search(&grid, &m, &y, &plan, 0.05, 1).unwrap();
    assert_eq!(result.rows.len(), grid.len());
    for row in &result.rows {
        assert_eq!(row.fold_recalls.len(), plan.k);
        let mean = row.fold_recalls.iter().sum::<f64>() / plan.k as f64;
        assert!((row.mean_recall.unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn imputer_fills_are_values_not_gaps() {
    let ds = small_dataset(500, 6);
    let imp = fit_imputer(&ds).unwrap();
    assert!(imp.fills().iter().all(|v| !matches!(v, Value::Missing)));
}
