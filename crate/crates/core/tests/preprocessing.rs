mod common;

use flowclass_core::dataset::{
    read_csv, split_indices, train_test_split, FeatureSchema, NormalizationParams,
};
use flowclass_core::Matrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn normalized_values_in_unit_interval(
        rows in 2usize..30,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut r = common::rng(seed);
        use rand::Rng;
        let mut data: Vec<f64> = (0..rows * cols).map(|_| r.random_range(-1e3..1e3)).collect();
        // make column 0 constant
        for i in 0..rows { data[i * cols] = 7.5; }
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let norm = NormalizationParams::fit_matrix(&x).unwrap();
        let y = norm.apply_matrix(&x).unwrap();
        prop_assert!(y.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(y.column(0).iter().all(|&v| v == 0.0));
        for j in 1..cols {
            let col = x.column(j);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if lo < hi {
                for (i, &v) in col.iter().enumerate() {
                    if v == lo { prop_assert_eq!(y.get(i, j), 0.0); }
                    if v == hi { prop_assert_eq!(y.get(i, j), 1.0); }
                }
            }
        }
        // unseen values are clipped
        let probe = Matrix::from_vec(1, cols, vec![1e9; cols]).unwrap();
        prop_assert!(norm.apply_matrix(&probe).unwrap().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn split_is_a_seeded_partition(n in 2usize..500, f in 0.05f64..0.95, seed in any::<u64>()) {
        let expected_train = (n as f64 * f).floor() as usize;
        prop_assume!(expected_train >= 1 && expected_train < n);
        let (a, b) = split_indices(n, f, seed).unwrap();
        prop_assert_eq!(a.len(), expected_train);
        prop_assert_eq!(a.len() + b.len(), n);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, f, seed).unwrap(), (a, b));
    }
}

#[test]
fn moore_sized_split() {
    let (a, b) = split_indices(324_277, 0.7, 0).unwrap();
    assert_eq!((a.len(), b.len()), (226_993, 97_284));
}

#[test]
fn csv_round_trip_through_split() {
    let schema = FeatureSchema::moore();
    let mut text = format!("{},class\n", schema.names().join(","));
    for i in 0..20 {
        let row: Vec<String> = (0..12).map(|j| (i * 12 + j).to_string()).collect();
        text.push_str(&format!(
            "{},{}\n",
            row.join(","),
            if i % 2 == 0 { "WWW" } else { "MAIL" }
        ));
    }
    let data = read_csv(text.as_bytes(), &schema).unwrap();
    assert_eq!(data.len(), 20);
    let (train, test) = train_test_split(&data, 0.7, 5).unwrap();
    assert_eq!((train.len(), test.len()), (14, 6));
    let bad = text.replace("avg_segment_size_c2s", "avg_seg");
    let err = read_csv(bad.as_bytes(), &schema).unwrap_err().to_string();
    assert!(err.contains("avg_segment_size_c2s"), "{err}");
}
