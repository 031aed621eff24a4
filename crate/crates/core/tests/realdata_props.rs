use std::path::Path;

use descentlab::datagen::SampleFlag;
use descentlab::realdata::{
    apply_real_feature_noise, apply_real_sample_noise, column_variances, load_csv, read_csv, real_noise_vector,
    select_top_features, split_source_target, train_test_split, TabularDataset,
};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(seed: u64, rows: usize, cols: usize, batches: u32, labels: bool) -> TabularDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..cols).map(|_| rng.random_range(0.1..5.0)).collect();
    let matrix = Array2::from_shape_fn((rows, cols), |(_, j)| scales[j] * rng.random_range(-1.0..1.0));
    let batch_label: Vec<u32> = (0..rows).map(|i| (i as u32) % batches).collect();
    let batch_names = (0..batches).map(|b| format!("batch-{b}")).collect();
    let feature_names = (0..cols).map(|j| format!("g{j}")).collect();
    let flags = labels.then(|| (0..rows).map(|_| rng.random_bool(0.2)).collect());
    TabularDataset::new(matrix, feature_names, batch_names, batch_label, flags).unwrap()
}

fn brute_top(ds: &TabularDataset, k: usize) -> Vec<usize> {
    let n = ds.len() as f64;
    let var: Vec<f64> = (0..ds.n_features())
        .map(|j| {
            let col: Vec<f64> = ds.matrix.column(j).to_vec();
            let mean = col.iter().sum::<f64>() / n;
            col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let mut keep = Vec::new();
    for j in 0..var.len() {
        // Columns that beat j, counting ties at lower index as better.
        let better = (0..var.len())
            .filter(|&i| var[i] > var[j] || (var[i] == var[j] && i < j))
            .count();
        if better < k {
            keep.push(j);
        }
    }
    keep
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn top_features_match_brute_force(seed in any::<u64>(), k in 1usize..=10) {
        let ds = random_table(seed, 20, 10, 2, false);
        let top = select_top_features(&ds, k).unwrap();
        let want: Vec<String> = brute_top(&ds, k).iter().map(|&j| ds.feature_names[j].clone()).collect();
        prop_assert_eq!(&top.feature_names, &want);
        // Selecting again keeps the same columns.
        let again = select_top_features(&top, k).unwrap();
        prop_assert_eq!(again, top);
    }

    #[test]
    fn noise_norm_is_exact(seed in any::<u64>(), snr_db in -20.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = ndarray::Array1::from_shape_fn(15, |_| rng.random_range(-3.0..3.0));
        let y = real_noise_vector(x.view(), snr_db, &mut rng).unwrap().unwrap();
        let noise = &y - &x;
        let theta = 10f64.powf(snr_db / 20.0);
        let ratio = x.dot(&x).sqrt() / noise.dot(&noise).sqrt();
        prop_assert!((ratio - theta).abs() <= 1e-9 * theta);
    }

    #[test]
    fn export_then_ingest_is_bitwise(seed in any::<u64>(), labels in any::<bool>()) {
        let ds = random_table(seed, 15, 4, 3, labels);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, ';').unwrap();
        let back = read_csv(buf.as_slice(), &ds.export_schema(';'), Path::new("mem.csv")).unwrap();
        prop_assert_eq!(back.skipped(), 0);
        prop_assert_eq!(back.dataset, ds);
    }

    #[test]
    fn source_target_is_a_partition(seed in any::<u64>(), batches in 2u32..5) {
        let ds = random_table(seed, 30, 3, batches, false);
        let (src, targets) = split_source_target(&ds, 1).unwrap();
        let total = src.len() + targets.values().map(|t| t.len()).sum::<usize>();
        prop_assert_eq!(total, ds.len());
        prop_assert!(src.batch_label.iter().all(|&b| b == 1));
        for (b, t) in &targets {
            prop_assert!(*b != 1);
            prop_assert!(t.batch_label.iter().all(|l| l == b));
        }
    }

    #[test]
    fn train_test_is_a_partition(seed in any::<u64>(), n_train in 1usize..30) {
        let ds = random_table(seed, 30, 2, 1, false);
        let (tr, te) = train_test_split(&ds, n_train, seed).unwrap();
        prop_assert_eq!(tr.len(), n_train);
        let mut rows: Vec<u64> = tr.matrix.rows().into_iter().chain(te.matrix.rows())
            .map(|r| r[0].to_bits()).collect();
        let mut want: Vec<u64> = ds.matrix.column(0).iter().map(|v| v.to_bits()).collect();
        rows.sort_unstable();
        want.sort_unstable();
        prop_assert_eq!(rows, want);
    }
}

#[test]
fn sample_noise_rate_and_calibration() {
    let ds = random_table(4, 4000, 8, 1, false);
    let out = apply_real_sample_noise(&ds, 0.3, -5.0, 4).unwrap();
    let noisy: Vec<usize> = (0..ds.len())
        .filter(|&i| out.dataset.flags[i] == SampleFlag::Noisy)
        .collect();
    let rate = noisy.len() as f64 / ds.len() as f64;
    assert!((rate - 0.3).abs() < 0.03, "rate {rate}");
    let theta = 10f64.powf(-5.0 / 20.0);
    for &i in &noisy {
        let x = ds.matrix.row(i);
        let e = &out.dataset.samples.row(i) - &x;
        assert!((x.dot(&x).sqrt() / e.dot(&e).sqrt() - theta).abs() < 1e-9);
    }
    for i in (0..ds.len()).filter(|i| !noisy.contains(i)) {
        assert_eq!(out.dataset.samples.row(i), ds.matrix.row(i));
    }
}

#[test]
fn feature_noise_touches_only_masked_columns() {
    let ds = random_table(5, 50, 10, 1, false);
    let out = apply_real_feature_noise(&ds, 0.4, 0.0, 5).unwrap();
    let mask = out.dataset.noisy_feature_mask.clone().unwrap();
    assert_eq!(mask.iter().filter(|&&m| m).count(), 4);
    for i in 0..ds.len() {
        for j in 0..10 {
            let changed = out.dataset.samples[[i, j]] != ds.matrix[[i, j]];
            assert_eq!(changed, mask[j], "row {i} col {j}");
        }
    }
}

#[test]
fn variances_use_sample_denominator() {
    let ds = TabularDataset::from_matrix(ndarray::array![[1.0, 0.0], [3.0, 0.0]]);
    assert_eq!(column_variances(&ds), vec![2.0, 0.0]);
}

#[test]
fn loads_from_disk_with_skips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cells.csv");
    std::fs::write(&path, "a,b,batch\n1,2,x\n3,oops,y\n5,6,y\n").unwrap();
    let schema = descentlab::realdata::CsvSchema {
        batch_column: Some("batch".into()),
        strict: false,
        ..Default::default()
    };
    let rep = load_csv(&path, &schema).unwrap();
    assert_eq!(rep.skipped_lines, vec![3]);
    assert_eq!(rep.dataset.batch_names, vec!["x", "y"]);
    let strict = descentlab::realdata::CsvSchema { strict: true, ..schema };
    assert!(load_csv(&path, &strict).is_err());
}
