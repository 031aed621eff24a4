mod common;

use descentlab::datagen::{
    apply_feature_noise, build_scenario, inject_anomalies, make_shifted_projection, sample_latents, sample_projection,
    theta_sample_noise, AnomalySpec, Dataset, NoiseMode, NoiseSpec, SampleFlag, Scenario, Split, SubspaceSpec,
};
use ndarray::Array2;
use proptest::prelude::*;

fn energy(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn clean_rows(d: usize, n: usize, rows: usize, seed: u64, theta: f64) -> Array2<f64> {
    let spec = SubspaceSpec::new(d, n, rows, 1, seed).unwrap();
    let proj = sample_projection(&spec, 0).unwrap();
    proj.project(&sample_latents(&spec, Split::Train).unwrap()).unwrap() * theta
}

#[test]
fn sample_noise_snr_is_calibrated() {
    for (db, d) in [(-15.0, 10), (0.0, 4), (6.0, 30)] {
        let got = common::monte_carlo_snr_db(db, d, 50, 20_000, 100, 3);
        assert!((got - db).abs() < 0.5, "snr {db} dB, d {d}: measured {got:.3}");
    }
}

#[test]
fn feature_noise_snr_is_calibrated() {
    for (db, p) in [(-10.0, 0.2), (-2.0, 0.5), (0.0, 0.9)] {
        let (d, n) = (20, 50);
        let noise = NoiseSpec::new(NoiseMode::Feature, p, db, d).unwrap();
        let (mut sig, mut added) = (0.0, 0.0);
        for seed in 0..50 {
            let clean = clean_rows(d, n, 400, seed, noise.theta);
            let noisy = apply_feature_noise(&Dataset::clean(clean.clone()), &noise, seed).unwrap();
            sig += energy(&clean);
            added += energy(&(&noisy.samples - &clean));
            let mask = noisy.noisy_feature_mask.unwrap();
            assert_eq!(mask.iter().filter(|&&m| m).count(), (n as f64 * p + 1e-9).floor() as usize);
        }
        let measured = 10.0 * (sig / added).log10();
        assert!((measured - db).abs() < 0.5, "p {p}: measured {measured:.3}");
    }
}

#[test]
fn anomaly_sar_is_calibrated() {
    let (d, n, db) = (20, 50, -15.0);
    let spec = AnomalySpec::new(0.3, db, d).unwrap();
    let (mut sig, mut anom) = (0.0, 0.0);
    for seed in 0..50 {
        let clean = clean_rows(d, n, 400, seed, spec.theta);
        let out = inject_anomalies(&Dataset::clean(clean.clone()), &spec, seed).unwrap();
        let anomalous: Vec<usize> = (0..out.len()).filter(|&i| out.flags[i] == SampleFlag::Anomaly).collect();
        assert_eq!(anomalous.len(), 120);
        sig += anomalous.iter().map(|&i| clean.row(i).dot(&clean.row(i))).sum::<f64>();
        anom += anomalous.iter().map(|&i| out.samples.row(i).dot(&out.samples.row(i))).sum::<f64>();
    }
    let measured = 10.0 * (sig / anom).log10();
    assert!((measured - db).abs() < 0.5, "measured {measured:.3}");
}

#[test]
fn shifted_projection_keeps_signal_energy() {
    let (d, n) = (50, 200);
    let spec = SubspaceSpec::new(d, n, 5_000, 1, 2).unwrap();
    let base = sample_projection(&spec, 0).unwrap();
    let z = sample_latents(&spec, Split::Train).unwrap();
    let e0 = energy(&base.project(&z).unwrap());
    for s in [1.0, 2.0, 4.0] {
        let shifted = make_shifted_projection(&base, s, 2).unwrap();
        let e = energy(&shifted.project(&z).unwrap());
        let db = 10.0 * (e / e0).log10();
        assert!(db.abs() < 0.5, "shift {s}: energy ratio {db:.3} dB");
    }
}

#[test]
fn domain_shift_test_drifts_further_with_larger_shift() {
    let spec = SubspaceSpec::new(5, 20, 10, 200, 4).unwrap();
    let base = sample_projection(&spec, 0).unwrap();
    let mut last = 0.0;
    for s in [0.5, 1.0, 2.0, 4.0] {
        let shifted = make_shifted_projection(&base, s, 4).unwrap();
        let dist = energy(&(shifted.entries() - base.entries()));
        assert!(dist > last);
        last = dist;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scenarios_are_prefix_stable(seed in 0u64..1000, small in 5usize..60) {
        let big = SubspaceSpec::new(3, 8, 60, 10, seed).unwrap();
        let little = SubspaceSpec::new(3, 8, small, 10, seed).unwrap();
        let sc = Scenario::SampleNoise { probability: 0.5, snr_db: -5.0 };
        let a = build_scenario(&big, &sc).unwrap();
        let b = build_scenario(&little, &sc).unwrap();
        let prefix = a.train.prefix(small).unwrap();
        prop_assert_eq!(&prefix.samples, &b.train.samples);
        prop_assert_eq!(&prefix.flags, &b.train.flags);
        prop_assert_eq!(&a.test.samples, &b.test.samples);
    }

    #[test]
    fn generation_is_a_pure_function_of_the_seed(seed in any::<u64>()) {
        let spec = SubspaceSpec::new(3, 8, 20, 10, seed).unwrap();
        let sc = Scenario::DomainShift { shift: 2.0, noise_probability: 0.3, snr_db: Some(-5.0) };
        let a = build_scenario(&spec, &sc).unwrap();
        let b = build_scenario(&spec, &sc).unwrap();
        prop_assert_eq!(a.train.samples, b.train.samples);
        prop_assert_eq!(a.test.samples, b.test.samples);
        prop_assert!(a.test.batch_label.iter().all(|&l| l == 1));
    }

    #[test]
    fn csv_export_round_trips(seed in any::<u64>()) {
        let spec = SubspaceSpec::new(2, 5, 12, 4, seed).unwrap();
        let sc = Scenario::Anomaly { probability: 0.25, sar_db: -3.0 };
        let data = build_scenario(&spec, &sc).unwrap();
        let mut buf = Vec::new();
        data.train.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.samples, data.train.samples.clone());
        prop_assert_eq!(back.flags, data.train.flags.clone());
    }
}

#[test]
fn theta_never_depends_on_probability_for_sample_noise() {
    for p in [0.1, 0.5, 0.9] {
        let spec = NoiseSpec::new(NoiseMode::Sample, p, -15.0, 20).unwrap();
        assert_eq!(spec.theta, theta_sample_noise(-15.0, 20).unwrap());
    }
}
