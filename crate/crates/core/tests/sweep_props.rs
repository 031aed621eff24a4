mod common;

use descentlab::datagen::{Scenario, SubspaceSpec};
use descentlab::neuralnet::{Activation, TrainConfig};
use descentlab::sweep::{
    mean_stderr, run_epoch_wise, run_model_wise, run_sample_wise, run_sweep, CurveTable, DataSource, SweepAxis,
    SweepSpec,
};

fn small(axis: SweepAxis, seeds: Vec<u64>) -> SweepSpec {
    SweepSpec {
        source: DataSource::Synthetic {
            spec: SubspaceSpec::new(3, 10, 80, 60, 0).unwrap(),
            scenario: Scenario::SampleNoise {
                probability: 0.6,
                snr_db: -5.0,
            },
        },
        axis,
        hidden_dim: 8,
        bottleneck_dim: 4,
        activation: Activation::Relu,
        train: TrainConfig {
            epochs: 4,
            eval_period: 4,
            ..TrainConfig::synthetic(0)
        },
        seeds,
        record_embeddings: false,
    }
}

fn curve_bytes(c: &CurveTable) -> Vec<u8> {
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn parallelism_does_not_change_results() {
    let spec = small(SweepAxis::HiddenDim(vec![2, 6, 10, 14]), vec![0, 1, 2]);
    let base = run_model_wise(&spec, 1).unwrap();
    for p in [2, 8] {
        let other = run_model_wise(&spec, p).unwrap();
        assert_eq!(curve_bytes(&other.curve), curve_bytes(&base.curve), "parallelism {p}");
        assert_eq!(common::runs_rows_without_wall(&other), common::runs_rows_without_wall(&base));
    }
}

#[test]
fn curve_means_are_seed_means() {
    let spec = small(SweepAxis::HiddenDim(vec![4, 12]), vec![3, 5, 7]);
    let out = run_model_wise(&spec, 2).unwrap();
    for row in &out.curve.rows {
        let tests: Vec<f64> = out
            .runs
            .iter()
            .filter(|(k, _)| k.hidden_dim as f64 == row.x)
            .map(|(_, r)| r.as_ref().unwrap().record.final_test_loss())
            .collect();
        assert_eq!(tests.len(), 3);
        let (m, s) = mean_stderr(&tests);
        assert!((row.mean_test - m).abs() < 1e-12);
        assert!((row.stderr_test - s).abs() < 1e-12);
        assert_eq!(row.n_seeds, 3);
    }
}

#[test]
fn zero_learning_rate_gives_a_flat_epoch_curve() {
    let mut spec = small(SweepAxis::Epochs, vec![0]);
    spec.train.learning_rate = 0.0;
    spec.train.eval_period = 1;
    let out = run_epoch_wise(&spec, 1).unwrap();
    let test = out.curve.mean_test();
    assert_eq!(test.len(), 4);
    assert!(test.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sample_axis_trains_on_nested_prefixes() {
    let spec = small(SweepAxis::NTrain(vec![20, 40, 80]), vec![0]);
    let out = run_sample_wise(&spec, 1).unwrap();
    assert_eq!(out.curve.xs(), vec![20.0, 40.0, 80.0]);
    // The full-size cell equals a model-wise run on all rows.
    let full = run_model_wise(&small(SweepAxis::HiddenDim(vec![8]), vec![0]), 1).unwrap();
    assert_eq!(out.curve.rows[2].mean_test, full.curve.rows[0].mean_test);
}

#[test]
fn ten_runs_on_four_workers_all_complete() {
    let spec = small(SweepAxis::HiddenDim(vec![2, 4, 6, 8, 10]), vec![0, 1]);
    let mut seen = 0;
    let out = run_sweep(&spec, 4, |done, total, _, status| {
        seen += 1;
        assert_eq!(total, 10);
        assert_eq!(done, seen);
        assert!(status.is_ok());
    })
    .unwrap();
    assert_eq!(seen, 10);
    assert!(out.is_complete());
    assert_eq!(out.runs.len(), 10);
}

#[test]
fn wrong_axis_is_rejected_per_family() {
    let spec = small(SweepAxis::Epochs, vec![0]);
    assert!(run_model_wise(&spec, 1).is_err());
    assert!(run_sample_wise(&spec, 1).is_err());
    let spec = small(SweepAxis::NTrain(vec![10, 1000]), vec![0]);
    assert!(run_sample_wise(&spec, 1).is_err());
}

#[test]
fn embeddings_give_knn_under_domain_shift() {
    let mut spec = small(SweepAxis::HiddenDim(vec![6]), vec![0]);
    spec.source = DataSource::Synthetic {
        spec: SubspaceSpec::new(3, 10, 60, 60, 0).unwrap(),
        scenario: Scenario::DomainShift {
            shift: 2.0,
            noise_probability: 0.0,
            snr_db: None,
        },
    };
    spec.record_embeddings = true;
    let out = run_model_wise(&spec, 1).unwrap();
    let r = out.runs.values().next().unwrap().as_ref().unwrap();
    let knn = r.knn_dat.unwrap();
    assert!((0.0..=1.0).contains(&knn));
    let (tr, te) = r.record.embeddings.as_ref().unwrap();
    assert_eq!((tr.nrows(), te.nrows(), tr.ncols()), (60, 60, 4));
}
