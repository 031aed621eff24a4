//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use descentlab::datagen::{apply_sample_noise, sample_latents, sample_projection, Dataset, NoiseMode, NoiseSpec, Split, SubspaceSpec};
use descentlab::metrics::{Label, ScoredSample};
use descentlab::neuralnet::{mse, reconstruct, AutoencoderModel};
use descentlab::neuralnet::{backward, forward, init_model, Activation, Architecture};
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pair counting: wins plus half the ties over all (anomaly, clean) pairs.
pub fn brute_auc(scored: &[ScoredSample]) -> f64 {
    let pos: Vec<f64> = scored.iter().filter(|s| s.label == Label::Anomaly).map(|s| s.score).collect();
    let neg: Vec<f64> = scored.iter().filter(|s| s.label == Label::Clean).map(|s| s.score).collect();
    let mut twice = 0u64;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                twice += 2;
            } else if p == n {
                twice += 1;
            }
        }
    }
    twice as f64 / 2.0 / (pos.len() as f64 * neg.len() as f64)
}

/// Full sort of all distances per point.
pub fn brute_knn_dat(emb: ArrayView2<'_, f64>, labels: &[u32], k: usize) -> f64 {
    let m = emb.nrows();
    let mut total = 0.0;
    for i in 0..m {
        let mut d: Vec<(f64, usize)> = (0..m)
            .filter(|&j| j != i)
            .map(|j| {
                let dist: f64 = emb
                    .row(i)
                    .iter()
                    .zip(emb.row(j).iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (dist, j)
            })
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let same = d[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
        total += same as f64 / k as f64;
    }
    total / m as f64
}

pub fn loss(model: &AutoencoderModel, x: ArrayView2<'_, f64>) -> f64 {
    let rec = reconstruct(model, x).unwrap();
    mse(rec.view(), x).unwrap()
}

/// Central-difference derivative of the batch loss in parameter `i`.
pub fn finite_difference(model: &mut AutoencoderModel, x: ArrayView2<'_, f64>, i: usize, h: f64) -> f64 {
    let orig = model.param(i);
    model.set_param(i, orig + h);
    let up = loss(model, x);
    model.set_param(i, orig - h);
    let down = loss(model, x);
    model.set_param(i, orig);
    (up - down) / (2.0 * h)
}

/// Energy-ratio SNR in dB between theta-scaled clean rows and the noise added
/// by whole-sample noise with p = 1. `draws` rows are pooled over
/// `projections` independent projection matrices, so the estimate averages
/// over `D` as well as `z` and the noise.
pub fn monte_carlo_snr_db(snr_db: f64, d: usize, n: usize, draws: usize, projections: usize, seed: u64) -> f64 {
    let noise = NoiseSpec::new(NoiseMode::Sample, 1.0, snr_db, d).unwrap();
    let rows = draws / projections;
    let (mut signal, mut noise_energy) = (0.0, 0.0);
    for k in 0..projections as u64 {
        let spec = SubspaceSpec::new(d, n, rows, 1, seed.wrapping_mul(1_000_003).wrapping_add(k)).unwrap();
        let proj = sample_projection(&spec, 0).unwrap();
        let clean: Array2<f64> = proj.project(&sample_latents(&spec, Split::Train).unwrap()).unwrap() * noise.theta;
        let noisy = apply_sample_noise(&Dataset::clean(clean.clone()), &noise, spec.seed).unwrap();
        let added = &noisy.samples - &clean;
        signal += clean.iter().map(|v| v * v).sum::<f64>();
        noise_energy += added.iter().map(|v| v * v).sum::<f64>();
    }
    10.0 * (signal / noise_energy).log10()
}

/// runs.csv of an outcome, parsed back into rows with the wall-clock column
/// dropped.
pub fn runs_rows_without_wall(outcome: &descentlab::sweep::SweepOutcome) -> Vec<Vec<String>> {
    let mut buf = Vec::new();
    outcome.write_runs_csv(&mut buf).unwrap();
    let mut r = csv::Reader::from_reader(buf.as_slice());
    let wall = r.headers().unwrap().iter().position(|h| h == "wall_seconds").unwrap();
    r.records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != wall)
                .map(|(_, v)| v.to_string())
                .collect()
        })
        .collect()
}

/// Max relative error over `per_model` random parameters of each of
/// `models` random architectures.
pub fn gradient_check(models: usize, per_model: usize, activation: Activation, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for m in 0..models {
        let b = rng.random_range(1..5);
        let n = rng.random_range(b + 1..12);
        let h = rng.random_range(1..10);
        let arch = Architecture::new(n, h, b).unwrap().with_activation(activation);
        let mut model = init_model(&arch, seed * 100 + m as u64).unwrap();
        // Zero biases can put a ReLU exactly on its kink; move to a generic point.
        for i in 0..model.parameter_count() {
            let v = model.param(i) + rng.random_range(-0.1..0.1);
            model.set_param(i, v);
        }
        let x = Array2::from_shape_fn((rng.random_range(1..8), n), |_| rng.random_range(-1.5..1.5));
        let (_, cache) = forward(&model, x.view()).unwrap();
        let grads = backward(&model, &cache, x.view()).unwrap();
        for _ in 0..per_model {
            let i = rng.random_range(0..model.parameter_count());
            let a = grads.get(i);
            let f = finite_difference(&mut model, x.view(), i, 1e-6);
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    worst
}
