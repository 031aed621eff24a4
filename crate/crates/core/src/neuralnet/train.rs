use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::model::{backward, embed, forward, reconstruct, AutoencoderModel};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::metrics::LossNormalizer;
use crate::rng::{substream, Stream};

/// Rows evaluated per chunk when computing full-pass losses.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    pub eval_period: usize,
    /// Keep the final bottleneck embeddings of the train and test sets.
    #[serde(default)]
    pub record_embeddings: bool,
}

impl TrainConfig {
    /// Linear-subspace defaults: lr 0.001, 200 epochs, batch 10.
    pub fn synthetic(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 10,
            seed,
            shuffle_each_epoch: true,
            eval_period: 10,
            record_embeddings: false,
        }
    }

    /// Real-data defaults: lr 0.001, 1000 epochs, batch 128.
    pub fn real(seed: u64) -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 128,
            ..TrainConfig::synthetic(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.eval_period == 0 {
            return Err(Error::invalid("eval_period must be positive"));
        }
        Ok(())
    }

    /// Epochs at which losses are recorded: every `eval_period`-th epoch and
    /// always the last one, `ceil(epochs / eval_period)` points in total.
    pub fn eval_epochs(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (1..=self.epochs).filter(|e| e % self.eval_period == 0).collect();
        if self.epochs > 0 && out.last() != Some(&self.epochs) {
            out.push(self.epochs);
        }
        out
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub seed: u64,
    pub eval_epochs: Vec<usize>,
    /// Raw train MSE (full pass) at each eval epoch.
    pub train_mse: Vec<f64>,
    /// Raw test MSE at each eval epoch.
    pub test_mse: Vec<f64>,
    pub initial_train_mse: f64,
    pub initial_test_mse: f64,
    pub final_train_mse: f64,
    pub final_test_mse: f64,
    pub train_normalizer: LossNormalizer,
    pub test_normalizer: LossNormalizer,
    /// Final train and test bottleneck embeddings when requested.
    pub embeddings: Option<(Array2<f64>, Array2<f64>)>,
    pub wall_seconds: f64,
}

impl TrainRecord {
    pub fn final_train_loss(&self) -> f64 {
        self.train_normalizer.normalize(self.final_train_mse)
    }

    pub fn final_test_loss(&self) -> f64 {
        self.test_normalizer.normalize(self.final_test_mse)
    }

    pub fn normalized_train_curve(&self) -> Vec<f64> {
        self.train_mse.iter().map(|&m| self.train_normalizer.normalize(m)).collect()
    }

    pub fn normalized_test_curve(&self) -> Vec<f64> {
        self.test_mse.iter().map(|&m| self.test_normalizer.normalize(m)).collect()
    }
}

/// Full-pass reconstruction MSE, evaluated in row chunks.
pub(crate) fn dataset_mse(model: &AutoencoderModel, data: ArrayView2<'_, f64>) -> Result<f64> {
    let mut sum = 0.0;
    for chunk in data.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        let rec = reconstruct(model, chunk)?;
        sum += rec
            .iter()
            .zip(chunk.iter())
            .map(|(r, x)| (r - x) * (r - x))
            .sum::<f64>();
    }
    Ok(sum / data.len() as f64)
}

/// Mini-batch Adam on the reconstruction MSE of `train_set`. The test set is
/// only ever evaluated.
pub fn train(
    model: &mut AutoencoderModel,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainRecord> {
    cfg.validate()?;
    let started = Instant::now();
    let n = model.architecture().input_dim;
    for (name, ds) in [("train", train_set), ("test", test_set)] {
        if ds.n_features() != n {
            return Err(Error::shape(
                format!("{n} features"),
                format!("{} features in the {name} set", ds.n_features()),
            ));
        }
        if ds.is_empty() {
            return Err(Error::invalid(format!("{name} set is empty")));
        }
        if ds.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{name} set contains non-finite values")));
        }
    }
    let train_x = train_set.samples.view();
    let test_x = test_set.samples.view();
    let train_normalizer = LossNormalizer::from_data(train_x)?;
    let test_normalizer = LossNormalizer::from_data(test_x)?;

    let evaluate = |model: &AutoencoderModel, epoch: usize| -> Result<(f64, f64)> {
        let tr = dataset_mse(model, train_x)?;
        let te = dataset_mse(model, test_x)?;
        if !tr.is_finite() || !te.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: format!("evaluation loss (train {tr}, test {te})"),
            });
        }
        Ok((tr, te))
    };

    let (initial_train_mse, initial_test_mse) = evaluate(model, 0)?;
    let eval_epochs = cfg.eval_epochs();
    let mut train_mse = Vec::with_capacity(eval_epochs.len());
    let mut test_mse = Vec::with_capacity(eval_epochs.len());

    let mut state = AdamState::new(model);
    let mut order_rng = substream(cfg.seed, Stream::BatchOrder);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut next_eval = eval_epochs.iter().peekable();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut order_rng);
        }
        for idx in order.chunks(cfg.batch_size) {
            let batch = train_x.select(Axis(0), idx);
            let (_, cache) = forward(model, batch.view())?;
            let grads = backward(model, &cache, batch.view())?;
            adam_step(model, &grads, &mut state, cfg.learning_rate).map_err(|e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite { epoch, what },
                other => other,
            })?;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: "model parameters".into(),
            });
        }
        if next_eval.peek() == Some(&&epoch) {
            next_eval.next();
            let (tr, te) = evaluate(model, epoch)?;
            train_mse.push(tr);
            test_mse.push(te);
        }
    }

    let final_train_mse = train_mse.last().copied().unwrap_or(initial_train_mse);
    let final_test_mse = test_mse.last().copied().unwrap_or(initial_test_mse);
    let embeddings = if cfg.record_embeddings {
        Some((embed(model, train_x)?, embed(model, test_x)?))
    } else {
        None
    };

    Ok(TrainRecord {
        seed: cfg.seed,
        eval_epochs,
        train_mse,
        test_mse,
        initial_train_mse,
        initial_test_mse,
        final_train_mse,
        final_test_mse,
        train_normalizer,
        test_normalizer,
        embeddings,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
