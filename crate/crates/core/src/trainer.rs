//! Mini-batch MSE training with Adam, per-epoch validation and
//! minimum-validation-loss snapshotting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::{rng_for, streams, TrainingExample};
use crate::fretboard::FLAT_LEN;
use crate::nn::network::per_example_mse;
use crate::nn::{adam_step, backward, forward_batch, AdamConfig, AdamState, ModelWeights, NnError, INPUT_LEN};

/// Rows per forward pass when evaluating.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} example set is empty")]
    Empty(&'static str),
    #[error("example {index}: input length {found}, expected {expected}")]
    ExampleShape { index: usize, expected: usize, found: usize },
    #[error("cosine accuracy is undefined for an all-zero target")]
    ZeroTarget,
    #[error("diverged at epoch {epoch}, batch {batch}: {source}")]
    Diverged {
        epoch: usize,
        batch: usize,
        #[source]
        source: NnError,
    },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub steps: usize,
}

impl TrainLog {
    pub fn best(&self) -> &EpochRecord {
        &self.records[self.best_epoch - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,train_acc,val_acc\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{:.8},{:.8},{:.6},{:.6}",
                r.epoch, r.train_loss, r.val_loss, r.train_accuracy, r.val_accuracy
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `(p·b) / (‖p‖‖b‖)`.
pub fn cosine_accuracy(p: &[f64], b: &[u8]) -> Result<f64, TrainError> {
    assert_eq!(p.len(), b.len(), "vectors must have equal length");
    let ones = b.iter().filter(|&&v| v != 0).count();
    if ones == 0 {
        return Err(TrainError::ZeroTarget);
    }
    let dot: f64 = p.iter().zip(b).filter(|(_, &v)| v != 0).map(|(x, _)| x).sum();
    let norm_p = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_p == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (norm_p * (ones as f64).sqrt()))
}

/// Stacks example inputs and targets into `(n, 728)` and `(n, 150)` matrices.
pub fn to_matrices(examples: &[TrainingExample]) -> Result<(Array2<f32>, Array2<f32>), TrainError> {
    let n = examples.len();
    let mut x = Array2::<f32>::zeros((n, INPUT_LEN));
    let mut y = Array2::<f32>::zeros((n, FLAT_LEN));
    for (i, e) in examples.iter().enumerate() {
        if e.input.len() != INPUT_LEN {
            return Err(TrainError::ExampleShape {
                index: i,
                expected: INPUT_LEN,
                found: e.input.len(),
            });
        }
        if e.target.len() != FLAT_LEN {
            return Err(TrainError::ExampleShape {
                index: i,
                expected: FLAT_LEN,
                found: e.target.len(),
            });
        }
        x.row_mut(i).iter_mut().zip(&e.input).for_each(|(d, &s)| *d = s as f32);
        y.row_mut(i).iter_mut().zip(&e.target).for_each(|(d, &s)| *d = s as f32);
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean MSE and mean per-frame cosine accuracy.
pub fn evaluate_matrices(
    weights: &ModelWeights<f32>,
    x: ArrayView2<f32>,
    y: ArrayView2<f32>,
) -> Result<Evaluation, TrainError> {
    let n = x.nrows();
    if n == 0 {
        return Err(TrainError::Empty("evaluation"));
    }
    let mut loss_sum = 0.0f64;
    let mut acc_sum = 0.0f64;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(n);
        let xb = x.slice(ndarray::s![start..end, ..]);
        let yb = y.slice(ndarray::s![start..end, ..]);
        let out = forward_batch(weights, xb)?;
        loss_sum += per_example_mse(&out.view(), &yb).iter().map(|&v| v as f64).sum::<f64>();
        for (p, t) in out.axis_iter(Axis(0)).zip(yb.axis_iter(Axis(0))) {
            let p: Vec<f64> = p.iter().map(|&v| v as f64).collect();
            let t: Vec<u8> = t.iter().map(|&v| (v > 0.5) as u8).collect();
            acc_sum += cosine_accuracy(&p, &t)?;
        }
    }
    Ok(Evaluation {
        loss: loss_sum / n as f64,
        accuracy: acc_sum / n as f64,
    })
}

pub fn evaluate(weights: &ModelWeights<f32>, examples: &[TrainingExample]) -> Result<Evaluation, TrainError> {
    let (x, y) = to_matrices(examples)?;
    evaluate_matrices(weights, x.view(), y.view())
}

/// Trains for `cfg.epochs` epochs and returns the weights of the epoch with
/// the lowest validation loss (earliest on ties) along with the full log.
/// Losses and accuracies are measured on the full sets after each epoch.
pub fn train(
    weights: &ModelWeights<f32>,
    train_examples: &[TrainingExample],
    val_examples: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<(ModelWeights<f32>, TrainLog), TrainError> {
    train_with_progress(weights, train_examples, val_examples, cfg, |_| {})
}

pub fn train_with_progress(
    weights: &ModelWeights<f32>,
    train_examples: &[TrainingExample],
    val_examples: &[TrainingExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelWeights<f32>, TrainLog), TrainError> {
    cfg.validate()?;
    if train_examples.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if val_examples.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    weights.validate()?;
    let (x_train, y_train) = to_matrices(train_examples)?;
    let (x_val, y_val) = to_matrices(val_examples)?;
    let n = x_train.nrows();

    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut current = weights.clone();
    let mut state = AdamState::new(&current);
    let mut rng = rng_for(cfg.seed, streams::TRAIN);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, ModelWeights<f32>)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 1;
    let mut steps = 0;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x_train.select(Axis(0), idx);
            let yb = y_train.select(Axis(0), idx);
            let diverged = |source| TrainError::Diverged {
                epoch,
                batch: batch + 1,
                source,
            };
            let (loss, grads) = backward(&current, xb.view(), yb.view()).map_err(diverged)?;
            if !loss.is_finite() {
                return Err(diverged(NnError::NonFinite {
                    layer: "loss".into(),
                }));
            }
            adam_step(&mut current, &grads, &mut state, &adam);
            steps += 1;
        }
        let diverged = |e: TrainError| match e {
            TrainError::Network(source) => TrainError::Diverged {
                epoch,
                batch: n.div_ceil(cfg.batch_size),
                source,
            },
            other => other,
        };
        let tr = evaluate_matrices(&current, x_train.view(), y_train.view()).map_err(diverged)?;
        let va = evaluate_matrices(&current, x_val.view(), y_val.view()).map_err(diverged)?;
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            val_loss: va.loss,
            train_accuracy: tr.accuracy,
            val_accuracy: va.accuracy,
        };
        on_epoch(&record);
        records.push(record);
        if best.as_ref().is_none_or(|(l, _)| va.loss < *l) {
            best = Some((va.loss, current.clone()));
            best_epoch = epoch;
        }
    }
    let (_, best_weights) = best.expect("at least one epoch");
    Ok((
        best_weights,
        TrainLog {
            records,
            best_epoch,
            steps,
        },
    ))
}
