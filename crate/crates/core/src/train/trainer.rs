use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_batches, Sample};
use crate::error::{Error, Result};
use crate::models::{Mode, Model, CLASS_ORDER};
use crate::nn::{argmax, cross_entropy, SeededRng};
use crate::train::{Adam, TrainConfig};

/// Accuracy, mean cross-entropy and a confusion matrix indexed
/// `[gold][predicted]` in class order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub confusion: [[usize; 3]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch whose weights are in `TrainOutcome::best`
    pub best_epoch: usize,
}

pub struct TrainOutcome {
    pub history: TrainHistory,
    /// weights after the epoch with the best validation accuracy (the last
    /// epoch when there is no validation set)
    pub best: Model<f32>,
}

const EVAL_BATCH: usize = 256;

/// Evaluation-mode accuracy and loss. Batches run in parallel and are
/// reduced in batch order, so results do not depend on thread count.
pub fn evaluate(model: &Model<f32>, samples: &[Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let parts: Vec<Result<(f64, [[usize; 3]; 3])>> = samples
        .par_chunks(EVAL_BATCH)
        .map(|chunk| {
            let pairs: Vec<_> = chunk.iter().map(|s| s.pair.clone()).collect();
            let probs = model.predict(&pairs)?;
            let mut loss = 0.0;
            let mut confusion = [[0usize; 3]; 3];
            for (r, s) in chunk.iter().enumerate() {
                let row = probs.row(r);
                let gold = s.label.index();
                loss -= (row[gold] as f64).max(f64::MIN_POSITIVE).ln();
                confusion[gold][argmax(row)] += 1;
            }
            Ok((loss, confusion))
        })
        .collect();
    let mut loss = 0.0;
    let mut confusion = [[0usize; 3]; 3];
    for part in parts {
        let (l, c) = part?;
        loss += l;
        for g in 0..3 {
            for p in 0..3 {
                confusion[g][p] += c[g][p];
            }
        }
    }
    let correct = (0..CLASS_ORDER.len()).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        examples: samples.len(),
        correct,
        accuracy: correct as f64 / samples.len() as f64,
        mean_loss: loss / samples.len() as f64,
        confusion,
    })
}

fn max_abs_grad(model: &Model<f32>) -> f32 {
    model
        .named_params()
        .into_iter()
        .map(|(_, p)| p.grad.data().iter().fold(0f32, |m, &g| if g.is_nan() { f32::NAN } else { m.max(g.abs()) }))
        .fold(0f32, |m, g| if g.is_nan() || m.is_nan() { f32::NAN } else { m.max(g) })
}

/// Mini-batch training. Single-threaded; a fixed `config.seed` makes the
/// history and the resulting weights bitwise reproducible. `on_epoch` is
/// called after every epoch with the metrics just recorded and the
/// current weights.
pub fn train(
    model: &mut Model<f32>,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &Model<f32>),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut optimizer = Adam::<f32>::new(config.optimizer);
    let mut dropout_rng = SeededRng::new(config.seed).fork(0x5eed_d20f);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Model<f32>)> = None;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let batches = make_batches(train_set, config.batch_size, Some(config.seed), epoch)?;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let diag = |what: String, model: &Model<f32>| {
                Error::Numeric(format!(
                    "{what} at epoch {}, batch {}; max |grad| {}",
                    epoch + 1,
                    bi + 1,
                    max_abs_grad(model)
                ))
            };
            model.zero_grad();
            let pass = match model.forward(&batch.pairs, Mode::Train, &mut dropout_rng) {
                Ok(p) => p,
                Err(Error::Numeric(msg)) => return Err(diag(msg, model)),
                Err(e) => return Err(e),
            };
            let (loss, dlogits) = cross_entropy(&pass.probs, &batch.labels)?;
            let loss = loss as f64;
            if !loss.is_finite() {
                return Err(diag(format!("loss is {loss}"), model));
            }
            model.backward(&pass, &dlogits)?;
            model.commit_batch_stats(&pass);
            let g = max_abs_grad(model);
            if !g.is_finite() {
                return Err(diag("non-finite gradient".into(), model));
            }
            optimizer.step(model.named_params_mut().into_iter().map(|(_, p)| p))?;
            loss_sum += loss * batch.labels.len() as f64;
            for (r, &gold) in batch.labels.iter().enumerate() {
                if argmax(pass.probs.row(r)) == gold {
                    correct += 1;
                }
            }
        }
        let n = train_set.len() as f64;
        let val = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(model, val_set)?)
        };
        let metrics = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss: val.as_ref().map(|v| v.mean_loss),
            val_accuracy: val.as_ref().map(|v| v.accuracy),
            seconds: config.log_wall_clock.then(|| started.elapsed().as_secs_f64()),
        };
        log::info!(
            "epoch {} train_loss {:.4} train_acc {:.4} val_acc {}",
            metrics.epoch,
            metrics.train_loss,
            metrics.train_accuracy,
            metrics.val_accuracy.map_or("-".into(), |a| format!("{a:.4}"))
        );
        on_epoch(&metrics, model);
        let score = metrics.val_accuracy.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _)| score > *b || val_set.is_empty()) {
            best = Some((score, model.clone()));
            history.best_epoch = epoch + 1;
        }
        history.epochs.push(metrics);
    }
    let (_, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { history, best })
}
