//! Minibatch classifier training and evaluation.

use crate::augment::AugmentPipeline;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, ForwardCtx, Model, Sgd};
use crate::padding::Mode;
use crate::rng::RngStream;
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub seed: u64,
    pub augment: AugmentPipeline,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 64,
            lr: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 0,
            augment: AugmentPipeline::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Error on the held-out split after this epoch, if one was given.
    pub test_error: Option<f64>,
}

/// Trains `model` in place. Batches come from a per-epoch shuffle stream;
/// augmentation and Random Padding draw from per-sample streams keyed by the
/// dataset index, so results do not depend on worker scheduling.
pub fn train_classifier(
    model: &mut Model,
    train: &LabeledDataset,
    test: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, cfg.weight_decay);
    model.zero_grad();
    let mut logs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let e = epoch as u64;
        let order = RngStream::derive(cfg.seed, "shuffle", e, 0).permutation(train.len());
        let mut total = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let ids: Vec<u64> = batch.iter().map(|&i| i as u64).collect();
            let x = cfg.augment.apply_batch(&train.images.gather(batch), cfg.seed, e, &ids)?;
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let ctx = ForwardCtx {
                mode: Mode::Train,
                seed: cfg.seed,
                epoch: e,
                sample_ids: &ids,
            };
            let logits = model.forward(&x, &ctx)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::invalid(format!("training diverged at epoch {epoch} (loss {loss})")));
            }
            model.backward(&grad)?;
            opt.step(&mut model.params_mut());
            total += loss as f64 * batch.len() as f64;
        }
        let log = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            test_error: test.map(|t| evaluate(model, t)).transpose()?,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

/// Eval-mode class predictions (first maximal logit wins ties).
pub fn predict(model: &mut Model, images: &Tensor) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(images.n());
    let ctx = ForwardCtx::eval();
    for start in (0..images.n()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(images.n())).collect();
        let logits = model.forward(&images.gather(&idx), &ctx)?;
        for i in 0..logits.n() {
            let row = logits.sample(i);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (k, &v)| if v > row[b] { k } else { b });
            out.push(best);
        }
    }
    Ok(out)
}

/// Fraction of misclassified samples.
pub fn evaluate(model: &mut Model, ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let preds = predict(model, &ds.images)?;
    let wrong = preds.iter().zip(&ds.labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / ds.len() as f64)
}
