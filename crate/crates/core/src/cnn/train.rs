use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::layers::softmax_cross_entropy;
use super::model::{ArchConfig, CnnModel};
use super::tensor::Tensor;
use super::CnnError;
use crate::raster::GraphImage;
use crate::rng;
use crate::split::{stratified_holdout, SplitError};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub dropout: f64,
    /// Epochs without a strict decrease of the validation loss before
    /// training stops.
    pub patience: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Share of the training images held out (stratified) for early
    /// stopping when [`train`] is used.
    pub validation_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            dropout: 0.3,
            patience: 5,
            adam: AdamConfig::default(),
            max_epochs: 100,
            validation_fraction: 0.1,
            hidden: 128,
            seed: 1,
        }
    }
}

impl TrainConfig {
    /// Architecture for `C x H x W` inputs using this configuration's
    /// dropout rate and hidden width.
    pub fn arch(&self, channels: usize, height: usize, width: usize, classes: usize) -> ArchConfig {
        ArchConfig { hidden: self.hidden, dropout: self.dropout, ..ArchConfig::new(channels, height, width, classes) }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if self.adam.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.adam.beta1)
            || !(0.0..1.0).contains(&self.adam.beta2)
        {
            return bad("invalid Adam hyperparameters");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} set is empty")]
    Empty(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error(
        "non-finite loss {loss} at epoch {epoch}, batch {batch} (first samples {samples:?}, max |param| {max_param})"
    )]
    NonFinite { epoch: usize, batch: usize, loss: f64, samples: Vec<usize>, max_param: f64 },
}

/// Images stored as one contiguous `N x C x H x W` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> ImageSet<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>, labels: Vec<usize>) -> Self {
        assert_eq!(data.len(), labels.len() * channels * height * width, "image buffer size");
        Self { channels, height, width, data, labels }
    }

    /// Histogram stacks as float tensors (raw counts unless `normalize`).
    pub fn from_graph_images(images: &[GraphImage], normalize: bool) -> Self {
        let (c, h, w) = images.first().map_or((0, 0, 0), GraphImage::shape);
        let mut data = Vec::with_capacity(images.len() * c * h * w);
        for im in images {
            assert_eq!(im.shape(), (c, h, w), "images must share one shape");
            data.extend(im.to_tensor::<T>(normalize));
        }
        Self::new(c, h, w, data, images.iter().map(|im| im.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[T] {
        let n = self.sample_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        (
            Tensor::from_vec(vec![indices.len(), self.channels, self.height, self.width], data),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let (t, labels) = self.batch(indices);
        Self::new(self.channels, self.height, self.width, t.data, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,train_accuracy,val_loss,val_accuracy,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy, e.seconds
            ));
        }
        out
    }

    /// Mean wall-clock seconds of the training pass per epoch.
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Wait,
    Stop,
}

/// Patience counter on the validation loss; any strict decrease counts as
/// an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    pub patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, wait: 0 }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            StopDecision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Wait
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// One row per image.
    pub probabilities: Vec<Vec<f64>>,
}

/// Index of the largest entry (first on ties).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels<T: Scalar>(model: &CnnModel<T>, set: &ImageSet<T>) -> Result<(), TrainError> {
    let classes = model.arch().classes;
    if let Some(&label) = set.labels.iter().find(|&&y| y >= classes) {
        return Err(TrainError::Label { label, classes });
    }
    Ok(())
}

/// Inference-mode probabilities, computed in chunks of `batch_size`.
pub fn predict<T: Scalar>(
    model: &mut CnnModel<T>,
    images: &ImageSet<T>,
    batch_size: usize,
) -> Result<Prediction, CnnError> {
    let k = model.arch().classes;
    let order: Vec<usize> = (0..images.len()).collect();
    let mut probabilities = Vec::with_capacity(images.len());
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, _) = images.batch(chunk);
        let p = model.predict_proba(&x)?;
        probabilities.extend(p.data.chunks_exact(k).map(|r| r.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
    }
    Ok(Prediction { labels: probabilities.iter().map(|r| argmax(r)).collect(), probabilities })
}

/// Mean cross-entropy and accuracy in inference mode.
pub fn evaluate<T: Scalar>(
    model: &mut CnnModel<T>,
    images: &ImageSet<T>,
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    if images.is_empty() {
        return Err(TrainError::Empty("evaluation"));
    }
    check_labels(model, images)?;
    let pred = predict(model, images, batch_size)?;
    let mut loss = 0.0;
    let mut correct = 0;
    for ((row, &y), &yhat) in pred.probabilities.iter().zip(&images.labels).zip(&pred.labels) {
        loss -= row[y].max(f64::MIN_POSITIVE).ln();
        correct += usize::from(y == yhat);
    }
    let n = images.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains on a stratified split of `images`, holding out
/// `validation_fraction` of them for early stopping.
pub fn train<T: Scalar>(
    model: &mut CnnModel<T>,
    images: &ImageSet<T>,
    config: &TrainConfig,
) -> Result<History, TrainError> {
    config.validate()?;
    let (tr, val) = stratified_holdout(&images.labels, config.validation_fraction, rng::derive(config.seed, 7))?;
    train_with_validation(model, &images.subset(&tr), &images.subset(&val), config)
}

/// Mini-batch Adam on the cross-entropy loss with early stopping on the
/// validation loss. The weights of the best validation epoch are restored
/// before returning.
pub fn train_with_validation<T: Scalar>(
    model: &mut CnnModel<T>,
    train_set: &ImageSet<T>,
    val_set: &ImageSet<T>,
    config: &TrainConfig,
) -> Result<History, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::Empty("validation"));
    }
    check_labels(model, train_set)?;
    check_labels(model, val_set)?;

    let mut adam = Adam::new(config.adam);
    let mut shuffle_rng = rng::seeded(rng::derive(config.seed, 1));
    let mut dropout_rng = rng::seeded(rng::derive(config.seed, 2));
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<Vec<Vec<T>>> = None;
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let (x, y) = train_set.batch(chunk);
            model.zero_grad();
            let logits = model.forward(&x, true, &mut dropout_rng)?;
            let (loss, probs, grad) = softmax_cross_entropy(&logits, &y);
            if !loss.is_finite() {
                let max_param =
                    model.params().iter().flat_map(|p| p.value.iter()).fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    loss,
                    samples: chunk.iter().take(8).copied().collect(),
                    max_param,
                });
            }
            model.backward(&grad);
            adam.step(model.params_mut());
            loss_sum += loss * chunk.len() as f64;
            let k = probs.shape[1];
            for (row, &yi) in probs.data.chunks_exact(k).zip(&y) {
                let r: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                correct += usize::from(argmax(&r) == yi);
            }
        }
        model.release_cache();
        let seconds = start.elapsed().as_secs_f64();
        let (val_loss, val_accuracy) = evaluate(model, val_set, config.batch_size)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
            seconds,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4} ({:.1}s)",
            stats.train_loss,
            stats.train_accuracy,
            val_loss,
            val_accuracy,
            seconds
        );
        history.epochs.push(stats);
        match stopper.update(epoch, val_loss) {
            StopDecision::Improved => best = Some(model.params().iter().map(|p| p.value.clone()).collect()),
            StopDecision::Wait => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    if let Some(best) = best {
        for (p, v) in model.params_mut().into_iter().zip(best) {
            p.value = v;
        }
    }
    history.best_epoch = stopper.best_epoch();
    Ok(history)
}
