use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{log_sum_exp, CnnError, Model, ModelConfig};
use crate::datagen::derive_seed;
use crate::raster::{resize, resize_nearest, Image};
use crate::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub patience: usize,
    /// Relative improvement below which a validation loss counts as no better.
    pub threshold: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// The original large-scale hyperparameters.
    pub fn paper(seed: u64) -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 1024,
            lr: 1e-4,
            weight_decay: 1e-4,
            plateau_factor: 0.1,
            patience: 5,
            threshold: 1e-4,
            seed,
        }
    }

    /// Single-core budget: 30 epochs of 64-record batches.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<(), CnnError> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.lr > 0.0
            && self.weight_decay >= 0.0
            && self.plateau_factor > 0.0
            && self.plateau_factor < 1.0
            && self.threshold >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(CnnError::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Reduce-on-plateau in min mode: after more than `patience` epochs without
/// a relative improvement of `threshold`, the rate is multiplied by `factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub lr: f64,
    factor: f64,
    patience: usize,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(lr: f64, factor: f64, patience: usize, threshold: f64) -> Self {
        Plateau {
            lr,
            factor,
            patience,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one epoch's metric and returns the rate for the next epoch.
    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
        }
        self.lr
    }
}

/// Resizes to `side` x `side`: nearest neighbour for binary images (no new
/// gray levels), bilinear otherwise.
pub fn prepare_input<T: Scalar, U: Scalar>(img: &Image<U>, side: usize) -> Vec<T> {
    let img: Image<T> = img.convert();
    let out = if img.dims() == (side, side) {
        img
    } else if img.is_binary() {
        resize_nearest(&img, side, side)
    } else {
        resize(&img, side, side)
    };
    out.pixels().to_vec()
}

/// Prepared inputs and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    side: usize,
    inputs: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn from_images<U: Scalar>(images: &[Image<U>], labels: &[usize], side: usize) -> Self {
        assert_eq!(images.len(), labels.len(), "one label per image");
        let mut inputs = Vec::with_capacity(images.len() * side * side);
        for img in images {
            inputs.extend(prepare_input::<T, U>(img, side));
        }
        Dataset {
            side,
            inputs,
            labels: labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sample(&self, i: usize) -> (&[T], usize) {
        let n = self.side * self.side;
        (&self.inputs[i * n..(i + 1) * n], self.labels[i])
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Mean cross-entropy (no decay) and accuracy.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> (f64, f64) {
    if data.is_empty() {
        return (0.0, 0.0);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let (x, label) = data.sample(i);
        let z = model.logits(x);
        loss += (log_sum_exp(&z) - z[label]).as_f64();
        let pred = (0..z.len()).fold(0, |b, k| if z[k] > z[b] { k } else { b });
        correct += usize::from(pred == label);
    }
    let n = data.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains a fresh model; see [`train_model`].
pub fn train<T: Scalar>(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model<T>, History), CnnError> {
    let model = Model::new(model_cfg.clone(), derive_seed(cfg.seed, &[0]))?;
    train_model(model, cfg, train_set, val_set, on_epoch)
}

/// Epoch loop with seeded shuffling and plateau scheduling on validation
/// loss. Returns the state with the best validation accuracy (lower
/// validation loss breaks ties).
pub fn train_model<T: Scalar>(
    mut model: Model<T>,
    cfg: &TrainConfig,
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model<T>, History), CnnError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CnnError::Config("training and validation sets must be non-empty".into()));
    }
    if train_set.side() != model.config().input_side || val_set.side() != model.config().input_side {
        return Err(CnnError::ShapeMismatch {
            expected: vec![model.config().input_side],
            got: vec![train_set.side(), val_set.side()],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let mut sched = Plateau::new(cfg.lr, cfg.plateau_factor, cfg.patience, cfg.threshold);
    let decay = T::of(cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, f64, Model<T>)> = None;

    for epoch in 0..cfg.epochs {
        let lr = sched.lr;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.zero_grads();
            let loss = model.accumulate(chunk.iter().map(|&i| train_set.sample(i)), decay, &mut grads);
            if !loss.is_finite() {
                return Err(CnnError::NonFiniteLoss { epoch, batch: b, lr });
            }
            total += loss.as_f64() * chunk.len() as f64;
            model.adam_step(&grads, T::of(lr));
        }
        let (val_loss, val_accuracy) = evaluate(&model, val_set);
        if !val_loss.is_finite() {
            return Err(CnnError::NonFiniteLoss { epoch, batch: usize::MAX, lr });
        }
        let stats = EpochStats {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_loss,
            val_accuracy,
            lr,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
        let improved = match &best {
            None => true,
            Some((acc, loss, _)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss),
        };
        if improved {
            history.best_epoch = epoch;
            history.best_val_accuracy = val_accuracy;
            best = Some((val_accuracy, val_loss, model.clone()));
        }
        sched.step(val_loss);
    }
    let model = best.map(|b| b.2).unwrap_or(model);
    Ok((model, history))
}
