//! A small residual convolutional classifier trained from scratch.
//!
//! Layout: stem conv3x3 + ReLU, then per stage an optional stride-2
//! downsampling block (conv3x3/2 plus a conv1x1/2 projection, summed, ReLU)
//! followed by residual blocks (conv3x3, ReLU, conv3x3, identity skip, ReLU),
//! global average pooling and an affine layer. No batch normalization.

mod checkpoint;
mod layers;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use tensor::Tensor;
pub use train::{
    evaluate, prepare_input, train, train_model, Dataset, EpochStats, History, Plateau, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Image;
use crate::scalar::Scalar;
use layers::{conv_backward, conv_forward, Conv};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_side: usize,
    /// Channels per stage; every stage after the first halves the resolution.
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_side: 96,
            widths: vec![8, 16, 32],
            blocks_per_stage: 1,
            classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        let bad = |m: String| Err(CnnError::Config(m));
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive".into());
        }
        if self.classes < 2 {
            return bad("need at least two classes".into());
        }
        let factor = 1usize << (self.widths.len() - 1);
        if self.input_side == 0 || self.input_side % factor != 0 {
            return bad(format!("input side {} not divisible by {factor}", self.input_side));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Down { main: Conv, skip: Conv },
    Res { c1: Conv, c2: Conv },
}

/// Layer wiring derived from a config, with parameter indices.
#[derive(Debug, Clone, PartialEq)]
struct Net {
    stem: Conv,
    blocks: Vec<(Block, usize)>,
    fc_weight: usize,
    fc_bias: usize,
}

impl Net {
    fn build(cfg: &ModelConfig) -> (Net, Vec<(String, Vec<usize>)>) {
        let mut specs: Vec<(String, Vec<usize>)> = Vec::new();
        let mut conv = |name: String, cin: usize, cout: usize, k: usize, stride: usize| {
            specs.push((format!("{name}.weight"), vec![cout, cin, k, k]));
            specs.push((format!("{name}.bias"), vec![cout]));
            Conv {
                cin,
                cout,
                k,
                stride,
                weight: specs.len() - 2,
                bias: specs.len() - 1,
            }
        };
        let stem = conv("stem".into(), 1, cfg.widths[0], 3, 1);
        let mut blocks = Vec::new();
        let mut side = cfg.input_side;
        for (s, &w) in cfg.widths.iter().enumerate() {
            if s > 0 {
                let cin = cfg.widths[s - 1];
                let main = conv(format!("stage{s}.down.conv"), cin, w, 3, 2);
                let skip = conv(format!("stage{s}.down.proj"), cin, w, 1, 2);
                blocks.push((Block::Down { main, skip }, side));
                side /= 2;
            }
            for b in 0..cfg.blocks_per_stage {
                let c1 = conv(format!("stage{s}.block{b}.conv1"), w, w, 3, 1);
                let c2 = conv(format!("stage{s}.block{b}.conv2"), w, w, 3, 1);
                blocks.push((Block::Res { c1, c2 }, side));
            }
        }
        let last = *cfg.widths.last().expect("validated non-empty");
        specs.push(("fc.weight".into(), vec![cfg.classes, last]));
        specs.push(("fc.bias".into(), vec![cfg.classes]));
        let n = specs.len();
        (
            Net {
                stem,
                blocks,
                fc_weight: n - 2,
                fc_bias: n - 1,
            },
            specs,
        )
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace<T> {
    /// `acts[0]` is the stem output, `acts[i + 1]` the output of block `i`.
    acts: Vec<Vec<T>>,
    /// Inner activation of each residual block (empty for downsampling).
    hidden: Vec<Vec<T>>,
    pooled: Vec<T>,
}

/// Parameters, Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    net: Net,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    adam_m: Vec<Vec<T>>,
    adam_v: Vec<Vec<T>>,
    step: u64,
}

fn relu_inplace<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// `grad *= [act > 0]`
fn relu_mask<T: Scalar>(grad: &mut [T], act: &[T]) {
    for (g, &a) in grad.iter_mut().zip(act) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Numerically stable `ln(sum(exp(z)))`.
pub fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    max + z.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

impl<T: Scalar> Model<T> {
    /// He-normal weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, CnnError> {
        config.validate()?;
        let (net, specs) = Net::build(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params: Vec<Tensor<T>> = specs
            .iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data = if name.ends_with(".weight") {
                    let fan_in: usize = dims[1..].iter().product();
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| T::of(normal.sample(&mut rng))).collect()
                } else {
                    vec![T::zero(); n]
                };
                Tensor::new(dims.clone(), data).expect("sized from dims")
            })
            .collect();
        Ok(Self::assemble(config, net, specs, params))
    }

    fn assemble(config: ModelConfig, net: Net, specs: Vec<(String, Vec<usize>)>, params: Vec<Tensor<T>>) -> Self {
        let adam_m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let adam_v = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Model {
            config,
            net,
            names: specs.into_iter().map(|s| s.0).collect(),
            params,
            adam_m,
            adam_v,
            step: 0,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.adam_m, &self.adam_v)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<T>> {
        self.params.iter().map(|p| vec![T::zero(); p.len()]).collect()
    }

    fn sample_len(&self) -> usize {
        self.config.input_side * self.config.input_side
    }

    fn forward_sample(&self, x: &[T], col: &mut Vec<T>) -> (Vec<T>, Trace<T>) {
        let p = |i: usize| self.params[i].data();
        let side = self.config.input_side;
        let stem = &self.net.stem;
        let mut a = vec![T::zero(); stem.cout * side * side];
        conv_forward(x, side, stem, p(stem.weight), p(stem.bias), col, &mut a);
        relu_inplace(&mut a);
        let mut trace = Trace {
            acts: vec![a],
            hidden: Vec::new(),
            pooled: Vec::new(),
        };
        for &(block, side) in &self.net.blocks {
            let input = trace.acts.last().expect("stem output present");
            match block {
                Block::Down { main, skip } => {
                    let out_side = main.out_side(side);
                    let mut out = vec![T::zero(); main.cout * out_side * out_side];
                    let mut proj = vec![T::zero(); out.len()];
                    conv_forward(input, side, &main, p(main.weight), p(main.bias), col, &mut out);
                    conv_forward(input, side, &skip, p(skip.weight), p(skip.bias), col, &mut proj);
                    for (o, q) in out.iter_mut().zip(proj) {
                        *o += q;
                    }
                    relu_inplace(&mut out);
                    trace.hidden.push(Vec::new());
                    trace.acts.push(out);
                }
                Block::Res { c1, c2 } => {
                    let mut h = vec![T::zero(); input.len()];
                    conv_forward(input, side, &c1, p(c1.weight), p(c1.bias), col, &mut h);
                    relu_inplace(&mut h);
                    let mut out = vec![T::zero(); input.len()];
                    conv_forward(&h, side, &c2, p(c2.weight), p(c2.bias), col, &mut out);
                    for (o, &i) in out.iter_mut().zip(input) {
                        *o += i;
                    }
                    relu_inplace(&mut out);
                    trace.hidden.push(h);
                    trace.acts.push(out);
                }
            }
        }
        let last = trace.acts.last().expect("at least the stem");
        let channels = *self.config.widths.last().expect("validated");
        let hw = last.len() / channels;
        let inv = T::one() / T::of(hw as f64);
        trace.pooled = last.chunks(hw).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        let (w, b) = (p(self.net.fc_weight), p(self.net.fc_bias));
        let logits = (0..self.config.classes)
            .map(|k| b[k] + w[k * channels..(k + 1) * channels].iter().zip(&trace.pooled).map(|(&a, &g)| a * g).sum::<T>())
            .collect();
        (logits, trace)
    }

    fn conv_grad(&self, conv: &Conv, x: &[T], side: usize, dout: &[T], grads: &mut [Vec<T>], dx: Option<&mut [T]>, col: &mut Vec<T>) {
        let mut dw = std::mem::take(&mut grads[conv.weight]);
        let mut db = std::mem::take(&mut grads[conv.bias]);
        conv_backward(x, side, conv, self.params[conv.weight].data(), dout, &mut dw, &mut db, dx, col);
        grads[conv.weight] = dw;
        grads[conv.bias] = db;
    }

    fn backward_sample(&self, x: &[T], trace: &Trace<T>, dlogits: &[T], grads: &mut [Vec<T>], col: &mut Vec<T>) {
        let channels = *self.config.widths.last().expect("validated");
        let fc_w = self.params[self.net.fc_weight].data();
        let mut dpool = vec![T::zero(); channels];
        for (k, &dl) in dlogits.iter().enumerate() {
            grads[self.net.fc_bias][k] += dl;
            for c in 0..channels {
                grads[self.net.fc_weight][k * channels + c] += dl * trace.pooled[c];
                dpool[c] += dl * fc_w[k * channels + c];
            }
        }
        let last = trace.acts.last().expect("at least the stem");
        let hw = last.len() / channels;
        let inv = T::one() / T::of(hw as f64);
        let mut da: Vec<T> = dpool.iter().flat_map(|&g| std::iter::repeat_n(g * inv, hw)).collect();

        for (i, &(block, side)) in self.net.blocks.iter().enumerate().rev() {
            let input = &trace.acts[i];
            relu_mask(&mut da, &trace.acts[i + 1]);
            let dz = da;
            match block {
                Block::Down { main, skip } => {
                    let mut dx = vec![T::zero(); input.len()];
                    self.conv_grad(&main, input, side, &dz, grads, Some(&mut dx), col);
                    self.conv_grad(&skip, input, side, &dz, grads, Some(&mut dx), col);
                    da = dx;
                }
                Block::Res { c1, c2 } => {
                    let h = &trace.hidden[i];
                    let mut dh = vec![T::zero(); h.len()];
                    self.conv_grad(&c2, h, side, &dz, grads, Some(&mut dh), col);
                    relu_mask(&mut dh, h);
                    let mut dx = dz;
                    self.conv_grad(&c1, input, side, &dh, grads, Some(&mut dx), col);
                    da = dx;
                }
            }
        }
        relu_mask(&mut da, &trace.acts[0]);
        self.conv_grad(&self.net.stem, x, self.config.input_side, &da, grads, None, col);
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize, CnnError> {
        let s = self.config.input_side;
        let dims = batch.dims();
        if dims.len() != 4 || dims[1] != 1 || dims[2] != s || dims[3] != s {
            return Err(CnnError::ShapeMismatch {
                expected: vec![dims.first().copied().unwrap_or(0), 1, s, s],
                got: dims.to_vec(),
            });
        }
        Ok(dims[0])
    }

    /// Logits `[N, classes]` for a batch `[N, 1, S, S]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let n = self.check_batch(batch)?;
        let mut col = Vec::new();
        let mut out = Vec::with_capacity(n * self.config.classes);
        for i in 0..n {
            out.extend(self.forward_sample(batch.row(i), &mut col).0);
        }
        Tensor::new(vec![n, self.config.classes], out)
    }

    /// On/off state of every ReLU for one input. Finite-difference checks
    /// use it to discard probes that cross a kink.
    pub fn relu_pattern(&self, x: &[T]) -> Vec<bool> {
        assert_eq!(x.len(), self.sample_len(), "input must be side x side");
        let (_, trace) = self.forward_sample(x, &mut Vec::new());
        trace.acts.iter().chain(&trace.hidden).flatten().map(|&a| a > T::zero()).collect()
    }

    /// Logits of one prepared input.
    pub fn logits(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.sample_len(), "input must be side x side");
        self.forward_sample(x, &mut Vec::new()).0
    }

    /// `(lambda / 2) * sum(theta^2)` over every parameter.
    pub fn decay_term(&self, weight_decay: T) -> T {
        let sq: T = self.params.iter().flat_map(|p| p.data().iter()).map(|&v| v * v).sum();
        weight_decay * T::of(0.5) * sq
    }

    /// Adds the gradient of mean cross-entropy over `samples` (plus the
    /// decay term) into `grads` and returns the loss.
    pub(crate) fn accumulate<'a>(
        &self,
        samples: impl ExactSizeIterator<Item = (&'a [T], usize)>,
        weight_decay: T,
        grads: &mut [Vec<T>],
    ) -> T {
        let n = samples.len();
        let scale = T::one() / T::of(n as f64);
        let mut col = Vec::new();
        let mut loss = T::zero();
        for (x, label) in samples {
            let (logits, trace) = self.forward_sample(x, &mut col);
            let lse = log_sum_exp(&logits);
            loss += lse - logits[label];
            let dlogits: Vec<T> = logits
                .iter()
                .enumerate()
                .map(|(k, &z)| ((z - lse).exp() - if k == label { T::one() } else { T::zero() }) * scale)
                .collect();
            self.backward_sample(x, &trace, &dlogits, grads, &mut col);
        }
        for (g, p) in grads.iter_mut().zip(&self.params) {
            for (gi, &pi) in g.iter_mut().zip(p.data()) {
                *gi += weight_decay * pi;
            }
        }
        loss * scale + self.decay_term(weight_decay)
    }

    /// Mean softmax cross-entropy plus L2 decay, and its gradient per parameter.
    pub fn loss_and_grad(&self, batch: &Tensor<T>, labels: &[usize], weight_decay: T) -> Result<(T, Vec<Tensor<T>>), CnnError> {
        let n = self.check_batch(batch)?;
        if labels.len() != n || labels.iter().any(|&l| l >= self.config.classes) {
            return Err(CnnError::ShapeMismatch {
                expected: vec![n],
                got: vec![labels.len()],
            });
        }
        let mut grads = self.zero_grads();
        let loss = self.accumulate((0..n).map(|i| (batch.row(i), labels[i])), weight_decay, &mut grads);
        let grads = grads
            .into_iter()
            .zip(&self.params)
            .map(|(g, p)| Tensor::new(p.dims().to_vec(), g).expect("same size"))
            .collect();
        Ok((loss, grads))
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &[Vec<T>], lr: T) {
        self.step += 1;
        let (b1, b2, eps) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2), T::of(ADAM_EPS));
        let t = self.step as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        for (((p, g), m), v) in self.params.iter_mut().zip(grads).zip(&mut self.adam_m).zip(&mut self.adam_v) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Class and its probability; the image is resized to the input side.
    pub fn predict<U: Scalar>(&self, img: &Image<U>) -> (usize, T) {
        let probs = softmax(&self.logits(&prepare_input(img, self.config.input_side)));
        let (class, &p) = probs
            .iter()
            .enumerate()
            .fold((0, &probs[0]), |best, (k, p)| if *p > *best.1 { (k, p) } else { best });
        (class, p)
    }
}

#[cfg(test)]
mod tests;
