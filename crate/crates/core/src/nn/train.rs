//! Minibatch training with ADAM on a mean-squared-error objective.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{Mode, Network};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// One input/target pair as delivered by a [`SampleStream`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Index of the base sample this was derived from.
    pub id: usize,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

/// Source of training samples; epoch contents must be a deterministic
/// function of the epoch index.
pub trait SampleStream {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All samples of `epoch`, each base sample exactly once.
    fn epoch(&self, epoch: usize) -> Result<Vec<Sample>>;
}

/// A fixed list of samples served unchanged every epoch.
#[derive(Debug, Clone)]
pub struct FixedSamples(pub Vec<Sample>);

impl SampleStream for FixedSamples {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn epoch(&self, _epoch: usize) -> Result<Vec<Sample>> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 128, adam: AdamConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub epochs: usize,
    /// Mean training-mode loss over the epoch's minibatches.
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub losses: Vec<f64>,
}

/// Mean squared error and its gradient w.r.t. the prediction.
pub fn mse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> (f64, Tensor<T>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(pred.shape());
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p.f64() - t.f64();
        loss += d * d;
        *g = T::of(2.0 * d / n);
    }
    (loss / n, grad)
}

fn batch_tensors<T: Scalar>(samples: &[&Sample], input_shape: [usize; 3]) -> Result<(Tensor<T>, Tensor<T>)> {
    let [c, h, w] = input_shape;
    let n = samples.len();
    let out_dim = samples[0].target.len();
    let mut x = Vec::with_capacity(n * c * h * w);
    let mut y = Vec::with_capacity(n * out_dim);
    for s in samples {
        if s.input.len() != c * h * w || s.target.len() != out_dim {
            return Err(Error::Shape(format!(
                "sample {} has input {} / target {}, network expects {} / {out_dim}",
                s.id,
                s.input.len(),
                s.target.len(),
                c * h * w
            )));
        }
        x.extend(s.input.iter().map(|&v| T::of(v as f64)));
        y.extend(s.target.iter().map(|&v| T::of(v as f64)));
    }
    Ok((Tensor::from_vec(&[n, c, h, w], x)?, Tensor::from_vec(&[n, out_dim], y)?))
}

/// Trains `net` in place. Minibatch order is shuffled per epoch from `seed`;
/// dropout masks draw from a separate stream of the same seed, so a run is
/// reproducible bit for bit. The network is left in eval mode.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    stream: &dyn SampleStream,
    cfg: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<TrainHistory> {
    if stream.is_empty() {
        return Err(Error::InsufficientData("training stream is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    let trainable = net.trainable();
    let mut adam = AdamState::new(cfg.adam, &net.params());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d209_0000_0001);
    let input_shape = net.spec().input;
    net.set_mode(Mode::Train);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let samples = stream.epoch(epoch)?;
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (x, y) = batch_tensors::<T>(&batch, input_shape)?;
            let (pred, tape) = net.forward(&x, Some(&mut dropout_rng))?;
            let (loss, grad) = mse(&pred, &y);
            if !loss.is_finite() {
                net.set_mode(Mode::Eval);
                return Err(Error::Training(format!("non-finite loss {loss} at epoch {epoch}, batch {bi}")));
            }
            total += loss * chunk.len() as f64;
            let (mut grads, _) = net.backward(&tape, &grad, false);
            for (g, &t) in grads.iter_mut().zip(&trainable) {
                if !t {
                    g.fill(T::zero());
                }
            }
            let mut params = net.params_mut();
            if let Err(e) = adam_step(&mut params, &grads, &mut adam) {
                net.set_mode(Mode::Eval);
                return Err(e);
            }
        }
        let loss = total / samples.len() as f64;
        history.losses.push(loss);
        progress(&EpochStats { epoch, epochs: cfg.epochs, loss, seconds: start.elapsed().as_secs_f64() });
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}

/// Eval-mode mean squared error over a set of samples.
pub fn evaluate_loss<T: Scalar>(net: &Network<T>, samples: &[Sample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, y) = batch_tensors::<T>(&refs, net.spec().input)?;
        let pred = net.infer(&x)?;
        let (loss, _) = mse(&pred, &y);
        total += loss * y.len() as f64;
        count += y.len();
    }
    Ok(total / count as f64)
}
