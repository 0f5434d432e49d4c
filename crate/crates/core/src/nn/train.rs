use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autoencoder::{mse, AutoencoderModel, InputScaling, Standardizer};
use super::layer::{apply_stack, backward_stack, forward_stack, DenseLayer, LayerGrad};
use crate::error::{Error, Result};

/// Steps per loss-history record.
pub const HISTORY_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// The rate is divided by `lr_decay_factor` every `lr_decay_every` steps.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Steps per greedy layer pair.
    pub pretrain_iterations: usize,
    pub finetune_iterations: usize,
    /// Input dropout during pretraining only.
    pub dropout: f64,
    #[serde(default)]
    pub input_scaling: InputScaling,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl SgdConfig {
    /// Full-length schedule: 100k pretraining and 100k fine-tuning steps.
    pub fn full() -> Self {
        SgdConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            lr_decay_every: 20_000,
            lr_decay_factor: 10.0,
            weight_decay: 0.0,
            batch_size: 256,
            pretrain_iterations: 100_000,
            finetune_iterations: 100_000,
            dropout: 0.2,
            input_scaling: InputScaling::Column,
            seed: 0,
        }
    }

    /// Same hyperparameters with 5000 + 5000 steps.
    pub fn desk() -> Self {
        SgdConfig {
            pretrain_iterations: 0,
            finetune_iterations: 5_000,
            input_scaling: InputScaling::Global,
            ..Self::full()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, pretrain: usize, finetune: usize) -> Self {
        self.pretrain_iterations = pretrain;
        self.finetune_iterations = finetune;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_decay_every == 0 || self.lr_decay_factor.is_nan() || self.lr_decay_factor < 1.0 {
            return bad("lr decay needs a positive period and a factor >= 1");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Step-decayed rate at phase-local step `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        let drops = (t / self.lr_decay_every) as i32;
        self.learning_rate / self.lr_decay_factor.powi(drops)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum TrainPhase {
    Pretrain { layer: usize },
    Finetune,
}

impl fmt::Display for TrainPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainPhase::Pretrain { layer } => write!(f, "pretrain-{layer}"),
            TrainPhase::Finetune => f.write_str("finetune"),
        }
    }
}

/// Mean loss over a window of steps ending at `step` (phase-local, 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    #[serde(flatten)]
    pub phase: TrainPhase,
    pub step: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: AutoencoderModel,
    pub history: Vec<LossRecord>,
}

/// Momentum state `v ← μv − lr·g; θ ← θ + v` for a list of layers.
#[derive(Debug, Clone)]
pub struct Momentum {
    velocity: Vec<LayerGrad>,
}

impl Momentum {
    pub fn new(layers: &[DenseLayer]) -> Self {
        Momentum {
            velocity: layers.iter().map(LayerGrad::zeros_like).collect(),
        }
    }

    pub fn step(&mut self, layers: &mut [DenseLayer], grads: &[LayerGrad], lr: f64, momentum: f64, weight_decay: f64) {
        for ((layer, g), v) in layers.iter_mut().zip(grads).zip(&mut self.velocity) {
            ndarray::Zip::from(&mut v.weight)
                .and(&g.weight)
                .and(&layer.weight)
                .for_each(|v, &g, &w| *v = momentum * *v - lr * (g + weight_decay * w));
            ndarray::Zip::from(&mut v.bias)
                .and(&g.bias)
                .for_each(|v, &g| *v = momentum * *v - lr * g);
            layer.weight += &v.weight;
            layer.bias += &v.bias;
        }
    }
}

/// Endless shuffled mini-batch index stream.
pub(crate) struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl BatchSampler {
    pub(crate) fn new(n: usize, batch: usize) -> Self {
        BatchSampler {
            order: (0..n).collect(),
            pos: n,
            batch: batch.min(n),
        }
    }

    pub(crate) fn next<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let take = (self.batch - out.len()).min(self.order.len() - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

pub(crate) struct HistoryWindow {
    phase: TrainPhase,
    sum: f64,
    count: usize,
}

impl HistoryWindow {
    pub(crate) fn new(phase: TrainPhase) -> Self {
        HistoryWindow { phase, sum: 0.0, count: 0 }
    }

    /// Accumulates one step's loss; emits a record at window boundaries or
    /// on the final step.
    pub(crate) fn push(&mut self, step: usize, last: bool, loss: f64, lr: f64, out: &mut Vec<LossRecord>) {
        self.sum += loss;
        self.count += 1;
        if step % HISTORY_WINDOW == 0 || last {
            out.push(LossRecord {
                phase: self.phase,
                step,
                loss: self.sum / self.count as f64,
                learning_rate: lr,
            });
            self.sum = 0.0;
            self.count = 0;
        }
    }
}

/// Gradient of the mean squared error with respect to `pred`.
pub(crate) fn mse_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let scale = 2.0 / pred.len().max(1) as f64;
    (pred - target) * scale
}

/// Greedy denoising pretraining of each layer pair followed by end-to-end
/// fine-tuning. Fits and stores the input standardizer on `x` first.
pub fn train_autoencoder(mut model: AutoencoderModel, x: ArrayView2<f64>, cfg: &SgdConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: x.ncols(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("training matrix has no rows"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let standardizer = Standardizer::fit_with(x, cfg.input_scaling);
    let data = standardizer.transform(x);
    model.standardizer = Some(standardizer);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();

    for l in 0..model.depth() {
        let level = apply_stack(&model.encoder[..l], data.view());
        let d = model.mirror(l);
        let mut pair = vec![model.encoder[l].clone(), model.decoder[d].clone()];
        train_stack(&mut pair, &level, cfg, TrainPhase::Pretrain { layer: l }, cfg.pretrain_iterations, cfg.dropout, &mut rng, &mut history)?;
        model.decoder[d] = pair.pop().expect("pair");
        model.encoder[l] = pair.pop().expect("pair");
    }

    let depth = model.depth();
    let mut stack: Vec<DenseLayer> = model.encoder.drain(..).chain(model.decoder.drain(..)).collect();
    train_stack(&mut stack, &data, cfg, TrainPhase::Finetune, cfg.finetune_iterations, 0.0, &mut rng, &mut history)?;
    model.decoder = stack.split_off(depth);
    model.encoder = stack;
    Ok(TrainOutput { model, history })
}

#[allow(clippy::too_many_arguments)]
fn train_stack(
    layers: &mut [DenseLayer],
    data: &Array2<f64>,
    cfg: &SgdConfig,
    phase: TrainPhase,
    iterations: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
    history: &mut Vec<LossRecord>,
) -> Result<()> {
    let mut opt = Momentum::new(layers);
    let mut sampler = BatchSampler::new(data.nrows(), cfg.batch_size);
    let mut window = HistoryWindow::new(phase);
    let keep = 1.0 - dropout;
    for t in 0..iterations {
        let idx = sampler.next(rng);
        let target = data.select(Axis(0), &idx);
        let input = if dropout > 0.0 {
            target.mapv(|v| if rng.random::<f64>() < dropout { 0.0 } else { v / keep })
        } else {
            target.clone()
        };
        let cache = forward_stack(layers, input.view());
        let loss = mse(&cache.output, &target);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase: phase.to_string(),
                step: t + 1,
            });
        }
        let lr = cfg.learning_rate_at(t);
        window.push(t + 1, t + 1 == iterations, loss, lr, history);
        let (grads, _) = backward_stack(layers, &cache, mse_grad(&cache.output, &target));
        opt.step(layers, &grads, lr, cfg.momentum, cfg.weight_decay);
    }
    if layers.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss {
            phase: phase.to_string(),
            step: iterations,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::autoencoder::init_autoencoder;

    #[test]
    fn presets() {
        let p = SgdConfig::full();
        assert_eq!((p.pretrain_iterations, p.finetune_iterations), (100_000, 100_000));
        assert_eq!((p.learning_rate, p.momentum, p.batch_size, p.dropout), (0.1, 0.9, 256, 0.2));
        assert_eq!(p.weight_decay, 0.0);
        let d = SgdConfig::desk();
        assert_eq!((d.pretrain_iterations, d.finetune_iterations), (0, 5_000));
        assert_eq!(d.input_scaling, InputScaling::Global);
    }

    #[test]
    fn step_schedule() {
        let c = SgdConfig::full();
        assert_eq!(c.learning_rate_at(0), 0.1);
        assert_eq!(c.learning_rate_at(19_999), 0.1);
        assert!((c.learning_rate_at(20_000) - 0.01).abs() < 1e-15);
        assert!((c.learning_rate_at(45_000) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn invalid_config() {
        let mut c = SgdConfig::desk();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c.momentum = 0.9;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sampler_covers_each_row_once_per_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BatchSampler::new(10, 4);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| s.next(&mut rng)).collect();
        assert_eq!(seen.len(), 20);
        seen.truncate(10);
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn constant_dataset_is_fitted() {
        let x = Array2::from_elem((40, 6), 3.0);
        let model = init_autoencoder(6, 2, 2, 0).unwrap();
        let cfg = SgdConfig::desk().with_iterations(300, 300);
        let out = train_autoencoder(model, x.view(), &cfg).unwrap();
        assert!(out.model.reconstruction_loss(x.view()).unwrap() < 1e-3);
    }

    #[test]
    fn history_is_recorded_per_window() {
        let x = Array2::from_shape_fn((50, 8), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let model = init_autoencoder(8, 3, 2, 0).unwrap();
        let cfg = SgdConfig::desk().with_iterations(250, 200);
        let out = train_autoencoder(model, x.view(), &cfg).unwrap();
        let steps: Vec<_> = out.history.iter().map(|r| (r.phase, r.step)).collect();
        let p0 = TrainPhase::Pretrain { layer: 0 };
        let p1 = TrainPhase::Pretrain { layer: 1 };
        assert_eq!(
            steps,
            vec![
                (p0, 100),
                (p0, 200),
                (p0, 250),
                (p1, 100),
                (p1, 200),
                (p1, 250),
                (TrainPhase::Finetune, 100),
                (TrainPhase::Finetune, 200)
            ]
        );
    }

    #[test]
    fn divergence_is_reported() {
        let x = Array2::from_shape_fn((30, 5), |(i, j)| ((i + j) % 4) as f64);
        let model = init_autoencoder(5, 2, 2, 0).unwrap();
        let mut cfg = SgdConfig::desk().with_iterations(200, 0);
        cfg.learning_rate = 1e6;
        assert!(matches!(train_autoencoder(model, x.view(), &cfg), Err(Error::NonFiniteLoss { .. })));
    }
}
