//! Central-difference verification of analytic gradients.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dec::{dec_objective, dec_objective_gradients, kl_divergence, kl_gradients, soft_assign, Centroids};
use crate::nn::layer::{backward_stack, forward_stack, LayerGrad};
use crate::nn::train::mse_grad;
use crate::nn::AutoencoderModel;

pub const FD_STEP: f64 = 1e-5;
pub const MIN_SAMPLED_PARAMETERS: usize = 200;

#[derive(Debug, Clone, Copy)]
pub enum CheckLoss<'a> {
    /// Mean squared reconstruction error through encoder and decoder.
    Reconstruction,
    /// Summed KL against a fixed target, checked for encoder parameters,
    /// centroids and the embeddings themselves.
    DecKl {
        centroids: &'a Centroids,
        target: &'a Array2<f64>,
        alpha: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    EncW(usize, usize, usize),
    EncB(usize, usize),
    DecW(usize, usize, usize),
    DecB(usize, usize),
    Mu(usize, usize),
    Z(usize, usize),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic and central-difference gradients on a seeded sample of
/// at least [`MIN_SAMPLED_PARAMETERS`] parameters (all of them if fewer
/// exist). `batch` is taken as already standardized input.
pub fn gradient_check(model: &AutoencoderModel, batch: ArrayView2<f64>, loss: CheckLoss<'_>, seed: u64) -> GradCheckReport {
    let mut model = model.clone();
    let mut slots = Vec::new();
    let layer_slots = |layers: &[crate::nn::DenseLayer], w: fn(usize, usize, usize) -> Slot, b: fn(usize, usize) -> Slot, out: &mut Vec<Slot>| {
        for (l, layer) in layers.iter().enumerate() {
            for ((r, c), _) in layer.weight.indexed_iter() {
                out.push(w(l, r, c));
            }
            for r in 0..layer.bias.len() {
                out.push(b(l, r));
            }
        }
    };
    layer_slots(&model.encoder, Slot::EncW, Slot::EncB, &mut slots);
    match loss {
        CheckLoss::Reconstruction => layer_slots(&model.decoder, Slot::DecW, Slot::DecB, &mut slots),
        CheckLoss::DecKl { centroids, .. } => {
            for ((j, k), _) in centroids.mu.indexed_iter() {
                slots.push(Slot::Mu(j, k));
            }
            for i in 0..batch.nrows() {
                for k in 0..model.bottleneck() {
                    slots.push(Slot::Z(i, k));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slots.shuffle(&mut rng);
    slots.truncate(MIN_SAMPLED_PARAMETERS.max(slots.len().min(4 * MIN_SAMPLED_PARAMETERS)));

    match loss {
        CheckLoss::Reconstruction => {
            let x = batch.to_owned();
            let enc = forward_stack(&model.encoder, batch);
            let dec = forward_stack(&model.decoder, enc.output.view());
            let (dec_g, gz) = backward_stack(&model.decoder, &dec, mse_grad(&dec.output, &x));
            let (enc_g, _) = backward_stack(&model.encoder, &enc, gz);
            let mut worst = 0.0f64;
            for s in &slots {
                let a = layer_grad(s, &enc_g, &dec_g);
                let n = central(|m, h| nudge(m, s, h), &mut model, |m| crate::dec::reconstruction_objective(m, batch));
                worst = worst.max(relative_error(a, n));
            }
            GradCheckReport {
                max_relative_error: worst,
                checked: slots.len(),
            }
        }
        CheckLoss::DecKl { centroids, target, alpha } => {
            let (enc_g, gmu) = dec_objective_gradients(&model, centroids, batch, target, alpha);
            let z = crate::nn::layer::apply_stack(&model.encoder, batch);
            let (gz, _) = kl_gradients(z.view(), centroids, target, alpha);
            let mut mu = centroids.clone();
            let mut worst = 0.0f64;
            for s in &slots {
                let (a, n) = match *s {
                    Slot::Mu(j, k) => {
                        let orig = mu.mu[[j, k]];
                        mu.mu[[j, k]] = orig + FD_STEP;
                        let up = dec_objective(&model, &mu, batch, target, alpha);
                        mu.mu[[j, k]] = orig - FD_STEP;
                        let down = dec_objective(&model, &mu, batch, target, alpha);
                        mu.mu[[j, k]] = orig;
                        (gmu[[j, k]], (up - down) / (2.0 * FD_STEP))
                    }
                    Slot::Z(i, k) => {
                        let mut zz = z.clone();
                        let eval = |zz: &Array2<f64>| kl_divergence(target, &soft_assign(zz.view(), &mu, alpha).q).expect("shapes agree");
                        zz[[i, k]] = z[[i, k]] + FD_STEP;
                        let up = eval(&zz);
                        zz[[i, k]] = z[[i, k]] - FD_STEP;
                        let down = eval(&zz);
                        (gz[[i, k]], (up - down) / (2.0 * FD_STEP))
                    }
                    _ => {
                        let a = layer_grad(s, &enc_g, &[]);
                        let n = central(|m, h| nudge(m, s, h), &mut model, |m| dec_objective(m, &mu, batch, target, alpha));
                        (a, n)
                    }
                };
                worst = worst.max(relative_error(a, n));
            }
            GradCheckReport {
                max_relative_error: worst,
                checked: slots.len(),
            }
        }
    }
}

fn layer_grad(s: &Slot, enc: &[LayerGrad], dec: &[LayerGrad]) -> f64 {
    match *s {
        Slot::EncW(l, r, c) => enc[l].weight[[r, c]],
        Slot::EncB(l, r) => enc[l].bias[r],
        Slot::DecW(l, r, c) => dec[l].weight[[r, c]],
        Slot::DecB(l, r) => dec[l].bias[r],
        Slot::Mu(..) | Slot::Z(..) => unreachable!("not a layer parameter"),
    }
}

fn nudge(m: &mut AutoencoderModel, s: &Slot, h: f64) {
    match *s {
        Slot::EncW(l, r, c) => m.encoder[l].weight[[r, c]] += h,
        Slot::EncB(l, r) => m.encoder[l].bias[r] += h,
        Slot::DecW(l, r, c) => m.decoder[l].weight[[r, c]] += h,
        Slot::DecB(l, r) => m.decoder[l].bias[r] += h,
        Slot::Mu(..) | Slot::Z(..) => unreachable!("not a layer parameter"),
    }
}

fn central(
    mut nudge: impl FnMut(&mut AutoencoderModel, f64),
    model: &mut AutoencoderModel,
    f: impl Fn(&AutoencoderModel) -> f64,
) -> f64 {
    let orig = model.clone();
    nudge(model, FD_STEP);
    let up = f(model);
    *model = orig.clone();
    nudge(model, -FD_STEP);
    let down = f(model);
    *model = orig;
    (up - down) / (2.0 * FD_STEP)
}
