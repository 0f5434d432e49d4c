//! Deep embedded clustering: Student's-t soft assignment sharpened against a
//! target distribution, trained through the encoder.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmedoids::{k_medoids, DistanceMetric, KMedoidsConfig};
use crate::nn::autoencoder::mse;
use crate::nn::layer::{backward_stack, forward_stack, LayerGrad};
use crate::nn::train::{mse_grad, BatchSampler, Momentum};
use crate::nn::{AutoencoderModel, SgdConfig};

/// Soft clusters with total mass below this are degenerate.
pub const MIN_CLUSTER_FREQUENCY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    /// `K × m`; row `j` is centre `μ_j`.
    pub mu: Array2<f64>,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.mu.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.mu.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    /// `n × K`, row-stochastic.
    pub q: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    /// `n × K`, row-stochastic.
    pub p: Array2<f64>,
}

impl SoftAssignment {
    /// Per-row argmax; ties go to the lowest cluster index.
    pub fn hard_labels(&self) -> Vec<usize> {
        argmax_rows(&self.q)
    }
}

pub(crate) fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (j, v) in r.iter().enumerate() {
                if *v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Shannon entropy (nats) of each row.
pub fn row_entropy(m: &Array2<f64>) -> Vec<f64> {
    m.rows()
        .into_iter()
        .map(|r| r.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum())
        .collect()
}

fn kernel(sq_dist: f64, alpha: f64) -> f64 {
    (1.0 + sq_dist / alpha).powf(-(alpha + 1.0) / 2.0)
}

fn sq_distances(z: ArrayView2<f64>, mu: ArrayView2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((z.nrows(), mu.nrows()), |(i, j)| {
        z.row(i).iter().zip(mu.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
    })
}

pub fn soft_assign(z: ArrayView2<f64>, centroids: &Centroids, alpha: f64) -> SoftAssignment {
    let mut q = sq_distances(z, centroids.mu.view()).mapv(|d| kernel(d, alpha));
    for mut row in q.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    SoftAssignment { q }
}

/// `p_ij ∝ q_ij² / f_j` with `f_j = Σ_i q_ij`.
pub fn target_distribution(q: &SoftAssignment) -> Result<TargetDistribution> {
    target_distribution_with(q, true)
}

/// Without frequency normalization the target is `p_ij ∝ q_ij²`.
pub fn target_distribution_with(q: &SoftAssignment, frequency_normalization: bool) -> Result<TargetDistribution> {
    let f = q.q.sum_axis(Axis(0));
    if let Some((cluster, &frequency)) = f.iter().enumerate().find(|(_, v)| **v < MIN_CLUSTER_FREQUENCY) {
        return Err(Error::DegenerateCluster { cluster, frequency });
    }
    let mut p = q.q.mapv(|v| v * v);
    if frequency_normalization {
        p /= &f;
    }
    for mut row in p.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    Ok(TargetDistribution { p })
}

/// `Σ_i Σ_j p_ij log(p_ij / q_ij)` with `0 log 0 = 0`.
pub fn kl_loss(p: &TargetDistribution, q: &SoftAssignment) -> Result<f64> {
    kl_divergence(&p.p, &q.q)
}

pub(crate) fn kl_divergence(p: &Array2<f64>, q: &Array2<f64>) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch(format!("p is {:?}, q is {:?}", p.shape(), q.shape())));
    }
    Ok(p.iter()
        .zip(q.iter())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q).ln())
        .sum())
}

/// Gradients of the summed KL loss with `p` held fixed. Returns
/// `(∂L/∂z, ∂L/∂μ)`.
pub fn kl_gradients(z: ArrayView2<f64>, centroids: &Centroids, p: &Array2<f64>, alpha: f64) -> (Array2<f64>, Array2<f64>) {
    let mu = &centroids.mu;
    let d2 = sq_distances(z, mu.view());
    let q = soft_assign(z, centroids, alpha).q;
    let c = (alpha + 1.0) / alpha;
    let mut gz = Array2::<f64>::zeros(z.raw_dim());
    let mut gmu = Array2::<f64>::zeros(mu.raw_dim());
    for i in 0..z.nrows() {
        for j in 0..mu.nrows() {
            let w = c * (p[[i, j]] - q[[i, j]]) / (1.0 + d2[[i, j]] / alpha);
            for k in 0..z.ncols() {
                let g = w * (z[[i, k]] - mu[[j, k]]);
                gz[[i, k]] += g;
                gmu[[j, k]] -= g;
            }
        }
    }
    (gz, gmu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecConfig {
    pub k: usize,
    /// Student's-t degrees of freedom.
    pub alpha: f64,
    /// Mini-batch steps between target refreshes.
    pub update_interval: usize,
    /// Stop once fewer than this fraction of labels change between refreshes.
    pub convergence_threshold: f64,
    /// Weight λ of the joint reconstruction term; 0 drops the decoder.
    pub reconstruction_weight: f64,
    pub sgd: SgdConfig,
    pub init_restarts: usize,
    pub max_iterations: usize,
    pub frequency_normalization: bool,
    pub seed: u64,
}

impl DecConfig {
    pub fn new(k: usize) -> Self {
        DecConfig {
            k,
            alpha: 1.0,
            update_interval: 150,
            convergence_threshold: 0.001,
            reconstruction_weight: 0.0,
            sgd: SgdConfig::default(),
            init_restarts: 30,
            max_iterations: 20_000,
            frequency_normalization: true,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k < 2 {
            return bad("K must be at least 2");
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return bad("alpha must be positive");
        }
        if self.update_interval == 0 {
            return bad("update_interval must be at least 1");
        }
        if !(self.convergence_threshold > 0.0 && self.convergence_threshold < 1.0) {
            return bad("convergence_threshold must lie in (0, 1)");
        }
        if self.reconstruction_weight.is_nan() || self.reconstruction_weight < 0.0 {
            return bad("reconstruction_weight must be non-negative");
        }
        if self.init_restarts == 0 {
            return bad("init_restarts must be at least 1");
        }
        self.sgd.validate()
    }
}

/// Medoids of an L2 k-medoids run on the embeddings.
pub fn init_centroids(z: ArrayView2<f64>, cfg: &DecConfig) -> Result<Centroids> {
    let km = KMedoidsConfig::new(cfg.k)
        .with_metric(DistanceMetric::L2)
        .with_restarts(cfg.init_restarts)
        .with_seed(cfg.seed);
    let res = k_medoids(z, &km)?;
    Ok(Centroids {
        mu: z.select(Axis(0), &res.medoid_rows),
    })
}

/// State at one target refresh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefreshRecord {
    pub iteration: usize,
    /// Full-dataset KL divergence divided by `n`.
    pub kl_loss: f64,
    /// `None` at the first refresh.
    pub label_change_fraction: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct DecResult {
    pub model: AutoencoderModel,
    pub centroids: Centroids,
    pub labels: Vec<usize>,
    pub soft: SoftAssignment,
    pub history: Vec<RefreshRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub hit_iteration_cap: bool,
}

impl DecResult {
    pub fn write_history_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "kl_loss", "label_change_fraction", "learning_rate"])?;
        for r in &self.history {
            out.write_record([
                r.iteration.to_string(),
                r.kl_loss.to_string(),
                r.label_change_fraction.map(|v| v.to_string()).unwrap_or_default(),
                r.learning_rate.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::Serialization(e.to_string()))?;
        Ok(())
    }

    pub fn save_centroids(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let s = serde_json::to_string_pretty(&self.centroids)?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

/// Alternates target refreshes with mini-batch KL descent on the encoder
/// and centroids. `x` holds raw features; the model's standardizer is
/// applied first.
pub fn dec_fit(x: ArrayView2<f64>, model: AutoencoderModel, cfg: &DecConfig) -> Result<DecResult> {
    cfg.validate()?;
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: x.ncols(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let n = x.nrows();
    if n < cfg.k {
        return Err(Error::TooFewPoints { n, k: cfg.k });
    }
    let data = model.prepare(x);
    let mut model = model;
    let z0 = crate::nn::layer::apply_stack(&model.encoder, data.view());
    let mut centroids = init_centroids(z0.view(), cfg)?;

    let joint = cfg.reconstruction_weight > 0.0;
    let mut enc_opt = Momentum::new(&model.encoder);
    let mut dec_opt = Momentum::new(&model.decoder);
    let mut mu_velocity = Array2::<f64>::zeros(centroids.mu.raw_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = BatchSampler::new(n, cfg.sgd.batch_size);

    let mut history = Vec::new();
    let mut prev_labels: Option<Vec<usize>> = None;
    let mut target = Array2::<f64>::zeros((n, cfg.k));
    let mut converged = false;
    let mut hit_cap = false;
    let mut it = 0;
    let soft = loop {
        if it % cfg.update_interval == 0 || it == cfg.max_iterations {
            let z = crate::nn::layer::apply_stack(&model.encoder, data.view());
            let q = soft_assign(z.view(), &centroids, cfg.alpha);
            let p = target_distribution_with(&q, cfg.frequency_normalization)?;
            let kl = kl_loss(&p, &q)? / n as f64;
            if !kl.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "dec".into(),
                    step: it,
                });
            }
            let labels = q.hard_labels();
            let change = prev_labels
                .as_ref()
                .map(|prev| prev.iter().zip(&labels).filter(|(a, b)| a != b).count() as f64 / n as f64);
            history.push(RefreshRecord {
                iteration: it,
                kl_loss: kl,
                label_change_fraction: change,
                learning_rate: cfg.sgd.learning_rate_at(it),
            });
            if change.is_some_and(|c| c < cfg.convergence_threshold) {
                converged = true;
                break q;
            }
            if it == cfg.max_iterations {
                hit_cap = true;
                break q;
            }
            prev_labels = Some(labels);
            target = p.p;
        }

        let idx = sampler.next(&mut rng);
        let batch = data.select(Axis(0), &idx);
        let p_batch = target.select(Axis(0), &idx);
        let b = idx.len() as f64;
        let enc_cache = forward_stack(&model.encoder, batch.view());
        let (mut gz, mut gmu) = kl_gradients(enc_cache.output.view(), &centroids, &p_batch, cfg.alpha);
        gz /= b;
        gmu /= b;
        let lr = cfg.sgd.learning_rate_at(it);
        if joint {
            let dec_cache = forward_stack(&model.decoder, enc_cache.output.view());
            let recon_grad = mse_grad(&dec_cache.output, &batch) * cfg.reconstruction_weight;
            let (dec_grads, gz_recon) = backward_stack(&model.decoder, &dec_cache, recon_grad);
            gz += &gz_recon;
            dec_opt.step(&mut model.decoder, &dec_grads, lr, cfg.sgd.momentum, cfg.sgd.weight_decay);
        }
        let (enc_grads, _) = backward_stack(&model.encoder, &enc_cache, gz);
        enc_opt.step(&mut model.encoder, &enc_grads, lr, cfg.sgd.momentum, cfg.sgd.weight_decay);
        mu_velocity.zip_mut_with(&gmu, |v, g| *v = cfg.sgd.momentum * *v - lr * g);
        centroids.mu += &mu_velocity;
        if !model.is_finite() || !centroids.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase: "dec".into(),
                step: it + 1,
            });
        }
        it += 1;
    };
    Ok(DecResult {
        labels: soft.hard_labels(),
        soft,
        model,
        centroids,
        history,
        iterations: it,
        converged,
        hit_iteration_cap: hit_cap,
    })
}

/// Loss used by gradient checks: summed KL of encoder embeddings of
/// standardized rows `x` against fixed targets `p`.
pub(crate) fn dec_objective(model: &AutoencoderModel, centroids: &Centroids, x: ArrayView2<f64>, p: &Array2<f64>, alpha: f64) -> f64 {
    let z = crate::nn::layer::apply_stack(&model.encoder, x);
    let q = soft_assign(z.view(), centroids, alpha);
    kl_divergence(p, &q.q).expect("shapes agree")
}

/// Analytic gradients of [`dec_objective`] for encoder layers and centroids.
pub(crate) fn dec_objective_gradients(
    model: &AutoencoderModel,
    centroids: &Centroids,
    x: ArrayView2<f64>,
    p: &Array2<f64>,
    alpha: f64,
) -> (Vec<LayerGrad>, Array2<f64>) {
    let cache = forward_stack(&model.encoder, x);
    let (gz, gmu) = kl_gradients(cache.output.view(), centroids, p, alpha);
    let (grads, _) = backward_stack(&model.encoder, &cache, gz);
    (grads, gmu)
}

pub(crate) fn reconstruction_objective(model: &AutoencoderModel, x: ArrayView2<f64>) -> f64 {
    let y = model.reconstruct_prepared(x);
    mse(&y, &x.to_owned())
}

/// Cluster frequencies `f_j = Σ_i q_ij`.
pub fn cluster_frequencies(q: &SoftAssignment) -> Array1<f64> {
    q.q.sum_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sa(q: Array2<f64>) -> SoftAssignment {
        SoftAssignment { q }
    }

    #[test]
    fn soft_assign_direct_formula() {
        let c = Centroids {
            mu: array![[0.0, 0.0], [3f64.sqrt(), 0.0]],
        };
        let q = soft_assign(array![[0.0, 0.0]].view(), &c, 1.0);
        assert!((q.q[[0, 0]] - 0.8).abs() < 1e-12);
        assert!((q.q[[0, 1]] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn equidistant_point_is_uniform() {
        let c = Centroids {
            mu: array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
        };
        let q = soft_assign(array![[0.0, 0.0]].view(), &c, 1.0);
        for v in q.q.iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn target_direct_formula() {
        let p = target_distribution(&sa(array![[0.9, 0.1], [0.6, 0.4]])).unwrap().p;
        let want = array![[0.9643, 0.0357], [0.4286, 0.5714]];
        for (a, b) in p.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn single_sample_target_is_identity() {
        let q = array![[0.2, 0.5, 0.3]];
        let p = target_distribution(&sa(q.clone())).unwrap().p;
        for (a, b) in p.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_is_fixed_point() {
        let q = array![[1.0, 0.0], [0.3, 0.7]];
        let p = target_distribution(&sa(q)).unwrap().p;
        assert_eq!(p.row(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn empty_soft_cluster_is_degenerate() {
        let q = array![[1.0, 0.0], [1.0, 0.0]];
        assert!(matches!(
            target_distribution(&sa(q)),
            Err(Error::DegenerateCluster { cluster: 1, .. })
        ));
    }

    #[test]
    fn kl_examples() {
        let p = TargetDistribution { p: array![[1.0, 0.0]] };
        let q = sa(array![[0.5, 0.5]]);
        assert!((kl_loss(&p, &q).unwrap() - 2f64.ln()).abs() < 1e-12);
        let same = TargetDistribution { p: array![[0.3, 0.7]] };
        assert_eq!(kl_loss(&same, &sa(array![[0.3, 0.7]])).unwrap(), 0.0);
        assert!(matches!(kl_loss(&p, &sa(array![[0.5, 0.5], [0.5, 0.5]])), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn init_with_k_equal_n_uses_every_point() {
        let z = array![[0.0, 0.0], [1.0, 0.0], [0.0, 5.0]];
        let c = init_centroids(z.view(), &DecConfig::new(3)).unwrap();
        let mut rows: Vec<Vec<f64>> = c.mu.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, vec![vec![0.0, 0.0], vec![0.0, 5.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn init_needs_k_points() {
        let z = array![[0.0], [1.0]];
        assert!(matches!(init_centroids(z.view(), &DecConfig::new(3)), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_rows(&array![[0.5, 0.5], [0.2, 0.8]]), vec![0, 1]);
    }
}
