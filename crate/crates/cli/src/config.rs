//! Pipeline settings: defaults, overridden by a TOML file, overridden by
//! flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use failsift_core::anomaly::FoldOrder;
use failsift_core::nn::InputScaling;
use failsift_core::{AnomalyConfig, DecConfig, DistanceMetric, EventAlphabet, SgdConfig, Thresholds};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Raw event-type counts.
    Seq,
    /// Spurious and omitted event counts against fault-free behaviour.
    Anomaly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Clusterer {
    Kmedoids,
    Dec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 100k pretraining and 100k fine-tuning steps.
    Full,
    /// No layer-wise pretraining, 5000 end-to-end steps, globally scaled
    /// inputs.
    Desk,
}

/// Feature scaling in front of the autoencoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Each column to unit variance.
    Column,
    /// Centred columns, one shared factor.
    Global,
}

impl From<Scaling> for InputScaling {
    fn from(s: Scaling) -> Self {
        match s {
            Scaling::Column => InputScaling::Column,
            Scaling::Global => InputScaling::Global,
        }
    }
}

impl Preset {
    pub fn sgd(self) -> SgdConfig {
        match self {
            Preset::Full => SgdConfig::full(),
            Preset::Desk => SgdConfig::desk(),
        }
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Seq => "seq",
            Representation::Anomaly => "anomaly",
        })
    }
}

impl std::fmt::Display for Clusterer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Clusterer::Kmedoids => "kmedoids",
            Clusterer::Dec => "dec",
        })
    }
}

/// Every pipeline option, all optional. Used both as flags and as the
/// schema of the `--config` file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    /// Feature representation.
    #[arg(long = "rep", value_enum)]
    #[serde(alias = "rep")]
    pub representation: Option<Representation>,
    /// Clustering algorithm.
    #[arg(long = "cluster", value_enum)]
    #[serde(alias = "cluster")]
    pub clusterer: Option<Clusterer>,
    /// Number of clusters; defaults to the number of ground-truth labels.
    #[arg(long)]
    pub k: Option<usize>,
    /// k-medoids distance.
    #[arg(long)]
    pub metric: Option<String>,
    /// JSON object of per-event-type k-medoids weights (missing types get 1).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// k-medoids restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Spurious-event probability threshold.
    #[arg(long)]
    pub p_spur: Option<f64>,
    /// Omission probability threshold.
    #[arg(long)]
    pub p_omit: Option<f64>,
    /// Maximum Markov context length.
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Autoencoder schedule preset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub pretrain_iterations: Option<usize>,
    #[arg(long)]
    pub finetune_iterations: Option<usize>,
    #[arg(long, value_enum)]
    pub input_scaling: Option<Scaling>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Learning rate of the clustering phase.
    #[arg(long)]
    pub dec_learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Embedding width; defaults to 10, or less when d is small, never below K.
    #[arg(long)]
    pub bottleneck: Option<usize>,
    /// Encoder layers (2 to 4).
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub update_interval: Option<usize>,
    #[arg(long)]
    pub convergence_threshold: Option<f64>,
    /// Weight of the reconstruction term during clustering.
    #[arg(long)]
    pub reconstruction_weight: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Drop the cluster-frequency normalizer from the target distribution.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_frequency_normalization: Option<bool>,
    /// Seed for every random choice; 0 when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        PipelineOptions { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone())),* }
    };
}

impl PipelineOptions {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&s).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `self` wins over `base`.
    pub fn over(&self, base: &PipelineOptions) -> PipelineOptions {
        overlay!(
            self,
            base,
            representation,
            clusterer,
            k,
            metric,
            weights,
            restarts,
            p_spur,
            p_omit,
            max_order,
            preset,
            pretrain_iterations,
            finetune_iterations,
            input_scaling,
            learning_rate,
            dec_learning_rate,
            momentum,
            batch_size,
            bottleneck,
            depth,
            update_interval,
            convergence_threshold,
            reconstruction_weight,
            max_iterations,
            no_frequency_normalization,
            seed
        )
    }

    /// Flags over the optional config file over defaults.
    pub fn load(flags: &PipelineOptions, config: Option<&Path>) -> Result<PipelineConfig> {
        let merged = match config {
            Some(p) => flags.over(&Self::from_toml_file(p)?),
            None => flags.clone(),
        };
        PipelineConfig::from_options(&merged)
    }
}

/// Autoencoder and clustering-phase settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecSettings {
    pub preset: Preset,
    pub sgd: SgdConfig,
    /// Clustering-phase learning rate.
    pub dec_learning_rate: f64,
    pub bottleneck: Option<usize>,
    pub depth: usize,
    pub update_interval: usize,
    pub convergence_threshold: f64,
    pub reconstruction_weight: f64,
    pub max_iterations: usize,
    pub frequency_normalization: bool,
}

/// Default clustering-phase learning rate.
pub const DEC_LEARNING_RATE: f64 = 0.01;
pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_BOTTLENECK: usize = 10;

impl DecSettings {
    /// Core configuration for `k` clusters.
    pub fn dec_config(&self, k: usize, restarts: usize, seed: u64) -> DecConfig {
        let mut cfg = DecConfig::new(k).with_seed(seed);
        cfg.sgd = SgdConfig {
            learning_rate: self.dec_learning_rate,
            seed,
            ..self.sgd.clone()
        };
        cfg.update_interval = self.update_interval;
        cfg.convergence_threshold = self.convergence_threshold;
        cfg.reconstruction_weight = self.reconstruction_weight;
        cfg.max_iterations = self.max_iterations;
        cfg.frequency_normalization = self.frequency_normalization;
        cfg.init_restarts = restarts;
        cfg
    }

    /// Encoder shape `(bottleneck, depth)` for `d` inputs and `k` clusters:
    /// depth shrinks until every layer can narrow by at least one unit.
    pub fn shape(&self, d: usize, k: usize) -> Result<(usize, usize)> {
        let m = self
            .bottleneck
            .unwrap_or_else(|| DEFAULT_BOTTLENECK.min(d.saturating_sub(2)).max(k));
        if d <= m {
            bail!("{d} features cannot be embedded in {m} dimensions; lower --bottleneck");
        }
        let depth = self.depth.min(d - m).max(1);
        if depth < 2 {
            bail!("{d} features leave no room for a 2-layer encoder to {m} dimensions");
        }
        Ok((m, depth))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub representation: Representation,
    pub clusterer: Clusterer,
    pub k: Option<usize>,
    pub metric: DistanceMetric,
    pub weights: Option<PathBuf>,
    pub restarts: usize,
    pub anomaly: AnomalyConfig,
    pub dec: DecSettings,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::from_options(&PipelineOptions::default()).expect("defaults are valid")
    }
}

impl PipelineConfig {
    pub fn from_options(o: &PipelineOptions) -> Result<Self> {
        let preset = o.preset.unwrap_or(Preset::Desk);
        let mut sgd = preset.sgd();
        if let Some(v) = o.pretrain_iterations {
            sgd.pretrain_iterations = v;
        }
        if let Some(v) = o.finetune_iterations {
            sgd.finetune_iterations = v;
        }
        if let Some(v) = o.input_scaling {
            sgd.input_scaling = v.into();
        }
        if let Some(v) = o.learning_rate {
            sgd.learning_rate = v;
        }
        if let Some(v) = o.momentum {
            sgd.momentum = v;
        }
        if let Some(v) = o.batch_size {
            sgd.batch_size = v;
        }
        let seed = o.seed.unwrap_or(0);
        sgd.seed = seed;
        let metric = match &o.metric {
            Some(m) => m.parse().map_err(|e| anyhow::anyhow!("{e}"))?,
            None => DistanceMetric::default(),
        };
        let defaults = DecConfig::new(2);
        let cfg = PipelineConfig {
            representation: o.representation.unwrap_or(Representation::Seq),
            clusterer: o.clusterer.unwrap_or(Clusterer::Dec),
            k: o.k,
            metric,
            weights: o.weights.clone(),
            restarts: o.restarts.unwrap_or(30),
            anomaly: AnomalyConfig {
                max_order: o.max_order.unwrap_or(failsift_core::anomaly::DEFAULT_MAX_ORDER),
                thresholds: Thresholds {
                    p_spur: o.p_spur.unwrap_or(Thresholds::default().p_spur),
                    p_omit: o.p_omit.unwrap_or(Thresholds::default().p_omit),
                },
                fold_order: FoldOrder::Dataset,
            },
            dec: DecSettings {
                preset,
                sgd,
                dec_learning_rate: o.dec_learning_rate.unwrap_or(DEC_LEARNING_RATE),
                bottleneck: o.bottleneck,
                depth: o.depth.unwrap_or(DEFAULT_DEPTH),
                update_interval: o.update_interval.unwrap_or(defaults.update_interval),
                convergence_threshold: o.convergence_threshold.unwrap_or(defaults.convergence_threshold),
                reconstruction_weight: o.reconstruction_weight.unwrap_or(defaults.reconstruction_weight),
                max_iterations: o.max_iterations.unwrap_or(defaults.max_iterations),
                frequency_normalization: !o.no_frequency_normalization.unwrap_or(false),
            },
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_some() && self.clusterer != Clusterer::Kmedoids {
            bail!("--weights applies to k-medoids only");
        }
        if let Some(k) = self.k {
            if k < 2 {
                bail!("K must be at least 2");
            }
        }
        if self.restarts == 0 {
            bail!("restarts must be at least 1");
        }
        if !(2..=4).contains(&self.dec.depth) {
            bail!("depth must be between 2 and 4");
        }
        let t = self.anomaly.thresholds;
        if !(0.0..=1.0).contains(&t.p_spur) || !(0.0..=1.0).contains(&t.p_omit) {
            bail!("anomaly thresholds must lie in [0, 1]");
        }
        if self.anomaly.max_order == 0 {
            bail!("max_order must be at least 1");
        }
        self.dec.sgd.validate()?;
        self.dec.dec_config(2, self.restarts, self.seed).validate()?;
        Ok(())
    }
}

/// Reads a JSON object `{event type: weight}` and lays it out over the
/// matrix columns. Anomaly columns `spur:<e>` and `omit:<e>` both take the
/// weight of `<e>`.
pub fn load_weights(path: &Path, columns: &[String]) -> Result<Vec<f64>> {
    let s = std::fs::read_to_string(path).with_context(|| format!("reading weights {}", path.display()))?;
    let map: BTreeMap<String, f64> = serde_json::from_str(&s).with_context(|| format!("parsing weights {}", path.display()))?;
    let known = EventAlphabet::from_names(columns.iter().map(|c| strip_prefix(c).to_string()));
    if let Some(unknown) = map.keys().find(|k| !known.contains(k)) {
        bail!("weights name unknown event type {unknown:?}");
    }
    Ok(columns.iter().map(|c| map.get(strip_prefix(c)).copied().unwrap_or(1.0)).collect())
}

fn strip_prefix(c: &str) -> &str {
    c.strip_prefix("spur:").or_else(|| c.strip_prefix("omit:")).unwrap_or(c)
}
