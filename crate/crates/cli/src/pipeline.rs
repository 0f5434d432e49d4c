//! Stage-by-stage pipeline: load, featurize, cluster, evaluate.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use failsift_core::dec::DecResult;
use failsift_core::evaluate::{distribution_report, map_clusters, purity, resolve_truth};
use failsift_core::nn::LossRecord;
use failsift_core::{
    build_feature_matrix, campaign_alphabet, dec_fit, init_autoencoder, k_medoids, load_campaign, train_autoencoder, AnomalyModel,
    Campaign, ClusterClassMapping, ClusteringResult, DatasetFormat, DistributionReport, FeatureMatrix, GroundTruth, KMedoidsConfig,
    PurityReport,
};
use serde::Serialize;

use crate::config::{load_weights, Clusterer, PipelineConfig, Representation};

#[derive(Debug, Clone, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub stages: Vec<StageTime>,
    pub stage_sum_seconds: f64,
    pub total_seconds: f64,
}

/// Wall-clock per stage. Errors leaving a stage carry its name.
#[derive(Debug)]
pub struct Stopwatch {
    start: Instant,
    stages: Vec<StageTime>,
}

impl Default for Stopwatch {
    fn default() -> Self {
        Self::new()
    }
}

impl Stopwatch {
    pub fn new() -> Self {
        Stopwatch {
            start: Instant::now(),
            stages: Vec::new(),
        }
    }

    pub fn stage<T, E>(&mut self, name: &str, f: impl FnOnce() -> std::result::Result<T, E>) -> Result<T>
    where
        E: Into<anyhow::Error>,
    {
        let t = Instant::now();
        let out = f().map_err(Into::into).with_context(|| format!("stage `{name}` failed"));
        self.stages.push(StageTime {
            stage: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn seconds(&self, name: &str) -> f64 {
        self.stages.iter().filter(|s| s.stage == name).map(|s| s.seconds).sum()
    }

    pub fn report(&self) -> TimingReport {
        let stage_sum_seconds = self.stages.iter().map(|s| s.seconds).sum();
        TimingReport {
            stages: self.stages.clone(),
            stage_sum_seconds,
            total_seconds: self.start.elapsed().as_secs_f64(),
        }
    }
}

pub fn load_dataset(path: &Path, format: Option<DatasetFormat>) -> Result<Campaign> {
    let format = match format {
        Some(f) => f,
        None => DatasetFormat::detect(path)
            .ok_or_else(|| anyhow!("cannot tell the format of {}; pass --format", path.display()))?,
    };
    Ok(load_campaign(path, format)?)
}

pub struct Features {
    pub matrix: FeatureMatrix,
    pub anomaly_model: Option<AnomalyModel>,
}

pub fn build_features(c: &Campaign, cfg: &PipelineConfig) -> Result<Features> {
    match cfg.representation {
        Representation::Seq => {
            let a = campaign_alphabet(c)?;
            Ok(Features {
                matrix: build_feature_matrix(c, &a, None)?,
                anomaly_model: None,
            })
        }
        Representation::Anomaly => {
            if c.fault_free.is_empty() {
                bail!("the anomaly representation needs fault-free traces");
            }
            let model = AnomalyModel::fit(c, &cfg.anomaly)?;
            let matrix = model.feature_matrix(c)?;
            Ok(Features {
                matrix,
                anomaly_model: Some(model),
            })
        }
    }
}

/// `--k`, or the number of distinct ground-truth labels over the rows.
pub fn resolve_k(cfg: &PipelineConfig, row_ids: &[String], gt: &GroundTruth) -> Result<usize> {
    if let Some(k) = cfg.k {
        return Ok(k);
    }
    let labels: std::collections::BTreeSet<_> = row_ids.iter().filter_map(|id| gt.get(id)).collect();
    match labels.len() {
        0 => bail!("no ground truth to infer K from; pass --k"),
        1 => bail!("ground truth has a single label; pass --k"),
        k => Ok(k),
    }
}

pub enum ClusterDetail {
    KMedoids(ClusteringResult),
    Dec {
        pretrain_history: Vec<LossRecord>,
        result: Box<DecResult>,
    },
}

pub struct ClusterOutcome {
    pub k: usize,
    pub labels: Vec<usize>,
    pub detail: ClusterDetail,
}

impl ClusterOutcome {
    pub fn dec(&self) -> Option<&DecResult> {
        match &self.detail {
            ClusterDetail::Dec { result, .. } => Some(result),
            ClusterDetail::KMedoids(_) => None,
        }
    }
}

pub fn kmedoids_config(fm: &FeatureMatrix, cfg: &PipelineConfig, k: usize) -> Result<KMedoidsConfig> {
    let mut km = KMedoidsConfig::new(k)
        .with_metric(cfg.metric)
        .with_restarts(cfg.restarts)
        .with_seed(cfg.seed);
    if let Some(w) = &cfg.weights {
        km = km.with_weights(load_weights(w, &fm.columns)?);
    }
    Ok(km)
}

pub fn cluster_matrix(fm: &FeatureMatrix, cfg: &PipelineConfig, k: usize, sw: &mut Stopwatch) -> Result<ClusterOutcome> {
    match cfg.clusterer {
        Clusterer::Kmedoids => {
            let km = kmedoids_config(fm, cfg, k)?;
            let res = sw.stage("kmedoids", || k_medoids(fm.view(), &km))?;
            Ok(ClusterOutcome {
                k,
                labels: res.assignments.clone(),
                detail: ClusterDetail::KMedoids(res),
            })
        }
        Clusterer::Dec => {
            let (m, depth) = cfg.dec.shape(fm.ncols(), k)?;
            let trained = sw.stage("pretrain", || {
                let model = init_autoencoder(fm.ncols(), m, depth, cfg.seed)?;
                train_autoencoder(model, fm.view(), &cfg.dec.sgd)
            })?;
            let dec_cfg = cfg.dec.dec_config(k, cfg.restarts, cfg.seed);
            let result = sw.stage("dec", || dec_fit(fm.view(), trained.model, &dec_cfg))?;
            Ok(ClusterOutcome {
                k,
                labels: result.labels.clone(),
                detail: ClusterDetail::Dec {
                    pretrain_history: trained.history,
                    result: Box::new(result),
                },
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub mapping: ClusterClassMapping,
    pub purity: PurityReport,
    pub distribution: DistributionReport,
}

pub fn evaluate(labels: &[usize], row_ids: &[String], gt: &GroundTruth) -> Result<Evaluation> {
    let truth = resolve_truth(row_ids, gt)?;
    let mapping = map_clusters(labels, &truth)?;
    let purity = purity(labels, &truth)?;
    let distribution = distribution_report(labels, &truth, &mapping);
    Ok(Evaluation {
        mapping,
        purity,
        distribution,
    })
}

pub struct PipelineRun {
    pub workload: String,
    pub config: PipelineConfig,
    pub features: Features,
    pub outcome: ClusterOutcome,
    pub evaluation: Option<Evaluation>,
    pub timing: TimingReport,
}

/// Full pipeline on a dataset. Evaluation runs when the campaign carries
/// ground truth.
pub fn run_pipeline(cfg: &PipelineConfig, dataset: &Path, format: Option<DatasetFormat>) -> Result<PipelineRun> {
    let mut sw = Stopwatch::new();
    let campaign = sw.stage("load", || load_dataset(dataset, format))?;
    run_campaign(cfg, &campaign, sw)
}

pub fn run_campaign(cfg: &PipelineConfig, campaign: &Campaign, mut sw: Stopwatch) -> Result<PipelineRun> {
    let features = sw.stage("features", || build_features(campaign, cfg))?;
    let k = resolve_k(cfg, &features.matrix.row_ids, &campaign.ground_truth)?;
    let outcome = cluster_matrix(&features.matrix, cfg, k, &mut sw)?;
    let evaluation = if campaign.is_labeled() {
        Some(sw.stage("evaluate", || evaluate(&outcome.labels, &features.matrix.row_ids, &campaign.ground_truth))?)
    } else {
        None
    };
    Ok(PipelineRun {
        workload: campaign.workload_id.clone(),
        config: cfg.clone(),
        features,
        outcome,
        evaluation,
        timing: sw.report(),
    })
}
