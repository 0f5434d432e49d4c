//! Report files. JSON reports carry `schema_version`; everything except
//! the timing report is a deterministic function of config, data and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use failsift_core::evaluate::{write_distribution_csv, write_purity_csv};
use failsift_core::render_distribution_svg;
use serde::{Deserialize, Serialize};

use crate::config::{Clusterer, PipelineConfig, Representation};
use crate::pipeline::{ClusterDetail, ClusterOutcome, Evaluation, PipelineRun, TimingReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, fs::File)> {
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, f))
}

/// Cluster index per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub schema_version: u32,
    pub workload: String,
    pub representation: Representation,
    pub clusterer: Clusterer,
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl LabelsFile {
    pub fn new(workload: &str, cfg: &PipelineConfig, row_ids: &[String], outcome: &ClusterOutcome) -> Self {
        LabelsFile {
            schema_version: SCHEMA_VERSION,
            workload: workload.to_string(),
            representation: cfg.representation,
            clusterer: cfg.clusterer,
            k: outcome.k,
            seed: cfg.seed,
            assignments: row_ids.iter().cloned().zip(outcome.labels.iter().copied()).collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let f: LabelsFile = serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))?;
        if f.schema_version != SCHEMA_VERSION {
            bail!("{} has schema version {}, expected {SCHEMA_VERSION}", path.display(), f.schema_version);
        }
        Ok(f)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).with_context(|| format!("writing {}", path.display()))
    }

    /// Row ids and labels in id order.
    pub fn split(&self) -> (Vec<String>, Vec<usize>) {
        self.assignments.iter().map(|(k, v)| (k.clone(), *v)).unzip()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub workload: String,
    pub representation: Representation,
    pub clusterer: Clusterer,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub overall_purity: Option<f64>,
    pub cluster_sizes: Vec<usize>,
    /// DEC only: whether the label-change threshold was reached.
    pub converged: Option<bool>,
    /// DEC only: whether the iteration cap stopped training.
    pub hit_iteration_cap: Option<bool>,
    pub dec_iterations: Option<usize>,
    pub kmedoids_cost: Option<f64>,
}

impl Summary {
    pub fn new(run: &PipelineRun) -> Self {
        let o = &run.outcome;
        let mut sizes = vec![0; o.k];
        for &l in &o.labels {
            sizes[l] += 1;
        }
        let dec = o.dec();
        Summary {
            workload: run.workload.clone(),
            representation: run.config.representation,
            clusterer: run.config.clusterer,
            n: run.features.matrix.nrows(),
            d: run.features.matrix.ncols(),
            k: o.k,
            seed: run.config.seed,
            overall_purity: run.evaluation.as_ref().map(|e| e.purity.overall),
            cluster_sizes: sizes,
            converged: dec.map(|d| d.converged),
            hit_iteration_cap: dec.map(|d| d.hit_iteration_cap),
            dec_iterations: dec.map(|d| d.iterations),
            kmedoids_cost: match &o.detail {
                ClusterDetail::KMedoids(r) => Some(r.total_cost),
                ClusterDetail::Dec { .. } => None,
            },
        }
    }
}

/// `purity.{json,csv}`, `distribution.{json,csv,svg}`, `mapping.json`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation, title: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let p = dir.join("purity.json");
    write_json(&p, &eval.purity)?;
    out.push(p);
    let (p, f) = create(dir, "purity.csv")?;
    write_purity_csv(&eval.purity, f)?;
    out.push(p);
    let p = dir.join("mapping.json");
    write_json(&p, &eval.mapping)?;
    out.push(p);
    let p = dir.join("distribution.json");
    write_json(&p, &eval.distribution)?;
    out.push(p);
    let (p, f) = create(dir, "distribution.csv")?;
    write_distribution_csv(&eval.distribution, f)?;
    out.push(p);
    let p = dir.join("distribution.svg");
    fs::write(&p, render_distribution_svg(&eval.distribution, title)).with_context(|| format!("writing {}", p.display()))?;
    out.push(p);
    Ok(out)
}

/// Cluster artifacts: `labels.json`, plus for DEC the refresh history,
/// centroids, autoencoder loss history and trained model.
pub fn write_clustering(dir: &Path, workload: &str, cfg: &PipelineConfig, row_ids: &[String], o: &ClusterOutcome) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let p = dir.join("labels.json");
    LabelsFile::new(workload, cfg, row_ids, o).write(&p)?;
    out.push(p);
    if let ClusterDetail::Dec { pretrain_history, result } = &o.detail {
        let (p, f) = create(dir, "dec_history.csv")?;
        result.write_history_csv(f)?;
        out.push(p);
        let p = dir.join("centroids.json");
        write_json(&p, &result.centroids)?;
        out.push(p);
        let p = dir.join("autoencoder_history.json");
        write_json(&p, &BTreeMap::from([("records", pretrain_history)]))?;
        out.push(p);
        let p = dir.join("model.json");
        result.model.save(&p)?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_timing(dir: &Path, timing: &TimingReport) -> Result<PathBuf> {
    let p = dir.join("timing.json");
    write_json(&p, timing)?;
    Ok(p)
}

/// Every report of a pipeline run.
pub fn write_run(dir: &Path, run: &PipelineRun) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut out = write_clustering(dir, &run.workload, &run.config, &run.features.matrix.row_ids, &run.outcome)?;
    let p = dir.join("config.json");
    write_json(&p, &run.config)?;
    out.push(p);
    let p = dir.join("summary.json");
    write_json(&p, &Summary::new(run))?;
    out.push(p);
    if let Some(eval) = &run.evaluation {
        let title = format!(
            "{}: {} + {} (purity {:.3})",
            run.workload, run.config.representation, run.config.clusterer, eval.purity.overall
        );
        out.extend(write_evaluation(dir, eval, &title)?);
    }
    out.push(write_timing(dir, &run.timing)?);
    Ok(out)
}
