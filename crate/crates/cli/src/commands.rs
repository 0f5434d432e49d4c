//! Subcommand definitions and handlers.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use failsift_core::{generate_campaign, validate_campaign, AnomalyModel, Campaign, DatasetFormat, SynthSpec};
use serde::Serialize;

use crate::config::{Clusterer, PipelineConfig, PipelineOptions};
use crate::pipeline::{
    build_features, cluster_matrix, evaluate, load_dataset, resolve_k, run_campaign, Stopwatch, TimingReport,
};
use crate::report::{self, write_json, LabelsFile};

/// Failure-mode clustering of fault-injection traces.
#[derive(Debug, Parser)]
#[command(name = "failsift", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a dataset; optionally re-emit it as JSONL.
    Ingest(IngestArgs),
    /// Generate a labelled synthetic campaign.
    Synth(SynthArgs),
    /// Fit the fault-free behaviour model and write anomaly vectors.
    Anomaly(StageArgs),
    /// Cluster a dataset and write labels.
    Cluster(StageArgs),
    /// Score a labels file against ground truth.
    Eval(EvalArgs),
    /// Features, clustering and evaluation in one go.
    Run(StageArgs),
    /// Time k-medoids against DEC on the same features.
    Bench(StageArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset file or directory.
    pub dataset: PathBuf,
    /// `jsonl` or `csv-matrix`; guessed from extensions when absent.
    #[arg(long)]
    pub format: Option<DatasetFormat>,
}

impl DatasetArgs {
    pub fn load(&self) -> Result<Campaign> {
        load_dataset(&self.dataset, self.format)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Write the validated campaign here as JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Ground-truth classes, including the no-failure mode.
    #[arg(long, default_value_t = SynthSpec::default().num_modes)]
    pub modes: usize,
    #[arg(long, default_value_t = SynthSpec::default().base_trace_length)]
    pub length: usize,
    #[arg(long, default_value_t = SynthSpec::default().alphabet_size)]
    pub alphabet: usize,
    /// Planted events per failure mode.
    #[arg(long, default_value_t = SynthSpec::default().mode_signature_length)]
    pub signature: usize,
    /// Per-position probability of a swap or an asynchronous insertion.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = SynthSpec::default().traces_per_mode)]
    pub per_mode: usize,
    #[arg(long, default_value_t = SynthSpec::default().fault_free_count)]
    pub fault_free: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            num_modes: self.modes,
            base_trace_length: self.length,
            alphabet_size: self.alphabet,
            mode_signature_length: self.signature,
            noise_rate: self.noise,
            traces_per_mode: self.per_mode,
            fault_free_count: self.fault_free,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// TOML file with pipeline options; flags win over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report directory.
    #[arg(long, default_value = "failsift-out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub options: PipelineOptions,
}

impl StageArgs {
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        PipelineOptions::load(&self.options, self.config.as_deref())
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// `labels.json` written by `cluster` or `run`.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "failsift-out")]
    pub out: PathBuf,
}

/// One line per written file, for the caller to print.
pub type Written = Vec<PathBuf>;

pub fn execute(cmd: &Command) -> Result<Written> {
    match cmd {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Anomaly(a) => anomaly(a),
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
    }
}

fn out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

#[derive(Debug, Serialize)]
struct IngestSummary<'a> {
    workload: &'a str,
    fault_free: usize,
    fault_injected: usize,
    labels: BTreeMap<String, usize>,
    event_types: usize,
    validation: failsift_core::trace::ValidationReport,
}

pub fn ingest(a: &IngestArgs) -> Result<Written> {
    let c = a.data.load()?;
    let report = validate_campaign(&c);
    let mut labels = BTreeMap::new();
    for t in &c.fault_injected {
        let l = c.label_of(&t.experiment_id).map_or("(unlabelled)", |l| l.as_str());
        *labels.entry(l.to_string()).or_insert(0) += 1;
    }
    let summary = IngestSummary {
        workload: &c.workload_id,
        fault_free: c.fault_free.len(),
        fault_injected: c.fault_injected.len(),
        labels,
        event_types: failsift_core::campaign_alphabet(&c).map_or(0, |a| a.len()),
        validation: report.clone(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if !report.is_usable() {
        bail!("dataset has {} validation error(s)", report.errors().count());
    }
    let mut out = Vec::new();
    if let Some(p) = &a.out {
        c.save_jsonl(p)?;
        out.push(p.clone());
    }
    Ok(out)
}

pub fn synth(a: &SynthArgs) -> Result<Written> {
    let s = generate_campaign(&a.spec())?;
    out_dir(&a.out)?;
    let mut out = Vec::new();
    let p = a.out.join("campaign.jsonl");
    s.campaign.save_jsonl(&p)?;
    out.push(p);
    let p = a.out.join("spec.json");
    write_json(&p, &a.spec())?;
    out.push(p);
    let p = a.out.join("signatures.json");
    write_json(
        &p,
        &serde_json::json!({
            "canonical": s.canonical,
            "async_events": s.async_events,
            "modes": s.signatures,
        }),
    )?;
    out.push(p);
    let p = a.out.join("planted.json");
    write_json(&p, &serde_json::json!({ "traces": s.planted }))?;
    out.push(p);
    Ok(out)
}

pub fn anomaly(a: &StageArgs) -> Result<Written> {
    let cfg = a.pipeline_config()?;
    let mut sw = Stopwatch::new();
    let c = sw.stage("load", || a.data.load())?;
    if c.fault_free.is_empty() {
        bail!("the anomaly stage needs fault-free traces");
    }
    let model = sw.stage("vmm", || AnomalyModel::fit(&c, &cfg.anomaly))?;
    let fm = sw.stage("detect", || model.feature_matrix(&c))?;
    out_dir(&a.out)?;
    let mut out = Vec::new();
    let p = a.out.join("anomaly_model.json");
    model.save(&p)?;
    out.push(p);
    let p = a.out.join("anomaly_matrix.csv");
    let f = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
    fm.write_csv(f, c.is_labeled().then_some(&c.ground_truth))?;
    out.push(p);
    out.push(report::write_timing(&a.out, &sw.report())?);
    Ok(out)
}

pub fn cluster(a: &StageArgs) -> Result<Written> {
    let cfg = a.pipeline_config()?;
    let mut sw = Stopwatch::new();
    let c = sw.stage("load", || a.data.load())?;
    let features = sw.stage("features", || build_features(&c, &cfg))?;
    let k = resolve_k(&cfg, &features.matrix.row_ids, &c.ground_truth)?;
    let outcome = cluster_matrix(&features.matrix, &cfg, k, &mut sw)?;
    out_dir(&a.out)?;
    let mut out = report::write_clustering(&a.out, &c.workload_id, &cfg, &features.matrix.row_ids, &outcome)?;
    let p = a.out.join("config.json");
    write_json(&p, &cfg)?;
    out.push(p);
    out.push(report::write_timing(&a.out, &sw.report())?);
    Ok(out)
}

pub fn eval(a: &EvalArgs) -> Result<Written> {
    let c = a.data.load()?;
    if !c.is_labeled() {
        bail!("{} carries no ground truth", a.data.dataset.display());
    }
    let labels = LabelsFile::read(&a.labels)?;
    let (ids, assignment) = labels.split();
    let e = evaluate(&assignment, &ids, &c.ground_truth)?;
    out_dir(&a.out)?;
    let title = format!(
        "{}: {} + {} (purity {:.3})",
        labels.workload, labels.representation, labels.clusterer, e.purity.overall
    );
    println!("overall purity {:.4}", e.purity.overall);
    report::write_evaluation(&a.out, &e, &title)
}

pub fn run(a: &StageArgs) -> Result<Written> {
    let cfg = a.pipeline_config()?;
    let mut sw = Stopwatch::new();
    let c = sw.stage("load", || a.data.load())?;
    let r = run_campaign(&cfg, &c, sw)?;
    if let Some(e) = &r.evaluation {
        println!("overall purity {:.4}", e.purity.overall);
    }
    report::write_run(&a.out, &r)
}

/// Timing comparison of both clusterers on one feature matrix.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub workload: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub kmedoids_seconds: f64,
    /// Pretraining plus clustering.
    pub dec_seconds: f64,
    /// `dec_seconds - kmedoids_seconds`.
    pub overhead_seconds: f64,
    pub kmedoids_purity: Option<f64>,
    pub dec_purity: Option<f64>,
    pub timing: TimingReport,
}

pub fn bench_campaign(cfg: &PipelineConfig, c: &Campaign, mut sw: Stopwatch) -> Result<BenchReport> {
    let features = sw.stage("features", || build_features(c, cfg))?;
    let fm = &features.matrix;
    let k = resolve_k(cfg, &fm.row_ids, &c.ground_truth)?;
    let km_cfg = PipelineConfig {
        clusterer: Clusterer::Kmedoids,
        ..cfg.clone()
    };
    let dec_cfg = PipelineConfig {
        clusterer: Clusterer::Dec,
        weights: None,
        ..cfg.clone()
    };
    let km = cluster_matrix(fm, &km_cfg, k, &mut sw)?;
    let dec = cluster_matrix(fm, &dec_cfg, k, &mut sw)?;
    let score = |labels: &[usize]| -> Result<Option<f64>> {
        if !c.is_labeled() {
            return Ok(None);
        }
        Ok(Some(evaluate(labels, &fm.row_ids, &c.ground_truth)?.purity.overall))
    };
    let kmedoids_purity = score(&km.labels)?;
    let dec_purity = score(&dec.labels)?;
    let kmedoids_seconds = sw.seconds("kmedoids");
    let dec_seconds = sw.seconds("pretrain") + sw.seconds("dec");
    Ok(BenchReport {
        workload: c.workload_id.clone(),
        n: fm.nrows(),
        d: fm.ncols(),
        k,
        kmedoids_seconds,
        dec_seconds,
        overhead_seconds: dec_seconds - kmedoids_seconds,
        kmedoids_purity,
        dec_purity,
        timing: sw.report(),
    })
}

pub fn bench(a: &StageArgs) -> Result<Written> {
    let cfg = a.pipeline_config()?;
    let mut sw = Stopwatch::new();
    let c = sw.stage("load", || a.data.load())?;
    let r = bench_campaign(&cfg, &c, sw)?;
    println!(
        "n {} d {} k {}: k-medoids {:.2}s, DEC {:.2}s, overhead {:.2}s",
        r.n, r.d, r.k, r.kmedoids_seconds, r.dec_seconds, r.overhead_seconds
    );
    out_dir(&a.out)?;
    let p = a.out.join("timing.json");
    write_json(&p, &r)?;
    Ok(vec![p])
}
