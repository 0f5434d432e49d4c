//! Campaigns, traces and failure labels, plus dataset ingestion.
//!
//! The canonical on-disk form is JSON Lines, one experiment per line:
//!
//! ```text
//! {"experiment_id":"depl-0001","workload":"DEPL","fault_free":false,"events":["a","b"],"label":"InstanceFailure"}
//! ```
//!
//! `label` is `null` for fault-free traces and for unlabeled experiments.
//! A CSV count matrix (header `experiment_id,<event>...,label`) is also
//! accepted; since it carries counts only, each row is expanded into a trace
//! that lists every event type `count` times in column order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One recorded message type occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Event {
    pub type_name: String,
}

impl Event {
    pub fn new(type_name: impl Into<String>) -> Self {
        Event {
            type_name: type_name.into(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.type_name
    }
}

impl From<&str> for Event {
    fn from(s: &str) -> Self {
        Event::new(s)
    }
}

/// The ordered events recorded during one experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub experiment_id: String,
    pub events: Vec<Event>,
    pub fault_free: bool,
}

impl Trace {
    pub fn new<I, E>(experiment_id: impl Into<String>, events: I, fault_free: bool) -> Self
    where
        I: IntoIterator<Item = E>,
        E: Into<Event>,
    {
        Trace {
            experiment_id: experiment_id.into(),
            events: events.into_iter().map(Into::into).collect(),
            fault_free,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Event type names in trace order.
    pub fn type_names(&self) -> impl Iterator<Item = &str> + '_ {
        self.events.iter().map(Event::as_str)
    }
}

/// The failure labels observed in the OpenStack campaigns. Other names are
/// accepted verbatim.
pub const KNOWN_LABELS: [&str; 6] = [
    "InstanceFailure",
    "VolumeFailure",
    "NetworkFailure",
    "SshFailure",
    "CleanupFailure",
    "NoFailure",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailureLabel(pub String);

impl FailureLabel {
    pub fn new(name: impl Into<String>) -> Self {
        FailureLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_known(&self) -> bool {
        KNOWN_LABELS.contains(&self.0.as_str())
    }
}

impl fmt::Display for FailureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FailureLabel {
    fn from(s: &str) -> Self {
        FailureLabel::new(s)
    }
}

/// experiment_id → label. Empty when the campaign is unlabeled.
pub type GroundTruth = BTreeMap<String, FailureLabel>;

/// All experiments of one workload.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Campaign {
    pub workload_id: String,
    pub fault_injected: Vec<Trace>,
    pub fault_free: Vec<Trace>,
    pub ground_truth: GroundTruth,
}

impl Campaign {
    /// Number of fault-injected experiments.
    pub fn n(&self) -> usize {
        self.fault_injected.len()
    }

    pub fn is_labeled(&self) -> bool {
        !self.ground_truth.is_empty()
    }

    /// Fault-free traces followed by fault-injected ones.
    pub fn all_traces(&self) -> impl Iterator<Item = &Trace> + '_ {
        self.fault_free.iter().chain(self.fault_injected.iter())
    }

    pub fn experiment_ids(&self) -> Vec<String> {
        self.fault_injected
            .iter()
            .map(|t| t.experiment_id.clone())
            .collect()
    }

    pub fn label_of(&self, experiment_id: &str) -> Option<&FailureLabel> {
        self.ground_truth.get(experiment_id)
    }

    /// Distinct ground-truth labels, sorted.
    pub fn distinct_labels(&self) -> Vec<FailureLabel> {
        let mut v: Vec<_> = self.ground_truth.values().cloned().collect();
        v.sort();
        v.dedup();
        v
    }

    /// Writes the campaign as canonical JSON Lines: fault-free traces first,
    /// then fault-injected ones, each group in campaign order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for t in self.all_traces() {
            let record = Record {
                experiment_id: t.experiment_id.clone(),
                workload: self.workload_id.clone(),
                fault_free: t.fault_free,
                events: t.events.iter().map(|e| e.type_name.clone()).collect(),
                label: if t.fault_free {
                    None
                } else {
                    self.ground_truth.get(&t.experiment_id).map(|l| l.0.clone())
                },
            };
            serde_json::to_writer(&mut w, &record)?;
            w.write_all(b"\n")
                .map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Jsonl,
    CsvMatrix,
}

impl DatasetFormat {
    fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Jsonl => "jsonl",
            DatasetFormat::CsvMatrix => "csv",
        }
    }

    /// Guesses the format from a file extension, or from the files inside a
    /// directory.
    pub fn detect(path: &Path) -> Option<Self> {
        let by_ext = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Some(DatasetFormat::Jsonl),
            Some("csv") => Some(DatasetFormat::CsvMatrix),
            _ => None,
        };
        if path.is_dir() {
            let mut found = None;
            for entry in std::fs::read_dir(path).ok()?.flatten() {
                match by_ext(&entry.path()) {
                    Some(DatasetFormat::Jsonl) => return Some(DatasetFormat::Jsonl),
                    Some(f) => found = Some(f),
                    None => {}
                }
            }
            found
        } else {
            by_ext(path)
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "csv-matrix" | "csv" => Ok(DatasetFormat::CsvMatrix),
            other => Err(Error::InvalidConfig(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    experiment_id: String,
    #[serde(default)]
    workload: String,
    fault_free: bool,
    events: Vec<String>,
    #[serde(default)]
    label: Option<String>,
}

/// Loads a campaign from a file, or from every file with the format's
/// extension in a directory (read in file-name order).
pub fn load_campaign(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Campaign> {
    let path = path.as_ref();
    let files = dataset_files(path, format)?;
    let mut builder = CampaignBuilder::default();
    for file in &files {
        let f = File::open(file).map_err(|e| Error::io(file, e))?;
        let reader = BufReader::new(f);
        match format {
            DatasetFormat::Jsonl => read_jsonl(reader, &mut builder)?,
            DatasetFormat::CsvMatrix => read_csv_matrix(reader, file, &mut builder)?,
        }
    }
    builder.finish()
}

/// Parses canonical JSON Lines from any reader.
pub fn parse_jsonl<R: BufRead>(reader: R) -> Result<Campaign> {
    let mut builder = CampaignBuilder::default();
    read_jsonl(reader, &mut builder)?;
    builder.finish()
}

fn dataset_files(path: &Path, format: DatasetFormat) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(format.extension()))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyCampaign);
    }
    Ok(files)
}

#[derive(Default)]
struct CampaignBuilder {
    campaign: Campaign,
    seen: HashSet<String>,
    workload_set: bool,
}

impl CampaignBuilder {
    fn push(&mut self, line: usize, workload: &str, trace: Trace, label: Option<String>) -> Result<()> {
        if !self.workload_set {
            self.campaign.workload_id = workload.to_string();
            self.workload_set = true;
        } else if self.campaign.workload_id != workload {
            return Err(Error::MalformedRecord {
                line,
                reason: format!(
                    "workload `{workload}` differs from `{}`",
                    self.campaign.workload_id
                ),
            });
        }
        if !self.seen.insert(trace.experiment_id.clone()) {
            return Err(Error::DuplicateExperimentId(trace.experiment_id));
        }
        if trace.fault_free {
            if label.is_some() {
                return Err(Error::MalformedRecord {
                    line,
                    reason: "fault-free trace carries a failure label".into(),
                });
            }
            self.campaign.fault_free.push(trace);
        } else {
            if let Some(label) = label {
                self.campaign
                    .ground_truth
                    .insert(trace.experiment_id.clone(), FailureLabel(label));
            }
            self.campaign.fault_injected.push(trace);
        }
        Ok(())
    }

    fn finish(self) -> Result<Campaign> {
        if self.seen.is_empty() {
            return Err(Error::EmptyCampaign);
        }
        Ok(self.campaign)
    }
}

fn read_jsonl<R: BufRead>(reader: R, builder: &mut CampaignBuilder) -> Result<()> {
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: lineno,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: lineno,
            reason: e.to_string(),
        })?;
        if record.experiment_id.is_empty() {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: "empty experiment_id".into(),
            });
        }
        if record.events.iter().any(String::is_empty) {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: "empty event type name".into(),
            });
        }
        let trace = Trace::new(record.experiment_id, record.events.iter().map(String::as_str), record.fault_free);
        builder.push(lineno, &record.workload, trace, record.label)?;
    }
    Ok(())
}

fn read_csv_matrix<R: BufRead>(reader: R, file: &Path, builder: &mut CampaignBuilder) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || &headers[0] != "experiment_id" || &headers[headers.len() - 1] != "label" {
        return Err(Error::MalformedRecord {
            line: 1,
            reason: "header must be `experiment_id,<event>...,label`".into(),
        });
    }
    let events: Vec<&str> = headers.iter().skip(1).take(headers.len() - 2).collect();
    if events.iter().any(|e| e.starts_with("spur:") || e.starts_with("omit:")) {
        return Err(Error::MalformedRecord {
            line: 1,
            reason: "anomaly matrices cannot be expanded into traces".into(),
        });
    }
    if events.iter().any(|e| e.is_empty()) {
        return Err(Error::MalformedRecord {
            line: 1,
            reason: "empty event type name in header".into(),
        });
    }
    // Workload id: the file stem.
    let workload = file
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    for (idx, row) in rdr.records().enumerate() {
        let lineno = idx + 2;
        let row = row.map_err(|e| Error::MalformedRecord {
            line: lineno,
            reason: e.to_string(),
        })?;
        if row.len() != headers.len() {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(Error::MalformedRecord {
                line: lineno,
                reason: "empty experiment_id".into(),
            });
        }
        let mut trace_events = Vec::new();
        for (col, name) in events.iter().enumerate() {
            let cell = row[col + 1].trim();
            let count: u64 = cell.parse().map_err(|_| Error::MalformedRecord {
                line: lineno,
                reason: format!("count `{cell}` for `{name}` is not a non-negative integer"),
            })?;
            trace_events.extend(std::iter::repeat(Event::new(*name)).take(count as usize));
        }
        let label = row[headers.len() - 1].trim();
        let label = (!label.is_empty()).then(|| label.to_string());
        let trace = Trace {
            experiment_id: id,
            events: trace_events,
            fault_free: false,
        };
        builder.push(lineno, &workload, trace, label)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub experiment_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> + '_ {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> + '_ {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    /// True when there are no errors; warnings do not block downstream use.
    pub fn is_usable(&self) -> bool {
        self.errors().next().is_none()
    }

    fn push(&mut self, severity: Severity, experiment_id: Option<&str>, message: String) {
        self.issues.push(Issue {
            severity,
            experiment_id: experiment_id.map(str::to_string),
            message,
        });
    }
}

/// Checks an in-memory campaign. Never fails; everything is reported.
pub fn validate_campaign(c: &Campaign) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    let mut injected = HashSet::new();
    for t in c.all_traces() {
        if !seen.insert(t.experiment_id.as_str()) {
            report.push(
                Severity::Error,
                Some(&t.experiment_id),
                "duplicate experiment id".into(),
            );
        }
        if t.events.iter().any(|e| e.type_name.is_empty()) {
            report.push(
                Severity::Error,
                Some(&t.experiment_id),
                "event with empty type name".into(),
            );
        }
        if t.is_empty() {
            report.push(
                Severity::Warning,
                Some(&t.experiment_id),
                "trace has no events".into(),
            );
        }
    }
    for t in &c.fault_injected {
        if t.fault_free {
            report.push(
                Severity::Error,
                Some(&t.experiment_id),
                "fault-free trace listed among fault-injected experiments".into(),
            );
        }
        injected.insert(t.experiment_id.as_str());
    }
    for t in &c.fault_free {
        if !t.fault_free {
            report.push(
                Severity::Error,
                Some(&t.experiment_id),
                "fault-injected trace listed among fault-free experiments".into(),
            );
        }
    }
    for (id, label) in &c.ground_truth {
        if !injected.contains(id.as_str()) {
            report.push(
                Severity::Error,
                Some(id),
                "ground-truth label for an unknown fault-injected experiment".into(),
            );
        }
        if !label.is_known() {
            report.push(
                Severity::Warning,
                Some(id),
                format!("unknown failure label `{label}` (accepted)"),
            );
        }
    }
    report
}
