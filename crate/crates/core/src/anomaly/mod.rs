//! Anomaly-vector features: an LCS backbone over fault-free traces marks
//! common events as normal, and a variable-order Markov model decides which
//! remaining deviations count as spurious or omitted events.

pub mod lcs;
pub mod vmm;

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Campaign, Event, Trace};
use crate::vectorize::{campaign_alphabet, EventAlphabet, FeatureMatrix};

pub use lcs::{is_subsequence, lcs_alignment, lcs_len, lcs_pair};
pub use vmm::{train_vmm, train_vmm_with_alphabet, Smoothing, VmmModel, DEFAULT_MAX_ORDER};

/// Events common to every fault-free trace, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonBackbone {
    pub events: Vec<Event>,
}

impl CommonBackbone {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_subsequence_of(&self, t: &Trace) -> bool {
        is_subsequence(&self.events, &t.events)
    }
}

/// Order in which fault-free traces are folded into the backbone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldOrder {
    /// As listed in the dataset.
    #[default]
    Dataset,
    /// Longest trace first; ties keep dataset order.
    LengthDescending,
}

/// Left fold of [`lcs_pair`] over `fault_free` in dataset order.
pub fn fold_backbone(fault_free: &[Trace]) -> Result<CommonBackbone> {
    fold_backbone_ordered(fault_free, FoldOrder::Dataset)
}

pub fn fold_backbone_ordered(fault_free: &[Trace], order: FoldOrder) -> Result<CommonBackbone> {
    let mut refs: Vec<&Trace> = fault_free.iter().collect();
    if order == FoldOrder::LengthDescending {
        refs.sort_by_key(|t| std::cmp::Reverse(t.len()));
    }
    let mut it = refs.into_iter();
    let first = it
        .next()
        .ok_or(Error::EmptyInput("no fault-free traces for the backbone"))?;
    let events = it.fold(first.events.clone(), |acc, t| lcs_pair(&acc, &t.events));
    Ok(CommonBackbone { events })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Unmatched events less likely than this are spurious.
    pub p_spur: f64,
    /// Missing backbone events at least this likely are omissions.
    pub p_omit: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            p_spur: 0.10,
            p_omit: 0.50,
        }
    }
}

/// Per-type spurious and omission counts over a column alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalyVector {
    pub spurious: Vec<u64>,
    pub omission: Vec<u64>,
}

impl AnomalyVector {
    fn zeros(d: usize) -> Self {
        AnomalyVector {
            spurious: vec![0; d],
            omission: vec![0; d],
        }
    }

    /// `spurious ++ omission`, length `2d`.
    pub fn concat(&self) -> Vec<u64> {
        self.spurious.iter().chain(&self.omission).copied().collect()
    }
}

/// Scores one fault-injected trace against the backbone.
///
/// Events of `t` matched by the LCS alignment with the backbone are normal.
/// An unmatched event is spurious when its probability given the preceding
/// events of `t` is below `p_spur` (events unknown to the model always are).
/// An unmatched backbone event is an omission when its probability given the
/// backbone events before it is at least `p_omit`. Counts are indexed by
/// `alphabet`, which must contain every event of `t` and of the backbone.
pub fn detect_anomalies(
    t: &Trace,
    backbone: &CommonBackbone,
    model: &VmmModel,
    alphabet: &EventAlphabet,
    thresholds: Thresholds,
) -> Result<AnomalyVector> {
    let d = alphabet.len();
    let mut out = AnomalyVector::zeros(d);
    let col = |name: &str| {
        alphabet
            .index_of(name)
            .ok_or_else(|| Error::UnknownEventType(name.to_string()))
    };
    let names: Vec<&str> = t.type_names().collect();
    let bb: Vec<&str> = backbone.events.iter().map(Event::as_str).collect();
    let pairs = lcs_alignment(&names, &bb);

    let mut matched_t = vec![false; names.len()];
    let mut matched_b = vec![false; bb.len()];
    for &(i, j) in &pairs {
        matched_t[i] = true;
        matched_b[j] = true;
    }

    for (i, name) in names.iter().enumerate() {
        if matched_t[i] {
            continue;
        }
        let c = col(name)?;
        let spurious = match model.probability(names[..i].iter().copied(), name) {
            Ok(p) => p < thresholds.p_spur,
            Err(Error::UnknownSymbol(_)) => true,
            Err(e) => return Err(e),
        };
        if spurious {
            out.spurious[c] += 1;
        }
    }

    for (j, name) in bb.iter().enumerate() {
        if matched_b[j] {
            continue;
        }
        let c = col(name)?;
        let p = match model.probability(bb[..j].iter().copied(), name) {
            Ok(p) => p,
            Err(Error::UnknownSymbol(_)) => 0.0,
            Err(e) => return Err(e),
        };
        if p >= thresholds.p_omit {
            out.omission[c] += 1;
        }
    }
    Ok(out)
}

/// `n×2d` matrix of anomaly vectors for every fault-injected trace, columns
/// `spur:<event>` for the campaign alphabet followed by `omit:<event>`.
pub fn build_anomaly_matrix(
    c: &Campaign,
    backbone: &CommonBackbone,
    model: &VmmModel,
    thresholds: Thresholds,
) -> Result<FeatureMatrix> {
    if c.fault_free.is_empty() {
        return Err(Error::EmptyInput("anomaly features need fault-free traces"));
    }
    let alphabet = campaign_alphabet(c)?;
    let d = alphabet.len();
    let rows: Vec<AnomalyVector> = c
        .fault_injected
        .par_iter()
        .map(|t| detect_anomalies(t, backbone, model, &alphabet, thresholds))
        .collect::<Result<_>>()?;
    let mut values = Array2::<f64>::zeros((rows.len(), 2 * d));
    for (i, v) in rows.iter().enumerate() {
        for (j, x) in v.concat().into_iter().enumerate() {
            values[[i, j]] = x as f64;
        }
    }
    let columns = alphabet
        .names()
        .iter()
        .map(|n| format!("spur:{n}"))
        .chain(alphabet.names().iter().map(|n| format!("omit:{n}")))
        .collect();
    FeatureMatrix::new(c.experiment_ids(), columns, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub max_order: usize,
    pub thresholds: Thresholds,
    pub fold_order: FoldOrder,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            max_order: DEFAULT_MAX_ORDER,
            thresholds: Thresholds::default(),
            fold_order: FoldOrder::Dataset,
        }
    }
}

/// Backbone and VMM trained from one campaign's fault-free traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyModel {
    pub backbone: CommonBackbone,
    pub vmm: VmmModel,
    pub thresholds: Thresholds,
}

impl AnomalyModel {
    pub fn fit(c: &Campaign, cfg: &AnomalyConfig) -> Result<Self> {
        let backbone = fold_backbone_ordered(&c.fault_free, cfg.fold_order)?;
        let vmm = train_vmm(&c.fault_free, cfg.max_order)?;
        Ok(AnomalyModel {
            backbone,
            vmm,
            thresholds: cfg.thresholds,
        })
    }

    pub fn feature_matrix(&self, c: &Campaign) -> Result<FeatureMatrix> {
        build_anomaly_matrix(c, &self.backbone, &self.vmm, self.thresholds)
    }

    pub fn to_json(&self) -> Result<String> {
        let vmm: serde_json::Value = serde_json::from_str(&self.vmm.to_json()?)?;
        let artifact = serde_json::json!({
            "format": "failsift-anomaly-model",
            "version": 1,
            "backbone": self.backbone,
            "thresholds": self.thresholds,
            "vmm": vmm,
        });
        Ok(serde_json::to_string(&artifact)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Artifact {
            format: String,
            version: u32,
            backbone: CommonBackbone,
            thresholds: Thresholds,
            vmm: serde_json::Value,
        }
        let a: Artifact = serde_json::from_str(s)?;
        if a.format != "failsift-anomaly-model" || a.version != 1 {
            return Err(Error::Serialization(format!(
                "unsupported anomaly model {} v{}",
                a.format, a.version
            )));
        }
        Ok(AnomalyModel {
            backbone: a.backbone,
            vmm: VmmModel::from_json(&a.vmm.to_string())?,
            thresholds: a.thresholds,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(id: &str, s: &str, ff: bool) -> Trace {
        let ev: Vec<String> = s.chars().map(|c| c.to_string()).collect();
        Trace::new(id, ev.iter().map(String::as_str), ff)
    }

    fn ev(s: &str) -> Vec<Event> {
        s.chars().map(|c| Event::new(c.to_string())).collect()
    }

    #[test]
    fn backbone_of_identical_traces_is_the_trace() {
        let ff: Vec<_> = (0..4).map(|i| tr(&format!("f{i}"), "ABCDAB", true)).collect();
        assert_eq!(fold_backbone(&ff).unwrap().events, ev("ABCDAB"));
    }

    #[test]
    fn backbone_drops_divergent_events() {
        let ff = [tr("1", "ABC", true), tr("2", "AXC", true)];
        assert_eq!(fold_backbone(&ff).unwrap().events, ev("AC"));
    }

    #[test]
    fn backbone_needs_input() {
        assert!(matches!(fold_backbone(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn length_descending_fold_is_still_common() {
        let ff = [tr("1", "AB", true), tr("2", "XAYBZ", true), tr("3", "AQB", true)];
        let b = fold_backbone_ordered(&ff, FoldOrder::LengthDescending).unwrap();
        assert_eq!(b.events, ev("AB"));
        assert!(ff.iter().all(|t| b.is_subsequence_of(t)));
    }

    /// Over {A,B,C}: one spurious A, one spurious C, two omitted B, one
    /// omitted C gives [1,0,1,0,2,1].
    #[test]
    fn worked_example_vector() {
        // Alignment keeps t[1..3] against the trailing "AA"; t[0] = A and
        // t[3] = C are improbable, the leading "BBC" is expected and missing.
        let ff: Vec<_> = (0..5).map(|i| tr(&format!("f{i}"), "BBCAA", true)).collect();
        let backbone = fold_backbone(&ff).unwrap();
        let model = train_vmm(&ff, 3).unwrap();
        let alphabet = EventAlphabet::from_names(["A", "B", "C"]);
        let t = tr("x", "AAAC", false);
        let v = detect_anomalies(&t, &backbone, &model, &alphabet, Thresholds::default()).unwrap();
        assert_eq!(v.concat(), vec![1, 0, 1, 0, 2, 1]);
    }

    #[test]
    fn identical_trace_has_no_anomalies() {
        let ff: Vec<_> = (0..3).map(|i| tr(&format!("f{i}"), "ABCABD", true)).collect();
        let backbone = fold_backbone(&ff).unwrap();
        let model = train_vmm(&ff, 3).unwrap();
        let alphabet = model.alphabet().clone();
        let v = detect_anomalies(&tr("x", "ABCABD", false), &backbone, &model, &alphabet, Thresholds::default())
            .unwrap();
        assert!(v.concat().iter().all(|&x| x == 0));
    }

    #[test]
    fn unknown_event_is_spurious() {
        let ff: Vec<_> = (0..3).map(|i| tr(&format!("f{i}"), "ABCD", true)).collect();
        let backbone = fold_backbone(&ff).unwrap();
        let model = train_vmm(&ff, 3).unwrap();
        let alphabet = EventAlphabet::from_names(["A", "B", "C", "D", "X"]);
        let v = detect_anomalies(&tr("x", "ABXCD", false), &backbone, &model, &alphabet, Thresholds::default())
            .unwrap();
        assert_eq!(v.spurious, vec![0, 0, 0, 0, 1]);
        assert_eq!(v.omission, vec![0; 5]);
    }

    #[test]
    fn column_alphabet_must_cover_trace() {
        let ff = [tr("f", "AB", true)];
        let backbone = fold_backbone(&ff).unwrap();
        let model = train_vmm(&ff, 2).unwrap();
        let alphabet = model.alphabet().clone();
        assert!(matches!(
            detect_anomalies(&tr("x", "AQB", false), &backbone, &model, &alphabet, Thresholds::default()),
            Err(Error::UnknownEventType(_))
        ));
    }

    #[test]
    fn matrix_is_zero_for_fault_free_copies() {
        let c = Campaign {
            workload_id: "w".into(),
            fault_free: (0..3).map(|i| tr(&format!("f{i}"), "ABCAD", true)).collect(),
            fault_injected: (0..4).map(|i| tr(&format!("e{i}"), "ABCAD", false)).collect(),
            ground_truth: Default::default(),
        };
        let model = AnomalyModel::fit(&c, &AnomalyConfig::default()).unwrap();
        let m = model.feature_matrix(&c).unwrap();
        assert_eq!(m.ncols(), 8);
        assert_eq!(m.columns[0], "spur:A");
        assert_eq!(m.columns[4], "omit:A");
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn model_artifact_round_trip() {
        let c = Campaign {
            workload_id: "w".into(),
            fault_free: vec![tr("f0", "ABCAD", true), tr("f1", "ABDCA", true)],
            fault_injected: vec![tr("e0", "ABQ", false)],
            ground_truth: Default::default(),
        };
        let model = AnomalyModel::fit(&c, &AnomalyConfig::default()).unwrap();
        let back = AnomalyModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
