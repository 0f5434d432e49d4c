//! Purity against ground truth and failure-mode distribution reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{FailureLabel, GroundTruth};

/// Ground-truth labels for `row_ids`, in order.
pub fn resolve_truth(row_ids: &[String], gt: &GroundTruth) -> Result<Vec<FailureLabel>> {
    let missing: Vec<String> = row_ids.iter().filter(|id| !gt.contains_key(*id)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    Ok(row_ids.iter().map(|id| gt[id].clone()).collect())
}

/// Cluster index → failure label. Several clusters may share a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterClassMapping {
    pub assignment: BTreeMap<usize, FailureLabel>,
}

impl ClusterClassMapping {
    pub fn label_of(&self, cluster: usize) -> Option<&FailureLabel> {
        self.assignment.get(&cluster)
    }
}

fn check_lengths(labels: &[usize], truth: &[FailureLabel]) -> Result<()> {
    if labels.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cluster labels for {} ground-truth labels",
            labels.len(),
            truth.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("no labeled points"));
    }
    Ok(())
}

/// Per cluster, the count of each ground-truth label.
fn contingency<'a>(labels: &[usize], truth: &'a [FailureLabel]) -> BTreeMap<usize, BTreeMap<&'a FailureLabel, usize>> {
    let mut table: BTreeMap<usize, BTreeMap<&'a FailureLabel, usize>> = BTreeMap::new();
    for (c, t) in labels.iter().zip(truth) {
        *table.entry(*c).or_default().entry(t).or_default() += 1;
    }
    table
}

/// Majority label and its count; ties go to the lexicographically smallest
/// label.
fn majority<'a>(counts: &BTreeMap<&'a FailureLabel, usize>) -> (&'a FailureLabel, usize) {
    let mut best: Option<(&FailureLabel, usize)> = None;
    for (label, &n) in counts {
        if best.map_or(true, |(_, m)| n > m) {
            best = Some((label, n));
        }
    }
    best.expect("non-empty cluster")
}

/// Maps every non-empty cluster to its majority ground-truth label.
pub fn map_clusters(labels: &[usize], truth: &[FailureLabel]) -> Result<ClusterClassMapping> {
    check_lengths(labels, truth)?;
    let assignment = contingency(labels, truth)
        .iter()
        .map(|(c, counts)| (*c, majority(counts).0.clone()))
        .collect();
    Ok(ClusterClassMapping { assignment })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPurity {
    pub cluster: usize,
    pub size: usize,
    /// `None` for an empty cluster.
    pub majority: Option<FailureLabel>,
    pub matched: usize,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityReport {
    pub per_cluster: Vec<ClusterPurity>,
    pub overall: f64,
    pub n: usize,
    /// Number of distinct ground-truth classes.
    pub classes: usize,
}

/// Per-cluster and size-weighted overall purity. Clusters are indexed
/// `0..=max(labels)`; an empty cluster has purity 1 and weight 0.
pub fn purity(labels: &[usize], truth: &[FailureLabel]) -> Result<PurityReport> {
    check_lengths(labels, truth)?;
    let n = labels.len();
    let table = contingency(labels, truth);
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let per_cluster: Vec<ClusterPurity> = (0..k)
        .map(|c| match table.get(&c) {
            Some(counts) => {
                let size = counts.values().sum();
                let (label, matched) = majority(counts);
                ClusterPurity {
                    cluster: c,
                    size,
                    majority: Some(label.clone()),
                    matched,
                    purity: matched as f64 / size as f64,
                }
            }
            None => ClusterPurity {
                cluster: c,
                size: 0,
                majority: None,
                matched: 0,
                purity: 1.0,
            },
        })
        .collect();
    let overall = per_cluster
        .iter()
        .map(|p| p.size as f64 / n as f64 * p.purity)
        .sum::<f64>()
        .min(1.0);
    let classes = truth.iter().collect::<BTreeSet<_>>().len();
    Ok(PurityReport {
        per_cluster,
        overall,
        n,
        classes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub label: FailureLabel,
    pub ground_truth: usize,
    /// Points in clusters mapped to this label.
    pub clustered: usize,
    /// `clustered − ground_truth`.
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// Sorted by label.
    pub rows: Vec<DistributionRow>,
    pub n: usize,
}

impl DistributionReport {
    pub fn max_abs_delta(&self) -> usize {
        self.rows.iter().map(|r| r.delta.unsigned_abs() as usize).max().unwrap_or(0)
    }
}

/// Ground-truth versus clustered counts per failure mode. Points in clusters
/// missing from `mapping` are not counted as any mode.
pub fn distribution_report(labels: &[usize], truth: &[FailureLabel], mapping: &ClusterClassMapping) -> DistributionReport {
    let mut gt: BTreeMap<&FailureLabel, usize> = BTreeMap::new();
    let mut clustered: BTreeMap<&FailureLabel, usize> = BTreeMap::new();
    for t in truth {
        *gt.entry(t).or_default() += 1;
    }
    for l in mapping.assignment.values() {
        gt.entry(l).or_default();
    }
    for c in labels {
        if let Some(l) = mapping.label_of(*c) {
            *clustered.entry(l).or_default() += 1;
        }
    }
    let rows = gt
        .into_iter()
        .map(|(label, g)| {
            let c = clustered.get(label).copied().unwrap_or(0);
            DistributionRow {
                label: label.clone(),
                ground_truth: g,
                clustered: c,
                delta: c as i64 - g as i64,
            }
        })
        .collect();
    DistributionReport { rows, n: labels.len() }
}

pub fn write_purity_csv<W: std::io::Write>(report: &PurityReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["cluster", "size", "majority", "matched", "purity"])?;
    for c in &report.per_cluster {
        out.write_record([
            c.cluster.to_string(),
            c.size.to_string(),
            c.majority.as_ref().map(|l| l.0.clone()).unwrap_or_default(),
            c.matched.to_string(),
            c.purity.to_string(),
        ])?;
    }
    out.write_record(["overall".into(), report.n.to_string(), String::new(), String::new(), report.overall.to_string()])?;
    out.flush().map_err(|e| Error::io("<writer>", e))
}

pub fn write_distribution_csv<W: std::io::Write>(report: &DistributionReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "ground_truth", "clustered", "delta"])?;
    for r in &report.rows {
        out.write_record([r.label.0.clone(), r.ground_truth.to_string(), r.clustered.to_string(), r.delta.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<writer>", e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static grouped-bar chart: ground-truth and clustered counts per mode.
pub fn render_distribution_svg(report: &DistributionReport, title: &str) -> String {
    const BAR: f64 = 28.0;
    const GAP: f64 = 24.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 50.0;
    const PLOT_H: f64 = 260.0;
    let groups = report.rows.len().max(1) as f64;
    let width = LEFT + groups * (2.0 * BAR + GAP) + GAP + 20.0;
    let height = TOP + PLOT_H + 90.0;
    let max = report
        .rows
        .iter()
        .map(|r| r.ground_truth.max(r.clustered))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let base = TOP + PLOT_H;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#, width - 10.0);
    for tick in 0..=4 {
        let v = max * tick as f64 / 4.0;
        let y = base - PLOT_H * tick as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#, LEFT - 6.0, y + 4.0, v);
    }
    for (g, r) in report.rows.iter().enumerate() {
        let x0 = LEFT + GAP + g as f64 * (2.0 * BAR + GAP);
        for (b, (v, color)) in [(r.ground_truth, "#4c72b0"), (r.clustered, "#dd8452")].into_iter().enumerate() {
            let h = PLOT_H * v as f64 / max;
            let x = x0 + b as f64 * BAR;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{color}"><title>{}: {v}</title></rect>"#,
                base - h,
                BAR - 2.0,
                escape(r.label.as_str())
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" transform="rotate(-35 {:.1} {:.1})">{}</text>"#,
            x0 + BAR,
            base + 16.0,
            x0 + BAR,
            base + 16.0,
            escape(r.label.as_str())
        );
    }
    let ly = height - 16.0;
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{:.1}" width="12" height="12" fill="#4c72b0"/>"##, ly - 10.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">ground truth</text>"#, LEFT + 16.0);
    let _ = writeln!(s, r##"<rect x="{:.1}" y="{:.1}" width="12" height="12" fill="#dd8452"/>"##, LEFT + 110.0, ly - 10.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">clustered</text>"#, LEFT + 126.0);
    s.push_str("</svg>\n");
    s
}
