//! Event alphabet and count-vector (SEQ) features.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Campaign, GroundTruth, Trace};

/// Bijection between event type names and column indices, ordered
/// lexicographically by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct EventAlphabet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventAlphabet {
    /// Builds an alphabet from arbitrary names; duplicates collapse.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let names: Vec<String> = set.into_iter().collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        EventAlphabet { names, index }
    }

    /// Number of distinct event types, `d`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }
}

impl From<Vec<String>> for EventAlphabet {
    fn from(v: Vec<String>) -> Self {
        EventAlphabet::from_names(v)
    }
}

impl From<EventAlphabet> for Vec<String> {
    fn from(a: EventAlphabet) -> Self {
        a.names
    }
}

/// Union of event types over `traces`.
pub fn build_alphabet<'a, I>(traces: I) -> Result<EventAlphabet>
where
    I: IntoIterator<Item = &'a Trace>,
{
    let mut any = false;
    let mut set = BTreeSet::new();
    for t in traces {
        any = true;
        set.extend(t.type_names());
    }
    if !any {
        return Err(Error::EmptyInput("no traces to build an alphabet from"));
    }
    Ok(EventAlphabet::from_names(set))
}

/// Alphabet over fault-free and fault-injected traces of a campaign.
pub fn campaign_alphabet(c: &Campaign) -> Result<EventAlphabet> {
    build_alphabet(c.all_traces())
}

/// Occurrence counts per alphabet index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector(pub Vec<u64>);

impl CountVector {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

pub fn vectorize_trace(t: &Trace, a: &EventAlphabet) -> Result<CountVector> {
    let mut counts = vec![0u64; a.len()];
    for name in t.type_names() {
        let i = a
            .index_of(name)
            .ok_or_else(|| Error::UnknownEventType(name.to_string()))?;
        counts[i] += 1;
    }
    Ok(CountVector(counts))
}

/// A dense n×m feature matrix with stable row identities and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<String>, columns: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} row ids",
                values.nrows(),
                row_ids.len()
            )));
        }
        if values.ncols() != columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns but {} column names",
                values.ncols(),
                columns.len()
            )));
        }
        Ok(FeatureMatrix {
            row_ids,
            columns,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes `experiment_id,<columns>...,label`. The label cell is empty for
    /// rows missing from `truth` (or when no truth is given).
    pub fn write_csv<W: Write>(&self, w: W, truth: Option<&GroundTruth>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = Vec::with_capacity(self.ncols() + 2);
        header.push("experiment_id");
        header.extend(self.columns.iter().map(String::as_str));
        header.push("label");
        wtr.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.ncols() + 2);
            rec.push(id.clone());
            rec.extend(self.values.row(i).iter().map(|v| format_value(*v)));
            rec.push(
                truth
                    .and_then(|t| t.get(id))
                    .map(|l| l.0.clone())
                    .unwrap_or_default(),
            );
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))
    }

    /// Reads the format produced by [`FeatureMatrix::write_csv`]. Returns the
    /// matrix and whatever labels were present.
    pub fn read_csv<R: Read>(r: R) -> Result<(FeatureMatrix, GroundTruth)> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let ncols = headers.len();
        if ncols < 2 || &headers[0] != "experiment_id" || &headers[ncols - 1] != "label" {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: "header must be `experiment_id,<feature>...,label`".into(),
            });
        }
        let columns: Vec<String> = headers.iter().skip(1).take(ncols - 2).map(str::to_string).collect();
        let mut row_ids = Vec::new();
        let mut data = Vec::new();
        let mut truth = GroundTruth::new();
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::MalformedRecord {
                line,
                reason: e.to_string(),
            })?;
            if rec.len() != ncols {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("expected {ncols} fields, found {}", rec.len()),
                });
            }
            for cell in rec.iter().skip(1).take(ncols - 2) {
                let v: f64 = cell.trim().parse().map_err(|_| Error::MalformedRecord {
                    line,
                    reason: format!("`{cell}` is not a number"),
                })?;
                data.push(v);
            }
            let label = rec[ncols - 1].trim();
            if !label.is_empty() {
                truth.insert(rec[0].to_string(), label.into());
            }
            row_ids.push(rec[0].to_string());
        }
        let values = Array2::from_shape_vec((row_ids.len(), columns.len()), data)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Ok((FeatureMatrix::new(row_ids, columns, values)?, truth))
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Validates optional per-feature weights against `m` columns.
pub(crate) fn check_weights(weights: Option<&[f64]>, m: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != m {
            return Err(Error::InvalidWeights(format!(
                "expected {m} weights, got {}",
                w.len()
            )));
        }
        if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidWeights(format!("weight {bad} is not positive")));
        }
    }
    Ok(())
}

/// SEQ matrix: one row per fault-injected experiment, counts optionally
/// multiplied elementwise by `weights`.
pub fn build_feature_matrix(c: &Campaign, a: &EventAlphabet, weights: Option<&[f64]>) -> Result<FeatureMatrix> {
    let d = a.len();
    check_weights(weights, d)?;
    let n = c.fault_injected.len();
    let mut values = Array2::<f64>::zeros((n, d));
    for (i, t) in c.fault_injected.iter().enumerate() {
        let counts = vectorize_trace(t, a)?;
        let mut row = values.row_mut(i);
        for (j, &cnt) in counts.0.iter().enumerate() {
            row[j] = cnt as f64 * weights.map_or(1.0, |w| w[j]);
        }
    }
    FeatureMatrix::new(c.experiment_ids(), a.names().to_vec(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Trace;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tr(id: &str, ev: &[&str]) -> Trace {
        Trace::new(id, ev.iter().copied(), false)
    }

    #[test]
    fn lexicographic_indices() {
        let a = build_alphabet([&tr("1", &["B", "A"]), &tr("2", &["C"])]).unwrap();
        assert_eq!(a.index_of("A"), Some(0));
        assert_eq!(a.index_of("B"), Some(1));
        assert_eq!(a.index_of("C"), Some(2));
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn single_event_alphabet() {
        let a = build_alphabet([&tr("1", &["A"])]).unwrap();
        assert_eq!(a.len(), 1);
        assert_eq!(a.index_of("A"), Some(0));
    }

    #[test]
    fn empty_trace_list_is_rejected() {
        assert!(matches!(build_alphabet(std::iter::empty()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn counts_match_worked_example() {
        let a = EventAlphabet::from_names(["A", "B", "C"]);
        let t = tr("x", &["A", "B", "A", "C", "A", "B", "A"]);
        assert_eq!(vectorize_trace(&t, &a).unwrap().0, vec![4, 2, 1]);
        assert_eq!(vectorize_trace(&tr("e", &[]), &a).unwrap().0, vec![0, 0, 0]);
    }

    #[test]
    fn unknown_event_is_named() {
        let a = EventAlphabet::from_names(["A"]);
        match vectorize_trace(&tr("x", &["A", "Z"]), &a) {
            Err(Error::UnknownEventType(n)) => assert_eq!(n, "Z"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_trace_matches_histogram_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let names = ["e0", "e1", "e2", "e3", "e4", "e5"];
        let a = EventAlphabet::from_names(names);
        let events: Vec<&str> = (0..50).map(|_| names[rng.random_range(0..names.len())]).collect();
        let t = tr("r", &events);
        let got = vectorize_trace(&t, &a).unwrap();
        for (j, name) in names.iter().enumerate() {
            let expected = events.iter().filter(|e| *e == name).count() as u64;
            assert_eq!(got.0[a.index_of(name).unwrap()], expected, "column {j}");
        }
    }

    fn campaign() -> Campaign {
        Campaign {
            workload_id: "w".into(),
            fault_injected: vec![tr("1", &["A", "A", "A", "A", "B", "B", "C"]), tr("2", &["C"])],
            fault_free: vec![],
            ground_truth: Default::default(),
        }
    }

    #[test]
    fn weights_multiply_counts() {
        let c = campaign();
        let a = campaign_alphabet(&c).unwrap();
        let m = build_feature_matrix(&c, &a, Some(&[2.0, 1.0, 1.0])).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![8.0, 2.0, 1.0]);
        let unit = build_feature_matrix(&c, &a, Some(&[1.0; 3])).unwrap();
        assert_eq!(unit, build_feature_matrix(&c, &a, None).unwrap());
    }

    #[test]
    fn bad_weights_rejected() {
        let c = campaign();
        let a = campaign_alphabet(&c).unwrap();
        assert!(build_feature_matrix(&c, &a, Some(&[1.0, 1.0])).is_err());
        assert!(build_feature_matrix(&c, &a, Some(&[1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = campaign();
        let a = campaign_alphabet(&c).unwrap();
        let m = build_feature_matrix(&c, &a, Some(&[0.5, 1.0, 3.0])).unwrap();
        let mut truth = GroundTruth::new();
        truth.insert("1".into(), "VolumeFailure".into());
        let mut buf = Vec::new();
        m.write_csv(&mut buf, Some(&truth)).unwrap();
        let (back, labels) = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(labels, truth);
    }

    proptest! {
        #[test]
        fn counts_are_order_free_and_sum_to_length(
            events in proptest::collection::vec(0usize..5, 0..60),
            seed in any::<u64>(),
        ) {
            let names = ["a", "b", "c", "d", "e"];
            let a = EventAlphabet::from_names(names);
            let ev: Vec<&str> = events.iter().map(|&i| names[i]).collect();
            let mut shuffled = ev.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let v1 = vectorize_trace(&tr("x", &ev), &a).unwrap();
            let v2 = vectorize_trace(&tr("y", &shuffled), &a).unwrap();
            prop_assert_eq!(&v1, &v2);
            prop_assert_eq!(v1.total() as usize, ev.len());
        }
    }
}
