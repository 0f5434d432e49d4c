//! Variable-order Markov model over event types: a PPM context tree with
//! method-C escapes, blended across orders.
//!
//! For a context `c_D` (the last `D` events, left-padded with a start-of-trace
//! marker) the estimate is built bottom-up:
//!
//! ```text
//! P_-1(s)    = 1 / |A|
//! P_k(s)     = (n(c_k, s) + u(c_k) * P_{k-1}(s)) / (N(c_k) + u(c_k))
//! ```
//!
//! where `n` is the successor count, `N` the context total and `u` the number of
//! distinct successors. Contexts never seen in training pass `P_{k-1}` through.
//! Every level is a convex mix of a normalized histogram and a normalized lower
//! level, so the result sums to one over the alphabet and is never zero.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;
use crate::vectorize::{build_alphabet, EventAlphabet};

pub const DEFAULT_MAX_ORDER: usize = 3;

/// Start-of-trace marker.
const START: u32 = 0;
/// Context symbol outside the alphabet; never present in trained contexts.
const FOREIGN: u32 = u32::MAX;

const ARTIFACT_FORMAT: &str = "failsift-vmm";
const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Escape mass proportional to the number of distinct successors,
    /// interpolated with lower orders.
    PpmC,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextStats {
    total: u64,
    successors: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmmModel {
    max_order: usize,
    alphabet: EventAlphabet,
    smoothing: Smoothing,
    contexts: HashMap<Vec<u32>, ContextStats>,
}

impl VmmModel {
    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn alphabet(&self) -> &EventAlphabet {
        &self.alphabet
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    fn symbol(&self, name: &str) -> Option<u32> {
        self.alphabet.index_of(name).map(|i| i as u32 + 1)
    }

    /// Raw count of `symbol` following `context` (exact context, no padding).
    /// Context names may include the marker `"^"` for start-of-trace.
    pub fn count(&self, context: &[&str], symbol: &str) -> u64 {
        let ctx: Vec<u32> = context
            .iter()
            .map(|c| if *c == "^" { START } else { self.symbol(c).unwrap_or(FOREIGN) })
            .collect();
        let Some(s) = self.symbol(symbol) else { return 0 };
        self.contexts
            .get(&ctx)
            .and_then(|st| st.successors.get(&s))
            .copied()
            .unwrap_or(0)
    }

    /// Padded id context of length `max_order` for a history since trace start.
    fn padded<'a, I>(&self, history: I) -> Vec<u32>
    where
        I: IntoIterator<Item = &'a str>,
        I::IntoIter: DoubleEndedIterator,
    {
        let mut tail: Vec<u32> = history
            .into_iter()
            .rev()
            .take(self.max_order)
            .map(|n| self.symbol(n).unwrap_or(FOREIGN))
            .collect();
        tail.resize(self.max_order, START);
        tail.reverse();
        tail
    }

    fn blended(&self, ctx: &[u32], s: u32) -> f64 {
        let mut p = 1.0 / self.alphabet.len() as f64;
        for k in 0..=self.max_order {
            let key = &ctx[ctx.len() - k..];
            if let Some(st) = self.contexts.get(key) {
                if st.total > 0 {
                    let n = st.successors.get(&s).copied().unwrap_or(0) as f64;
                    let u = st.successors.len() as f64;
                    p = (n + u * p) / (st.total as f64 + u);
                }
            }
        }
        p
    }

    /// Smoothed probability that `symbol` follows `history`, where `history`
    /// is the sequence of events since the start of the trace (only the last
    /// `max_order` matter; shorter histories are padded with the start marker).
    pub fn probability<'a, I>(&self, history: I, symbol: &str) -> Result<f64>
    where
        I: IntoIterator<Item = &'a str>,
        I::IntoIter: DoubleEndedIterator,
    {
        let s = self
            .symbol(symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))?;
        let ctx = self.padded(history);
        Ok(self.blended(&ctx, s))
    }

    /// Full predictive distribution over the alphabet (alphabet order).
    pub fn distribution<'a, I>(&self, history: I) -> Vec<f64>
    where
        I: IntoIterator<Item = &'a str>,
        I::IntoIter: DoubleEndedIterator,
    {
        let ctx = self.padded(history);
        (1..=self.alphabet.len() as u32)
            .map(|s| self.blended(&ctx, s))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut contexts: Vec<ContextEntry> = self
            .contexts
            .iter()
            .map(|(k, st)| ContextEntry {
                context: k.clone(),
                successors: st.successors.iter().map(|(s, c)| (*s, *c)).collect(),
            })
            .collect();
        contexts.sort_by(|a, b| a.context.cmp(&b.context));
        let artifact = VmmArtifact {
            format: ARTIFACT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            max_order: self.max_order,
            smoothing: self.smoothing,
            alphabet: self.alphabet.names().to_vec(),
            contexts,
        };
        Ok(serde_json::to_string(&artifact)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: VmmArtifact = serde_json::from_str(s)?;
        if a.format != ARTIFACT_FORMAT || a.version != ARTIFACT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model artifact {} v{}",
                a.format, a.version
            )));
        }
        let contexts = a
            .contexts
            .into_iter()
            .map(|e| {
                let successors: BTreeMap<u32, u64> = e.successors.into_iter().collect();
                let total = successors.values().sum();
                (e.context, ContextStats { total, successors })
            })
            .collect();
        Ok(VmmModel {
            max_order: a.max_order,
            alphabet: EventAlphabet::from_names(a.alphabet),
            smoothing: a.smoothing,
            contexts,
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

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    context: Vec<u32>,
    successors: Vec<(u32, u64)>,
}

#[derive(Serialize, Deserialize)]
struct VmmArtifact {
    format: String,
    version: u32,
    max_order: usize,
    smoothing: Smoothing,
    alphabet: Vec<String>,
    contexts: Vec<ContextEntry>,
}

/// Trains on `traces` with the alphabet of their event types.
pub fn train_vmm(traces: &[Trace], max_order: usize) -> Result<VmmModel> {
    let alphabet = build_alphabet(traces)?;
    train_vmm_with_alphabet(traces, alphabet, max_order)
}

/// Trains with an explicit alphabet; it must cover every training event.
pub fn train_vmm_with_alphabet(traces: &[Trace], alphabet: EventAlphabet, max_order: usize) -> Result<VmmModel> {
    if max_order == 0 {
        return Err(Error::InvalidConfig("VMM order must be at least 1".into()));
    }
    if traces.is_empty() {
        return Err(Error::EmptyInput("no fault-free traces to train the VMM"));
    }
    if alphabet.is_empty() {
        return Err(Error::EmptyInput("empty VMM alphabet"));
    }
    let mut model = VmmModel {
        max_order,
        alphabet,
        smoothing: Smoothing::PpmC,
        contexts: HashMap::new(),
    };
    for t in traces {
        let mut history: Vec<u32> = vec![START; max_order];
        for name in t.type_names() {
            let s = model
                .symbol(name)
                .ok_or_else(|| Error::UnknownEventType(name.to_string()))?;
            for k in 0..=max_order {
                let ctx = history[history.len() - k..].to_vec();
                let st = model.contexts.entry(ctx).or_default();
                st.total += 1;
                *st.successors.entry(s).or_insert(0) += 1;
            }
            history.push(s);
        }
    }
    Ok(model)
}
