//! Seeded synthetic campaigns with planted failure modes.
//!
//! A canonical event sequence is drawn so that the three events before any
//! position (padded at the start) never repeat elsewhere in the sequence;
//! an order-3 model trained on clean copies is therefore deterministic.
//! Mode 0 is the no-failure mode. Every other mode inserts its own error
//! event types at fixed positions and drops a disjoint set of canonical
//! positions. Noise then swaps neighbours or inserts asynchronous events.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Campaign, FailureLabel, GroundTruth, Trace, KNOWN_LABELS};

const CONTEXT: usize = 3;
const NO_FAILURE: &str = "NoFailure";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Ground-truth classes including the no-failure mode.
    pub num_modes: usize,
    pub base_trace_length: usize,
    /// Event types available to the canonical sequence and the noise model;
    /// about a fifth of them are reserved as asynchronous.
    pub alphabet_size: usize,
    /// Planted events per failure mode, split between spurious insertions
    /// (rounded up) and omissions.
    pub mode_signature_length: usize,
    pub noise_rate: f64,
    pub traces_per_mode: usize,
    pub fault_free_count: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_modes: 4,
            base_trace_length: 40,
            alphabet_size: 24,
            mode_signature_length: 4,
            noise_rate: 0.0,
            traces_per_mode: 50,
            fault_free_count: 20,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn spurious_per_mode(&self) -> usize {
        self.mode_signature_length.div_ceil(2)
    }

    pub fn omissions_per_mode(&self) -> usize {
        self.mode_signature_length / 2
    }

    fn async_count(&self) -> usize {
        (self.alphabet_size / 5).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        for (name, v) in [
            ("num_modes", self.num_modes),
            ("base_trace_length", self.base_trace_length),
            ("alphabet_size", self.alphabet_size),
            ("mode_signature_length", self.mode_signature_length),
            ("traces_per_mode", self.traces_per_mode),
            ("fault_free_count", self.fault_free_count),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate {} outside [0, 1)", self.noise_rate));
        }
        if self.alphabet_size < 4 {
            return bad("alphabet_size must be at least 4".into());
        }
        let canonical = self.alphabet_size - self.async_count();
        if self.base_trace_length + CONTEXT > canonical.pow(CONTEXT as u32) / 2 {
            return bad(format!(
                "base_trace_length {} too long for {canonical} canonical event types",
                self.base_trace_length
            ));
        }
        if (self.num_modes - 1) * self.omissions_per_mode() > self.base_trace_length {
            return bad("not enough canonical positions for disjoint omissions".into());
        }
        Ok(())
    }
}

pub fn mode_label(mode: usize) -> FailureLabel {
    if mode == 0 {
        return FailureLabel::from(NO_FAILURE);
    }
    let named: Vec<&str> = KNOWN_LABELS.iter().copied().filter(|l| *l != NO_FAILURE).collect();
    match named.get(mode - 1) {
        Some(l) => FailureLabel::from(*l),
        None => FailureLabel::new(format!("Mode{mode}Failure")),
    }
}

/// What one failure mode plants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSignature {
    pub label: FailureLabel,
    /// `(position in the mode's clean trace, event type)`, ascending.
    pub insertions: Vec<(usize, String)>,
    /// Dropped canonical positions, ascending.
    pub omissions: Vec<usize>,
}

/// Planted per-trace anomaly counts keyed by event type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAnomalies {
    pub spurious: BTreeMap<String, u64>,
    pub omission: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct SynthCampaign {
    pub campaign: Campaign,
    pub canonical: Vec<String>,
    pub async_events: Vec<String>,
    pub signatures: Vec<ModeSignature>,
    /// experiment_id → planted counts (before noise).
    pub planted: BTreeMap<String, PlantedAnomalies>,
}

fn canonical_sequence(spec: &SynthSpec, types: &[String], rng: &mut ChaCha8Rng) -> Result<Vec<String>> {
    const ATTEMPTS: usize = 64;
    let pad = usize::MAX;
    for _ in 0..ATTEMPTS {
        let mut seq: Vec<usize> = Vec::with_capacity(spec.base_trace_length);
        let mut seen: HashSet<[usize; CONTEXT]> = HashSet::new();
        seen.insert([pad; CONTEXT]);
        let context = |seq: &[usize]| {
            let mut c = [pad; CONTEXT];
            for k in 0..CONTEXT.min(seq.len()) {
                c[CONTEXT - 1 - k] = seq[seq.len() - 1 - k];
            }
            c
        };
        let mut order: Vec<usize> = (0..types.len()).collect();
        while seq.len() < spec.base_trace_length {
            order.shuffle(rng);
            let pick = order.iter().copied().find(|&s| {
                let mut next = seq.clone();
                next.push(s);
                !seen.contains(&context(&next))
            });
            match pick {
                Some(s) => {
                    seq.push(s);
                    seen.insert(context(&seq));
                }
                None => break,
            }
        }
        if seq.len() == spec.base_trace_length {
            return Ok(seq.into_iter().map(|i| types[i].clone()).collect());
        }
    }
    Err(Error::InvalidSpec("could not draw a canonical sequence".into()))
}

fn apply_noise(events: &mut Vec<String>, rate: f64, async_events: &[String], rng: &mut ChaCha8Rng) {
    if rate == 0.0 {
        return;
    }
    let mut i = 0;
    while i < events.len() {
        if rng.random::<f64>() < rate {
            if rng.random::<bool>() && i + 1 < events.len() {
                events.swap(i, i + 1);
                i += 1;
            } else {
                let e = async_events.choose(rng).expect("non-empty").clone();
                events.insert(i + 1, e);
                i += 1;
            }
        }
        i += 1;
    }
}

/// Deterministic campaign for `spec`, with ground truth and planted counts.
pub fn generate_campaign(spec: &SynthSpec) -> Result<SynthCampaign> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_async = spec.async_count();
    let width = spec.alphabet_size.to_string().len().max(2);
    let canonical_types: Vec<String> = (0..spec.alphabet_size - n_async).map(|i| format!("ev{i:0width$}")).collect();
    let async_events: Vec<String> = (0..n_async).map(|i| format!("async{i:0width$}")).collect();
    let canonical = canonical_sequence(spec, &canonical_types, &mut rng)?;

    let mut free_positions: Vec<usize> = (0..spec.base_trace_length).collect();
    free_positions.shuffle(&mut rng);
    let mut signatures = vec![ModeSignature {
        label: mode_label(0),
        insertions: vec![],
        omissions: vec![],
    }];
    for m in 1..spec.num_modes {
        let mut omissions: Vec<usize> = free_positions.split_off(free_positions.len() - spec.omissions_per_mode());
        omissions.sort_unstable();
        let kept = spec.base_trace_length - omissions.len();
        let mut insertions: Vec<(usize, String)> = (0..spec.spurious_per_mode())
            .map(|e| (rng.random_range(0..=kept), format!("err{m:02}_{e}")))
            .collect();
        insertions.sort();
        signatures.push(ModeSignature {
            label: mode_label(m),
            insertions,
            omissions,
        });
    }

    let clean: Vec<(Vec<String>, PlantedAnomalies)> = signatures
        .iter()
        .map(|sig| {
            let mut planted = PlantedAnomalies::default();
            let mut events: Vec<String> = Vec::with_capacity(canonical.len() + sig.insertions.len());
            for (j, e) in canonical.iter().enumerate() {
                if sig.omissions.binary_search(&j).is_ok() {
                    *planted.omission.entry(e.clone()).or_default() += 1;
                } else {
                    events.push(e.clone());
                }
            }
            // Insert back to front so earlier positions stay valid.
            for (pos, e) in sig.insertions.iter().rev() {
                events.insert(*pos, e.clone());
                *planted.spurious.entry(e.clone()).or_default() += 1;
            }
            (events, planted)
        })
        .collect();

    let id_width = (spec.num_modes * spec.traces_per_mode).max(spec.fault_free_count).to_string().len();
    let fault_free: Vec<Trace> = (0..spec.fault_free_count)
        .map(|i| {
            let mut ev = canonical.clone();
            apply_noise(&mut ev, spec.noise_rate, &async_events, &mut rng);
            Trace::new(format!("ff-{i:0id_width$}"), ev.iter().map(String::as_str), true)
        })
        .collect();

    let mut modes: Vec<usize> = (0..spec.num_modes).flat_map(|m| std::iter::repeat(m).take(spec.traces_per_mode)).collect();
    modes.shuffle(&mut rng);
    let mut fault_injected = Vec::with_capacity(modes.len());
    let mut ground_truth = GroundTruth::new();
    let mut planted = BTreeMap::new();
    for (i, &m) in modes.iter().enumerate() {
        let id = format!("fi-{i:0id_width$}");
        let mut ev = clean[m].0.clone();
        apply_noise(&mut ev, spec.noise_rate, &async_events, &mut rng);
        fault_injected.push(Trace::new(id.clone(), ev.iter().map(String::as_str), false));
        ground_truth.insert(id.clone(), signatures[m].label.clone());
        planted.insert(id, clean[m].1.clone());
    }

    Ok(SynthCampaign {
        campaign: Campaign {
            workload_id: format!("synth-{}", spec.seed),
            fault_injected,
            fault_free,
            ground_truth,
        },
        canonical,
        async_events,
        signatures,
        planted,
    })
}
