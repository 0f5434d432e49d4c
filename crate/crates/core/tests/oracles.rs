use std::collections::BTreeMap;

use failsift_core::anomaly::{is_subsequence, lcs_len};
use failsift_core::kmedoids::distance;
use failsift_core::{
    fold_backbone, generate_campaign, k_medoids, lcs_pair, purity, resolve_truth, AnomalyConfig, AnomalyModel, DistanceMetric, Event,
    FailureLabel, Initialization, KMedoidsConfig, SynthSpec, Trace,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dp_lcs_len(a: &[u8], b: &[u8]) -> usize {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    t[a.len()][b.len()]
}

fn random_seq(rng: &mut ChaCha8Rng, max_len: usize, symbols: u8) -> Vec<u8> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(0..symbols)).collect()
}

#[test]
fn lcs_matches_dp_on_1000_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let symbols = [2, 4, 8, 26][i % 4];
        let a = random_seq(&mut rng, 30, symbols);
        let b = random_seq(&mut rng, 30, symbols);
        let want = dp_lcs_len(&a, &b);
        let got = lcs_pair(&a, &b);
        assert_eq!(got.len(), want, "pair {i}: {a:?} {b:?}");
        assert_eq!(lcs_len(&a, &b), want);
        assert!(is_subsequence(&got, &a) && is_subsequence(&got, &b), "pair {i}");
    }
}

#[test]
fn backbone_is_a_subsequence_of_every_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for round in 0..200 {
        let base = random_seq(&mut rng, 25, 6);
        let traces: Vec<Trace> = (0..rng.random_range(1..6))
            .map(|i| {
                let mut s = base.clone();
                for _ in 0..rng.random_range(0..5) {
                    if !s.is_empty() && rng.random_bool(0.5) {
                        let at = rng.random_range(0..s.len());
                        s.remove(at);
                    } else {
                        let at = rng.random_range(0..=s.len());
                        s.insert(at, rng.random_range(0..6));
                    }
                }
                Trace::new(format!("r{round}-{i}"), s.iter().map(|c| Event::new(format!("e{c}"))), true)
            })
            .collect();
        let bb = fold_backbone(&traces).unwrap();
        for t in &traces {
            assert!(bb.is_subsequence_of(t), "round {round}");
        }
    }
}

fn brute_force_cost(x: &Array2<f64>, k: usize) -> f64 {
    let n = x.nrows();
    let d = |i: usize, j: usize| distance(x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap(), DistanceMetric::L2, None).unwrap();
    let mut best = f64::INFINITY;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        let cost: f64 = (0..n).map(|i| subset.iter().map(|&m| d(i, m)).fold(f64::INFINITY, f64::min)).sum();
        best = best.min(cost);
        // next k-subset in lexicographic order
        let mut i = k;
        while i > 0 && subset[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        subset[i - 1] += 1;
        for j in i..k {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

#[test]
fn exhaustive_kmedoids_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for round in 0..300 {
        let n = rng.random_range(2..=8);
        let k = rng.random_range(1..=3.min(n));
        let d = rng.random_range(1..=3);
        // small integer grid so ties and duplicate points occur
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..4) as f64);
        let cfg = KMedoidsConfig::new(k).with_init(Initialization::Exhaustive);
        let got = k_medoids(x.view(), &cfg).unwrap();
        let want = brute_force_cost(&x, k);
        assert!((got.total_cost - want).abs() < 1e-9, "round {round}: {} vs {want}", got.total_cost);
    }
}

fn naive_purity(labels: &[usize], truth: &[FailureLabel]) -> f64 {
    let mut table: BTreeMap<usize, BTreeMap<&str, usize>> = BTreeMap::new();
    for (c, t) in labels.iter().zip(truth) {
        *table.entry(*c).or_default().entry(t.as_str()).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
    hits as f64 / labels.len() as f64
}

#[test]
fn purity_matches_recount_on_1000_labelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let names = ["NoFailure", "A", "B", "C", "D"];
    for round in 0..1000 {
        let n = rng.random_range(1..60);
        let k = rng.random_range(1..7);
        let classes = rng.random_range(1..=names.len());
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let truth: Vec<FailureLabel> = (0..n).map(|_| FailureLabel::from(names[rng.random_range(0..classes)])).collect();
        let got = purity(&labels, &truth).unwrap();
        assert!((got.overall - naive_purity(&labels, &truth)).abs() < 1e-12, "round {round}");
        assert_eq!(got.n, n);
    }
}

#[test]
fn noiseless_anomaly_vectors_equal_planted_counts() {
    for seed in 0..4 {
        let spec = SynthSpec {
            seed,
            num_modes: 5,
            mode_signature_length: 5,
            ..SynthSpec::default()
        };
        let s = generate_campaign(&spec).unwrap();
        let fm = AnomalyModel::fit(&s.campaign, &AnomalyConfig::default())
            .unwrap()
            .feature_matrix(&s.campaign)
            .unwrap();
        for (i, id) in fm.row_ids.iter().enumerate() {
            let planted = &s.planted[id];
            for (j, col) in fm.columns.iter().enumerate() {
                let want = if let Some(e) = col.strip_prefix("spur:") {
                    planted.spurious.get(e).copied().unwrap_or(0)
                } else {
                    planted.omission.get(col.strip_prefix("omit:").unwrap()).copied().unwrap_or(0)
                };
                assert_eq!(fm.values[[i, j]], want as f64, "seed {seed} {id} {col}");
            }
        }
    }
}

#[test]
fn noiseless_four_modes_are_separated_by_kmedoids() {
    let s = generate_campaign(&SynthSpec::default()).unwrap();
    let c = &s.campaign;
    let fm = failsift_core::build_feature_matrix(c, &failsift_core::campaign_alphabet(c).unwrap(), None).unwrap();
    let truth = resolve_truth(&fm.row_ids, &c.ground_truth).unwrap();
    let r = k_medoids(fm.view(), &KMedoidsConfig::new(4)).unwrap();
    assert_eq!(purity(&r.assignments, &truth).unwrap().overall, 1.0);
}
