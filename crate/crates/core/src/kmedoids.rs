//! k-medoids by Voronoi iteration with seeded random restarts.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectorize::check_weights;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    /// City block.
    L1,
    /// Euclidean.
    #[default]
    L2,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::L1 => "l1",
            DistanceMetric::L2 => "l2",
        })
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "cityblock" | "city-block" | "manhattan" => Ok(DistanceMetric::L1),
            "l2" | "euclidean" => Ok(DistanceMetric::L2),
            other => Err(Error::InvalidConfig(format!("unknown metric `{other}`"))),
        }
    }
}

/// `L1 = Σ w|x−y|`, `L2 = sqrt(Σ w(x−y)²)`; weights default to one.
pub fn distance(x: &[f64], y: &[f64], metric: DistanceMetric, weights: Option<&[f64]>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    check_weights(weights, x.len())?;
    Ok(distance_unchecked(
        ArrayView1::from(x),
        ArrayView1::from(y),
        metric,
        weights,
    ))
}

fn distance_unchecked(x: ArrayView1<f64>, y: ArrayView1<f64>, metric: DistanceMetric, weights: Option<&[f64]>) -> f64 {
    let terms = x.iter().zip(y.iter()).enumerate().map(|(j, (a, b))| {
        let w = weights.map_or(1.0, |w| w[j]);
        let diff = a - b;
        match metric {
            DistanceMetric::L1 => w * diff.abs(),
            DistanceMetric::L2 => w * diff * diff,
        }
    });
    let s: f64 = terms.sum();
    match metric {
        DistanceMetric::L1 => s,
        DistanceMetric::L2 => s.sqrt(),
    }
}

/// Pairwise distances between the rows of `x`.
pub fn distance_matrix(x: ArrayView2<f64>, metric: DistanceMetric, weights: Option<&[f64]>) -> Array2<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| distance_unchecked(x.row(i), x.row(j), metric, weights))
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r.into_iter().enumerate() {
            d[[i, j]] = v;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    /// `k` rows drawn uniformly without replacement per restart, skipping rows
    /// whose values duplicate an already drawn medoid while alternatives remain.
    #[default]
    Random,
    /// One restart per `k`-subset of rows, in lexicographic order. Only
    /// sensible for tiny inputs; `restarts` is ignored.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedoidsConfig {
    pub k: usize,
    pub metric: DistanceMetric,
    pub restarts: usize,
    pub max_iterations: usize,
    pub seed: u64,
    pub feature_weights: Option<Vec<f64>>,
    pub init: Initialization,
}

impl KMedoidsConfig {
    pub fn new(k: usize) -> Self {
        KMedoidsConfig {
            k,
            metric: DistanceMetric::L2,
            restarts: 30,
            max_iterations: 300,
            seed: 0,
            feature_weights: None,
            init: Initialization::Random,
        }
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.feature_weights = Some(weights);
        self
    }

    pub fn with_init(mut self, init: Initialization) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Cluster index per row, in `[0, k)`.
    pub assignments: Vec<usize>,
    /// Row index of each cluster's medoid.
    pub medoid_rows: Vec<usize>,
    pub total_cost: f64,
    pub restarts_run: usize,
    /// Index of the restart that produced this result.
    pub best_restart: usize,
    /// Cost after each assignment step of the best restart.
    pub cost_trace: Vec<f64>,
}

impl ClusteringResult {
    pub fn k(&self) -> usize {
        self.medoid_rows.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

struct Run {
    assignments: Vec<usize>,
    medoids: Vec<usize>,
    cost: f64,
    cost_trace: Vec<f64>,
}

/// Nearest medoid per row; ties go to the lowest cluster index, and a medoid
/// row always belongs to its own cluster.
fn assign(dist: &Array2<f64>, medoids: &[usize]) -> (Vec<usize>, f64) {
    let n = dist.nrows();
    let mut labels = vec![0; n];
    let mut cost = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        if let Some(c) = medoids.iter().position(|&m| m == i) {
            *label = c;
            continue;
        }
        let mut best = 0;
        let mut best_d = dist[[i, medoids[0]]];
        for (c, &m) in medoids.iter().enumerate().skip(1) {
            let d = dist[[i, m]];
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *label = best;
        cost += best_d;
    }
    (labels, cost)
}

/// Member minimizing the summed distance to its cluster; ties go to the lowest
/// row index.
fn update_medoids(dist: &Array2<f64>, labels: &[usize], k: usize, medoids: &mut [usize]) {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    for (c, rows) in members.iter().enumerate() {
        let mut best = medoids[c];
        let mut best_cost = f64::INFINITY;
        for &cand in rows {
            let s: f64 = rows.iter().map(|&x| dist[[cand, x]]).sum();
            if s < best_cost {
                best_cost = s;
                best = cand;
            }
        }
        medoids[c] = best;
    }
}

fn voronoi(dist: &Array2<f64>, init: Vec<usize>, max_iterations: usize) -> Run {
    let k = init.len();
    let mut medoids = init;
    let (mut labels, mut cost) = assign(dist, &medoids);
    let mut cost_trace = vec![cost];
    for _ in 0..max_iterations {
        update_medoids(dist, &labels, k, &mut medoids);
        let (next, next_cost) = assign(dist, &medoids);
        cost_trace.push(next_cost);
        let stable = next == labels;
        labels = next;
        cost = next_cost;
        if stable {
            break;
        }
    }
    Run {
        assignments: labels,
        medoids,
        cost,
        cost_trace,
    }
}

fn random_init(dist: &Array2<f64>, k: usize, seed: u64) -> Vec<usize> {
    let n = dist.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if chosen.iter().all(|&c| dist[[i, c]] > 0.0) {
            chosen.push(i);
        }
    }
    // Fewer distinct values than k: fill with duplicates in draw order.
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    chosen
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Best-of-restarts k-medoids on the rows of `x`.
pub fn k_medoids(x: ArrayView2<f64>, cfg: &KMedoidsConfig) -> Result<ClusteringResult> {
    let n = x.nrows();
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidConfig("restarts must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::TooFewPoints { n, k: cfg.k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    check_weights(cfg.feature_weights.as_deref(), x.ncols())?;
    let dist = distance_matrix(x, cfg.metric, cfg.feature_weights.as_deref());
    k_medoids_precomputed(&dist, cfg)
}

/// k-medoids on a precomputed symmetric distance matrix.
pub fn k_medoids_precomputed(dist: &Array2<f64>, cfg: &KMedoidsConfig) -> Result<ClusteringResult> {
    let n = dist.nrows();
    if n < cfg.k {
        return Err(Error::TooFewPoints { n, k: cfg.k });
    }
    let inits: Vec<Vec<usize>> = match cfg.init {
        Initialization::Random => (0..cfg.restarts)
            .map(|r| random_init(dist, cfg.k, cfg.seed ^ r as u64))
            .collect(),
        Initialization::Exhaustive => combinations(n, cfg.k),
    };
    let runs: Vec<Run> = inits
        .into_par_iter()
        .map(|init| voronoi(dist, init, cfg.max_iterations))
        .collect();
    let restarts_run = runs.len();
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .reduce(|a, b| if b.1.cost < a.1.cost { b } else { a })
        .expect("at least one restart");
    Ok(ClusteringResult {
        assignments: best.assignments,
        medoid_rows: best.medoids,
        total_cost: best.cost,
        restarts_run,
        best_restart,
        cost_trace: best.cost_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn metric_values() {
        let (a, b) = ([0.0, 0.0], [1.0, 2.0]);
        assert_eq!(distance(&a, &b, DistanceMetric::L1, None).unwrap(), 3.0);
        assert!((distance(&a, &b, DistanceMetric::L2, None).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(distance(&a, &b, DistanceMetric::L1, Some(&[2.0, 1.0])).unwrap(), 4.0);
        assert_eq!(distance(&b, &b, DistanceMetric::L2, None).unwrap(), 0.0);
        assert!(matches!(
            distance(&a, &[1.0], DistanceMetric::L1, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn k_equals_n_is_zero_cost() {
        let x = array![[0.0, 1.0], [3.0, 4.0], [5.0, 9.0]];
        let r = k_medoids(x.view(), &KMedoidsConfig::new(3)).unwrap();
        assert_eq!(r.total_cost, 0.0);
        let mut meds = r.medoid_rows.clone();
        meds.sort();
        assert_eq!(meds, vec![0, 1, 2]);
    }

    fn two_groups() -> Array2<f64> {
        array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.2], [5.0, 5.0], [5.2, 5.0], [5.0, 5.1]]
    }

    #[test]
    fn two_groups_reach_brute_force_minimum() {
        let x = two_groups();
        let r = k_medoids(x.view(), &KMedoidsConfig::new(2).with_seed(3)).unwrap();
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[0], r.assignments[2]);
        assert_eq!(r.assignments[3], r.assignments[4]);
        assert_eq!(r.assignments[3], r.assignments[5]);
        assert_ne!(r.assignments[0], r.assignments[3]);

        // Oracle: every pair of medoids, every point to its nearest.
        let mut best = f64::INFINITY;
        for a in 0..6 {
            for b in a + 1..6 {
                let c: f64 = (0..6)
                    .map(|i| {
                        let da = distance(x.row(i).as_slice().unwrap(), x.row(a).as_slice().unwrap(), DistanceMetric::L2, None).unwrap();
                        let db = distance(x.row(i).as_slice().unwrap(), x.row(b).as_slice().unwrap(), DistanceMetric::L2, None).unwrap();
                        da.min(db)
                    })
                    .sum();
                best = best.min(c);
            }
        }
        assert!((r.total_cost - best).abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let x = two_groups();
        let cfg = KMedoidsConfig::new(2).with_seed(11).with_metric(DistanceMetric::L1);
        assert_eq!(k_medoids(x.view(), &cfg).unwrap(), k_medoids(x.view(), &cfg).unwrap());
    }

    #[test]
    fn cost_never_increases() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64 + (i % 3) as f64);
        let r = k_medoids(x.view(), &KMedoidsConfig::new(4).with_seed(2)).unwrap();
        for w in r.cost_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", r.cost_trace);
        }
    }

    #[test]
    fn duplicate_rows_still_give_nonempty_clusters() {
        let x = array![[1.0], [1.0], [1.0], [2.0]];
        let r = k_medoids(x.view(), &KMedoidsConfig::new(3)).unwrap();
        assert!(r.cluster_sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn distinct_values_preferred_for_initial_medoids() {
        // Four tight identical groups; every restart starts with one medoid
        // per group, so one restart already finds the zero-cost partition.
        let mut rows = Vec::new();
        for g in 0..4 {
            for _ in 0..10 {
                rows.push([g as f64 * 10.0, 0.0]);
            }
        }
        let x = Array2::from_shape_vec((40, 2), rows.concat()).unwrap();
        let r = k_medoids(x.view(), &KMedoidsConfig::new(4).with_restarts(1)).unwrap();
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn errors() {
        let x = two_groups();
        assert!(matches!(
            k_medoids(x.view(), &KMedoidsConfig::new(7)),
            Err(Error::TooFewPoints { n: 6, k: 7 })
        ));
        let mut bad = x.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(matches!(k_medoids(bad.view(), &KMedoidsConfig::new(2)), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn combinations_enumerate_subsets() {
        let c = combinations(5, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 1, 2]);
        assert_eq!(c[9], vec![2, 3, 4]);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(4, 1).len(), 4);
    }
}
