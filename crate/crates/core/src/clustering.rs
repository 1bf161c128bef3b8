//! K-means clustering of a dataset and the derived quality metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormOrder};
use crate::error::{MroError, Result};

/// Partition of a dataset into `K` nonempty clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredSet {
    pub centroids: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub assignments: Vec<usize>,
    /// Mean squared L2 distance of each point to its centroid.
    #[serde(rename = "D")]
    pub d: f64,
    /// Largest distance of a point to its centroid, in `norm`.
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub source_n: usize,
    pub norm: NormOrder,
}

impl ClusteredSet {
    /// Builds a clustering from explicit assignments; every id in `0..k` must be used.
    pub fn from_assignments(data: &Dataset, assignments: Vec<usize>, k: usize, norm: NormOrder) -> Result<Self> {
        if assignments.len() != data.len() {
            return Err(MroError::Dimension("one assignment per sample required".into()));
        }
        let m = data.dim();
        let mut sums = vec![vec![0.0; m]; k];
        let mut counts = vec![0usize; k];
        for (row, &a) in data.rows().iter().zip(&assignments) {
            if a >= k {
                return Err(MroError::InvalidArgument(format!("cluster id {a} out of range for K = {k}")));
            }
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(row) {
                *s += v;
            }
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(MroError::InvalidArgument(format!("cluster {empty} is empty")));
        }
        let centroids: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
            .collect();
        let n = data.len() as f64;
        let weights = counts.iter().map(|&c| c as f64 / n).collect();
        let (d, eta) = metrics(data, &centroids, &assignments, norm);
        Ok(Self { centroids, weights, assignments, d, eta, k, source_n: data.len(), norm })
    }

    /// Every sample in its own cluster, in dataset order.
    pub fn singletons(data: &Dataset, norm: NormOrder) -> Self {
        let n = data.len();
        Self {
            centroids: data.rows().to_vec(),
            weights: vec![1.0 / n as f64; n],
            assignments: (0..n).collect(),
            d: 0.0,
            eta: 0.0,
            k: n,
            source_n: n,
            norm,
        }
    }

    /// Single cluster at the dataset mean.
    pub fn single(data: &Dataset, norm: NormOrder) -> Self {
        Self::from_assignments(data, vec![0; data.len()], 1, norm).expect("one nonempty cluster")
    }

    /// Explicit scenario points with weights, not tied to a dataset.
    pub fn from_points(centroids: Vec<Vec<f64>>, weights: Vec<f64>, norm: NormOrder) -> Result<Self> {
        if centroids.is_empty() || centroids.len() != weights.len() {
            return Err(MroError::Dimension("need matching nonempty centroids and weights".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MroError::InvalidArgument("weights must be positive and sum to 1".into()));
        }
        let k = centroids.len();
        Ok(Self { centroids, weights, assignments: Vec::new(), d: 0.0, eta: 0.0, k, source_n: k, norm })
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map(|c| c.len()).unwrap_or(0)
    }
}

/// Settings for [`kmeans`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Norm used for `eta`.
    pub norm: NormOrder,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { seed: 0, restarts: 10, max_iter: 300, tol: 1e-10, norm: NormOrder::L2 }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn metrics(data: &Dataset, centroids: &[Vec<f64>], assignments: &[usize], norm: NormOrder) -> (f64, f64) {
    let mut total = 0.0;
    let mut eta: f64 = 0.0;
    for (row, &a) in data.rows().iter().zip(assignments) {
        total += sq_dist(row, &centroids[a]);
        eta = eta.max(norm.distance(row, &centroids[a]));
    }
    (total / data.len() as f64, eta)
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn recompute_centroids(data: &Dataset, assignments: &[usize], k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let m = data.dim();
    let mut sums = vec![vec![0.0; m]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in data.rows().iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(row) {
            *s += v;
        }
    }
    let cents = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { s } else { s.into_iter().map(|v| v / c as f64).collect() })
        .collect();
    (cents, counts)
}

/// Moves the farthest point of a cluster with at least two members into each
/// empty cluster.
fn repair_empty(data: &Dataset, assignments: &mut [usize], centroids: &mut Vec<Vec<f64>>, k: usize) {
    loop {
        let (cents, counts) = recompute_centroids(data, assignments, k);
        *centroids = cents;
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, row) in data.rows().iter().enumerate() {
            let a = assignments[i];
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(row, &centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        match far {
            Some(i) => assignments[i] = empty,
            None => return,
        }
    }
}

/// Lloyd iterations from initial centroids; returns assignments and centroids.
fn lloyd(data: &Dataset, init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let k = init.len();
    let mut centroids = init;
    let mut assignments: Vec<usize> = data.rows().iter().map(|r| nearest(r, &centroids)).collect();
    repair_empty(data, &mut assignments, &mut centroids, k);
    for _ in 0..max_iter {
        let next: Vec<usize> = data.rows().iter().map(|r| nearest(r, &centroids)).collect();
        let changed = next != assignments;
        assignments = next;
        let old = centroids.clone();
        repair_empty(data, &mut assignments, &mut centroids, k);
        let shift = old
            .iter()
            .zip(&centroids)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        if !changed || shift <= tol {
            break;
        }
    }
    (assignments, centroids)
}

fn kmeans_pp(data: &Dataset, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![data.row(first).to_vec()];
    let mut dist: Vec<f64> = data.rows().iter().map(|r| sq_dist(r, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = None;
            for (i, d) in dist.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                acc += d;
                idx = Some(i);
                if acc >= target {
                    break;
                }
            }
            idx.expect("positive total mass")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = data.row(pick).to_vec();
        for (d, row) in dist.iter_mut().zip(data.rows()) {
            *d = d.min(sq_dist(row, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn validate_k(data: &Dataset, k: usize) -> Result<()> {
    if k < 1 {
        return Err(MroError::InvalidArgument("K must be >= 1".into()));
    }
    if k > data.len() {
        return Err(MroError::InvalidArgument(format!("K = {k} exceeds N = {}", data.len())));
    }
    Ok(())
}

/// Best of `cfg.restarts` k-means++ seeded Lloyd runs, by `D`.
pub fn kmeans(data: &Dataset, k: usize, cfg: &KMeansConfig) -> Result<ClusteredSet> {
    validate_k(data, k)?;
    if k == 1 {
        return Ok(ClusteredSet::single(data, cfg.norm));
    }
    if k == data.len() {
        return Ok(ClusteredSet::singletons(data, cfg.norm));
    }
    let mut best: Option<ClusteredSet> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(restart as u64);
        let init = kmeans_pp(data, k, &mut rng);
        let (assignments, _) = lloyd(data, init, cfg.max_iter, cfg.tol);
        let cs = ClusteredSet::from_assignments(data, assignments, k, cfg.norm)?;
        if best.as_ref().is_none_or(|b| cs.d < b.d) {
            best = Some(cs);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Splits the cluster with the largest squared error around its two most
/// distant members.
fn split_worst(data: &Dataset, cs: &ClusteredSet) -> Vec<usize> {
    let mut sse = vec![0.0; cs.k];
    for (row, &a) in data.rows().iter().zip(&cs.assignments) {
        sse[a] += sq_dist(row, &cs.centroids[a]);
    }
    let mut worst = 0;
    for k in 1..cs.k {
        if sse[k] > sse[worst] {
            worst = k;
        }
    }
    let members: Vec<usize> = (0..data.len()).filter(|&i| cs.assignments[i] == worst).collect();
    let c = &cs.centroids[worst];
    let farthest = |from: &[f64]| {
        let mut best = members[0];
        for &i in &members {
            if sq_dist(data.row(i), from) > sq_dist(data.row(best), from) {
                best = i;
            }
        }
        best
    };
    let a = farthest(c);
    let b = farthest(data.row(a));
    let mut assignments = cs.assignments.clone();
    let new_id = cs.k;
    for &i in &members {
        if sq_dist(data.row(i), data.row(b)) < sq_dist(data.row(i), data.row(a)) {
            assignments[i] = new_id;
        }
    }
    assignments
}

/// Clusterings for each `K` in an ascending list, with `D` forced to be
/// nonincreasing along the list.
pub fn profile_clusterings(data: &Dataset, k_list: &[usize], cfg: &KMeansConfig) -> Result<Vec<ClusteredSet>> {
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MroError::InvalidArgument("K list must be strictly ascending".into()));
    }
    let mut out: Vec<ClusteredSet> = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut cs = kmeans(data, k, cfg)?;
        if let Some(prev) = out.last() {
            if cs.d > prev.d {
                let mut cur = prev.clone();
                while cur.k < k {
                    let assignments = split_worst(data, &cur);
                    cur = ClusteredSet::from_assignments(data, assignments, cur.k + 1, cfg.norm)?;
                }
                let (assignments, _) = lloyd(data, cur.centroids.clone(), cfg.max_iter, cfg.tol);
                let refined = ClusteredSet::from_assignments(data, assignments, k, cfg.norm)?;
                let candidate = if refined.d <= cur.d { refined } else { cur };
                if candidate.d < cs.d {
                    cs = candidate;
                }
            }
        }
        out.push(cs);
    }
    Ok(out)
}

/// One point of the clustering-quality profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub eta: f64,
}

pub fn d_profile(data: &Dataset, k_list: &[usize], cfg: &KMeansConfig) -> Result<Vec<ProfileEntry>> {
    Ok(profile_clusterings(data, k_list, cfg)?
        .iter()
        .map(|cs| ProfileEntry { k: cs.k, d: cs.d, eta: cs.eta })
        .collect())
}

/// Smallest `K` whose relative drop to the next entry falls below `drop_ratio`;
/// the last `K` when no drop does.
pub fn elbow_select(profile: &[ProfileEntry], drop_ratio: f64) -> Result<usize> {
    let first = profile.first().ok_or_else(|| MroError::InvalidArgument("empty profile".into()))?;
    let scale = first.d.max(f64::EPSILON);
    for w in profile.windows(2) {
        if (w[0].d - w[1].d) / scale < drop_ratio {
            return Ok(w[0].k);
        }
    }
    Ok(profile.last().expect("nonempty").k)
}
