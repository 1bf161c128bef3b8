//! Seeded instance and sample generators for the benchmark problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{MroError, Result};

/// Mode scales of the multimodal quadratic data.
pub const QUADRATIC_MODES: [f64; 5] = [1.0, 5.0, 15.0, 25.0, 40.0];
/// Scales of the three log-sum-exp data sets.
pub const LSE_SCALES: [f64; 3] = [1.0, 3.0, 7.0];

/// Generator stream 0 of `seed`; repetitions use the later streams.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn need_positive(what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(MroError::InvalidArgument(format!("{what} must be at least 1")));
    }
    Ok(())
}

/// Sizes of consecutive groups when `total` samples are split into `groups`;
/// the last group absorbs the remainder.
pub fn group_sizes(total: usize, groups: usize) -> Vec<usize> {
    let base = total / groups;
    let mut sizes = vec![base; groups];
    sizes[groups - 1] += total - base * groups;
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityInstance {
    /// Opening cost of each facility.
    pub c: Vec<f64>,
    /// Shipping cost from facility `i` to customer `j`.
    pub dist: Vec<Vec<f64>>,
    /// Capacity of each facility.
    pub r: Vec<f64>,
    pub data: Dataset,
}

pub fn facility_demands(rng: &mut ChaCha8Rng, m: usize, count: usize) -> Result<Dataset> {
    Dataset::new((0..count).map(|_| (0..m).map(|_| rng.random_range(1.0..6.0)).collect()).collect())
}

/// `n` facilities and `m` customers placed uniformly on `[0, 15]^2`, with
/// costs in `[30, 70]`, capacities in `[10, 50]` and demands in `[1, 6]`.
pub fn gen_facility(n: usize, m: usize, samples: usize, seed: u64) -> Result<FacilityInstance> {
    let rng = &mut seeded(seed);
    need_positive("n", n)?;
    need_positive("m", m)?;
    need_positive("N", samples)?;
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(30.0..70.0)).collect();
    let mut place = |k: usize| -> Vec<[f64; 2]> {
        (0..k).map(|_| [rng.random_range(0.0..15.0), rng.random_range(0.0..15.0)]).collect()
    };
    let fac = place(n);
    let cust = place(m);
    let dist = fac
        .iter()
        .map(|f| cust.iter().map(|q| ((f[0] - q[0]).powi(2) + (f[1] - q[1]).powi(2)).sqrt()).collect())
        .collect();
    let r = (0..n).map(|_| rng.random_range(10.0..50.0)).collect();
    let data = facility_demands(rng, m, samples)?;
    Ok(FacilityInstance { c, dist, r, data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapitalInstance {
    /// Cash flows, `n x (T + 1)`.
    pub f: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub theta: f64,
    pub data: Dataset,
}

/// Upper end of the weight interval for project `j` (1-based).
pub fn capital_weight_upper(j: usize) -> f64 {
    (3.0 - 0.5 * j as f64).max(1.0)
}

/// Discount rates: the first half of the samples uses `j [0.005, 0.02]`,
/// the rest `j [0.01, 0.025]` for project `j`.
pub fn capital_rates(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Result<Dataset> {
    let half = count / 2;
    Dataset::new(
        (0..count)
            .map(|s| {
                let (lo, hi) = if s < half { (0.005, 0.02) } else { (0.01, 0.025) };
                (1..=n).map(|j| j as f64 * rng.random_range(lo..hi)).collect()
            })
            .collect(),
    )
}

pub fn gen_capital(n: usize, t: usize, samples: usize, theta: f64, seed: u64) -> Result<CapitalInstance> {
    let rng = &mut seeded(seed);
    need_positive("n", n)?;
    need_positive("T", t)?;
    need_positive("N", samples)?;
    let f = (0..n)
        .map(|_| (0..=t).map(|tt| rng.random_range(0.1..0.5 + 0.004 * tt as f64)).collect())
        .collect();
    let h = (1..=n)
        .map(|j| {
            let hi = capital_weight_upper(j);
            if hi > 1.0 {
                rng.random_range(1.0..hi)
            } else {
                1.0
            }
        })
        .collect();
    let data = capital_rates(rng, n, samples)?;
    Ok(CapitalInstance { f, h, theta, data })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticInstance {
    pub a: Vec<Vec<Vec<f64>>>,
    pub data: Dataset,
}

/// Multimodal normal samples: mode `j` has mean `gamma_j 0.03 i` and
/// variance `0.02^2 + (0.025 i)^2` in coordinate `i` (1-based).
pub fn quadratic_samples(rng: &mut ChaCha8Rng, m: usize, count: usize) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(count);
    for (mode, size) in QUADRATIC_MODES.iter().zip(group_sizes(count, QUADRATIC_MODES.len())) {
        let normals: Vec<Normal<f64>> = (1..=m)
            .map(|i| {
                let i = i as f64;
                let var = 0.02f64.powi(2) + (0.025 * i).powi(2);
                Normal::new(mode * 0.03 * i, var.sqrt()).expect("positive variance")
            })
            .collect();
        for _ in 0..size {
            rows.push(normals.iter().map(|d| d.sample(rng)).collect());
        }
    }
    Dataset::new(rows)
}

/// Random `A = G^T G / m + 1e-3 I` with standard normal `G`.
pub fn random_pd(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    let g: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| StandardNormal.sample(rng)).collect()).collect();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let s: f64 = (0..m).map(|r| g[r][i] * g[r][j]).sum();
                    s / m as f64 + if i == j { 1e-3 } else { 0.0 }
                })
                .collect()
        })
        .collect()
}

pub fn gen_quadratic(n: usize, m: usize, samples: usize, seed: u64) -> Result<QuadraticInstance> {
    let rng = &mut seeded(seed);
    need_positive("n", n)?;
    need_positive("m", m)?;
    need_positive("N", samples)?;
    let a = (0..n).map(|_| random_pd(rng, m)).collect();
    let data = quadratic_samples(rng, m, samples)?;
    Ok(QuadraticInstance { a, data })
}

/// Three sets of samples; in set `j` coordinate `i` (1-based) is uniform on
/// `0.01 [gamma_j i, gamma_j (i + 1)]`.
pub fn logsumexp_samples(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(count);
    for (g, size) in LSE_SCALES.iter().zip(group_sizes(count, LSE_SCALES.len())) {
        for _ in 0..size {
            rows.push((1..=n).map(|i| 0.01 * g * rng.random_range(i as f64..(i + 1) as f64)).collect());
        }
    }
    Dataset::new(rows)
}

pub fn gen_logsumexp(n: usize, samples: usize, seed: u64) -> Result<Dataset> {
    need_positive("n", n)?;
    need_positive("N", samples)?;
    logsumexp_samples(&mut seeded(seed), n, samples)
}
