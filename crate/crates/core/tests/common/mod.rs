//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use mro::clustering::ClusteredSet;
use mro::conic::{self, default_backend, AffExpr, ConicProgram, Tolerances};
use mro::data::{Dataset, NormOrder};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// `G^T G / m + shift I` with `G` uniform on `[-1, 1]`.
pub fn psd(rng: &mut ChaCha8Rng, m: usize, shift: f64) -> Vec<Vec<f64>> {
    let g: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (0..m).map(|r| g[r][i] * g[r][j]).sum::<f64>() / m as f64 + if i == j { shift } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn random_data(rng: &mut ChaCha8Rng, n: usize, m: usize, lo: f64, hi: f64) -> Dataset {
    Dataset::new((0..n).map(|_| (0..m).map(|_| rng.random_range(lo..hi)).collect()).collect()).unwrap()
}

pub fn random_clusters(rng: &mut ChaCha8Rng, k: usize, m: usize, lo: f64, hi: f64) -> ClusteredSet {
    let centroids: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random_range(lo..hi)).collect()).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let s: f64 = raw.iter().sum();
    ClusteredSet::from_points(centroids, raw.iter().map(|r| r / s).collect(), NormOrder::L2).unwrap()
}

/// `W_p` between the empirical distribution of `data` and the weighted
/// centroids, from the transport linear program.
pub fn wasserstein_lp(data: &Dataset, clustered: &ClusteredSet, p: u32) -> f64 {
    let n = data.len();
    let k = clustered.k;
    let mut prog = ConicProgram::new();
    let plan: Vec<Vec<usize>> = (0..n).map(|i| prog.add_vars(&format!("pi{i}_"), k)).collect();
    for (i, row) in data.rows().iter().enumerate() {
        for (kk, c) in clustered.centroids.iter().enumerate() {
            let d: f64 = row.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prog.set_cost(plan[i][kk], d.powi(p as i32));
            prog.add_nonneg(AffExpr::var(plan[i][kk]));
        }
        let mut e = AffExpr::constant(-1.0 / n as f64);
        for &v in &plan[i] {
            e.add_term(v, 1.0);
        }
        prog.add_zero(e);
    }
    for (kk, w) in clustered.weights.iter().enumerate() {
        let mut e = AffExpr::constant(-w);
        for row in &plan {
            e.add_term(row[kk], 1.0);
        }
        prog.add_zero(e);
    }
    let sol = conic::solve(&prog, default_backend().as_ref(), &Tolerances::tight()).unwrap();
    assert!(sol.is_optimal(), "transport LP ended with {}", sol.status);
    sol.objective.max(0.0).powf(1.0 / p as f64)
}

/// Runs the `mro` binary and returns (exit code, stdout, stderr).
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_mro")).args(args).output().expect("mro binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

/// Drops wall-clock fields: the `solve_time_s` column of CSV output or the
/// `solve_time_s` key of JSON output.
pub fn strip_timing(text: &str) -> String {
    if let Ok(mut v) = serde_json::from_str::<serde_json::Value>(text) {
        if let Some(obj) = v.as_object_mut() {
            obj.remove("solve_time_s");
        }
        return v.to_string();
    }
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return String::new() };
    let cols: Vec<&str> = header.split(',').collect();
    let Some(drop) = cols.iter().position(|c| *c == "solve_time_s") else { return text.to_string() };
    std::iter::once(header)
        .chain(lines)
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != drop).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}
