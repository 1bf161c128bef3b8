//! Cutting-plane solution of robust problems: a master problem over finitely
//! many scenario sets alternates with a worst-case oracle over the clustered
//! uncertainty set.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteredSet;
use crate::conic::{AffExpr, ConicBackend, SolveStatus, Tolerances};
use crate::data::{NormOrder, UncertaintySpec};
use crate::error::{MroError, Result};
use crate::families::ConstraintFamily;
use crate::projection::{project, PointRegion};
use crate::reformulate::{base_program, emit_scenario_value, solve_emitted, EmittedProgram, MroProblem, MroSolution};

/// Settings of the projected-gradient ascent oracle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub proj_tol: f64,
    /// Step used when no smoothness bound is available.
    pub fallback_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-8, proj_tol: 1e-10, fallback_step: 1e-2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CuttingPlaneConfig {
    pub max_iter: usize,
    pub violation_tol: f64,
    pub oracle: OracleConfig,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        Self { max_iter: 100, violation_tol: 1e-6, oracle: OracleConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub points: Vec<Vec<f64>>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn wdot(a: &[Vec<f64>], b: &[Vec<f64>], w: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(w)
        .map(|((x, y), wk)| wk * x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

fn axpy(a: &[Vec<f64>], s: f64, b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect()).collect()
}

fn sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axpy(a, -1.0, b)
}

fn objective(fam: &ConstraintFamily, v: &[Vec<f64>], w: &[f64], x: &[f64]) -> Result<f64> {
    fam.gbar(v, w, x)
}

/// Per-point gradients; in the weighted metric the weights cancel.
fn gradient(fam: &ConstraintFamily, v: &[Vec<f64>], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    v.iter().map(|vk| fam.grad_u(vk, x)).collect()
}

/// Maximizes `sum_k w_k g(v_k, x)` over the uncertainty set by accelerated
/// projected gradient ascent with backtracking, started at the centroids.
pub fn max_oracle(
    fam: &ConstraintFamily,
    x: &[f64],
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    if spec.norm != NormOrder::L2 {
        return Err(MroError::Unsupported("the ascent oracle works with the Euclidean norm only".into()));
    }
    let m = fam.dim_u();
    if clustered.dim() != m {
        return Err(MroError::Dimension("cluster dimension differs from the family".into()));
    }
    let region = PointRegion::new(&spec.support, m, fam.domain_lower_bound())?;
    let d = &clustered.centroids;
    let w = &clustered.weights;
    let eps = spec.epsilon;
    let proj = |y: &[Vec<f64>]| project(y, d, w, spec.p, eps, &region, cfg.proj_tol);

    let mut cur = proj(d);
    let mut f_cur = objective(fam, &cur, w, x)?;
    if eps == 0.0 {
        return Ok(OracleResult { points: cur, value: f_cur, iterations: 0, converged: true });
    }
    let centroid_data = crate::data::Dataset::new(d.clone())?;
    let lip = fam.smoothness_bound(x, Some(&centroid_data)).unwrap_or(0.0);
    let g0 = gradient(fam, &cur, x)?;
    let g0_norm = wdot(&g0, &g0, w).sqrt();
    let mut step = if lip > 0.0 && lip.is_finite() {
        1.0 / lip
    } else if g0_norm > 0.0 {
        eps.max(1.0) / g0_norm
    } else {
        cfg.fallback_step
    };

    let mut t_k = 1.0f64;
    let mut y = cur.clone();
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        // gradient at the extrapolated point; fall back to the iterate outside the domain
        let (f_y, g_y) = match (objective(fam, &y, w, x), gradient(fam, &y, x)) {
            (Ok(f), Ok(g)) => (f, g),
            _ => {
                y = cur.clone();
                t_k = 1.0;
                (f_cur, gradient(fam, &y, x)?)
            }
        };
        let mut z;
        let mut f_z;
        let mut tries = 0;
        loop {
            z = proj(&axpy(&y, step, &g_y));
            let dz = sub(&z, &y);
            let model = f_y + wdot(&g_y, &dz, w) - wdot(&dz, &dz, w) / (2.0 * step);
            f_z = objective(fam, &z, w, x).unwrap_or(f64::NEG_INFINITY);
            if f_z >= model - 1e-14 * (1.0 + f_y.abs()) {
                break;
            }
            step *= 0.5;
            tries += 1;
            if tries > 60 {
                break;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        let next = if f_z >= f_cur { z.clone() } else { cur.clone() };
        let f_next = f_z.max(f_cur);
        y = axpy(&axpy(&next, t_k / t_next, &sub(&z, &next)), (t_k - 1.0) / t_next, &sub(&next, &cur));
        if f_z < f_cur {
            // restart momentum when the extrapolated step does not ascend
            t_k = 1.0;
            y = next.clone();
        } else {
            t_k = t_next;
        }
        cur = next;
        f_cur = f_next;
        step *= 1.5;

        // gradient mapping at the current iterate
        let g = gradient(fam, &cur, x)?;
        let mapped = proj(&axpy(&cur, step, &g));
        let gm = sub(&mapped, &cur);
        let gm_norm = wdot(&gm, &gm, w).sqrt() / step;
        if gm_norm <= cfg.grad_tol {
            if let Ok(f_m) = objective(fam, &mapped, w, x) {
                if f_m > f_cur {
                    cur = mapped;
                    f_cur = f_m;
                }
            }
            converged = true;
            break;
        }
        if step < 1e-300 {
            break;
        }
    }
    Ok(OracleResult { points: cur, value: f_cur, iterations, converged })
}

/// Scenario sets accumulated for each family.
pub type ScenarioSets = Vec<Vec<Vec<Vec<f64>>>>;

/// Minimizes the objective subject to one scenario constraint per stored
/// scenario set and family.
pub fn master_solve(
    prob: &MroProblem,
    weights: &[f64],
    scenarios: &ScenarioSets,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<MroSolution> {
    prob.validate()?;
    if scenarios.len() != prob.families.len() {
        return Err(MroError::Dimension("one scenario list per family".into()));
    }
    let EmittedProgram { mut program, x_vars, tau } = base_program(prob);
    let xs: Vec<AffExpr> = x_vars.iter().map(|&j| AffExpr::var(j)).collect();
    for (fam, sets) in prob.families.iter().zip(scenarios) {
        for points in sets {
            let value = emit_scenario_value(&mut program, fam, &xs, points, weights)?;
            let mut slack = value.scaled(-1.0);
            if let Some(t) = tau {
                slack.add_term(t, 1.0);
            }
            program.add_nonneg(slack);
        }
    }
    solve_emitted(&EmittedProgram { program, x_vars, tau }, backend, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub master_obj: f64,
    pub oracle_val: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuttingPlaneResult {
    pub solution: MroSolution,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<HistoryRow>,
}

fn max_norm_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Runs the cutting-plane loop starting from the cluster centroids.
pub fn cutting_plane_solve(
    prob: &MroProblem,
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    cfg: &CuttingPlaneConfig,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<CuttingPlaneResult> {
    prob.validate()?;
    if cfg.violation_tol <= 0.0 || cfg.max_iter == 0 {
        return Err(MroError::InvalidArgument("violation_tol and max_iter must be positive".into()));
    }
    let start = Instant::now();
    let mut scenarios: ScenarioSets = vec![vec![clustered.centroids.clone()]; prob.families.len()];
    let mut history = Vec::new();
    let mut last: Option<MroSolution> = None;
    let mut backend_time = 0.0;
    for iter in 1..=cfg.max_iter {
        let mut sol = master_solve(prob, &clustered.weights, &scenarios, backend, tol)?;
        backend_time += sol.solve_time;
        sol.solve_time = backend_time;
        if sol.status != SolveStatus::Optimal {
            return Ok(CuttingPlaneResult { solution: sol, iterations: iter, converged: false, history });
        }
        let level = sol.tau.unwrap_or(0.0);
        let mut worst = f64::NEG_INFINITY;
        let mut new_cuts = Vec::new();
        for (l, fam) in prob.families.iter().enumerate() {
            let res = max_oracle(fam, &sol.x, clustered, spec, &cfg.oracle)?;
            let violation = res.value - level;
            worst = worst.max(violation);
            if violation > cfg.violation_tol {
                new_cuts.push((l, res.points));
            }
        }
        history.push(HistoryRow { iter, master_obj: sol.objective, oracle_val: worst, time: start.elapsed().as_secs_f64() });
        if new_cuts.is_empty() {
            return Ok(CuttingPlaneResult { solution: sol, iterations: iter, converged: true, history });
        }
        let mut added = false;
        for (l, pts) in new_cuts {
            if scenarios[l].iter().all(|s| max_norm_diff(s, &pts) > 1e-9) {
                scenarios[l].push(pts);
                added = true;
            }
        }
        last = Some(sol);
        if !added {
            break;
        }
    }
    let mut solution = last.expect("at least one master solve");
    solution.status = SolveStatus::IterationLimit;
    let iterations = history.len();
    Ok(CuttingPlaneResult { solution, iterations, converged: false, history })
}
