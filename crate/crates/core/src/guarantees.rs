//! Guarantee utilities: the radius adjustment for clustered data, the
//! clustered/unclustered ordering check, out-of-sample violation estimates
//! and cross-validated radius selection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusteredSet;
use crate::conic::{ConicBackend, SolveStatus, Tolerances};
use crate::data::{Dataset, UncertaintySpec};
use crate::error::{MroError, Result};
use crate::families::ConstraintFamily;
use crate::reformulate::{worst_case_value, MroProblem, MroSolution};

/// Radius that keeps the unclustered guarantee on the clustered set.
pub fn adjusted_epsilon(eps_base: f64, clustered: &ClusteredSet) -> Result<f64> {
    if !(eps_base >= 0.0) || !eps_base.is_finite() {
        return Err(MroError::InvalidArgument(format!("eps_base must be finite and nonnegative, got {eps_base}")));
    }
    Ok(eps_base + clustered.eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub g_n: f64,
    pub g_k: f64,
    pub g_n_star: f64,
    pub l: f64,
    pub d: f64,
    pub bound: f64,
    pub delta_estimate: f64,
    pub holds_lower: bool,
    pub holds_upper: bool,
}

/// Computes the worst-case values with all samples (`g_n`), with the
/// clusters (`g_k`) and with all samples and no support (`g_n_star`), and
/// checks `g_n <= g_k <= g_n_star + L/2 D` up to `check_tol`.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    family: &ConstraintFamily,
    x: &[f64],
    data: &Dataset,
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
    check_tol: f64,
) -> Result<SandwichReport> {
    if data.dim() != family.dim_u() || clustered.dim() != family.dim_u() {
        return Err(MroError::Dimension("data, clusters and family must share the uncertainty dimension".into()));
    }
    let report = family.check_assumptions(&spec.support);
    if !report.domain_ok {
        return Err(MroError::Domain(format!("support leaves the domain of the {} family", family.name())));
    }
    let all = ClusteredSet::singletons(data, spec.norm);
    let g_n = worst_case_value(family, x, &all, spec, false, backend, tol)?;
    let g_k = worst_case_value(family, x, clustered, spec, false, backend, tol)?;
    let g_n_star = worst_case_value(family, x, &all, spec, true, backend, tol)?;
    let l = family.smoothness_bound(x, Some(data))?;
    let bound = 0.5 * l * clustered.d;
    let out = SandwichReport {
        g_n,
        g_k,
        g_n_star,
        l,
        d: clustered.d,
        bound,
        delta_estimate: g_n_star - g_n,
        holds_lower: g_n <= g_k + check_tol,
        holds_upper: g_k <= g_n_star + bound + check_tol,
    };
    if ![g_n, g_k, g_n_star, l, bound].iter().all(|v| v.is_finite()) {
        return Err(MroError::Solver(format!("non-finite worst-case value in sandwich check: {out:?}")));
    }
    Ok(out)
}

/// How several robust constraints are judged out of sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuaranteeMode {
    /// Violation when some constraint has a positive expected value.
    #[default]
    PerConstraint,
    /// Violation when the expected pointwise maximum over constraints is positive.
    Simultaneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaConfig {
    pub repetitions: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: GuaranteeMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta_hat: f64,
    pub repetitions: usize,
    pub failures: usize,
    /// Empirical expected constraint value of each successful repetition.
    pub means: Vec<f64>,
    /// In-sample objective of each successful repetition.
    pub objectives: Vec<f64>,
    pub mode: GuaranteeMode,
}

impl BetaEstimate {
    pub fn from_means(means: Vec<f64>, objectives: Vec<f64>, failures: usize, mode: GuaranteeMode) -> Result<Self> {
        if means.is_empty() {
            return Err(MroError::Solver(format!("all {failures} repetitions failed")));
        }
        let violated = means.iter().filter(|m| **m > 0.0).count();
        Ok(Self {
            beta_hat: violated as f64 / means.len() as f64,
            repetitions: means.len() + failures,
            failures,
            means,
            objectives,
            mode,
        })
    }

    pub fn mean_objective(&self) -> f64 {
        self.objectives.iter().sum::<f64>() / self.objectives.len() as f64
    }

    /// Average out-of-sample expected constraint value.
    pub fn mean_expected(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }
}

/// Empirical expected constraint value of a solution on evaluation samples.
/// In epigraph mode the level `tau` is subtracted.
pub fn expected_violation(prob: &MroProblem, sol: &MroSolution, eval: &Dataset, mode: GuaranteeMode) -> Result<f64> {
    let level = if prob.epigraph { sol.tau.unwrap_or(0.0) } else { 0.0 };
    let n = eval.len() as f64;
    match mode {
        GuaranteeMode::PerConstraint => {
            let mut worst = f64::NEG_INFINITY;
            for fam in &prob.families {
                let mut s = 0.0;
                for u in eval.rows() {
                    s += fam.eval(u, &sol.x)?;
                }
                worst = worst.max(s / n - level);
            }
            Ok(worst)
        }
        GuaranteeMode::Simultaneous => {
            let mut s = 0.0;
            for u in eval.rows() {
                let mut m = f64::NEG_INFINITY;
                for fam in &prob.families {
                    m = m.max(fam.eval(u, &sol.x)?);
                }
                s += m;
            }
            Ok(s / n - level)
        }
    }
}

/// Estimates the probability that the solution violates the expected
/// constraint out of sample. Repetition `r` draws its training and
/// evaluation samples from stream `r + 1` of the seed, so stream 0 stays
/// free for the instance itself.
pub fn out_of_sample_beta<S, G>(prob: &MroProblem, mut solve_fn: S, mut generate: G, cfg: &BetaConfig) -> Result<BetaEstimate>
where
    S: FnMut(&MroProblem, &Dataset) -> Result<MroSolution>,
    G: FnMut(&mut ChaCha8Rng, usize) -> Result<Dataset>,
{
    if cfg.repetitions == 0 || cfg.n_train == 0 || cfg.n_eval == 0 {
        return Err(MroError::InvalidArgument("repetitions and sample sizes must be positive".into()));
    }
    let mut means = Vec::with_capacity(cfg.repetitions);
    let mut objectives = Vec::with_capacity(cfg.repetitions);
    let mut failures = 0;
    for rep in 0..cfg.repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(rep as u64 + 1);
        let train = generate(&mut rng, cfg.n_train)?;
        let eval = generate(&mut rng, cfg.n_eval)?;
        let sol = match solve_fn(prob, &train) {
            Ok(s) if matches!(s.status, SolveStatus::Optimal) => s,
            _ => {
                failures += 1;
                continue;
            }
        };
        match expected_violation(prob, &sol, &eval, cfg.mode) {
            Ok(v) => {
                means.push(v);
                objectives.push(sol.objective);
            }
            Err(_) => failures += 1,
        }
    }
    BetaEstimate::from_means(means, objectives, failures, cfg.mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub eps: f64,
    pub beta_hat: f64,
    pub mean_objective: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub eps_star: f64,
    pub table: Vec<CvRow>,
    /// No grid point reached the target; `eps_star` is the largest radius.
    pub target_missed: bool,
}

/// Picks the smallest radius on a sorted grid whose estimate meets the
/// target violation probability.
pub fn cross_validate_epsilon<F>(eps_grid: &[f64], target_beta: f64, mut estimate: F) -> Result<CvResult>
where
    F: FnMut(f64) -> Result<BetaEstimate>,
{
    if eps_grid.is_empty() {
        return Err(MroError::InvalidArgument("empty epsilon grid".into()));
    }
    if eps_grid.windows(2).any(|w| !(w[0] <= w[1])) || eps_grid.iter().any(|e| !(*e >= 0.0)) {
        return Err(MroError::InvalidArgument("epsilon grid must be sorted and nonnegative".into()));
    }
    if !(target_beta > 0.0 && target_beta < 1.0) {
        return Err(MroError::InvalidArgument(format!("target beta must lie in (0, 1), got {target_beta}")));
    }
    let mut table = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let est = estimate(eps)?;
        table.push(CvRow { eps, beta_hat: est.beta_hat, mean_objective: est.mean_objective(), failures: est.failures });
    }
    let hit = table.iter().find(|r| r.beta_hat <= target_beta).map(|r| r.eps);
    Ok(CvResult {
        eps_star: hit.unwrap_or(*eps_grid.last().expect("nonempty grid")),
        table,
        target_missed: hit.is_none(),
    })
}
