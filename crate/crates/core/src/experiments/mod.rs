//! Benchmark problems at desk scale: seeded instances, `(K, eps)` sweeps and
//! tidy CSV output.

pub mod generators;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, profile_clusterings, ClusteredSet, KMeansConfig};
use crate::conic::{backend_by_id, ConicBackend, SolveStatus, Tolerances};
use crate::cutting_plane::{cutting_plane_solve, CuttingPlaneConfig};
use crate::data::{Dataset, NormOrder, PExponent, SupportSet, UncertaintySpec};
use crate::error::{MroError, Result};
use crate::families::{ConstraintFamily, LSE_DOMAIN_LB};
use crate::guarantees::{out_of_sample_beta, BetaConfig, BetaEstimate, GuaranteeMode};
use crate::reformulate::{has_direct_dual, solve_direct, LinearConstraint, MroProblem, MroSolution, Sense};

use generators::{
    capital_rates, facility_demands, gen_capital, gen_facility, gen_logsumexp, gen_quadratic, logsumexp_samples,
    quadratic_samples,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    Facility,
    Capital,
    Quadratic,
    Logsumexp,
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentId::Facility => "facility",
            ExperimentId::Capital => "capital",
            ExperimentId::Quadratic => "quadratic",
            ExperimentId::Logsumexp => "logsumexp",
        })
    }
}

impl FromStr for ExperimentId {
    type Err = MroError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "facility" => Ok(ExperimentId::Facility),
            "capital" => Ok(ExperimentId::Capital),
            "quadratic" => Ok(ExperimentId::Quadratic),
            "logsumexp" => Ok(ExperimentId::Logsumexp),
            other => Err(MroError::InvalidArgument(format!(
                "unknown experiment `{other}` (facility, capital, quadratic, logsumexp)"
            ))),
        }
    }
}

/// Which solution path a sweep cell takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Direct reformulation when every family has one and there are at most
    /// [`AUTO_DIRECT_BINARIES`] binaries, cutting plane otherwise.
    #[default]
    Auto,
    Direct,
    CuttingPlane,
}

/// Largest binary count for which `Method::Auto` enumerates the direct
/// reformulation.
pub const AUTO_DIRECT_BINARIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSettings {
    pub repetitions: usize,
    /// Evaluation samples per repetition; ten times `N` when absent.
    #[serde(default)]
    pub n_eval: Option<usize>,
    #[serde(default)]
    pub mode: GuaranteeMode,
}

impl Default for BetaSettings {
    fn default() -> Self {
        Self { repetitions: 50, n_eval: None, mode: GuaranteeMode::PerConstraint }
    }
}

/// Sweep description. Size fields left out take the experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default, rename = "N")]
    pub samples: Option<usize>,
    #[serde(default, rename = "T")]
    pub t: Option<usize>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default, rename = "K_list")]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub eps_grid: Vec<f64>,
    #[serde(default)]
    pub p: Option<PExponent>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_backend_id")]
    pub backend: String,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub beta: Option<BetaSettings>,
    #[serde(default = "default_cap")]
    pub binary_cap: usize,
    /// Drop the support set (the compact affine form).
    #[serde(default)]
    pub relax_support: bool,
}

fn default_backend_id() -> String {
    "clarabel".into()
}

/// Binary count allowed for the enumerated experiments unless overridden.
pub const EXPERIMENT_BINARY_CAP: usize = 20;

fn default_cap() -> usize {
    EXPERIMENT_BINARY_CAP
}

/// Default sizes `(n, m, N, T, theta)`.
pub fn default_sizes(id: ExperimentId) -> (usize, usize, usize, usize, f64) {
    match id {
        ExperimentId::Facility => (5, 25, 50, 0, 0.0),
        ExperimentId::Capital => (10, 10, 60, 5, 6.0),
        ExperimentId::Quadratic => (10, 10, 90, 0, 0.0),
        ExperimentId::Logsumexp => (30, 30, 90, 0, 0.0),
    }
}

impl ExperimentConfig {
    /// Experiment defaults for sizes, `K` list, radius grid and `p`.
    pub fn new(experiment: ExperimentId) -> Self {
        let (k_list, eps_grid, p) = match experiment {
            ExperimentId::Facility => (vec![1, 5, 10, 50], vec![0.01, 0.1, 0.5, 1.0, 2.0], PExponent::Infinity),
            ExperimentId::Capital => (
                vec![1, 2, 5, 60],
                vec![0.0005, 0.001, 0.0015, 0.002, 0.003, 0.004, 0.005, 0.0075, 0.01, 0.02, 0.04],
                PExponent::Finite(2),
            ),
            ExperimentId::Quadratic => (vec![1, 2, 5, 10, 90], vec![0.01, 0.05, 0.1, 0.3, 0.5], PExponent::Finite(2)),
            ExperimentId::Logsumexp => (vec![1, 3, 9, 90], vec![0.01, 0.05, 0.1, 0.2], PExponent::Finite(2)),
        };
        Self {
            experiment,
            n: None,
            m: None,
            samples: None,
            t: None,
            theta: None,
            k_list,
            eps_grid,
            p: Some(p),
            seed: 0,
            backend: default_backend_id(),
            out: None,
            method: Method::Auto,
            beta: None,
            binary_cap: EXPERIMENT_BINARY_CAP,
            relax_support: false,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn sizes(&self) -> (usize, usize, usize, usize, f64) {
        let (n, m, samples, t, theta) = default_sizes(self.experiment);
        let n = self.n.unwrap_or(n);
        let m = match self.experiment {
            ExperimentId::Capital | ExperimentId::Logsumexp => n,
            _ => self.m.unwrap_or(m),
        };
        (n, m, self.samples.unwrap_or(samples), self.t.unwrap_or(t), self.theta.unwrap_or(theta))
    }

    pub fn exponent(&self) -> PExponent {
        self.p.unwrap_or(match self.experiment {
            ExperimentId::Facility => PExponent::Infinity,
            _ => PExponent::Finite(2),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m, samples, t, _) = self.sizes();
        if n == 0 || m == 0 || samples == 0 {
            return Err(MroError::InvalidArgument("sizes must be positive".into()));
        }
        if self.experiment == ExperimentId::Capital && t == 0 {
            return Err(MroError::InvalidArgument("capital budgeting needs T >= 1".into()));
        }
        if matches!(self.experiment, ExperimentId::Facility | ExperimentId::Capital) && n > self.binary_cap {
            return Err(MroError::TooManyBinaries { count: n, cap: self.binary_cap });
        }
        if let Some(k) = self.k_list.iter().find(|k| **k == 0 || **k > samples) {
            return Err(MroError::InvalidArgument(format!("K = {k} must lie in 1..={samples}")));
        }
        if self.eps_grid.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(MroError::InvalidArgument("radii must be finite and nonnegative".into()));
        }
        if let Some(b) = &self.beta {
            if b.repetitions == 0 || b.n_eval == Some(0) {
                return Err(MroError::InvalidArgument("beta estimation needs positive repetitions and samples".into()));
            }
        }
        backend_by_id(&self.backend)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sampler {
    Facility { m: usize },
    Capital { n: usize },
    Quadratic { m: usize },
    Logsumexp { n: usize },
}

/// A generated benchmark: the problem, its support and training data.
#[derive(Debug, Clone)]
pub struct Instance {
    pub experiment: ExperimentId,
    pub problem: MroProblem,
    pub support: SupportSet,
    pub data: Dataset,
    sampler: Sampler,
}

/// Facility variables: `x` (open flags) then `X` row-major.
pub fn facility_problem(c: &[f64], dist: &[Vec<f64>], r: &[f64]) -> Result<MroProblem> {
    let n = c.len();
    let m = dist.first().map(|d| d.len()).unwrap_or(0);
    let num_x = n + n * m;
    let ship = |i: usize, j: usize| n + i * m + j;
    let mut cost = c.to_vec();
    for row in dist {
        cost.extend_from_slice(row);
    }
    let mut x_constraints = Vec::new();
    for j in 0..m {
        x_constraints.push(LinearConstraint::new((0..n).map(|i| (ship(i, j), 1.0)).collect(), Sense::Eq, 1.0));
    }
    for v in n..num_x {
        x_constraints.push(LinearConstraint::new(vec![(v, 1.0)], Sense::Ge, 0.0));
    }
    let mut families = Vec::with_capacity(n);
    for i in 0..n {
        let mut a = vec![0.0; num_x];
        a[i] = -r[i];
        let mut p = vec![vec![0.0; m]; num_x];
        for j in 0..m {
            p[ship(i, j)][j] = 1.0;
        }
        families.push(ConstraintFamily::affine(a, p, 0.0)?);
    }
    Ok(MroProblem { num_x, cost, x_constraints, binaries: (0..n).collect(), families, epigraph: false })
}

/// Minimize the worst-case negated NPV subject to `h^T x <= theta`, `x` binary.
pub fn capital_problem(f: &[Vec<f64>], h: &[f64], theta: f64) -> Result<MroProblem> {
    let n = f.len();
    Ok(MroProblem {
        num_x: n,
        cost: vec![0.0; n],
        x_constraints: vec![LinearConstraint::new(h.iter().copied().enumerate().collect(), Sense::Le, theta)],
        binaries: (0..n).collect(),
        families: vec![ConstraintFamily::npv(f.to_vec())?],
        epigraph: true,
    })
}

/// Minimize the worst-case concave quadratic over the simplex.
pub fn quadratic_problem(a: &[Vec<Vec<f64>>]) -> Result<MroProblem> {
    let n = a.len();
    let mut x_constraints: Vec<LinearConstraint> =
        (0..n).map(|i| LinearConstraint::new(vec![(i, 1.0)], Sense::Ge, 0.0)).collect();
    x_constraints.push(LinearConstraint::new((0..n).map(|i| (i, 1.0)).collect(), Sense::Eq, 1.0));
    Ok(MroProblem {
        num_x: n,
        cost: vec![0.0; n],
        x_constraints,
        binaries: vec![],
        families: vec![ConstraintFamily::concave_quadratic(a.to_vec())?],
        epigraph: true,
    })
}

/// Minimize the worst-case log-sum-exp with `sum x >= 10`, `0 <= x <= 10`.
pub fn logsumexp_problem(n: usize) -> Result<MroProblem> {
    let mut x_constraints = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Ge, 0.0));
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Le, 10.0));
    }
    x_constraints.push(LinearConstraint::new((0..n).map(|i| (i, 1.0)).collect(), Sense::Ge, 10.0));
    Ok(MroProblem {
        num_x: n,
        cost: vec![0.0; n],
        x_constraints,
        binaries: vec![],
        families: vec![ConstraintFamily::log_sum_exp(n)?],
        epigraph: true,
    })
}

impl Instance {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, m, samples, t, theta) = cfg.sizes();
        let seed = cfg.seed;
        Ok(match cfg.experiment {
            ExperimentId::Facility => {
                let inst = gen_facility(n, m, samples, seed)?;
                Instance {
                    experiment: cfg.experiment,
                    problem: facility_problem(&inst.c, &inst.dist, &inst.r)?,
                    support: SupportSet::nonnegative(m),
                    data: inst.data,
                    sampler: Sampler::Facility { m },
                }
            }
            ExperimentId::Capital => {
                let inst = gen_capital(n, t, samples, theta, seed)?;
                Instance {
                    experiment: cfg.experiment,
                    problem: capital_problem(&inst.f, &inst.h, inst.theta)?,
                    support: SupportSet::boxed(vec![0.0; n], vec![1.0; n])?,
                    data: inst.data,
                    sampler: Sampler::Capital { n },
                }
            }
            ExperimentId::Quadratic => {
                let inst = gen_quadratic(n, m, samples, seed)?;
                Instance {
                    experiment: cfg.experiment,
                    problem: quadratic_problem(&inst.a)?,
                    support: SupportSet::Full,
                    data: inst.data,
                    sampler: Sampler::Quadratic { m },
                }
            }
            ExperimentId::Logsumexp => Instance {
                experiment: cfg.experiment,
                problem: logsumexp_problem(n)?,
                support: SupportSet::boxed(vec![LSE_DOMAIN_LB; n], vec![f64::INFINITY; n])?,
                data: gen_logsumexp(n, samples, seed)?,
                sampler: Sampler::Logsumexp { n },
            },
        })
    }

    /// Fresh samples from the data distribution.
    pub fn sample(&self, rng: &mut ChaCha8Rng, count: usize) -> Result<Dataset> {
        match self.sampler {
            Sampler::Facility { m } => facility_demands(rng, m, count),
            Sampler::Capital { n } => capital_rates(rng, n, count),
            Sampler::Quadratic { m } => quadratic_samples(rng, m, count),
            Sampler::Logsumexp { n } => logsumexp_samples(rng, n, count),
        }
    }

    pub fn spec(&self, p: PExponent, eps: f64, relax_support: bool) -> Result<UncertaintySpec> {
        let support = if relax_support { SupportSet::Full } else { self.support.clone() };
        UncertaintySpec::new(p, NormOrder::L2, eps, support)
    }
}

/// Whether a problem goes through the direct reformulation under `method`.
pub fn uses_direct(prob: &MroProblem, spec: &UncertaintySpec, method: Method) -> bool {
    let dual = prob.families.iter().all(|f| has_direct_dual(f, spec));
    match method {
        Method::Direct => true,
        Method::CuttingPlane => false,
        Method::Auto => dual && prob.binaries.len() <= AUTO_DIRECT_BINARIES,
    }
}

/// Solves one cell. `solve_time` is the wall-clock time of the whole solve
/// (program emission, enumeration, oracle calls), clustering excluded.
pub fn solve_cell(
    prob: &MroProblem,
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    method: Method,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<MroSolution> {
    let start = Instant::now();
    let mut sol = if uses_direct(prob, spec, method) {
        solve_direct(prob, clustered, spec, backend, tol)?
    } else {
        cutting_plane_solve(prob, clustered, spec, &CuttingPlaneConfig::default(), backend, tol)?.solution
    };
    sol.solve_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// One `(K, eps)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub eps: f64,
    pub objective: f64,
    pub solve_time_s: f64,
    pub beta_hat: Option<f64>,
    #[serde(rename = "D")]
    pub d: f64,
    pub eta: f64,
    pub status: String,
    pub seed: u64,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == SolveStatus::Optimal.to_string()
    }
}

pub fn kmeans_config(seed: u64) -> KMeansConfig {
    KMeansConfig { seed, ..KMeansConfig::default() }
}

/// Violation estimate for one `(K, eps)` cell: each repetition clusters its
/// own training set into `min(K, N)` groups and solves.
pub fn beta_for_cell(
    instance: &Instance,
    cfg: &ExperimentConfig,
    k: usize,
    spec: &UncertaintySpec,
    settings: &BetaSettings,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<BetaEstimate> {
    let n_train = instance.data.len();
    let beta_cfg = BetaConfig {
        repetitions: settings.repetitions,
        n_train,
        n_eval: settings.n_eval.unwrap_or(10 * n_train),
        seed: cfg.seed,
        mode: settings.mode,
    };
    let solve = |prob: &MroProblem, train: &Dataset| {
        let clustered = kmeans(train, k.min(train.len()), &kmeans_config(cfg.seed))?;
        solve_cell(prob, &clustered, spec, cfg.method, backend, tol)
    };
    out_of_sample_beta(&instance.problem, solve, |rng, count| instance.sample(rng, count), &beta_cfg)
}

/// Clusters once per `K` and solves every `(K, eps)` cell. Cell failures are
/// recorded in `status` and do not stop the sweep.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    if cfg.eps_grid.is_empty() || cfg.k_list.is_empty() {
        return Ok(Vec::new());
    }
    let instance = Instance::generate(cfg)?;
    let backend = backend_by_id(&cfg.backend)?;
    let tol = Tolerances::default();
    let mut k_list = cfg.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();
    let mut eps_grid = cfg.eps_grid.clone();
    eps_grid.sort_by(f64::total_cmp);
    eps_grid.dedup();
    let clusterings = profile_clusterings(&instance.data, &k_list, &kmeans_config(cfg.seed))?;
    let p = cfg.exponent();
    let mut records = Vec::with_capacity(k_list.len() * eps_grid.len());
    for clustered in &clusterings {
        for &eps in &eps_grid {
            let spec = instance.spec(p, eps, cfg.relax_support)?;
            let mut rec = ResultRecord {
                experiment: cfg.experiment.to_string(),
                k: clustered.k,
                eps,
                objective: f64::NAN,
                solve_time_s: 0.0,
                beta_hat: None,
                d: clustered.d,
                eta: clustered.eta,
                status: String::new(),
                seed: cfg.seed,
            };
            match solve_cell(&instance.problem, clustered, &spec, cfg.method, backend.as_ref(), &tol) {
                Ok(sol) => {
                    rec.objective = sol.objective;
                    rec.solve_time_s = sol.solve_time;
                    rec.status = sol.status.to_string();
                }
                Err(e) => rec.status = format!("error: {e}"),
            }
            if let (Some(settings), true) = (&cfg.beta, rec.is_ok()) {
                match beta_for_cell(&instance, cfg, clustered.k, &spec, settings, backend.as_ref(), &tol) {
                    Ok(b) => rec.beta_hat = Some(b.beta_hat),
                    Err(e) => rec.status = format!("beta-error: {e}"),
                }
            }
            records.push(rec);
        }
    }
    Ok(records)
}

/// Writes records as CSV with a header row.
pub fn write_records<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["experiment", "K", "eps", "objective", "solve_time_s", "beta_hat", "D", "eta", "status", "seed"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| MroError::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg = ExperimentConfig::new(ExperimentId::Capital);
        assert_eq!(cfg.sizes(), (10, 10, 60, 5, 6.0));
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&json).unwrap(), cfg);
        let sparse = ExperimentConfig::from_json_str(r#"{"experiment":"facility","K_list":[1,5],"eps_grid":[0.1]}"#).unwrap();
        assert_eq!(sparse.backend, "clarabel");
        assert_eq!(sparse.exponent(), PExponent::Infinity);
        assert_eq!(sparse.sizes().0, 5);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = ExperimentConfig::new(ExperimentId::Capital);
        cfg.n = Some(30);
        assert!(matches!(cfg.validate(), Err(MroError::TooManyBinaries { count: 30, .. })));
        let mut cfg = ExperimentConfig::new(ExperimentId::Quadratic);
        cfg.k_list = vec![91];
        assert!(cfg.validate().is_err());
        cfg.k_list = vec![1];
        cfg.backend = "nope".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_grid_gives_no_records() {
        let mut cfg = ExperimentConfig::new(ExperimentId::Quadratic);
        cfg.eps_grid.clear();
        assert!(run_sweep(&cfg).unwrap().is_empty());
    }

    #[test]
    fn facility_structure() {
        let p = facility_problem(&[1.0, 2.0], &[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], &[5.0, 7.0]).unwrap();
        assert_eq!(p.num_x, 8);
        assert_eq!(p.cost, vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = [1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        assert!(p.x_feasible(&x, 1e-12));
        // g_0(u, x) = u_0 + u_1 + u_2 - 5
        assert!((p.families[0].eval(&[1.0, 1.0, 1.0], &x).unwrap() + 2.0).abs() < 1e-12);
        assert!((p.families[1].eval(&[1.0, 1.0, 1.0], &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn csv_header_order() {
        let rec = ResultRecord {
            experiment: "quadratic".into(),
            k: 5,
            eps: 0.1,
            objective: -1.5,
            solve_time_s: 0.25,
            beta_hat: None,
            d: 0.5,
            eta: 1.0,
            status: "optimal".into(),
            seed: 7,
        };
        let s = records_to_csv(&[rec]).unwrap();
        assert_eq!(s, "experiment,K,eps,objective,solve_time_s,beta_hat,D,eta,status,seed\nquadratic,5,0.1,-1.5,0.25,,0.5,1.0,optimal,7\n");
    }

    #[test]
    fn samplers_are_seeded() {
        use rand::SeedableRng;
        for id in [ExperimentId::Facility, ExperimentId::Capital, ExperimentId::Quadratic, ExperimentId::Logsumexp] {
            let inst = Instance::generate(&ExperimentConfig::new(id)).unwrap();
            let a = inst.sample(&mut ChaCha8Rng::seed_from_u64(3), 7).unwrap();
            let b = inst.sample(&mut ChaCha8Rng::seed_from_u64(3), 7).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dim(), inst.problem.dim_u());
            assert!(a.rows().iter().all(|u| inst.support.contains(u, 0.0)));
        }
    }
}
