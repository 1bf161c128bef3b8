use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mro::clustering::{kmeans, profile_clusterings};
use mro::conic::{backend_by_id, Tolerances};
use mro::cutting_plane::{max_oracle, OracleConfig};
use mro::data::{Dataset, PExponent};
use mro::experiments::{
    beta_for_cell, kmeans_config, records_to_csv, run_sweep, solve_cell, BetaSettings, ExperimentConfig, ExperimentId,
    Instance, Method,
};
use mro::guarantees::{cross_validate_epsilon, sandwich_check, GuaranteeMode};
use mro::reformulate::{has_direct_dual, worst_case_value_dual};
use mro::{MroError, Result};

#[derive(Parser)]
#[command(name = "mro", version, about = "Mean robust optimization over clustered data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster the training data for each K and print K, D and eta.
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Dataset file (.json or .csv) used instead of the generated data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Solve one (K, eps) cell and print the solution.
    Solve(Common),
    /// Estimate the out-of-sample violation probability over the eps grid.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        target_beta: f64,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long, value_parser = parse_mode, default_value = "per-constraint")]
        mode: GuaranteeMode,
    },
    /// Solve every (K, eps) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Add an out-of-sample violation estimate with this many repetitions.
        #[arg(long)]
        beta_reps: Option<usize>,
    },
    /// Compare the worst-case oracle with the dual value at the solution of one cell.
    Oracle(Common),
    /// Check the clustered/unclustered ordering at the solution of each K.
    CheckSandwich(Common),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    experiment: Option<ExperimentId>,
    /// Experiment configuration (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cluster counts, comma separated.
    #[arg(long = "K", value_delimiter = ',')]
    k: Vec<usize>,
    /// Radii, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    p: Option<PExponent>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "N")]
    samples: Option<usize>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Drop the support set from the uncertainty set.
    #[arg(long)]
    relax_support: bool,
}

fn parse_mode(s: &str) -> std::result::Result<GuaranteeMode, String> {
    match s {
        "per-constraint" => Ok(GuaranteeMode::PerConstraint),
        "simultaneous" => Ok(GuaranteeMode::Simultaneous),
        other => Err(format!("unknown mode `{other}` (per-constraint, simultaneous)")),
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "auto" => Ok(Method::Auto),
        "direct" => Ok(Method::Direct),
        "cutting-plane" => Ok(Method::CuttingPlane),
        other => Err(format!("unknown method `{other}` (auto, direct, cutting-plane)")),
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.experiment) {
            (Some(path), _) => ExperimentConfig::from_json_str(&fs::read_to_string(path)?)?,
            (None, Some(id)) => ExperimentConfig::new(id),
            (None, None) => return Err(MroError::InvalidArgument("pass --experiment or --config".into())),
        };
        if let (Some(id), Some(_)) = (self.experiment, &self.config) {
            cfg.experiment = id;
        }
        if !self.k.is_empty() {
            cfg.k_list = self.k.clone();
        }
        if !self.eps.is_empty() {
            cfg.eps_grid = self.eps.clone();
        }
        cfg.p = self.p.or(cfg.p);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        if let Some(b) = &self.backend {
            cfg.backend = b.clone();
        }
        cfg.out = self.out.clone().or(cfg.out);
        cfg.n = self.n.or(cfg.n);
        cfg.m = self.m.or(cfg.m);
        cfg.samples = self.samples.or(cfg.samples);
        cfg.method = self.method.unwrap_or(cfg.method);
        cfg.relax_support |= self.relax_support;
        cfg.validate()?;
        if cfg.experiment == ExperimentId::Capital && cfg.sizes().0 > 12 {
            eprintln!("warning: {} binaries means {} enumerated branches per master solve", cfg.sizes().0, 1u64 << cfg.sizes().0);
        }
        Ok(cfg)
    }
}

fn first<T: Copy>(v: &[T], what: &str) -> Result<T> {
    v.first().copied().ok_or_else(|| MroError::InvalidArgument(format!("no {what} given")))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| MroError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| MroError::InvalidArgument(e.to_string()))
}

#[derive(Serialize)]
struct ClusterRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: f64,
    eta: f64,
}

fn cmd_cluster(common: &Common, data: &Option<PathBuf>) -> Result<bool> {
    let cfg = common.config()?;
    let data = match data {
        Some(path) => Dataset::load(path)?,
        None => Instance::generate(&cfg)?.data,
    };
    let mut ks = cfg.k_list.clone();
    ks.sort_unstable();
    ks.dedup();
    let rows: Vec<ClusterRow> = profile_clusterings(&data, &ks, &kmeans_config(cfg.seed))?
        .iter()
        .map(|c| ClusterRow { k: c.k, d: c.d, eta: c.eta })
        .collect();
    emit(&cfg.out, &to_csv(&rows)?)?;
    Ok(true)
}

#[derive(Serialize)]
struct SolveReport {
    experiment: String,
    #[serde(rename = "K")]
    k: usize,
    eps: f64,
    status: String,
    objective: f64,
    tau: Option<f64>,
    x: Vec<f64>,
    solve_time_s: f64,
}

fn cmd_solve(common: &Common) -> Result<bool> {
    let cfg = common.config()?;
    let k = first(&cfg.k_list, "K")?;
    let eps = first(&cfg.eps_grid, "eps")?;
    let inst = Instance::generate(&cfg)?;
    let clustered = kmeans(&inst.data, k, &kmeans_config(cfg.seed))?;
    let spec = inst.spec(cfg.exponent(), eps, cfg.relax_support)?;
    let backend = backend_by_id(&cfg.backend)?;
    let sol = solve_cell(&inst.problem, &clustered, &spec, cfg.method, backend.as_ref(), &Tolerances::default())?;
    let ok = sol.is_optimal();
    let report = SolveReport {
        experiment: cfg.experiment.to_string(),
        k,
        eps,
        status: sol.status.to_string(),
        objective: sol.objective,
        tau: sol.tau,
        x: sol.x,
        solve_time_s: sol.solve_time,
    };
    emit(&cfg.out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(ok)
}

fn cmd_validate(common: &Common, target: f64, reps: usize, n_eval: Option<usize>, mode: GuaranteeMode) -> Result<bool> {
    let cfg = common.config()?;
    let k = first(&cfg.k_list, "K")?;
    let inst = Instance::generate(&cfg)?;
    let backend = backend_by_id(&cfg.backend)?;
    let tol = Tolerances::default();
    let settings = BetaSettings { repetitions: reps, n_eval, mode };
    let mut grid = cfg.eps_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let cv = cross_validate_epsilon(&grid, target, |eps| {
        let spec = inst.spec(cfg.exponent(), eps, cfg.relax_support)?;
        beta_for_cell(&inst, &cfg, k, &spec, &settings, backend.as_ref(), &tol)
    })?;
    emit(&cfg.out, &to_csv(&cv.table)?)?;
    eprintln!("eps_star={}{}", cv.eps_star, if cv.target_missed { " (target not reached)" } else { "" });
    Ok(cv.table.iter().all(|r| r.failures == 0))
}

fn cmd_sweep(common: &Common, beta_reps: Option<usize>) -> Result<bool> {
    let mut cfg = common.config()?;
    if let Some(r) = beta_reps {
        cfg.beta = Some(BetaSettings { repetitions: r, ..cfg.beta.clone().unwrap_or_default() });
    }
    let records = run_sweep(&cfg)?;
    emit(&cfg.out, &records_to_csv(&records)?)?;
    Ok(records.iter().all(|r| r.is_ok()))
}

#[derive(Serialize)]
struct OracleRow {
    family: usize,
    name: &'static str,
    dual: Option<f64>,
    oracle: f64,
    iterations: usize,
    converged: bool,
}

fn cmd_oracle(common: &Common) -> Result<bool> {
    let cfg = common.config()?;
    let k = first(&cfg.k_list, "K")?;
    let eps = first(&cfg.eps_grid, "eps")?;
    let inst = Instance::generate(&cfg)?;
    let clustered = kmeans(&inst.data, k, &kmeans_config(cfg.seed))?;
    let spec = inst.spec(cfg.exponent(), eps, cfg.relax_support)?;
    let backend = backend_by_id(&cfg.backend)?;
    let tol = Tolerances::default();
    let sol = solve_cell(&inst.problem, &clustered, &spec, cfg.method, backend.as_ref(), &tol)?;
    if !sol.is_optimal() {
        return Err(MroError::Solver(format!("cell ended with status {}", sol.status)));
    }
    let mut rows = Vec::new();
    let mut ok = true;
    for (l, fam) in inst.problem.families.iter().enumerate() {
        let res = max_oracle(fam, &sol.x, &clustered, &spec, &OracleConfig::default())?;
        let dual = if has_direct_dual(fam, &spec) {
            Some(worst_case_value_dual(fam, &sol.x, &clustered, &spec, false, backend.as_ref(), &Tolerances::tight())?)
        } else {
            None
        };
        ok &= res.converged;
        rows.push(OracleRow { family: l, name: fam.name(), dual, oracle: res.value, iterations: res.iterations, converged: res.converged });
    }
    emit(&cfg.out, &to_csv(&rows)?)?;
    Ok(ok)
}

#[derive(Serialize)]
struct SandwichRow {
    #[serde(rename = "K")]
    k: usize,
    family: usize,
    g_n: f64,
    g_k: f64,
    g_n_star: f64,
    l: f64,
    #[serde(rename = "D")]
    d: f64,
    bound: f64,
    delta_estimate: f64,
    holds_lower: bool,
    holds_upper: bool,
}

fn cmd_check_sandwich(common: &Common) -> Result<bool> {
    let cfg = common.config()?;
    let eps = first(&cfg.eps_grid, "eps")?;
    let inst = Instance::generate(&cfg)?;
    let spec = inst.spec(cfg.exponent(), eps, cfg.relax_support)?;
    let backend = backend_by_id(&cfg.backend)?;
    let tol = Tolerances::default();
    let mut ks = cfg.k_list.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::new();
    let mut ok = true;
    for clustered in profile_clusterings(&inst.data, &ks, &kmeans_config(cfg.seed))? {
        let sol = solve_cell(&inst.problem, &clustered, &spec, cfg.method, backend.as_ref(), &tol)?;
        if !sol.is_optimal() {
            return Err(MroError::Solver(format!("K = {} ended with status {}", clustered.k, sol.status)));
        }
        for (l, fam) in inst.problem.families.iter().enumerate() {
            let r = sandwich_check(fam, &sol.x, &inst.data, &clustered, &spec, backend.as_ref(), &Tolerances::tight(), 1e-6)?;
            ok &= r.holds_lower && r.holds_upper;
            rows.push(SandwichRow {
                k: clustered.k,
                family: l,
                g_n: r.g_n,
                g_k: r.g_k,
                g_n_star: r.g_n_star,
                l: r.l,
                d: r.d,
                bound: r.bound,
                delta_estimate: r.delta_estimate,
                holds_lower: r.holds_lower,
                holds_upper: r.holds_upper,
            });
        }
    }
    emit(&cfg.out, &to_csv(&rows)?)?;
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Cluster { common, data } => cmd_cluster(&common, &data),
        Command::Solve(common) => cmd_solve(&common),
        Command::Validate { common, target_beta, reps, n_eval, mode } => {
            cmd_validate(&common, target_beta, reps, n_eval, mode)
        }
        Command::Sweep { common, beta_reps } => cmd_sweep(&common, beta_reps),
        Command::Oracle(common) => cmd_oracle(&common),
        Command::CheckSandwich(common) => cmd_check_sandwich(&common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
