//! Acceptance checks. Runs sequentially (timings are compared) and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use common::{psd, random_data, rel_gap, run_cli, strip_timing, wasserstein_lp};
use mro::clustering::{kmeans, ClusteredSet, KMeansConfig};
use mro::conic::{default_backend, Tolerances};
use mro::cutting_plane::{cutting_plane_solve, max_oracle, CuttingPlaneConfig, OracleConfig};
use mro::data::{NormOrder, PExponent, SupportSet, UncertaintySpec};
use mro::experiments::{
    beta_for_cell, kmeans_config, quadratic_problem, run_sweep, solve_cell, BetaSettings, ExperimentConfig,
    ExperimentId, Instance, Method,
};
use mro::families::ConstraintFamily;
use mro::guarantees::{adjusted_epsilon, sandwich_check};
use mro::reformulate::{solve_direct, worst_case_value_dual, LinearConstraint, MroProblem, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K_INVARIANCE_REL: f64 = 1e-5;
const K_INVARIANCE_SECONDS: f64 = 60.0;
const SPEEDUP_MIN: f64 = 5.0;
const SPEEDUP_REPEATS: usize = 5;
const SANDWICH_TOL: f64 = 1e-6;
const DUALITY_REL: f64 = 1e-5;
const P1_PINF_ABS: f64 = 1e-8;
const P_LIMIT_FINAL: f64 = 1e-2;
const CUTTING_PLANE_REL: f64 = 1e-4;
const CUTTING_PLANE_MAX_ITER: usize = 100;
const BETA_MATCH: f64 = 0.02;

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: mro::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn facility_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExperimentId::Facility);
    (cfg.n, cfg.m, cfg.samples) = (Some(5), Some(25), Some(50));
    cfg.p = Some(PExponent::Infinity);
    cfg.seed = 0;
    cfg
}

fn k_invariance() -> Check {
    let start = Instant::now();
    let mut cfg = facility_config();
    cfg.k_list = vec![1, 5, 10, 50];
    cfg.eps_grid = vec![0.1, 0.5];
    let records = ok(run_sweep(&cfg))?;
    cfg.k_list = vec![1];
    cfg.relax_support = true;
    let compact = ok(run_sweep(&cfg))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    for r in records.iter().chain(&compact) {
        ensure(r.is_ok(), || format!("K = {}, eps = {}: {}", r.k, r.eps, r.status))?;
        let base = records.iter().find(|b| b.k == 1 && b.eps == r.eps).unwrap().objective;
        worst = worst.max(rel_gap(r.objective, base));
    }
    ensure(worst <= K_INVARIANCE_REL, || format!("largest relative spread {worst:.3e}"))?;
    ensure(elapsed <= K_INVARIANCE_SECONDS, || format!("took {elapsed:.1} s"))?;
    Ok(format!("largest relative spread {worst:.2e} over K in {{1,5,10,50}} and the compact form, {elapsed:.1} s"))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn speedup() -> Check {
    let cfg = facility_config();
    let inst = ok(Instance::generate(&cfg))?;
    let spec = ok(inst.spec(PExponent::Infinity, 0.5, false))?;
    let backend = default_backend();
    let mut times = Vec::new();
    for k in [1, 50] {
        let clustered = ok(kmeans(&inst.data, k, &kmeans_config(cfg.seed)))?;
        let mut t = Vec::new();
        for _ in 0..SPEEDUP_REPEATS {
            let sol = ok(solve_cell(&inst.problem, &clustered, &spec, Method::Auto, backend.as_ref(), &Tolerances::default()))?;
            ensure(sol.is_optimal(), || format!("K = {k}: {}", sol.status))?;
            t.push(sol.solve_time);
        }
        times.push(median(t));
    }
    let ratio = times[1] / times[0];
    ensure(ratio >= SPEEDUP_MIN, || format!("median K=1 {:.3} s, K=50 {:.3} s, ratio {ratio:.1}", times[0], times[1]))?;
    Ok(format!("median K=1 {:.3} s, K=50 {:.3} s, ratio {ratio:.1}", times[0], times[1]))
}

fn sandwich() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    let backend = default_backend();
    let mut worst_upper = f64::NEG_INFINITY;
    for case in 0..100 {
        let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let samples = rng.random_range(5..=30);
        let fam = ok(ConstraintFamily::concave_quadratic((0..n).map(|_| psd(&mut rng, m, 0.1)).collect()))?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let data = random_data(&mut rng, samples, m, -1.0, 1.0);
        let k = rng.random_range(1..=samples);
        let clustered = ok(kmeans(&data, k, &KMeansConfig { seed: case, ..KMeansConfig::default() }))?;
        let eps = [0.1, 0.5, 1.0][case as usize % 3];
        let support = if case % 2 == 0 { SupportSet::Full } else { ok(SupportSet::boxed(vec![-1.5; m], vec![1.5; m]))? };
        let spec = ok(UncertaintySpec::new(PExponent::Finite(2), NormOrder::L2, eps, support))?;
        let r = ok(sandwich_check(&fam, &x, &data, &clustered, &spec, backend.as_ref(), &Tolerances::tight(), SANDWICH_TOL))?;
        ensure(r.holds_lower && r.holds_upper, || format!("case {case}: {r:?}"))?;
        worst_upper = worst_upper.max(r.g_k - r.g_n_star - r.bound);
    }
    Ok(format!("100 instances hold; largest g_K - g_N* - L/2 D = {worst_upper:.2e}"))
}

fn duality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let backend = default_backend();
    let oracle_cfg = OracleConfig { max_iter: 20000, grad_tol: 1e-10, ..OracleConfig::default() };
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let p = [PExponent::Finite(1), PExponent::Finite(2), PExponent::Infinity][case % 3];
        let kind = (case / 3) % 3;
        let k = rng.random_range(1..4);
        let eps: f64 = rng.random_range(0.05..0.5);
        let (fam, x, clustered, support) = match kind {
            0 => {
                let (n, m) = (rng.random_range(1..4), rng.random_range(1..4));
                let a = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let pm = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                let x = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
                let support = if case % 2 == 0 { SupportSet::Full } else { ok(SupportSet::boxed(vec![-1.0; m], vec![1.0; m]))? };
                (ok(ConstraintFamily::affine(a, pm, 0.3))?, x, common::random_clusters(&mut rng, k, m, -0.5, 0.5), support)
            }
            1 => {
                let (n, m) = (rng.random_range(1..4), rng.random_range(1..4));
                let fam = ok(ConstraintFamily::concave_quadratic((0..n).map(|_| psd(&mut rng, m, 0.5)).collect()))?;
                let x = (0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
                let support = if case % 2 == 0 { SupportSet::Full } else { ok(SupportSet::boxed(vec![-1.2; m], vec![1.2; m]))? };
                (fam, x, common::random_clusters(&mut rng, k, m, -1.0, 1.0), support)
            }
            _ => {
                let (n, t) = (rng.random_range(1..4), rng.random_range(1..4));
                let f = (0..n).map(|_| (0..=t).map(|_| rng.random_range(0.1..0.5)).collect()).collect();
                let x = (0..n).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>();
                let support = ok(SupportSet::boxed(vec![0.0; n], vec![1.0; n]))?;
                (ok(ConstraintFamily::npv(f))?, x, common::random_clusters(&mut rng, k, n, 0.05, 0.3), support)
            }
        };
        let eps = if kind == 2 { eps.min(0.3) } else { eps };
        let spec = ok(UncertaintySpec::new(p, NormOrder::L2, eps, support))?;
        let dual = ok(worst_case_value_dual(&fam, &x, &clustered, &spec, false, backend.as_ref(), &Tolerances::tight()))?;
        let primal = ok(max_oracle(&fam, &x, &clustered, &spec, &oracle_cfg))?;
        let gap = rel_gap(dual, primal.value);
        ensure(gap <= DUALITY_REL, || format!("case {case} ({}, p = {p}): dual {dual}, oracle {}", fam.name(), primal.value))?;
        worst = worst.max(gap);
    }
    Ok(format!("50 instances, largest relative gap {worst:.2e}"))
}

fn box_problem(rng: &mut ChaCha8Rng, n: usize, m: usize) -> mro::Result<MroProblem> {
    let cost = (0..n).map(|_| rng.random_range(-2.0..-0.5)).collect();
    let mut x_constraints = Vec::new();
    for i in 0..n {
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Ge, 0.0));
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Le, 1.0));
    }
    let families = (0..2)
        .map(|_| {
            let a = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            let p = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            ConstraintFamily::affine(a, p, rng.random_range(1.0..2.0))
        })
        .collect::<mro::Result<Vec<_>>>()?;
    Ok(MroProblem { num_x: n, cost, x_constraints, binaries: vec![], families, epigraph: false })
}

fn affine_p1_pinf() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let backend = default_backend();
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let (n, m) = (rng.random_range(1..5), rng.random_range(1..4));
        let prob = ok(box_problem(&mut rng, n, m))?;
        let data = random_data(&mut rng, 15, m, -1.0, 1.0);
        let k = rng.random_range(1..=15);
        let clustered = ok(kmeans(&data, k, &KMeansConfig { seed: case, ..KMeansConfig::default() }))?;
        let eps = rng.random_range(0.05..1.0);
        let mut obj = Vec::new();
        for p in [PExponent::Finite(1), PExponent::Infinity] {
            let spec = ok(UncertaintySpec::new(p, NormOrder::L2, eps, SupportSet::Full))?;
            let sol = ok(solve_direct(&prob, &clustered, &spec, backend.as_ref(), &Tolerances::default()))?;
            ensure(sol.is_optimal(), || format!("case {case}, p = {p}: {}", sol.status))?;
            obj.push(sol.objective);
        }
        let diff = (obj[0] - obj[1]).abs();
        ensure(diff <= P1_PINF_ABS, || format!("case {case}: {} vs {}", obj[0], obj[1]))?;
        worst = worst.max(diff);
    }
    Ok(format!("20 instances, largest difference {worst:.2e}"))
}

fn p_limit() -> Check {
    let fam = ok(ConstraintFamily::concave_quadratic(vec![vec![vec![2.0, 0.5], vec![0.5, 1.0]]]))?;
    let centroids = vec![vec![1.0, 0.0], vec![-0.5, 1.0], vec![0.2, -1.0]];
    let clustered = ok(ClusteredSet::from_points(centroids, vec![0.5, 0.3, 0.2], NormOrder::L2))?;
    let cfg = OracleConfig { max_iter: 2000, grad_tol: 1e-10, ..OracleConfig::default() };
    let value = |p| -> std::result::Result<f64, String> {
        let spec = ok(UncertaintySpec::new(p, NormOrder::L2, 0.3, SupportSet::Full))?;
        Ok(ok(max_oracle(&fam, &[1.0], &clustered, &spec, &cfg))?.value)
    };
    let limit = value(PExponent::Infinity)?;
    let mut gaps = Vec::new();
    for p in [2, 4, 8, 16] {
        gaps.push((value(PExponent::Finite(p))? - limit).abs());
    }
    let text = gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>().join(", ");
    ensure(gaps.windows(2).all(|w| w[1] < w[0]), || format!("gaps not decreasing: {text}"))?;
    ensure(*gaps.last().unwrap() <= P_LIMIT_FINAL, || format!("final gap too large: {text}"))?;
    Ok(format!("gaps for p = 2, 4, 8, 16: {text}"))
}

fn cutting_plane_agreement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let backend = default_backend();
    let (mut worst, mut most_iter) = (0.0f64, 0);
    for case in 0..20 {
        let (n, m) = (rng.random_range(2..5), rng.random_range(2..5));
        let a: Vec<_> = (0..n).map(|_| psd(&mut rng, m, 0.2)).collect();
        let prob = ok(quadratic_problem(&a))?;
        let data = random_data(&mut rng, 20, m, -1.0, 1.0);
        let k = rng.random_range(1..=5);
        let clustered = ok(kmeans(&data, k, &KMeansConfig { seed: case, ..KMeansConfig::default() }))?;
        let spec = ok(UncertaintySpec::new(PExponent::Finite(2), NormOrder::L2, rng.random_range(0.05..0.5), SupportSet::Full))?;
        let tol = Tolerances::default();
        let direct = ok(solve_direct(&prob, &clustered, &spec, backend.as_ref(), &tol))?;
        let cp = ok(cutting_plane_solve(&prob, &clustered, &spec, &CuttingPlaneConfig::default(), backend.as_ref(), &tol))?;
        ensure(cp.converged && cp.iterations <= CUTTING_PLANE_MAX_ITER, || format!("case {case}: {} iterations", cp.iterations))?;
        let gap = rel_gap(cp.solution.objective, direct.objective);
        ensure(gap <= CUTTING_PLANE_REL, || format!("case {case}: {} vs {}", cp.solution.objective, direct.objective))?;
        worst = worst.max(gap);
        most_iter = most_iter.max(cp.iterations);
    }
    Ok(format!("20 instances, largest relative gap {worst:.2e}, at most {most_iter} iterations"))
}

/// Linear interpolation of `beta` at objective `obj` on a curve sorted by objective.
fn interpolate(curve: &[(f64, f64)], obj: f64) -> Option<f64> {
    curve.windows(2).find(|w| w[0].0 <= obj && obj <= w[1].0).map(|w| {
        let span = w[1].0 - w[0].0;
        if span <= 0.0 {
            w[0].1
        } else {
            w[0].1 + (obj - w[0].0) / span * (w[1].1 - w[0].1)
        }
    })
}

fn capital_pattern() -> Check {
    let mut cfg = ExperimentConfig::new(ExperimentId::Capital);
    (cfg.n, cfg.t, cfg.samples) = (Some(10), Some(5), Some(60));
    cfg.p = Some(PExponent::Finite(2));
    let inst = ok(Instance::generate(&cfg))?;
    let backend = default_backend();
    let tol = Tolerances::default();
    let fam = &inst.problem.families[0];
    let mut worst_slack = f64::NEG_INFINITY;
    for k in [2, 5, 60] {
        let clustered = ok(kmeans(&inst.data, k, &kmeans_config(cfg.seed)))?;
        for &eps in &cfg.eps_grid {
            let spec = ok(inst.spec(cfg.exponent(), eps, false))?;
            let sol = ok(solve_cell(&inst.problem, &clustered, &spec, cfg.method, backend.as_ref(), &tol))?;
            ensure(sol.is_optimal(), || format!("K = {k}, eps = {eps}: {}", sol.status))?;
            let r = ok(sandwich_check(fam, &sol.x, &inst.data, &clustered, &spec, backend.as_ref(), &Tolerances::tight(), SANDWICH_TOL))?;
            let slack = (r.g_k - r.g_n) - (r.bound + r.delta_estimate);
            ensure(slack <= SANDWICH_TOL, || format!("K = {k}, eps = {eps}: {r:?}"))?;
            worst_slack = worst_slack.max(slack);
        }
    }
    let settings = BetaSettings::default();
    let mut curves = Vec::new();
    for k in [2, 60] {
        let mut curve = Vec::new();
        for &eps in &cfg.eps_grid {
            let spec = ok(inst.spec(cfg.exponent(), eps, false))?;
            let b = ok(beta_for_cell(&inst, &cfg, k, &spec, &settings, backend.as_ref(), &tol))?;
            ensure(b.failures == 0, || format!("K = {k}, eps = {eps}: {} failed repetitions", b.failures))?;
            curve.push((b.mean_objective(), b.beta_hat));
        }
        curve.sort_by(|a, b| a.0.total_cmp(&b.0));
        curves.push(curve);
    }
    let (mut compared, mut worst_beta) = (0, 0.0f64);
    for (obj, beta) in &curves[0] {
        if let Some(other) = interpolate(&curves[1], *obj) {
            compared += 1;
            worst_beta = worst_beta.max((beta - other).abs());
        }
    }
    for (obj, beta) in &curves[1] {
        if let Some(other) = interpolate(&curves[0], *obj) {
            compared += 1;
            worst_beta = worst_beta.max((beta - other).abs());
        }
    }
    let show = |c: &[(f64, f64)]| c.iter().map(|(o, b)| format!("({o:.4}, {b:.2})")).collect::<Vec<_>>().join(" ");
    let curves_text = format!("K=2 {} | K=60 {}", show(&curves[0]), show(&curves[1]));
    ensure(compared > 0, || format!("no overlapping objectives: {curves_text}"))?;
    ensure(worst_beta <= BETA_MATCH, || {
        format!("bound slack <= {worst_slack:.2e} holds; beta gap {worst_beta:.3} > {BETA_MATCH} at matched objectives: {curves_text}")
    })?;
    Ok(format!(
        "bound slack <= {worst_slack:.2e}; {compared} matched points, largest beta gap {worst_beta:.3}"
    ))
}

fn guarantee_arithmetic() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(901);
    for case in 0..20u64 {
        let n = rng.random_range(4..=12);
        let m = rng.random_range(1..=3);
        let data = random_data(&mut rng, n, m, -2.0, 2.0);
        let k = rng.random_range(1..=n);
        let c = ok(kmeans(&data, k, &KMeansConfig { seed: case, ..KMeansConfig::default() }))?;
        let base = rng.random_range(0.0..1.0);
        let adj = ok(adjusted_epsilon(base, &c))?;
        ensure(adj == base + c.eta, || format!("case {case}: {adj} != {base} + {}", c.eta))?;
        for p in [1, 2] {
            let w = wasserstein_lp(&data, &c, p);
            ensure(w <= c.eta + 1e-7, || format!("case {case}, p = {p}: W = {w}, eta = {}", c.eta))?;
        }
        let full = ok(kmeans(&data, n, &KMeansConfig::default()))?;
        ensure(full.eta == 0.0, || format!("case {case}: eta(K = N) = {}", full.eta))?;
        ensure(ok(adjusted_epsilon(base, &full))? == base, || "adjusted radius at K = N".into())?;
    }
    ensure(adjusted_epsilon(-0.1, &ClusteredSet::single(&random_data(&mut rng, 3, 1, 0.0, 1.0), NormOrder::L2)).is_err(), || {
        "negative radius accepted".into()
    })?;
    Ok("exact sums, eta(K=N) = 0 and W_p <= eta on 20 instances".into())
}

fn determinism() -> Check {
    let small = ["--experiment", "quadratic", "--n", "3", "--m", "3", "--N", "12", "--seed", "9"];
    let runs: Vec<Vec<&str>> = vec![
        vec!["cluster", "--K", "1,3,12"],
        vec!["solve", "--K", "3", "--eps", "0.2"],
        vec!["validate", "--K", "2", "--eps", "0.05,0.2", "--reps", "4", "--n-eval", "30"],
        vec!["sweep", "--K", "1,3", "--eps", "0.1,0.3", "--beta-reps", "3"],
        vec!["oracle", "--K", "3", "--eps", "0.2"],
        vec!["check-sandwich", "--K", "1,3,12", "--eps", "0.2"],
    ];
    let mut names = Vec::new();
    for extra in runs {
        let mut args = vec![extra[0]];
        args.extend_from_slice(&small);
        args.extend_from_slice(&extra[1..]);
        let (c1, o1, e1) = run_cli(&args);
        let (c2, o2, e2) = run_cli(&args);
        ensure(c1 == 0, || format!("{} exited with {c1}: {e1}", extra[0]))?;
        ensure(c1 == c2 && e1 == e2, || format!("{}: exit codes or stderr differ", extra[0]))?;
        ensure(strip_timing(&o1) == strip_timing(&o2), || format!("{}: outputs differ", extra[0]))?;
        names.push(extra[0]);
    }
    Ok(format!("identical output for {}", names.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("affine K-invariance", k_invariance),
        ("speedup direction", speedup),
        ("sandwich ordering", sandwich),
        ("strong duality", duality),
        ("affine p=1 vs p=inf", affine_p1_pinf),
        ("p to infinity limit", p_limit),
        ("cutting plane vs reformulation", cutting_plane_agreement),
        ("capital budgeting pattern", capital_pattern),
        ("guarantee arithmetic", guarantee_arithmetic),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS {name} [{secs:.1} s]: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.1} s]: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
