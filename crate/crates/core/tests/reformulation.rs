//! Full-problem solves checked against hand-built programs and against each other.

mod common;

use common::{psd, random_data, rel_gap};
use mro::clustering::{kmeans, ClusteredSet, KMeansConfig};
use mro::conic::{self, default_backend, AffExpr, ConeKind, ConicProgram, Tolerances};
use mro::cutting_plane::{cutting_plane_solve, CuttingPlaneConfig};
use mro::data::{NormOrder, PExponent, SupportSet, UncertaintySpec};
use mro::experiments::quadratic_problem;
use mro::families::ConstraintFamily;
use mro::reformulate::{solve_direct, LinearConstraint, MroProblem, Sense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct AffineCase {
    prob: MroProblem,
    c: Vec<f64>,
    a: Vec<f64>,
    p: Vec<Vec<f64>>,
    b: f64,
}

/// `min c^T x` over `[0, 1]^n` subject to one affine robust constraint.
fn affine_case(rng: &mut ChaCha8Rng, n: usize, m: usize) -> AffineCase {
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..-0.5)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let p: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let b = rng.random_range(1.0..2.0);
    let mut x_constraints = Vec::new();
    for i in 0..n {
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Ge, 0.0));
        x_constraints.push(LinearConstraint::new(vec![(i, 1.0)], Sense::Le, 1.0));
    }
    let fam = ConstraintFamily::affine(a.clone(), p.clone(), b).unwrap();
    let prob = MroProblem { num_x: n, cost: c.clone(), x_constraints, binaries: vec![], families: vec![fam], epigraph: false };
    AffineCase { prob, c, a, p, b }
}

/// With one point per sample and no support, the affine worst case is the
/// sample mean plus `eps ||P^T x||_2`, which is a single second-order cone.
fn hand_built_dro(case: &AffineCase, mean: &[f64], eps: f64) -> f64 {
    let n = case.c.len();
    let m = mean.len();
    let mut prog = ConicProgram::new();
    let x = prog.add_vars("x", n);
    let t = prog.add_var("t");
    for (j, c) in x.iter().zip(&case.c) {
        prog.set_cost(*j, *c);
        prog.add_nonneg(AffExpr::var(*j));
        prog.add_nonneg(AffExpr::constant(1.0).with_term(*j, -1.0));
    }
    let mut g = AffExpr::constant(case.b).with_term(t, -eps);
    for i in 0..n {
        let coef = case.a[i] + case.p[i].iter().zip(mean).map(|(a, b)| a * b).sum::<f64>();
        g.add_term(x[i], -coef);
    }
    prog.add_nonneg(g);
    let mut rows = vec![AffExpr::var(t)];
    for j in 0..m {
        let mut e = AffExpr::constant(0.0);
        for i in 0..n {
            e.add_term(x[i], case.p[i][j]);
        }
        rows.push(e);
    }
    prog.add_cone(ConeKind::SecondOrder, rows);
    let sol = conic::solve(&prog, default_backend().as_ref(), &Tolerances::tight()).unwrap();
    assert!(sol.is_optimal());
    sol.objective
}

#[test]
fn singleton_clusters_match_hand_built_dro() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let backend = default_backend();
    for case_id in 0..6 {
        let (n, m) = (rng.random_range(2..5), rng.random_range(1..4));
        let case = affine_case(&mut rng, n, m);
        let data = random_data(&mut rng, 8, m, -1.0, 1.0);
        let eps = rng.random_range(0.05..0.5);
        let expected = hand_built_dro(&case, &data.mean(), eps);
        let all = ClusteredSet::singletons(&data, NormOrder::L2);
        for p in [PExponent::Finite(1), PExponent::Finite(2)] {
            let spec = UncertaintySpec::new(p, NormOrder::L2, eps, SupportSet::Full).unwrap();
            let sol = solve_direct(&case.prob, &all, &spec, backend.as_ref(), &Tolerances::tight()).unwrap();
            let gap = rel_gap(sol.objective, expected);
            assert!(gap <= 1e-6, "case {case_id}, p = {p}: {} vs {expected}", sol.objective);
        }
    }
}

#[test]
fn affine_p1_equals_pinf_without_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let backend = default_backend();
    for case_id in 0..8 {
        let case = affine_case(&mut rng, 3, 2);
        let data = random_data(&mut rng, 12, 2, -1.0, 1.0);
        let k = rng.random_range(1..6);
        let clustered = kmeans(&data, k, &KMeansConfig { seed: case_id, ..KMeansConfig::default() }).unwrap();
        let eps = rng.random_range(0.05..1.0);
        let solve = |p| {
            let spec = UncertaintySpec::new(p, NormOrder::L2, eps, SupportSet::Full).unwrap();
            solve_direct(&case.prob, &clustered, &spec, backend.as_ref(), &Tolerances::default()).unwrap().objective
        };
        let (one, inf) = (solve(PExponent::Finite(1)), solve(PExponent::Infinity));
        assert!((one - inf).abs() <= 1e-8, "case {case_id}: {one} vs {inf}");
    }
}

#[test]
fn cutting_plane_agrees_with_direct_on_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let backend = default_backend();
    for case_id in 0..5 {
        let (n, m) = (rng.random_range(2..4), rng.random_range(2..4));
        let a: Vec<_> = (0..n).map(|_| psd(&mut rng, m, 0.2)).collect();
        let prob = quadratic_problem(&a).unwrap();
        let data = random_data(&mut rng, 15, m, -1.0, 1.0);
        let clustered = kmeans(&data, 3, &KMeansConfig::default()).unwrap();
        let spec = UncertaintySpec::new(PExponent::Finite(2), NormOrder::L2, 0.3, SupportSet::Full).unwrap();
        let direct = solve_direct(&prob, &clustered, &spec, backend.as_ref(), &Tolerances::default()).unwrap();
        let cp = cutting_plane_solve(&prob, &clustered, &spec, &CuttingPlaneConfig::default(), backend.as_ref(), &Tolerances::default())
            .unwrap();
        assert!(cp.converged && cp.iterations <= 100);
        let gap = rel_gap(cp.solution.objective, direct.objective);
        assert!(gap <= 1e-4, "case {case_id}: {} vs {}", cp.solution.objective, direct.objective);
    }
}
