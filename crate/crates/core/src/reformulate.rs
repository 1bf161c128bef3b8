//! Conic dual reformulations of robust constraints over the clustered
//! uncertainty set, and the fixed-`x` worst-case evaluation.
//!
//! For each family the inner maximization `max_{v in U} sum_k w_k g(v_k, x)`
//! is replaced by its dual, which is jointly convex in `x` and the dual
//! variables. With support `C u <= b` the dual value for finite `p` is
//!
//! ```text
//! lam eps^p + sum_k w_k [ conj(alpha_k) + gamma_k^T (b - C d_k) - alpha_k^T d_k + pen_k ]
//! z_k = alpha_k + C^T gamma_k,  gamma_k >= 0
//! ```
//!
//! where `pen_k = ||z_k||_*^2 / (4 lam)` for `p = 2`, `pen_k = 0` with
//! `||z_k||_* <= lam` for `p = 1`, and for `p = inf` there is no `lam` and
//! `pen_k = eps ||z_k||_*`.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusteredSet;
use crate::conic::{
    self, AffExpr, ConeKind, ConicBackend, ConicProgram, SolveStatus, Tolerances, DEFAULT_BINARY_CAP,
};
use crate::data::{NormOrder, PExponent, UncertaintySpec};
use crate::error::{MroError, Result};
use crate::families::{npv_conjugate_coeff, weighted_matrix_sum, ConstraintFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// `sum terms (sense) rhs` over the decision vector `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { terms, sense, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(j, c)| c * x[*j]).sum()
    }

    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(x);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// `minimize cost^T x (+ tau)` subject to deterministic constraints on `x` and
/// one robust constraint per family. In epigraph mode the single family's
/// worst-case value is bounded by the free variable `tau` instead of zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MroProblem {
    pub num_x: usize,
    pub cost: Vec<f64>,
    #[serde(default)]
    pub x_constraints: Vec<LinearConstraint>,
    #[serde(default)]
    pub binaries: Vec<usize>,
    pub families: Vec<ConstraintFamily>,
    #[serde(default)]
    pub epigraph: bool,
}

impl MroProblem {
    pub fn validate(&self) -> Result<()> {
        if self.cost.len() != self.num_x {
            return Err(MroError::Dimension("cost length differs from num_x".into()));
        }
        if self.families.is_empty() {
            return Err(MroError::InvalidArgument("at least one constraint family is required".into()));
        }
        if self.epigraph && self.families.len() != 1 {
            return Err(MroError::InvalidArgument("epigraph mode takes exactly one family".into()));
        }
        let m = self.families[0].dim_u();
        for f in &self.families {
            if f.num_x() != self.num_x {
                return Err(MroError::Dimension(format!(
                    "{} family acts on {} decisions, problem has {}",
                    f.name(),
                    f.num_x(),
                    self.num_x
                )));
            }
            if f.dim_u() != m {
                return Err(MroError::Dimension("families must share the uncertainty dimension".into()));
            }
        }
        for c in &self.x_constraints {
            if c.terms.iter().any(|(j, _)| *j >= self.num_x) {
                return Err(MroError::Dimension("x-constraint refers to a missing variable".into()));
            }
        }
        if self.binaries.iter().any(|j| *j >= self.num_x) {
            return Err(MroError::Dimension("binary index out of range".into()));
        }
        Ok(())
    }

    pub fn dim_u(&self) -> usize {
        self.families[0].dim_u()
    }

    pub fn x_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.x_constraints.iter().all(|c| c.satisfied(x, tol))
            && self.binaries.iter().all(|&j| x[j].abs() <= tol || (x[j] - 1.0).abs() <= tol)
    }
}

/// Program plus the location of the original decisions inside it.
#[derive(Debug, Clone)]
pub struct EmittedProgram {
    pub program: ConicProgram,
    pub x_vars: Vec<usize>,
    pub tau: Option<usize>,
}

/// Result of solving an [`MroProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MroSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub tau: Option<f64>,
    pub objective: f64,
    pub solve_time: f64,
    pub backend: String,
}

impl MroSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn check_inputs(prob: &MroProblem, clustered: &ClusteredSet, spec: &UncertaintySpec) -> Result<()> {
    prob.validate()?;
    if clustered.dim() != prob.dim_u() {
        return Err(MroError::Dimension(format!(
            "clusters live in dimension {}, families in {}",
            clustered.dim(),
            prob.dim_u()
        )));
    }
    spec.support.rows(prob.dim_u())?;
    Ok(())
}

/// Adds the decision variables and deterministic constraints.
pub(crate) fn base_program(prob: &MroProblem) -> EmittedProgram {
    let mut program = ConicProgram::new();
    let x_vars = program.add_vars("x", prob.num_x);
    for (j, c) in x_vars.iter().zip(&prob.cost) {
        program.set_cost(*j, *c);
    }
    for lc in &prob.x_constraints {
        let mut e = AffExpr::constant(-lc.rhs);
        for &(j, c) in &lc.terms {
            e.add_term(x_vars[j], c);
        }
        match lc.sense {
            Sense::Le => program.add_nonneg(e.scaled(-1.0)),
            Sense::Ge => program.add_nonneg(e),
            Sense::Eq => program.add_zero(e),
        }
    }
    program.integrality = prob.binaries.iter().map(|&j| x_vars[j]).collect();
    let tau = if prob.epigraph {
        let t = program.add_var("tau");
        program.set_cost(t, 1.0);
        Some(t)
    } else {
        None
    };
    EmittedProgram { program, x_vars, tau }
}

fn finish(mut emitted: EmittedProgram, values: Vec<AffExpr>) -> EmittedProgram {
    for v in values {
        let mut slack = v.scaled(-1.0);
        if let Some(t) = emitted.tau {
            slack.add_term(t, 1.0);
        }
        emitted.program.add_nonneg(slack);
    }
    emitted
}

/// Emits the full program for `p` in {1, 2}.
pub fn emit_dual_finite_p(prob: &MroProblem, clustered: &ClusteredSet, spec: &UncertaintySpec) -> Result<EmittedProgram> {
    match spec.p {
        PExponent::Finite(1) | PExponent::Finite(2) => emit_program(prob, clustered, spec),
        other => Err(MroError::Unsupported(format!(
            "direct finite-p reformulation needs p in {{1, 2}}, got p = {other}"
        ))),
    }
}

/// Emits the full program for `p = inf`.
pub fn emit_dual_inf(prob: &MroProblem, clustered: &ClusteredSet, spec: &UncertaintySpec) -> Result<EmittedProgram> {
    if !spec.p.is_infinite() {
        return Err(MroError::Unsupported(format!("expected p = inf, got p = {}", spec.p)));
    }
    emit_program(prob, clustered, spec)
}

/// Emits the direct reformulation for any supported `p`.
pub fn emit_program(prob: &MroProblem, clustered: &ClusteredSet, spec: &UncertaintySpec) -> Result<EmittedProgram> {
    check_inputs(prob, clustered, spec)?;
    let mut emitted = base_program(prob);
    let x: Vec<AffExpr> = emitted.x_vars.iter().map(|&j| AffExpr::var(j)).collect();
    let mut values = Vec::with_capacity(prob.families.len());
    for fam in &prob.families {
        values.push(emit_family_value(&mut emitted.program, fam, &x, clustered, spec)?);
    }
    Ok(finish(emitted, values))
}

/// Solves the direct reformulation, enumerating binaries when present.
pub fn solve_direct(
    prob: &MroProblem,
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<MroSolution> {
    let emitted = emit_program(prob, clustered, spec)?;
    solve_emitted(&emitted, backend, tol)
}

pub(crate) fn solve_emitted(emitted: &EmittedProgram, backend: &dyn ConicBackend, tol: &Tolerances) -> Result<MroSolution> {
    let sol = conic::solve_mixed_binary(&emitted.program, backend, tol, DEFAULT_BINARY_CAP)?;
    let x = if sol.x.is_empty() { Vec::new() } else { emitted.x_vars.iter().map(|&j| sol.x[j]).collect() };
    let tau = emitted.tau.and_then(|t| sol.x.get(t).copied());
    Ok(MroSolution {
        status: sol.status,
        x,
        tau,
        objective: sol.objective,
        solve_time: sol.solve_time,
        backend: sol.backend,
    })
}

/// Upper bound `r >= ||z||_*` for the dual of `norm`; returns `r`.
fn dual_norm_epigraph(prog: &mut ConicProgram, z: &[AffExpr], norm: NormOrder) -> AffExpr {
    match norm.dual() {
        NormOrder::L2 => {
            let r = prog.add_var("r");
            let mut rows = vec![AffExpr::var(r)];
            rows.extend(z.iter().cloned());
            prog.add_cone(ConeKind::SecondOrder, rows);
            AffExpr::var(r)
        }
        NormOrder::LInf => {
            let r = prog.add_var("r");
            for zi in z {
                let mut plus = AffExpr::var(r);
                plus.add_scaled(zi, -1.0);
                let mut minus = AffExpr::var(r);
                minus.add_scaled(zi, 1.0);
                prog.add_cone(ConeKind::Nonneg, vec![plus, minus]);
            }
            AffExpr::var(r)
        }
        NormOrder::L1 => {
            let mut total = AffExpr::constant(0.0);
            for zi in z {
                let s = prog.add_var("s");
                let mut plus = AffExpr::var(s);
                plus.add_scaled(zi, -1.0);
                let mut minus = AffExpr::var(s);
                minus.add_scaled(zi, 1.0);
                prog.add_cone(ConeKind::Nonneg, vec![plus, minus]);
                total.add_term(s, 1.0);
            }
            total
        }
    }
}

/// `u`-linear part of the conjugate: returns `(alpha, conj)` with `alpha`
/// affine in the program variables and `conj` an upper bound on the
/// conjugate value.
fn emit_conjugate(
    prog: &mut ConicProgram,
    fam: &ConstraintFamily,
    x: &[AffExpr],
    tag: &str,
) -> Result<(Vec<AffExpr>, AffExpr)> {
    let m = fam.dim_u();
    match fam {
        ConstraintFamily::Affine(f) => {
            let mut alpha = vec![AffExpr::constant(0.0); m];
            let mut conj = AffExpr::constant(-f.b);
            for (i, xi) in x.iter().enumerate() {
                conj.add_scaled(xi, f.a[i]);
                for (j, aj) in alpha.iter_mut().enumerate() {
                    aj.add_scaled(xi, -f.p[i][j]);
                }
            }
            Ok((alpha, conj))
        }
        ConstraintFamily::ConcaveQuadratic(f) => {
            let mut alpha = vec![AffExpr::constant(0.0); m];
            let mut conj = AffExpr::constant(0.0);
            if x.iter().all(|xi| xi.is_constant()) {
                // fixed x: one cone for sum_i x_i A_i, which stays well scaled
                // when some x_i are tiny
                let xs: Vec<f64> = x.iter().map(|xi| xi.constant).collect();
                if xs.iter().any(|v| *v < 0.0) {
                    return Err(MroError::InvalidArgument("quadratic family requires x >= 0 for concavity in u".into()));
                }
                if xs.iter().all(|v| *v == 0.0) {
                    return Ok((alpha, conj));
                }
                let combined = ConstraintFamily::concave_quadratic(vec![weighted_matrix_sum(&f.a, &xs)])?;
                let ConstraintFamily::ConcaveQuadratic(c) = &combined else { unreachable!() };
                let y = prog.add_vars(&format!("{tag}Y"), m);
                let t = prog.add_var(format!("{tag}t"));
                let mut rows = vec![AffExpr::constant(1.0), AffExpr::var(t)];
                for row in c.chol_inv(0) {
                    let mut e = AffExpr::constant(0.0);
                    for (coef, yj) in row.iter().zip(&y) {
                        e.add_term(*yj, *coef);
                    }
                    rows.push(e);
                }
                prog.add_cone(ConeKind::RotatedSecondOrder, rows);
                for (aj, yj) in alpha.iter_mut().zip(&y) {
                    aj.add_term(*yj, 1.0);
                }
                conj.add_term(t, 1.0);
                return Ok((alpha, conj));
            }
            for (i, xi) in x.iter().enumerate() {
                if xi.is_constant() {
                    if xi.constant < 0.0 {
                        return Err(MroError::InvalidArgument(
                            "quadratic family requires x >= 0 for concavity in u".into(),
                        ));
                    }
                    if xi.constant == 0.0 {
                        continue;
                    }
                }
                let y = prog.add_vars(&format!("{tag}Y{i}"), m);
                let t = prog.add_var(format!("{tag}t{i}"));
                let linv = f.chol_inv(i);
                let mut rows = vec![xi.clone(), AffExpr::var(t)];
                for row in linv {
                    let mut e = AffExpr::constant(0.0);
                    for (c, yj) in row.iter().zip(&y) {
                        e.add_term(*yj, *c);
                    }
                    rows.push(e);
                }
                prog.add_cone(ConeKind::RotatedSecondOrder, rows);
                for (aj, yj) in alpha.iter_mut().zip(&y) {
                    aj.add_term(*yj, 1.0);
                }
                conj.add_term(t, 1.0);
            }
            Ok((alpha, conj))
        }
        ConstraintFamily::CapitalBudgetingNpv(f) => {
            let mut alpha = vec![AffExpr::constant(0.0); m];
            let mut conj = AffExpr::constant(0.0);
            for (j, row) in f.f.iter().enumerate() {
                if x[j].is_constant() && x[j].constant < 0.0 {
                    return Err(MroError::InvalidArgument("NPV family requires x >= 0 for concavity in u".into()));
                }
                conj.add_scaled(&x[j], -row[0]);
                for (t, &ft) in row.iter().enumerate().skip(1) {
                    let beta = prog.add_var(format!("{tag}beta{j}_{t}"));
                    alpha[j].add_term(beta, -1.0);
                    conj.add_term(beta, 1.0);
                    let flow = x[j].scaled(ft);
                    if flow.is_constant() && flow.constant == 0.0 {
                        prog.add_nonneg(AffExpr::var(beta));
                        continue;
                    }
                    let delta = prog.add_var(format!("{tag}delta{j}_{t}"));
                    let a = t as f64 / (t as f64 + 1.0);
                    prog.add_cone(ConeKind::Power3d { alpha: a }, vec![AffExpr::var(beta), flow, AffExpr::var(delta)]);
                    conj.add_term(delta, -npv_conjugate_coeff(t));
                }
            }
            Ok((alpha, conj))
        }
        ConstraintFamily::LogSumExp(_) => Err(MroError::Unsupported(
            "log-sum-exp has no direct reformulation; use the cutting-plane path".into(),
        )),
    }
}

/// Upper-bounding expression for `sum_k w_k g(v_k, x)` at fixed scenario
/// points, as a function of `x` (linear, or exponential-cone based for
/// log-sum-exp).
pub fn emit_scenario_value(
    prog: &mut ConicProgram,
    fam: &ConstraintFamily,
    x: &[AffExpr],
    points: &[Vec<f64>],
    weights: &[f64],
) -> Result<AffExpr> {
    if let Some((c, c0)) = fam.linear_in_x(points, weights)? {
        let mut e = AffExpr::constant(c0);
        for (xi, ci) in x.iter().zip(&c) {
            e.add_scaled(xi, *ci);
        }
        return Ok(e);
    }
    // log sum_i u_i e^{x_i} <= r  <=>  sum_i exp(x_i - r + ln u_i) <= 1
    let mut value = AffExpr::constant(0.0);
    for (k, (v, w)) in points.iter().zip(weights).enumerate() {
        if let Some(i) = v.iter().position(|ui| *ui <= 0.0) {
            return Err(MroError::Domain(format!("scenario {k} has u_{i} = {} <= 0", v[i])));
        }
        let r = prog.add_var(format!("lse_r{k}"));
        let mut budget = AffExpr::constant(1.0);
        for (i, (xi, ui)) in x.iter().zip(v).enumerate() {
            let t = prog.add_var(format!("lse_t{k}_{i}"));
            let mut arg = xi.clone();
            arg.add_term(r, -1.0);
            arg.constant += ui.ln();
            prog.add_cone(ConeKind::Exponential, vec![arg, AffExpr::constant(1.0), AffExpr::var(t)]);
            budget.add_term(t, -1.0);
        }
        prog.add_nonneg(budget);
        value.add_term(r, *w);
    }
    Ok(value)
}

fn weighted_mean(clustered: &ClusteredSet) -> Vec<f64> {
    let m = clustered.dim();
    let mut mean = vec![0.0; m];
    for (c, w) in clustered.centroids.iter().zip(&clustered.weights) {
        for (acc, v) in mean.iter_mut().zip(c) {
            *acc += w * v;
        }
    }
    mean
}

/// Adds the dual of `max_{v in U} sum_k w_k g(v_k, x)` for one family and
/// returns an affine expression whose minimum over the auxiliary variables
/// equals that maximum.
pub fn emit_family_value(
    prog: &mut ConicProgram,
    fam: &ConstraintFamily,
    x: &[AffExpr],
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
) -> Result<AffExpr> {
    let m = fam.dim_u();
    if clustered.dim() != m {
        return Err(MroError::Dimension("cluster dimension differs from the family".into()));
    }
    if spec.epsilon == 0.0 {
        return emit_scenario_value(prog, fam, x, &clustered.centroids, &clustered.weights);
    }
    let p = match spec.p {
        PExponent::Finite(p @ (1 | 2)) => Some(p),
        PExponent::Infinity => None,
        other => {
            return Err(MroError::Unsupported(format!(
                "no direct reformulation for p = {other}; use the cutting-plane path"
            )))
        }
    };
    if matches!(fam, ConstraintFamily::LogSumExp(_)) {
        return Err(MroError::Unsupported(
            "log-sum-exp has no direct reformulation; use the cutting-plane path".into(),
        ));
    }
    if spec.norm != NormOrder::L2 && !matches!(fam, ConstraintFamily::Affine(_)) {
        return Err(MroError::Unsupported("non-Euclidean norms are supported for affine families only".into()));
    }
    let eps = spec.epsilon;
    let (c_rows, b_vec) = spec.support.rows(m)?;

    if let (ConstraintFamily::Affine(_), true) = (fam, c_rows.is_empty()) {
        // compact form, independent of K
        let (alpha, conj) = emit_conjugate(prog, fam, x, "")?;
        let mean = weighted_mean(clustered);
        let mut value = conj;
        for (a, d) in alpha.iter().zip(&mean) {
            value.add_scaled(a, -d);
        }
        match p {
            Some(2) => {
                let lam = prog.add_var("lambda");
                let t = prog.add_var("t");
                let mut rows = vec![AffExpr::term(lam, 2.0), AffExpr::var(t)];
                if spec.norm == NormOrder::L2 {
                    rows.extend(alpha);
                } else {
                    rows.push(dual_norm_epigraph(prog, &alpha, spec.norm));
                }
                prog.add_cone(ConeKind::RotatedSecondOrder, rows);
                value.add_term(lam, eps);
                value.add_term(t, eps);
            }
            _ => {
                let r = dual_norm_epigraph(prog, &alpha, spec.norm);
                value.add_scaled(&r, eps);
            }
        }
        return Ok(value);
    }

    // For p = 2 the variables are scaled by eps: `lambda` stands for
    // `eps lambda` and each penalty for `pen / eps`. The multiplier grows
    // like 1 / eps otherwise, which ruins the conditioning for small radii.
    let lam = p.map(|_| {
        let l = prog.add_var("lambda");
        prog.add_nonneg(AffExpr::var(l));
        l
    });
    let mut value = AffExpr::constant(0.0);
    if let Some(l) = lam {
        value.add_term(l, eps);
    }
    for (k, (dk, wk)) in clustered.centroids.iter().zip(&clustered.weights).enumerate() {
        let tag = format!("k{k}_");
        let (alpha, conj) = emit_conjugate(prog, fam, x, &tag)?;
        let mut block = conj;
        for (a, d) in alpha.iter().zip(dk) {
            block.add_scaled(a, -d);
        }
        let mut z = alpha;
        if !c_rows.is_empty() {
            let gamma = prog.add_vars(&format!("{tag}gamma"), c_rows.len());
            prog.add_cone(ConeKind::Nonneg, gamma.iter().map(|&g| AffExpr::var(g)).collect());
            for (r, (&g, row)) in gamma.iter().zip(&c_rows).enumerate() {
                let slack = b_vec[r] - row.iter().zip(dk).map(|(c, d)| c * d).sum::<f64>();
                block.add_term(g, slack);
                for (zj, cj) in z.iter_mut().zip(row) {
                    zj.add_term(g, *cj);
                }
            }
        }
        match (p, lam) {
            (Some(2), Some(l)) => {
                let t = prog.add_var(format!("{tag}pen"));
                let mut rows = vec![AffExpr::term(l, 2.0), AffExpr::var(t)];
                if spec.norm == NormOrder::L2 {
                    rows.extend(z);
                } else {
                    rows.push(dual_norm_epigraph(prog, &z, spec.norm));
                }
                prog.add_cone(ConeKind::RotatedSecondOrder, rows);
                block.add_term(t, eps);
            }
            (Some(_), Some(l)) => {
                if spec.norm == NormOrder::L2 {
                    let mut rows = vec![AffExpr::var(l)];
                    rows.extend(z);
                    prog.add_cone(ConeKind::SecondOrder, rows);
                } else {
                    let r = dual_norm_epigraph(prog, &z, spec.norm);
                    let mut slack = AffExpr::var(l);
                    slack.add_scaled(&r, -1.0);
                    prog.add_nonneg(slack);
                }
            }
            _ => {
                let r = dual_norm_epigraph(prog, &z, spec.norm);
                block.add_scaled(&r, eps);
            }
        }
        value.add_scaled(&block, *wk);
    }
    Ok(value)
}

/// Whether `worst_case_value` has a conic dual for this family and exponent.
pub fn has_direct_dual(fam: &ConstraintFamily, spec: &UncertaintySpec) -> bool {
    !matches!(fam, ConstraintFamily::LogSumExp(_))
        && matches!(spec.p, PExponent::Finite(1) | PExponent::Finite(2) | PExponent::Infinity)
        && (spec.norm == NormOrder::L2 || matches!(fam, ConstraintFamily::Affine(_)))
}

/// Worst-case value of `sum_k w_k g(v_k, x)` over the uncertainty set at
/// fixed `x`, from the conic dual. `relax_support` drops the support.
pub fn worst_case_value_dual(
    fam: &ConstraintFamily,
    x: &[f64],
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    relax_support: bool,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<f64> {
    if x.len() != fam.num_x() {
        return Err(MroError::Dimension("x has the wrong length".into()));
    }
    let spec = if relax_support { spec.relaxed() } else { spec.clone() };
    let mut prog = ConicProgram::new();
    let xs: Vec<AffExpr> = x.iter().map(|v| AffExpr::constant(*v)).collect();
    let value = emit_family_value(&mut prog, fam, &xs, clustered, &spec)?;
    for &(j, c) in &value.terms {
        prog.objective[j] += c;
    }
    prog.objective_offset = value.constant;
    if prog.num_vars == 0 {
        return Ok(value.constant);
    }
    let sol = conic::solve(&prog, backend, tol)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.objective),
        SolveStatus::Unbounded => Ok(f64::NEG_INFINITY),
        other => Err(MroError::Solver(format!("worst-case dual ended with status {other}"))),
    }
}

/// Worst-case value at fixed `x`: the conic dual when one exists, otherwise
/// the projected-gradient oracle.
pub fn worst_case_value(
    fam: &ConstraintFamily,
    x: &[f64],
    clustered: &ClusteredSet,
    spec: &UncertaintySpec,
    relax_support: bool,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<f64> {
    if has_direct_dual(fam, spec) {
        return worst_case_value_dual(fam, x, clustered, spec, relax_support, backend, tol);
    }
    let spec = if relax_support { spec.relaxed() } else { spec.clone() };
    let cfg = crate::cutting_plane::OracleConfig::default();
    Ok(crate::cutting_plane::max_oracle(fam, x, clustered, &spec, &cfg)?.value)
}
