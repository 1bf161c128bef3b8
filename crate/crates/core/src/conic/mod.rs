//! Solver-agnostic conic programs, the backend contract, and exhaustive
//! enumeration over binary variables.

mod clarabel_backend;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MroError, Result};

pub use clarabel_backend::ClarabelBackend;

/// `constant + sum_j coef_j * v_j`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(j: usize) -> Self {
        Self { terms: vec![(j, 1.0)], constant: 0.0 }
    }

    pub fn term(j: usize, coef: f64) -> Self {
        Self { terms: vec![(j, coef)], constant: 0.0 }
    }

    pub fn with_term(mut self, j: usize, coef: f64) -> Self {
        self.add_term(j, coef);
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn add_term(&mut self, j: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((j, coef));
        }
    }

    pub fn add_scaled(&mut self, other: &AffExpr, scale: f64) {
        for &(j, c) in &other.terms {
            self.add_term(j, c * scale);
        }
        self.constant += other.constant * scale;
    }

    pub fn scaled(&self, s: f64) -> AffExpr {
        let mut out = AffExpr::constant(0.0);
        out.add_scaled(self, s);
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(j, c)| c * x[*j]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }
}

/// Cone kinds; every block's rows, evaluated at `v`, must lie in the cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeKind {
    Zero,
    Nonneg,
    /// `(t, w)` with `t >= ||w||_2`.
    SecondOrder,
    /// `(u, v, w)` with `2 u v >= ||w||_2^2`, `u, v >= 0`.
    RotatedSecondOrder,
    /// `(x, y, z)` with `x^alpha y^(1-alpha) >= |z|`, `x, y >= 0`.
    Power3d { alpha: f64 },
    /// `(x, y, z)` with `y exp(x / y) <= z`, `y > 0` (plus closure).
    Exponential,
}

impl ConeKind {
    /// Whether every conforming backend must provide this cone.
    pub fn is_mandatory(&self) -> bool {
        matches!(
            self,
            ConeKind::Zero | ConeKind::Nonneg | ConeKind::SecondOrder | ConeKind::RotatedSecondOrder
        )
    }

    /// Membership of a numeric point, up to `tol`.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        let norm = |w: &[f64]| w.iter().map(|a| a * a).sum::<f64>().sqrt();
        match self {
            ConeKind::Zero => v.iter().all(|a| a.abs() <= tol),
            ConeKind::Nonneg => v.iter().all(|a| *a >= -tol),
            ConeKind::SecondOrder => v[0] >= norm(&v[1..]) - tol,
            ConeKind::RotatedSecondOrder => {
                let w2: f64 = v[2..].iter().map(|a| a * a).sum();
                v[0] >= -tol && v[1] >= -tol && 2.0 * v[0].max(0.0) * v[1].max(0.0) >= w2 - tol
            }
            ConeKind::Power3d { alpha } => {
                v[0] >= -tol
                    && v[1] >= -tol
                    && v[0].max(0.0).powf(*alpha) * v[1].max(0.0).powf(1.0 - alpha) >= v[2].abs() - tol
            }
            ConeKind::Exponential => {
                let (x, y, z) = (v[0], v[1], v[2]);
                if y > 0.0 {
                    y * (x / y).exp() <= z + tol
                } else {
                    y >= -tol && x <= tol && z >= -tol
                }
            }
        }
    }
}

impl fmt::Display for ConeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConeKind::Zero => write!(f, "zero"),
            ConeKind::Nonneg => write!(f, "nonneg"),
            ConeKind::SecondOrder => write!(f, "second-order"),
            ConeKind::RotatedSecondOrder => write!(f, "rotated-second-order"),
            ConeKind::Power3d { alpha } => write!(f, "power3d({alpha})"),
            ConeKind::Exponential => write!(f, "exponential"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<AffExpr>,
}

/// `minimize objective^T v + objective_offset` subject to cone blocks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    #[serde(default)]
    pub objective_offset: f64,
    pub cones: Vec<ConeBlock>,
    #[serde(default)]
    pub integrality: Vec<usize>,
    #[serde(default)]
    pub var_names: Vec<String>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> usize {
        self.var_names.push(name.into());
        self.objective.push(0.0);
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, prefix: &str, n: usize) -> Vec<usize> {
        (0..n).map(|i| self.add_var(format!("{prefix}[{i}]"))).collect()
    }

    pub fn add_cone(&mut self, kind: ConeKind, rows: Vec<AffExpr>) {
        self.cones.push(ConeBlock { kind, rows });
    }

    pub fn add_nonneg(&mut self, row: AffExpr) {
        self.add_cone(ConeKind::Nonneg, vec![row]);
    }

    pub fn add_zero(&mut self, row: AffExpr) {
        self.add_cone(ConeKind::Zero, vec![row]);
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.objective[j] = c;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Whether `x` satisfies every block up to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.cones.iter().all(|b| {
            let v: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
            b.kind.contains(&v, tol)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars {
            return Err(MroError::Dimension("objective length differs from num_vars".into()));
        }
        if !self.var_names.is_empty() && self.var_names.len() != self.num_vars {
            return Err(MroError::Dimension("variable name table has the wrong length".into()));
        }
        for (bi, block) in self.cones.iter().enumerate() {
            let len = block.rows.len();
            let ok = match block.kind {
                ConeKind::Zero | ConeKind::Nonneg => len >= 1,
                ConeKind::SecondOrder => len >= 1,
                ConeKind::RotatedSecondOrder => len >= 2,
                ConeKind::Power3d { alpha } => {
                    if !(alpha > 0.0 && alpha < 1.0) {
                        return Err(MroError::InvalidArgument(format!("block {bi}: power cone alpha {alpha} not in (0,1)")));
                    }
                    len == 3
                }
                ConeKind::Exponential => len == 3,
            };
            if !ok {
                return Err(MroError::Dimension(format!("block {bi} ({}) has {len} rows", block.kind)));
            }
            for row in &block.rows {
                if row.terms.iter().any(|(j, c)| *j >= self.num_vars || !c.is_finite()) || !row.constant.is_finite() {
                    return Err(MroError::InvalidArgument(format!("block {bi} has an invalid term")));
                }
            }
        }
        for &j in &self.integrality {
            if j >= self.num_vars {
                return Err(MroError::InvalidArgument(format!("binary index {j} out of range")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: ConicProgram = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
    IterationLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
            SolveStatus::IterationLimit => "iteration-limit",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Wall-clock seconds spent inside backend calls.
    pub solve_time: f64,
    pub backend: String,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub feas: f64,
    pub gap_rel: f64,
    pub gap_abs: f64,
    pub max_iter: u32,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feas: 1e-8, gap_rel: 1e-8, gap_abs: 1e-8, max_iter: 200 }
    }
}

impl Tolerances {
    /// Tighter settings for worst-case evaluations that are compared
    /// against each other.
    pub fn tight() -> Self {
        Self { feas: 1e-10, gap_rel: 1e-10, gap_abs: 1e-10, max_iter: 500 }
    }
}

/// A conic solver.
pub trait ConicBackend: Send + Sync {
    fn id(&self) -> &str;
    fn supports(&self, kind: &ConeKind) -> bool;
    /// Solves a convex program; capability checks are done by [`solve`].
    fn solve_convex(&self, program: &ConicProgram, tol: &Tolerances) -> Result<Solution>;
}

/// Known backend identifiers.
pub const BACKEND_IDS: [&str; 2] = ["clarabel", "clarabel-socp"];

pub fn backend_by_id(id: &str) -> Result<Box<dyn ConicBackend>> {
    match id {
        "clarabel" => Ok(Box::new(ClarabelBackend::full())),
        "clarabel-socp" => Ok(Box::new(ClarabelBackend::socp_only())),
        other => Err(MroError::InvalidArgument(format!(
            "unknown backend `{other}` (known: {})",
            BACKEND_IDS.join(", ")
        ))),
    }
}

pub fn default_backend() -> Box<dyn ConicBackend> {
    Box::new(ClarabelBackend::full())
}

fn check_capabilities(program: &ConicProgram, backend: &dyn ConicBackend) -> Result<()> {
    for block in &program.cones {
        if !backend.supports(&block.kind) {
            return Err(MroError::Capability { backend: backend.id().to_string(), cone: block.kind.to_string() });
        }
    }
    Ok(())
}

/// Solves a program without binary variables.
pub fn solve(program: &ConicProgram, backend: &dyn ConicBackend, tol: &Tolerances) -> Result<Solution> {
    program.validate()?;
    if !program.integrality.is_empty() {
        return Err(MroError::InvalidArgument(
            "program has binary variables; use solve_mixed_binary".into(),
        ));
    }
    check_capabilities(program, backend)?;
    backend.solve_convex(program, tol)
}

/// Default cap on the number of enumerated binary variables.
pub const DEFAULT_BINARY_CAP: usize = 22;

const CONSTANT_ROW_TOL: f64 = 1e-9;

/// Outcome of fixing some variables: either a reduced program or an
/// immediate verdict.
enum Reduced {
    Program { program: ConicProgram, free: Vec<usize> },
    Infeasible,
}

fn reduce(program: &ConicProgram, fixed: &[Option<f64>]) -> Reduced {
    let mut map = vec![usize::MAX; program.num_vars];
    let mut free = Vec::new();
    for j in 0..program.num_vars {
        if fixed[j].is_none() {
            map[j] = free.len();
            free.push(j);
        }
    }
    let substitute = |row: &AffExpr| {
        let mut out = AffExpr::constant(row.constant);
        for &(j, c) in &row.terms {
            match fixed[j] {
                Some(v) => out.constant += c * v,
                None => out.add_term(map[j], c),
            }
        }
        out
    };
    let mut reduced = ConicProgram {
        num_vars: free.len(),
        objective: free.iter().map(|&j| program.objective[j]).collect(),
        objective_offset: program.objective_offset
            + (0..program.num_vars).filter_map(|j| fixed[j].map(|v| v * program.objective[j])).sum::<f64>(),
        cones: Vec::new(),
        integrality: Vec::new(),
        var_names: free.iter().filter_map(|&j| program.var_names.get(j).cloned()).collect(),
    };
    if reduced.var_names.len() != reduced.num_vars {
        reduced.var_names.clear();
    }
    for block in &program.cones {
        let rows: Vec<AffExpr> = block.rows.iter().map(substitute).collect();
        if rows.iter().all(|r| r.is_constant()) {
            let v: Vec<f64> = rows.iter().map(|r| r.constant).collect();
            if !block.kind.contains(&v, CONSTANT_ROW_TOL) {
                return Reduced::Infeasible;
            }
            continue;
        }
        reduced.cones.push(ConeBlock { kind: block.kind, rows });
    }
    Reduced::Program { program: reduced, free }
}

/// Closed-form solution of a one-variable program with only zero and
/// nonnegative rows. `None` if another cone kind is present.
fn solve_one_dim(program: &ConicProgram) -> Option<(SolveStatus, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for block in &program.cones {
        for row in &block.rows {
            let a: f64 = row.terms.iter().map(|(_, c)| c).sum();
            let c = row.constant;
            match block.kind {
                ConeKind::Nonneg => {
                    if a > 0.0 {
                        lo = lo.max(-c / a);
                    } else if a < 0.0 {
                        hi = hi.min(-c / a);
                    } else if c < -CONSTANT_ROW_TOL {
                        return Some((SolveStatus::Infeasible, 0.0));
                    }
                }
                ConeKind::Zero => {
                    if a != 0.0 {
                        lo = lo.max(-c / a);
                        hi = hi.min(-c / a);
                    } else if c.abs() > CONSTANT_ROW_TOL {
                        return Some((SolveStatus::Infeasible, 0.0));
                    }
                }
                _ => return None,
            }
        }
    }
    if lo > hi + CONSTANT_ROW_TOL * (1.0 + lo.abs().min(hi.abs())) {
        return Some((SolveStatus::Infeasible, 0.0));
    }
    let q = program.objective[0];
    let pick = if q > 0.0 {
        lo
    } else if q < 0.0 {
        hi
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    };
    if pick.is_finite() {
        Some((SolveStatus::Optimal, pick))
    } else {
        Some((SolveStatus::Unbounded, 0.0))
    }
}

/// Solves one assignment of the binaries; returns status, full `x`, objective
/// and backend time.
fn solve_assignment(
    program: &ConicProgram,
    fixed: &[Option<f64>],
    backend: &dyn ConicBackend,
    tol: &Tolerances,
) -> Result<(SolveStatus, Vec<f64>, f64, f64)> {
    let (reduced, free) = match reduce(program, fixed) {
        Reduced::Infeasible => return Ok((SolveStatus::Infeasible, Vec::new(), f64::INFINITY, 0.0)),
        Reduced::Program { program, free } => (program, free),
    };
    let assemble = |y: &[f64]| {
        let mut x: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (k, &j) in free.iter().enumerate() {
            x[j] = y[k];
        }
        x
    };
    if reduced.num_vars == 0 {
        let x = assemble(&[]);
        return Ok((SolveStatus::Optimal, x, reduced.objective_offset, 0.0));
    }
    if reduced.num_vars == 1 {
        if let Some((status, y)) = solve_one_dim(&reduced) {
            let x = assemble(&[y]);
            let obj = program.objective_value(&x);
            return Ok((status, x, obj, 0.0));
        }
    }
    let sol = backend.solve_convex(&reduced, tol)?;
    let x = assemble(&sol.x);
    let obj = program.objective_value(&x);
    Ok((sol.status, x, obj, sol.solve_time))
}

/// Exhaustive enumeration over the binary variables of `program`; ties are
/// resolved in favour of the lexicographically smallest assignment.
pub fn solve_mixed_binary(
    program: &ConicProgram,
    backend: &dyn ConicBackend,
    tol: &Tolerances,
    cap: usize,
) -> Result<Solution> {
    program.validate()?;
    check_capabilities(program, backend)?;
    let mut binaries = program.integrality.clone();
    binaries.sort_unstable();
    binaries.dedup();
    if binaries.is_empty() {
        return backend.solve_convex(program, tol);
    }
    if binaries.len() > cap {
        return Err(MroError::TooManyBinaries { count: binaries.len(), cap });
    }
    let nb = binaries.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut total_time = 0.0;
    let mut saw_unbounded = false;
    let mut saw_failure = None;
    for code in 0u64..(1u64 << nb) {
        let mut fixed = vec![None; program.num_vars];
        for (pos, &j) in binaries.iter().enumerate() {
            // first binary is the most significant digit
            let bit = (code >> (nb - 1 - pos)) & 1;
            fixed[j] = Some(bit as f64);
        }
        let (status, x, obj, time) = solve_assignment(program, &fixed, backend, tol)?;
        total_time += time;
        match status {
            SolveStatus::Optimal => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => obj < b - 1e-9 * (1.0 + b.abs()),
                };
                if better {
                    best = Some((x, obj));
                }
            }
            SolveStatus::Infeasible => {}
            SolveStatus::Unbounded => saw_unbounded = true,
            other => saw_failure = Some(other),
        }
    }
    let id = backend.id().to_string();
    if saw_unbounded {
        return Ok(Solution { status: SolveStatus::Unbounded, x: Vec::new(), objective: f64::NEG_INFINITY, solve_time: total_time, backend: id });
    }
    match best {
        Some((x, objective)) => Ok(Solution { status: SolveStatus::Optimal, x, objective, solve_time: total_time, backend: id }),
        None => Ok(Solution {
            status: saw_failure.unwrap_or(SolveStatus::Infeasible),
            x: Vec::new(),
            objective: f64::NAN,
            solve_time: total_time,
            backend: id,
        }),
    }
}
