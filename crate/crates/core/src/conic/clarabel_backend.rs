use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{ConeKind, ConicBackend, ConicProgram, Solution, SolveStatus, Tolerances};
use crate::error::{MroError, Result};

/// Interior-point backend built on the Clarabel solver.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    id: &'static str,
    optional_cones: bool,
}

impl ClarabelBackend {
    /// All cone kinds.
    pub fn full() -> Self {
        Self { id: "clarabel", optional_cones: true }
    }

    /// Only the mandatory cone kinds.
    pub fn socp_only() -> Self {
        Self { id: "clarabel-socp", optional_cones: false }
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalFailure,
    }
}

impl ConicBackend for ClarabelBackend {
    fn id(&self) -> &str {
        self.id
    }

    fn supports(&self, kind: &ConeKind) -> bool {
        kind.is_mandatory() || self.optional_cones
    }

    fn solve_convex(&self, program: &ConicProgram, tol: &Tolerances) -> Result<Solution> {
        let n = program.num_vars;
        let mut rows_i = Vec::new();
        let mut cols_j = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::new();
        // rows of `s = b - A x` in cone order
        let mut push_row = |terms: &[(usize, f64)], constant: f64, b: &mut Vec<f64>| {
            let r = b.len();
            for &(j, c) in terms {
                rows_i.push(r);
                cols_j.push(j);
                vals.push(-c);
            }
            b.push(constant);
        };
        for block in &program.cones {
            let len = block.rows.len();
            match block.kind {
                ConeKind::RotatedSecondOrder => {
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    let (u, v) = (&block.rows[0], &block.rows[1]);
                    let mut plus = u.scaled(s);
                    plus.add_scaled(v, s);
                    let mut minus = u.scaled(s);
                    minus.add_scaled(v, -s);
                    push_row(&plus.terms, plus.constant, &mut b);
                    push_row(&minus.terms, minus.constant, &mut b);
                    for w in &block.rows[2..] {
                        push_row(&w.terms, w.constant, &mut b);
                    }
                    cones.push(SupportedConeT::SecondOrderConeT(len));
                }
                kind => {
                    for r in &block.rows {
                        push_row(&r.terms, r.constant, &mut b);
                    }
                    cones.push(match kind {
                        ConeKind::Zero => SupportedConeT::ZeroConeT(len),
                        ConeKind::Nonneg => SupportedConeT::NonnegativeConeT(len),
                        ConeKind::SecondOrder => SupportedConeT::SecondOrderConeT(len),
                        ConeKind::Power3d { alpha } => SupportedConeT::PowerConeT(alpha),
                        ConeKind::Exponential => SupportedConeT::ExponentialConeT(),
                        ConeKind::RotatedSecondOrder => unreachable!(),
                    });
                }
            }
        }
        let m = b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows_i, cols_j, vals);
        let p = CscMatrix::<f64>::zeros((n, n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(std::env::var_os("MRO_SOLVER_VERBOSE").is_some())
            .tol_feas(tol.feas)
            .tol_gap_rel(tol.gap_rel)
            .tol_gap_abs(tol.gap_abs)
            .max_iter(tol.max_iter)
            .max_threads(1)
            .build()
            .map_err(|e| MroError::Solver(format!("invalid settings: {e:?}")))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &program.objective, &a, &b, &cones, settings)
            .map_err(|e| MroError::Solver(format!("{e:?}")))?;
        solver.solve();
        let elapsed = start.elapsed().as_secs_f64();
        let status = map_status(solver.solution.status);
        let x = solver.solution.x.clone();
        let objective = match status {
            SolveStatus::Optimal => program.objective_value(&x),
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::NAN,
        };
        Ok(Solution { status, x, objective, solve_time: elapsed, backend: self.id.to_string() })
    }
}
