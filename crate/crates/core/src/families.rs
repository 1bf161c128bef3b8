//! Constraint families `g(u, x)`: evaluation, u-gradients, smoothness bounds
//! and the structural facts the reformulations rely on.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SupportSet};
use crate::error::{MroError, Result};

/// Lower bound on `u` required by the log-sum-exp family.
pub const LSE_DOMAIN_LB: f64 = 0.01;

/// `g(u, x) = (a + P u)^T x - b` with `P` of shape `n x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub a: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub b: f64,
    m: usize,
}

/// `g(u, x) = -1/2 sum_i x_i u^T A_i u` with each `A_i` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcaveQuadratic {
    pub a: Vec<Vec<Vec<f64>>>,
    /// Inverse Cholesky factors `L_i^{-1}` with `A_i = L_i L_i^T`.
    chol_inv: Vec<Vec<Vec<f64>>>,
    /// Largest eigenvalue of each `A_i`.
    spectral: Vec<f64>,
}

/// `g(u, x) = -sum_j sum_t F_jt x_j (1 + u_j)^{-t}` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Npv {
    pub f: Vec<Vec<f64>>,
}

/// `g(u, x) = log(sum_i u_i exp(x_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExp {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilySpec", into = "FamilySpec")]
pub enum ConstraintFamily {
    Affine(Affine),
    ConcaveQuadratic(ConcaveQuadratic),
    CapitalBudgetingNpv(Npv),
    LogSumExp(LogSumExp),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum FamilySpec {
    Affine { a: Vec<f64>, p: Vec<Vec<f64>>, b: f64 },
    ConcaveQuadratic { a: Vec<Vec<Vec<f64>>> },
    CapitalBudgetingNpv { f: Vec<Vec<f64>> },
    LogSumExp { n: usize },
}

impl TryFrom<FamilySpec> for ConstraintFamily {
    type Error = MroError;
    fn try_from(spec: FamilySpec) -> Result<Self> {
        match spec {
            FamilySpec::Affine { a, p, b } => ConstraintFamily::affine(a, p, b),
            FamilySpec::ConcaveQuadratic { a } => ConstraintFamily::concave_quadratic(a),
            FamilySpec::CapitalBudgetingNpv { f } => ConstraintFamily::npv(f),
            FamilySpec::LogSumExp { n } => ConstraintFamily::log_sum_exp(n),
        }
    }
}

impl From<ConstraintFamily> for FamilySpec {
    fn from(f: ConstraintFamily) -> Self {
        match f {
            ConstraintFamily::Affine(Affine { a, p, b, .. }) => FamilySpec::Affine { a, p, b },
            ConstraintFamily::ConcaveQuadratic(q) => FamilySpec::ConcaveQuadratic { a: q.a },
            ConstraintFamily::CapitalBudgetingNpv(n) => FamilySpec::CapitalBudgetingNpv { f: n.f },
            ConstraintFamily::LogSumExp(l) => FamilySpec::LogSumExp { n: l.n },
        }
    }
}

/// Direction of monotonicity in `u` that the family guarantees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    NoneNeeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub domain_ok: bool,
    pub monotonicity: Monotonicity,
    pub concave_in_u: bool,
}

fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map(|v| v.len()).unwrap_or(0);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

fn from_dmatrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(MroError::Dimension(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// Discount factor coefficient in the NPV conjugate.
pub fn npv_conjugate_coeff(t: usize) -> f64 {
    let t = t as f64;
    t.powf(1.0 / (t + 1.0)) + t.powf(-t / (t + 1.0))
}

impl ConstraintFamily {
    pub fn affine(a: Vec<f64>, p: Vec<Vec<f64>>, b: f64) -> Result<Self> {
        let n = a.len();
        if p.len() != n || n == 0 {
            return Err(MroError::Dimension("P must have one row per entry of a".into()));
        }
        let m = p[0].len();
        if m == 0 || p.iter().any(|r| r.len() != m) {
            return Err(MroError::Dimension("P rows must share a positive width".into()));
        }
        if a.iter().chain(p.iter().flatten()).chain(std::iter::once(&b)).any(|v| !v.is_finite()) {
            return Err(MroError::InvalidArgument("affine data must be finite".into()));
        }
        Ok(ConstraintFamily::Affine(Affine { a, p, b, m }))
    }

    pub fn concave_quadratic(a: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if a.is_empty() {
            return Err(MroError::Dimension("need at least one matrix".into()));
        }
        let m = a[0].len();
        let mut chol_inv = Vec::with_capacity(a.len());
        let mut spectral = Vec::with_capacity(a.len());
        for (i, ai) in a.iter().enumerate() {
            if ai.len() != m || ai.iter().any(|r| r.len() != m) || m == 0 {
                return Err(MroError::Dimension(format!("A_{i} must be {m} x {m}")));
            }
            let mat = to_dmatrix(ai);
            if (&mat - mat.transpose()).abs().max() > 1e-10 * (1.0 + mat.abs().max()) {
                return Err(MroError::InvalidArgument(format!("A_{i} is not symmetric")));
            }
            let chol = nalgebra::Cholesky::new(mat.clone())
                .ok_or_else(|| MroError::InvalidArgument(format!("A_{i} is not positive definite")))?;
            let linv = chol
                .l()
                .try_inverse()
                .ok_or_else(|| MroError::InvalidArgument(format!("A_{i} is singular")))?;
            chol_inv.push(from_dmatrix(&linv));
            let eig = mat.symmetric_eigenvalues();
            spectral.push(eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(ConstraintFamily::ConcaveQuadratic(ConcaveQuadratic { a, chol_inv, spectral }))
    }

    /// Cash flows must be nonnegative so that `g` is concave in `u` for `x >= 0`.
    pub fn npv(f: Vec<Vec<f64>>) -> Result<Self> {
        if f.is_empty() || f[0].len() < 2 || f.iter().any(|r| r.len() != f[0].len()) {
            return Err(MroError::Dimension("F must be n x (T+1) with T >= 1".into()));
        }
        if f.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MroError::InvalidArgument("cash flows must be finite and nonnegative".into()));
        }
        Ok(ConstraintFamily::CapitalBudgetingNpv(Npv { f }))
    }

    pub fn log_sum_exp(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(MroError::Dimension("n must be >= 1".into()));
        }
        Ok(ConstraintFamily::LogSumExp(LogSumExp { n }))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintFamily::Affine(_) => "affine",
            ConstraintFamily::ConcaveQuadratic(_) => "concave_quadratic",
            ConstraintFamily::CapitalBudgetingNpv(_) => "capital_budgeting_npv",
            ConstraintFamily::LogSumExp(_) => "log_sum_exp",
        }
    }

    /// Length of `x`.
    pub fn num_x(&self) -> usize {
        match self {
            ConstraintFamily::Affine(f) => f.a.len(),
            ConstraintFamily::ConcaveQuadratic(f) => f.a.len(),
            ConstraintFamily::CapitalBudgetingNpv(f) => f.f.len(),
            ConstraintFamily::LogSumExp(f) => f.n,
        }
    }

    /// Length of `u`.
    pub fn dim_u(&self) -> usize {
        match self {
            ConstraintFamily::Affine(f) => f.m,
            ConstraintFamily::ConcaveQuadratic(f) => f.a[0].len(),
            ConstraintFamily::CapitalBudgetingNpv(f) => f.f.len(),
            ConstraintFamily::LogSumExp(f) => f.n,
        }
    }

    /// Componentwise lower bound on `u` implied by the family's domain.
    pub fn domain_lower_bound(&self) -> Option<f64> {
        match self {
            ConstraintFamily::CapitalBudgetingNpv(_) => Some(0.0),
            ConstraintFamily::LogSumExp(_) => Some(LSE_DOMAIN_LB),
            _ => None,
        }
    }

    fn check_dims(&self, u: &[f64], x: &[f64]) -> Result<()> {
        check_len("u", u, self.dim_u())?;
        check_len("x", x, self.num_x())
    }

    pub fn eval(&self, u: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(u, x)?;
        match self {
            ConstraintFamily::Affine(f) => {
                let mut total = -f.b;
                for (i, xi) in x.iter().enumerate() {
                    total += (f.a[i] + dot(&f.p[i], u)) * xi;
                }
                Ok(total)
            }
            ConstraintFamily::ConcaveQuadratic(f) => {
                let mut total = 0.0;
                for (ai, xi) in f.a.iter().zip(x) {
                    let quad: f64 = ai.iter().zip(u).map(|(row, uj)| uj * dot(row, u)).sum();
                    total -= 0.5 * xi * quad;
                }
                Ok(total)
            }
            ConstraintFamily::CapitalBudgetingNpv(f) => {
                let mut total = 0.0;
                for (j, row) in f.f.iter().enumerate() {
                    if u[j] <= -1.0 {
                        return Err(MroError::Domain(format!("u_{j} = {} <= -1", u[j])));
                    }
                    let base = 1.0 + u[j];
                    let flows: f64 = row.iter().enumerate().map(|(t, ft)| ft * base.powi(-(t as i32))).sum();
                    total -= flows * x[j];
                }
                Ok(total)
            }
            ConstraintFamily::LogSumExp(_) => {
                if let Some(i) = u.iter().position(|v| *v <= 0.0) {
                    return Err(MroError::Domain(format!("u_{i} = {} <= 0", u[i])));
                }
                let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = u.iter().zip(x).map(|(ui, xi)| ui * (xi - xmax).exp()).sum();
                Ok(xmax + s.ln())
            }
        }
    }

    pub fn grad_u(&self, u: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(u, x)?;
        match self {
            ConstraintFamily::Affine(f) => {
                let mut g = vec![0.0; f.m];
                for (row, xi) in f.p.iter().zip(x) {
                    for (gj, pij) in g.iter_mut().zip(row) {
                        *gj += pij * xi;
                    }
                }
                Ok(g)
            }
            ConstraintFamily::ConcaveQuadratic(f) => {
                let m = u.len();
                let mut g = vec![0.0; m];
                for (ai, xi) in f.a.iter().zip(x) {
                    for (gj, row) in g.iter_mut().zip(ai) {
                        *gj -= xi * dot(row, u);
                    }
                }
                Ok(g)
            }
            ConstraintFamily::CapitalBudgetingNpv(f) => {
                let mut g = vec![0.0; u.len()];
                for (j, row) in f.f.iter().enumerate() {
                    if u[j] <= -1.0 {
                        return Err(MroError::Domain(format!("u_{j} = {} <= -1", u[j])));
                    }
                    let base = 1.0 + u[j];
                    let d: f64 = row
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(t, ft)| t as f64 * ft * base.powi(-(t as i32) - 1))
                        .sum();
                    g[j] = d * x[j];
                }
                Ok(g)
            }
            ConstraintFamily::LogSumExp(_) => {
                if let Some(i) = u.iter().position(|v| *v <= 0.0) {
                    return Err(MroError::Domain(format!("u_{i} = {} <= 0", u[i])));
                }
                let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|xi| (xi - xmax).exp()).collect();
                let s = dot(u, &e);
                Ok(e.iter().map(|ei| ei / s).collect())
            }
        }
    }

    /// `sum_k w_k g(v_k, x)`.
    pub fn gbar(&self, points: &[Vec<f64>], weights: &[f64], x: &[f64]) -> Result<f64> {
        if points.len() != weights.len() {
            return Err(MroError::Dimension("one weight per scenario point".into()));
        }
        let mut total = 0.0;
        for (v, w) in points.iter().zip(weights) {
            total += w * self.eval(v, x)?;
        }
        Ok(total)
    }

    /// For families linear in `x`, `(c, c0)` with `sum_k w_k g(v_k, x) = c^T x + c0`.
    /// `None` for log-sum-exp.
    pub fn linear_in_x(&self, points: &[Vec<f64>], weights: &[f64]) -> Result<Option<(Vec<f64>, f64)>> {
        if points.len() != weights.len() {
            return Err(MroError::Dimension("one weight per scenario point".into()));
        }
        let n = self.num_x();
        for v in points {
            check_len("scenario point", v, self.dim_u())?;
        }
        match self {
            ConstraintFamily::Affine(f) => {
                let wsum: f64 = weights.iter().sum();
                let mut c: Vec<f64> = f.a.iter().map(|ai| ai * wsum).collect();
                for (v, w) in points.iter().zip(weights) {
                    for (ci, row) in c.iter_mut().zip(&f.p) {
                        *ci += w * dot(row, v);
                    }
                }
                Ok(Some((c, -f.b * wsum)))
            }
            ConstraintFamily::ConcaveQuadratic(f) => {
                let mut c = vec![0.0; n];
                for (v, w) in points.iter().zip(weights) {
                    for (ci, ai) in c.iter_mut().zip(&f.a) {
                        let quad: f64 = ai.iter().zip(v).map(|(row, vj)| vj * dot(row, v)).sum();
                        *ci -= 0.5 * w * quad;
                    }
                }
                Ok(Some((c, 0.0)))
            }
            ConstraintFamily::CapitalBudgetingNpv(f) => {
                let mut c = vec![0.0; n];
                for (v, w) in points.iter().zip(weights) {
                    for (j, row) in f.f.iter().enumerate() {
                        if v[j] <= -1.0 {
                            return Err(MroError::Domain(format!("u_{j} = {} <= -1", v[j])));
                        }
                        let base = 1.0 + v[j];
                        let flows: f64 = row.iter().enumerate().map(|(t, ft)| ft * base.powi(-(t as i32))).sum();
                        c[j] -= w * flows;
                    }
                }
                Ok(Some((c, 0.0)))
            }
            ConstraintFamily::LogSumExp(_) => Ok(None),
        }
    }

    /// Upper bound on the Lipschitz constant of `grad_u g(., x)`.
    pub fn smoothness_bound(&self, x: &[f64], data: Option<&Dataset>) -> Result<f64> {
        check_len("x", x, self.num_x())?;
        match self {
            ConstraintFamily::Affine(_) => Ok(0.0),
            ConstraintFamily::ConcaveQuadratic(f) => {
                let m = f.a[0].len();
                let mut sum = DMatrix::<f64>::zeros(m, m);
                for (ai, xi) in f.a.iter().zip(x) {
                    sum += to_dmatrix(ai) * *xi;
                }
                let eig = sum.symmetric_eigenvalues();
                Ok(eig.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
            }
            ConstraintFamily::CapitalBudgetingNpv(f) => {
                let mut total = 0.0;
                for (row, xj) in f.f.iter().zip(x) {
                    for (t, ft) in row.iter().enumerate() {
                        total += (t * (t + 1)) as f64 * ft * xj.abs();
                    }
                }
                Ok(total)
            }
            ConstraintFamily::LogSumExp(_) => {
                let data = data.ok_or_else(|| {
                    MroError::InvalidArgument("log-sum-exp smoothness bound needs the dataset".into())
                })?;
                check_len("data row", data.row(0), x.len())?;
                let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
                let mut min_dot = f64::INFINITY;
                for row in data.rows() {
                    min_dot = min_dot.min(dot(row, &e));
                }
                if !(min_dot > 0.0) {
                    return Err(MroError::InvalidArgument(
                        "data row with nonpositive d^T exp(x) in smoothness bound".into(),
                    ));
                }
                Ok(dot(&e, &e) / (min_dot * min_dot))
            }
        }
    }

    /// Checks the monotonicity / domain requirements against a support.
    pub fn check_assumptions(&self, support: &SupportSet) -> AssumptionReport {
        match self {
            ConstraintFamily::Affine(_) | ConstraintFamily::ConcaveQuadratic(_) => AssumptionReport {
                domain_ok: true,
                monotonicity: Monotonicity::NoneNeeded,
                concave_in_u: true,
            },
            ConstraintFamily::CapitalBudgetingNpv(_) | ConstraintFamily::LogSumExp(_) => {
                let lb = self.domain_lower_bound().expect("domain bound");
                AssumptionReport {
                    domain_ok: support_respects_lower_bound(support, self.dim_u(), lb),
                    monotonicity: Monotonicity::Increasing,
                    concave_in_u: true,
                }
            }
        }
    }
}

impl ConcaveQuadratic {
    pub fn chol_inv(&self, i: usize) -> &[Vec<f64>] {
        &self.chol_inv[i]
    }

    pub fn max_eigenvalue(&self, i: usize) -> f64 {
        self.spectral[i]
    }
}

/// Whether every point of the support satisfies `u >= lb` componentwise.
fn support_respects_lower_bound(support: &SupportSet, m: usize, lb: f64) -> bool {
    match support {
        SupportSet::Full => false,
        SupportSet::Box { lb: l, .. } => l.len() == m && l.iter().all(|v| *v >= lb),
        SupportSet::Polyhedron { c, b, .. } => {
            // each coordinate must be bounded below by a single row -u_j <= -lb'
            (0..m).all(|j| {
                c.iter().zip(b).any(|(row, bi)| {
                    row.iter().enumerate().all(|(i, v)| if i == j { *v < 0.0 } else { *v == 0.0 })
                        && -bi / (-row[j]) >= lb
                })
            })
        }
    }
}

/// Dense symmetric sum `sum_i x_i A_i`, exposed for tests and generators.
pub fn weighted_matrix_sum(mats: &[Vec<Vec<f64>>], x: &[f64]) -> Vec<Vec<f64>> {
    let m = mats[0].len();
    let mut sum = DMatrix::<f64>::zeros(m, m);
    for (ai, xi) in mats.iter().zip(x) {
        sum += to_dmatrix(ai) * *xi;
    }
    from_dmatrix(&sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn eval_examples() {
        let aff = ConstraintFamily::affine(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.0).unwrap();
        assert_eq!(aff.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let q = ConstraintFamily::concave_quadratic(vec![vec![vec![2.0]]]).unwrap();
        assert_eq!(q.eval(&[3.0], &[1.0]).unwrap(), -9.0);
        let l = ConstraintFamily::log_sum_exp(2).unwrap();
        assert!(close(l.eval(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 2f64.ln(), 1e-15));
        let n = ConstraintFamily::npv(vec![vec![1.0, 1.0]]).unwrap();
        assert_eq!(n.eval(&[1.0], &[1.0]).unwrap(), -1.5);
    }

    #[test]
    fn domain_errors() {
        let n = ConstraintFamily::npv(vec![vec![1.0, 1.0]]).unwrap();
        assert!(matches!(n.eval(&[-1.0], &[1.0]), Err(MroError::Domain(_))));
        let l = ConstraintFamily::log_sum_exp(2).unwrap();
        assert!(matches!(l.eval(&[0.0, 1.0], &[0.0, 0.0]), Err(MroError::Domain(_))));
    }

    #[test]
    fn gradient_examples() {
        let aff = ConstraintFamily::affine(vec![0.0], vec![vec![2.0, 3.0]], 1.0).unwrap();
        assert_eq!(aff.grad_u(&[5.0, 5.0], &[2.0]).unwrap(), vec![4.0, 6.0]);
        let q = ConstraintFamily::concave_quadratic(vec![vec![vec![2.0, 0.0], vec![0.0, 2.0]]]).unwrap();
        assert_eq!(q.grad_u(&[0.0, 0.0], &[1.0]).unwrap(), vec![0.0, 0.0]);
        let l = ConstraintFamily::log_sum_exp(2).unwrap();
        assert_eq!(l.grad_u(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn gbar_examples() {
        let aff = ConstraintFamily::affine(vec![1.0], vec![vec![1.0, -1.0]], 0.5).unwrap();
        let pts = vec![vec![1.0, 2.0], vec![3.0, 0.0]];
        let w = [0.25, 0.75];
        let mean = [2.5, 0.5];
        assert!(close(aff.gbar(&pts, &w, &[2.0]).unwrap(), aff.eval(&mean, &[2.0]).unwrap(), 1e-14));
        let same = vec![vec![1.0, 2.0]; 2];
        assert!(close(aff.gbar(&same, &w, &[2.0]).unwrap(), aff.eval(&same[0], &[2.0]).unwrap(), 1e-14));
    }

    #[test]
    fn smoothness_examples() {
        let aff = ConstraintFamily::affine(vec![1.0], vec![vec![1.0]], 0.0).unwrap();
        assert_eq!(aff.smoothness_bound(&[3.0], None).unwrap(), 0.0);
        let q = ConstraintFamily::concave_quadratic(vec![vec![vec![2.0, 0.0], vec![0.0, 2.0]]]).unwrap();
        assert!(close(q.smoothness_bound(&[1.0], None).unwrap(), 2.0, 1e-12));
        let l = ConstraintFamily::log_sum_exp(1).unwrap();
        let data = Dataset::new(vec![vec![1.0]]).unwrap();
        assert!(close(l.smoothness_bound(&[0.0], Some(&data)).unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn assumption_examples() {
        let aff = ConstraintFamily::affine(vec![1.0], vec![vec![1.0]], 0.0).unwrap();
        let r = aff.check_assumptions(&SupportSet::Full);
        assert!(r.domain_ok);
        assert_eq!(r.monotonicity, Monotonicity::NoneNeeded);
        let n = ConstraintFamily::npv(vec![vec![1.0, 1.0]]).unwrap();
        let r = n.check_assumptions(&SupportSet::boxed(vec![-0.5], vec![1.0]).unwrap());
        assert!(!r.domain_ok);
        let l = ConstraintFamily::log_sum_exp(2).unwrap();
        let r = l.check_assumptions(&SupportSet::boxed(vec![0.01, 0.01], vec![1.0, 1.0]).unwrap());
        assert!(r.domain_ok);
        assert_eq!(r.monotonicity, Monotonicity::Increasing);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        assert!(ConstraintFamily::concave_quadratic(vec![vec![vec![1.0, 2.0], vec![2.0, 1.0]]]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let q = ConstraintFamily::concave_quadratic(vec![vec![vec![2.0, 0.5], vec![0.5, 1.0]]]).unwrap();
        let text = serde_json::to_string(&q).unwrap();
        assert!(text.contains("\"family\":\"concave_quadratic\""));
        let back: ConstraintFamily = serde_json::from_str(&text).unwrap();
        assert_eq!(q, back);
        assert!(serde_json::from_str::<ConstraintFamily>(r#"{"family":"log_sum_exp","n":0}"#).is_err());
    }

    #[test]
    fn conjugate_coefficient() {
        assert!(close(npv_conjugate_coeff(1), 2.0, 1e-15));
        let t = 3.0f64;
        assert!(close(npv_conjugate_coeff(3), t.powf(0.25) + t.powf(-0.75), 1e-15));
    }

    fn families() -> Vec<ConstraintFamily> {
        vec![
            ConstraintFamily::affine(vec![0.3, -0.2], vec![vec![1.0, -0.5], vec![0.2, 0.7]], 0.1).unwrap(),
            ConstraintFamily::concave_quadratic(vec![
                vec![vec![2.0, 0.3], vec![0.3, 1.0]],
                vec![vec![1.0, -0.2], vec![-0.2, 0.5]],
            ])
            .unwrap(),
            ConstraintFamily::npv(vec![vec![0.2, 0.3, 0.4], vec![0.1, 0.5, 0.2]]).unwrap(),
            ConstraintFamily::log_sum_exp(2).unwrap(),
        ]
    }

    proptest! {
        #[test]
        fn finite_difference_gradients(u in prop::collection::vec(0.05f64..2.0, 2), x in prop::collection::vec(0.0f64..2.0, 2)) {
            for fam in families() {
                let g = fam.grad_u(&u, &x).unwrap();
                for j in 0..2 {
                    let h = 1e-6;
                    let mut up = u.clone();
                    let mut dn = u.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (fam.eval(&up, &x).unwrap() - fam.eval(&dn, &x).unwrap()) / (2.0 * h);
                    prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "{} {fd} {}", fam.name(), g[j]);
                }
            }
        }

        #[test]
        fn concave_in_u(u1 in prop::collection::vec(0.05f64..2.0, 2), u2 in prop::collection::vec(0.05f64..2.0, 2),
                        lam in 0.0f64..1.0, x in prop::collection::vec(0.0f64..2.0, 2)) {
            for fam in families() {
                let mid: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
                let lhs = fam.eval(&mid, &x).unwrap();
                let rhs = lam * fam.eval(&u1, &x).unwrap() + (1.0 - lam) * fam.eval(&u2, &x).unwrap();
                prop_assert!(lhs >= rhs - 1e-9);
            }
        }

        #[test]
        fn linear_or_convex_in_x(u in prop::collection::vec(0.05f64..2.0, 2), x1 in prop::collection::vec(0.0f64..2.0, 2),
                                 x2 in prop::collection::vec(0.0f64..2.0, 2), lam in 0.0f64..1.0) {
            for fam in families() {
                let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
                let lhs = fam.eval(&u, &mid).unwrap();
                let rhs = lam * fam.eval(&u, &x1).unwrap() + (1.0 - lam) * fam.eval(&u, &x2).unwrap();
                match fam {
                    ConstraintFamily::LogSumExp(_) => prop_assert!(lhs <= rhs + 1e-9),
                    _ => prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs())),
                }
            }
        }

        #[test]
        fn gradient_lipschitz(u1 in prop::collection::vec(0.0f64..1.0, 2), u2 in prop::collection::vec(0.0f64..1.0, 2),
                              x in prop::collection::vec(0.0f64..2.0, 2)) {
            let data = Dataset::new(vec![vec![0.02, 0.02], vec![1.0, 1.0]]).unwrap();
            for fam in families() {
                let (a, b) = match fam {
                    ConstraintFamily::LogSumExp(_) => {
                        // the bound holds on the region where u^T e^x exceeds the data minimum
                        let shift = |u: &Vec<f64>| u.iter().map(|v| v + 0.02).collect::<Vec<f64>>();
                        (shift(&u1), shift(&u2))
                    }
                    _ => (u1.clone(), u2.clone()),
                };
                let l = fam.smoothness_bound(&x, Some(&data)).unwrap();
                let ga = fam.grad_u(&a, &x).unwrap();
                let gb = fam.grad_u(&b, &x).unwrap();
                let dg: f64 = ga.iter().zip(&gb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                let du: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
                prop_assert!(dg <= l * du + 1e-9, "{} {dg} {l} {du}", fam.name());
            }
        }

        #[test]
        fn linear_form_matches_gbar(v in prop::collection::vec(0.05f64..2.0, 4), x in prop::collection::vec(0.0f64..2.0, 2), w0 in 0.1f64..0.9) {
            let pts = vec![v[..2].to_vec(), v[2..].to_vec()];
            let w = [w0, 1.0 - w0];
            for fam in families() {
                if let Some((c, c0)) = fam.linear_in_x(&pts, &w).unwrap() {
                    let lin = dot(&c, &x) + c0;
                    let direct = fam.gbar(&pts, &w, &x).unwrap();
                    prop_assert!((lin - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
                }
            }
        }
    }
}
