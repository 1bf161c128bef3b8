//! Euclidean projection onto the clustered uncertainty set in the weighted
//! metric `sum_k w_k ||v_k - y_k||^2`.

use crate::data::{PExponent, SupportSet};
use crate::error::{MroError, Result};

/// Per-point feasible region: a box plus optional halfspaces `c^T u <= b`.
#[derive(Debug, Clone)]
pub struct PointRegion {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub halfspaces: Vec<(Vec<f64>, f64)>,
}

impl PointRegion {
    /// Region from a support intersected with `u >= domain_lb`.
    pub fn new(support: &SupportSet, m: usize, domain_lb: Option<f64>) -> Result<Self> {
        let (mut lb, ub, halfspaces) = match support.as_box(m) {
            Some((lb, ub)) => {
                if lb.len() != m {
                    return Err(MroError::Dimension("support dimension mismatch".into()));
                }
                (lb, ub, Vec::new())
            }
            None => {
                let (c, b) = support.rows(m)?;
                (vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m], c.into_iter().zip(b).collect())
            }
        };
        if let Some(d) = domain_lb {
            lb.iter_mut().for_each(|l| *l = l.max(d));
        }
        if lb.iter().zip(&ub).any(|(l, u)| l > u) {
            return Err(MroError::InvalidArgument("support does not meet the family domain".into()));
        }
        Ok(Self { lb, ub, halfspaces })
    }

    fn box_is_full(&self) -> bool {
        self.lb.iter().all(|v| *v == f64::NEG_INFINITY) && self.ub.iter().all(|v| *v == f64::INFINITY)
    }

    fn clamp(&self, v: &mut [f64]) {
        for ((x, l), u) in v.iter_mut().zip(&self.lb).zip(&self.ub) {
            *x = x.clamp(*l, *u);
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter().zip(&self.lb).zip(&self.ub).all(|((x, l), u)| *x >= l - tol && *x <= u + tol)
            && self.halfspaces.iter().all(|(c, b)| dot(c, v) <= b + tol)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `min ||v - y||^2 + mu ||v - d||^2` over the box, coordinatewise.
fn prox_box(y: &[f64], d: &[f64], mu: f64, region: &PointRegion) -> Vec<f64> {
    let mut v: Vec<f64> = y.iter().zip(d).map(|(a, b)| (a + mu * b) / (1.0 + mu)).collect();
    region.clamp(&mut v);
    v
}

/// Smallest `mu >= 0` with `h(mu) <= target`, where `h` is nonincreasing and
/// tends to zero; returns the evaluation at that `mu`.
fn bisect_multiplier<T>(mut eval: impl FnMut(f64) -> (f64, T), target: f64, tol: f64) -> T {
    let (h0, v0) = eval(0.0);
    if h0 <= target {
        return v0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = loop {
        let (h, v) = eval(hi);
        if h <= target {
            break v;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            break eval(hi).1;
        }
    };
    for _ in 0..400 {
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (h, v) = eval(mid);
        if h <= target {
            hi = mid;
            best = v;
        } else {
            lo = mid;
        }
    }
    best
}

/// Radius `r in [0, rho]` solving `r + c r^(p-1) = rho`.
fn shrink_radius(rho: f64, c: f64, p: u32) -> f64 {
    if rho <= 0.0 {
        return 0.0;
    }
    match p {
        1 => (rho - c).max(0.0),
        2 => rho / (1.0 + c),
        _ => {
            let pf = p as f64;
            let f = |r: f64| r + c * r.powf(pf - 1.0) - rho;
            let (mut lo, mut hi) = (0.0, rho);
            let mut r = rho / (1.0 + c * rho.powf(pf - 2.0));
            for _ in 0..100 {
                let fr = f(r);
                if fr > 0.0 {
                    hi = r;
                } else {
                    lo = r;
                }
                let df = 1.0 + c * (pf - 1.0) * r.powf(pf - 2.0);
                let mut next = r - fr / df;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - r).abs() <= 1e-15 * rho.max(1e-300) {
                    r = next;
                    break;
                }
                r = next;
            }
            r.clamp(0.0, rho)
        }
    }
}

/// Projection onto the weighted `p`-ball around the centroids with no other
/// constraint.
fn project_ball_only(y: &[Vec<f64>], d: &[Vec<f64>], w: &[f64], p: PExponent, eps: f64, tol: f64) -> Vec<Vec<f64>> {
    let rho: Vec<f64> = y.iter().zip(d).map(|(a, b)| dist(a, b)).collect();
    let place = |radii: &[f64]| -> Vec<Vec<f64>> {
        y.iter()
            .zip(d)
            .zip(radii.iter().zip(&rho))
            .map(|((yk, dk), (r, rk))| {
                if *rk <= 0.0 {
                    dk.clone()
                } else {
                    let s = r / rk;
                    yk.iter().zip(dk).map(|(a, b)| b + s * (a - b)).collect()
                }
            })
            .collect()
    };
    match p {
        PExponent::Infinity => {
            let radii: Vec<f64> = rho.iter().map(|r| r.min(eps)).collect();
            place(&radii)
        }
        PExponent::Finite(pp) => {
            let target = eps.powi(pp as i32);
            let radii = bisect_multiplier(
                |mu| {
                    let radii: Vec<f64> = rho.iter().map(|r| shrink_radius(*r, 0.5 * mu * pp as f64, pp)).collect();
                    let h: f64 = radii.iter().zip(w).map(|(r, wk)| wk * r.powi(pp as i32)).sum();
                    (h, radii)
                },
                target,
                tol,
            );
            place(&radii)
        }
    }
}

/// Projection onto `{sum_k w_k ||v_k - d_k||^p <= eps^p}` (or per-cluster
/// balls for `p = inf`) intersected with the region for every point.
/// Distances use the Euclidean norm.
pub fn project(
    y: &[Vec<f64>],
    d: &[Vec<f64>],
    w: &[f64],
    p: PExponent,
    eps: f64,
    region: &PointRegion,
    tol: f64,
) -> Vec<Vec<f64>> {
    if eps == 0.0 {
        return d.to_vec();
    }
    let has_box = !region.box_is_full();
    if region.halfspaces.is_empty() {
        match p {
            PExponent::Infinity => {
                return y
                    .iter()
                    .zip(d)
                    .map(|(yk, dk)| {
                        bisect_multiplier(
                            |mu| {
                                let v = prox_box(yk, dk, mu, region);
                                (dist(&v, dk), v)
                            },
                            eps,
                            tol,
                        )
                    })
                    .collect();
            }
            PExponent::Finite(2) => {
                return bisect_multiplier(
                    |mu| {
                        let v: Vec<Vec<f64>> = y.iter().zip(d).map(|(yk, dk)| prox_box(yk, dk, mu, region)).collect();
                        let h: f64 = v.iter().zip(d).zip(w).map(|((vk, dk), wk)| wk * dist(vk, dk).powi(2)).sum();
                        (h, v)
                    },
                    eps * eps,
                    tol,
                );
            }
            _ if !has_box => return project_ball_only(y, d, w, p, eps, tol),
            _ => {}
        }
    }
    dykstra(y, d, w, p, eps, region, tol)
}

/// Alternating projections with Dykstra corrections between the ball and the
/// per-point region, followed by a radial pull toward the centroids so the
/// ball constraint holds.
fn dykstra(
    y: &[Vec<f64>],
    d: &[Vec<f64>],
    w: &[f64],
    p: PExponent,
    eps: f64,
    region: &PointRegion,
    tol: f64,
) -> Vec<Vec<f64>> {
    let k = y.len();
    let m = y[0].len();
    let nsets = 2 + region.halfspaces.len();
    let mut corr = vec![vec![vec![0.0; m]; k]; nsets];
    let mut cur = y.to_vec();
    let box_only = PointRegion { lb: region.lb.clone(), ub: region.ub.clone(), halfspaces: Vec::new() };
    for _sweep in 0..200 {
        let prev = cur.clone();
        for s in 0..nsets {
            let shifted: Vec<Vec<f64>> = cur
                .iter()
                .zip(&corr[s])
                .map(|(a, c)| a.iter().zip(c).map(|(x, y)| x + y).collect())
                .collect();
            let projected: Vec<Vec<f64>> = match s {
                0 => project_ball_only(&shifted, d, w, p, eps, tol),
                1 => shifted
                    .iter()
                    .map(|v| {
                        let mut v = v.clone();
                        box_only.clamp(&mut v);
                        v
                    })
                    .collect(),
                _ => {
                    let (c, b) = &region.halfspaces[s - 2];
                    let cc = dot(c, c);
                    shifted
                        .iter()
                        .map(|v| {
                            let viol = dot(c, v) - b;
                            if viol > 0.0 && cc > 0.0 {
                                v.iter().zip(c).map(|(x, ci)| x - viol / cc * ci).collect()
                            } else {
                                v.clone()
                            }
                        })
                        .collect()
                }
            };
            for kk in 0..k {
                for j in 0..m {
                    corr[s][kk][j] = shifted[kk][j] - projected[kk][j];
                }
            }
            cur = projected;
        }
        let change = cur
            .iter()
            .zip(&prev)
            .zip(w)
            .map(|((a, b), wk)| wk * dist(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        if change <= tol {
            break;
        }
    }
    // pull toward the centroids until the ball holds exactly
    match p {
        PExponent::Infinity => {
            for (v, dk) in cur.iter_mut().zip(d) {
                let r = dist(v, dk);
                if r > eps {
                    let s = eps / r;
                    for (x, c) in v.iter_mut().zip(dk) {
                        *x = c + s * (*x - c);
                    }
                }
            }
        }
        PExponent::Finite(pp) => {
            let h: f64 = cur.iter().zip(d).zip(w).map(|((v, dk), wk)| wk * dist(v, dk).powi(pp as i32)).sum();
            let lim = eps.powi(pp as i32);
            if h > lim {
                let s = (lim / h).powf(1.0 / pp as f64);
                for (v, dk) in cur.iter_mut().zip(d) {
                    for (x, c) in v.iter_mut().zip(dk) {
                        *x = c + s * (*x - c);
                    }
                }
            }
        }
    }
    cur
}
