//! Core domain types: datasets, supports, norms and uncertainty specifications.
//!
//! Everything here is immutable after construction. Infinite box bounds are
//! stored as `f64` infinities in memory and as `null` in JSON.

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MroError, Result};

/// `N` observations of the uncertain vector, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vec<f64>>,
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    m: usize,
    samples: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        let m = samples
            .first()
            .map(|r| r.len())
            .ok_or_else(|| MroError::InvalidArgument("dataset needs at least one sample".into()))?;
        if m == 0 {
            return Err(MroError::InvalidArgument("samples must have dimension >= 1".into()));
        }
        for (i, row) in samples.iter().enumerate() {
            if row.len() != m {
                return Err(MroError::Dimension(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(MroError::InvalidArgument(format!("row {i} has a non-finite entry")));
            }
        }
        Ok(Self { samples, m })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i]
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.m];
        for row in &self.samples {
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let n = self.len() as f64;
        mean.iter_mut().for_each(|v| *v /= n);
        mean
    }

    /// Reads `{"m": .., "samples": [[..], ..]}`.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(s)?;
        let ds = Self::new(file.samples)?;
        if ds.m != file.m {
            return Err(MroError::Dimension(format!(
                "declared m = {} but samples have dimension {}",
                file.m, ds.m
            )));
        }
        Ok(ds)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetFile { m: self.m, samples: self.samples.clone() })?)
    }

    /// Reads CSV with one sample per row. A first row that does not parse as
    /// numbers is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut samples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(row) => samples.push(row),
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(MroError::InvalidArgument(format!("csv line {}: {e}", i + 1)))
                }
            }
        }
        Self::new(samples)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for row in &self.samples {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Loads a dataset, choosing the format from the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_csv_reader(text.as_bytes()),
        }
    }
}

impl Serialize for Dataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetFile { m: self.m, samples: self.samples.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = DatasetFile::deserialize(d)?;
        let ds = Dataset::new(file.samples).map_err(serde::de::Error::custom)?;
        if ds.m != file.m {
            return Err(serde::de::Error::custom("declared m does not match samples"));
        }
        Ok(ds)
    }
}

/// Inner norm of the uncertainty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum NormOrder {
    #[serde(rename = "1")]
    L1,
    #[default]
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl NormOrder {
    /// Hölder conjugate order.
    pub fn dual(self) -> NormOrder {
        match self {
            NormOrder::L1 => NormOrder::LInf,
            NormOrder::L2 => NormOrder::L2,
            NormOrder::LInf => NormOrder::L1,
        }
    }

    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => v.iter().map(|x| x.abs()).sum(),
            NormOrder::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormOrder::LInf => v.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff)
    }
}

impl std::str::FromStr for NormOrder {
    type Err = MroError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "l1" | "L1" => Ok(NormOrder::L1),
            "2" | "l2" | "L2" => Ok(NormOrder::L2),
            "inf" | "Inf" | "linf" | "LInf" => Ok(NormOrder::LInf),
            other => Err(MroError::InvalidArgument(format!("unknown norm order `{other}`"))),
        }
    }
}

/// Exponent `p` of the uncertainty set: a positive integer or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PExponent {
    Finite(u32),
    Infinity,
}

impl PExponent {
    pub fn finite(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(MroError::InvalidArgument("p must be >= 1".into()));
        }
        Ok(PExponent::Finite(p))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PExponent::Infinity)
    }
}

impl fmt::Display for PExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PExponent::Finite(p) => write!(f, "{p}"),
            PExponent::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for PExponent {
    type Err = MroError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" | "Inf" | "infinity" => Ok(PExponent::Infinity),
            _ => {
                let p: u32 = s
                    .parse()
                    .map_err(|_| MroError::InvalidArgument(format!("invalid p `{s}`")))?;
                PExponent::finite(p)
            }
        }
    }
}

impl Serialize for PExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PExponent::Finite(p) => s.serialize_u32(*p),
            PExponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => PExponent::finite(p).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Support `S` of the uncertain parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportSet {
    Full,
    Box {
        #[serde(with = "ext_vec_neg")]
        lb: Vec<f64>,
        #[serde(with = "ext_vec_pos")]
        ub: Vec<f64>,
    },
    Polyhedron {
        c: Vec<Vec<f64>>,
        b: Vec<f64>,
        witness: Vec<f64>,
    },
}

impl SupportSet {
    pub fn boxed(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        box_to_polyhedron(&lb, &ub)?;
        Ok(SupportSet::Box { lb, ub })
    }

    pub fn nonnegative(m: usize) -> Self {
        SupportSet::Box { lb: vec![0.0; m], ub: vec![f64::INFINITY; m] }
    }

    /// `{u | C u <= b}`; `witness` must satisfy it, which certifies nonemptiness.
    pub fn polyhedron(c: Vec<Vec<f64>>, b: Vec<f64>, witness: Vec<f64>) -> Result<Self> {
        if c.len() != b.len() {
            return Err(MroError::Dimension("C and b row counts differ".into()));
        }
        for (i, row) in c.iter().enumerate() {
            if row.len() != witness.len() {
                return Err(MroError::Dimension(format!("row {i} of C has wrong width")));
            }
            let lhs: f64 = row.iter().zip(&witness).map(|(a, w)| a * w).sum();
            if lhs > b[i] + 1e-9 {
                return Err(MroError::InvalidArgument(format!(
                    "witness violates support row {i}"
                )));
            }
        }
        Ok(SupportSet::Polyhedron { c, b, witness })
    }

    /// Canonical `(C, b)` rows for dimension `m`.
    pub fn rows(&self, m: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        match self {
            SupportSet::Full => Ok((Vec::new(), Vec::new())),
            SupportSet::Box { lb, ub } => {
                if lb.len() != m {
                    return Err(MroError::Dimension(format!(
                        "box support has dimension {}, expected {m}",
                        lb.len()
                    )));
                }
                box_to_polyhedron(lb, ub)
            }
            SupportSet::Polyhedron { c, b, witness } => {
                if witness.len() != m {
                    return Err(MroError::Dimension(format!(
                        "polyhedral support has dimension {}, expected {m}",
                        witness.len()
                    )));
                }
                Ok((c.clone(), b.clone()))
            }
        }
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        match self {
            SupportSet::Full => true,
            SupportSet::Box { lb, ub } => u
                .iter()
                .zip(lb.iter().zip(ub))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            SupportSet::Polyhedron { c, b, .. } => c.iter().zip(b).all(|(row, bi)| {
                row.iter().zip(u).map(|(a, v)| a * v).sum::<f64>() <= bi + tol
            }),
        }
    }

    /// Coordinate bounds implied by the support when it is a box (full space
    /// gives infinite bounds). `None` for a general polyhedron.
    pub fn as_box(&self, m: usize) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            SupportSet::Full => Some((vec![f64::NEG_INFINITY; m], vec![f64::INFINITY; m])),
            SupportSet::Box { lb, ub } => Some((lb.clone(), ub.clone())),
            SupportSet::Polyhedron { .. } => None,
        }
    }

    pub fn is_full(&self) -> bool {
        match self {
            SupportSet::Full => true,
            SupportSet::Box { lb, ub } => {
                lb.iter().all(|v| *v == f64::NEG_INFINITY) && ub.iter().all(|v| *v == f64::INFINITY)
            }
            SupportSet::Polyhedron { c, .. } => c.is_empty(),
        }
    }
}

mod ext_vec_neg {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

mod ext_vec_pos {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Radius, exponent, inner norm and support of `U(K, eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub p: PExponent,
    #[serde(default)]
    pub norm: NormOrder,
    pub epsilon: f64,
    pub support: SupportSet,
}

impl UncertaintySpec {
    pub fn new(p: PExponent, norm: NormOrder, epsilon: f64, support: SupportSet) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(MroError::InvalidArgument(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self { p, norm, epsilon, support })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.p, self.norm, epsilon, self.support.clone())
    }

    /// Same set with the support constraint dropped.
    pub fn relaxed(&self) -> Self {
        Self { support: SupportSet::Full, ..self.clone() }
    }
}

/// Converts box bounds into `C u <= b`, emitting a row only for finite bounds.
/// Upper-bound rows come first, then lower-bound rows.
pub fn box_to_polyhedron(lb: &[f64], ub: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if lb.len() != ub.len() {
        return Err(MroError::Dimension("lb and ub lengths differ".into()));
    }
    let m = lb.len();
    for i in 0..m {
        if lb[i].is_nan() || ub[i].is_nan() || lb[i] > ub[i] || lb[i] == f64::INFINITY || ub[i] == f64::NEG_INFINITY {
            return Err(MroError::InvalidArgument(format!(
                "invalid box bounds at coordinate {i}: [{}, {}]",
                lb[i], ub[i]
            )));
        }
    }
    let mut c = Vec::new();
    let mut b = Vec::new();
    for i in 0..m {
        if ub[i].is_finite() {
            let mut row = vec![0.0; m];
            row[i] = 1.0;
            c.push(row);
            b.push(ub[i]);
        }
    }
    for i in 0..m {
        if lb[i].is_finite() {
            let mut row = vec![0.0; m];
            row[i] = -1.0;
            c.push(row);
            b.push(-lb[i]);
        }
    }
    Ok((c, b))
}

/// A real number or `+inf`; the support function never returns `-inf` on a
/// nonempty box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    PlusInfinity,
}

impl Extended {
    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::PlusInfinity => None,
        }
    }
}

/// `sup_{lb <= u <= ub} y^T u`, with `0 * inf = 0`.
pub fn support_function_box(y: &[f64], lb: &[f64], ub: &[f64]) -> Extended {
    let mut total = 0.0;
    for ((yi, l), h) in y.iter().zip(lb).zip(ub) {
        let bound = if *yi > 0.0 {
            *h
        } else if *yi < 0.0 {
            *l
        } else {
            continue;
        };
        let term = yi * bound;
        if term == f64::INFINITY {
            return Extended::PlusInfinity;
        }
        total += term;
    }
    Extended::Finite(total)
}

/// Membership of `(v_1..v_K)` in `U(K, eps)` up to additive `tol`, including
/// the support constraint on every point.
pub fn ball_membership(
    points: &[Vec<f64>],
    centroids: &[Vec<f64>],
    weights: &[f64],
    spec: &UncertaintySpec,
    tol: f64,
) -> Result<bool> {
    if points.len() != centroids.len() || points.len() != weights.len() {
        return Err(MroError::Dimension("points, centroids and weights must have K entries".into()));
    }
    let m = centroids.first().map(|c| c.len()).unwrap_or(0);
    if points.iter().chain(centroids).any(|p| p.len() != m) {
        return Err(MroError::Dimension("all points must share the centroid dimension".into()));
    }
    let dists: Vec<f64> = points
        .iter()
        .zip(centroids)
        .map(|(v, d)| spec.norm.distance(v, d))
        .collect();
    let in_ball = match spec.p {
        PExponent::Infinity => dists.iter().all(|d| *d <= spec.epsilon + tol),
        PExponent::Finite(p) => {
            let lhs: f64 = weights.iter().zip(&dists).map(|(w, d)| w * d.powi(p as i32)).sum();
            lhs <= spec.epsilon.powi(p as i32) + tol
        }
    };
    Ok(in_ball && points.iter().all(|v| spec.support.contains(v, tol)))
}
