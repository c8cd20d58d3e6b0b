//! Local Bakry-Emery calculus: `Delta(x)`, `Gamma(x)`, `Gamma_2(x)`, the Schur
//! complement `Q(x)`, curvature `K_N(x)` and the distance-function upper bound.
//!
//! Spheres are taken in the support digraph `{(u, v) : p_uv > support_eps}`,
//! which keeps `Gamma(x)` positive definite on `S_1(x)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::CombinatorialGraph;
use crate::linalg::{self, PINV_CUTOFF};
use crate::par::Execution;
use crate::weights::{require_markovian, ToleranceConfig, WeightScheme};

/// Relative tolerance below which a negative eigenvalue of the `S_2` block is round-off.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Dimension parameter `N` in `(0, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dimension {
    Finite(f64),
    Infinite,
}

impl Dimension {
    pub fn new(n: f64) -> Result<Self> {
        if n == f64::INFINITY {
            Ok(Dimension::Infinite)
        } else if n > 0.0 && n.is_finite() {
            Ok(Dimension::Finite(n))
        } else {
            Err(invalid(format!("dimension must lie in (0, inf], got {n}")))
        }
    }

    /// `1 / N`, exactly zero for `N = inf`.
    pub fn inverse(self) -> f64 {
        match self {
            Dimension::Finite(n) => 1.0 / n,
            Dimension::Infinite => 0.0,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Dimension::Finite(n) => n,
            Dimension::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::Finite(n) => write!(f, "{n}"),
            Dimension::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Dimension::Infinite),
            t => Dimension::new(t.parse::<f64>().map_err(|e| Error::Parse(format!("dimension {s:?}: {e}")))?),
        }
    }
}

impl Serialize for Dimension {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dimension::Finite(n) => s.serialize_f64(*n),
            Dimension::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(n) => Dimension::new(n),
            Repr::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

fn support_rate(p: &WeightScheme, u: usize, v: usize, eps: f64) -> f64 {
    let r = p.rate(u, v);
    if u != v && r > eps {
        r
    } else {
        0.0
    }
}

/// `S_1(x)` and `S_2(x)` in the support digraph, each sorted by vertex index.
pub fn local_ball(p: &WeightScheme, x: usize, support_eps: f64) -> (Vec<usize>, Vec<usize>) {
    let n = p.n();
    let s1: Vec<usize> = (0..n).filter(|&y| support_rate(p, x, y, support_eps) > 0.0).collect();
    let mut in_s2 = vec![false; n];
    for &y in &s1 {
        for (z, flag) in in_s2.iter_mut().enumerate() {
            if support_rate(p, y, z, support_eps) > 0.0 {
                *flag = true;
            }
        }
    }
    in_s2[x] = false;
    for &y in &s1 {
        in_s2[y] = false;
    }
    let s2 = (0..n).filter(|&z| in_s2[z]).collect();
    (s1, s2)
}

/// `Delta(x)` and `Gamma(x) = diag(Delta(x)) / 2` on `S_1(x)`.
pub fn delta_gamma(p: &WeightScheme, x: usize, s1: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let delta = DVector::from_iterator(s1.len(), s1.iter().map(|&y| p.rate(x, y)));
    let gamma = DMatrix::from_diagonal(&(&delta * 0.5));
    (delta, gamma)
}

/// `Gamma_2(x)` on the indicator basis of `S_1(x)` followed by `S_2(x)`.
///
/// Evaluates `2 Gamma_2(f, g) = Delta Gamma(f, g) - Gamma(f, Delta g) - Gamma(g, Delta f)`
/// at `x` bilinearly, using only rates leaving `x` and `S_1(x)`.
pub fn gamma2_matrix(p: &WeightScheme, x: usize, s1: &[usize], s2: &[usize], support_eps: f64) -> DMatrix<f64> {
    let m = s1.len();
    // local index 0 is x, then S_1, then S_2
    let local: Vec<usize> = std::iter::once(x).chain(s1.iter().copied()).chain(s2.iter().copied()).collect();
    let k = local.len();
    let r = DMatrix::from_fn(m + 1, k, |a, b| support_rate(p, local[a], local[b], support_eps));
    let lap = DMatrix::from_fn(m + 1, k, |a, b| {
        if a == b {
            -(r.row(a).sum() - r[(a, a)])
        } else {
            r[(a, b)]
        }
    });
    let d_x = r.row(0).sum();

    // m1 is the form (f, g) -> Delta Gamma(f, g)(x) = sum_y p_xy Gamma(f, g)(y) - D_x Gamma(f, g)(x)
    let mut m1 = DMatrix::<f64>::zeros(k, k);
    for w in 0..=m {
        let coef = if w == 0 { -d_x } else { r[(0, w)] };
        for b in 0..k {
            let c = 0.5 * coef * r[(w, b)];
            if c == 0.0 {
                continue;
            }
            m1[(b, b)] += c;
            m1[(w, w)] += c;
            m1[(b, w)] -= c;
            m1[(w, b)] -= c;
        }
    }
    // m2 is the form (f, g) -> Gamma(f, Delta g)(x) for f(x) = 0
    let mut m2 = DMatrix::<f64>::zeros(k, k);
    for y in 1..=m {
        for c in 0..k {
            m2[(y, c)] = 0.5 * r[(0, y)] * (lap[(y, c)] - lap[(0, c)]);
        }
    }
    let full = (m1 - &m2 - m2.transpose()) * 0.5;
    full.view((1, 1), (k - 1, k - 1)).into_owned()
}

/// Schur complement of the `S_2` block of `gamma2` (first `m` rows are `S_1`).
pub fn q_matrix(gamma2: &DMatrix<f64>, m: usize, n: usize, pinv_cutoff: f64, vertex: usize) -> Result<DMatrix<f64>> {
    debug_assert_eq!(gamma2.nrows(), m + n);
    let a = gamma2.view((0, 0), (m, m)).into_owned();
    if n == 0 {
        return Ok(linalg::symmetrize(&a));
    }
    let b = gamma2.view((0, m), (m, n)).into_owned();
    let c = gamma2.view((m, m), (n, n)).into_owned();
    let scale = linalg::max_abs(gamma2).max(f64::MIN_POSITIVE);
    let lowest = linalg::min_symmetric_eigenvalue(&c);
    if lowest < -PSD_TOLERANCE * scale {
        return Err(Error::PsdViolation { vertex, eigenvalue: lowest });
    }
    let q = a - &b * linalg::pinv_symmetric(&c, pinv_cutoff) * b.transpose();
    Ok(linalg::symmetrize(&q))
}

/// Everything the curvature of one vertex depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCurvatureData {
    pub x: usize,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub delta: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub gamma2: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl LocalCurvatureData {
    pub fn new(p: &WeightScheme, x: usize, support_eps: f64) -> Result<Self> {
        if x >= p.n() {
            return Err(invalid(format!("vertex {x} out of range for {} vertices", p.n())));
        }
        let (s1, s2) = local_ball(p, x, support_eps);
        let (delta, gamma) = delta_gamma(p, x, &s1);
        let gamma2 = gamma2_matrix(p, x, &s1, &s2, support_eps);
        let q = q_matrix(&gamma2, s1.len(), s2.len(), PINV_CUTOFF, x)?;
        Ok(Self { x, s1, s2, delta, gamma, gamma2, q })
    }

    pub fn is_isolated(&self) -> bool {
        self.s1.is_empty()
    }

    /// `D_x`, the total rate leaving `x`.
    pub fn out_rate(&self) -> f64 {
        self.delta.sum()
    }

    /// Largest `K` with `Q - Delta Delta^T / N - K Gamma >= 0`; zero when isolated.
    pub fn curvature(&self, dim: Dimension) -> f64 {
        if self.is_isolated() {
            return 0.0;
        }
        let m = self.s1.len();
        let scale: Vec<f64> = self.delta.iter().map(|&p| (0.5 * p).sqrt().recip()).collect();
        let inv_n = dim.inverse();
        let a = DMatrix::from_fn(m, m, |i, j| {
            (self.q[(i, j)] - inv_n * self.delta[i] * self.delta[j]) * scale[i] * scale[j]
        });
        linalg::min_symmetric_eigenvalue(&a)
    }

    /// `Gamma_2(d)(x)` for `d = d(x, .)`: 1 on `S_1`, 2 on `S_2`.
    fn gamma2_of_distance(&self) -> f64 {
        let f = self.distance_vector();
        (f.transpose() * &self.gamma2 * &f)[(0, 0)]
    }

    fn distance_vector(&self) -> DVector<f64> {
        let m = self.s1.len();
        DVector::from_fn(m + self.s2.len(), |i, _| if i < m { 1.0 } else { 2.0 })
    }

    /// Upper bound `(Gamma_2(d) - (Delta d)^2 / N) / Gamma(d)`; `None` when isolated.
    pub fn upper_bound(&self, dim: Dimension) -> Option<f64> {
        if self.is_isolated() {
            return None;
        }
        let d_x = self.out_rate();
        Some((self.gamma2_of_distance() - dim.inverse() * d_x * d_x) / (0.5 * d_x))
    }

    /// `max |Q 1 - K^d_inf p_x / 2|` over `S_1(x)`; zero when isolated.
    pub fn sharpness_residual(&self) -> f64 {
        let Some(k) = self.upper_bound(Dimension::Infinite) else {
            return 0.0;
        };
        let q1 = self.q.column_sum();
        (q1 - &self.delta * (0.5 * k)).amax()
    }
}

/// `K_N(x)`.
pub fn curvature(p: &WeightScheme, x: usize, dim: Dimension) -> Result<f64> {
    Ok(LocalCurvatureData::new(p, x, 0.0)?.curvature(dim))
}

/// `K^{d(x, .)}_N(x)`; errors for isolated `x`.
pub fn curvature_upper_bound(p: &WeightScheme, x: usize, dim: Dimension) -> Result<f64> {
    LocalCurvatureData::new(p, x, 0.0)?
        .upper_bound(dim)
        .ok_or(Error::IsolatedVertex(x))
}

/// Per-vertex curvatures and upper bounds for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub dimension: Dimension,
    pub values: Vec<f64>,
    /// `None` at isolated vertices.
    pub upper_bounds: Vec<Option<f64>>,
}

pub fn curvatures(p: &WeightScheme, dim: Dimension, tol: &ToleranceConfig) -> Result<CurvatureResult> {
    curvatures_with(p, dim, tol, Execution::default())
}

pub fn curvatures_with(
    p: &WeightScheme,
    dim: Dimension,
    tol: &ToleranceConfig,
    exec: Execution,
) -> Result<CurvatureResult> {
    let local = exec
        .map(p.n(), |x| LocalCurvatureData::new(p, x, tol.support_eps))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(CurvatureResult {
        dimension: dim,
        values: local.iter().map(|l| l.curvature(dim)).collect(),
        upper_bounds: local.iter().map(|l| l.upper_bound(dim)).collect(),
    })
}

/// Largest violation of the sharpness identity over all vertices.
///
/// At a vertex `x` this is the residual of `Q(x) 1 = K^d_inf(x) p_x / 2` on the
/// support, and for every edge `x -> y` of `a` with `p_xy = 0` the value
/// `sum_{y' != y} p_xy' p_y'y / 4`, which is the `y` component of `Q(x) 1` taken
/// over the combinatorial sphere.
pub fn sharpness_defect(a: &CombinatorialGraph, p: &WeightScheme) -> Result<f64> {
    let n = p.n();
    if a.n() != n {
        return Err(invalid(format!("graph has {} vertices, scheme has {n}", a.n())));
    }
    let mut worst = 0.0_f64;
    for x in 0..n {
        let local = LocalCurvatureData::new(p, x, 0.0)?;
        if local.is_isolated() {
            continue;
        }
        worst = worst.max(local.sharpness_residual());
        for y in a.neighbors(x).filter(|&y| p.rate(x, y) <= 0.0) {
            let inflow: f64 = a
                .neighbors(x)
                .filter(|&v| v != y)
                .map(|v| p.rate(x, v) * p.rate(v, y))
                .sum();
            worst = worst.max(0.25 * inflow);
        }
    }
    Ok(worst)
}

/// Whether every non-isolated vertex satisfies the sharpness identity within `threshold`.
pub fn is_curvature_sharp(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    norm_tolerance: f64,
    threshold: f64,
) -> Result<bool> {
    require_markovian(p, norm_tolerance)?;
    Ok(sharpness_defect(a, p)? <= threshold)
}

/// Vertices whose support spheres differ from their combinatorial spheres in `a`.
pub fn sphere_mismatches(a: &CombinatorialGraph, p: &WeightScheme, support_eps: f64) -> Vec<usize> {
    (0..p.n())
        .filter(|&x| {
            let (s1, s2) = local_ball(p, x, support_eps);
            let c1: Vec<usize> = a.neighbors(x).collect();
            let mut c2: Vec<usize> = c1
                .iter()
                .flat_map(|&y| a.neighbors(y))
                .filter(|&z| z != x && !a.has_edge(x, z))
                .collect();
            c2.sort_unstable();
            c2.dedup();
            s1 != c1 || s2 != c2
        })
        .collect()
}
