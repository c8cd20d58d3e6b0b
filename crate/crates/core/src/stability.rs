//! Linearization of the normalized flow at curvature sharp Markovian schemes.
//!
//! Coordinates are the directed edges of the combinatorial graph, grouped by
//! source vertex. Row sums are fixed, so one edge per source is eliminated
//! (`q_removed = -sum q_essential`), leaving a square Jacobian on the
//! essential edges whose spectrum decides stability.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::bakry_emery::sharpness_defect;
use crate::error::{invalid, Error, Result};
use crate::graph::CombinatorialGraph;
use crate::linalg::general_eigenvalues;
use crate::weights::{first_non_markovian_row, ToleranceConfig, WeightScheme};

/// Which directed edge of each source group is eliminated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RemovalRule {
    /// Edge with the largest target index.
    #[default]
    Last,
    /// Removed target per vertex; `None` exactly for vertices without neighbours.
    Explicit(Vec<Option<usize>>),
}

impl RemovalRule {
    /// Removes `(i, i + 1 mod n)` from every group.
    pub fn successor(n: usize) -> Self {
        Self::Explicit((0..n).map(|i| Some((i + 1) % n)).collect())
    }
}

/// Enumeration `a_1, ..., a_k` of the directed edges with the essential mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedEdgeIndex {
    n: usize,
    edges: Vec<(usize, usize)>,
    /// `starts[x]..starts[x + 1]` is the group of source `x`.
    starts: Vec<usize>,
    removed: Vec<Option<usize>>,
    essential: Vec<usize>,
    position: Vec<Option<usize>>,
}

impl DirectedEdgeIndex {
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Position in [`Self::edges`] of `(x, y)`.
    pub fn position(&self, x: usize, y: usize) -> Option<usize> {
        self.position[x * self.n + y]
    }

    /// Edge positions of the group of `x`.
    pub fn group(&self, x: usize) -> std::ops::Range<usize> {
        self.starts[x]..self.starts[x + 1]
    }

    /// Position of the eliminated edge of `x`.
    pub fn removed(&self, x: usize) -> Option<usize> {
        self.removed[x]
    }

    /// Positions of the essential edges in enumeration order.
    pub fn essential(&self) -> &[usize] {
        &self.essential
    }

    pub fn essential_edges(&self) -> Vec<(usize, usize)> {
        self.essential.iter().map(|&k| self.edges[k]).collect()
    }

    /// Number `M` of essential edges.
    pub fn m(&self) -> usize {
        self.essential.len()
    }

    pub fn is_essential(&self, k: usize) -> bool {
        self.removed[self.edges[k].0] != Some(k)
    }
}

/// Enumerates the directed edges of `a` and eliminates one per source vertex.
pub fn enumerate_edges(a: &CombinatorialGraph, rule: &RemovalRule) -> Result<DirectedEdgeIndex> {
    let n = a.n();
    if let RemovalRule::Explicit(r) = rule {
        if r.len() != n {
            return Err(invalid(format!("removal rule lists {} vertices, graph has {n}", r.len())));
        }
    }
    let mut edges = Vec::with_capacity(a.directed_edge_count());
    let mut starts = Vec::with_capacity(n + 1);
    let mut position = vec![None; n * n];
    let mut removed = vec![None; n];
    for x in 0..n {
        starts.push(edges.len());
        for y in a.neighbors(x) {
            position[x * n + y] = Some(edges.len());
            edges.push((x, y));
        }
        let group = &edges[starts[x]..];
        removed[x] = match rule {
            RemovalRule::Last => group.last().map(|_| edges.len() - 1),
            RemovalRule::Explicit(r) => match r[x] {
                Some(y) => Some(position[x * n + y].filter(|_| y < n).ok_or_else(|| {
                    invalid(format!("removal rule names ({x},{y}), which is not an edge"))
                })?),
                None if group.is_empty() => None,
                None => return Err(invalid(format!("removal rule leaves vertex {x} without a removed edge"))),
            },
        };
    }
    starts.push(edges.len());
    let essential = (0..edges.len()).filter(|&k| removed[edges[k].0] != Some(k)).collect();
    Ok(DirectedEdgeIndex {
        n,
        edges,
        starts,
        removed,
        essential,
        position,
    })
}

fn check_shapes(a: &CombinatorialGraph, p: &WeightScheme) -> Result<()> {
    if a.n() != p.n() {
        return Err(invalid(format!("graph has {} vertices, scheme has {}", a.n(), p.n())));
    }
    if !a.is_unmixed() {
        return Err(Error::Unsupported("linearization of mixed graphs".into()));
    }
    Ok(())
}

/// Fails unless `p` is a Markovian, curvature sharp scheme on the unmixed graph `a`.
pub fn check_equilibrium(a: &CombinatorialGraph, p: &WeightScheme, tol: &ToleranceConfig) -> Result<()> {
    check_shapes(a, p)?;
    if let Some((row, sum)) = first_non_markovian_row(p, tol.norm_tolerance) {
        return Err(Error::NotAnEquilibrium(format!("row {row} sums to {sum}")));
    }
    let defect = sharpness_defect(a, p)?;
    if defect > tol.threshold {
        return Err(Error::NotAnEquilibrium(format!("sharpness defect {defect:e}")));
    }
    Ok(())
}

/// Matrix `B[j][k] = B_{a_j}(a_k)`: the partial derivative of the flow
/// component `a_j` in the rate `a_k`, with `D_x = 1 - p_xx` held fixed.
///
/// No equilibrium check; see [`jacobian`].
pub fn b_matrix_unchecked(a: &CombinatorialGraph, p: &WeightScheme, idx: &DirectedEdgeIndex) -> DMatrix<f64> {
    let k = idx.edges().len();
    let mut b = DMatrix::zeros(k, k);
    let mut set = |row: usize, u: usize, v: usize, value: f64| {
        if let Some(col) = idx.position(u, v) {
            b[(row, col)] += value;
        }
    };
    let r = |u: usize, v: usize| p.rate(u, v);
    for (j, &(x, y)) in idx.edges().iter().enumerate() {
        let s1: Vec<usize> = a.neighbors(x).collect();
        let d_x = 1.0 - r(x, x);
        if d_x <= 0.0 {
            continue;
        }
        let back: f64 = s1.iter().map(|&v| r(x, v) * r(v, x)).sum();
        let two_step: f64 = s1
            .iter()
            .map(|&v| r(x, v) * s1.iter().map(|&w| r(v, w)).sum::<f64>())
            .sum();
        let out_of = |v: usize| s1.iter().map(|&w| r(v, w)).sum::<f64>();
        let across: f64 = s1.iter().filter(|&&v| v != y).map(|&v| r(y, v)).sum();
        let pxy = r(x, y);

        set(
            j,
            x,
            y,
            -4.0 * r(y, x) - r(y, y) - 2.0 * across
                + (4.0 * pxy * r(y, x) + 4.0 * back + pxy * out_of(y) + two_step) / d_x,
        );
        set(j, y, x, 4.0 * pxy * (pxy / d_x - 1.0));
        for &y1 in s1.iter().filter(|&&v| v != y) {
            let pxy1 = r(x, y1);
            set(j, x, y1, (4.0 * pxy * r(y1, x) + pxy * out_of(y1)) / d_x + r(y1, y));
            set(j, y1, x, 4.0 * pxy * pxy1 / d_x);
            set(j, y, y1, pxy * (pxy / d_x - 2.0));
            set(j, y1, y, pxy1 * (pxy / d_x + 1.0));
            for &y2 in s1.iter().filter(|&&v| v != y && v != y1) {
                set(j, y1, y2, pxy * pxy1 / d_x);
            }
        }
    }
    b
}

/// Reduces `b` to essential coordinates: `DF = P1 B P2` with `P2 = P1^T - P3`.
pub fn reduce(b: &DMatrix<f64>, idx: &DirectedEdgeIndex) -> DMatrix<f64> {
    let k = idx.edges().len();
    let m = idx.m();
    let mut p1 = DMatrix::zeros(m, k);
    let mut p3 = DMatrix::zeros(k, m);
    for (row, &e) in idx.essential().iter().enumerate() {
        p1[(row, e)] = 1.0;
        let removed = idx.removed(idx.edges()[e].0).expect("an essential edge has a removed sibling");
        p3[(removed, row)] = 1.0;
    }
    let p2 = p1.transpose() - p3;
    &p1 * b * p2
}

pub fn b_matrix(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    idx: &DirectedEdgeIndex,
    tol: &ToleranceConfig,
) -> Result<DMatrix<f64>> {
    check_equilibrium(a, p, tol)?;
    Ok(b_matrix_unchecked(a, p, idx))
}

/// Jacobian of the normalized flow at the equilibrium `p` in essential coordinates.
pub fn jacobian(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    idx: &DirectedEdgeIndex,
    tol: &ToleranceConfig,
) -> Result<DMatrix<f64>> {
    Ok(reduce(&b_matrix(a, p, idx, tol)?, idx))
}

/// Stability verdict at a candidate equilibrium. All three values are absent
/// when the scheme is not a curvature sharp Markovian equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReportRepr", into = "ReportRepr")]
pub struct EquilibriumReport {
    /// `-1` asymptotically stable, `0` undecided, `1` unstable.
    pub kind: Option<i8>,
    pub eigenvalues: Option<Vec<Complex<f64>>>,
    pub jacobian: Option<DMatrix<f64>>,
    /// Why the values are absent.
    pub note: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    kind: Option<i8>,
    eigenvalues: Option<Vec<[f64; 2]>>,
    jacobian: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl From<EquilibriumReport> for ReportRepr {
    fn from(r: EquilibriumReport) -> Self {
        Self {
            kind: r.kind,
            eigenvalues: r.eigenvalues.map(|v| v.iter().map(|z| [z.re, z.im]).collect()),
            jacobian: r
                .jacobian
                .map(|j| (0..j.nrows()).map(|i| j.row(i).iter().copied().collect()).collect()),
            note: r.note,
        }
    }
}

impl TryFrom<ReportRepr> for EquilibriumReport {
    type Error = Error;

    fn try_from(r: ReportRepr) -> Result<Self> {
        let jacobian = match r.jacobian {
            None => None,
            Some(rows) => {
                let m = rows.len();
                if rows.iter().any(|row| row.len() != m) {
                    return Err(Error::Parse("jacobian must be square".into()));
                }
                Some(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
            }
        };
        if !matches!(r.kind, None | Some(-1..=1)) {
            return Err(Error::Parse(format!("kind must be -1, 0 or 1, got {:?}", r.kind)));
        }
        Ok(Self {
            kind: r.kind,
            eigenvalues: r.eigenvalues.map(|v| v.iter().map(|&[re, im]| Complex::new(re, im)).collect()),
            jacobian,
            note: r.note,
        })
    }
}

/// Classification by the largest real part; an empty spectrum is stable.
pub fn classify_spectrum(eigenvalues: &[Complex<f64>], threshold: f64) -> i8 {
    let top = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if top >= threshold {
        1
    } else if top <= -threshold {
        -1
    } else {
        0
    }
}

/// Classifies `p` on `a` with the default removal rule.
///
/// Shape mismatches and mixed graphs are errors; a scheme that is not a
/// curvature sharp Markovian equilibrium yields a report of absent values.
pub fn equilibrium_type(
    a: &CombinatorialGraph,
    p: &WeightScheme,
    want_eigenvalues: bool,
    want_jacobian: bool,
    norm_tolerance: f64,
    threshold: f64,
) -> Result<EquilibriumReport> {
    check_shapes(a, p)?;
    let tol = ToleranceConfig {
        norm_tolerance,
        threshold,
        ..ToleranceConfig::default()
    };
    tol.validate()?;
    let idx = enumerate_edges(a, &RemovalRule::Last)?;
    let df = match jacobian(a, p, &idx, &tol) {
        Ok(df) => df,
        Err(Error::NotAnEquilibrium(why)) => {
            return Ok(EquilibriumReport {
                kind: None,
                eigenvalues: None,
                jacobian: None,
                note: Some(why),
            })
        }
        Err(e) => return Err(e),
    };
    let eigenvalues = general_eigenvalues(&df)?;
    Ok(EquilibriumReport {
        kind: Some(classify_spectrum(&eigenvalues, threshold)),
        eigenvalues: want_eigenvalues.then_some(eigenvalues),
        jacobian: want_jacobian.then_some(df),
        note: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::flow::{flow_rhs, k_inf_bounds};
    use crate::graph;
    use crate::linalg::{max_abs, multiset_close, with_multiplicities};
    use crate::weights::srw;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn real(pairs: &[(f64, usize)]) -> Vec<Complex<f64>> {
        with_multiplicities(&pairs.iter().map(|&(v, k)| (Complex::new(v, 0.0), k)).collect::<Vec<_>>())
    }

    fn spectrum(a: &CombinatorialGraph, p: &WeightScheme, rule: &RemovalRule) -> Vec<Complex<f64>> {
        let idx = enumerate_edges(a, rule).unwrap();
        general_eigenvalues(&jacobian(a, p, &idx, &tol()).unwrap()).unwrap()
    }

    #[test]
    fn triangle_enumeration() {
        let a = graph::complete(3).unwrap();
        let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
        assert_eq!(idx.edges(), &[(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        assert_eq!(idx.essential_edges(), vec![(0, 1), (1, 0), (2, 0)]);
    }

    #[test]
    fn essential_count_formula() {
        let p2 = enumerate_edges(&graph::path(2).unwrap(), &RemovalRule::Last).unwrap();
        assert_eq!(p2.m(), 0);
        for n in 3..9 {
            let idx = enumerate_edges(&graph::cycle(n).unwrap(), &RemovalRule::Last).unwrap();
            assert_eq!(idx.m(), n);
        }
        let (a, _) = fixtures::wedge_k4_k5_k2_k3();
        let mut lonely = a.rows();
        lonely.push(vec![0; 12]);
        for row in lonely.iter_mut().take(11) {
            row.push(0);
        }
        let a = CombinatorialGraph::from_rows(&lonely).unwrap();
        let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
        assert_eq!(idx.m(), 2 * a.undirected_edge_count() - 11);
        assert!(idx.group(11).is_empty());
        assert_eq!(idx.removed(11), None);
    }

    #[test]
    fn explicit_rule_validated() {
        let a = graph::cycle(4).unwrap();
        assert!(enumerate_edges(&a, &RemovalRule::Explicit(vec![Some(2), Some(2), Some(3), Some(0)])).is_err());
        assert!(enumerate_edges(&a, &RemovalRule::Explicit(vec![None, Some(2), Some(3), Some(0)])).is_err());
        assert!(enumerate_edges(&a, &RemovalRule::Explicit(vec![Some(1)])).is_err());
        let idx = enumerate_edges(&a, &RemovalRule::successor(4)).unwrap();
        assert_eq!(idx.essential_edges(), vec![(0, 3), (1, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn cycle_coefficients_at_half() {
        let a = graph::cycle(6).unwrap();
        let p = srw(&a, false);
        let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
        let b = b_matrix(&a, &p, &idx, &tol()).unwrap();
        let (i, j) = (2, 1);
        let row = idx.position(i, j).unwrap();
        assert!((b[(row, idx.position(i, j).unwrap())] - 1.0).abs() < 1e-15);
        assert!((b[(row, idx.position(j, i).unwrap())] + 1.0).abs() < 1e-15);
        assert!((b[(row, idx.position(i, 3).unwrap())] - 1.0).abs() < 1e-15);
        assert!((b[(row, idx.position(3, i).unwrap())] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_jacobian() {
        let a = graph::complete(3).unwrap();
        let report = equilibrium_type(&a, &srw(&a, false), true, true, 1e-3, 1e-3).unwrap();
        assert_eq!(report.kind, Some(-1));
        assert!(multiset_close(
            report.eigenvalues.as_ref().unwrap(),
            &real(&[(-0.5, 1), (-1.25, 2)]),
            1e-12
        ));
    }

    #[test]
    fn k4_jacobian_matches_reference_matrix() {
        let t = 1.0 / 3.0;
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(8, 8, &[
            -1.0, 0.0, -t, 0.0, t, t, t, t,
            0.0, -1.0, t, t, -t, 0.0, 0.0, -t,
            -t, 0.0, -1.0, 0.0, t, t, t, t,
            t, t, 0.0, -1.0, 0.0, -t, -t, 0.0,
            0.0, -t, t, t, -1.0, 0.0, 0.0, -t,
            t, t, 0.0, -t, 0.0, -1.0, -t, 0.0,
            t, t, 0.0, -t, 0.0, -t, -1.0, 0.0,
            0.0, -t, t, t, -t, 0.0, 0.0, -1.0,
        ]);
        let a = graph::complete(4).unwrap();
        let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
        let df = jacobian(&a, &srw(&a, false), &idx, &tol()).unwrap();
        assert!(max_abs(&(&df - &expected)) < 1e-12, "{df}");
    }

    #[test]
    fn complete_graph_spectra() {
        for n in 2..=7_usize {
            let a = graph::complete(n + 1).unwrap();
            let nf = n as f64;
            let c2 = n * (n - 1) / 2;
            let expected = real(&[
                (-(nf - 1.0) / nf, c2),
                (-(nf + 3.0) / (nf * nf), n),
                (-(nf + 3.0) / nf, c2 - 1),
            ]);
            let got = spectrum(&a, &srw(&a, false), &RemovalRule::Last);
            assert!(multiset_close(&got, &expected, 1e-6), "n={n}: {got:?}");
        }
    }

    #[test]
    fn cycle_srw_is_adjacency() {
        for n in 4..10 {
            let a = graph::cycle(n).unwrap();
            let idx = enumerate_edges(&a, &RemovalRule::successor(n)).unwrap();
            let df = jacobian(&a, &srw(&a, false), &idx, &tol()).unwrap();
            let adj = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(a.has_edge(i, j))));
            assert!(max_abs(&(&df - &adj)) < 1e-12, "n={n}: {df}");
            let r = equilibrium_type(&a, &srw(&a, false), false, false, 1e-3, 1e-3).unwrap();
            assert_eq!(r.kind, Some(1));
        }
    }

    #[test]
    fn clockwise_cycle_is_minus_four() {
        for n in 4..10 {
            let a = graph::cycle(n).unwrap();
            let p = fixtures::clockwise_cycle(n);
            let idx = enumerate_edges(&a, &RemovalRule::successor(n)).unwrap();
            let df = jacobian(&a, &p, &idx, &tol()).unwrap();
            assert!(max_abs(&(&df + DMatrix::identity(n, n) * 4.0)) < 1e-12, "n={n}: {df}");
        }
    }

    #[test]
    fn elimination_rule_invariance() {
        let cases: Vec<(CombinatorialGraph, WeightScheme)> = (4..8)
            .flat_map(|n| {
                let a = graph::cycle(n).unwrap();
                let s = srw(&a, false);
                [(a.clone(), s), (a, fixtures::clockwise_cycle(n))]
            })
            .collect();
        for (a, p) in cases {
            let n = a.n();
            let x = spectrum(&a, &p, &RemovalRule::Last);
            let y = spectrum(&a, &p, &RemovalRule::successor(n));
            assert!(multiset_close(&x, &y, 1e-8), "{x:?} vs {y:?}");
        }
        let a = fixtures::octahedron();
        let p = fixtures::octahedron_degenerate_equilibrium();
        let first = RemovalRule::Explicit((0..6).map(|x| a.neighbors(x).next()).collect());
        assert!(multiset_close(
            &spectrum(&a, &p, &RemovalRule::Last),
            &spectrum(&a, &p, &first),
            1e-8
        ));
    }

    #[test]
    fn octahedron_spectra() {
        let a = fixtures::octahedron();
        let c = |re, im| Complex::new(re, im);
        let degenerate = with_multiplicities(&[
            (c(-1.0, 0.0), 2),
            (c(-1.0, 1.0), 2),
            (c(-1.0, -1.0), 2),
            (c(-2.0, 0.0), 2),
            (c(-2.0, 1.0), 2),
            (c(-2.0, -1.0), 2),
            (c(-3.0, 0.0), 2),
            (c(-4.0, 0.0), 4),
        ]);
        let r = equilibrium_type(&a, &fixtures::octahedron_degenerate_equilibrium(), true, false, 1e-3, 1e-3).unwrap();
        assert_eq!(r.kind, Some(-1));
        assert!(multiset_close(r.eigenvalues.as_ref().unwrap(), &degenerate, 1e-6), "{:?}", r.eigenvalues);

        let r = equilibrium_type(&a, &srw(&a, false), true, false, 1e-3, 1e-3).unwrap();
        assert_eq!(r.kind, Some(1));
        let expected = real(&[(0.5, 3), (0.0, 3), (-0.75, 2), (-1.0, 6), (-1.5, 4)]);
        assert!(multiset_close(r.eigenvalues.as_ref().unwrap(), &expected, 1e-6), "{:?}", r.eigenvalues);
    }

    #[test]
    fn hypercube_largest_eigenvalue() {
        for d in 2..=6 {
            let a = graph::hypercube(d).unwrap();
            let ev = spectrum(&a, &srw(&a, false), &RemovalRule::Last);
            assert_eq!(ev.len(), (d - 1) * (1 << d));
            assert!(ev.iter().all(|z| z.im.abs() < 1e-6), "d={d}");
            let top = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            assert!((top - 4.0 / d as f64).abs() < 1e-6, "d={d}: {top}");
        }
    }

    #[test]
    fn square_family_has_zero_pair() {
        let a = graph::hypercube(2).unwrap();
        for p in [0.2, 0.35, 0.7] {
            let q = 1.0 - p;
            let s = WeightScheme::from_rows(&[
                vec![0.0, p, q, 0.0],
                vec![p, 0.0, 0.0, q],
                vec![p, 0.0, 0.0, q],
                vec![0.0, p, q, 0.0],
            ])
            .unwrap();
            let r = equilibrium_type(&a, &s, true, false, 1e-3, 1e-3).unwrap();
            let ev = r.eigenvalues.unwrap();
            assert_eq!(ev.len(), 4);
            let zeros = ev.iter().filter(|z| z.norm() < 1e-8).count();
            assert_eq!(zeros, 2, "p={p}: {ev:?}");
            let rest: Vec<f64> = ev.iter().filter(|z| z.norm() >= 1e-8).map(|z| z.re).collect();
            assert!((rest[0] + rest[1]).abs() < 1e-8 && rest[0].abs() > 1e-3, "p={p}: {ev:?}");
            assert_eq!(r.kind, Some(1));
        }
    }

    /// Central differences of the normalized flow along essential coordinates.
    fn finite_difference(a: &CombinatorialGraph, p: &WeightScheme, idx: &DirectedEdgeIndex, h: f64) -> DMatrix<f64> {
        let m = idx.m();
        let eval = |k: usize, sign: f64| {
            let e = idx.essential()[k];
            let (x, y) = idx.edges()[e];
            let (_, z) = idx.edges()[idx.removed(x).unwrap()];
            let mut mat = p.matrix().clone();
            mat[(x, y)] += sign * h;
            mat[(x, z)] -= sign * h;
            let q = WeightScheme::from_matrix(mat).unwrap();
            let c = k_inf_bounds(a, &q, 1e-3).unwrap();
            flow_rhs(a, &q, &c).unwrap()
        };
        let mut df = DMatrix::zeros(m, m);
        for k in 0..m {
            let d = (eval(k, 1.0) - eval(k, -1.0)) / (2.0 * h);
            for (row, &e) in idx.essential().iter().enumerate() {
                let (x, y) = idx.edges()[e];
                df[(row, k)] = d[(x, y)];
            }
        }
        df
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for a in [graph::complete(3).unwrap(), graph::cycle(4).unwrap()] {
            let p = srw(&a, false);
            for rule in [RemovalRule::Last, RemovalRule::successor(a.n())] {
                let idx = enumerate_edges(&a, &rule).unwrap();
                let df = jacobian(&a, &p, &idx, &tol()).unwrap();
                let fd = finite_difference(&a, &p, &idx, 1e-6);
                assert!(max_abs(&(&df - &fd)) < 1e-4, "{df}\n{fd}");
            }
        }
    }

    #[test]
    fn lazy_equilibria_match_finite_differences() {
        for (a, lazy) in [(graph::complete(4).unwrap(), 0.3), (graph::cycle(5).unwrap(), 0.2)] {
            let n = a.n();
            let deg = a.degree(0) as f64;
            let p = WeightScheme::from_matrix(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    lazy
                } else if a.has_edge(i, j) {
                    (1.0 - lazy) / deg
                } else {
                    0.0
                }
            }))
            .unwrap();
            let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
            let df = jacobian(&a, &p, &idx, &tol()).unwrap();
            let fd = finite_difference(&a, &p, &idx, 1e-6);
            assert!(max_abs(&(&df - &fd)) < 1e-4, "{df}\n{fd}");
        }
    }

    /// Complete-graph coefficients shifted per source so the `(y, y')` and
    /// `(y', y'')` terms vanish.
    fn b_prime(p: &WeightScheme, idx: &DirectedEdgeIndex) -> DMatrix<f64> {
        let k = idx.edges().len();
        let n = p.n();
        let r = |u: usize, v: usize| p.rate(u, v);
        let mut b = DMatrix::zeros(k, k);
        for (j, &(x, y)) in idx.edges().iter().enumerate() {
            let d_x = 1.0 - r(x, x);
            let others: Vec<usize> = (0..n).filter(|&v| v != x).collect();
            let out_of = |v: usize| others.iter().map(|&w| r(v, w)).sum::<f64>();
            let back: f64 = others.iter().map(|&v| r(x, v) * r(v, x)).sum();
            let two_step: f64 = others.iter().map(|&v| r(x, v) * out_of(v)).sum();
            let across: f64 = others.iter().filter(|&&v| v != y).map(|&v| r(y, v)).sum();
            let pxy = r(x, y);
            let mut set = |u, v, value| b[(j, idx.position(u, v).unwrap())] = value;
            set(
                x,
                y,
                -4.0 * r(y, x) - r(y, y) - 2.0 * across
                    + (4.0 * pxy * r(y, x) + 4.0 * back + pxy * out_of(y) + two_step) / d_x,
            );
            set(y, x, pxy * (3.0 * pxy / d_x - 2.0));
            for &y1 in others.iter().filter(|&&v| v != y) {
                set(x, y1, (4.0 * pxy * r(y1, x) + pxy * out_of(y1)) / d_x + r(y1, y));
                set(y1, x, 3.0 * pxy * r(x, y1) / d_x);
                set(y1, y, r(x, y1));
            }
        }
        b
    }

    #[test]
    fn shifted_coefficients_give_same_spectrum() {
        for n in 3..=6 {
            let a = graph::complete(n).unwrap();
            let p = srw(&a, false);
            let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
            let x = general_eigenvalues(&jacobian(&a, &p, &idx, &tol()).unwrap()).unwrap();
            let y = general_eigenvalues(&reduce(&b_prime(&p, &idx), &idx)).unwrap();
            assert!(multiset_close(&x, &y, 1e-8), "n={n}");
        }
        // shifted triangle matrix: -1 on the diagonal, 1/4 off it after flipping the sign of q_10
        let a = graph::complete(3).unwrap();
        let idx = enumerate_edges(&a, &RemovalRule::Last).unwrap();
        let df = reduce(&b_prime(&srw(&a, false), &idx), &idx);
        let flip = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, 1.0]));
        let expected = DMatrix::from_fn(3, 3, |i, j| if i == j { -1.0 } else { 0.25 });
        assert!(max_abs(&(&flip * &df * &flip - &expected)) < 1e-12, "{df}");
    }

    #[test]
    fn equilibria_are_stationary() {
        let cases = vec![
            (graph::complete(5).unwrap(), None),
            (graph::cycle(6).unwrap(), None),
            (graph::hypercube(3).unwrap(), None),
            (fixtures::octahedron(), Some(fixtures::octahedron_degenerate_equilibrium())),
            (graph::cycle(7).unwrap(), Some(fixtures::clockwise_cycle(7))),
        ];
        for (a, p) in cases {
            let p = p.unwrap_or_else(|| srw(&a, false));
            let r = equilibrium_type(&a, &p, false, false, 1e-3, 1e-3).unwrap();
            assert!(r.kind.is_some());
            let c = k_inf_bounds(&a, &p, 1e-3).unwrap();
            assert!(max_abs(&flow_rhs(&a, &p, &c).unwrap()) <= 10.0 * 1e-3);
        }
    }

    #[test]
    fn non_equilibrium_reports_absent_values() {
        let (a, p) = fixtures::degenerate_k6();
        let r = equilibrium_type(&a, &p, true, true, 1e-3, 1e-3).unwrap();
        assert_eq!((r.kind, r.eigenvalues.is_none(), r.jacobian.is_none()), (None, true, true));
        assert!(r.note.is_some());
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["kind"], serde_json::Value::Null);
        assert_eq!(json["eigenvalues"], serde_json::Value::Null);

        let mut rows = a.rows();
        rows[0][1] = 0;
        let mixed = CombinatorialGraph::from_rows(&rows).unwrap();
        assert!(matches!(
            equilibrium_type(&mixed, &srw(&mixed, false), true, true, 1e-3, 1e-3),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn spectra_come_in_conjugate_pairs() {
        let a = fixtures::octahedron();
        let ev = spectrum(&a, &fixtures::octahedron_degenerate_equilibrium(), &RemovalRule::Last);
        let conj: Vec<_> = ev.iter().map(|z| z.conj()).collect();
        assert!(multiset_close(&ev, &conj, 1e-8));
    }

    #[test]
    fn report_json_round_trip() {
        let a = graph::complete(3).unwrap();
        let r = equilibrium_type(&a, &srw(&a, false), true, true, 1e-3, 1e-3).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], -1);
        assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 3);
        assert_eq!(v["jacobian"].as_array().unwrap().len(), 3);
        assert!(v.get("note").is_none());
        let back: EquilibriumReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<EquilibriumReport>(r#"{"kind":3,"eigenvalues":null,"jacobian":null}"#).is_err());
    }

    #[test]
    fn classification_thresholds() {
        let z = |re| [Complex::new(re, 0.0)];
        assert_eq!(classify_spectrum(&z(1e-3), 1e-3), 1);
        assert_eq!(classify_spectrum(&z(-1e-3), 1e-3), -1);
        assert_eq!(classify_spectrum(&z(1e-4), 1e-3), 0);
        assert_eq!(classify_spectrum(&[], 1e-3), -1);
    }
}
