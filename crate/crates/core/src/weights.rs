//! Weighting schemes (transition-rate matrices) over combinatorial graphs.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{connected_under, CombinatorialGraph};
use crate::rng::seeded_rng;

/// Attempts per vertex before [`randomizer`] gives up on its threshold constraint.
pub const RANDOMIZER_RETRIES: usize = 1000;

/// Numerical cutoffs shared by classification, normalization and limit detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Rates below this are numerically zero for reporting and degeneracy tests.
    pub threshold: f64,
    /// Allowed deviation of a row sum from 1.
    pub norm_tolerance: f64,
    /// Entrywise tolerance of the flow-limit criterion.
    pub lim_tolerance: f64,
    /// Rates at or below this are treated as absent when building distance spheres.
    pub support_eps: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            norm_tolerance: 1e-3,
            lim_tolerance: 1e-3,
            support_eps: 0.0,
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("threshold", self.threshold),
            ("norm_tolerance", self.norm_tolerance),
            ("lim_tolerance", self.lim_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.support_eps >= 0.0 && self.support_eps.is_finite()) {
            return Err(invalid(format!("support_eps must be >= 0, got {}", self.support_eps)));
        }
        Ok(())
    }
}

/// Dense matrix of nonnegative transition rates `p_xy`; the diagonal holds laziness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemeRepr", into = "SchemeRepr")]
pub struct WeightScheme {
    p: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct SchemeRepr {
    n: usize,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
}

impl TryFrom<SchemeRepr> for WeightScheme {
    type Error = Error;

    fn try_from(r: SchemeRepr) -> Result<Self> {
        if r.p.len() != r.n {
            return Err(invalid(format!("P has {} rows, expected {}", r.p.len(), r.n)));
        }
        WeightScheme::from_rows(&r.p)
    }
}

impl From<WeightScheme> for SchemeRepr {
    fn from(s: WeightScheme) -> Self {
        SchemeRepr {
            n: s.n(),
            p: s.rows(),
        }
    }
}

impl WeightScheme {
    /// Wraps a square matrix with nonnegative finite entries.
    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(invalid(format!("rate matrix must be square and nonempty, got {}x{}", p.nrows(), p.ncols())));
        }
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                let v = p[(i, j)];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid(format!("rate p[{i}][{j}] = {v} is not a nonnegative number")));
                }
            }
        }
        Ok(Self { p })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(invalid(format!("row {i} has length {}, expected {n}", r.len())));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Like [`from_matrix`](Self::from_matrix), additionally checking that
    /// off-diagonal positive rates sit on edges of `graph`.
    pub fn on_graph(graph: &CombinatorialGraph, p: DMatrix<f64>) -> Result<Self> {
        let s = Self::from_matrix(p)?;
        s.check_support(graph)?;
        Ok(s)
    }

    pub fn check_support(&self, graph: &CombinatorialGraph) -> Result<()> {
        if graph.n() != self.n() {
            return Err(invalid(format!(
                "scheme has {} vertices, graph has {}",
                self.n(),
                graph.n()
            )));
        }
        for x in 0..self.n() {
            for y in 0..self.n() {
                if x != y && self.p[(x, y)] > 0.0 && !graph.has_edge(x, y) {
                    return Err(invalid(format!("positive rate p[{x}][{y}] on a non-edge")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn from_matrix_unchecked(p: DMatrix<f64>) -> Self {
        Self { p }
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    #[inline]
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.p[(x, y)]
    }

    pub fn laziness(&self, x: usize) -> f64 {
        self.p[(x, x)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p
    }

    pub fn row_sum(&self, x: usize) -> f64 {
        self.p.row(x).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.p.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Random Markovian scheme with every edge rate (and laziness, if requested) at least `threshold`.
///
/// Each row draws uniform values in `[threshold, 1]` and rescales them to sum to
/// one, redrawing when rescaling pushes a value below `threshold`. Isolated
/// vertices get a zero row, with laziness 1 when `laziness` is set.
pub fn randomizer(
    a: &CombinatorialGraph,
    threshold: f64,
    laziness: bool,
    seed: u64,
) -> Result<WeightScheme> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid(format!("threshold {threshold} must lie in (0, 1]")));
    }
    let n = a.n();
    let mut rng = seeded_rng(seed);
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let nbrs: Vec<usize> = a.neighbors(x).collect();
        if nbrs.is_empty() {
            if laziness {
                p[(x, x)] = 1.0;
            }
            continue;
        }
        let slots = nbrs.len() + usize::from(laziness);
        if slots as f64 * threshold > 1.0 {
            return Err(Error::InfeasibleThreshold {
                vertex: x,
                degree: nbrs.len(),
                threshold,
            });
        }
        let mut draw = vec![0.0; slots];
        let mut ok = false;
        for _ in 0..RANDOMIZER_RETRIES {
            for v in draw.iter_mut() {
                *v = rng.gen_range(threshold..=1.0);
            }
            let total: f64 = draw.iter().sum();
            draw.iter_mut().for_each(|v| *v /= total);
            if draw.iter().all(|&v| v >= threshold) {
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(Error::RetryLimit {
                what: format!("rates above threshold {threshold} at vertex {x}"),
                attempts: RANDOMIZER_RETRIES,
            });
        }
        for (k, &y) in nbrs.iter().enumerate() {
            p[(x, y)] = draw[k];
        }
        if laziness {
            p[(x, x)] = draw[slots - 1];
        }
    }
    Ok(WeightScheme::from_matrix_unchecked(p))
}

/// Simple random walk: `1/deg(x)` on edges, or `1/(deg(x)+1)` on edges and diagonal when lazy.
pub fn srw(a: &CombinatorialGraph, laziness: bool) -> WeightScheme {
    let n = a.n();
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let d = a.degree(x);
        if d == 0 {
            if laziness {
                p[(x, x)] = 1.0;
            }
            continue;
        }
        let r = if laziness { 1.0 / (d + 1) as f64 } else { 1.0 / d as f64 };
        for y in a.neighbors(x) {
            p[(x, y)] = r;
        }
        if laziness {
            p[(x, x)] = r;
        }
    }
    WeightScheme::from_matrix_unchecked(p)
}

/// `p * (P ⊗ I_m) + q * (I_n ⊗ Q)`, flattened like [`crate::graph::cart_prod`].
pub fn cart_prod_prob(pm: &WeightScheme, qm: &WeightScheme, p: f64, q: f64) -> Result<WeightScheme> {
    if p < 0.0 || q < 0.0 || (p + q - 1.0).abs() > ToleranceConfig::default().norm_tolerance {
        return Err(invalid(format!("weights must be nonnegative with p + q = 1, got {p} + {q}")));
    }
    let (n, m) = (pm.n(), qm.n());
    let left = pm.p.kronecker(&DMatrix::<f64>::identity(m, m)) * p;
    let right = DMatrix::<f64>::identity(n, n).kronecker(&qm.p) * q;
    Ok(WeightScheme::from_matrix_unchecked(left + right))
}

pub fn is_markovian(p: &WeightScheme, norm_tolerance: f64) -> bool {
    first_non_markovian_row(p, norm_tolerance).is_none()
}

pub(crate) fn first_non_markovian_row(p: &WeightScheme, norm_tolerance: f64) -> Option<(usize, f64)> {
    (0..p.n())
        .map(|x| (x, p.row_sum(x)))
        .find(|(_, s)| (s - 1.0).abs() > norm_tolerance)
}

pub(crate) fn require_markovian(p: &WeightScheme, norm_tolerance: f64) -> Result<()> {
    match first_non_markovian_row(p, norm_tolerance) {
        Some((row, sum)) => Err(Error::NotMarkovian { row, sum }),
        None => Ok(()),
    }
}

/// True when no two-sided edge carries rates `>= threshold` in both directions.
pub fn is_totally_degenerate(a: &CombinatorialGraph, p: &WeightScheme, threshold: f64) -> Result<bool> {
    if !a.is_unmixed() {
        return Err(Error::Unsupported("total degeneracy is defined for unmixed graphs".into()));
    }
    let n = a.n();
    for x in 0..n {
        for y in x + 1..n {
            if a.has_edge(x, y) && p.rate(x, y) >= threshold && p.rate(y, x) >= threshold {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Connectivity of the symmetrized support `{x, y}` with `p_xy >= threshold` or `p_yx >= threshold`.
pub fn is_weakly_connected(p: &WeightScheme, threshold: f64) -> bool {
    connected_under(p.n(), |x, y| x != y && (p.rate(x, y) >= threshold || p.rate(y, x) >= threshold))
}

/// Rescales each row's off-diagonal entries so the row sums to one; the diagonal is untouched.
///
/// Rows without off-diagonal mass are left alone (isolated vertices).
pub fn stochastic_correction(p: &WeightScheme) -> WeightScheme {
    let mut m = p.p.clone();
    for x in 0..m.nrows() {
        let off = m.row(x).sum() - m[(x, x)];
        if off > 0.0 {
            let scale = (1.0 - m[(x, x)]).max(0.0) / off;
            for y in 0..m.ncols() {
                if y != x {
                    m[(x, y)] *= scale;
                }
            }
        }
    }
    WeightScheme::from_matrix_unchecked(m)
}

/// [`stochastic_correction`] that rejects rows of non-isolated vertices which
/// have no off-diagonal mass left but are not fully lazy.
pub fn stochastic_correction_on(a: &CombinatorialGraph, p: &WeightScheme) -> Result<WeightScheme> {
    for x in 0..p.n() {
        let off = p.row_sum(x) - p.laziness(x);
        if a.degree(x) > 0 && off <= 0.0 && p.laziness(x) < 1.0 {
            return Err(Error::UncorrectableRow { row: x });
        }
    }
    Ok(stochastic_correction(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::{complete, cycle, hypercube, cart_prod, rand_adj_mat};

    fn min_positive(p: &WeightScheme) -> f64 {
        p.matrix().iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn randomizer_single_neighbor() {
        let p = randomizer(&complete(2).unwrap(), 1e-3, false, 9).unwrap();
        assert_eq!(p.rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn randomizer_postconditions() {
        for seed in 0..20 {
            let a = rand_adj_mat(10, 0.7, false, seed).unwrap();
            let p = randomizer(&a, 1e-3, false, seed + 100).unwrap();
            assert!(is_markovian(&p, 1e-12) || (0..10).any(|x| a.degree(x) == 0));
            assert!(min_positive(&p) >= 1e-3);
            assert!((0..10).all(|x| p.laziness(x) == 0.0));
            p.check_support(&a).unwrap();

            let lazy = randomizer(&a, 1e-3, true, seed).unwrap();
            assert!(is_markovian(&lazy, 1e-12));
            assert!((0..10).all(|x| lazy.laziness(x) >= 1e-3));
        }
    }

    #[test]
    fn randomizer_infeasible() {
        let err = randomizer(&complete(5).unwrap(), 0.3, false, 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleThreshold { degree: 4, .. }));
    }

    #[test]
    fn srw_values() {
        let p = srw(&complete(3).unwrap(), false);
        assert!((p.rate(0, 1) - 0.5).abs() < 1e-15);
        let g = cart_prod(&complete(3).unwrap(), &complete(4).unwrap());
        let p = srw(&g, false);
        for (x, y) in g.directed_edges() {
            assert!((p.rate(x, y) - 0.2).abs() < 1e-15);
        }
        let p = srw(&hypercube(2).unwrap(), true);
        assert!((p.laziness(0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.rate(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!(is_markovian(&p, 1e-12));
    }

    #[test]
    fn isolated_rows() {
        let g = CombinatorialGraph::empty(2).unwrap();
        assert_eq!(srw(&g, false).rows(), vec![vec![0.0; 2]; 2]);
        assert_eq!(srw(&g, true).rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(!is_markovian(&srw(&g, false), 1e-3));
    }

    #[test]
    fn cart_prod_prob_matches_srw() {
        for (n, m) in [(2usize, 3usize), (1, 4), (3, 3)] {
            let kn = complete(n + 1).unwrap();
            let km = complete(m + 1).unwrap();
            let (pn, pm) = (srw(&kn, false), srw(&km, false));
            let w = n as f64 / (n + m) as f64;
            let prod = cart_prod_prob(&pn, &pm, w, 1.0 - w).unwrap();
            let expected = srw(&cart_prod(&kn, &km), false);
            // independent double-loop oracle over product coordinates
            let (a, b) = (n + 1, m + 1);
            for i in 0..a {
                for j in 0..b {
                    for i2 in 0..a {
                        for j2 in 0..b {
                            let mut v = 0.0;
                            if j == j2 {
                                v += w * pn.rate(i, i2);
                            }
                            if i == i2 {
                                v += (1.0 - w) * pm.rate(j, j2);
                            }
                            let (u, u2) = (i * b + j, i2 * b + j2);
                            assert!((prod.rate(u, u2) - v).abs() < 1e-15);
                            assert!((prod.rate(u, u2) - expected.rate(u, u2)).abs() < 1e-15);
                        }
                    }
                }
            }
            assert!(is_markovian(&prod, 1e-12));
        }
        let p = srw(&complete(3).unwrap(), false);
        let q = srw(&cycle(4).unwrap(), false);
        assert!(cart_prod_prob(&p, &q, 0.7, 0.7).is_err());
        let only_p = cart_prod_prob(&p, &q, 1.0, 0.0).unwrap();
        let expect = p.matrix().kronecker(&DMatrix::<f64>::identity(4, 4));
        assert_eq!(only_p.matrix(), &expect);
    }

    #[test]
    fn degeneracy_and_connectivity() {
        let c = cycle(12).unwrap();
        let clockwise = fixtures::clockwise_cycle(12);
        assert!(is_totally_degenerate(&c, &clockwise, 1e-3).unwrap());
        assert!(!is_totally_degenerate(&c, &srw(&c, false), 1e-3).unwrap());
        assert!(is_weakly_connected(&clockwise, 1e-3));
        assert!(is_weakly_connected(&srw(&c, false), 1e-3));

        let mut mixed = c.rows();
        mixed[0][1] = 0;
        let mixed = CombinatorialGraph::from_rows(&mixed).unwrap();
        assert!(is_totally_degenerate(&mixed, &clockwise, 1e-3).is_err());

        let block = WeightScheme::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(!is_weakly_connected(&block, 1e-3));
    }

    #[test]
    fn reference_fixtures_are_markovian() {
        let (_, p) = fixtures::random_graph_example();
        assert!(is_markovian(&p, 1e-3));
        let (_, p) = fixtures::degenerate_k6();
        assert!(is_markovian(&p, 1e-12));
    }

    #[test]
    fn correction_examples() {
        let p = WeightScheme::from_rows(&[
            vec![0.0, 0.5, 0.52],
            vec![0.2, 0.5, 0.4],
            vec![0.5, 0.5, 0.0],
        ])
        .unwrap();
        let c = stochastic_correction(&p);
        assert!((c.rate(0, 1) - 0.5 / 1.02).abs() < 1e-15);
        assert!((c.rate(0, 2) - 0.52 / 1.02).abs() < 1e-15);
        assert_eq!(c.laziness(1), 0.5);
        assert!((c.rate(1, 0) - 0.2 * 0.5 / 0.6).abs() < 1e-15);
        assert_eq!(c.rows()[2], p.rows()[2]);
        let again = stochastic_correction(&c);
        assert!((again.matrix() - c.matrix()).abs().max() < 1e-15);

        let lazy = WeightScheme::from_rows(&[vec![0.2, 0.45, 0.45], vec![0.5, 0.0, 0.5], vec![0.5, 0.5, 0.0]]).unwrap();
        let c = stochastic_correction(&lazy);
        assert!((c.rate(0, 1) - 0.45 * 0.8 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn correction_rejects_dead_rows() {
        let g = complete(2).unwrap();
        let p = WeightScheme::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(stochastic_correction_on(&g, &p), Err(Error::UncorrectableRow { row: 0 })));
    }

    #[test]
    fn support_validation() {
        let g = crate::graph::path(3).unwrap();
        let bad = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(WeightScheme::on_graph(&g, bad).is_err());
        assert!(WeightScheme::from_rows(&[vec![-0.1]]).is_err());
    }

    #[test]
    fn tolerance_defaults() {
        let t = ToleranceConfig::default();
        assert_eq!((t.threshold, t.norm_tolerance, t.lim_tolerance, t.support_eps), (1e-3, 1e-3, 1e-3, 0.0));
        t.validate().unwrap();
        assert!(ToleranceConfig { threshold: 0.0, ..t }.validate().is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let p = randomizer(&complete(5).unwrap(), 1e-3, true, 77).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"P\""));
        let back: WeightScheme = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
