//! Reference graphs and weighting schemes used by the regression and acceptance suites.

use nalgebra::DMatrix;

use crate::graph::{self, CombinatorialGraph};
use crate::weights::WeightScheme;

const RANDOM_TEN: [[f64; 10]; 10] = [
    [0.0, 0.1, 0.08, 0.17, 0.0, 0.28, 0.21, 0.08, 0.0, 0.08],
    [0.08, 0.0, 0.0, 0.16, 0.0, 0.2, 0.07, 0.3, 0.04, 0.15],
    [0.27, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.43],
    [0.02, 0.19, 0.0, 0.0, 0.17, 0.17, 0.11, 0.34, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.04, 0.21, 0.0, 0.41, 0.0, 0.0, 0.34, 0.0, 0.0, 0.0],
    [0.06, 0.29, 0.14, 0.12, 0.0, 0.3, 0.0, 0.09, 0.0, 0.0],
    [0.08, 0.31, 0.0, 0.19, 0.0, 0.0, 0.23, 0.0, 0.19, 0.0],
    [0.0, 0.13, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25, 0.0, 0.62],
    [0.1, 0.33, 0.38, 0.0, 0.0, 0.0, 0.0, 0.0, 0.19, 0.0],
];

const DEGENERATE_K6: [[f64; 6]; 6] = [
    [0.0, 0.2, 0.1, 0.2, 0.0, 0.5],
    [0.1, 0.0, 0.3, 0.25, 0.25, 0.1],
    [0.2, 0.0, 0.0, 0.3, 0.15, 0.35],
    [0.3, 0.5, 0.1, 0.0, 0.1, 0.0],
    [0.2, 0.3, 0.3, 0.2, 0.0, 0.0],
    [0.6, 0.1, 0.1, 0.2, 0.0, 0.0],
];

const OCTAHEDRON_PERTURBED: [[f64; 6]; 6] = [
    [0.0, 0.26, 0.0, 0.24, 0.25, 0.25],
    [0.25, 0.0, 0.25, 0.0, 0.25, 0.25],
    [0.0, 0.25, 0.0, 0.25, 0.25, 0.25],
    [0.25, 0.0, 0.25, 0.0, 0.25, 0.25],
    [0.25, 0.25, 0.25, 0.25, 0.0, 0.0],
    [0.25, 0.25, 0.25, 0.25, 0.0, 0.0],
];

fn scheme<const N: usize>(rows: &[[f64; N]; N]) -> WeightScheme {
    WeightScheme::from_matrix(DMatrix::from_fn(N, N, |i, j| rows[i][j])).expect("fixture rates are valid")
}

/// Graph whose edges are the (symmetrized) support of `p`.
pub fn support_graph(p: &WeightScheme) -> CombinatorialGraph {
    let n = p.n();
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| u8::from(i != j && (p.rate(i, j) > 0.0 || p.rate(j, i) > 0.0)))
                .collect()
        })
        .collect();
    CombinatorialGraph::from_rows(&rows).expect("support graph is simple")
}

/// Ten-vertex random Markovian graph with its initial scheme.
pub fn random_graph_example() -> (CombinatorialGraph, WeightScheme) {
    let p = scheme(&RANDOM_TEN);
    (support_graph(&p), p)
}

/// Degenerate initial scheme on `K_6` (four degenerate edges, `{v4, v5}` two-sided).
pub fn degenerate_k6() -> (CombinatorialGraph, WeightScheme) {
    (graph::complete(6).expect("K6"), scheme(&DEGENERATE_K6))
}

/// Octahedron: `v0 v1 v2 v3` form the equatorial 4-cycle, `v4` and `v5` are the poles.
pub fn octahedron() -> CombinatorialGraph {
    let rows = vec![
        vec![0, 1, 0, 1, 1, 1],
        vec![1, 0, 1, 0, 1, 1],
        vec![0, 1, 0, 1, 1, 1],
        vec![1, 0, 1, 0, 1, 1],
        vec![1, 1, 1, 1, 0, 0],
        vec![1, 1, 1, 1, 0, 0],
    ];
    CombinatorialGraph::from_rows(&rows).expect("octahedron")
}

/// Small perturbation of the simple random walk on the octahedron.
pub fn octahedron_perturbed() -> WeightScheme {
    scheme(&OCTAHEDRON_PERTURBED)
}

/// Totally degenerate curvature sharp octahedron scheme: oriented equator with
/// rates 1, poles sending 1/4 to each equator vertex.
pub fn octahedron_degenerate_equilibrium() -> WeightScheme {
    let q = 0.25;
    scheme(&[
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [q, q, q, q, 0.0, 0.0],
        [q, q, q, q, 0.0, 0.0],
    ])
}

/// Totally degenerate cycle scheme with `p_{i,i-1} = 1`.
pub fn clockwise_cycle(n: usize) -> WeightScheme {
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, (i + n - 1) % n)] = 1.0;
    }
    WeightScheme::from_matrix(p).expect("clockwise cycle")
}

/// Two-sided rates `(p_{i,i+1}, p_{i+1,i})` of the twelve-vertex path scheme.
///
/// Rows 1 and 5 are completed so they sum to one: `p_{1,2} = 0.25` and `p_{5,6} = 0.19`.
const PATH_TWELVE: [(f64, f64); 11] = [
    (1.0, 0.75),
    (0.25, 0.28),
    (0.72, 0.54),
    (0.46, 0.77),
    (0.23, 0.81),
    (0.19, 0.16),
    (0.84, 0.29),
    (0.71, 0.38),
    (0.62, 0.1),
    (0.9, 0.45),
    (0.55, 1.0),
];

/// Non-degenerate Markovian scheme on `path(12)`.
pub fn path_twelve() -> (CombinatorialGraph, WeightScheme) {
    let mut p = DMatrix::zeros(12, 12);
    for (i, &(fwd, back)) in PATH_TWELVE.iter().enumerate() {
        p[(i, i + 1)] = fwd;
        p[(i + 1, i)] = back;
    }
    (graph::path(12).expect("path"), WeightScheme::from_matrix(p).expect("path scheme"))
}

/// Wedge sum `K4 v K5 v K2 v K3`; clique vertex sets are returned alongside.
pub fn wedge_k4_k5_k2_k3() -> (CombinatorialGraph, Vec<(String, Vec<usize>)>) {
    let k = |n| graph::complete(n).expect("complete");
    let a1 = graph::wedge_sum(&k(4), &k(5), 2, 1).expect("wedge");
    let a2 = graph::wedge_sum(&a1, &k(2), 6, 0).expect("wedge");
    let a = graph::wedge_sum(&a2, &k(3), 8, 0).expect("wedge");
    let components = vec![
        ("K4".to_string(), vec![0, 1, 2, 3]),
        ("K5".to_string(), vec![2, 4, 5, 6, 7]),
        ("K2".to_string(), vec![6, 8]),
        ("K3".to_string(), vec![8, 9, 10]),
    ];
    (a, components)
}

/// Two copies of `K5` joined by a bridge between their vertices 0.
pub fn dumbbell() -> (CombinatorialGraph, Vec<(String, Vec<usize>)>) {
    let k5 = graph::complete(5).expect("K5");
    let a = graph::bridge_at(&k5, &k5, 0, 0).expect("bridge");
    let components = vec![
        ("K5a".to_string(), vec![0, 1, 2, 3, 4]),
        ("K2".to_string(), vec![0, 5]),
        ("K5b".to_string(), vec![5, 6, 7, 8, 9]),
    ];
    (a, components)
}
