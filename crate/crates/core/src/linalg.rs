//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudoinverses.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Symmetric part `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Moore-Penrose pseudoinverse of a symmetric matrix. Eigenvalues with
/// `|lambda| <= cutoff * max|lambda|` are treated as zero.
pub fn pinv_symmetric(a: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    if top == 0.0 {
        return out;
    }
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff * top {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Eigenvalues of a symmetric matrix in increasing order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Smallest eigenvalue of a symmetric matrix; `+inf` for the empty matrix.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

/// Eigenvalues of a general real square matrix, sorted by real then imaginary part.
///
/// Uses faer's nonsymmetric solver, which converges on the highly degenerate
/// spectra of symmetric equilibria.
pub fn general_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let mut v = m
        .eigenvalues()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    v.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));
    Ok(v)
}

/// Whether two multisets of complex numbers coincide up to `tol`, matching
/// each element of `actual` to a distinct nearest element of `expected`.
pub fn multiset_close(actual: &[Complex<f64>], expected: &[Complex<f64>], tol: f64) -> bool {
    if actual.len() != expected.len() {
        return false;
    }
    let mut used = vec![false; expected.len()];
    for a in actual {
        let best = expected
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, e)| (k, (a - e).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1));
        match best {
            Some((k, d)) if d <= tol => used[k] = true,
            _ => return false,
        }
    }
    true
}

/// Expands `(value, multiplicity)` pairs into a multiset.
pub fn with_multiplicities(pairs: &[(Complex<f64>, usize)]) -> Vec<Complex<f64>> {
    pairs.iter().flat_map(|&(v, k)| std::iter::repeat_n(v, k)).collect()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
