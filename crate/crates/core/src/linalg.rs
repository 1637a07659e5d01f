//! Small-dense-matrix helpers: eigenpairs of nonsymmetric real matrices,
//! singular values, and linear solves. Everything here operates on matrices
//! of latent-support size, so robustness beats asymptotics.

use nalgebra::{DMatrix, DVector};

/// Smallest singular value (0 for an empty matrix).
pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0f64, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

/// Eigenvalues of a real square matrix as (re, im) pairs, unordered.
pub fn complex_eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

/// Eigenvector for a (real, simple) eigenvalue: the right singular vector of
/// `a - lambda I` belonging to its smallest singular value.
///
/// For well-separated eigenvalues the null direction is resolved to roughly
/// machine precision over the eigenvalue gap, which is ample at this scale.
pub fn eigenvector_for(a: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = a.nrows();
    let shifted = a - DMatrix::<f64>::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut min_idx = 0;
    let mut min_sv = f64::INFINITY;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s < min_sv {
            min_sv = *s;
            min_idx = i;
        }
    }
    v_t.row(min_idx).transpose()
}

/// Solve `a x = b` for each column of `b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().lu().solve(b)
}
