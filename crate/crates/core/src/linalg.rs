//! Small dense helpers shared by the optimizer and the objectives.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// `P <- (P + P^T) / 2`
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().iter().copied().collect()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ratio of the largest to the smallest absolute eigenvalue.
pub fn eigenvalue_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = sym_eigenvalues(m);
    let hi = eig.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let lo = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    Cholesky::new(m.clone())
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}
