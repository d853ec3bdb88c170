//! Small dense helpers shared by the rotation, solver and baseline code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Sample covariance of the rows of `x` about `mean`, divided by `divisor`.
pub(crate) fn covariance(x: &DMatrix<f64>, mean: &DVector<f64>, divisor: f64) -> DMatrix<f64> {
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered;
    cov /= divisor;
    // symmetrize away rounding
    let t = cov.transpose();
    (cov + t) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Each eigenvector is signed so that its
/// largest-magnitude entry is positive (first such entry on ties).
pub(crate) fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (k, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut v);
        vectors.set_column(k, &v);
    }
    (values, vectors)
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() + 1e-12 {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Symmetric square root of a symmetric positive-definite matrix.
pub(crate) fn sym_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let q = &eig.eigenvectors;
    let r = q * s * q.transpose();
    let t = r.transpose();
    Some((r + t) * 0.5)
}

pub(crate) fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
