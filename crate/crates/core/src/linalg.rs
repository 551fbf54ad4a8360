//! Small dense helpers on top of nalgebra.

use nalgebra::SymmetricEigen;

use crate::error::{Result, TbssError};
use crate::tensor::Matrix;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// non-increasing order. Each eigenvector column is sign-normalized so that
/// its largest-magnitude entry is positive.
pub fn sym_eigen_desc(m: &Matrix) -> (Vec<f64>, Matrix) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_column_signs(&mut vectors);
    (values, vectors)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn largest_magnitude_sign<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let mut best = 0.0_f64;
    for &v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

pub fn canonicalize_column_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        if largest_magnitude_sign(col.iter()) < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn canonicalize_row_signs(m: &mut Matrix) {
    for mut row in m.row_iter_mut() {
        if largest_magnitude_sign(row.iter()) < 0.0 {
            row.neg_mut();
        }
    }
}

pub fn inverse(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(TbssError::Shape(format!(
            "cannot invert a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| TbssError::Shape("matrix is singular".into()))
}

/// Largest absolute deviation of `v'v` from the identity.
pub fn orthogonality_error(v: &Matrix) -> f64 {
    let g = v.transpose() * v;
    let eye = Matrix::identity(g.nrows(), g.ncols());
    (g - eye).amax()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).amax()
}
