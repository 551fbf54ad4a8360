//! Dense real tensors and mode-m algebra.
//!
//! Tensors are stored row-major over the index tuple `(i1, ..., ir)`, i.e. the
//! last index varies fastest. Modes are 0-based throughout the library API.
//!
//! The m-mode matricization uses the cyclical column order: column indices run
//! lexicographically over `(i_{m+1}, ..., i_r, i_1, ..., i_{m-1})` with
//! `i_{m+1}` slowest, so that
//!
//! ```text
//! (X x_1 A_1 ... x_r A_r)^(m) = A_m X^(m) (A_{m+1} ⊗ ... ⊗ A_r ⊗ A_1 ⊗ ... ⊗ A_{m-1})'
//! ```
//!
//! `vectorize` stacks the columns of the 1-mode matricization, which for
//! matrices is the usual column-stacking `vec`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TbssError};
use crate::moments::MatrixSample;

pub type Matrix = DMatrix<f64>;

/// A dense real tensor of order `r >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let rho: usize = dims.iter().product();
        if rho != data.len() {
            return Err(TbssError::Shape(format!(
                "dims {dims:?} need {rho} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let rho = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![0.0; rho],
        })
    }

    /// Builds an order-2 tensor from a matrix.
    pub fn from_matrix(m: &Matrix) -> Self {
        let (p, q) = m.shape();
        let mut data = Vec::with_capacity(p * q);
        for i in 0..p {
            for j in 0..q {
                data.push(m[(i, j)]);
            }
        }
        Self {
            dims: vec![p, q],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[linear_index(&self.dims, index)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(TbssError::Shape("tensor order must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(TbssError::Shape(format!(
            "zero-length dimension in {dims:?}"
        )));
    }
    Ok(())
}

/// Row-major linear index of a multi-index.
pub fn linear_index(dims: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), index.len());
    index.iter().zip(dims).fold(0, |acc, (&i, &d)| {
        debug_assert!(i < d);
        acc * d + i
    })
}

/// Inverse of [`linear_index`].
pub fn multi_index(dims: &[usize], mut linear: usize) -> Vec<usize> {
    let mut index = vec![0; dims.len()];
    for (slot, &d) in index.iter_mut().zip(dims).rev() {
        *slot = linear % d;
        linear /= d;
    }
    index
}

/// Splits the dims around mode `m` into `(prefix size, p_m, suffix size)`.
fn split_at_mode(dims: &[usize], m: usize) -> Result<(usize, usize, usize)> {
    if m >= dims.len() {
        return Err(TbssError::InvalidMode {
            mode: m,
            order: dims.len(),
        });
    }
    let pre = dims[..m].iter().product();
    let post = dims[m + 1..].iter().product();
    Ok((pre, dims[m], post))
}

fn mode_multiply_into(src: &[f64], pre: usize, p: usize, post: usize, a: &Matrix, dst: &mut [f64]) {
    let q = a.nrows();
    for ia in 0..pre {
        for ib in 0..post {
            for j in 0..q {
                let mut acc = 0.0;
                for i in 0..p {
                    acc += a[(j, i)] * src[(ia * p + i) * post + ib];
                }
                dst[(ia * q + j) * post + ib] = acc;
            }
        }
    }
}

fn check_conformable(dims: &[usize], m: usize, a: &Matrix) -> Result<(usize, usize, usize)> {
    let (pre, p, post) = split_at_mode(dims, m)?;
    if a.ncols() != p {
        return Err(TbssError::Shape(format!(
            "mode {m} has length {p} but the matrix has {} columns",
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Err(TbssError::Shape("multiplier has no rows".into()));
    }
    Ok((pre, p, post))
}

/// m-mode multiplication `x ×_m a`: every m-mode vector is left-multiplied by `a`.
pub fn m_mode_multiply(x: &Tensor, m: usize, a: &Matrix) -> Result<Tensor> {
    let (pre, p, post) = check_conformable(&x.dims, m, a)?;
    let mut dims = x.dims.clone();
    dims[m] = a.nrows();
    let mut data = vec![0.0; pre * a.nrows() * post];
    mode_multiply_into(&x.data, pre, p, post, a, &mut data);
    Ok(Tensor { dims, data })
}

fn matricize_into(src: &[f64], pre: usize, p: usize, post: usize, dst: &mut [f64]) {
    // Column index is b * pre + a; dst is column-major p x (pre * post).
    for ia in 0..pre {
        for i in 0..p {
            for ib in 0..post {
                dst[(ib * pre + ia) * p + i] = src[(ia * p + i) * post + ib];
            }
        }
    }
}

fn dematricize_into(src: &[f64], pre: usize, p: usize, post: usize, dst: &mut [f64]) {
    for ia in 0..pre {
        for i in 0..p {
            for ib in 0..post {
                dst[(ia * p + i) * post + ib] = src[(ib * pre + ia) * p + i];
            }
        }
    }
}

/// Cyclical m-mode matricization, `p_m x (rho / p_m)`.
pub fn matricize(x: &Tensor, m: usize) -> Result<Matrix> {
    let (pre, p, post) = split_at_mode(&x.dims, m)?;
    let mut buf = vec![0.0; x.len()];
    matricize_into(&x.data, pre, p, post, &mut buf);
    Ok(Matrix::from_vec(p, pre * post, buf))
}

/// Inverse of [`matricize`] for the given target dims.
pub fn dematricize(mat: &Matrix, dims: &[usize], m: usize) -> Result<Tensor> {
    let (pre, p, post) = split_at_mode(dims, m)?;
    if mat.nrows() != p || mat.ncols() != pre * post {
        return Err(TbssError::Shape(format!(
            "{}x{} matrix cannot fold into dims {dims:?} at mode {m}",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let mut data = vec![0.0; p * pre * post];
    dematricize_into(mat.as_slice(), pre, p, post, &mut data);
    Ok(Tensor {
        dims: dims.to_vec(),
        data,
    })
}

/// Stacks the columns of the 1-mode matricization.
pub fn vectorize(x: &Tensor) -> DVector<f64> {
    let p = x.dims[0];
    let post = x.len() / p;
    let mut out = vec![0.0; x.len()];
    matricize_into(&x.data, 1, p, post, &mut out);
    DVector::from_vec(out)
}

pub fn devectorize(v: &DVector<f64>, dims: &[usize]) -> Result<Tensor> {
    validate_dims(dims)?;
    let rho: usize = dims.iter().product();
    if v.len() != rho {
        return Err(TbssError::Shape(format!(
            "vector of length {} cannot fold into dims {dims:?}",
            v.len()
        )));
    }
    let p = dims[0];
    let mut data = vec![0.0; rho];
    dematricize_into(v.as_slice(), 1, p, rho / p, &mut data);
    Ok(Tensor {
        dims: dims.to_vec(),
        data,
    })
}

pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Kronecker product of per-mode matrices in the order matching [`vectorize`]:
/// `A_2 ⊗ ... ⊗ A_r ⊗ A_1`, so that `vec(X ×_1 A_1 ... ×_r A_r) = K vec(X)`.
pub fn vec_kronecker(mats: &[Matrix]) -> Result<Matrix> {
    let (first, rest) = mats
        .split_first()
        .ok_or_else(|| TbssError::Shape("no matrices to combine".into()))?;
    let mut acc: Option<Matrix> = None;
    for m in rest {
        acc = Some(match acc {
            None => m.clone(),
            Some(k) => k.kronecker(m),
        });
    }
    Ok(match acc {
        None => first.clone(),
        Some(k) => k.kronecker(first),
    })
}

/// `n` i.i.d. tensors of a common shape, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSample {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl TensorSample {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let rho: usize = dims.iter().product();
        if data.is_empty() || data.len() % rho != 0 {
            return Err(TbssError::Shape(format!(
                "{} values do not form whole observations of dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let first = tensors
            .first()
            .ok_or(TbssError::InsufficientSample { needed: 1, got: 0 })?;
        let mut data = Vec::with_capacity(first.len() * tensors.len());
        for t in tensors {
            if t.dims != first.dims {
                return Err(TbssError::Shape(format!(
                    "observation dims {:?} differ from {:?}",
                    t.dims, first.dims
                )));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            dims: first.dims.clone(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of elements per observation.
    pub fn rho(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.rho()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        let rho = self.rho();
        &self.data[t * rho..(t + 1) * rho]
    }

    pub fn tensor(&self, t: usize) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.observation(t).to_vec(),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rho())
    }

    /// Applies `×_m a` to every observation.
    pub fn mode_multiply(&self, m: usize, a: &Matrix) -> Result<TensorSample> {
        let (pre, p, post) = check_conformable(&self.dims, m, a)?;
        let out_rho = pre * a.nrows() * post;
        let mut data = vec![0.0; out_rho * self.n()];
        for (src, dst) in self.observations().zip(data.chunks_exact_mut(out_rho)) {
            mode_multiply_into(src, pre, p, post, a, dst);
        }
        let mut dims = self.dims.clone();
        dims[m] = a.nrows();
        Ok(TensorSample { dims, data })
    }

    /// Applies `×_m a_m` for every mode.
    pub fn multiply_all(&self, mats: &[Matrix]) -> Result<TensorSample> {
        if mats.len() != self.order() {
            return Err(TbssError::Shape(format!(
                "{} matrices for a tensor of order {}",
                mats.len(),
                self.order()
            )));
        }
        let mut out = self.clone();
        for (m, a) in mats.iter().enumerate() {
            out = out.mode_multiply(m, a)?;
        }
        Ok(out)
    }

    /// m-mode matricization of every observation.
    pub fn matricize(&self, m: usize) -> Result<MatrixSample> {
        let (pre, p, post) = split_at_mode(&self.dims, m)?;
        let rho = self.rho();
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.observations().zip(data.chunks_exact_mut(rho)) {
            matricize_into(src, pre, p, post, dst);
        }
        MatrixSample::new(p, pre * post, data)
    }

    /// Folds a matrix sample back into tensors with these dims at mode `m`.
    pub fn from_matricized(s: &MatrixSample, dims: &[usize], m: usize) -> Result<TensorSample> {
        let (pre, p, post) = split_at_mode(dims, m)?;
        if s.p() != p || s.q() != pre * post {
            return Err(TbssError::Shape(format!(
                "{}x{} observations cannot fold into dims {dims:?} at mode {m}",
                s.p(),
                s.q()
            )));
        }
        let rho = p * pre * post;
        let mut data = vec![0.0; s.data().len()];
        for (src, dst) in s.data().chunks_exact(rho).zip(data.chunks_exact_mut(rho)) {
            dematricize_into(src, pre, p, post, dst);
        }
        TensorSample::new(dims.to_vec(), data)
    }

    /// Each observation flattened by [`vectorize`], as an order-1 sample.
    pub fn vectorized(&self) -> TensorSample {
        let p = self.dims[0];
        let rho = self.rho();
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.observations().zip(data.chunks_exact_mut(rho)) {
            matricize_into(src, 1, p, rho / p, dst);
        }
        TensorSample {
            dims: vec![rho],
            data,
        }
    }

    /// Subtracts the sample mean tensor.
    pub fn centered(&self) -> TensorSample {
        let rho = self.rho();
        let n = self.n() as f64;
        let mut mean = vec![0.0; rho];
        for obs in self.observations() {
            for (m, v) in mean.iter_mut().zip(obs) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut data = self.data.clone();
        for obs in data.chunks_exact_mut(rho) {
            for (v, m) in obs.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        TensorSample {
            dims: self.dims.clone(),
            data,
        }
    }

    /// Reorders observations; used by permutation-invariance tests.
    pub fn permuted(&self, order: &[usize]) -> Result<TensorSample> {
        if order.len() != self.n() {
            return Err(TbssError::Shape("permutation length differs from n".into()));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &t in order {
            data.extend_from_slice(self.observation(t));
        }
        Ok(TensorSample {
            dims: self.dims.clone(),
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(dims: &[usize]) -> Tensor {
        let rho: usize = dims.iter().product();
        Tensor::new(
            dims.to_vec(),
            (0..rho)
                .map(|v| (v as f64).sin() + 0.1 * v as f64)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_multiplication_is_noop() {
        let x = seq_tensor(&[2, 3, 4]);
        for m in 0..3 {
            let y = m_mode_multiply(&x, m, &Matrix::identity(x.dims()[m], x.dims()[m])).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn row_swap_on_matrix() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let y = m_mode_multiply(&x, 0, &a).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn matrix_matricizations() {
        let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Tensor::from_matrix(&m);
        assert_eq!(matricize(&x, 0).unwrap(), m);
        assert_eq!(matricize(&x, 1).unwrap(), m.transpose());
    }

    #[test]
    fn vectorize_stacks_columns() {
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(vectorize(&x).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn kronecker_small_cases() {
        let k = kronecker(&Matrix::identity(2, 2), &Matrix::identity(3, 3));
        assert_eq!(k, Matrix::identity(6, 6));
        let a = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = Matrix::from_row_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(
            kronecker(&a, &b),
            Matrix::from_row_slice(2, 2, &[3.0, 6.0, 4.0, 8.0])
        );
    }

    #[test]
    fn invalid_mode_and_shape_errors() {
        let x = seq_tensor(&[2, 3]);
        assert!(matches!(
            matricize(&x, 2),
            Err(TbssError::InvalidMode { .. })
        ));
        let bad = Matrix::identity(2, 2);
        assert!(matches!(
            m_mode_multiply(&x, 1, &bad),
            Err(TbssError::Shape(_))
        ));
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    #[test]
    fn multi_index_round_trip() {
        let dims = [2, 3, 4];
        for l in 0..24 {
            assert_eq!(linear_index(&dims, &multi_index(&dims, l)), l);
        }
    }

    #[test]
    fn sample_matricize_round_trip() {
        let dims = vec![2, 3, 4];
        let data: Vec<f64> = (0..72).map(|v| v as f64 * 0.5).collect();
        let s = TensorSample::new(dims.clone(), data).unwrap();
        for m in 0..3 {
            let ms = s.matricize(m).unwrap();
            let back = TensorSample::from_matricized(&ms, &dims, m).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn centered_sample_has_zero_mean() {
        let s = TensorSample::new(vec![2], vec![1.0, 5.0, 3.0, 7.0]).unwrap();
        let c = s.centered();
        assert_eq!(c.data(), &[-1.0, -1.0, 1.0, 1.0]);
    }
}
