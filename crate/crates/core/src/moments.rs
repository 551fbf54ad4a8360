//! Second- and fourth-moment functionals of matrix samples.
//!
//! All estimators divide by `n`. Fourth-order quantities are built from the
//! per-observation scatter `M_t = X_t X_t'`.

use nalgebra::DMatrixView;

use crate::error::{Result, TbssError};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::tensor::Matrix;

/// Observations per block when accumulating sums with matrix products.
/// Fixed so that the reduction order, and therefore every output bit, does
/// not depend on anything but the input.
const CHUNK: usize = 1024;

/// `n` observed `p x q` matrices, each stored column-major and contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSample {
    p: usize,
    q: usize,
    data: Vec<f64>,
}

impl MatrixSample {
    pub fn new(p: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(TbssError::Shape(format!(
                "invalid observation shape {p}x{q}"
            )));
        }
        if data.is_empty() || data.len() % (p * q) != 0 {
            return Err(TbssError::Shape(format!(
                "{} values do not form whole {p}x{q} observations",
                data.len()
            )));
        }
        Ok(Self { p, q, data })
    }

    pub fn from_matrices(mats: &[Matrix]) -> Result<Self> {
        let first = mats
            .first()
            .ok_or(TbssError::InsufficientSample { needed: 1, got: 0 })?;
        let (p, q) = first.shape();
        let mut data = Vec::with_capacity(p * q * mats.len());
        for m in mats {
            if m.shape() != (p, q) {
                return Err(TbssError::Shape(format!(
                    "observation shape {:?} differs from {:?}",
                    m.shape(),
                    (p, q)
                )));
            }
            data.extend_from_slice(m.as_slice());
        }
        Self::new(p, q, data)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.data.len() / (self.p * self.q)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn obs(&self, t: usize) -> DMatrixView<'_, f64> {
        let pq = self.p * self.q;
        DMatrixView::from_slice(&self.data[t * pq..(t + 1) * pq], self.p, self.q)
    }

    pub fn iter(&self) -> impl Iterator<Item = DMatrixView<'_, f64>> + '_ {
        let (p, q) = (self.p, self.q);
        self.data
            .chunks_exact(p * q)
            .map(move |c| DMatrixView::from_slice(c, p, q))
    }

    pub fn to_matrices(&self) -> Vec<Matrix> {
        self.iter().map(|v| v.into_owned()).collect()
    }

    pub fn transposed(&self) -> MatrixSample {
        let mut data = Vec::with_capacity(self.data.len());
        for x in self.iter() {
            data.extend_from_slice(x.transpose().as_slice());
        }
        MatrixSample {
            p: self.q,
            q: self.p,
            data,
        }
    }

    /// Left-multiplies every observation by `a`.
    pub fn left_multiply(&self, a: &Matrix) -> Result<MatrixSample> {
        self.transform(Some(a), None)
    }

    /// `X_t -> left X_t right'` for every observation.
    pub fn transform(&self, left: Option<&Matrix>, right: Option<&Matrix>) -> Result<MatrixSample> {
        let p_out = left.map_or(self.p, |l| l.nrows());
        let q_out = right.map_or(self.q, |r| r.nrows());
        if left.is_some_and(|l| l.ncols() != self.p) || right.is_some_and(|r| r.ncols() != self.q) {
            return Err(TbssError::Shape(
                "transform does not conform to the sample".into(),
            ));
        }
        let mut data = Vec::with_capacity(p_out * q_out * self.n());
        for x in self.iter() {
            let y = match (left, right) {
                (Some(l), Some(r)) => l * x * r.transpose(),
                (Some(l), None) => l * x,
                (None, Some(r)) => x * r.transpose(),
                (None, None) => x.into_owned(),
            };
            data.extend_from_slice(y.as_slice());
        }
        MatrixSample::new(p_out, q_out, data)
    }

    pub fn mean(&self) -> Matrix {
        let mut mean = Matrix::zeros(self.p, self.q);
        for x in self.iter() {
            mean += x;
        }
        mean / self.n() as f64
    }
}

pub fn center(s: &MatrixSample) -> Result<MatrixSample> {
    if s.n() < 2 {
        return Err(TbssError::InsufficientSample {
            needed: 2,
            got: s.n(),
        });
    }
    let mean = s.mean();
    let mut data = s.data.clone();
    for obs in data.chunks_exact_mut(s.p * s.q) {
        for (v, m) in obs.iter_mut().zip(mean.as_slice()) {
            *v -= m;
        }
    }
    MatrixSample::new(s.p, s.q, data)
}

/// `(1 / (n q)) Σ X_t X_t'`.
pub fn left_cov(s: &MatrixSample) -> Matrix {
    let (p, q) = (s.p, s.q);
    let mut acc = Matrix::zeros(p, p);
    for block in s.data.chunks(CHUNK * p * q) {
        let w = DMatrixView::from_slice(block, p, block.len() / p);
        acc += w * w.transpose();
    }
    symmetrize(&acc) / (s.n() * q) as f64
}

/// `(1 / (n p)) Σ X_t' X_t`.
pub fn right_cov(s: &MatrixSample) -> Matrix {
    let mut acc = Matrix::zeros(s.q, s.q);
    for x in s.iter() {
        acc.gemm_tr(1.0, &x, &x, 1.0);
    }
    symmetrize(&acc) / (s.n() * s.p) as f64
}

/// Relative eigenvalue threshold below which a covariance counts as singular.
pub const SPD_RELATIVE_EPS: f64 = 1e-12;

/// Unique symmetric inverse square root of a symmetric positive-definite matrix.
pub fn sym_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    if !m.is_square() {
        return Err(TbssError::Shape(format!(
            "covariance must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (values, vectors) = sym_eigen_desc(m);
    let largest = values[0];
    let smallest = *values.last().unwrap();
    let threshold = SPD_RELATIVE_EPS * largest.max(0.0);
    if !(smallest > threshold) {
        return Err(TbssError::SingularCovariance {
            eigenvalue: smallest,
            threshold,
        });
    }
    let mut scaled = vectors.clone();
    for (mut col, &lambda) in scaled.column_iter_mut().zip(&values) {
        col /= lambda.sqrt();
    }
    Ok(symmetrize(&(scaled * vectors.transpose())))
}

/// Symmetric whitening matrices `(Σ1^{-1/2}, Σ2^{-1/2})` of a sample.
///
/// The right covariance is taken after left whitening, so a `q = 1` sample
/// comes out with identity left covariance.
pub fn whitening_pair(s: &MatrixSample) -> Result<(Matrix, Matrix)> {
    let left = sym_inv_sqrt(&left_cov(s))?;
    let right = sym_inv_sqrt(&right_cov(&s.transform(Some(&left), None)?))?;
    Ok((left, right))
}

/// `X_t -> Σ1^{-1/2} X_t Σ2^{-1/2}` with both covariances taken from `s`.
pub fn standardize(s: &MatrixSample) -> Result<MatrixSample> {
    let (left, right) = whitening_pair(s)?;
    s.transform(Some(&left), Some(&right))
}

fn scatter(x: &DMatrixView<'_, f64>) -> Matrix {
    x * x.transpose()
}

/// `B = (1 / (n q)) Σ X_t X_t' X_t X_t'`.
pub fn fobi_matrix(s: &MatrixSample) -> Matrix {
    let mut acc = Matrix::zeros(s.p, s.p);
    for x in s.iter() {
        if s.q < s.p {
            let g = x.transpose() * x;
            acc += x * g * x.transpose();
        } else {
            let m = scatter(&x);
            acc += &m * &m;
        }
    }
    symmetrize(&acc) / (s.n() * s.q) as f64
}

/// `Σ1 (δ_ij q I + E^ij + E^ji) Σ1'`.
fn cumulant_correction(sigma: &Matrix, q: usize, i: usize, j: usize) -> Matrix {
    let si = sigma.column(i);
    let sj = sigma.column(j);
    let mut c = si * sj.transpose() + sj * si.transpose();
    if i == j {
        c += sigma * sigma.transpose() * q as f64;
    }
    c
}

/// A single cumulant matrix `C^ij`, evaluated directly from its definition.
pub fn cumulant_matrix(s: &MatrixSample, i: usize, j: usize) -> Result<Matrix> {
    for idx in [i, j] {
        if idx >= s.p {
            return Err(TbssError::IndexOutOfRange {
                index: idx,
                dim: s.p,
            });
        }
    }
    let mut acc = Matrix::zeros(s.p, s.p);
    for x in s.iter() {
        let m = scatter(&x);
        acc += &m * m[(i, j)];
    }
    acc /= (s.n() * s.q) as f64;
    let sigma = left_cov(s);
    Ok(symmetrize(&(acc - cumulant_correction(&sigma, s.q, i, j))))
}

/// The banded family `{C^ij : |i - j| < k}`. Each unordered pair is stored
/// once; `C^ji` is served by the same matrix.
#[derive(Debug, Clone)]
pub struct CumulantSet {
    p: usize,
    band: usize,
    pairs: Vec<(usize, usize)>,
    matrices: Vec<Matrix>,
    tau2_estimate: f64,
}

impl CumulantSet {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn band(&self) -> usize {
        self.band
    }

    /// Distinct pairs `(i, j)` with `i <= j`, in lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    /// Number of distinct matrices computed.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Number of ordered `(i, j)` slots covered, counting mirrored pairs.
    pub fn slot_count(&self) -> usize {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { 1 } else { 2 })
            .sum()
    }

    /// Multiplicity of each stored matrix in the ordered-pair sum.
    pub fn weight(&self, idx: usize) -> f64 {
        let (i, j) = self.pairs[idx];
        if i == j {
            1.0
        } else {
            2.0
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Matrix> {
        let key = (i.min(j), i.max(j));
        self.pairs
            .binary_search(&key)
            .ok()
            .map(|idx| &self.matrices[idx])
    }

    /// Estimate of `τ²` from `trace(Σ1) / p`.
    pub fn tau2_estimate(&self) -> f64 {
        self.tau2_estimate
    }
}

fn band_pairs(p: usize, k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..p {
        for j in i..p.min(i + k) {
            pairs.push((i, j));
        }
    }
    pairs
}

fn tri_index(p: usize, a: usize, b: usize) -> usize {
    // Row-wise packed upper triangle, a <= b.
    a * p - a * (a + 1) / 2 + b
}

/// Computes all `C^ij` with `|i - j| < k` in one pass over the observations.
///
/// For each block of observations the upper triangles of `M_t` are packed
/// into the rows of a `block x p(p+1)/2` matrix `Y`; the banded entries
/// `M_t[i, j]` form the columns of `W`, and `W'Y` accumulates every
/// `Σ_t M_t[i, j] M_t` at once.
const GRAM_TILE: usize = 96;

/// Adds the upper block triangle of `Y'Y` to `acc`, tile by tile.
fn accumulate_gram_upper(acc: &mut Matrix, y: &Matrix) {
    let m = y.ncols();
    for r0 in (0..m).step_by(GRAM_TILE) {
        let h = GRAM_TILE.min(m - r0);
        let left = y.columns(r0, h);
        for c0 in (r0..m).step_by(GRAM_TILE) {
            let w = GRAM_TILE.min(m - c0);
            acc.view_mut((r0, c0), (h, w))
                .gemm_tr(1.0, &left, &y.columns(c0, w), 1.0);
        }
    }
}

pub fn cumulant_set(s: &MatrixSample, k: usize) -> Result<CumulantSet> {
    let p = s.p;
    if k == 0 || k > p {
        return Err(TbssError::InvalidBand { k, p });
    }
    let pairs = band_pairs(p, k);
    let tri = p * (p + 1) / 2;
    let cols: Vec<usize> = pairs.iter().map(|&(i, j)| tri_index(p, i, j)).collect();

    let mut acc = Matrix::zeros(pairs.len(), tri);
    // With the full band the pairs are every triangle entry in order, and the
    // product is a symmetric Gram matrix.
    let full = k == p;
    let n = s.n();
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let mut y = Matrix::zeros(len, tri);
        for r in 0..len {
            let x = s.obs(start + r);
            let m = scatter(&x);
            let mut c = 0;
            for a in 0..p {
                for b in a..p {
                    y[(r, c)] = m[(a, b)];
                    c += 1;
                }
            }
        }
        if full {
            accumulate_gram_upper(&mut acc, &y);
        } else {
            let w = y.select_columns(&cols);
            acc.gemm_tr(1.0, &w, &y, 1.0);
        }
        start += len;
    }
    if full {
        acc.fill_lower_triangle_with_upper_triangle();
    }
    acc /= (n * s.q) as f64;

    let sigma = left_cov(s);
    let matrices = pairs
        .iter()
        .enumerate()
        .map(|(row, &(i, j))| {
            let mut m = Matrix::zeros(p, p);
            for a in 0..p {
                for b in a..p {
                    let v = acc[(row, tri_index(p, a, b))];
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
            m - cumulant_correction(&sigma, s.q, i, j)
        })
        .map(|m| symmetrize(&m))
        .collect();

    Ok(CumulantSet {
        p,
        band: k,
        pairs,
        matrices,
        tau2_estimate: sigma.trace() / p as f64,
    })
}

/// Row means of the element-wise excess kurtoses, estimated from the
/// row norms: for a row `z_i` of independent standardized entries,
/// `E[‖z_i‖⁴] / q = q + 2 + κ_i`. The estimate is scale-free per row and
/// unaffected by orthogonal transforms acting on the columns.
pub fn row_kurtosis_means(s: &MatrixSample) -> Vec<f64> {
    let (p, q) = (s.p, s.q);
    let mut second = vec![0.0; p];
    let mut fourth = vec![0.0; p];
    for x in s.iter() {
        for (i, row) in x.row_iter().enumerate() {
            let norm2 = row.norm_squared();
            second[i] += norm2;
            fourth[i] += norm2 * norm2;
        }
    }
    let n = s.n() as f64;
    let qf = q as f64;
    second
        .iter()
        .zip(&fourth)
        .map(|(&m2, &m4)| {
            let var = m2 / (n * qf);
            if var <= 0.0 {
                return 0.0;
            }
            m4 / (n * qf) / (var * var) - qf - 2.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(p: usize, q: usize, vals: &[f64]) -> MatrixSample {
        MatrixSample::new(p, q, vals.to_vec()).unwrap()
    }

    #[test]
    fn center_scalar_pair() {
        let s = sample(1, 1, &[1.0, 3.0]);
        assert_eq!(center(&s).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn center_constant_sample_is_zero() {
        let s = sample(2, 1, &[1.5, -2.0, 1.5, -2.0, 1.5, -2.0]);
        assert!(center(&s).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn center_needs_two_observations() {
        let s = sample(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            center(&s),
            Err(TbssError::InsufficientSample { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn left_cov_duplicated_observation() {
        // X = [[2, 0], [0, 0]] stored column-major.
        let s = sample(2, 2, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let c = left_cov(&s);
        assert_eq!(c, Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn sym_inv_sqrt_diagonal() {
        let m = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 9.0]));
        let s = sym_inv_sqrt(&m).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((s[(1, 1)] - 1.0 / 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);
        assert_eq!(
            sym_inv_sqrt(&Matrix::identity(3, 3)).unwrap(),
            Matrix::identity(3, 3)
        );
    }

    #[test]
    fn sym_inv_sqrt_rejects_singular() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match sym_inv_sqrt(&m) {
            Err(TbssError::SingularCovariance { eigenvalue, .. }) => {
                assert!(eigenvalue.abs() < 1e-12)
            }
            other => panic!("expected singular covariance, got {other:?}"),
        }
    }

    #[test]
    fn standardize_scalar_signs_unchanged() {
        let s = sample(1, 1, &[-1.0, 1.0]);
        let st = standardize(&s).unwrap();
        assert!((st.data()[0] + 1.0).abs() < 1e-14 && (st.data()[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fobi_single_observation() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let s = MatrixSample::from_matrices(&[x.clone()]).unwrap();
        let xx = &x * x.transpose();
        let expected = &xx * &xx / 3.0;
        assert!((fobi_matrix(&s) - expected).amax() < 1e-12);
    }

    #[test]
    fn band_enumeration() {
        let s = sample(3, 1, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0, 0.0, 1.0, -2.0]);
        let one = cumulant_set(&s, 1).unwrap();
        assert_eq!(one.pairs(), &[(0, 0), (1, 1), (2, 2)]);
        let two = cumulant_set(&s, 2).unwrap();
        assert_eq!(two.pairs(), &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)]);
        assert!(std::ptr::eq(two.get(2, 1).unwrap(), two.get(1, 2).unwrap()));
        assert!(two.get(0, 2).is_none());
        let full = cumulant_set(&s, 3).unwrap();
        assert_eq!(full.len(), 6);
        assert_eq!(full.slot_count(), 9);
        assert!(matches!(
            cumulant_set(&s, 0),
            Err(TbssError::InvalidBand { .. })
        ));
        assert!(matches!(
            cumulant_set(&s, 4),
            Err(TbssError::InvalidBand { .. })
        ));
    }

    #[test]
    fn cumulant_matrix_index_check() {
        let s = sample(2, 1, &[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            cumulant_matrix(&s, 2, 0),
            Err(TbssError::IndexOutOfRange { .. })
        ));
    }
}
