use proptest::prelude::*;
use tbss::tensor::{
    dematricize, devectorize, kronecker, linear_index, m_mode_multiply, matricize, multi_index,
    vec_kronecker, vectorize, Matrix, Tensor, TensorSample,
};

fn arb_dims(max_order: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=4, 1..=max_order)
}

fn arb_tensor(max_order: usize) -> impl Strategy<Value = Tensor> {
    arb_dims(max_order).prop_flat_map(|dims| {
        let len: usize = dims.iter().product();
        prop::collection::vec(-5.0f64..5.0, len)
            .prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
    })
}

fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Matrix::from_row_slice(rows, cols, &v))
}

/// Tensor together with one square matrix per mode.
fn arb_tensor_and_mats(max_order: usize) -> impl Strategy<Value = (Tensor, Vec<Matrix>)> {
    arb_tensor(max_order).prop_flat_map(|t| {
        let mats: Vec<_> = t.dims().iter().map(|&p| arb_matrix(p, p)).collect();
        (Just(t), mats)
    })
}

/// Element-wise definition: `Y[.., j, ..] = Σ_i A[j, i] X[.., i, ..]`.
fn naive_mode_multiply(x: &Tensor, m: usize, a: &Matrix) -> Tensor {
    let mut dims = x.dims().to_vec();
    dims[m] = a.nrows();
    let len: usize = dims.iter().product();
    let mut out = vec![0.0; len];
    for (lin, slot) in out.iter_mut().enumerate() {
        let idx = multi_index(&dims, lin);
        let mut src = idx.clone();
        let mut acc = 0.0;
        for i in 0..x.dims()[m] {
            src[m] = i;
            acc += a[(idx[m], i)] * x.get(&src);
        }
        *slot = acc;
    }
    Tensor::new(dims, out).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Kronecker product `A_{m+1} ⊗ ... ⊗ A_r ⊗ A_1 ⊗ ... ⊗ A_{m-1}`.
fn cyclic_kron(mats: &[Matrix], m: usize) -> Matrix {
    let r = mats.len();
    let order: Vec<usize> = (m + 1..r).chain(0..m).collect();
    order
        .iter()
        .fold(Matrix::identity(1, 1), |acc, &k| kronecker(&acc, &mats[k]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mode_multiply_matches_elementwise_sum((x, mats) in arb_tensor_and_mats(4), m_seed in 0usize..4) {
        let m = m_seed % x.order();
        let fast = m_mode_multiply(&x, m, &mats[m]).unwrap();
        let slow = naive_mode_multiply(&x, m, &mats[m]);
        prop_assert_eq!(fast.dims(), slow.dims());
        prop_assert!(max_diff(fast.data(), slow.data()) < 1e-12);
    }

    #[test]
    fn identity_multiply_is_noop(x in arb_tensor(4), m_seed in 0usize..4) {
        let m = m_seed % x.order();
        let p = x.dims()[m];
        let y = m_mode_multiply(&x, m, &Matrix::identity(p, p)).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn distinct_modes_commute((x, mats) in arb_tensor_and_mats(4)) {
        prop_assume!(x.order() >= 2);
        let a = m_mode_multiply(&m_mode_multiply(&x, 0, &mats[0]).unwrap(), 1, &mats[1]).unwrap();
        let b = m_mode_multiply(&m_mode_multiply(&x, 1, &mats[1]).unwrap(), 0, &mats[0]).unwrap();
        prop_assert!(max_diff(a.data(), b.data()) < 1e-12);
    }

    #[test]
    fn matricization_identity((x, mats) in arb_tensor_and_mats(4)) {
        let mut y = x.clone();
        for (m, a) in mats.iter().enumerate() {
            y = m_mode_multiply(&y, m, a).unwrap();
        }
        for m in 0..x.order() {
            let lhs = matricize(&y, m).unwrap();
            let rhs = &mats[m] * matricize(&x, m).unwrap() * cyclic_kron(&mats, m).transpose();
            prop_assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn matricize_round_trip(x in arb_tensor(4), m_seed in 0usize..4) {
        let m = m_seed % x.order();
        let mat = matricize(&x, m).unwrap();
        prop_assert_eq!(mat.nrows(), x.dims()[m]);
        prop_assert_eq!(dematricize(&mat, x.dims(), m).unwrap(), x);
    }

    #[test]
    fn vectorize_round_trip_preserves_norm(x in arb_tensor(4)) {
        let v = vectorize(&x);
        prop_assert!((v.norm() - x.frobenius_norm()).abs() < 1e-12);
        prop_assert_eq!(devectorize(&v, x.dims()).unwrap(), x);
    }

    #[test]
    fn vectorize_matches_full_kronecker((x, mats) in arb_tensor_and_mats(4)) {
        let mut y = x.clone();
        for (m, a) in mats.iter().enumerate() {
            y = m_mode_multiply(&y, m, a).unwrap();
        }
        let lhs = vectorize(&y);
        let rhs = vec_kronecker(&mats).unwrap() * vectorize(&x);
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn matrix_kronecker_vec_identity(
        (x, a, b) in (1usize..5, 1usize..5).prop_flat_map(|(p, q)| (arb_matrix(p, q), arb_matrix(p, p), arb_matrix(q, q)))
    ) {
        let t = Tensor::from_matrix(&x);
        let lhs = vectorize(&Tensor::from_matrix(&(&a * &x * b.transpose())));
        let rhs = kronecker(&b, &a) * vectorize(&t);
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn kronecker_mixed_product(
        (a, b, c, d) in (1usize..4, 1usize..4).prop_flat_map(|(p, q)| (arb_matrix(p, p), arb_matrix(q, q), arb_matrix(p, p), arb_matrix(q, q)))
    ) {
        let lhs = kronecker(&a, &b) * kronecker(&c, &d);
        let rhs = kronecker(&(&a * &c), &(&b * &d));
        prop_assert!((lhs - rhs).amax() < 1e-9);
    }

    #[test]
    fn linear_index_round_trip(dims in arb_dims(4), seed in 0usize..10_000) {
        let len: usize = dims.iter().product();
        let lin = seed % len;
        prop_assert_eq!(linear_index(&dims, &multi_index(&dims, lin)), lin);
    }

    #[test]
    fn sample_multiply_all_matches_per_observation((x, mats) in arb_tensor_and_mats(3)) {
        let s = TensorSample::from_tensors(&[x.clone(), x.clone()]).unwrap();
        let y = s.multiply_all(&mats).unwrap();
        let mut expected = x;
        for (m, a) in mats.iter().enumerate() {
            expected = m_mode_multiply(&expected, m, a).unwrap();
        }
        prop_assert!(max_diff(y.observation(1), expected.data()) < 1e-12);
    }
}

#[test]
fn row_swap_example() {
    let x = Tensor::from_matrix(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let swap = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert_eq!(
        m_mode_multiply(&x, 0, &swap).unwrap().data(),
        &[3.0, 4.0, 1.0, 2.0]
    );
}

#[test]
fn matrix_matricizations() {
    let m = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let t = Tensor::from_matrix(&m);
    assert_eq!(matricize(&t, 0).unwrap(), m);
    assert_eq!(matricize(&t, 1).unwrap(), m.transpose());
}

#[test]
fn kronecker_block_example() {
    let a = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
    let b = Matrix::from_row_slice(2, 1, &[3.0, 4.0]);
    assert_eq!(
        kronecker(&a, &b),
        Matrix::from_row_slice(2, 2, &[3.0, 6.0, 4.0, 8.0])
    );
    assert_eq!(
        kronecker(&Matrix::identity(2, 2), &Matrix::identity(3, 3)),
        Matrix::identity(6, 6)
    );
}

#[test]
fn column_stacking() {
    let t = Tensor::from_matrix(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert_eq!(vectorize(&t).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
}

#[test]
fn mismatched_multiply_is_rejected() {
    let t = Tensor::zeros(vec![2, 3]).unwrap();
    assert!(m_mode_multiply(&t, 1, &Matrix::identity(2, 2)).is_err());
    assert!(matricize(&t, 2).is_err());
}
