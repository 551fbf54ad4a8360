//! Orthogonal joint approximate diagonalization by Jacobi (Givens) rotations.
//!
//! For a weighted family `{(w_k, C_k)}` of symmetric `p x p` matrices the
//! rotation `V` minimizes `Σ w_k ‖off(V' C_k V)‖²_F`. Each plane `(a, b)`
//! gets the closed-form angle of the classical JADE sweep: with
//! `g_k = (C_k[a,a] - C_k[b,b], C_k[a,b] + C_k[b,a])` and `G = Σ w_k g_k g_k'`,
//! `θ = ½ atan2(2 G_12, G_11 - G_22 + sqrt((G_11 - G_22)² + 4 G_12²))`.

use crate::error::{Result, TbssError};
use crate::moments::CumulantSet;
use crate::tensor::Matrix;

/// A weighted family of symmetric matrices of common dimension.
pub trait MatrixFamily {
    fn count(&self) -> usize;
    fn member(&self, idx: usize) -> &Matrix;
    fn weight(&self, idx: usize) -> f64;
}

impl MatrixFamily for CumulantSet {
    fn count(&self) -> usize {
        self.len()
    }

    fn member(&self, idx: usize) -> &Matrix {
        &self.matrices()[idx]
    }

    fn weight(&self, idx: usize) -> f64 {
        CumulantSet::weight(self, idx)
    }
}

impl MatrixFamily for [Matrix] {
    fn count(&self) -> usize {
        self.len()
    }

    fn member(&self, idx: usize) -> &Matrix {
        &self[idx]
    }

    fn weight(&self, _idx: usize) -> f64 {
        1.0
    }
}

impl MatrixFamily for Vec<Matrix> {
    fn count(&self) -> usize {
        self.len()
    }

    fn member(&self, idx: usize) -> &Matrix {
        &self[idx]
    }

    fn weight(&self, _idx: usize) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointDiagConfig {
    /// Stop after a sweep whose largest `|sin θ|` is below this value.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for JointDiagConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 100,
        }
    }
}

impl JointDiagConfig {
    pub fn new(tolerance: f64, max_sweeps: usize) -> Result<Self> {
        let cfg = Self {
            tolerance,
            max_sweeps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(TbssError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_sweeps == 0 {
            return Err(TbssError::Config("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct JointDiagResult {
    /// Orthogonal `V` whose columns are the joint eigenvectors.
    pub rotation: Matrix,
    pub off_objective: f64,
    pub sweeps_used: usize,
    pub converged: bool,
    /// Off-diagonal objective before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
}

fn off_norm2(m: &Matrix) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc
}

fn diag_norm2(m: &Matrix) -> f64 {
    m.diagonal().norm_squared()
}

fn rotated<'a, F: MatrixFamily + ?Sized>(
    v: &Matrix,
    set: &'a F,
) -> impl Iterator<Item = (f64, Matrix)> + 'a {
    let vt = v.transpose();
    let v = v.clone();
    (0..set.count()).map(move |k| (set.weight(k), &vt * set.member(k) * &v))
}

/// `Σ w ‖off(V' C V)‖²_F`.
pub fn off_objective<F: MatrixFamily + ?Sized>(v: &Matrix, set: &F) -> f64 {
    rotated(v, set).map(|(w, m)| w * off_norm2(&m)).sum()
}

/// `Σ w ‖diag(V' C V)‖²_F`.
pub fn diag_objective<F: MatrixFamily + ?Sized>(v: &Matrix, set: &F) -> f64 {
    rotated(v, set).map(|(w, m)| w * diag_norm2(&m)).sum()
}

/// `Σ w ‖C‖²_F`, the rotation-invariant total of the two objectives.
pub fn total_energy<F: MatrixFamily + ?Sized>(set: &F) -> f64 {
    (0..set.count())
        .map(|k| set.weight(k) * set.member(k).norm_squared())
        .sum()
}

fn check_family<F: MatrixFamily + ?Sized>(set: &F) -> Result<usize> {
    if set.count() == 0 {
        return Err(TbssError::EmptySet);
    }
    let p = set.member(0).nrows();
    for k in 0..set.count() {
        let m = set.member(k);
        if m.nrows() != p || m.ncols() != p {
            return Err(TbssError::Shape(format!(
                "matrix {k} is {}x{}, expected {p}x{p}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(p)
}

/// Upper triangles of the family stored entry-major: entry `(i, j)`, `i <= j`,
/// of every member sits in one contiguous run, so a plane rotation streams
/// over whole runs.
struct Stack {
    p: usize,
    count: usize,
    data: Vec<f64>,
}

impl Stack {
    /// Members are symmetrized on the way in.
    fn new<F: MatrixFamily + ?Sized>(set: &F, p: usize) -> Self {
        let count = set.count();
        let mut data = vec![0.0; p * (p + 1) / 2 * count];
        for k in 0..count {
            let m = set.member(k);
            for i in 0..p {
                for j in i..p {
                    data[Self::slot(p, i, j) * count + k] = 0.5 * (m[(i, j)] + m[(j, i)]);
                }
            }
        }
        Self { p, count, data }
    }

    fn slot(p: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * p - i * (i + 1) / 2 + j
    }

    fn run(&self, i: usize, j: usize) -> &[f64] {
        let start = Self::slot(self.p, i, j) * self.count;
        &self.data[start..start + self.count]
    }

    /// Disjoint mutable runs for distinct entries given in increasing slot order.
    fn runs_mut<const N: usize>(&mut self, entries: [(usize, usize); N]) -> [&mut [f64]; N] {
        let n = self.count;
        let p = self.p;
        let mut rest: &mut [f64] = &mut self.data;
        let mut consumed = 0;
        entries.map(|(i, j)| {
            let start = Self::slot(p, i, j) * n;
            debug_assert!(start >= consumed, "entries out of order");
            let tail = std::mem::take(&mut rest);
            let (_, tail) = tail.split_at_mut(start - consumed);
            let (run, tail) = tail.split_at_mut(n);
            rest = tail;
            consumed = start + n;
            run
        })
    }

    fn off_objective(&self, weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.p {
            for j in i + 1..self.p {
                acc += 2.0
                    * self
                        .run(i, j)
                        .iter()
                        .zip(weights)
                        .map(|(x, w)| w * x * x)
                        .sum::<f64>();
            }
        }
        acc
    }

    /// `C <- G' C G` for the Givens rotation `G` acting on plane `(a, b)`.
    fn rotate(&mut self, a: usize, b: usize, c: f64, s: f64) {
        for i in (0..self.p).filter(|&i| i != a && i != b) {
            // (i, a) precedes (i, b) in slot order whenever a < b.
            let [x, y] = self.runs_mut([(i, a), (i, b)]);
            for (u, v) in x.iter_mut().zip(y.iter_mut()) {
                let (xu, yv) = (*u, *v);
                *u = c * xu + s * yv;
                *v = c * yv - s * xu;
            }
        }
        let (cc, ss, cs) = (c * c, s * s, c * s);
        let [x, y, z] = self.runs_mut([(a, a), (a, b), (b, b)]);
        for ((xa, yab), zb) in x.iter_mut().zip(y.iter_mut()).zip(z.iter_mut()) {
            let (xv, yv, zv) = (*xa, *yab, *zb);
            *xa = cc * xv + 2.0 * cs * yv + ss * zv;
            *zb = ss * xv - 2.0 * cs * yv + cc * zv;
            *yab = cs * (zv - xv) + (cc - ss) * yv;
        }
    }
}

/// Jacobi-rotation joint diagonalization starting from `V = I`.
pub fn joint_diagonalize<F: MatrixFamily + ?Sized>(
    set: &F,
    cfg: &JointDiagConfig,
) -> Result<JointDiagResult> {
    cfg.validate()?;
    let p = check_family(set)?;
    let weights: Vec<f64> = (0..set.count()).map(|k| set.weight(k)).collect();
    let mut work = Stack::new(set, p);
    let mut v = Matrix::identity(p, p);

    let mut trace = vec![work.off_objective(&weights)];
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let mut largest_sin = 0.0_f64;
        for a in 0..p {
            for b in a + 1..p {
                let (mut g11, mut g22, mut g12) = (0.0, 0.0, 0.0);
                let (aa, bb, ab) = (work.run(a, a), work.run(b, b), work.run(a, b));
                for k in 0..weights.len() {
                    let w = weights[k];
                    let d = aa[k] - bb[k];
                    let o = 2.0 * ab[k];
                    g11 += w * d * d;
                    g22 += w * o * o;
                    g12 += w * d * o;
                }
                let ton = g11 - g22;
                let toff = 2.0 * g12;
                let theta = 0.5 * toff.atan2(ton + ton.hypot(toff));
                let (s, c) = theta.sin_cos();
                largest_sin = largest_sin.max(s.abs());
                if s == 0.0 {
                    continue;
                }
                rotate_columns(&mut v, a, b, c, s);
                work.rotate(a, b, c, s);
            }
        }
        trace.push(work.off_objective(&weights));
        if largest_sin < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(JointDiagResult {
        rotation: v,
        off_objective: *trace.last().unwrap(),
        sweeps_used: sweeps,
        converged,
        objective_trace: trace,
    })
}

/// `M[:, (a, b)] <- M[:, (a, b)] [[c, -s], [s, c]]`.
fn rotate_columns(m: &mut Matrix, a: usize, b: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let x = m[(i, a)];
        let y = m[(i, b)];
        m[(i, a)] = c * x + s * y;
        m[(i, b)] = c * y - s * x;
    }
}
