//! Gain matrices, the minimum-distance (MD) index and the sequential-MD scree.
//!
//! For a gain `G` the MD index is `D(G) = inf_C ‖C G - I‖_F / sqrt(rho - 1)`
//! over matrices `C` with exactly one nonzero per row and column. Writing
//! `C` as a row assignment `π` with scales, each row's optimal scale is
//! available in closed form and leaves the residual
//! `1 - G[π(i), i]² / ‖G[π(i), :]‖²`, so
//!
//! ```text
//! D² = (rho - max_π Σ_i G[π(i), i]² / ‖G[π(i), :]‖²) / (rho - 1)
//! ```
//!
//! and the maximization is a linear assignment problem.

use rayon::prelude::*;

use crate::assignment::max_weight_assignment;
use crate::error::{Result, TbssError};
use crate::estimators::{fit, ModeEstimator, ModePlan, UnmixingResult};
use crate::jointdiag::JointDiagConfig;
use crate::linalg::inverse;
use crate::tensor::{vec_kronecker, Matrix, TensorSample};

/// Gain `Γ̂ Ω` in [`vectorize`](crate::tensor::vectorize) coordinates.
pub fn gain_matrix(result: &UnmixingResult, mixing: &[Matrix]) -> Result<Matrix> {
    if mixing.len() != result.dims.len() {
        return Err(TbssError::Shape(format!(
            "{} mixing matrices for a tensor of order {}",
            mixing.len(),
            result.dims.len()
        )));
    }
    for (m, (om, &p)) in mixing.iter().zip(&result.dims).enumerate() {
        if om.shape() != (p, p) {
            return Err(TbssError::Shape(format!(
                "mixing matrix {} is {}x{}, expected {p}x{p}",
                m + 1,
                om.nrows(),
                om.ncols()
            )));
        }
    }
    if result.vectorized {
        let omega = vec_kronecker(mixing)?;
        let gamma = &result.modes[0].unmixing;
        if gamma.ncols() != omega.nrows() {
            return Err(TbssError::Shape(
                "vectorized unmixing does not match rho".into(),
            ));
        }
        return Ok(gamma * omega);
    }
    gain_from_modes(&result.unmixing_matrices(), mixing)
}

/// `(Γ̂_2 Ω_2) ⊗ ... ⊗ (Γ̂_r Ω_r) ⊗ (Γ̂_1 Ω_1)`, which equals `Γ̂ Ω` with both
/// Kronecker products taken in the vectorization order.
pub fn gain_from_modes(unmixing: &[Matrix], mixing: &[Matrix]) -> Result<Matrix> {
    if unmixing.len() != mixing.len() {
        return Err(TbssError::Shape(
            "unmixing and mixing lists differ in length".into(),
        ));
    }
    let per_mode = unmixing
        .iter()
        .zip(mixing)
        .map(|(g, o)| {
            if g.ncols() != o.nrows() {
                Err(TbssError::Shape(format!(
                    "{}x{} unmixing does not conform to {}x{} mixing",
                    g.nrows(),
                    g.ncols(),
                    o.nrows(),
                    o.ncols()
                )))
            } else {
                Ok(g * o)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    vec_kronecker(&per_mode)
}

fn normalized_squares(g: &Matrix) -> Result<Vec<Vec<f64>>> {
    if !g.is_square() {
        return Err(TbssError::Shape(format!(
            "gain must be square, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    g.row_iter()
        .enumerate()
        .map(|(i, row)| {
            let norm2 = row.norm_squared();
            if norm2 == 0.0 || !norm2.is_finite() {
                return Err(TbssError::ZeroRow(i));
            }
            Ok(row.iter().map(|v| v * v / norm2).collect())
        })
        .collect()
}

/// Exact MD index via linear assignment.
pub fn md_index(g: &Matrix) -> Result<f64> {
    let weights = normalized_squares(g)?;
    let rho = weights.len();
    if rho <= 1 {
        return Ok(0.0);
    }
    let assignment = max_weight_assignment(&weights);
    let best: f64 = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| weights[r][c])
        .sum();
    let d2 = (rho as f64 - best) / (rho as f64 - 1.0);
    Ok(d2.clamp(0.0, 1.0).sqrt())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                prefix.push(c);
                rec(prefix, used, out);
                prefix.pop();
                used[c] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// MD index by enumerating every permutation, forming the optimally scaled
/// `C` explicitly and measuring `‖C G - I‖_F`. Limited to `rho <= 8`.
pub fn md_index_bruteforce(g: &Matrix) -> Result<f64> {
    let rho = g.nrows();
    if rho > 8 {
        return Err(TbssError::TooLarge(rho));
    }
    normalized_squares(g)?;
    if rho <= 1 {
        return Ok(0.0);
    }
    let eye = Matrix::identity(rho, rho);
    let mut best = f64::INFINITY;
    for perm in permutations(rho) {
        // Output row i takes source row perm[i].
        let mut c = Matrix::zeros(rho, rho);
        for (i, &src) in perm.iter().enumerate() {
            let row = g.row(src);
            c[(i, src)] = row[i] / row.norm_squared();
        }
        let dist = (&c * g - &eye).norm_squared();
        best = best.min(dist);
    }
    Ok((best / (rho as f64 - 1.0)).clamp(0.0, 1.0).sqrt())
}

/// `n (rho - 1) D²`.
pub fn transformed_md(md: f64, n: usize, rho: usize) -> f64 {
    n as f64 * (rho as f64 - 1.0) * md * md
}

/// MD of the relative transform `a b^{-1}`.
pub fn relative_md(a: &Matrix, b: &Matrix) -> Result<f64> {
    md_index(&(a * inverse(b)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainEvaluation {
    pub gain: Matrix,
    pub md: f64,
    pub transformed_md: f64,
    pub rho: usize,
    pub n: usize,
}

impl GainEvaluation {
    pub fn new(gain: Matrix, n: usize) -> Result<Self> {
        let md = md_index(&gain)?;
        let rho = gain.nrows();
        Ok(Self {
            transformed_md: transformed_md(md, n, rho),
            gain,
            md,
            rho,
            n,
        })
    }

    pub fn of_result(result: &UnmixingResult, mixing: &[Matrix]) -> Result<Self> {
        Self::new(gain_matrix(result, mixing)?, result.latent.n())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeCurve {
    /// 0-based mode index.
    pub mode: usize,
    /// `m*_k` for `k = 1..p-1`.
    pub values: Vec<f64>,
    /// `Γ̂^k` for `k = 1..p`.
    pub unmixings: Vec<Matrix>,
}

impl ScreeCurve {
    /// `(k, m*_k)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (i + 1, v))
    }

    /// The `k` after the steepest single drop of the curve. A reading aid for
    /// the elbow, not an automatic selector.
    pub fn largest_drop(&self) -> Option<usize> {
        self.values
            .windows(2)
            .enumerate()
            .map(|(i, w)| (i + 2, w[0] - w[1]))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .filter(|&(_, drop)| drop > 0.0)
            .map(|(k, _)| k)
    }
}

/// Averages of forward sequential MD indices between k-TJADE solutions of one
/// mode. Modes before `mode` follow `reference`; later modes cannot affect
/// `Γ̂_mode` and are skipped.
pub fn scree(
    s: &TensorSample,
    mode: usize,
    reference: &ModePlan,
    cfg: &JointDiagConfig,
) -> Result<ScreeCurve> {
    if mode >= s.order() {
        return Err(TbssError::InvalidMode {
            mode,
            order: s.order(),
        });
    }
    let p = s.dims()[mode];
    if p < 2 {
        return Err(TbssError::Config(format!(
            "scree needs p >= 2, mode {} has p = {p}",
            mode + 1
        )));
    }
    let mut base = reference.clone();
    for m in mode + 1..base.order() {
        base = base.with_mode(m, ModeEstimator::Skip);
    }
    let unmixings = (1..=p)
        .into_par_iter()
        .map(|k| {
            let plan = base.with_mode(mode, ModeEstimator::KTjade(k));
            fit(s, &plan, cfg)
                .map(|r| r.modes[mode].unmixing.clone())
                .map_err(|e| TbssError::AtBand {
                    k,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(p - 1);
    for k in 1..p {
        let mut acc = 0.0;
        for l in 1..=p - k {
            acc += relative_md(&unmixings[k - 1], &unmixings[k + l - 1])?;
        }
        values.push(acc / (p - k) as f64);
    }
    Ok(ScreeCurve {
        mode,
        values,
        unmixings,
    })
}
