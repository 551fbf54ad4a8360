//! TFOBI, TJADE and k-TJADE per tensor mode, and their vectorized baselines.
//!
//! Every mode is handled through its m-mode matricization `X^(m)`, which is a
//! `p_m x (rho / p_m)` matrix sample following a matrix IC model. A mode
//! estimate is always of the form `Γ̂ = W Σ1^{-1/2}` with `W` orthogonal:
//!
//! * TFOBI: `W` holds the eigenvectors of `B` of the standardized sample.
//! * TJADE: `W` is the joint diagonalizer of every `C^ij` of the standardized sample.
//! * k-TJADE: TFOBI first, then the joint diagonalizer of `{C^ij : |i-j| < k}`
//!   of the TFOBI-rotated sample.
//!
//! Rows are finally ordered by decreasing estimated mean kurtosis and each row
//! of `Γ̂` is sign-normalized so that its largest-magnitude entry is positive.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::{Result, TbssError};
use crate::jointdiag::{joint_diagonalize, JointDiagConfig};
use crate::linalg::{canonicalize_row_signs, sym_eigen_desc};
use crate::moments::{cumulant_set, fobi_matrix, row_kurtosis_means, whitening_pair, MatrixSample};
use crate::tensor::{Matrix, TensorSample};

/// Largest `rho` accepted by the vectorized estimators unless overridden.
pub const DEFAULT_VECTOR_CAP: usize = 64;

/// What to do with one tensor mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeEstimator {
    /// Leave the mode mixed; its unmixing matrix is the identity.
    Skip,
    Tfobi,
    Tjade,
    KTjade(usize),
}

impl ModeEstimator {
    fn tag(&self) -> String {
        match self {
            ModeEstimator::Skip => "skip".into(),
            ModeEstimator::Tfobi => "tfobi".into(),
            ModeEstimator::Tjade => "tjade".into(),
            ModeEstimator::KTjade(k) => format!("k_tjade({k})"),
        }
    }
}

impl fmt::Display for ModeEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Per-mode estimator choices for a tensor of order `r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePlan {
    modes: Vec<ModeEstimator>,
}

impl ModePlan {
    pub fn new(modes: Vec<ModeEstimator>) -> Self {
        Self { modes }
    }

    /// `(k_1, ..., k_r)`-TJADE; a zero skips the mode.
    pub fn k_tjade(ks: &[usize]) -> Self {
        Self::new(
            ks.iter()
                .map(|&k| {
                    if k == 0 {
                        ModeEstimator::Skip
                    } else {
                        ModeEstimator::KTjade(k)
                    }
                })
                .collect(),
        )
    }

    pub fn uniform(order: usize, est: ModeEstimator) -> Self {
        Self::new(vec![est; order])
    }

    pub fn modes(&self) -> &[ModeEstimator] {
        &self.modes
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    pub fn with_mode(&self, m: usize, est: ModeEstimator) -> Self {
        let mut modes = self.modes.clone();
        modes[m] = est;
        Self { modes }
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.modes.len() != dims.len() {
            return Err(TbssError::Config(format!(
                "plan has {} modes but the tensor has order {}",
                self.modes.len(),
                dims.len()
            )));
        }
        for (m, (est, &p)) in self.modes.iter().zip(dims).enumerate() {
            if let ModeEstimator::KTjade(k) = *est {
                if k == 0 || k > p {
                    return Err(TbssError::InvalidBand { k, p }.in_mode(m + 1));
                }
            }
        }
        Ok(())
    }

    /// Conventional name, e.g. `22-TJADE`, `TJADE` or `TFOBI`.
    pub fn label(&self) -> String {
        let all = |e: ModeEstimator| self.modes.iter().all(|&m| m == e);
        if all(ModeEstimator::Tjade) {
            return "TJADE".into();
        }
        if all(ModeEstimator::Tfobi) {
            return "TFOBI".into();
        }
        let ks: Option<Vec<String>> = self
            .modes
            .iter()
            .map(|m| match m {
                ModeEstimator::Skip => Some("0".to_string()),
                ModeEstimator::KTjade(k) => Some(k.to_string()),
                _ => None,
            })
            .collect();
        match ks {
            Some(ks) if ks.iter().all(|k| k.len() == 1) => format!("{}-TJADE", ks.concat()),
            Some(ks) => format!("({})-TJADE", ks.join(",")),
            None => self
                .modes
                .iter()
                .map(|m| m.tag())
                .collect::<Vec<_>>()
                .join("+"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub standardize: Duration,
    pub fobi: Duration,
    pub cumulants: Duration,
    pub joint_diag: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.standardize + self.fobi + self.cumulants + self.joint_diag
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeDiagnostics {
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
    pub off_objective: Option<f64>,
    /// `max κ̂ - min κ̂`.
    pub kappa_spread: f64,
    /// The kurtosis means are statistically indistinguishable; the mode is
    /// probably not identifiable from fourth moments.
    pub weak_separation: bool,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    /// 0-based mode index.
    pub mode: usize,
    pub estimator: ModeEstimator,
    pub unmixing: Matrix,
    /// Estimated row kurtosis means, non-increasing. Empty for skipped modes.
    pub kappa: Vec<f64>,
    pub diagnostics: ModeDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnmixingResult {
    /// Dims of the observed tensors.
    pub dims: Vec<usize>,
    /// True when a single `rho x rho` unmixing matrix acts on `vec(X)`.
    pub vectorized: bool,
    pub modes: Vec<ModeFit>,
    /// Centered input with every unmixing matrix applied.
    pub latent: TensorSample,
}

impl UnmixingResult {
    pub fn unmixing_matrices(&self) -> Vec<Matrix> {
        self.modes.iter().map(|m| m.unmixing.clone()).collect()
    }

    pub fn total_time(&self) -> Duration {
        self.modes
            .iter()
            .map(|m| m.diagnostics.timings.total())
            .sum()
    }
}

/// Vectorized baselines acting on `vec(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorMethod {
    Vfobi,
    Vjade,
    KVjade(usize),
}

impl VectorMethod {
    pub fn label(&self) -> String {
        match self {
            VectorMethod::Vfobi => "VFOBI".into(),
            VectorMethod::Vjade => "VJADE".into(),
            VectorMethod::KVjade(k) => format!("{k}-VJADE"),
        }
    }

    fn mode_estimator(&self) -> ModeEstimator {
        match *self {
            VectorMethod::Vfobi => ModeEstimator::Tfobi,
            VectorMethod::Vjade => ModeEstimator::Tjade,
            VectorMethod::KVjade(k) => ModeEstimator::KTjade(k),
        }
    }
}

fn weak_threshold(n: usize, p: usize, q: usize) -> f64 {
    // Under normality the row-norm estimate has standard error
    // sqrt(8 (q + 2) / (q n)). The rotation picks the most separated
    // directions, so the null spread grows with p; 4 sqrt(p) standard errors
    // covers it in simulations up to p = 24.
    let (n, p, q) = (n as f64, p as f64, q as f64);
    4.0 * p.sqrt() * (8.0 * (q + 2.0) / (q * n)).sqrt()
}

/// Estimates the unmixing matrix of the rows of a centered matrix sample.
pub fn estimate_rows(
    xs: &MatrixSample,
    est: ModeEstimator,
    cfg: &JointDiagConfig,
) -> Result<(Matrix, Vec<f64>, ModeDiagnostics)> {
    let p = xs.p();
    if est == ModeEstimator::Skip {
        let diagnostics = ModeDiagnostics {
            sweeps: None,
            converged: None,
            off_objective: None,
            kappa_spread: 0.0,
            weak_separation: false,
            timings: StageTimings::default(),
        };
        return Ok((Matrix::identity(p, p), Vec::new(), diagnostics));
    }
    if xs.n() < 2 {
        return Err(TbssError::InsufficientSample {
            needed: 2,
            got: xs.n(),
        });
    }
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let (left, right) = whitening_pair(xs)?;
    let mut current = xs.transform(Some(&left), Some(&right))?;
    timings.standardize = clock.elapsed();

    let mut rotation = Matrix::identity(p, p);
    if matches!(est, ModeEstimator::Tfobi | ModeEstimator::KTjade(_)) {
        let clock = Instant::now();
        let (_, vectors) = sym_eigen_desc(&fobi_matrix(&current));
        rotation = vectors.transpose();
        current = current.left_multiply(&rotation)?;
        timings.fobi = clock.elapsed();
    }

    let (mut sweeps, mut converged, mut off) = (None, None, None);
    let band = match est {
        ModeEstimator::Tjade => Some(p),
        ModeEstimator::KTjade(k) => Some(k),
        _ => None,
    };
    if let Some(k) = band {
        let clock = Instant::now();
        let set = cumulant_set(&current, k)?;
        timings.cumulants = clock.elapsed();
        let clock = Instant::now();
        let jd = joint_diagonalize(&set, cfg)?;
        timings.joint_diag = clock.elapsed();
        let vt = jd.rotation.transpose();
        current = current.left_multiply(&vt)?;
        rotation = vt * rotation;
        sweeps = Some(jd.sweeps_used);
        converged = Some(jd.converged);
        off = Some(jd.off_objective);
    }

    let kappa_raw = row_kurtosis_means(&current);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| kappa_raw[b].total_cmp(&kappa_raw[a]));
    let kappa: Vec<f64> = order.iter().map(|&i| kappa_raw[i]).collect();
    let ordered = rotation.select_rows(&order);

    let mut unmixing = ordered * left;
    canonicalize_row_signs(&mut unmixing);

    let spread = kappa.first().copied().unwrap_or(0.0) - kappa.last().copied().unwrap_or(0.0);
    let diagnostics = ModeDiagnostics {
        sweeps,
        converged,
        off_objective: off,
        kappa_spread: spread,
        weak_separation: p > 1 && spread < weak_threshold(xs.n(), p, xs.q()),
        timings,
    };
    Ok((unmixing, kappa, diagnostics))
}

/// Estimates mode `m` of a tensor sample and applies it.
///
/// Returns the fit and the centered sample multiplied in mode `m` by `Γ̂_m`.
pub fn fit_mode(
    s: &TensorSample,
    m: usize,
    est: ModeEstimator,
    cfg: &JointDiagConfig,
) -> Result<(ModeFit, TensorSample)> {
    let annotate = |e: TbssError| e.in_mode(m + 1);
    if m >= s.order() {
        return Err(TbssError::InvalidMode {
            mode: m,
            order: s.order(),
        });
    }
    if let ModeEstimator::KTjade(k) = est {
        if k == 0 || k > s.dims()[m] {
            return Err(annotate(TbssError::InvalidBand { k, p: s.dims()[m] }));
        }
    }
    if s.n() < 2 {
        return Err(annotate(TbssError::InsufficientSample {
            needed: 2,
            got: s.n(),
        }));
    }
    let centered = s.centered();
    let xs = centered.matricize(m).map_err(annotate)?;
    let (unmixing, kappa, diagnostics) = estimate_rows(&xs, est, cfg).map_err(annotate)?;
    let rotated = if est == ModeEstimator::Skip {
        centered
    } else {
        centered.mode_multiply(m, &unmixing).map_err(annotate)?
    };
    let fit = ModeFit {
        mode: m,
        estimator: est,
        unmixing,
        kappa,
        diagnostics,
    };
    Ok((fit, rotated))
}

pub fn tfobi_mode(s: &TensorSample, m: usize) -> Result<(ModeFit, TensorSample)> {
    fit_mode(s, m, ModeEstimator::Tfobi, &JointDiagConfig::default())
}

pub fn tjade_mode(
    s: &TensorSample,
    m: usize,
    cfg: &JointDiagConfig,
) -> Result<(ModeFit, TensorSample)> {
    fit_mode(s, m, ModeEstimator::Tjade, cfg)
}

pub fn k_tjade_mode(
    s: &TensorSample,
    m: usize,
    k: usize,
    cfg: &JointDiagConfig,
) -> Result<(ModeFit, TensorSample)> {
    fit_mode(s, m, ModeEstimator::KTjade(k), cfg)
}

/// Runs the plan over modes `1..r`, each on the sample already rotated by the
/// previous modes.
pub fn fit(s: &TensorSample, plan: &ModePlan, cfg: &JointDiagConfig) -> Result<UnmixingResult> {
    cfg.validate()?;
    plan.validate(s.dims())?;
    if s.n() < 2 {
        return Err(TbssError::InsufficientSample {
            needed: 2,
            got: s.n(),
        });
    }
    let mut current = s.centered();
    let mut modes = Vec::with_capacity(plan.order());
    for (m, &est) in plan.modes().iter().enumerate() {
        let (fit, next) = fit_mode(&current, m, est, cfg)?;
        modes.push(fit);
        current = next;
    }
    Ok(UnmixingResult {
        dims: s.dims().to_vec(),
        vectorized: false,
        modes,
        latent: current,
    })
}

pub fn fit_vectorized(
    s: &TensorSample,
    method: VectorMethod,
    cfg: &JointDiagConfig,
) -> Result<UnmixingResult> {
    fit_vectorized_capped(s, method, cfg, DEFAULT_VECTOR_CAP)
}

/// Vectorizes every observation and unmixes the resulting `rho`-vectors.
pub fn fit_vectorized_capped(
    s: &TensorSample,
    method: VectorMethod,
    cfg: &JointDiagConfig,
    cap: usize,
) -> Result<UnmixingResult> {
    cfg.validate()?;
    let rho = s.rho();
    if rho > cap {
        return Err(TbssError::VectorCap { rho, cap });
    }
    let vs = s.vectorized();
    let (fit, latent) = fit_mode(&vs, 0, method.mode_estimator(), cfg)?;
    Ok(UnmixingResult {
        dims: s.dims().to_vec(),
        vectorized: true,
        modes: vec![fit],
        latent,
    })
}
