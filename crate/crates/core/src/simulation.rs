//! Latent distributions, preset layouts, mixing scenarios and Monte Carlo drivers.
//!
//! Every latent cell is drawn from its own ChaCha stream, so a sample depends
//! only on the seed and never on thread scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TbssError};
use crate::estimators::{
    fit, fit_vectorized_capped, ModePlan, UnmixingResult, VectorMethod, DEFAULT_VECTOR_CAP,
};
use crate::jointdiag::JointDiagConfig;
use crate::metrics::{gain_matrix, md_index, transformed_md};
use crate::tensor::{linear_index, multi_index, Matrix, TensorSample};

/// A latent distribution, standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Distribution {
    Normal,
    Uniform,
    Exponential,
    ChiSquared(f64),
    Gamma(f64),
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::ChiSquared(v) | Distribution::Gamma(v) if !(v > 0.0 && v.is_finite()) => {
                Err(TbssError::Config(format!(
                    "invalid distribution parameter in {self}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn excess_kurtosis(&self) -> f64 {
        match *self {
            Distribution::Normal => 0.0,
            Distribution::Uniform => -1.2,
            Distribution::Exponential => 6.0,
            Distribution::ChiSquared(nu) => 12.0 / nu,
            Distribution::Gamma(alpha) => 6.0 / alpha,
        }
    }

    /// Draws one standardized value. Parameters must have been validated.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Normal => rng.sample(StandardNormal),
            Distribution::Uniform => (rng.random::<f64>() - 0.5) * 12f64.sqrt(),
            Distribution::Exponential => {
                let x: f64 = rng.sample(Exp1);
                x - 1.0
            }
            Distribution::ChiSquared(nu) => {
                let x = rng.sample(ChiSquared::new(nu).expect("validated"));
                (x - nu) / (2.0 * nu).sqrt()
            }
            Distribution::Gamma(alpha) => {
                let x = rng.sample(Gamma::new(alpha, 1.0).expect("validated"));
                (x - alpha) / alpha.sqrt()
            }
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal => f.write_str("N"),
            Distribution::Uniform => f.write_str("U"),
            Distribution::Exponential => f.write_str("E"),
            Distribution::ChiSquared(nu) => write!(f, "chisq({nu})"),
            Distribution::Gamma(alpha) => write!(f, "gamma({alpha})"),
        }
    }
}

impl FromStr for Distribution {
    type Err = TbssError;

    /// Accepts `N`, `U`, `E`, `C` (chi-square with one degree of freedom),
    /// `chisq(nu)` and `gamma(alpha)`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let param = |prefix: &str| -> Option<Result<f64>> {
            t.strip_prefix(prefix)
                .and_then(|r| r.strip_suffix(')'))
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|_| {
                        TbssError::Config(format!("bad parameter in distribution `{s}`"))
                    })
                })
        };
        let d = match t.as_str() {
            "n" | "normal" => Distribution::Normal,
            "u" | "uniform" => Distribution::Uniform,
            "e" | "exp" | "exponential" => Distribution::Exponential,
            "c" => Distribution::ChiSquared(1.0),
            _ => {
                if let Some(v) = param("chisq(") {
                    Distribution::ChiSquared(v?)
                } else if let Some(v) = param("gamma(") {
                    Distribution::Gamma(v?)
                } else {
                    return Err(TbssError::Config(format!("unknown distribution `{s}`")));
                }
            }
        };
        d.validate()?;
        Ok(d)
    }
}

impl TryFrom<String> for Distribution {
    type Error = TbssError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Distribution> for String {
    fn from(d: Distribution) -> String {
        d.to_string()
    }
}

/// One distribution per tensor cell, in row-major cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub dims: Vec<usize>,
    pub cells: Vec<Distribution>,
}

impl Layout {
    pub fn new(dims: Vec<usize>, cells: Vec<Distribution>) -> Result<Self> {
        let layout = Self { dims, cells };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(TbssError::Shape(format!(
                "invalid layout dims {:?}",
                self.dims
            )));
        }
        let rho: usize = self.dims.iter().product();
        if self.cells.len() != rho {
            return Err(TbssError::Shape(format!(
                "layout has {} cells, dims {:?} need {rho}",
                self.cells.len(),
                self.dims
            )));
        }
        self.cells.iter().try_for_each(Distribution::validate)
    }

    pub fn rho(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, index: &[usize]) -> Distribution {
        self.cells[linear_index(&self.dims, index)]
    }

    /// Mean excess kurtosis of each mode-`m` slice.
    pub fn kurtosis_means(&self, m: usize) -> Result<Vec<f64>> {
        if m >= self.dims.len() {
            return Err(TbssError::InvalidMode {
                mode: m,
                order: self.dims.len(),
            });
        }
        let mut sums = vec![0.0; self.dims[m]];
        for (c, d) in self.cells.iter().enumerate() {
            sums[multi_index(&self.dims, c)[m]] += d.excess_kurtosis();
        }
        let per = (self.rho() / self.dims[m]) as f64;
        Ok(sums.into_iter().map(|s| s / per).collect())
    }

    /// 3x3 matrices with rows `E C U`, `C U E`, `U E N`.
    pub fn setting1() -> Self {
        use Distribution::*;
        let c = ChiSquared(1.0);
        let cells = vec![
            Exponential,
            c,
            Uniform,
            c,
            Uniform,
            Exponential,
            Uniform,
            Exponential,
            Normal,
        ];
        Self::new(vec![3, 3], cells).expect("static layout")
    }

    /// 3x3x4 tensors; the first three 3-mode faces are `diag(E, U, E)` padded
    /// with normals, the fourth is rows `N U E`, `E E E`, `E E N`.
    pub fn setting2() -> Self {
        use Distribution::*;
        let (e, n, u) = (Exponential, Normal, Uniform);
        let front = [[e, n, n], [n, u, n], [n, n, e]];
        let last = [[n, u, e], [e, e, e], [e, e, n]];
        let dims = vec![3, 3, 4];
        let mut cells = vec![Normal; 36];
        for i1 in 0..3 {
            for i2 in 0..3 {
                for i3 in 0..4 {
                    let face = if i3 < 3 { &front } else { &last };
                    cells[linear_index(&dims, &[i1, i2, i3])] = face[i1][i2];
                }
            }
        }
        Self::new(dims, cells).expect("static layout")
    }

    /// 3x3 gamma matrices with nearly tied row kurtosis means.
    pub fn setting3() -> Self {
        let g = Distribution::Gamma;
        let cells = vec![
            g(0.9999),
            g(1.0),
            g(0.9),
            g(0.9),
            g(0.9998),
            g(1.0),
            g(0.9),
            g(1.0),
            g(1.0),
        ];
        Self::new(vec![3, 3], cells).expect("static layout")
    }

    /// 3 x q chi-square matrices; cell `(i, j)` has `3j + i + 1` degrees of freedom.
    pub fn timing(q: usize) -> Result<Self> {
        let mut cells = Vec::with_capacity(3 * q);
        for i in 0..3 {
            for j in 0..q {
                cells.push(Distribution::ChiSquared((3 * j + i + 1) as f64));
            }
        }
        Self::new(vec![3, q], cells)
    }

    /// 6x4 matrices whose row kurtosis means have multiplicities 3, 2 and 1:
    /// three exponential rows, two uniform rows and one chi-square(4) row.
    pub fn scree_demo() -> Self {
        use Distribution::*;
        let rows = [
            Exponential,
            Exponential,
            Exponential,
            Uniform,
            Uniform,
            ChiSquared(4.0),
        ];
        let cells = rows
            .iter()
            .flat_map(|&d| std::iter::repeat_n(d, 4))
            .collect();
        Self::new(vec![6, 4], cells).expect("static layout")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "1" => Ok(Self::setting1()),
            "2" => Ok(Self::setting2()),
            "3" => Ok(Self::setting3()),
            "scree" => Ok(Self::scree_demo()),
            _ => Err(TbssError::Config(format!("unknown setting `{name}`"))),
        }
    }
}

/// SplitMix64 finalizer over a sequence of words.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// `n` i.i.d. tensors; cell `c` uses stream `c` of a generator keyed by `seed`.
pub fn sample_latent(layout: &Layout, n: usize, seed: u64) -> Result<TensorSample> {
    layout.validate()?;
    let rho = layout.rho();
    let mut data = vec![0.0; n * rho];
    for (c, dist) in layout.cells.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        for t in 0..n {
            data[t * rho + c] = dist.sample(&mut rng);
        }
    }
    TensorSample::new(layout.dims.clone(), data)
}

/// Haar-distributed orthogonal matrix.
pub fn haar_orthogonal(p: usize, seed: u64) -> Matrix {
    haar_orthogonal_with(p, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn haar_orthogonal_with<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Matrix {
    let g = gaussian_matrix_with(p, rng);
    let qr = g.qr();
    let r = qr.r();
    let signs = DVector::from_iterator(p, (0..p).map(|i| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    qr.q() * Matrix::from_diagonal(&signs)
}

pub fn gaussian_matrix_with<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(p, p, |_, _| rng.sample(StandardNormal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingScenario {
    Identity,
    OrthogonalHaar,
    Gaussian,
}

impl MixingScenario {
    pub const ALL: [MixingScenario; 3] = [
        MixingScenario::Identity,
        MixingScenario::OrthogonalHaar,
        MixingScenario::Gaussian,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MixingScenario::Identity => "identity",
            MixingScenario::OrthogonalHaar => "orthogonal",
            MixingScenario::Gaussian => "gaussian",
        }
    }

    /// One mixing matrix per mode.
    pub fn draw(&self, dims: &[usize], seed: u64) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dims.iter()
            .map(|&p| match self {
                MixingScenario::Identity => Matrix::identity(p, p),
                MixingScenario::OrthogonalHaar => haar_orthogonal_with(p, &mut rng),
                MixingScenario::Gaussian => gaussian_matrix_with(p, &mut rng),
            })
            .collect()
    }
}

impl FromStr for MixingScenario {
    type Err = TbssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(MixingScenario::Identity),
            "orthogonal" | "haar" | "orthogonal_haar" => Ok(MixingScenario::OrthogonalHaar),
            "gaussian" | "normal" => Ok(MixingScenario::Gaussian),
            _ => Err(TbssError::Config(format!("unknown mixing scenario `{s}`"))),
        }
    }
}

/// `X = Z x_1 Ω_1 ... x_r Ω_r`.
pub fn mix(latent: &TensorSample, mixing: &[Matrix]) -> Result<TensorSample> {
    latent.multiply_all(mixing)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Tensorial(ModePlan),
    Vectorized(VectorMethod),
}

impl Estimator {
    pub fn label(&self) -> String {
        match self {
            Estimator::Tensorial(plan) => plan.label(),
            Estimator::Vectorized(method) => method.label(),
        }
    }

    pub fn fit(
        &self,
        s: &TensorSample,
        cfg: &JointDiagConfig,
        vector_cap: usize,
    ) -> Result<UnmixingResult> {
        match self {
            Estimator::Tensorial(plan) => fit(s, plan, cfg),
            Estimator::Vectorized(method) => fit_vectorized_capped(s, *method, cfg, vector_cap),
        }
    }

    /// Parses `tjade`, `tfobi`, `vfobi`, `vjade`, `k-vjade` (e.g. `3-vjade`)
    /// and `k-tjade` with one digit per mode (`22-tjade`) or comma separated
    /// (`12,3-tjade`).
    pub fn parse(s: &str, order: usize) -> Result<Self> {
        use crate::estimators::ModeEstimator;
        let t = s.trim().to_ascii_lowercase();
        let bad = || TbssError::Config(format!("unknown estimator `{s}`"));
        match t.as_str() {
            "tjade" => {
                return Ok(Estimator::Tensorial(ModePlan::uniform(
                    order,
                    ModeEstimator::Tjade,
                )))
            }
            "tfobi" => {
                return Ok(Estimator::Tensorial(ModePlan::uniform(
                    order,
                    ModeEstimator::Tfobi,
                )))
            }
            "vjade" => return Ok(Estimator::Vectorized(VectorMethod::Vjade)),
            "vfobi" => return Ok(Estimator::Vectorized(VectorMethod::Vfobi)),
            _ => {}
        }
        if let Some(k) = t.strip_suffix("-vjade") {
            return k
                .parse()
                .map(|k| Estimator::Vectorized(VectorMethod::KVjade(k)))
                .map_err(|_| bad());
        }
        let ks = t.strip_suffix("-tjade").ok_or_else(bad)?;
        let ks = ks.trim_start_matches('(').trim_end_matches(')');
        let ks: Vec<usize> = if ks.contains(',') {
            ks.split(',')
                .map(|k| k.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?
        } else {
            ks.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<_>>()?
        };
        if ks.len() != order {
            return Err(TbssError::Config(format!(
                "estimator `{s}` has {} modes, data has order {order}",
                ks.len()
            )));
        }
        Ok(Estimator::Tensorial(ModePlan::k_tjade(&ks)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub layout: Layout,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub scenarios: Vec<MixingScenario>,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub jointdiag: JointDiagConfig,
    pub vector_cap: usize,
}

impl ExperimentSpec {
    pub fn new(
        layout: Layout,
        sizes: Vec<usize>,
        replicates: usize,
        estimators: Vec<Estimator>,
        seed: u64,
    ) -> Self {
        Self {
            layout,
            sizes,
            replicates,
            scenarios: vec![MixingScenario::Identity],
            estimators,
            seed,
            jointdiag: JointDiagConfig::default(),
            vector_cap: DEFAULT_VECTOR_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.jointdiag.validate()?;
        if self.sizes.is_empty() || self.sizes.iter().any(|&n| n < 2) {
            return Err(TbssError::Config("sample sizes must be at least 2".into()));
        }
        if self.replicates == 0 {
            return Err(TbssError::Config("replicates must be at least 1".into()));
        }
        if self.scenarios.is_empty() || self.estimators.is_empty() {
            return Err(TbssError::Config(
                "need at least one scenario and one estimator".into(),
            ));
        }
        for est in &self.estimators {
            if let Estimator::Tensorial(plan) = est {
                plan.validate(&self.layout.dims)?;
            }
        }
        Ok(())
    }
}

/// Outcome of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub estimator: usize,
    pub scenario: MixingScenario,
    pub n: usize,
    pub replicate: usize,
    pub md: Option<f64>,
    pub transformed_md: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub scenario: MixingScenario,
    pub n: usize,
    pub replicates: usize,
    pub failures: usize,
    pub mean_transformed_md: f64,
    pub sd_transformed_md: f64,
    pub mean_md: f64,
    pub median_md: f64,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: Vec<SummaryRow>,
    pub records: Vec<ReplicateRecord>,
}

impl ExperimentOutput {
    /// Successful per-replicate MD values of one cell, in replicate order.
    pub fn md_values(&self, estimator: usize, scenario: MixingScenario, n: usize) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.estimator == estimator && r.scenario == scenario && r.n == n)
            .filter_map(|r| r.md)
            .collect()
    }
}

const LATENT_TAG: u64 = 1;
const MIXING_TAG: u64 = 2;

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn run_replicate(spec: &ExperimentSpec, size_idx: usize, rep: usize) -> Vec<ReplicateRecord> {
    let n = spec.sizes[size_idx];
    let rho = spec.layout.rho();
    let latent_seed = derive_seed(spec.seed, &[LATENT_TAG, size_idx as u64, rep as u64]);
    let latent = sample_latent(&spec.layout, n, latent_seed).map_err(|e| e.to_string());
    let mut out = Vec::with_capacity(spec.scenarios.len() * spec.estimators.len());
    for (si, &scenario) in spec.scenarios.iter().enumerate() {
        let mixing_seed = derive_seed(
            spec.seed,
            &[MIXING_TAG, size_idx as u64, rep as u64, si as u64],
        );
        let mixing = scenario.draw(&spec.layout.dims, mixing_seed);
        let observed = latent
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|z| mix(z, &mixing).map_err(|e| e.to_string()));
        for (ei, est) in spec.estimators.iter().enumerate() {
            let clock = Instant::now();
            let outcome = observed.as_ref().map_err(Clone::clone).and_then(|x| {
                est.fit(x, &spec.jointdiag, spec.vector_cap)
                    .and_then(|res| md_index(&gain_matrix(&res, &mixing)?))
                    .map_err(|e| e.to_string())
            });
            let seconds = clock.elapsed().as_secs_f64();
            let (md, error) = match outcome {
                Ok(md) => (Some(md), None),
                Err(e) => (None, Some(e)),
            };
            out.push(ReplicateRecord {
                estimator: ei,
                scenario,
                n,
                replicate: rep,
                md,
                transformed_md: md.map(|d| transformed_md(d, n, rho)),
                error,
                seconds,
            });
        }
    }
    out
}

/// Runs every estimator on every replicate of every sample size and mixing
/// scenario. The latent sample of a replicate is shared by all scenarios.
/// Failed fits are recorded rather than aborting the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.sizes.len())
        .flat_map(|i| (0..spec.replicates).map(move |r| (i, r)))
        .collect();
    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(i, r)| run_replicate(spec, i, r))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut summary = Vec::new();
    for (ei, est) in spec.estimators.iter().enumerate() {
        for &scenario in &spec.scenarios {
            for &n in &spec.sizes {
                let cell: Vec<&ReplicateRecord> = records
                    .iter()
                    .filter(|r| r.estimator == ei && r.scenario == scenario && r.n == n)
                    .collect();
                let tmd: Vec<f64> = cell.iter().filter_map(|r| r.transformed_md).collect();
                let mut mds: Vec<f64> = cell.iter().filter_map(|r| r.md).collect();
                let k = tmd.len() as f64;
                let mean = tmd.iter().sum::<f64>() / k;
                let sd = if tmd.len() > 1 {
                    (tmd.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
                } else {
                    f64::NAN
                };
                summary.push(SummaryRow {
                    estimator: est.label(),
                    scenario,
                    n,
                    replicates: cell.len(),
                    failures: cell.len() - tmd.len(),
                    mean_transformed_md: mean,
                    sd_transformed_md: sd,
                    mean_md: mds.iter().sum::<f64>() / k,
                    median_md: median(&mut mds),
                    mean_seconds: cell.iter().map(|r| r.seconds).sum::<f64>() / cell.len() as f64,
                });
            }
        }
    }
    Ok(ExperimentOutput { summary, records })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub q: usize,
    pub estimator: String,
    /// `None` when the estimator was not run, see `note`.
    pub mean_seconds: Option<f64>,
    pub note: Option<String>,
}

/// Mean wall time of each estimator on the 3 x q chi-square layout, over
/// `iterations` independent samples per width. Runs sequentially.
pub fn run_timing(
    widths: &[usize],
    n: usize,
    estimators: &[Estimator],
    iterations: usize,
    seed: u64,
    cfg: &JointDiagConfig,
    vector_cap: usize,
) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(TbssError::Config("iterations must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &q in widths {
        let layout = Layout::timing(q)?;
        let samples = (0..iterations)
            .map(|it| sample_latent(&layout, n, derive_seed(seed, &[q as u64, it as u64])))
            .collect::<Result<Vec<_>>>()?;
        for est in estimators {
            if matches!(est, Estimator::Vectorized(_)) && layout.rho() > vector_cap {
                rows.push(TimingRow {
                    q,
                    estimator: est.label(),
                    mean_seconds: None,
                    note: Some(format!(
                        "skipped: rho={} exceeds cap {vector_cap}",
                        layout.rho()
                    )),
                });
                continue;
            }
            let mut total = 0.0;
            let mut note = None;
            for s in &samples {
                let clock = Instant::now();
                if let Err(e) = est.fit(s, cfg, vector_cap) {
                    note = Some(format!("failed: {e}"));
                    break;
                }
                total += clock.elapsed().as_secs_f64();
            }
            rows.push(TimingRow {
                q,
                estimator: est.label(),
                mean_seconds: note.is_none().then(|| total / iterations as f64),
                note,
            });
        }
    }
    Ok(rows)
}

/// The estimator list of the timing study.
pub fn timing_estimators() -> Vec<Estimator> {
    use crate::estimators::ModeEstimator;
    vec![
        Estimator::Vectorized(VectorMethod::Vfobi),
        Estimator::Tensorial(ModePlan::uniform(2, ModeEstimator::Tfobi)),
        Estimator::Vectorized(VectorMethod::KVjade(1)),
        Estimator::Vectorized(VectorMethod::KVjade(2)),
        Estimator::Vectorized(VectorMethod::KVjade(3)),
        Estimator::Vectorized(VectorMethod::Vjade),
        Estimator::Tensorial(ModePlan::k_tjade(&[1, 1])),
        Estimator::Tensorial(ModePlan::k_tjade(&[1, 2])),
        Estimator::Tensorial(ModePlan::k_tjade(&[2, 1])),
        Estimator::Tensorial(ModePlan::k_tjade(&[2, 2])),
        Estimator::Tensorial(ModePlan::uniform(2, ModeEstimator::Tjade)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_round_trip() {
        for s in ["N", "U", "E", "chisq(3)", "gamma(0.9)"] {
            let d: Distribution = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert_eq!(
            "C".parse::<Distribution>().unwrap(),
            Distribution::ChiSquared(1.0)
        );
        assert!("gamma(-1)".parse::<Distribution>().is_err());
        assert!("t(3)".parse::<Distribution>().is_err());
    }

    #[test]
    fn preset_shapes() {
        assert_eq!(Layout::setting1().dims, vec![3, 3]);
        assert_eq!(Layout::setting2().rho(), 36);
        assert_eq!(
            Layout::timing(5).unwrap().cell(&[2, 4]),
            Distribution::ChiSquared(15.0)
        );
        assert_eq!(Layout::scree_demo().rho(), 24);
    }

    #[test]
    fn setting2_faces() {
        let l = Layout::setting2();
        assert_eq!(l.cell(&[0, 0, 0]), Distribution::Exponential);
        assert_eq!(l.cell(&[1, 1, 2]), Distribution::Uniform);
        assert_eq!(l.cell(&[0, 1, 3]), Distribution::Uniform);
        assert_eq!(l.cell(&[2, 2, 3]), Distribution::Normal);
    }

    #[test]
    fn estimator_parsing() {
        assert_eq!(Estimator::parse("22-TJADE", 2).unwrap().label(), "22-TJADE");
        assert_eq!(
            Estimator::parse("12,3-tjade", 2).unwrap().label(),
            "(12,3)-TJADE"
        );
        assert_eq!(Estimator::parse("3-vjade", 2).unwrap().label(), "3-VJADE");
        assert!(Estimator::parse("123-tjade", 2).is_err());
        assert!(Estimator::parse("jade", 2).is_err());
    }

    #[test]
    fn derive_seed_separates_parts() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_ne!(derive_seed(1, &[]), derive_seed(2, &[]));
    }
}
