//! Command-line front end: `fit`, `simulate`, `bench`, `md` and `scree`.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for runtime failures.
//! Outputs are written to a temporary file and renamed, so a failing command
//! leaves no partial file behind.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::TbssError;
use crate::estimators::{
    fit, fit_vectorized_capped, ModeEstimator, ModePlan, VectorMethod, DEFAULT_VECTOR_CAP,
};
use crate::io::{read_input, write_atomic, write_sample, UnmixingDocument};
use crate::jointdiag::JointDiagConfig;
use crate::linalg::inverse;
use crate::metrics::{md_index, scree};
use crate::simulation::{
    run_experiment, run_timing, timing_estimators, Estimator, ExperimentSpec, Layout,
    MixingScenario,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "tbss",
    version,
    about = "Tensorial blind source separation with TFOBI, TJADE and k-TJADE"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate unmixing matrices for a sample.
    Fit(FitArgs),
    /// Monte Carlo study of transformed MD indices.
    Simulate(SimulateArgs),
    /// Running times on the 3 x q chi-square layout.
    Bench(BenchArgs),
    /// MD index between two saved unmixing documents.
    Md(MdArgs),
    /// Sequential-MD scree curve for choosing k.
    Scree(ScreeArgs),
}

#[derive(Debug, Args)]
struct JointDiagArgs {
    /// Stop once a sweep's largest rotation sine is below this value.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Maximum number of Jacobi sweeps.
    #[arg(long, default_value_t = 100)]
    max_sweeps: usize,
}

impl JointDiagArgs {
    fn config(&self) -> Result<JointDiagConfig, CliError> {
        JointDiagConfig::new(self.tol, self.max_sweeps).map_err(usage)
    }
}

#[derive(Debug, Args)]
struct InputArgs {
    /// TBSS1 sample file, or CSV when --dims is given.
    #[arg(long, short)]
    input: PathBuf,
    /// Treat the input as CSV with one flattened observation per line.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Tfobi,
    Tjade,
    Ktjade,
    Vfobi,
    Vjade,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Per-mode band widths, e.g. 1,1,0 (0 leaves the mode unmixed).
    /// For vjade a single value gives k-VJADE.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[command(flatten)]
    jd: JointDiagArgs,
    #[arg(long, default_value_t = DEFAULT_VECTOR_CAP)]
    vector_cap: usize,
    /// JSON unmixing document (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write the estimated latent sample as TBSS1.
    #[arg(long)]
    latent_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Preset layout: 1, 2, 3 or scree.
    #[arg(long, conflicts_with = "layout")]
    setting: Option<String>,
    /// JSON layout file: {"dims": [..], "cells": ["E", "chisq(3)", ...]}.
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mixing scenarios: identity, orthogonal, gaussian.
    #[arg(long, value_delimiter = ',', default_value = "identity")]
    scenarios: Vec<String>,
    /// Estimators such as 22-tjade, tjade, tfobi, 3-vjade, vjade, vfobi.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[command(flatten)]
    jd: JointDiagArgs,
    #[arg(long, default_value_t = DEFAULT_VECTOR_CAP)]
    vector_cap: usize,
    /// Add a mean wall time column (makes output nondeterministic).
    #[arg(long)]
    timings: bool,
    /// Per-replicate TSV.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Summary TSV (default: stdout).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "5,10,15,20,25,30,35,40,45,50"
    )]
    q: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Estimators (default: the full comparison list).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[command(flatten)]
    jd: JointDiagArgs,
    #[arg(long, default_value_t = DEFAULT_VECTOR_CAP)]
    vector_cap: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MdArgs {
    /// Unmixing document A.
    a: PathBuf,
    /// Unmixing document B.
    b: PathBuf,
}

#[derive(Debug, Args)]
struct ScreeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// 1-based modes to scan (default: all modes).
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<usize>>,
    /// Band widths used for the other modes (default: 1 for every mode).
    #[arg(long, value_delimiter = ',')]
    reference_k: Option<Vec<usize>>,
    #[command(flatten)]
    jd: JointDiagArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(TbssError),
}

impl From<TbssError> for CliError {
    fn from(e: TbssError) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(TbssError::Io(e))
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.6}")
    }
}

fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let cfg = a.jd.config()?;
    let sample = read_input(&a.input.input, a.input.dims.as_deref())?;
    let order = sample.order();
    let method = match (a.method, &a.k) {
        (Some(m), _) => m,
        (None, Some(_)) => Method::Ktjade,
        (None, None) => Method::Tjade,
    };
    let result = match method {
        Method::Tfobi | Method::Tjade | Method::Ktjade => {
            let plan = match method {
                Method::Tfobi => ModePlan::uniform(order, ModeEstimator::Tfobi),
                Method::Tjade => ModePlan::uniform(order, ModeEstimator::Tjade),
                _ => {
                    let ks =
                        a.k.as_ref()
                            .ok_or_else(|| usage("--method ktjade needs --k"))?;
                    if ks.len() != order {
                        return Err(usage(format!(
                            "--k has {} values, the sample has order {order}",
                            ks.len()
                        )));
                    }
                    ModePlan::k_tjade(ks)
                }
            };
            plan.validate(sample.dims()).map_err(usage)?;
            fit(&sample, &plan, &cfg)?
        }
        Method::Vfobi | Method::Vjade => {
            let vm = match (method, a.k.as_deref()) {
                (Method::Vfobi, _) => VectorMethod::Vfobi,
                (_, None) => VectorMethod::Vjade,
                (_, Some([k])) => VectorMethod::KVjade(*k),
                _ => return Err(usage("vjade takes a single --k value")),
            };
            fit_vectorized_capped(&sample, vm, &cfg, a.vector_cap)?
        }
    };

    let mut log = String::new();
    for m in &result.modes {
        let d = &m.diagnostics;
        let t = &d.timings;
        let _ = write!(log, "mode {} [{}]:", m.mode + 1, m.estimator);
        if let (Some(s), Some(c)) = (d.sweeps, d.converged) {
            let _ = write!(log, " sweeps={s} converged={c}");
        }
        let _ = writeln!(
            log,
            " standardize={:.3}s fobi={:.3}s cumulants={:.3}s joint_diag={:.3}s",
            t.standardize.as_secs_f64(),
            t.fobi.as_secs_f64(),
            t.cumulants.as_secs_f64(),
            t.joint_diag.as_secs_f64()
        );
        if d.weak_separation {
            let _ = writeln!(
                log,
                "mode {}: warning: kurtosis means are weakly separated",
                m.mode + 1
            );
        }
    }
    let _ = writeln!(log, "total {:.3}s", result.total_time().as_secs_f64());

    let doc = UnmixingDocument::from_result(&result);
    let json = doc.to_json()?;
    if let Some(p) = &a.latent_out {
        write_sample(p, &result.latent)?;
    }
    emit(a.output.as_deref(), &json)?;
    eprint!("{log}");
    Ok(())
}

fn load_layout(a: &SimulateArgs) -> Result<Layout, CliError> {
    match (&a.setting, &a.layout) {
        (Some(s), None) => Layout::preset(s).map_err(usage),
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p)?;
            let layout: Layout = serde_json::from_str(&text).map_err(TbssError::from)?;
            layout.validate().map_err(usage)?;
            Ok(layout)
        }
        _ => Err(usage("give exactly one of --setting or --layout")),
    }
}

fn default_estimators(setting: Option<&str>, order: usize) -> Vec<&'static str> {
    match (setting, order) {
        (Some("1"), _) => vec!["3-vjade", "vjade", "22-tjade", "tjade"],
        (Some("2"), _) => vec!["123-tjade", "tjade"],
        (Some("3"), _) => vec!["11-tjade", "22-tjade", "tjade"],
        _ => vec!["tfobi", "tjade"],
    }
}

fn parse_estimators(list: &[String], order: usize) -> Result<Vec<Estimator>, CliError> {
    list.iter()
        .map(|s| Estimator::parse(s, order).map_err(usage))
        .collect()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = a.jd.config()?;
    let layout = load_layout(a)?;
    let order = layout.dims.len();
    let names: Vec<String> = match &a.estimators {
        Some(v) => v.clone(),
        None => default_estimators(a.setting.as_deref(), order)
            .into_iter()
            .map(String::from)
            .collect(),
    };
    let estimators = parse_estimators(&names, order)?;
    let scenarios = a
        .scenarios
        .iter()
        .map(|s| s.parse::<MixingScenario>().map_err(usage))
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = ExperimentSpec::new(layout, a.n.clone(), a.reps, estimators, a.seed);
    spec.scenarios = scenarios;
    spec.jointdiag = cfg;
    spec.vector_cap = a.vector_cap;
    spec.validate().map_err(usage)?;
    let out = run_experiment(&spec)?;

    let mut table = String::from(
        "estimator\tscenario\tn\treplicates\tfailures\tmean_tmd\tsd_tmd\tmean_md\tmedian_md",
    );
    if a.timings {
        table.push_str("\tmean_seconds");
    }
    table.push('\n');
    for r in &out.summary {
        let _ = write!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.estimator,
            r.scenario.name(),
            r.n,
            r.replicates,
            r.failures,
            fmt_f64(r.mean_transformed_md),
            fmt_f64(r.sd_transformed_md),
            fmt_f64(r.mean_md),
            fmt_f64(r.median_md)
        );
        if a.timings {
            let _ = write!(table, "\t{}", fmt_f64(r.mean_seconds));
        }
        table.push('\n');
    }
    if let Some(p) = &a.records {
        let mut rec =
            String::from("estimator\tscenario\tn\treplicate\tmd\ttransformed_md\terror\n");
        for r in &out.records {
            let _ = writeln!(
                rec,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                spec.estimators[r.estimator].label(),
                r.scenario.name(),
                r.n,
                r.replicate,
                r.md.map_or("NA".into(), |v| format!("{v:.12e}")),
                r.transformed_md
                    .map_or("NA".into(), |v| format!("{v:.12e}")),
                r.error.as_deref().unwrap_or("").replace(['\t', '\n'], " ")
            );
        }
        write_atomic(p, rec.as_bytes())?;
    }
    for r in out.summary.iter().filter(|r| r.failures > 0) {
        eprintln!(
            "{} / {} / n={}: {} of {} replicates failed",
            r.estimator,
            r.scenario.name(),
            r.n,
            r.failures,
            r.replicates
        );
    }
    emit(a.output.as_deref(), &table)
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let cfg = a.jd.config()?;
    let estimators = match &a.estimators {
        Some(v) => parse_estimators(v, 2)?,
        None => timing_estimators(),
    };
    if a.q.contains(&0) {
        return Err(usage("q must be positive"));
    }
    let rows = run_timing(
        &a.q,
        a.n,
        &estimators,
        a.iterations,
        a.seed,
        &cfg,
        a.vector_cap,
    )
    .map_err(usage)?;
    let mut table = String::from("q\testimator\tmean_seconds\tnote\n");
    for r in rows {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}",
            r.q,
            r.estimator,
            r.mean_seconds.map_or("NA".into(), |s| format!("{s:.6}")),
            r.note.unwrap_or_default()
        );
    }
    emit(a.output.as_deref(), &table)
}

fn cmd_md(a: &MdArgs) -> Result<(), CliError> {
    let da = UnmixingDocument::read(&a.a)?;
    let db = UnmixingDocument::read(&a.b)?;
    if da.dims != db.dims {
        return Err(usage(format!(
            "dims differ: {:?} vs {:?}",
            da.dims, db.dims
        )));
    }
    let mut out = String::from("mode\tmd\n");
    if !da.vectorized && !db.vectorized {
        let (ma, mb) = (da.unmixing_matrices()?, db.unmixing_matrices()?);
        for (m, (x, y)) in ma.iter().zip(&mb).enumerate() {
            let d = md_index(&(x * inverse(y)?))?;
            let _ = writeln!(out, "{}\t{:.12}", m + 1, d);
        }
    }
    let full = md_index(&(da.full_unmixing()? * inverse(&db.full_unmixing()?)?))?;
    let _ = writeln!(out, "all\t{full:.12}");
    emit(None, &out)
}

fn cmd_scree(a: &ScreeArgs) -> Result<(), CliError> {
    let cfg = a.jd.config()?;
    let sample = read_input(&a.input.input, a.input.dims.as_deref())?;
    let order = sample.order();
    let reference = match &a.reference_k {
        Some(ks) if ks.len() == order => ModePlan::k_tjade(ks),
        Some(ks) => {
            return Err(usage(format!(
                "--reference-k has {} values, need {order}",
                ks.len()
            )))
        }
        None => ModePlan::k_tjade(&vec![1; order]),
    };
    reference.validate(sample.dims()).map_err(usage)?;
    let modes: Vec<usize> = match &a.mode {
        Some(ms) => ms
            .iter()
            .map(|&m| {
                if m == 0 || m > order {
                    Err(usage(format!("mode {m} outside 1..={order}")))
                } else {
                    Ok(m - 1)
                }
            })
            .collect::<Result<_, _>>()?,
        None => (0..order).filter(|&m| sample.dims()[m] >= 2).collect(),
    };
    let mut out = String::from("mode\tk\tm_star\n");
    for m in modes {
        let curve = scree(&sample, m, &reference, &cfg)?;
        for (k, v) in curve.points() {
            let _ = writeln!(out, "{}\t{k}\t{v:.12}", m + 1);
        }
        if let Some(k) = curve.largest_drop() {
            eprintln!(
                "mode {}: largest drop ends at k={k} (heuristic reading of the elbow)",
                m + 1
            );
        }
    }
    emit(a.output.as_deref(), &out)
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // A pool may already exist when `run` is called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Md(a) => cmd_md(a),
        Command::Scree(a) => cmd_scree(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
