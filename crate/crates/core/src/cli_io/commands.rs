//! The `zeno` command-line driver.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use super::model::{parse_model, ModelDocument, ParseError};
use super::output::{
    convergence_csv, digest, evolution_csv, matrix_from_rows, stability_csv, trajectory_csv, RunManifest,
    TripleJson,
};
use crate::error::Error;
use crate::linear_systems::{stability_threshold, LinearMeanSystem};
use crate::master_equation::{convergence_harness, evolve_strided, harness_step, DensityMatrix};
use crate::operator_algebra::ZenoSplit;
use crate::slh_model::SlhTriple;
use crate::trajectories::{ensemble_mean, simulate_ensemble, Scheme, SimConfig};
use crate::zeno_elimination::{zeno_eliminate, zenofiability_report, ConditionTolerances};

/// Environment variable holding the default condition tolerance.
pub const TOLERANCE_ENV: &str = "ZENO_TOL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONDITION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "zeno", version, about = "Zeno limits of scaled SLH models")]
struct Cli {
    /// Tolerance for all three conditions (overrides ZENO_TOL).
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the scaling, kernel and decoupling conditions.
    Check {
        model: PathBuf,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the Zeno-limit triple.
    Eliminate {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the master equation.
    Evolve {
        model: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        time: TimeArgs,
        /// Keep every n-th step in the CSV (the last step is always kept).
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate conditioned trajectories.
    Traj {
        model: PathBuf,
        #[command(flatten)]
        target: TargetArgs,
        #[command(flatten)]
        time: TimeArgs,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of trajectories.
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare full-model evolution at increasing k with the Zeno model.
    Converge {
        model: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<f64>,
        #[command(flatten)]
        time: TimeArgs,
        /// Zeno-space initial state: `basis:<i>` or `mixed`.
        #[arg(long, default_value = "basis:0")]
        initial: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability of the linear mean system over a k grid.
    Linstab {
        /// JSON file with keys gamma1..gamma4, matrices as rows of [re, im].
        gammas: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Full,
    Zeno,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Homodyne,
    Counting,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Homodyne => Scheme::Homodyne,
            SchemeArg::Counting => Scheme::Counting,
        }
    }
}

#[derive(Debug, Args)]
struct TargetArgs {
    /// Full family at scale k, or its Zeno limit.
    #[arg(long = "model", id = "model_kind", value_enum, default_value = "zeno")]
    kind: ModelKind,
    /// Scale for the full model.
    #[arg(long)]
    k: Option<f64>,
    /// Initial state: `basis:<i>` in the model's space, `zeno:<i>` (the i-th
    /// Zeno basis vector), or `mixed`.
    #[arg(long, default_value = "zeno:0")]
    initial: String,
}

#[derive(Debug, Args)]
struct TimeArgs {
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
}

/// Failure of a command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse { file: PathBuf, error: ParseError },
    Io { path: PathBuf, error: std::io::Error },
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if is_zenofiability_failure(e) => EXIT_CONDITION,
            _ => EXIT_USAGE,
        }
    }
}

fn is_zenofiability_failure(e: &Error) -> bool {
    e.is_condition_violation() || matches!(e, Error::TrivialKernel | Error::FullKernel | Error::Singular { .. })
}

/// Variant name of an error, e.g. `ScalingViolation`.
fn kind_name(e: &Error) -> String {
    let debug = format!("{e:?}");
    debug.chars().take_while(|c| c.is_alphanumeric()).collect()
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Parse { file, error } => write!(f, "{}:{error}", file.display()),
            CliError::Io { path, error } => write!(f, "{}: {error}", path.display()),
            CliError::Core(e) => write!(f, "{}: {e}", kind_name(e)),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 2 when the model is not zenofiable,
/// 1 on usage, parse or I/O errors.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn tolerances(flag: Option<f64>) -> CliResult<ConditionTolerances> {
    let check = |v: f64, src: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(ConditionTolerances::uniform(v))
        } else {
            Err(CliError::Usage(format!("{src} must be a positive number, got {v}")))
        }
    };
    if let Some(v) = flag {
        return check(v, "--tol");
    }
    match std::env::var(TOLERANCE_ENV) {
        Ok(s) => {
            let v = s
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{TOLERANCE_ENV}={s:?} is not a number")))?;
            check(v, TOLERANCE_ENV)
        }
        Err(_) => Ok(ConditionTolerances::default()),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|error| CliError::Io { path: path.to_path_buf(), error })
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|error| CliError::Io { path: dir.to_path_buf(), error })?;
    }
    fs::write(path, contents).map_err(|error| CliError::Io { path: path.to_path_buf(), error })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("result types serialize");
    s.push('\n');
    s
}

fn load_model(path: &Path) -> CliResult<ModelDocument> {
    let text = read(path)?;
    parse_model(&text).map_err(|error| CliError::Parse { file: path.to_path_buf(), error })
}

struct Context {
    argv: Vec<String>,
    tol: ConditionTolerances,
}

impl Context {
    fn manifest(&self, artifact: &Path, canonical_input: &str, seeds: Vec<u64>) -> CliResult<()> {
        let m = RunManifest::new(self.argv.clone(), canonical_input, self.tol, seeds);
        write(&RunManifest::path_for(artifact), &to_json(&m))
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let ctx = Context { argv, tol: tolerances(cli.tol)? };
    match cli.command {
        Command::Check { model, out } => check(&ctx, &model, out.as_deref()),
        Command::Eliminate { model, out } => eliminate(&ctx, &model, &out),
        Command::Evolve { model, target, time, stride, out } => {
            evolve(&ctx, &model, &target, &time, stride, &out)
        }
        Command::Traj { model, target, time, scheme, seed, n, channel, out } => {
            traj(&ctx, &model, &target, &time, scheme.into(), seed, n, channel, &out)
        }
        Command::Converge { model, ks, time, initial, out } => converge(&ctx, &model, &ks, &time, &initial, &out),
        Command::Linstab { gammas, ks, out } => linstab(&ctx, &gammas, &ks, &out),
    }
}

#[derive(Serialize)]
struct CheckJson {
    zeno_dimension: usize,
    fast_dimension: usize,
    scaling_residual: f64,
    scaling_passed: bool,
    kernel_min_singular_value: f64,
    kernel_leak: f64,
    kernel_passed: bool,
    decoupling_residual: Option<f64>,
    decoupling_passed: Option<bool>,
    tolerances: ConditionTolerances,
    zenofiable: bool,
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "ok"
    } else {
        "FAIL"
    }
}

fn check(ctx: &Context, path: &Path, out: Option<&Path>) -> CliResult<()> {
    let doc = load_model(path)?;
    let split = doc.split()?;
    let report = zenofiability_report(doc.family(), &split, &ctx.tol)?;
    let tol = ctx.tol;
    println!("model: {}", path.display());
    println!("zeno dimension: {}, fast dimension: {}", split.zeno().dim(), split.fast().dim());
    println!("scaling     residual {:.3e} (tol {:.1e}) {}", report.scaling.residual, tol.scaling, verdict(report.scaling.passed));
    println!(
        "kernel      min singular value {:.3e}, leak {:.3e} (tol {:.1e}) {}",
        report.kernel.min_singular_value,
        report.kernel.kernel_leak,
        tol.kernel,
        verdict(report.kernel.passed)
    );
    match &report.decoupling {
        Some(d) => println!("decoupling  residual {:.3e} (tol {:.1e}) {}", d.residual, tol.decoupling, verdict(d.passed)),
        None => println!("decoupling  not evaluated (A_ff singular)"),
    }
    for w in doc.family().warnings() {
        println!("warning: {w}");
    }
    let zenofiable = report.scaling.passed && report.kernel.passed && report.decoupling.as_ref().is_some_and(|d| d.passed);
    if let Some(out) = out {
        let json = CheckJson {
            zeno_dimension: split.zeno().dim(),
            fast_dimension: split.fast().dim(),
            scaling_residual: report.scaling.residual,
            scaling_passed: report.scaling.passed,
            kernel_min_singular_value: report.kernel.min_singular_value,
            kernel_leak: report.kernel.kernel_leak,
            kernel_passed: report.kernel.passed,
            decoupling_residual: report.decoupling.as_ref().map(|d| d.residual),
            decoupling_passed: report.decoupling.as_ref().map(|d| d.passed),
            tolerances: tol,
            zenofiable,
        };
        write(out, &to_json(&json))?;
        ctx.manifest(out, &doc.to_canonical_string(), vec![])?;
    }
    if !report.scaling.passed {
        return Err(Error::ScalingViolation { residual: report.scaling.residual, tolerance: tol.scaling }.into());
    }
    if !report.kernel.passed {
        return Err(Error::KernelViolation {
            min_singular_value: report.kernel.min_singular_value,
            kernel_leak: report.kernel.kernel_leak,
            tolerance: tol.kernel,
        }
        .into());
    }
    match report.decoupling {
        Some(d) if !d.passed => {
            Err(Error::DecouplingViolation { residual: d.residual, tolerance: tol.decoupling }.into())
        }
        // The kernel check passed, so A_ff is invertible and hats were computed.
        _ => Ok(()),
    }
}

fn eliminate(ctx: &Context, path: &Path, out: &Path) -> CliResult<()> {
    let doc = load_model(path)?;
    let split = doc.split()?;
    let result = zeno_eliminate(doc.family(), &split, &ctx.tol)?;
    let json = TripleJson::new(&result.zeno_triple, Some(split.zeno()), Some(result.residuals));
    write(out, &to_json(&json))?;
    ctx.manifest(out, &doc.to_canonical_string(), vec![])?;
    println!(
        "wrote {}: {} channel(s) on a {}-dimensional Zeno space",
        out.display(),
        result.zeno_triple.channels(),
        split.zeno().dim()
    );
    Ok(())
}

enum Initial {
    Basis(usize),
    Zeno(usize),
    Mixed,
}

fn parse_initial(arg: &str) -> CliResult<Initial> {
    let index = |s: &str| {
        s.parse::<usize>().map_err(|_| CliError::Usage(format!("bad state index in --initial {arg:?}")))
    };
    if arg == "mixed" {
        Ok(Initial::Mixed)
    } else if let Some(i) = arg.strip_prefix("basis:") {
        Ok(Initial::Basis(index(i)?))
    } else if let Some(i) = arg.strip_prefix("zeno:") {
        Ok(Initial::Zeno(index(i)?))
    } else {
        Err(CliError::Usage(format!("--initial must be basis:<i>, zeno:<i> or mixed, got {arg:?}")))
    }
}

/// The model to simulate and the initial state on its space.
fn target_model(
    ctx: &Context,
    doc: &ModelDocument,
    target: &TargetArgs,
) -> CliResult<(SlhTriple, DensityMatrix, ZenoSplit)> {
    let split = doc.split()?;
    let initial = parse_initial(&target.initial)?;
    let g = match target.kind {
        ModelKind::Zeno => {
            if target.k.is_some() {
                return Err(CliError::Usage("--k applies to --model full only".into()));
            }
            zeno_eliminate(doc.family(), &split, &ctx.tol)?.zeno_triple
        }
        ModelKind::Full => {
            let k = target.k.ok_or_else(|| CliError::Usage("--model full needs --k".into()))?;
            doc.family().instantiate(k)?
        }
    };
    let space = g.space().clone();
    let rho = match (initial, target.kind) {
        (Initial::Mixed, _) => DensityMatrix::maximally_mixed(&space),
        (Initial::Basis(i), _) | (Initial::Zeno(i), ModelKind::Zeno) => DensityMatrix::basis_state(&space, i)?,
        (Initial::Zeno(i), ModelKind::Full) => {
            let zeno = split.zeno();
            if i >= zeno.dim() {
                return Err(CliError::Usage(format!("zeno:{i} out of range for a {}-dimensional Zeno space", zeno.dim())));
            }
            let psi: Vec<_> = zeno.columns().column(i).iter().copied().collect();
            DensityMatrix::pure(&space, &psi)?
        }
    };
    Ok((g, rho, split))
}

fn evolve(
    ctx: &Context,
    path: &Path,
    target: &TargetArgs,
    time: &TimeArgs,
    stride: usize,
    out: &Path,
) -> CliResult<()> {
    let doc = load_model(path)?;
    let (g, rho0, _) = target_model(ctx, &doc, target)?;
    let dt = match target.kind {
        ModelKind::Full => harness_step(&g, time.dt),
        ModelKind::Zeno => time.dt,
    };
    if dt < time.dt {
        log::info!("step reduced to {dt:.3e} for the full model");
    }
    let evo = evolve_strided(&g, &rho0, time.t_end, dt, stride)?;
    write(out, &evolution_csv(&evo))?;
    ctx.manifest(out, &doc.to_canonical_string(), vec![])?;
    println!(
        "wrote {}: {} rows, max trace drift {:.3e}",
        out.display(),
        evo.times.len(),
        evo.max_trace_drift()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn traj(
    ctx: &Context,
    path: &Path,
    target: &TargetArgs,
    time: &TimeArgs,
    scheme: Scheme,
    seed: u64,
    n: usize,
    channel: usize,
    out: &Path,
) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let doc = load_model(path)?;
    let (g, rho0, _) = target_model(ctx, &doc, target)?;
    let cfg = SimConfig { dt: time.dt, t_end: time.t_end, channel, seed, scheme };
    let results = simulate_ensemble(&g, &rho0, &cfg, n)?;
    let width = (n - 1).to_string().len().max(4);
    for (i, r) in results.iter().enumerate() {
        write(&out.join(format!("traj_{i:0width$}.csv")), &trajectory_csv(r))?;
    }
    write(&out.join("mean.csv"), &evolution_csv(&ensemble_mean(&results)?))?;
    let seeds = (0..n as u64).map(|i| seed.wrapping_add(i)).collect();
    ctx.manifest(out, &doc.to_canonical_string(), seeds)?;
    let jumps: usize = results.iter().map(|r| r.record.jump_count()).sum();
    println!("wrote {n} {scheme} trajectories to {} ({jumps} jumps)", out.display());
    Ok(())
}

fn converge(ctx: &Context, path: &Path, ks: &[f64], time: &TimeArgs, initial: &str, out: &Path) -> CliResult<()> {
    let doc = load_model(path)?;
    let split = doc.split()?;
    let zdim = split.zeno().dim();
    let zspace = crate::operator_algebra::HilbertSpace::flat(zdim)?;
    let rho0 = match parse_initial(initial)? {
        Initial::Mixed => DensityMatrix::maximally_mixed(&zspace),
        Initial::Basis(i) | Initial::Zeno(i) => DensityMatrix::basis_state(&zspace, i)?,
    };
    let points = convergence_harness(doc.family(), &split, &rho0, ks, time.t_end, time.dt, &ctx.tol)?;
    write(out, &convergence_csv(&points))?;
    ctx.manifest(out, &doc.to_canonical_string(), vec![])?;
    for p in &points {
        println!("k = {:<8} trace distance {:.3e}  leaked {:.3e}", p.k, p.distance, p.leaked);
    }
    Ok(())
}

/// Input of `linstab`.
#[derive(Debug, Deserialize)]
struct GammaFile {
    gamma1: Vec<Vec<[f64; 2]>>,
    gamma2: Vec<Vec<[f64; 2]>>,
    gamma3: Vec<Vec<[f64; 2]>>,
    gamma4: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct StabilitySummary {
    predicted_stable: bool,
    observed_stable: bool,
    k0: Option<f64>,
    agrees: bool,
    gamma4_eigenvalue_margin: f64,
    gamma0_eigenvalue_margin: f64,
}

fn linstab(ctx: &Context, path: &Path, ks: &[f64], out: &Path) -> CliResult<()> {
    let text = read(path)?;
    let file: GammaFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let matrix = |name: &str, rows: &[Vec<[f64; 2]>]| {
        matrix_from_rows(rows).ok_or_else(|| CliError::Usage(format!("{name} has rows of unequal length")))
    };
    let sys = LinearMeanSystem::new(
        matrix("gamma1", &file.gamma1)?,
        matrix("gamma2", &file.gamma2)?,
        matrix("gamma3", &file.gamma3)?,
        matrix("gamma4", &file.gamma4)?,
    )?;
    let report = stability_threshold(&sys, ks)?;
    write(out, &stability_csv(&report))?;
    let mut m = RunManifest::new(ctx.argv.clone(), &text, ctx.tol, vec![]);
    m.input_digest = digest(&text);
    write(&RunManifest::path_for(out), &to_json(&m))?;
    let summary = StabilitySummary {
        predicted_stable: report.predicted_stable,
        observed_stable: report.observed_stable,
        k0: report.k0,
        agrees: report.agrees,
        gamma4_eigenvalue_margin: report.gamma4.eigenvalue_margin,
        gamma0_eigenvalue_margin: report.gamma0.eigenvalue_margin,
    };
    print!("{}", to_json(&summary));
    Ok(())
}
