//! `hardlabel` command-line front end.
//!
//! `attack` runs one attack and writes the adversarial image, a JSON report
//! and a trace CSV. `sweep` runs the Cartesian product of comma-separated
//! hyperparameter lists and writes one trace per cell plus `summary.csv`.
//! `serve` exposes a built-in oracle over the line-delimited JSON protocol
//! understood by `--oracle exec:...`.
//!
//! Exit codes: 0 on success, 2 when an attack ran but found no adversarial
//! image, 1 on usage or runtime errors.

use std::ffi::OsString;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardlabel_core::imageio::{read_image, save_image, write_report, write_trace};
use hardlabel_core::oracle::{
    load_mlp, ExternalOracle, LinearOracle, NearestCentroidOracle, OracleRequest, OracleResponse,
};
use hardlabel_core::{
    run_attack, run_boundary_attack, run_with_restarts, AttackConfig, AttackResult, BoundaryAttackConfig, Classifier,
    Error, Goal, ImageTensor, Label,
};
use rayon::prelude::*;
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ATTACK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hardlabel",
    version,
    about = "Label-only adversarial search under a query budget"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one attack.
    Attack(AttackArgs),
    /// Run a grid of attacks over delta-min, n-pixels and theta.
    Sweep(SweepArgs),
    /// Answer oracle requests on stdin with a built-in classifier.
    Serve(ServeArgs),
}

/// Classifier selector: `linear:PATH`, `centroid:PATH`, `mlp:PATH` or
/// `exec:COMMAND`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(into = "String")]
pub enum OracleSpec {
    Linear(PathBuf),
    Centroid(PathBuf),
    Mlp(PathBuf),
    Exec(String),
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:VALUE, got {s:?}"))?;
        if rest.is_empty() {
            return Err(format!("missing value after {kind:?}"));
        }
        match kind {
            "linear" => Ok(Self::Linear(rest.into())),
            "centroid" => Ok(Self::Centroid(rest.into())),
            "mlp" => Ok(Self::Mlp(rest.into())),
            "exec" => Ok(Self::Exec(rest.into())),
            _ => Err(format!("unknown oracle kind {kind:?} (linear, centroid, mlp, exec)")),
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(p) => write!(f, "linear:{}", p.display()),
            Self::Centroid(p) => write!(f, "centroid:{}", p.display()),
            Self::Mlp(p) => write!(f, "mlp:{}", p.display()),
            Self::Exec(c) => write!(f, "exec:{c}"),
        }
    }
}

impl From<OracleSpec> for String {
    fn from(spec: OracleSpec) -> Self {
        spec.to_string()
    }
}

impl OracleSpec {
    pub fn load(&self, num_classes: Option<usize>) -> hardlabel_core::Result<Box<dyn Classifier>> {
        Ok(match self {
            Self::Linear(p) => Box::new(LinearOracle::load(p)?),
            Self::Centroid(p) => Box::new(NearestCentroidOracle::load(p)?),
            Self::Mlp(p) => Box::new(load_mlp(p)?),
            Self::Exec(c) => Box::new(ExternalOracle::spawn(c, num_classes)?),
        })
    }
}

/// `untargeted`, `targeted` (target = the reference's class) or
/// `targeted:CLASS`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeArg(pub Goal);

impl FromStr for ModeArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "untargeted" => Ok(Self(Goal::Untargeted)),
            None if s == "targeted" => Ok(Self(Goal::Targeted(None))),
            Some(("targeted", class)) => class
                .parse()
                .map(|k| Self(Goal::Targeted(Some(Label(k)))))
                .map_err(|_| format!("invalid target class {class:?}")),
            _ => Err(format!("expected untargeted, targeted or targeted:CLASS, got {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Red,
    Boundary,
}

/// Flags shared by `attack` and `sweep`.
#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub source: PathBuf,
    /// Adversarial starting image; repeat to cycle references across restarts.
    #[arg(long, required = true)]
    pub reference: Vec<PathBuf>,
    #[arg(long)]
    pub oracle: OracleSpec,
    /// Highest class index plus one, used to validate `exec:` oracle replies.
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub max_queries: usize,
    #[arg(long, env = "RED_ATTACK_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "untargeted")]
    pub mode: ModeArg,
    /// Pixel range L; images are rescaled to [0, L].
    #[arg(long)]
    pub range: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub max_jump: f64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bracket width for boundary bisection; defaults to 0.01 L.
    #[arg(long)]
    pub delta_min: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub n_pixels: usize,
    #[arg(long, default_value_t = 0.0196)]
    pub theta: f64,
    #[arg(long, value_enum, default_value_t = Algorithm::Red)]
    pub algorithm: Algorithm,
    /// Adversarial image output (`.pgm`, `.ppm` or `.redf`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report; the trace goes next to it as `<name>.trace.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated values; default 0.01 L.
    #[arg(long)]
    pub delta_min: Option<String>,
    #[arg(long, default_value = "20")]
    pub n_pixels: String,
    #[arg(long, default_value = "0.0196")]
    pub theta: String,
    /// Directory for per-cell traces and `summary.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Built-in oracle to serve (`exec:` is not allowed).
    #[arg(long)]
    pub oracle: OracleSpec,
}

/// Failure modes of a subcommand.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Core(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Core(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Attack(a) => cmd_attack(a),
        Command::Sweep(s) => cmd_sweep(s),
        Command::Serve(s) => cmd_serve(s).map(|()| true),
    };
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_ATTACK_FAILED,
        Err(e) => {
            eprintln!("hardlabel: {e}");
            EXIT_ERROR
        }
    }
}

struct Inputs {
    source: ImageTensor,
    references: Vec<ImageTensor>,
    oracle: Box<dyn Classifier>,
    range: f64,
}

fn load_inputs(common: &CommonArgs) -> CliResult<Inputs> {
    if let Some(l) = common.range {
        if !(l > 0.0) {
            return Err(CliError::Usage(format!("--range must be positive, got {l}")));
        }
    }
    let source = read_image(&common.source, common.range)?;
    let references = common
        .reference
        .iter()
        .map(|p| read_image(p, common.range))
        .collect::<hardlabel_core::Result<Vec<_>>>()?;
    let oracle = common.oracle.load(common.num_classes)?;
    let range = source.range();
    Ok(Inputs {
        source,
        references,
        oracle,
        range,
    })
}

fn attack_config(common: &CommonArgs, delta_min: f64, n_pixels: usize, theta: f64) -> AttackConfig {
    AttackConfig {
        delta_min,
        n_pixels,
        theta,
        max_jump: common.max_jump,
        max_queries: common.max_queries,
        seed: common.seed,
        mode: common.mode.0,
        restarts: common.restarts,
        ..AttackConfig::default()
    }
}

fn run_red(inputs: &Inputs, config: &AttackConfig) -> hardlabel_core::Result<AttackResult> {
    if config.restarts <= 1 && inputs.references.len() == 1 {
        run_attack(&inputs.source, &inputs.references[0], inputs.oracle.as_ref(), config)
    } else {
        run_with_restarts(&inputs.source, &inputs.references, inputs.oracle.as_ref(), config)
    }
}

/// Everything that determines an `attack` run, as recorded in the report.
#[derive(Serialize)]
struct AttackRecord<'a, C: Serialize> {
    algorithm: Algorithm,
    oracle: &'a OracleSpec,
    source: &'a Path,
    references: &'a [PathBuf],
    range: f64,
    parameters: C,
}

fn finish_attack<C: Serialize>(
    args: &AttackArgs,
    inputs: &Inputs,
    result: &AttackResult,
    parameters: C,
) -> CliResult<bool> {
    if let Some(out) = &args.out {
        save_image(out, &result.best_adversarial)?;
    }
    if let Some(report) = &args.report {
        let record = AttackRecord {
            algorithm: args.algorithm,
            oracle: &args.common.oracle,
            source: &args.common.source,
            references: &args.common.reference,
            range: inputs.range,
            parameters,
        };
        write_report(report, result, &inputs.source, &record)?;
    }
    let m = &result.metrics;
    println!(
        "succeeded={} queries={} l2_sq={:.6} ssim={} cc={}",
        result.succeeded,
        result.queries_used,
        m.perturbation_norm,
        fmt_opt(m.ssim),
        fmt_opt(m.correlation)
    );
    Ok(result.succeeded)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6}"))
}

pub fn cmd_attack(args: &AttackArgs) -> CliResult<bool> {
    let inputs = load_inputs(&args.common)?;
    let delta_min = args.delta_min.unwrap_or(0.01 * inputs.range);
    match args.algorithm {
        Algorithm::Red => {
            let config = attack_config(&args.common, delta_min, args.n_pixels, args.theta);
            let result = run_red(&inputs, &config)?;
            finish_attack(args, &inputs, &result, config)
        }
        Algorithm::Boundary => {
            if args.common.restarts > 1 || inputs.references.len() > 1 {
                return Err(CliError::Usage(
                    "--algorithm boundary takes a single --reference and no --restarts".into(),
                ));
            }
            let config = BoundaryAttackConfig {
                max_queries: args.common.max_queries,
                seed: args.common.seed,
                mode: args.common.mode.0,
                ..BoundaryAttackConfig::default()
            };
            let result = run_boundary_attack(&inputs.source, &inputs.references[0], inputs.oracle.as_ref(), &config)?;
            finish_attack(args, &inputs, &result, config)
        }
    }
}

fn parse_list<T: FromStr>(flag: &str, raw: &str) -> CliResult<Vec<T>> {
    let values: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Usage(format!("--{flag} needs at least one value")));
    }
    values
        .into_iter()
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("--{flag}: cannot parse {v:?}")))
        })
        .collect()
}

/// One row of `summary.csv`.
#[derive(Debug, Serialize)]
struct SummaryRow {
    delta_min: f64,
    n_pixels: usize,
    theta: f64,
    seed: u64,
    final_norm: f64,
    ssim: Option<f64>,
    cc: Option<f64>,
    queries_used: usize,
    succeeded: bool,
    trace_file: String,
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<bool> {
    let inputs = load_inputs(&args.common)?;
    let deltas: Vec<f64> = match &args.delta_min {
        Some(raw) => parse_list("delta-min", raw)?,
        None => vec![0.01 * inputs.range],
    };
    let ns: Vec<usize> = parse_list("n-pixels", &args.n_pixels)?;
    let thetas: Vec<f64> = parse_list("theta", &args.theta)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let mut cells = Vec::with_capacity(deltas.len() * ns.len() * thetas.len());
    for &d in &deltas {
        for &n in &ns {
            for &t in &thetas {
                cells.push((d, n, t));
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(d, n, t))| -> CliResult<SummaryRow> {
            let config = attack_config(&args.common, d, n, t);
            let result = run_red(&inputs, &config)?;
            let name = format!("cell{i:03}_dm{d}_n{n}_th{t}.csv");
            write_trace(args.out_dir.join(&name), &result.trace)?;
            Ok(SummaryRow {
                delta_min: d,
                n_pixels: n,
                theta: t,
                seed: args.common.seed,
                final_norm: result.metrics.perturbation_norm,
                ssim: result.metrics.ssim,
                cc: result.metrics.correlation,
                queries_used: result.queries_used,
                succeeded: result.succeeded,
                trace_file: name,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut writer = csv::Writer::from_path(args.out_dir.join("summary.csv"))?;
    for row in &rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    println!("{} cells written to {}", rows.len(), args.out_dir.display());
    Ok(rows.iter().all(|r| r.succeeded))
}

pub fn cmd_serve(args: &ServeArgs) -> CliResult<()> {
    if matches!(args.oracle, OracleSpec::Exec(_)) {
        return Err(CliError::Usage("serve needs a built-in oracle, not exec:".into()));
    }
    let oracle = args.oracle.load(None)?;
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: OracleRequest =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("oracle request: {e}")))?;
        let label = oracle.classify(&request.into_image()?)?;
        serde_json::to_writer(&mut stdout, &OracleResponse { label }).map_err(Error::from)?;
        stdout.write_all(b"\n")?;
        stdout.flush()?;
    }
    Ok(())
}
