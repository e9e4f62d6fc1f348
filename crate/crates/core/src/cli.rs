//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 I/O failure.
//! Every failure prints a single `error: ...` line on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    default_lambdas, failure_counts, figure_config, run_benchmark, summarize, summary_csv, summary_table,
    tail_csv, tail_experiment, tail_table, BenchConfig, Reference, TailConfig,
};
use crate::data::{
    dataset_presets, generate, read_csv, write_csv, CorruptionSpec, CorruptionStrategy, DatasetSpec, Generator,
    MixtureComponent,
};
use crate::error::Error;
use crate::estimator::{irls_estimate, EstimatorConfig};
use crate::matrix::Matrix;
use crate::score::{ScoreFamily, ScoreKind};
use crate::tuning::{select_beta, TuningOptions};

pub const SEED_ENV: &str = "ROBUSTMEAN_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "robustmean", version, about = "Robust M-estimators of the multivariate mean")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the mean of a CSV sample.
    Estimate(EstimateArgs),
    /// Select the score scale for a CSV sample and print the criterion trace.
    Tune(TuneArgs),
    /// Generate a dataset as CSV plus a JSON sidecar.
    Generate(GenerateArgs),
    /// Run the Monte-Carlo comparison.
    Bench(BenchArgs),
    /// Compare the estimator's deviation tail with the influence tail.
    Tails(TailsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Huber,
    Catoni,
    Poly,
}

impl From<EstimatorArg> for ScoreKind {
    fn from(a: EstimatorArg) -> Self {
        match a {
            EstimatorArg::Huber => ScoreKind::Huber,
            EstimatorArg::Catoni => ScoreKind::Catoni,
            EstimatorArg::Poly => ScoreKind::Polynomial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Header-less CSV, one observation per row.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "huber")]
    pub estimator: EstimatorArg,
    /// Score scale.
    #[arg(long, conflicts_with = "auto_beta", required_unless_present = "auto_beta")]
    pub beta: Option<f64>,
    /// Pick the scale by grid search.
    #[arg(long)]
    pub auto_beta: bool,
    /// Exponent of the polynomial score.
    #[arg(long, default_value_t = 5)]
    pub p: u32,
    #[arg(long, default_value_t = EstimatorConfig::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = EstimatorConfig::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    pub output: OutputFormat,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "huber")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 5)]
    pub p: u32,
    #[arg(long, default_value_t = 40)]
    pub grid_size: usize,
    /// Assumed outlier fraction in the corruption term.
    #[arg(long, default_value_t = 0.05)]
    pub budget: f64,
    #[arg(long, value_enum, default_value = "json")]
    pub output: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Pareto,
    StudentMixture,
    PointMass,
}

/// Dataset description shared by `generate` and `tails`.
#[derive(Debug, Args, Clone)]
pub struct DistArgs {
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    /// Pareto shape.
    #[arg(long, default_value_t = 3.0)]
    pub alpha: f64,
    /// Pareto scale.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Student mixture as `weight:location:dof` triples separated by commas;
    /// each location is repeated over all coordinates.
    #[arg(long, default_value = "1:0:3")]
    pub mixture: String,
    /// Point-mass location.
    #[arg(long, default_value_t = 0.0)]
    pub value: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// One of the four benchmark datasets.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), conflicts_with = "generator")]
    pub preset: Option<u8>,
    #[command(flatten)]
    pub dist: DistArgs,
    /// Number of rows replaced by outliers at `outlier_scale * 1_d`.
    #[arg(long, default_value_t = 0)]
    pub outliers: usize,
    #[arg(long, default_value_t = 300.0)]
    pub outlier_scale: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// JSON benchmark configuration.
    #[arg(long, conflicts_with = "paper_figure", required_unless_present = "paper_figure")]
    pub config: Option<PathBuf>,
    /// Four presets, five estimators, 100 replicates.
    #[arg(long)]
    pub paper_figure: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record CSV destination; the summary CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicate-level parallelism.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Fill the wall_time_s column (makes the output non-reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    /// Analytic mean of the law.
    Mean,
    /// Estimate on one large sample.
    Plugin,
}

#[derive(Debug, Args)]
pub struct TailsArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long, value_enum, default_value = "huber")]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 6.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5)]
    pub p: u32,
    #[arg(long, default_value_t = 2000)]
    pub replicates: usize,
    /// Explicit deviation levels, comma separated; each must lie in (0, beta/2).
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Number of evenly spaced levels when --lambdas is absent.
    #[arg(long, default_value_t = 10)]
    pub lambda_count: usize,
    #[arg(long, value_enum, default_value = "mean")]
    pub reference: ReferenceArg,
    #[arg(long, default_value_t = 1_000_000)]
    pub plugin_n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::Parse { .. } | Error::Json(_) => EXIT_IO,
            Error::InvalidParameter(_) | Error::Domain { .. } | Error::DimensionMismatch { .. } => EXIT_USAGE,
            _ => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = writeln!(err, "error: a subcommand is required (see --help)");
                    EXIT_USAGE
                }
                _ => {
                    let first = e.to_string();
                    let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
                    let _ = writeln!(err, "error: {line}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, out),
        Command::Tune(a) => cmd_tune(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Tails(a) => cmd_tails(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message.replace('\n', " "));
            e.code
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not an unsigned 64-bit integer"))),
        Err(_) => Ok(0),
    }
}

fn load_matrix(path: &Path) -> CliResult<Matrix> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { .. } | Error::Io(_) | Error::EmptyInput(_) => CliError::io(path, e),
        other => other.into(),
    })
}

#[derive(Debug, Serialize)]
struct EstimateOutput<'a> {
    estimate: &'a [f64],
    iterations: usize,
    converged: bool,
    residual: f64,
    beta_used: f64,
}

fn write_out(out: &mut dyn Write, text: &str) -> CliResult {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

pub fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> CliResult {
    let x = load_matrix(&a.input)?;
    let kind = ScoreKind::from(a.estimator);
    let (beta, fit) = if a.auto_beta {
        let opts = TuningOptions {
            p: a.p,
            tol: a.tol,
            ..TuningOptions::default()
        };
        let sel = select_beta(&x, kind, &opts)?;
        // re-solve at the selected scale with the caller's solver settings
        let score = ScoreFamily::new(kind, sel.beta_hat, a.p)?;
        let fit = irls_estimate(&x, &EstimatorConfig::new(score).with_tol(a.tol).with_max_iter(a.max_iter))?;
        (sel.beta_hat, fit)
    } else {
        let beta = a.beta.ok_or_else(|| CliError::usage("either --beta or --auto-beta is required"))?;
        let score = ScoreFamily::new(kind, beta, a.p)?;
        (beta, irls_estimate(&x, &EstimatorConfig::new(score).with_tol(a.tol).with_max_iter(a.max_iter))?)
    };
    let text = match a.output {
        OutputFormat::Json => {
            let o = EstimateOutput {
                estimate: &fit.estimate,
                iterations: fit.iterations,
                converged: fit.converged,
                residual: fit.residual,
                beta_used: beta,
            };
            serde_json::to_string(&o).map_err(Error::from)? + "\n"
        }
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(&Matrix::from_rows(std::slice::from_ref(&fit.estimate))?, &mut buf).map_err(Error::from)?;
            String::from_utf8(buf).expect("CSV output is ASCII")
        }
    };
    write_out(out, &text)
}

pub fn cmd_tune(a: &TuneArgs, out: &mut dyn Write) -> CliResult {
    let x = load_matrix(&a.input)?;
    let opts = TuningOptions {
        grid_size: a.grid_size,
        corruption_budget: a.budget,
        p: a.p,
        ..TuningOptions::default()
    };
    let sel = select_beta(&x, a.estimator.into(), &opts)?;
    let text = match a.output {
        OutputFormat::Json => serde_json::to_string_pretty(&sel).map_err(Error::from)? + "\n",
        OutputFormat::Csv => {
            let mut s = String::from("beta,criterion,v_hat,iterations\n");
            for g in &sel.grid {
                let opt = |v: Option<f64>| v.map(crate::data::format_float).unwrap_or_default();
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    crate::data::format_float(g.beta),
                    opt(g.criterion),
                    opt(g.v_hat),
                    g.iterations
                ));
            }
            s
        }
    };
    write_out(out, &text)
}

fn parse_mixture(text: &str, d: usize) -> CliResult<Vec<MixtureComponent>> {
    text.split(',')
        .map(|part| {
            let f: Vec<&str> = part.split(':').collect();
            if f.len() != 3 {
                return Err(CliError::usage(format!("mixture component `{part}` is not weight:location:dof")));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("`{s}` in --mixture is not a number")))
            };
            Ok(MixtureComponent {
                weight: num(f[0])?,
                mean: vec![num(f[1])?; d],
                dof: num(f[2])?,
            })
        })
        .collect()
}

fn dist_spec(a: &DistArgs, default_kind: GeneratorArg, default_n: usize, default_d: usize) -> CliResult<DatasetSpec> {
    let n = a.n.unwrap_or(default_n);
    let d = a.d.unwrap_or(default_d);
    let generator = match a.generator.unwrap_or(default_kind) {
        GeneratorArg::Pareto => Generator::ParetoCoords {
            alpha: a.alpha,
            scale: a.scale,
        },
        GeneratorArg::StudentMixture => Generator::StudentMixture {
            components: parse_mixture(&a.mixture, d)?,
        },
        GeneratorArg::PointMass => Generator::PointMass { value: a.value },
    };
    Ok(DatasetSpec {
        label: "custom".into(),
        generator,
        n,
        d,
        corruption: None,
        seed: 0,
    })
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    true_mean: &'a [f64],
    outlier_indices: &'a [usize],
    spec: &'a DatasetSpec,
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, renamed into place once complete.
fn write_atomically(path: &Path, contents: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        contents(&mut w).map_err(|e| CliError::io(path, e))?;
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

pub fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    let mut spec = match a.preset {
        Some(k) => dataset_presets()[usize::from(k) - 1].clone(),
        None => {
            let mut s = dist_spec(&a.dist, GeneratorArg::Pareto, 1000, 100)?;
            if a.outliers > 0 {
                s.corruption = Some(CorruptionSpec {
                    count: a.outliers,
                    strategy: CorruptionStrategy::ScaledOnes { scale: a.outlier_scale },
                });
            }
            s
        }
    };
    if a.preset.is_some() {
        if let Some(n) = a.dist.n {
            spec.n = n;
        }
    }
    spec.seed = seed;
    let ds = generate(&spec)?;
    let sidecar = Sidecar {
        true_mean: &ds.true_mean,
        outlier_indices: &ds.outlier_indices,
        spec: &ds.spec,
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(Error::from)? + "\n";
    write_atomically(&a.out, |w| write_csv(&ds.x, w))?;
    let side = sidecar_path(&a.out);
    write_atomically(&side, |w| w.write_all(json.as_bytes()))?;
    write_out(
        out,
        &format!("wrote {} ({} x {}) and {}\n", a.out.display(), spec.n, spec.d, side.display()),
    )
}

pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let mut cfg: BenchConfig = if a.paper_figure {
        figure_config(100, resolve_seed(a.seed)?)
    } else {
        let path = a.config.as_ref().ok_or_else(|| CliError::usage("--config or --paper-figure is required"))?;
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: BenchConfig =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        if a.seed.is_some() || std::env::var(SEED_ENV).is_ok() {
            cfg.master_seed = resolve_seed(a.seed)?;
        }
        cfg
    };
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if a.timings {
        cfg.record_timings = true;
    }
    if let Some(p) = &a.out {
        cfg.output_path = Some(p.clone());
    }
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    cfg.validate()?;

    let records = match &cfg.output_path {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            let recs = run_benchmark(&cfg, a.jobs, Some(&mut w)).map_err(|e| match e {
                Error::Io(io) => CliError::io(path, io),
                other => other.into(),
            })?;
            w.flush().map_err(|e| CliError::io(path, e))?;
            recs
        }
        None => run_benchmark(&cfg, a.jobs, None)?,
    };

    let summaries = summarize(&records)?;
    if let Some(path) = &cfg.output_path {
        let sp = summary_path(path);
        let csv = summary_csv(&summaries);
        write_atomically(&sp, |w| w.write_all(csv.as_bytes()))?;
    }
    write_out(out, &summary_table(&summaries))?;

    for (label, failed, total) in failure_counts(&records) {
        if failed * 10 > total {
            return Err(CliError {
                code: EXIT_NUMERIC,
                message: format!("estimator `{label}` failed on {failed} of {total} runs"),
            });
        }
    }
    Ok(())
}

pub fn cmd_tails(a: &TailsArgs, out: &mut dyn Write) -> CliResult {
    let seed = resolve_seed(a.seed)?;
    let dist = dist_spec(&a.dist, GeneratorArg::StudentMixture, 200, 1)?;
    let score = ScoreFamily::new(a.estimator.into(), a.beta, a.p)?;
    let lambdas = match &a.lambdas {
        Some(l) => l.clone(),
        None => default_lambdas(a.beta, a.lambda_count),
    };
    let half = 0.5 * a.beta;
    if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l < half)) {
        return Err(CliError::usage(format!("lambda = {bad} must lie in (0, beta/2) = (0, {half})")));
    }
    let reference = match a.reference {
        ReferenceArg::Mean => Reference::TrueMean,
        ReferenceArg::Plugin => Reference::PlugIn { n: a.plugin_n },
    };
    let rows = tail_experiment(&TailConfig {
        dist,
        score,
        replicates: a.replicates,
        lambdas,
        reference,
        master_seed: seed,
    })?;
    if let Some(path) = &a.out {
        let csv = tail_csv(&rows);
        write_atomically(path, |w| w.write_all(csv.as_bytes()))?;
    }
    write_out(out, &tail_table(&rows))
}
