//! `daguerro` command-line runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod record;
mod run;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use daguerro::datagen::{self, GraphFamily, NoiseKind};
use daguerro::learner::{postprocess_threshold, LearnerConfig, Regime, ThetaInit};
use daguerro::sem::{EstimatorKind, LossKind};
use daguerro::sparse::OperatorKind;
use daguerro::{Dataset, Error};
use serde::de::DeserializeOwned;

use record::{ExperimentRecord, Metrics, SyntheticSpec, META_SCHEMA};
use run::Method;

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const CONFIG_ERROR: u8 = 2;
pub const DATA_ERROR: u8 = 3;
pub const NUMERIC_ERROR: u8 = 4;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: CONFIG_ERROR,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: DATA_ERROR,
            message: message.into(),
        }
    }

    /// Data error regardless of the library error kind.
    pub fn data_from(e: Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_)
            | Error::InsufficientPermutations { .. }
            | Error::TooLarge { .. } => CONFIG_ERROR,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Cyclic
            | Error::DimensionMismatch { .. } => DATA_ERROR,
            Error::Numeric(_) | Error::NonFinite(_) | Error::Ties => NUMERIC_ERROR,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "daguerro",
    version,
    about = "DAG learning over the permutahedron"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a linear SEM and write X.csv, truth.edgelist and meta.json.
    Generate(GenerateArgs),
    /// Learn a DAG from data and write the result files.
    Fit(Box<FitArgs>),
    /// Compare an estimated graph against the truth; prints JSON.
    Eval(EvalArgs),
    /// Run a grid of configurations over seeds and aggregate the metrics.
    Sweep(SweepArgs),
}

fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args)]
struct GenerateArgs {
    /// Graph family: er, sf or bp.
    #[arg(long, value_parser = serde_enum::<GraphFamily>)]
    family: GraphFamily,
    /// Number of nodes.
    #[arg(long = "d")]
    d: usize,
    /// Expected number of edges.
    #[arg(long)]
    edges: usize,
    /// Noise model: gauss-ev, gumbel-ev or uniform.
    #[arg(long, value_parser = serde_enum::<NoiseKind>, default_value = "gauss-ev")]
    sem: NoiseKind,
    /// Number of samples.
    #[arg(long = "n", default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smallest absolute edge weight.
    #[arg(long, default_value_t = 0.5)]
    w_low: f64,
    /// Largest absolute edge weight.
    #[arg(long, default_value_t = 2.0)]
    w_high: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// A directory with X.csv (and optionally truth.edgelist), or a CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth edge list; overrides truth.edgelist in the data directory.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory; defaults to the data directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON learner configuration, or a previous result.json. Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    learner: LearnerFlags,
}

#[derive(Args, Default)]
struct LearnerFlags {
    /// sparsemax (top-k) or sparsemap.
    #[arg(long, value_parser = serde_enum::<OperatorKind>)]
    operator: Option<OperatorKind>,
    /// Support size for sparsemax; active-set iterations for sparsemap.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// L0 penalty strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Sets both l2 penalties.
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    l2_theta: Option<f64>,
    #[arg(long)]
    l2_phi: Option<f64>,
    #[arg(long)]
    lr_outer: Option<f64>,
    #[arg(long)]
    lr_inner: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    /// l0 or lars.
    #[arg(long, value_parser = serde_enum::<EstimatorKind>)]
    estimator: Option<EstimatorKind>,
    /// joint or bilevel.
    #[arg(long, value_parser = serde_enum::<Regime>)]
    regime: Option<Regime>,
    /// zeros or variances.
    #[arg(long, value_parser = serde_enum::<ThetaInit>)]
    theta_init: Option<ThetaInit>,
    #[arg(long)]
    seed: Option<u64>,
    /// gaussian-ev or mse.
    #[arg(long, value_parser = serde_enum::<LossKind>)]
    loss: Option<LossKind>,
    /// Fit on the raw columns instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
    #[arg(long)]
    pi_init: Option<f64>,
    /// Early stopping window in outer iterations.
    #[arg(long)]
    patience: Option<usize>,
    /// Relative improvement per window below which training stops.
    #[arg(long)]
    tolerance: Option<f64>,
}

impl LearnerFlags {
    fn apply(&self, c: &mut LearnerConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        if let Some(v) = self.l2 {
            c.l2_theta = v;
            c.l2_phi = v;
        }
        set!(
            operator, k, tau, lambda, l2_theta, l2_phi, lr_outer, lr_inner, max_outer, max_inner,
            estimator, regime, theta_init, seed, loss, pi_init, patience, tolerance
        );
        if self.no_standardize {
            c.standardize = false;
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated graph as an edge list, optionally weighted.
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth edge list.
    #[arg(long)]
    truth: PathBuf,
    /// Data CSV or directory whose header resolves named endpoints.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Drop edges with |w| below this threshold, then break cycles.
    #[arg(long)]
    postprocess: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON grid file.
    #[arg(long)]
    grid: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => sweep::cmd_sweep(&a.grid, &a.out),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Caps the worker pool at `DAGUERRO_THREADS`.
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("DAGUERRO_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::config(format!(
            "DAGUERRO_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(e.to_string()))
}

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        family: a.family,
        d: a.d,
        edges: a.edges,
        sem: a.sem,
        n: a.n,
        w_low: a.w_low,
        w_high: a.w_high,
        noise_scale: a.noise_scale,
    };
    let (graph_spec, sem_spec) = spec.specs(a.seed);
    graph_spec.validate()?;
    sem_spec.validate()?;
    let sim = datagen::simulate(&graph_spec, &sem_spec)?;
    fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    let truth = sim
        .dataset
        .truth()
        .expect("simulated data carries its graph");
    datagen::write_csv(a.out.join("X.csv"), &sim.dataset)?;
    datagen::write_weighted_edgelist(a.out.join("truth.edgelist"), truth, &sim.weights)?;
    let meta = serde_json::json!({
        "schema": META_SCHEMA,
        "seed": a.seed,
        "spec": spec,
        "order": sim.order.order(),
        "edges": truth.edge_count(),
    });
    write_json(&a.out.join("meta.json"), &meta)
}

/// Reads a learner configuration; a result record contributes its
/// `config` field.
fn read_config(path: &Path) -> CliResult<LearnerConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let value = match value.get("schema") {
        Some(_) => value
            .get("config")
            .cloned()
            .filter(|c| !c.is_null())
            .ok_or_else(|| {
                Failure::config(format!("{}: record has no learner config", path.display()))
            })?,
        None => value,
    };
    serde_json::from_value(value).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Loads the data CSV and its optional truth. Returns the dataset and the
/// directory holding the data.
pub fn load_data(data: &Path, truth: Option<&Path>) -> CliResult<(Dataset, PathBuf)> {
    let (csv, dir) = if data.is_dir() {
        (data.join("X.csv"), data.to_path_buf())
    } else {
        let dir = data.parent().map(Path::to_path_buf).unwrap_or_default();
        (data.to_path_buf(), dir)
    };
    let ds = datagen::load_csv(&csv).map_err(Failure::data_from)?;
    let truth_path = match truth {
        Some(t) => Some(t.to_path_buf()),
        None => Some(dir.join("truth.edgelist")).filter(|p| data.is_dir() && p.exists()),
    };
    let ds = match truth_path {
        Some(p) => {
            let g = datagen::load_edgelist(&p, Some(ds.names())).map_err(Failure::data_from)?;
            ds.with_truth(g).map_err(Failure::data_from)?
        }
        None => ds,
    };
    Ok((ds, dir))
}

fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => read_config(p)?,
        None => LearnerConfig::default(),
    };
    a.learner.apply(&mut config);
    config.validate()?;
    let (data, dir) = load_data(&a.data, a.truth.as_deref())?;
    let out = a.out.clone().unwrap_or(dir);
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;

    let start = Instant::now();
    let outcome = run::run(Method::Daguerro, &config, &data, None, config.seed)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let source = serde_json::json!({ "path": a.data });
    let record = ExperimentRecord::new(
        Method::Daguerro,
        &config,
        source,
        &data,
        &outcome,
        wall_seconds,
    );
    outcome.write_files(&out, &data)?;
    write_json(&out.join("result.json"), &record)
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let names: Option<Vec<String>> = match &a.data {
        Some(p) => Some(load_data(p, None)?.0.names().to_vec()),
        None => None,
    };
    let truth = datagen::load_edgelist(&a.truth, names.as_deref()).map_err(Failure::data_from)?;
    let est_names = names.unwrap_or_else(|| (0..truth.dim()).map(|i| i.to_string()).collect());
    let est =
        datagen::load_weighted_edgelist(&a.est, Some(&est_names)).map_err(Failure::data_from)?;
    let adjacency = match a.postprocess {
        Some(t) => postprocess_threshold(&est.weights(), t)?.adjacency,
        None => {
            let adj = est.adjacency().map_err(Failure::data_from)?;
            if !adj.is_acyclic() {
                return Err(Failure::data(format!(
                    "{}: estimated graph is cyclic; pass --postprocess to threshold and break cycles",
                    a.est.display()
                )));
            }
            adj
        }
    };
    let m = Metrics::compute(&adjacency, Some(&truth)).map_err(Failure::data_from)?;
    let json = serde_json::json!({
        "shd": m.shd,
        "sid": m.sid,
        "f1": m.f1,
        "edges": m.edge_count,
    });
    println!("{json}");
    Ok(())
}
