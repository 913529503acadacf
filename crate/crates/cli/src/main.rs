//! `boxfront`: batch runs, single-portfolio evaluation and the HTTP service.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible, 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use boxfront_core::boxalgo::{self, RunConfig, RunError};
use boxfront_core::domain::{inconsistent_bounds, validate_model, Objective, ObjectiveBound};
use boxfront_core::ingest::{self, ExportFormat, ModelPaths, RunArtifact, Source};
use boxfront_core::objectives::evaluate_all;
use boxfront_core::solver::SolverConfig;
use boxfront_core::Execution;
use boxfront_service::ServiceConfig;
use clap::{Args, Parser, Subcommand};

const EXIT_INVALID: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "boxfront", version, about = "Pareto front representations for strategic asset allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the box algorithm and write the archive.
    Optimize(OptimizeArgs),
    /// Print the criteria of one portfolio.
    Evaluate(EvaluateArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Asset table: asset,weight_pct,return_pct,volatility_pct.
    #[arg(long)]
    assets: PathBuf,
    /// Solvency calibration; without it the solvency criterion is disabled.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Correlation matrix; identity when omitted.
    #[arg(long)]
    correlation: Option<PathBuf>,
    /// Reference portfolio (asset,weight_pct); the asset table's weights by default.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Group limits and objective bounds.
    #[arg(long)]
    constraints: Option<PathBuf>,
}

impl ModelArgs {
    fn paths(&self) -> ModelPaths {
        ModelPaths {
            assets: self.assets.clone(),
            correlation: self.correlation.clone(),
            calibration: self.calibration.clone(),
            reference: self.reference.clone(),
            constraints: self.constraints.clone(),
        }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Intermediate portfolios to compute.
    #[arg(long, default_value_t = 10)]
    maxit: usize,
    /// Hard bound OBJ:OP:VALUE, e.g. distance:<=:0.5 (fractions). Repeatable.
    #[arg(long = "bound", value_name = "OBJ:OP:VALUE")]
    bounds: Vec<ObjectiveBound>,
    /// Comma-separated criteria, e.g. return,volatility.
    #[arg(long, value_delimiter = ',')]
    objectives: Option<Vec<Objective>>,
    #[arg(long, default_value_t = SolverConfig::default().seed)]
    seed: u64,
    /// Random starts per solve.
    #[arg(long, default_value_t = SolverConfig::default().multistart_count)]
    starts: usize,
    /// Run the starts of each solve on one thread.
    #[arg(long)]
    sequential: bool,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    format: ExportFormat,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Portfolio to evaluate (asset,weight_pct).
    #[arg(long)]
    weights: PathBuf,
    /// Print fractions as JSON instead of percentages.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address; overrides BOXFRONT_BIND.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// Concurrent runs; overrides BOXFRONT_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for finished artifacts; overrides BOXFRONT_PERSIST_DIR.
    #[arg(long)]
    persist: Option<PathBuf>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

fn load(args: &ModelArgs) -> Result<ingest::LoadedModel, Failure> {
    ingest::load_model_files(&args.paths()).map_err(|e| {
        let code = if matches!(e, ingest::IngestError::Io { .. }) { EXIT_INTERNAL } else { EXIT_INVALID };
        Failure::new(code, e)
    })
}

fn run_error_code(e: &RunError) -> u8 {
    match e {
        RunError::Infeasible { .. } => EXIT_INFEASIBLE,
        RunError::Invalid(_) | RunError::InconsistentBounds(_) | RunError::Config(_) => EXIT_INVALID,
        RunError::Solver { .. } | RunError::Eval(_) => EXIT_INTERNAL,
    }
}

fn optimize(args: OptimizeArgs) -> Result<(), Failure> {
    let loaded = load(&args.model)?;
    let mut spec = loaded.spec.with_bounds(&args.bounds);
    if let Some(msg) = inconsistent_bounds(&spec.objective_bounds) {
        return Err(Failure::new(EXIT_INVALID, anyhow::anyhow!(msg)));
    }
    if let Some(o) = &args.objectives {
        spec = spec.with_objectives(o);
        let violations = validate_model(&spec);
        if !violations.is_empty() {
            let msg = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Err(Failure::new(EXIT_INVALID, anyhow::anyhow!("invalid objective selection: {msg}")));
        }
    }
    let cfg = RunConfig {
        maxit: args.maxit,
        solver: SolverConfig {
            seed: args.seed,
            multistart_count: args.starts,
            execution: if args.sequential { Execution::Sequential } else { Execution::default() },
            ..SolverConfig::default()
        },
        ..RunConfig::default()
    };
    cfg.validate().map_err(|e| Failure::new(EXIT_INVALID, e))?;

    let mut none = ();
    let mut recorder = boxalgo::Recorder::new(&spec, &mut none);
    let result = boxalgo::run_observed(&spec, &cfg, &mut recorder);
    let artifact = RunArtifact::from_result(&spec, &cfg, &result, &recorder.records);
    let text = args.format.render(&artifact);
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(|e| Failure::new(EXIT_INTERNAL, e))?,
        None => print!("{text}"),
    }
    match result {
        Ok(archive) => {
            log::info!(
                "{} records ({} intermediate), {:?}",
                archive.records.len(),
                archive.intermediate().count(),
                archive.termination
            );
            Ok(())
        }
        Err(e) => Err(Failure { code: run_error_code(&e), error: e.into() }),
    }
}

fn evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let loaded = load(&args.model)?;
    let spec = &loaded.spec;
    let src = Source::read(&args.weights).map_err(|e| Failure::new(EXIT_INTERNAL, e))?;
    let w = ingest::load_weights(&src, &spec.universe.names).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    let values = evaluate_all(&w, spec).map_err(|e| Failure::new(EXIT_INVALID, e))?;
    if args.json {
        let json = serde_json::json!({
            "objectives": values.objectives,
            "values": values.values,
            "weights": w,
        });
        println!("{}", serde_json::to_string_pretty(&json).expect("json"));
    } else {
        for (o, v) in values.objectives.iter().zip(&values.values) {
            println!("{:<10} {:>9}", o.name(), ingest::percent(*v));
        }
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let mut cfg = ServiceConfig::from_env().map_err(|e| Failure::new(EXIT_INVALID, e))?;
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if let Some(w) = args.workers {
        if w == 0 {
            return Err(Failure::new(EXIT_INVALID, anyhow::anyhow!("--workers must be positive")));
        }
        cfg.workers = w;
    }
    if let Some(p) = args.persist {
        cfg.persist = Some(p);
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new(EXIT_INTERNAL, e))?;
    let bind = cfg.bind;
    rt.block_on(boxfront_service::serve(cfg, boxfront_service::shutdown_signal()))
        .with_context(|| format!("cannot serve on {bind}"))
        .map_err(|e| Failure::new(EXIT_INTERNAL, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
