//! Command-line front end: fit models from CSV, predict, run
//! cross-validation curves, and execute benchmark experiments.
//!
//! Machine-readable tables go to stdout; progress and traces go to stderr.
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use optkern::bench::{
    format_eta_curve, format_report, run_csv_experiment, run_experiment, BenchFunction,
    CsvExperimentSpec, ExperimentSpec,
};
use optkern::data::{load_csv, load_feature_csv};
use optkern::model::{default_eta_grid, fit, loo_cv_error, select_eta};
use optkern::selector::InitRule;
use optkern::stagewise::{HeredityMode, StageConfig, StageTrace};
use optkern::{Error, FittedModel};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "optkern",
    version,
    about = "Sparse kernel learning for Gaussian-process regression"
)]
struct Cli {
    /// Worker threads (default: the OPTKERN_THREADS environment variable,
    /// else all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from a CSV dataset and write the model document
    Fit(FitArgs),
    /// Predict with a saved model on a query CSV
    Predict(PredictArgs),
    /// Leave-one-out cross-validation curve over the nugget grid
    Cv(CvArgs),
    /// Run a replicated benchmark experiment
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct AlgoArgs {
    /// Convergence tolerance on the relative loss change
    #[arg(long, default_value_t = 0.005)]
    tol: f64,

    /// Backward-elimination threshold on support weights
    #[arg(long = "del", default_value_t = 0.05)]
    del: f64,

    /// Iteration cap for both the selection loop and the weight updates
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iter: usize,

    /// Speed parameter of the multiplicative weight update, in (0,1]
    #[arg(long, default_value_t = 1.0)]
    delta: f64,

    /// Largest kernel dimension considered by the stagewise expansion
    #[arg(long = "max-dim", default_value_t = 4)]
    max_dim: usize,

    /// Heredity rule for interaction candidates
    #[arg(long, value_enum, default_value_t = HeredityArg::Strong)]
    heredity: HeredityArg,

    /// Seed for the random initial kernel (and replication streams in bench)
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Initial-kernel rule
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,

    /// Cache budget for candidate kernel matrices, in MiB
    #[arg(long = "cache-budget-mb", default_value_t = 2048)]
    cache_budget_mb: usize,

    /// Dump per-stage selection traces to stderr
    #[arg(long)]
    trace: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeredityArg {
    Strong,
    Weak,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Random,
    BestSingle,
}

impl AlgoArgs {
    fn stage_config(&self, eta: f64) -> Result<StageConfig, Error> {
        let mut cfg = StageConfig::new(eta);
        cfg.max_dim = self.max_dim;
        cfg.heredity = match self.heredity {
            HeredityArg::Strong => HeredityMode::Strong,
            HeredityArg::Weak => HeredityMode::Weak,
        };
        cfg.selector.tol = self.tol;
        cfg.selector.del_threshold = self.del;
        cfg.selector.max_iter = self.max_iter;
        cfg.selector.seed = self.seed;
        cfg.selector.init = match self.init {
            InitArg::Random => InitRule::Random,
            InitArg::BestSingle => InitRule::BestSingle,
        };
        cfg.weights.tol = self.tol;
        cfg.weights.delta = self.delta;
        cfg.weights.max_iter = self.max_iter;
        cfg.cache_budget = self.cache_budget_mb.saturating_mul(1024 * 1024);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with a header row
    #[arg(long)]
    data: PathBuf,

    /// Name of the response column
    #[arg(long)]
    response: String,

    /// Output path for the model document
    #[arg(long, default_value = "model.json")]
    model: PathBuf,

    /// Fixed nugget value (skips cross-validation when --no-cv is set)
    #[arg(long)]
    eta: Option<f64>,

    /// Skip nugget selection and fit at the --eta value
    #[arg(long = "no-cv", requires = "eta")]
    no_cv: bool,

    /// Nugget grid for cross-validation, comma separated
    #[arg(long = "eta-grid", value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,

    #[command(flatten)]
    algo: AlgoArgs,
}

#[derive(Args)]
struct PredictArgs {
    /// Model document written by `fit`
    #[arg(long)]
    model: PathBuf,

    /// Query CSV; columns must match the training features
    #[arg(long)]
    query: PathBuf,

    /// Output CSV path (default: stdout)
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,

    #[arg(long)]
    response: String,

    /// Nugget grid, comma separated
    #[arg(long = "eta-grid", value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,

    #[command(flatten)]
    algo: AlgoArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FunctionArg {
    Michalewicz,
    Borehole,
    Csv,
}

#[derive(Args)]
struct BenchArgs {
    /// Test function driving the experiment
    #[arg(long, value_enum)]
    function: FunctionArg,

    /// Total input dimension (irrelevant columns included)
    #[arg(long)]
    d: Option<usize>,

    /// Number of active columns
    #[arg(long)]
    p: Option<usize>,

    /// Training sample size
    #[arg(long)]
    n: usize,

    /// Test sample size (defaults: 3481 michalewicz, 1000 borehole, 100 csv)
    #[arg(long = "n-test")]
    n_test: Option<usize>,

    /// Number of replications (default depends on n: 50 up to n=200,
    /// 20 up to n=500, 5 beyond)
    #[arg(long)]
    reps: Option<usize>,

    /// Michalewicz steepness exponent k
    #[arg(long, default_value_t = 10)]
    k: u32,

    /// Swap-improvement proposals for the maximin training design
    #[arg(long = "maximin-iters", default_value_t = 5000)]
    maximin_iters: usize,

    /// Dataset CSV (csv function only)
    #[arg(long)]
    data: Option<PathBuf>,

    /// Response column (csv function only)
    #[arg(long)]
    response: Option<String>,

    /// Irrelevant uniform columns appended to the dataset (csv function only)
    #[arg(long = "pad-dims", default_value_t = 0)]
    pad_dims: usize,

    /// Nugget grid, comma separated
    #[arg(long = "eta-grid", value_delimiter = ',')]
    eta_grid: Option<Vec<f64>>,

    #[command(flatten)]
    algo: AlgoArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Cv(args) => cmd_cv(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), Error> {
    let from_env = std::env::var("OPTKERN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dump_traces(traces: &[StageTrace]) {
    for t in traces {
        eprintln!(
            "stage dim={} candidates+={} stop={:?} certificate={} q={:.6e} actives={:?}",
            t.dim, t.candidates_added, t.selection.stop, t.selection.ge_certificate, t.q, t.actives
        );
        for r in &t.selection.records {
            eprintln!(
                "  + {} phi={:.6e} q={:.6e} support={}",
                r.added, r.phi, r.q_after, r.support_size
            );
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let ds = load_csv(&args.data, &args.response)?;
    if ds.x.nrows() < 3 {
        return Err(Error::InvalidInput(format!(
            "fit needs at least 3 data rows, got {}",
            ds.x.nrows()
        )));
    }

    let (model, traces, chosen_eta, loo) = if args.no_cv {
        let eta = args.eta.expect("clap enforces --eta with --no-cv");
        let cfg = args.algo.stage_config(eta)?;
        eprintln!("fitting at fixed eta = {eta}");
        let (model, traces) = fit(&ds.x, &ds.y, &cfg)?;
        let x_scaled = model.input_scale().apply_matrix(&ds.x)?;
        let y_centered = ds.y.map(|v| v - model.y_center());
        let loo = loo_cv_error(model.design(), &x_scaled, &y_centered, eta)?;
        (model, traces, eta, loo)
    } else {
        let grid = args.eta_grid.unwrap_or_else(default_eta_grid);
        if grid.is_empty() {
            return Err(Error::InvalidConfig("eta grid must be non-empty".into()));
        }
        // placeholder nugget; selection overrides it per grid point
        let cfg = args.algo.stage_config(0.05)?;
        eprintln!(
            "selecting eta by leave-one-out over {} grid points",
            grid.len()
        );
        let sel = select_eta(&ds.x, &ds.y, &grid, &cfg)?;
        let loo = sel
            .curve
            .iter()
            .find(|p| p.eta == sel.best_eta)
            .and_then(|p| p.loo.as_ref().ok().copied())
            .unwrap_or(f64::NAN);
        (sel.best_model, sel.best_traces, sel.best_eta, loo)
    };

    if args.algo.trace {
        dump_traces(&traces);
    }
    model.save(&args.model)?;

    let last = traces.last().expect("at least one stage ran");
    println!("model\t{}", args.model.display());
    println!("eta\t{chosen_eta}");
    println!("loo_error\t{loo}");
    println!("final_q\t{}", last.q);
    println!("ge_certificate\t{}", last.selection.ge_certificate);
    let actives: Vec<String> = model
        .active_variables()
        .iter()
        .map(|i| {
            ds.feature_names
                .get(i - 1)
                .cloned()
                .unwrap_or_else(|| format!("x{i}"))
        })
        .collect();
    println!("active_variables\t{}", actives.join(","));
    println!("support\tdims\ttheta\tweight");
    for (spec, w) in model
        .design()
        .support()
        .iter()
        .zip(model.design().weights())
    {
        let dims: Vec<String> = spec.dims().iter().map(|d| d.to_string()).collect();
        println!("kernel\t{}\t{}\t{}", dims.join(","), spec.theta(), w);
    }
    Ok(())
}

/// Format predictions exactly as the library would print them, so file
/// round-trips compare bitwise against in-process results.
pub fn format_prediction_row(cells: &[String], mean: f64, sd: f64) -> String {
    format!("{},{},{}", cells.join(","), mean, sd)
}

fn cmd_predict(args: PredictArgs) -> Result<(), Error> {
    let model = FittedModel::load(&args.model)?;
    let table = load_feature_csv(&args.query)?;
    if table.x.ncols() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "model expects {} feature columns but the query has {}",
            model.dim(),
            table.x.ncols()
        )));
    }

    let mut out = String::new();
    out.push_str(&format!("{},mean,sd\n", table.column_names.join(",")));
    if table.x.nrows() > 0 {
        let preds = model.predict_rows(&table.x)?;
        let mut extrapolated = 0usize;
        for (i, pred) in preds.iter().enumerate() {
            let cells: Vec<String> = table.x.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&format_prediction_row(
                &cells,
                pred.mean,
                pred.variance.sqrt(),
            ));
            out.push('\n');
            if pred.extrapolated {
                extrapolated += 1;
            }
        }
        if extrapolated > 0 {
            eprintln!("warning: {extrapolated} query row(s) outside the training hull");
        }
    }
    match args.output {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<(), Error> {
    let ds = load_csv(&args.data, &args.response)?;
    if ds.x.nrows() < 3 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 3 data rows, got {}",
            ds.x.nrows()
        )));
    }
    let grid = args.eta_grid.unwrap_or_else(default_eta_grid);
    if grid.is_empty() {
        return Err(Error::InvalidConfig("eta grid must be non-empty".into()));
    }
    let cfg = args.algo.stage_config(0.05)?;
    let sel = select_eta(&ds.x, &ds.y, &grid, &cfg)?;
    if args.algo.trace {
        dump_traces(&sel.best_traces);
    }
    print!("{}", format_eta_curve(&sel.curve, sel.best_eta));
    Ok(())
}

fn default_reps(n: usize) -> usize {
    if n <= 200 {
        50
    } else if n <= 500 {
        20
    } else {
        5
    }
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let reps = args.reps.unwrap_or_else(|| default_reps(args.n));
    let grid = args.eta_grid.clone().unwrap_or_else(default_eta_grid);
    if grid.is_empty() {
        return Err(Error::InvalidConfig("eta grid must be non-empty".into()));
    }
    let stage = args.algo.stage_config(0.05)?;

    let report = match args.function {
        FunctionArg::Michalewicz | FunctionArg::Borehole => {
            let function = match args.function {
                FunctionArg::Michalewicz => BenchFunction::Michalewicz { k: args.k },
                _ => BenchFunction::Borehole,
            };
            let p = match (args.function, args.p) {
                (FunctionArg::Borehole, None) => 8,
                (_, Some(p)) => p,
                (FunctionArg::Michalewicz, None) => {
                    return Err(Error::InvalidConfig(
                        "--p is required for michalewicz".into(),
                    ))
                }
                _ => unreachable!(),
            };
            let d = args
                .d
                .ok_or_else(|| Error::InvalidConfig("--d is required".into()))?;
            let n_test = args.n_test.unwrap_or(match args.function {
                FunctionArg::Michalewicz => 3481,
                _ => 1000,
            });
            let spec = ExperimentSpec {
                function,
                d,
                p,
                n_train: args.n,
                n_test,
                replications: reps,
                seed: args.algo.seed,
                stage,
                eta_grid: grid,
                maximin_iters: args.maximin_iters,
            };
            eprintln!(
                "running {} replication(s): d={} p={} n={} m={}",
                spec.replications, spec.d, spec.p, spec.n_train, spec.n_test
            );
            run_experiment(&spec)?
        }
        FunctionArg::Csv => {
            let data = args
                .data
                .ok_or_else(|| Error::InvalidConfig("--data is required for csv".into()))?;
            let response = args
                .response
                .ok_or_else(|| Error::InvalidConfig("--response is required for csv".into()))?;
            let ds = load_csv(&data, &response)?;
            let spec = CsvExperimentSpec {
                x: ds.x,
                y: ds.y,
                n_train: args.n,
                n_test: args.n_test.unwrap_or(100),
                pad_dims: args.pad_dims,
                replications: reps,
                seed: args.algo.seed,
                stage,
                eta_grid: grid,
            };
            eprintln!(
                "running {} replication(s) on {}: n={} m={} pad={}",
                spec.replications,
                data.display(),
                spec.n_train,
                spec.n_test,
                spec.pad_dims
            );
            run_csv_experiment(&spec)?
        }
    };
    print!("{}", format_report(&report, "optkern"));
    Ok(())
}
