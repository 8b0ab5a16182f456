//! Command-line front end: fit, cross-validate, predict, simulate, count,
//! and the brute-force oracle.
//!
//! Machine-readable results go to standard output (or `--out`); logging
//! goes to standard error. Exit codes: 0 success, 2 usage or validation
//! error, 3 data error, 4 solver warning escalated by `--strict`. All
//! randomized behavior is determined by `--seed` (default 0), never by
//! wall-clock entropy, and results are identical at any `--threads` value.

mod io;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bsps::combinatorics::{count_splits, count_subsets, exhaustive_bsps, OracleError};
use bsps::numerics::{standardize, NumericsError};
use bsps::psgd::{Constraints, ConstraintsError, PsgdError};
use bsps::simulation::{run_study, SimulationConfig, SimulationError, StudyError, StudyMethod};
use bsps::stepwise::StepwiseError;
use bsps::tuning::{cross_validate, fit, model_from_json, model_to_json, FitOptions, TuningError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or option values failing module preconditions (exit 2).
    Usage(String),
    /// Unreadable or inconsistent data files (exit 3).
    Data(String),
    /// Solver warning escalated by --strict (exit 4).
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Solver(m) => m,
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConstraintsError> for CliError {
    fn from(e: ConstraintsError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<StepwiseError> for CliError {
    fn from(e: StepwiseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PsgdError> for CliError {
    fn from(e: PsgdError) -> Self {
        match e {
            PsgdError::Constraints(c) => CliError::Usage(c.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TuningError> for CliError {
    fn from(e: TuningError) -> Self {
        match e {
            TuningError::FoldTooSmall { .. } | TuningError::InvalidGrid(_) => {
                CliError::Usage(e.to_string())
            }
            TuningError::Constraints(c) => CliError::Usage(c.to_string()),
            TuningError::Psgd(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            SimulationError::NotPositiveDefinite => CliError::Data(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Simulation(s) => s.into(),
            StudyError::Tuning(t) => t.into(),
            StudyError::Constraints(c) => c.into(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bsps",
    version,
    about = "Ensembles of sparse, diverse linear models under l0 sparsity and diversity budgets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for CV cells and simulation replications.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Escalate solver warnings (e.g. iteration caps) to exit code 4.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a split ensemble at fixed (t, u) and emit the model JSON.
    Fit(FitArgs),
    /// Cross-validate over (t, u) grids; emit model JSON and a CV CSV.
    Cv(CvArgs),
    /// Predict from a saved model JSON on a feature CSV.
    Predict(PredictArgs),
    /// Run the Monte-Carlo study and emit its CSV table.
    Simulate(SimulateArgs),
    /// Print exact subset/split counts.
    Count(CountArgs),
    /// Exhaustive brute-force solve of a small instance.
    Oracle(OracleArgs),
}

/// Optional JSON config file whose keys mirror the long flags; explicit
/// flags override file values.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    groups: Option<usize>,
    t: Option<String>,
    u: Option<String>,
    t_grid: Option<String>,
    u_grid: Option<String>,
    folds: Option<usize>,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    searches: Option<usize>,
    seed: Option<u64>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV: header row, response in the first column.
    data: PathBuf,
    #[arg(long)]
    groups: Option<usize>,
    /// Per-model sparsity budget: an integer or a fraction of n like "0.4n".
    #[arg(long)]
    t: Option<String>,
    /// Diversity budget: a scalar, or a comma list of length p.
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    searches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path for the model JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    data: PathBuf,
    #[arg(long)]
    groups: Option<usize>,
    /// Comma list of t candidates (integers or fractions like "0.3n").
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    /// Comma list of u candidates.
    #[arg(long = "u-grid")]
    u_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    searches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output path for the CV report CSV (not written when omitted).
    #[arg(long = "cv-out")]
    cv_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON produced by fit or cv.
    model: PathBuf,
    /// Feature CSV (header row, p predictor columns).
    data: PathBuf,
    /// Emit the m x G per-model prediction matrix instead of the ensemble.
    #[arg(long = "per-model")]
    per_model: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation design JSON: {scenario, p, n, m, zeta, rho, snr, seed}.
    #[arg(long)]
    config: PathBuf,
    /// Number of Monte-Carlo replications.
    #[arg(long)]
    reps: usize,
    /// Ensemble size for every replication.
    #[arg(long)]
    groups: Option<usize>,
    /// Run every ensemble size in 2..=MAX (the model-count study).
    #[arg(long = "group-range")]
    group_range: Option<usize>,
    /// Fixed-mode sparsity budget (integer or fraction like "0.4n").
    #[arg(long)]
    t: Option<String>,
    /// Fixed-mode diversity budget.
    #[arg(long)]
    u: Option<usize>,
    /// Select (t, u) per replication by k-fold cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long = "t-grid")]
    t_grid: Option<String>,
    #[arg(long = "u-grid")]
    u_grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    searches: Option<usize>,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Draw the coefficient vector once and share it across replications.
    #[arg(long = "fixed-coefficients")]
    fixed_coefficients: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    t: usize,
    /// Count splits into groups instead of subsets.
    #[arg(long)]
    splits: bool,
    #[arg(long)]
    groups: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    data: PathBuf,
    #[arg(long)]
    groups: usize,
    #[arg(long)]
    t: Option<String>,
    #[arg(long, default_value = "1")]
    u: String,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        std::process::exit(2);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .expect("thread pool");
    let strict = cli.strict;
    let result = pool.install(|| dispatch(cli.command, strict));
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}

fn dispatch(command: Command, strict: bool) -> Result<(), CliError> {
    match command {
        Command::Fit(args) => run_fit(args, strict),
        Command::Cv(args) => run_cv(args, strict),
        Command::Predict(args) => run_predict(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Count(args) => run_count(args),
        Command::Oracle(args) => run_oracle(args),
    }
}

/// Resolves a sparsity spec: a plain integer, or a fraction of n written
/// like "0.4n" (rounded to nearest, minimum 1).
fn parse_t_spec(spec: &str, n: usize) -> Result<usize, CliError> {
    let spec = spec.trim();
    if let Some(frac) = spec.strip_suffix('n') {
        let f: f64 = frac
            .parse()
            .map_err(|_| CliError::Usage(format!("bad t spec {spec:?}")))?;
        if !(f > 0.0) {
            return Err(CliError::Usage(format!("t fraction must be positive: {spec:?}")));
        }
        Ok(((f * n as f64).round() as usize).max(1))
    } else {
        let t: usize = spec
            .parse()
            .map_err(|_| CliError::Usage(format!("bad t spec {spec:?}")))?;
        if t == 0 {
            return Err(CliError::Usage("t must be at least 1".into()));
        }
        Ok(t)
    }
}

fn parse_usize_list(spec: &str, what: &str) -> Result<Vec<usize>, CliError> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad {what} entry {s:?}")))
        })
        .collect()
}

/// A scalar broadcast, or a comma list of per-predictor budgets.
fn parse_constraints(
    groups: usize,
    t: usize,
    u_spec: &str,
    p: usize,
) -> Result<Constraints, CliError> {
    let entries = parse_usize_list(u_spec, "u")?;
    match entries.len() {
        0 => Err(CliError::Usage("empty u spec".into())),
        1 => Ok(Constraints::new(groups, t, entries[0], p)?),
        len if len == p => Ok(Constraints::with_per_predictor(groups, t, entries)?),
        len => Err(CliError::Usage(format!(
            "u list has {len} entries, expected 1 or p = {p}"
        ))),
    }
}

fn require_groups(groups: Option<usize>) -> Result<usize, CliError> {
    let groups = groups.ok_or_else(|| CliError::Usage("--groups is required".into()))?;
    if groups < 2 {
        return Err(CliError::Usage("--groups must be at least 2".into()));
    }
    Ok(groups)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_solver_warnings(cap_hits: usize, strict: bool) -> Result<(), CliError> {
    if cap_hits > 0 {
        eprintln!("warning: {cap_hits} inner solve(s) hit the iteration cap");
        if strict {
            return Err(CliError::Solver(format!(
                "{cap_hits} inner solve(s) hit the iteration cap"
            )));
        }
    }
    Ok(())
}

fn run_fit(args: FitArgs, strict: bool) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let (x, y) = io::read_xy_csv(&args.data)?;
    let groups = require_groups(args.groups.or(file.groups))?;
    let t_spec = args
        .t
        .or(file.t)
        .ok_or_else(|| CliError::Usage("--t is required".into()))?;
    let u_spec = args
        .u
        .or(file.u)
        .ok_or_else(|| CliError::Usage("--u is required".into()))?;
    let t = parse_t_spec(&t_spec, x.nrows())?;
    let constraints = parse_constraints(groups, t, &u_spec, x.ncols())?;
    let opts = FitOptions {
        gamma: args.gamma.or(file.gamma).unwrap_or(0.05),
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(1e-6),
        searches: args.searches.or(file.searches).unwrap_or(0),
        lasso_folds: 5,
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    validate_options(&opts)?;
    let model = fit(x.view(), y.view(), &constraints, &opts)?;
    check_solver_warnings(model.ensemble.iteration_cap_hits, strict)?;
    write_output(args.out.as_deref(), &model_to_json(&model))
}

fn validate_options(opts: &FitOptions) -> Result<(), CliError> {
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(CliError::Usage(format!(
            "gamma must lie in (0, 1), got {}",
            opts.gamma
        )));
    }
    if !(opts.epsilon > 0.0) {
        return Err(CliError::Usage(format!(
            "epsilon must be positive, got {}",
            opts.epsilon
        )));
    }
    Ok(())
}

fn run_cv(args: CvArgs, strict: bool) -> Result<(), CliError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let (x, y) = io::read_xy_csv(&args.data)?;
    let n = x.nrows();
    let groups = require_groups(args.groups.or(file.groups))?;
    // Default grids: t in {0.3n, 0.4n, 0.5n}, u in {1..G}.
    let t_grid_spec = args
        .t_grid
        .or(file.t_grid)
        .unwrap_or_else(|| "0.3n,0.4n,0.5n".to_string());
    let mut t_grid = Vec::new();
    for spec in t_grid_spec.split(',').filter(|s| !s.trim().is_empty()) {
        t_grid.push(parse_t_spec(spec, n)?);
    }
    t_grid.dedup();
    let u_grid = match args.u_grid.or(file.u_grid) {
        Some(spec) => parse_usize_list(&spec, "u-grid")?,
        None => (1..=groups).collect(),
    };
    let folds = args.folds.or(file.folds).unwrap_or(5);
    let opts = FitOptions {
        gamma: args.gamma.or(file.gamma).unwrap_or(0.05),
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(1e-6),
        searches: args.searches.or(file.searches).unwrap_or(0),
        lasso_folds: 5,
        seed: args.seed.or(file.seed).unwrap_or(0),
    };
    validate_options(&opts)?;
    let model = cross_validate(x.view(), y.view(), groups, &t_grid, &u_grid, folds, &opts)?;
    check_solver_warnings(model.ensemble.iteration_cap_hits, strict)?;
    if let Some(cv_out) = args.cv_out.as_deref() {
        let report = model.cv.as_ref().expect("cross_validate always reports");
        write_output(Some(cv_out), &io::cv_report_csv(report))?;
    }
    write_output(args.out.as_deref(), &model_to_json(&model))
}

fn run_predict(args: PredictArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.model)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.model.display())))?;
    let model = model_from_json(&text)?;
    let features = io::read_features_csv(&args.data)?;
    let output = if args.per_model {
        let pred = model.predict_per_model(features.view())?;
        io::per_model_predictions_csv(&pred)
    } else {
        let pred = model.predict(features.view())?;
        io::predictions_csv(&pred)
    };
    write_output(args.out.as_deref(), &output)
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config: SimulationConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("bad simulation config: {e}")))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let group_sizes: Vec<usize> = match (args.groups, args.group_range) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--groups and --group-range are mutually exclusive".into(),
            ))
        }
        (Some(g), None) => {
            if g < 2 {
                return Err(CliError::Usage("--groups must be at least 2".into()));
            }
            vec![g]
        }
        (None, Some(max)) => {
            if max < 2 {
                return Err(CliError::Usage("--group-range must be at least 2".into()));
            }
            (2..=max).collect()
        }
        (None, None) => return Err(CliError::Usage("need --groups or --group-range".into())),
    };
    let method = if args.cv {
        let t_grid_spec = args.t_grid.unwrap_or_else(|| "0.3n,0.4n,0.5n".to_string());
        let mut t_grid = Vec::new();
        for spec in t_grid_spec.split(',').filter(|s| !s.trim().is_empty()) {
            t_grid.push(parse_t_spec(spec, config.n)?);
        }
        t_grid.dedup();
        let u_grid = match args.u_grid {
            Some(spec) => parse_usize_list(&spec, "u-grid")?,
            None => (1..=*group_sizes.iter().max().expect("non-empty")).collect(),
        };
        StudyMethod::CrossValidated {
            t_grid,
            u_grid,
            folds: args.folds.unwrap_or(5),
        }
    } else {
        let t_spec = args
            .t
            .ok_or_else(|| CliError::Usage("fixed mode needs --t (or pass --cv)".into()))?;
        StudyMethod::Fixed {
            t: parse_t_spec(&t_spec, config.n)?,
            u: args.u.unwrap_or(1),
        }
    };
    let opts = FitOptions {
        gamma: args.gamma.unwrap_or(0.05),
        epsilon: args.epsilon.unwrap_or(1e-6),
        searches: args.searches.unwrap_or(0),
        lasso_folds: 5,
        seed: config.seed,
    };
    validate_options(&opts)?;
    let rows = run_study(
        &config,
        args.reps,
        &group_sizes,
        &method,
        &opts,
        args.fixed_coefficients,
    )?;
    write_output(args.out.as_deref(), &io::study_csv(&rows))
}

fn run_count(args: CountArgs) -> Result<(), CliError> {
    if args.t > args.p {
        return Err(CliError::Usage(format!(
            "t = {} exceeds p = {}",
            args.t, args.p
        )));
    }
    let value = if args.splits {
        let groups = args
            .groups
            .ok_or_else(|| CliError::Usage("--splits needs --groups".into()))?;
        if groups == 0 || args.p < groups {
            return Err(CliError::Usage(format!(
                "need 1 <= G <= p, got G = {groups}, p = {}",
                args.p
            )));
        }
        count_splits(args.p, groups, args.t)
    } else {
        count_subsets(args.p, args.t)
    };
    println!("{value}");
    Ok(())
}

fn run_oracle(args: OracleArgs) -> Result<(), CliError> {
    let (x, y) = io::read_xy_csv(&args.data)?;
    if args.groups < 1 {
        return Err(CliError::Usage("--groups must be at least 1".into()));
    }
    let t_spec = args
        .t
        .ok_or_else(|| CliError::Usage("--t is required".into()))?;
    let t = parse_t_spec(&t_spec, x.nrows())?;
    let constraints = parse_constraints(args.groups, t, &args.u, x.ncols())?;
    let data = standardize(x.view(), y.view())?;
    let solution = exhaustive_bsps(&data, &constraints).map_err(|e| match e {
        OracleError::TooLarge { .. } => CliError::Usage(e.to_string()),
    })?;
    let supports =
        serde_json::to_string(&solution.supports).expect("supports serialize");
    println!(
        "{{\"objective\":{},\"supports\":{}}}",
        io::fmt_f64(solution.objective),
        supports
    );
    Ok(())
}
