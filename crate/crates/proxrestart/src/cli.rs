//! Command-line front end.
//!
//! Four subcommands: `solve` runs one configuration and writes a trace,
//! `rates` tabulates the theoretical rate curves, `sweep` fans a grid of
//! runs across a worker pool, and `make-reference` produces a high-accuracy
//! optimum file for gap-based stopping. Every flag can also be given in a
//! flat `key = value` config file; explicit flags win, unknown keys are
//! errors. Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 IO failure.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data_io::{
    load_design, read_reference, synth_lasso, write_reference, write_trace, DataError,
    DataFormat, DatasetManifest, LabelRule,
};
use crate::problems::{
    elastic_lasso_problem, lasso_default_weight, lasso_problem, logistic_problem,
    CompositeProblem,
};
use crate::restart::{resolve_combination, RestartPolicy};
use crate::schedule::{
    cd_rate, choose_restart_period, choose_sigma, contraction_factor, m_k, per_iteration_rate,
    rate_bound, xi_at,
};
use crate::solvers::{compute_reference, run, ApproxEngine, SolverError, SolverKind, StopRule};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        match err {
            DataError::Io(_) => CliError::Io(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(err: SolverError) -> Self {
        match err {
            SolverError::NonFinite { .. } => CliError::Numeric(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "proxrestart", version, about = "Composite optimization with restarted accelerated methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one solver configuration and report the outcome.
    Solve(SolveArgs),
    /// Tabulate theoretical rate curves as CSV.
    Rates(RatesArgs),
    /// Run a grid of configurations, one summary row each.
    Sweep(SweepArgs),
    /// Produce a high-accuracy reference optimum file.
    MakeReference(MakeReferenceArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ProblemArgs {
    /// Objective family: lasso | logistic
    #[arg(long)]
    problem: Option<String>,
    /// Dataset path (omit when --synth is given)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Dataset format: libsvm | csv
    #[arg(long)]
    format: Option<String>,
    /// Class mapped to +1; all other labels map to -1
    #[arg(long)]
    positive_label: Option<String>,
    /// Declared feature count (validated against the data)
    #[arg(long)]
    features: Option<usize>,
    /// Synthetic instance spec: n,m,density,cond,seed
    #[arg(long)]
    synth: Option<String>,
    /// L1 weight for lasso; defaults to the max-correlation heuristic
    #[arg(long)]
    reg: Option<f64>,
    /// Quadratic augmentation for lasso
    #[arg(long)]
    l2: Option<f64>,
    /// Logistic loss weight
    #[arg(long)]
    lambda1: Option<f64>,
    /// Logistic quadratic regularization weight
    #[arg(long)]
    lambda2: Option<f64>,
    /// Reference optimum file for gap reporting
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct SolverArgs {
    /// ista | fista | apg | approx
    #[arg(long)]
    solver: Option<String>,
    /// approx engine: efficient | naive
    #[arg(long)]
    engine: Option<String>,
    /// Expected sampled-coordinate count per iteration
    #[arg(long)]
    tau: Option<usize>,
    /// none | at-x | at-z | combo | approx-combo | fval | interval
    #[arg(long)]
    restart: Option<String>,
    /// Strong-convexity estimate driving derived restart parameters
    #[arg(long)]
    mu: Option<f64>,
    /// Contraction target of the counter-based conditional restart
    #[arg(long)]
    alpha: Option<f64>,
    /// Explicit restart mixing weight (overrides the derived one)
    #[arg(long)]
    sigma: Option<f64>,
    /// Explicit restart period (overrides the derived one)
    #[arg(long)]
    period: Option<u64>,
    /// Lower bound of the adaptive-restart window
    #[arg(long)]
    interval_low: Option<u64>,
    /// Upper bound of the adaptive-restart window (forced restart)
    #[arg(long)]
    interval_high: Option<u64>,
    /// Inner rule of the interval policy: fval | at-z | at-x
    #[arg(long)]
    inner: Option<String>,
    /// Iteration budget
    #[arg(long)]
    budget: Option<u64>,
    /// Stop once the gap against the reference falls this low
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Stop once this many epochs have elapsed
    #[arg(long)]
    epoch_cap: Option<f64>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Trace CSV output path
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Flat key = value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RatesArgs {
    /// Fixed strong-convexity estimate
    #[arg(long)]
    mu: Option<f64>,
    /// Grid over the estimate: comma list or start:stop:count (log-spaced)
    #[arg(long)]
    mu_grid: Option<String>,
    /// Fixed true strong-convexity value
    #[arg(long)]
    mu_f: Option<f64>,
    /// Grid over the true value: comma list or start:stop:count
    #[arg(long)]
    mu_f_grid: Option<String>,
    /// Initial momentum (tau/n)
    #[arg(long)]
    theta0: Option<f64>,
    /// n/tau
    #[arg(long)]
    ratio: Option<f64>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Swept parameter: mu | sigma | period | tau | seed
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values
    #[arg(long)]
    values: Option<String>,
    /// Seeds averaged per axis value
    #[arg(long)]
    seeds: Option<u64>,
    /// Worker threads for the fan-out
    #[arg(long)]
    jobs: Option<usize>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MakeReferenceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Iteration cap for the pre-run
    #[arg(long)]
    budget: Option<u64>,
    /// Proximal-residual tolerance declaring optimality
    #[arg(long)]
    tol: Option<f64>,
    /// Output reference path
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Entry point used by `main` and the tests; returns the process exit code.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::MakeReference(args) => cmd_make_reference(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// config-file merging

struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>, known: &[&str]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("config {path:?}: {e}")))?;
            let known: HashSet<&str> = known.iter().copied().collect();
            for (line_no, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Config(format!(
                        "config line {}: expected key = value, got {line:?}",
                        line_no + 1
                    ))
                })?;
                let key = key.trim().to_string();
                if !known.contains(key.as_str()) {
                    return Err(CliError::Config(format!(
                        "config line {}: unknown key {key:?}",
                        line_no + 1
                    )));
                }
                values.insert(key, value.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    fn merge<T, F>(&self, flag: Option<T>, key: &str, parse: F) -> Result<Option<T>, CliError>
    where
        F: FnOnce(&str) -> Result<T, String>,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => parse(raw)
                .map(Some)
                .map_err(|e| CliError::Config(format!("config key {key:?}: {e}"))),
            None => Ok(None),
        }
    }
}

fn parse_f64(raw: &str) -> Result<f64, String> {
    raw.parse().map_err(|_| format!("bad number {raw:?}"))
}

fn parse_u64(raw: &str) -> Result<u64, String> {
    raw.parse().map_err(|_| format!("bad integer {raw:?}"))
}

fn parse_usize(raw: &str) -> Result<usize, String> {
    raw.parse().map_err(|_| format!("bad integer {raw:?}"))
}

fn parse_string(raw: &str) -> Result<String, String> {
    Ok(raw.to_string())
}

fn parse_path(raw: &str) -> Result<PathBuf, String> {
    Ok(PathBuf::from(raw))
}

const PROBLEM_KEYS: &[&str] = &[
    "problem",
    "data",
    "format",
    "positive-label",
    "features",
    "synth",
    "reg",
    "l2",
    "lambda1",
    "lambda2",
    "reference",
];

const SOLVER_KEYS: &[&str] = &[
    "solver",
    "engine",
    "tau",
    "restart",
    "mu",
    "alpha",
    "sigma",
    "period",
    "interval-low",
    "interval-high",
    "inner",
    "budget",
    "gap-tol",
    "epoch-cap",
    "seed",
];

impl ProblemArgs {
    fn merged(mut self, file: &FileConfig) -> Result<Self, CliError> {
        self.problem = file.merge(self.problem, "problem", parse_string)?;
        self.data = file.merge(self.data, "data", parse_path)?;
        self.format = file.merge(self.format, "format", parse_string)?;
        self.positive_label = file.merge(self.positive_label, "positive-label", parse_string)?;
        self.features = file.merge(self.features, "features", parse_usize)?;
        self.synth = file.merge(self.synth, "synth", parse_string)?;
        self.reg = file.merge(self.reg, "reg", parse_f64)?;
        self.l2 = file.merge(self.l2, "l2", parse_f64)?;
        self.lambda1 = file.merge(self.lambda1, "lambda1", parse_f64)?;
        self.lambda2 = file.merge(self.lambda2, "lambda2", parse_f64)?;
        self.reference = file.merge(self.reference, "reference", parse_path)?;
        Ok(self)
    }
}

impl SolverArgs {
    fn merged(mut self, file: &FileConfig) -> Result<Self, CliError> {
        self.solver = file.merge(self.solver, "solver", parse_string)?;
        self.engine = file.merge(self.engine, "engine", parse_string)?;
        self.tau = file.merge(self.tau, "tau", parse_usize)?;
        self.restart = file.merge(self.restart, "restart", parse_string)?;
        self.mu = file.merge(self.mu, "mu", parse_f64)?;
        self.alpha = file.merge(self.alpha, "alpha", parse_f64)?;
        self.sigma = file.merge(self.sigma, "sigma", parse_f64)?;
        self.period = file.merge(self.period, "period", parse_u64)?;
        self.interval_low = file.merge(self.interval_low, "interval-low", parse_u64)?;
        self.interval_high = file.merge(self.interval_high, "interval-high", parse_u64)?;
        self.inner = file.merge(self.inner, "inner", parse_string)?;
        self.budget = file.merge(self.budget, "budget", parse_u64)?;
        self.gap_tol = file.merge(self.gap_tol, "gap-tol", parse_f64)?;
        self.epoch_cap = file.merge(self.epoch_cap, "epoch-cap", parse_f64)?;
        self.seed = file.merge(self.seed, "seed", parse_u64)?;
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// problem construction

struct BuiltProblem {
    problem: CompositeProblem,
    header: Vec<String>,
}

fn build_problem(args: &ProblemArgs) -> Result<BuiltProblem, CliError> {
    let kind = args.problem.as_deref().unwrap_or("lasso");
    let mut header = Vec::new();
    header.push(format!("problem = {kind}"));

    let design = if let Some(spec) = &args.synth {
        let parts: Vec<&str> = spec.split(',').collect();
        if parts.len() != 5 {
            return Err(CliError::Config(format!(
                "synth expects n,m,density,cond,seed; got {spec:?}"
            )));
        }
        let n = parse_usize(parts[0]).map_err(CliError::Config)?;
        let m = parse_usize(parts[1]).map_err(CliError::Config)?;
        let density = parse_f64(parts[2]).map_err(CliError::Config)?;
        let cond = parse_f64(parts[3]).map_err(CliError::Config)?;
        let seed = parse_u64(parts[4]).map_err(CliError::Config)?;
        header.push(format!("synth = {spec}"));
        synth_lasso(n, m, density, cond, seed)?.0
    } else if let Some(path) = &args.data {
        let format = match args.format.as_deref().unwrap_or("libsvm") {
            "libsvm" => DataFormat::Libsvm,
            "csv" => DataFormat::Csv,
            other => {
                return Err(CliError::Config(format!(
                    "unknown format {other:?}; expected libsvm or csv"
                )))
            }
        };
        let label_rule = match &args.positive_label {
            Some(class) => LabelRule::PositiveClass(class.clone()),
            None => LabelRule::AsIs,
        };
        header.push(format!("data = {}", path.display()));
        load_design(&DatasetManifest {
            path: path.clone(),
            format,
            label_rule,
            feature_count: args.features,
        })?
    } else {
        return Err(CliError::Config(
            "either --data or --synth must be given".to_string(),
        ));
    };

    let mut problem = match kind {
        "lasso" => {
            let reg = args.reg.unwrap_or_else(|| lasso_default_weight(&design));
            let l2 = args.l2.unwrap_or(0.0);
            header.push(format!("reg = {reg}"));
            if l2 > 0.0 {
                header.push(format!("l2 = {l2}"));
                elastic_lasso_problem(design, reg, l2).map_err(|e| CliError::Config(e.to_string()))?
            } else {
                lasso_problem(design, reg).map_err(|e| CliError::Config(e.to_string()))?
            }
        }
        "logistic" => {
            let lambda1 = args.lambda1.unwrap_or(1.0);
            let lambda2 = args.lambda2.unwrap_or(0.0);
            header.push(format!("lambda1 = {lambda1}"));
            header.push(format!("lambda2 = {lambda2}"));
            logistic_problem(design, lambda1, lambda2)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown problem {other:?}; expected lasso or logistic"
            )))
        }
    };

    if let Some(path) = &args.reference {
        let reference = read_reference(path)?;
        if reference.x.len() != problem.dim() {
            return Err(CliError::Config(
                DataError::ReferenceDimension {
                    got: reference.x.len(),
                    expected: problem.dim(),
                }
                .to_string(),
            ));
        }
        problem
            .set_reference(reference)
            .map_err(|e| CliError::Config(e.to_string()))?;
        header.push(format!("reference = {}", path.display()));
    }

    Ok(BuiltProblem { problem, header })
}

struct BuiltRun {
    kind: SolverKind,
    policy: RestartPolicy,
    budget: u64,
    stop: StopRule,
    seed: u64,
    header: Vec<String>,
}

fn build_run(args: &SolverArgs, problem: &CompositeProblem) -> Result<BuiltRun, CliError> {
    let n = problem.dim();
    let solver = args.solver.as_deref().unwrap_or("fista");
    let kind = match solver {
        "ista" => SolverKind::Ista,
        "fista" => SolverKind::Fista,
        "apg" => SolverKind::Apg,
        "approx" => {
            let tau = args.tau.unwrap_or(1);
            let engine = match args.engine.as_deref().unwrap_or("efficient") {
                "efficient" => ApproxEngine::Efficient,
                "naive" => ApproxEngine::Naive,
                other => {
                    return Err(CliError::Config(format!(
                        "unknown engine {other:?}; expected efficient or naive"
                    )))
                }
            };
            SolverKind::Approx { tau, engine }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown solver {other:?}; expected ista, fista, apg or approx"
            )))
        }
    };
    let theta0 = kind.theta0(n);
    let ratio = match kind {
        SolverKind::Approx { tau, .. } => n as f64 / tau as f64,
        _ => 1.0,
    };

    let restart = args.restart.as_deref().unwrap_or("none");
    let policy = match restart {
        "none" => RestartPolicy::None,
        "at-x" => RestartPolicy::ConditionalAtX {
            mu: args
                .mu
                .ok_or_else(|| CliError::Config("at-x restart needs --mu".to_string()))?,
            alpha: args.alpha.unwrap_or(0.5),
        },
        "at-z" => RestartPolicy::ConditionalAtZ,
        "combo" => {
            let (sigma, period) =
                resolve_combination(args.mu, args.sigma, args.period, theta0, ratio)
                    .map_err(|e| CliError::Config(format!("combo restart: {e}")))?;
            RestartPolicy::FixedCombination { sigma, period }
        }
        "approx-combo" => {
            let (sigma, period) =
                resolve_combination(args.mu, args.sigma, args.period, theta0, ratio)
                    .map_err(|e| CliError::Config(format!("approx-combo restart: {e}")))?;
            RestartPolicy::ApproxCombination { sigma, period }
        }
        "fval" => RestartPolicy::FunctionValueAdaptive,
        "interval" => {
            let low = args
                .interval_low
                .ok_or_else(|| CliError::Config("interval restart needs --interval-low".to_string()))?;
            let high = args.interval_high.ok_or_else(|| {
                CliError::Config("interval restart needs --interval-high".to_string())
            })?;
            let inner = match args.inner.as_deref().unwrap_or("fval") {
                "fval" => RestartPolicy::FunctionValueAdaptive,
                "at-z" => RestartPolicy::ConditionalAtZ,
                "at-x" => RestartPolicy::ConditionalAtX {
                    mu: args
                        .mu
                        .ok_or_else(|| CliError::Config("at-x inner rule needs --mu".to_string()))?,
                    alpha: args.alpha.unwrap_or(0.5),
                },
                other => {
                    return Err(CliError::Config(format!(
                        "unknown inner rule {other:?}; expected fval, at-z or at-x"
                    )))
                }
            };
            RestartPolicy::IntervalAdaptive {
                period_low: low,
                period_high: high,
                inner: Box::new(inner),
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown restart {other:?}; expected none, at-x, at-z, combo, approx-combo, fval or interval"
            )))
        }
    };

    let budget = args.budget.unwrap_or(10_000);
    let stop = match (args.gap_tol, args.epoch_cap) {
        (Some(tol), _) => StopRule::GapBelow(tol),
        (None, Some(cap)) => StopRule::EpochCap(cap),
        (None, None) => StopRule::BudgetOnly,
    };
    let seed = args.seed.unwrap_or(0);

    let mut header = vec![
        format!("solver = {solver}"),
        format!("restart = {}", policy.label()),
        format!("budget = {budget}"),
        format!("seed = {seed}"),
    ];
    if let SolverKind::Approx { tau, engine } = kind {
        header.push(format!("tau = {tau}"));
        header.push(format!(
            "engine = {}",
            if engine == ApproxEngine::Efficient {
                "efficient"
            } else {
                "naive"
            }
        ));
    }
    match &policy {
        RestartPolicy::FixedCombination { sigma, period }
        | RestartPolicy::ApproxCombination { sigma, period } => {
            header.push(format!("sigma = {sigma}"));
            header.push(format!("period = {period}"));
        }
        RestartPolicy::ConditionalAtX { mu, alpha } => {
            header.push(format!("mu = {mu}"));
            header.push(format!("alpha = {alpha}"));
        }
        RestartPolicy::IntervalAdaptive {
            period_low,
            period_high,
            inner,
        } => {
            header.push(format!("interval-low = {period_low}"));
            header.push(format!("interval-high = {period_high}"));
            header.push(format!("inner = {}", inner.label()));
        }
        _ => {}
    }
    if let Some(tol) = args.gap_tol {
        header.push(format!("gap-tol = {tol}"));
    }
    if let Some(cap) = args.epoch_cap {
        header.push(format!("epoch-cap = {cap}"));
    }

    Ok(BuiltRun {
        kind,
        policy,
        budget,
        stop,
        seed,
        header,
    })
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let mut keys: Vec<&str> = PROBLEM_KEYS.to_vec();
    keys.extend_from_slice(SOLVER_KEYS);
    keys.push("trace");
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let problem_args = args.problem.merged(&file)?;
    let solver_args = args.solver.merged(&file)?;
    let trace_path = file.merge(args.trace, "trace", parse_path)?;

    let built = build_problem(&problem_args)?;
    let spec = build_run(&solver_args, &built.problem)?;

    let trace = run(
        &built.problem,
        spec.kind,
        &spec.policy,
        spec.budget,
        spec.stop,
        spec.seed,
    )?;

    if let Some(path) = &trace_path {
        let mut header = built.header.clone();
        header.extend(spec.header.clone());
        write_trace(&trace, path, &header).map_err(|e| CliError::Io(e.to_string()))?;
    }

    let last = trace.last();
    let iterations = match spec.stop {
        StopRule::GapBelow(tol) => trace
            .iterations_to_gap(tol)
            .map(|k| k.to_string())
            .unwrap_or_else(|| format!(">{}", last.iteration)),
        _ => last.iteration.to_string(),
    };
    match last.gap {
        Some(gap) => println!(
            "iterations={iterations} F={} gap={gap} restarts={}",
            last.objective,
            trace.restarts()
        ),
        None => println!(
            "iterations={iterations} F={} restarts={}",
            last.objective,
            trace.restarts()
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// rates

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!(
                "grid {spec:?} must be start:stop:count"
            )));
        }
        let start = parse_f64(parts[0]).map_err(CliError::Config)?;
        let stop = parse_f64(parts[1]).map_err(CliError::Config)?;
        let count = parse_usize(parts[2]).map_err(CliError::Config)?;
        if count < 2 || start <= 0.0 || stop <= start {
            return Err(CliError::Config(format!(
                "grid {spec:?} needs 0 < start < stop and count >= 2"
            )));
        }
        let (ls, le) = (start.ln(), stop.ln());
        Ok((0..count)
            .map(|i| (ls + (le - ls) * i as f64 / (count - 1) as f64).exp())
            .collect())
    } else {
        let values: Result<Vec<f64>, _> = spec.split(',').map(parse_f64).collect();
        let values = values.map_err(CliError::Config)?;
        if values.is_empty() {
            return Err(CliError::Config("empty grid".to_string()));
        }
        Ok(values)
    }
}

/// One row of the rate table for a given estimate / true-value pair.
fn rate_row(mu: f64, mu_f: f64, theta0: f64, ratio: f64) -> Result<String, CliError> {
    let period = choose_restart_period(mu, theta0).map_err(|e| CliError::Config(e.to_string()))?;
    let sigma = choose_sigma(mu, period, theta0, ratio).map_err(|e| CliError::Config(e.to_string()))?;
    let xi = xi_at(theta0, ratio, period).map_err(|e| CliError::Config(e.to_string()))?;
    let m_true = m_k(mu_f, xi, theta0).map_err(|e| CliError::Config(e.to_string()))?;
    let factor = contraction_factor(sigma, m_true).map_err(|e| CliError::Config(e.to_string()))?;
    let exact = per_iteration_rate(factor, period);
    let simplified =
        rate_bound(mu, mu_f, theta0, 1.0 + mu).map_err(|e| CliError::Config(e.to_string()))?;
    let cd = cd_rate(mu_f, theta0);
    Ok(format!(
        "{mu},{mu_f},{period},{sigma},{exact},{simplified},{cd}"
    ))
}

fn cmd_rates(args: RatesArgs) -> Result<(), CliError> {
    let keys = [
        "mu", "mu-grid", "mu-f", "mu-f-grid", "theta0", "ratio", "out",
    ];
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let mu = file.merge(args.mu, "mu", parse_f64)?;
    let mu_grid = file.merge(args.mu_grid, "mu-grid", parse_string)?;
    let mu_f = file.merge(args.mu_f, "mu-f", parse_f64)?;
    let mu_f_grid = file.merge(args.mu_f_grid, "mu-f-grid", parse_string)?;
    let theta0 = file.merge(args.theta0, "theta0", parse_f64)?.unwrap_or(1.0);
    let ratio = file
        .merge(args.ratio, "ratio", parse_f64)?
        .unwrap_or(1.0 / theta0);
    let out = file.merge(args.out, "out", parse_path)?;

    let mut header = vec![
        format!("theta0 = {theta0}"),
        format!("ratio = {ratio}"),
    ];
    let mut rows = Vec::new();
    match (mu_grid, mu_f_grid) {
        (Some(grid), None) => {
            let fixed = mu_f.ok_or_else(|| {
                CliError::Config("--mu-f is required with --mu-grid".to_string())
            })?;
            header.push(format!("mu-f = {fixed}"));
            header.push(format!("mu-grid = {grid}"));
            for value in parse_grid(&grid)? {
                rows.push(rate_row(value, fixed, theta0, ratio)?);
            }
        }
        (None, Some(grid)) => {
            let fixed =
                mu.ok_or_else(|| CliError::Config("--mu is required with --mu-f-grid".to_string()))?;
            header.push(format!("mu = {fixed}"));
            header.push(format!("mu-f-grid = {grid}"));
            for value in parse_grid(&grid)? {
                rows.push(rate_row(fixed, value, theta0, ratio)?);
            }
        }
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "give either --mu-grid or --mu-f-grid, not both".to_string(),
            ))
        }
        (None, None) => {
            let (mu, mu_f) = match (mu, mu_f) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CliError::Config(
                        "rates needs --mu and --mu-f, or one of them as a grid".to_string(),
                    ))
                }
            };
            rows.push(rate_row(mu, mu_f, theta0, ratio)?);
        }
    }

    let mut text = String::new();
    for line in &header {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str("mu,mu_f,K,sigma,rate_restart,rate_simplified,rate_cd\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io(e.to_string()))?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut keys: Vec<&str> = PROBLEM_KEYS.to_vec();
    keys.extend_from_slice(SOLVER_KEYS);
    keys.extend_from_slice(&["axis", "values", "seeds", "jobs", "out"]);
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let problem_args = args.problem.merged(&file)?;
    let solver_args = args.solver.merged(&file)?;
    let axis = file
        .merge(args.axis, "axis", parse_string)?
        .ok_or_else(|| CliError::Config("sweep needs --axis".to_string()))?;
    let values_spec = file
        .merge(args.values, "values", parse_string)?
        .ok_or_else(|| CliError::Config("sweep needs --values".to_string()))?;
    let seeds = file.merge(args.seeds, "seeds", parse_u64)?.unwrap_or(1);
    let jobs = file.merge(args.jobs, "jobs", parse_usize)?;
    let out = file.merge(args.out, "out", parse_path)?;

    if seeds == 0 {
        return Err(CliError::Config("seeds must be at least 1".to_string()));
    }
    let values: Vec<f64> = values_spec
        .split(',')
        .map(|v| parse_f64(v.trim()).map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("sweep values must be nonempty".to_string()));
    }

    let built = build_problem(&problem_args)?;
    let base_seed = solver_args.seed.unwrap_or(0);

    // one (value, seed) cell per run, fanned across the pool, merged in order
    let cells: Vec<(usize, f64, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| (0..seeds).map(move |s| (i, v, base_seed + s)))
        .collect();

    let run_cell = |&(_, value, seed): &(usize, f64, u64)| -> Result<(u64, Option<f64>), CliError> {
        let mut cell_args = solver_args.clone();
        match axis.as_str() {
            "mu" => cell_args.mu = Some(value),
            "sigma" => cell_args.sigma = Some(value),
            "period" => cell_args.period = Some(value as u64),
            "tau" => cell_args.tau = Some(value as usize),
            "seed" => {}
            other => {
                return Err(CliError::Config(format!(
                    "unknown axis {other:?}; expected mu, sigma, period, tau or seed"
                )))
            }
        }
        if axis == "seed" {
            cell_args.seed = Some(value as u64);
        } else {
            cell_args.seed = Some(seed);
        }
        let spec = build_run(&cell_args, &built.problem)?;
        let trace = run(
            &built.problem,
            spec.kind,
            &spec.policy,
            spec.budget,
            spec.stop,
            spec.seed,
        )?;
        let iterations = match spec.stop {
            StopRule::GapBelow(tol) => trace
                .iterations_to_gap(tol)
                .unwrap_or(trace.last().iteration + 1),
            _ => trace.last().iteration,
        };
        Ok((iterations, trace.final_gap()))
    };

    let results: Vec<Result<(u64, Option<f64>), CliError>> = match jobs {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Config(e.to_string()))?;
            pool.install(|| {
                use rayon::prelude::*;
                cells.par_iter().map(run_cell).collect()
            })
        }
        None => {
            use rayon::prelude::*;
            cells.par_iter().map(run_cell).collect()
        }
    };

    let mut per_value: Vec<Vec<(u64, Option<f64>)>> = vec![Vec::new(); values.len()];
    for (cell, result) in cells.iter().zip(results) {
        per_value[cell.0].push(result?);
    }

    let mut header = built.header.clone();
    header.push(format!("axis = {axis}"));
    header.push(format!("values = {values_spec}"));
    header.push(format!("seeds = {seeds}"));
    let mut text = String::new();
    for line in &header {
        text.push_str(&format!("# {line}\n"));
    }
    // the gap columns stay empty when no reference is attached
    if seeds == 1 {
        text.push_str("value,iterations,gap\n");
        for (value, cells) in values.iter().zip(&per_value) {
            let (iters, gap) = cells[0];
            let gap = gap.map(|g| g.to_string()).unwrap_or_default();
            text.push_str(&format!("{value},{iters},{gap}\n"));
        }
    } else {
        text.push_str("value,iterations_mean,iterations_std,gap_mean,gap_std\n");
        for (value, cells) in values.iter().zip(&per_value) {
            let n = cells.len() as f64;
            let im = cells.iter().map(|c| c.0 as f64).sum::<f64>() / n;
            let is = (cells.iter().map(|c| (c.0 as f64 - im).powi(2)).sum::<f64>() / n).sqrt();
            let gaps: Option<Vec<f64>> = cells.iter().map(|c| c.1).collect();
            let (gm, gs) = match gaps {
                Some(gaps) => {
                    let gm = gaps.iter().sum::<f64>() / n;
                    let gs = (gaps.iter().map(|g| (g - gm).powi(2)).sum::<f64>() / n).sqrt();
                    (gm.to_string(), gs.to_string())
                }
                None => (String::new(), String::new()),
            };
            text.push_str(&format!("{value},{im},{is},{gm},{gs}\n"));
        }
    }
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io(e.to_string()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_make_reference(args: MakeReferenceArgs) -> Result<(), CliError> {
    let mut keys: Vec<&str> = PROBLEM_KEYS.to_vec();
    keys.extend_from_slice(&["budget", "tol", "out"]);
    let file = FileConfig::load(args.config.as_deref(), &keys)?;
    let problem_args = args.problem.merged(&file)?;
    let budget = file.merge(args.budget, "budget", parse_u64)?.unwrap_or(1_000_000);
    let tol = file.merge(args.tol, "tol", parse_f64)?.unwrap_or(1e-13);
    let out = file
        .merge(args.out, "out", parse_path)?
        .ok_or_else(|| CliError::Config("make-reference needs --out".to_string()))?;

    let built = build_problem(&problem_args)?;
    let reference = compute_reference(&built.problem, budget, tol)?;
    let mut header = built.header.clone();
    header.push("producer = make-reference".to_string());
    header.push(format!("budget = {budget}"));
    header.push(format!("tol = {tol}"));
    write_reference(&reference, &out, &header).map_err(|e| CliError::Io(e.to_string()))?;
    println!("reference written to {} (F = {})", out.display(), reference.objective);
    Ok(())
}
