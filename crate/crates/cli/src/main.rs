use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use ccsaa::certificate::{cg_log_beta, max_removals, RiskSpec, ScenarioBudget, SumLimit};
use ccsaa::data::{default_instance, estimate_moments, returns_from_prices, Instance, PricePanel, DEFAULT_SEED};
use ccsaa::experiment::{
    aggregate, budget_for, run_experiment, run_method, sweep_w, validate, write_aggregate_csv, write_plot_data,
    write_raw_csv, write_sweep_csv, ExperimentConfig, RowStatus,
};
use ccsaa::gaussian::{sample_scenarios, solve_gaussian_exact};
use ccsaa::heuristics::{AsmConfig, Method, Problem, RunStatus, SolveReport};
use ccsaa::mip::DEFAULT_GAP;
use ccsaa::saa::ScenarioSet;
use ccsaa::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_TIME_LIMIT: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "ccsaa", version, about = "Chance-constrained portfolio selection by sample average approximation")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads for independent trials.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Per-run time limit in seconds (experiments default to 3600).
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Largest certified removal count k for a sample size N.
    Budget(BudgetArgs),
    /// Draw scenarios from an instance and write them as CSV.
    Sample(SampleArgs),
    /// Build an instance file from a monthly price CSV.
    Ingest(IngestArgs),
    /// Solve one scenario program and print a JSON report.
    Solve(SolveArgs),
    /// Out-of-sample violation rate of a solution.
    Validate(ValidateArgs),
    /// Run the trial protocol and write raw and aggregate CSVs.
    Experiment(ExperimentArgs),
    /// Run ASM-1 over several insertion weights.
    SweepW(SweepArgs),
}

#[derive(Args)]
struct InstanceArg {
    /// Instance JSON; the built-in synthetic instance when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
}

impl InstanceArg {
    fn load(&self) -> ccsaa::Result<Instance> {
        match &self.instance {
            Some(p) => Instance::read(p),
            None => Ok(default_instance()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Limit {
    Campi,
    Paper,
}

impl From<Limit> for SumLimit {
    fn from(l: Limit) -> Self {
        match l {
            Limit::Campi => SumLimit::Campi,
            Limit::Paper => SumLimit::Paper,
        }
    }
}

#[derive(Args)]
struct BudgetArgs {
    /// Sample size N.
    #[arg(long, short = 'n')]
    n_scenarios: usize,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Decision dimension; defaults to the instance's asset count minus one.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, value_enum, default_value = "campi")]
    limit: Limit,
    #[command(flatten)]
    instance: InstanceArg,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, short = 'n')]
    n_scenarios: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    instance: InstanceArg,
}

#[derive(Args)]
struct IngestArgs {
    /// CSV with header `date,a1,...,an` and year-month dates.
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, default_value_t = 12)]
    lag: usize,
    #[arg(long)]
    out: PathBuf,
    /// Do not append a cash asset.
    #[arg(long)]
    no_cash: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// ASM insertion weight in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    w: f64,
    /// Polish passes; one per asset when omitted.
    #[arg(long)]
    polish_iterations: Option<usize>,
    /// Restrict risky weights to {0} U [l, u] using the instance bounds.
    #[arg(long)]
    semicontinuous: bool,
    /// Relative optimality gap for branch and bound.
    #[arg(long, default_value_t = DEFAULT_GAP)]
    gap: f64,
}

impl SolverArgs {
    fn asm(&self) -> AsmConfig {
        AsmConfig { w: self.w, polish_iterations: self.polish_iterations, ..AsmConfig::default() }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    method: Method,
    /// Sample size when scenarios are drawn from the instance.
    #[arg(long, short = 'n', conflicts_with = "scenarios")]
    n_scenarios: Option<usize>,
    /// Scenario CSV as written by `sample`.
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Removal count; the certified maximum when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Risk level for `socp`; k/N when omitted.
    #[arg(long)]
    epsilon: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    instance: InstanceArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// JSON file with an `x` array, such as a `solve` report.
    #[arg(long, conflicts_with = "x", required_unless_present = "x")]
    report: Option<PathBuf>,
    /// Comma-separated weights.
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    test_size: usize,
    /// Confidence parameter; the instance value when omitted.
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    instance: InstanceArg,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 10_000])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 100_000)]
    test_size: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    instance: InstanceArg,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', default_value = "asm1")]
    methods: Vec<Method>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also write `plot_data.csv` in long format.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long = "w", value_delimiter = ',', default_values_t = [0.01, 0.5, 1.0])]
    ws: Vec<f64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    semicontinuous: bool,
}

/// Result of a command that may have stopped early.
enum Outcome {
    Done,
    Partial,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::TimeLimit => EXIT_TIME_LIMIT,
        Error::IterationLimit(_) | Error::Numerical(_) | Error::Infeasible | Error::Unbounded => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn time_limit(secs: Option<f64>) -> ccsaa::Result<Option<Duration>> {
    secs.map(|s| Duration::try_from_secs_f64(s).map_err(|_| Error::InvalidArgument(format!("bad time limit {s}"))))
        .transpose()
}

fn write_json(value: &serde_json::Value, out: Option<&Path>) -> ccsaa::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn budget(args: &BudgetArgs) -> ccsaa::Result<Outcome> {
    let inst = args.instance.load()?;
    let base = inst.risk();
    let spec = RiskSpec::new(
        args.epsilon.unwrap_or(base.epsilon),
        args.beta.unwrap_or(base.beta),
        args.dims.unwrap_or(base.n_dims),
    )?;
    let b = max_removals(args.n_scenarios, &spec, args.limit.into())?;
    let log_beta = cg_log_beta(b.n_scenarios, b.k_removals, &spec, args.limit.into())?;
    write_json(
        &json!({
            "n_scenarios": b.n_scenarios,
            "k": b.k_removals,
            "k_over_n": b.ratio(),
            "beta_achieved": b.beta_achieved,
            "log10_beta": log_beta,
            "epsilon": spec.epsilon,
            "beta": spec.beta,
            "n_dims": spec.n_dims,
        }),
        None,
    )?;
    Ok(Outcome::Done)
}

fn sample(args: &SampleArgs, seed: u64) -> ccsaa::Result<Outcome> {
    let inst = args.instance.load()?;
    sample_scenarios(&inst.model, args.n_scenarios, seed)?.write_csv(&args.out)?;
    Ok(Outcome::Done)
}

fn ingest(args: &IngestArgs) -> ccsaa::Result<Outcome> {
    let panel = PricePanel::read_csv(&args.prices)?;
    let returns = returns_from_prices(&panel, args.lag)?;
    let (mean, cov) = estimate_moments(&returns)?;
    Instance::from_moments(panel.names.clone(), mean, cov, !args.no_cash)?.write(&args.out)?;
    Ok(Outcome::Done)
}

fn report_json(r: &SolveReport, budget: &ScenarioBudget) -> serde_json::Value {
    json!({
        "method": r.method.tag(),
        "status": r.status.tag(),
        "n_scenarios": budget.n_scenarios,
        "k": budget.k_removals,
        "objective": r.objective,
        "x": r.x,
        "train_violations": r.train_violations,
        "lp_solves": r.lp_solves,
        "mip_nodes": r.mip_nodes,
        "wall_time": r.wall_time.as_secs_f64(),
        "working_set": r.working_set.indices(),
        "seed": r.seed,
    })
}

fn solve(args: &SolveArgs, seed: u64, limit: Option<Duration>) -> ccsaa::Result<Outcome> {
    let inst = args.instance.load()?;
    let spec = inst.program();
    let semi = if args.solver.semicontinuous {
        Some(inst.semicontinuous_spec().ok_or_else(|| Error::InvalidArgument("instance has no semicontinuous bounds".into()))?)
    } else {
        None
    };
    if let (Method::Socp, Some(eps)) = (args.method, args.epsilon) {
        let r = solve_gaussian_exact(&inst.model, &spec, eps, semi.as_ref())?;
        let out = json!({
            "method": r.method.tag(),
            "status": r.status.tag(),
            "epsilon": eps,
            "objective": r.objective,
            "x": r.x,
            "lp_solves": r.lp_solves,
            "mip_nodes": r.mip_nodes,
            "wall_time": r.wall_time.as_secs_f64(),
        });
        write_json(&out, args.out.as_deref())?;
        return Ok(Outcome::Done);
    }
    let (scenarios, scenario_seed) = match (&args.scenarios, args.n_scenarios) {
        (Some(p), _) => (ScenarioSet::read_csv(p)?, None),
        (None, Some(n)) => (sample_scenarios(&inst.model, n, seed)?, Some(seed)),
        (None, None) => return Err(Error::InvalidArgument("give --scenarios or -n".into())),
    };
    let n = scenarios.n_scenarios();
    let budget = match args.k {
        Some(k) => ScenarioBudget::unchecked(n, k)?,
        None => budget_for(&inst, n)?,
    };
    let mut problem = Problem::new(&scenarios, &spec, budget)?;
    if let Some(s) = &semi {
        problem = problem.with_semicontinuous(s);
    }
    if let Some(t) = limit {
        problem = problem.with_time_limit(t);
    }
    let cfg = ExperimentConfig {
        asm: args.solver.asm(),
        semicontinuous: semi.is_some(),
        mip_gap: args.solver.gap,
        time_limit: limit,
        ..ExperimentConfig::default()
    };
    cfg.asm.validate()?;
    if semi.is_some() && args.method.needs_duals() {
        return Err(Error::UnsupportedForMip(args.method.tag()));
    }
    let report = run_method(args.method, &problem, &inst, &cfg, seed, None)?
        .ok_or_else(|| Error::InvalidArgument(format!("{} needs k > 0 or --epsilon", args.method)))?;
    let mut out = report_json(&report, &budget);
    out["scenario_seed"] = json!(scenario_seed);
    write_json(&out, args.out.as_deref())?;
    Ok(match report.status {
        RunStatus::Ok => Outcome::Done,
        _ => Outcome::Partial,
    })
}

fn read_x(path: &Path) -> ccsaa::Result<Vec<f64>> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Schema { path: path.display().to_string(), message: e.to_string() })?;
    let bad = || Error::Schema { path: "x".into(), message: "expected an array of numbers".into() };
    v.get("x")
        .and_then(|x| x.as_array())
        .ok_or_else(bad)?
        .iter()
        .map(|e| e.as_f64().ok_or_else(bad))
        .collect()
}

fn validate_cmd(args: &ValidateArgs, seed: u64) -> ccsaa::Result<Outcome> {
    let mut inst = args.instance.load()?;
    if let Some(b) = args.beta {
        RiskSpec::new(inst.epsilon, b, 1)?;
        inst.beta = b;
    }
    let x = match (&args.report, &args.x) {
        (Some(p), _) => read_x(p)?,
        (None, Some(x)) => x.clone(),
        (None, None) => unreachable!("clap requires one of --report and --x"),
    };
    let test_seed = seed + ccsaa::experiment::TEST_SEED_OFFSET;
    let v = validate(&x, &inst, args.test_size, test_seed)?;
    write_json(
        &json!({
            "violations": v.violations,
            "test_set_size": v.test_set_size,
            "rate": v.rate,
            "upper_limit": v.upper_limit,
            "confidence": 1.0 - inst.beta,
            "analytic_rate": inst.model.violation_probability(&x, inst.alpha),
            "seed": test_seed,
        }),
        None,
    )?;
    Ok(Outcome::Done)
}

fn experiment_config(cli: &Cli, grid: &GridArgs, solver: &SolverArgs, methods: Vec<Method>) -> ccsaa::Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        methods,
        sizes: grid.sizes.clone(),
        trials: grid.trials,
        base_seed: cli.seed,
        time_limit: Some(time_limit(cli.time_limit)?.unwrap_or(Duration::from_secs(3600))),
        test_set_size: grid.test_size,
        asm: solver.asm(),
        semicontinuous: solver.semicontinuous,
        mip_gap: solver.gap,
        jobs: cli.jobs,
    })
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> ccsaa::Result<Outcome> {
    let inst = args.grid.instance.load()?;
    if args.solver.semicontinuous && inst.semicontinuous.is_none() {
        return Err(Error::InvalidArgument("instance has no semicontinuous bounds".into()));
    }
    let cfg = experiment_config(cli, &args.grid, &args.solver, args.methods.clone())?;
    cfg.validate()?;
    fs::create_dir_all(&args.grid.out)?;
    let rows = run_experiment(&inst, &cfg)?;
    let aggs = aggregate(&rows);
    write_raw_csv(&rows, &args.grid.out.join("raw.csv"))?;
    write_aggregate_csv(&aggs, &args.grid.out.join("aggregate.csv"))?;
    if args.plot_data {
        write_plot_data(&aggs, &args.grid.out.join("plot_data.csv"))?;
    }
    for a in &aggs {
        println!(
            "{:<9} N={:<8} k={:<6} obj={:.6} time={:.3}s lp={:.1} viol={:.4} upper={:.4} done={}/{}",
            a.method,
            a.n_scenarios,
            a.k,
            a.mean_objective,
            a.mean_wall_time,
            a.mean_lp_solves,
            a.mean_test_violation_rate,
            a.mean_upper_limit,
            a.completed,
            a.trials
        );
    }
    Ok(if rows.iter().any(|r| r.status == RowStatus::TimeLimit) { Outcome::Partial } else { Outcome::Done })
}

fn sweep(cli: &Cli, args: &SweepArgs) -> ccsaa::Result<Outcome> {
    let inst = args.grid.instance.load()?;
    let solver = SolverArgs { w: 0.5, polish_iterations: None, semicontinuous: args.semicontinuous, gap: DEFAULT_GAP };
    let cfg = experiment_config(cli, &args.grid, &solver, vec![Method::Asm1])?;
    fs::create_dir_all(&args.grid.out)?;
    let rows = sweep_w(&inst, &cfg, &args.ws)?;
    write_sweep_csv(&rows, &args.grid.out.join("sweep_w.csv"))?;
    for r in &rows {
        println!(
            "w={:<5} N={:<8} obj={:.6} time={:.3}s constraints={:.1} lp={:.1}",
            r.w, r.n_scenarios, r.mean_objective, r.mean_wall_time, r.mean_constraints, r.mean_lp_solves
        );
    }
    Ok(if rows.iter().any(|r| r.completed < r.trials) { Outcome::Partial } else { Outcome::Done })
}

fn run(cli: &Cli) -> ccsaa::Result<Outcome> {
    let limit = time_limit(cli.time_limit)?;
    match &cli.command {
        Command::Budget(a) => budget(a),
        Command::Sample(a) => sample(a, cli.seed),
        Command::Ingest(a) => ingest(a),
        Command::Solve(a) => solve(a, cli.seed, limit),
        Command::Validate(a) => validate_cmd(a, cli.seed),
        Command::Experiment(a) => experiment(cli, a),
        Command::SweepW(a) => sweep(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("ccsaa: stopped at the time limit; results are partial");
            ExitCode::from(EXIT_TIME_LIMIT)
        }
        Err(e) => {
            eprintln!("ccsaa: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
