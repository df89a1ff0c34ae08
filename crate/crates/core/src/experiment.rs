//! The trial protocol: for each sample size and trial, draw one training
//! set shared by every method, run the methods, and validate each solution
//! on a fresh test set from the same model.
//!
//! Seeds: training scenarios use `base_seed + 1000 * trial` and the test set
//! `base_seed + 1000 * trial + 500_000`, so the two streams never overlap.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::certificate::{binomial_upper_limit, max_removals, ScenarioBudget, SumLimit};
use crate::data::Instance;
use crate::error::{Error, Result};
use crate::gaussian::{sample_scenarios, solve_gaussian_exact};
use crate::heuristics::{
    active_set, dual_greedy_removal, greedy_removal, polish_dual, polish_resolve, pool_and_discard, random_removal,
    solve_exact_mip, solve_full, AsmConfig, Method, Problem, RunStatus, SolveReport,
};
use crate::mip::DEFAULT_GAP;
use crate::saa::{evaluate_outcomes, ScenarioSet};

pub const TEST_SEED_OFFSET: u64 = 500_000;
pub const TRIAL_SEED_STRIDE: u64 = 1000;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub time_limit: Option<Duration>,
    pub test_set_size: usize,
    pub asm: AsmConfig,
    /// Solve the semi-continuous variant; dual-based methods are refused.
    pub semicontinuous: bool,
    pub mip_gap: f64,
    /// Worker threads for independent trials.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Asm1],
            sizes: vec![1000, 10_000],
            trials: 30,
            base_seed: crate::data::DEFAULT_SEED,
            time_limit: Some(Duration::from_secs(3600)),
            test_set_size: 100_000,
            asm: AsmConfig::default(),
            semicontinuous: false,
            mip_gap: DEFAULT_GAP,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if self.test_set_size == 0 {
            return Err(Error::invalid("test set must be non-empty"));
        }
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        if self.semicontinuous {
            if let Some(m) = self.methods.iter().find(|m| m.needs_duals()) {
                return Err(Error::UnsupportedForMip(m.tag()));
            }
        }
        self.asm.validate()
    }

    pub fn train_seed(&self, trial: usize) -> u64 {
        self.base_seed + TRIAL_SEED_STRIDE * trial as u64
    }

    pub fn test_seed(&self, trial: usize) -> u64 {
        self.train_seed(trial) + TEST_SEED_OFFSET
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    TimeLimit,
    CapExceeded,
    /// The method is undefined here, e.g. the exact Gaussian model at `k = 0`.
    Skipped,
}

impl RowStatus {
    pub fn tag(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::TimeLimit => "time_limit",
            RowStatus::CapExceeded => "cap_exceeded",
            RowStatus::Skipped => "skipped",
        }
    }
}

impl From<RunStatus> for RowStatus {
    fn from(s: RunStatus) -> Self {
        match s {
            RunStatus::Ok => RowStatus::Ok,
            RunStatus::TimeLimit => RowStatus::TimeLimit,
            RunStatus::CapExceeded => RowStatus::CapExceeded,
        }
    }
}

/// One method on one trial.
#[derive(Clone, Debug)]
pub struct TrialRow {
    pub method: Method,
    pub n_scenarios: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub objective: f64,
    pub wall_time: Duration,
    pub lp_solves: u64,
    pub mip_nodes: u64,
    /// Working-set size at the end of the run.
    pub constraints: usize,
    pub train_violations: usize,
    pub test_violation_rate: f64,
    pub binomial_upper_limit: f64,
    pub status: RowStatus,
    pub x: Vec<f64>,
}

#[derive(Serialize)]
struct RawRecord {
    method: &'static str,
    n_scenarios: usize,
    k: usize,
    trial: usize,
    seed: u64,
    objective: f64,
    wall_time: f64,
    lp_solves: u64,
    mip_nodes: u64,
    constraints: usize,
    train_violations: usize,
    test_violation_rate: f64,
    binomial_upper_limit: f64,
    status: &'static str,
}

impl From<&TrialRow> for RawRecord {
    fn from(r: &TrialRow) -> Self {
        Self {
            method: r.method.tag(),
            n_scenarios: r.n_scenarios,
            k: r.k,
            trial: r.trial,
            seed: r.seed,
            objective: r.objective,
            wall_time: r.wall_time.as_secs_f64(),
            lp_solves: r.lp_solves,
            mip_nodes: r.mip_nodes,
            constraints: r.constraints,
            train_violations: r.train_violations,
            test_violation_rate: r.test_violation_rate,
            binomial_upper_limit: r.binomial_upper_limit,
            status: r.status.tag(),
        }
    }
}

/// Out-of-sample check of one solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    pub violations: u64,
    pub test_set_size: usize,
    pub rate: f64,
    /// Upper confidence limit on the violation probability at `1 - beta`.
    pub upper_limit: f64,
}

pub fn validate_on(x: &[f64], test: &ScenarioSet, instance: &Instance) -> Result<Validation> {
    let outcomes = evaluate_outcomes(x, test, &instance.program())?;
    let violations = outcomes.violation_count as u64;
    let size = test.n_scenarios();
    Ok(Validation {
        violations,
        test_set_size: size,
        rate: violations as f64 / size as f64,
        upper_limit: binomial_upper_limit(violations, size as u64, 1.0 - instance.beta)?,
    })
}

/// Validate `x` on `test_set_size` fresh scenarios drawn with `seed`.
pub fn validate(x: &[f64], instance: &Instance, test_set_size: usize, seed: u64) -> Result<Validation> {
    if x.len() != instance.n_assets() {
        return Err(Error::DimensionMismatch { expected: instance.n_assets(), got: x.len() });
    }
    let test = sample_scenarios(&instance.model, test_set_size, seed)?;
    validate_on(x, &test, instance)
}

pub fn budget_for(instance: &Instance, n_scenarios: usize) -> Result<ScenarioBudget> {
    max_removals(n_scenarios, &instance.risk(), SumLimit::Campi)
}

/// Run one method. ASM-2 and ASM-3 start from `asm1` when given.
pub fn run_method(
    method: Method,
    problem: &Problem,
    instance: &Instance,
    cfg: &ExperimentConfig,
    seed: u64,
    asm1: Option<&SolveReport>,
) -> Result<Option<SolveReport>> {
    let first = |p: &Problem| -> Result<SolveReport> {
        match asm1 {
            Some(r) => Ok(r.clone()),
            None => active_set(p, &cfg.asm),
        }
    };
    let report = match method {
        Method::Full => solve_full(problem)?,
        Method::GrP => greedy_removal(problem)?,
        Method::RaP => random_removal(problem, seed)?,
        Method::FgrP => dual_greedy_removal(problem)?,
        Method::Pnd => pool_and_discard(problem, false, &cfg.asm)?,
        Method::Fpnd => pool_and_discard(problem, true, &cfg.asm)?,
        Method::Asm1 => first(problem)?,
        Method::Asm2 => polish_resolve(problem, &first(problem)?, &cfg.asm)?,
        Method::Asm3 => polish_dual(problem, &first(problem)?, &cfg.asm)?,
        Method::ExactMip => solve_exact_mip(problem, cfg.mip_gap)?,
        Method::Socp => {
            if problem.k() == 0 {
                return Ok(None);
            }
            let semi = if cfg.semicontinuous { instance.semicontinuous_spec() } else { None };
            let mut r = solve_gaussian_exact(&instance.model, problem.spec, problem.budget.ratio(), semi.as_ref())?;
            r.train_violations = evaluate_outcomes(&r.x, problem.scenarios, problem.spec)?.violation_count;
            r
        }
    };
    Ok(Some(report))
}

fn trial_rows(instance: &Instance, cfg: &ExperimentConfig, n_scenarios: usize, trial: usize) -> Result<Vec<TrialRow>> {
    let budget = budget_for(instance, n_scenarios)?;
    let seed = cfg.train_seed(trial);
    let train = sample_scenarios(&instance.model, n_scenarios, seed)?;
    let test = sample_scenarios(&instance.model, cfg.test_set_size, cfg.test_seed(trial))?;
    let spec = instance.program();
    let semi = if cfg.semicontinuous { instance.semicontinuous_spec() } else { None };
    let mut problem = Problem::new(&train, &spec, budget)?;
    if let Some(s) = &semi {
        problem = problem.with_semicontinuous(s);
    }
    if let Some(t) = cfg.time_limit {
        problem = problem.with_time_limit(t);
    }

    let shared_asm1 = if cfg.methods.iter().any(|m| matches!(m, Method::Asm2 | Method::Asm3)) {
        match active_set(&problem, &cfg.asm) {
            Ok(r) => Some(r),
            Err(Error::TimeLimit) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let blank = |status| TrialRow {
            method,
            n_scenarios,
            k: budget.k_removals,
            trial,
            seed,
            objective: f64::NAN,
            wall_time: cfg.time_limit.unwrap_or_default(),
            lp_solves: 0,
            mip_nodes: 0,
            constraints: 0,
            train_violations: 0,
            test_violation_rate: f64::NAN,
            binomial_upper_limit: f64::NAN,
            status,
            x: Vec::new(),
        };
        let polish_without_start = matches!(method, Method::Asm2 | Method::Asm3) && shared_asm1.is_none();
        let outcome = if polish_without_start {
            Err(Error::TimeLimit)
        } else {
            run_method(method, &problem, instance, cfg, seed, shared_asm1.as_ref())
        };
        let row = match outcome {
            Ok(Some(r)) => {
                let v = validate_on(&r.x, &test, instance)?;
                TrialRow {
                    method,
                    n_scenarios,
                    k: budget.k_removals,
                    trial,
                    seed,
                    objective: r.objective,
                    wall_time: r.wall_time,
                    lp_solves: r.lp_solves,
                    mip_nodes: r.mip_nodes,
                    constraints: r.working_set.len(),
                    train_violations: r.train_violations,
                    test_violation_rate: v.rate,
                    binomial_upper_limit: v.upper_limit,
                    status: r.status.into(),
                    x: r.x,
                }
            }
            Ok(None) => blank(RowStatus::Skipped),
            Err(Error::TimeLimit) => blank(RowStatus::TimeLimit),
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))
}

/// Every `(method, N, trial)` row, sorted in that order.
pub fn run_experiment(instance: &Instance, cfg: &ExperimentConfig) -> Result<Vec<TrialRow>> {
    cfg.validate()?;
    let units: Vec<(usize, usize)> =
        cfg.sizes.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let results: Vec<Result<Vec<TrialRow>>> =
        pool(cfg.jobs)?.install(|| units.par_iter().map(|&(n, t)| trial_rows(instance, cfg, n, t)).collect());
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| (r.method, r.n_scenarios, r.trial));
    Ok(rows)
}

/// Column order of the aggregate CSV.
pub const AGGREGATE_COLUMNS: [&str; 16] = [
    "method",
    "n_scenarios",
    "k",
    "trials",
    "completed",
    "time_limited",
    "mean_objective",
    "sd_objective",
    "mean_wall_time",
    "mean_lp_solves",
    "mean_mip_nodes",
    "mean_constraints",
    "mean_train_violations",
    "mean_test_violation_rate",
    "mean_upper_limit",
    "max_upper_limit",
];

/// Means over the completed (`ok`) trials of one method at one size.
#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub method: &'static str,
    pub n_scenarios: usize,
    pub k: usize,
    pub trials: usize,
    pub completed: usize,
    pub time_limited: usize,
    pub mean_objective: f64,
    pub sd_objective: f64,
    pub mean_wall_time: f64,
    pub mean_lp_solves: f64,
    pub mean_mip_nodes: f64,
    pub mean_constraints: f64,
    pub mean_train_violations: f64,
    pub mean_test_violation_rate: f64,
    pub mean_upper_limit: f64,
    pub max_upper_limit: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Method, usize), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method, r.n_scenarios)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, n), group)| {
            let ok: Vec<&TrialRow> = group.iter().copied().filter(|r| r.status == RowStatus::Ok).collect();
            let col = |f: fn(&TrialRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let objective = col(|r| r.objective);
            let upper = col(|r| r.binomial_upper_limit);
            Aggregate {
                method: method.tag(),
                n_scenarios: n,
                k: group[0].k,
                trials: group.len(),
                completed: ok.len(),
                time_limited: group.iter().filter(|r| r.status == RowStatus::TimeLimit).count(),
                mean_objective: mean(&objective),
                sd_objective: sd(&objective),
                mean_wall_time: mean(&col(|r| r.wall_time.as_secs_f64())),
                mean_lp_solves: mean(&col(|r| r.lp_solves as f64)),
                mean_mip_nodes: mean(&col(|r| r.mip_nodes as f64)),
                mean_constraints: mean(&col(|r| r.constraints as f64)),
                mean_train_violations: mean(&col(|r| r.train_violations as f64)),
                mean_test_violation_rate: mean(&col(|r| r.test_violation_rate)),
                mean_upper_limit: mean(&upper),
                max_upper_limit: upper.iter().copied().fold(f64::NAN, f64::max),
            }
        })
        .collect()
}

pub fn write_raw_csv(rows: &[TrialRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(RawRecord::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(aggs: &[Aggregate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if aggs.is_empty() {
        w.write_record(AGGREGATE_COLUMNS)?;
    }
    for a in aggs {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one `(method, n_scenarios, metric, value)` line per
/// aggregate statistic.
pub fn write_plot_data(aggs: &[Aggregate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "n_scenarios", "metric", "value"])?;
    for a in aggs {
        let metrics = [
            ("objective", a.mean_objective),
            ("wall_time", a.mean_wall_time),
            ("lp_solves", a.mean_lp_solves),
            ("mip_nodes", a.mean_mip_nodes),
            ("constraints", a.mean_constraints),
            ("test_violation_rate", a.mean_test_violation_rate),
            ("upper_limit", a.mean_upper_limit),
            ("k_over_n", a.k as f64 / a.n_scenarios as f64),
        ];
        for (name, value) in metrics {
            w.write_record([a.method, &a.n_scenarios.to_string(), name, &value.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// ASM-1 statistics for one insertion weight at one sample size.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub w: f64,
    pub n_scenarios: usize,
    pub k: usize,
    pub trials: usize,
    pub completed: usize,
    pub mean_objective: f64,
    pub mean_wall_time: f64,
    pub mean_constraints: f64,
    pub mean_lp_solves: f64,
}

/// Run ASM-1 for each `w` over the trial grid of `cfg` (its method list is
/// ignored).
pub fn sweep_w(instance: &Instance, cfg: &ExperimentConfig, ws: &[f64]) -> Result<Vec<SweepRow>> {
    if ws.is_empty() {
        return Err(Error::invalid("no w values given"));
    }
    let mut out = Vec::new();
    for &w in ws {
        let mut c = cfg.clone();
        c.methods = vec![Method::Asm1];
        c.asm.w = w;
        for a in aggregate(&run_experiment(instance, &c)?) {
            out.push(SweepRow {
                w,
                n_scenarios: a.n_scenarios,
                k: a.k,
                trials: a.trials,
                completed: a.completed,
                mean_objective: a.mean_objective,
                mean_wall_time: a.mean_wall_time,
                mean_constraints: a.mean_constraints,
                mean_lp_solves: a.mean_lp_solves,
            });
        }
    }
    Ok(out)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_instance;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig { sizes: vec![500], trials: 2, test_set_size: 2000, ..Default::default() }
    }

    #[test]
    fn seeds_are_disjoint_per_trial() {
        let cfg = small_cfg();
        assert_eq!(cfg.train_seed(3) - cfg.train_seed(2), 1000);
        assert_eq!(cfg.test_seed(0), cfg.base_seed + 500_000);
    }

    #[test]
    fn config_checks() {
        assert!(small_cfg().validate().is_ok());
        assert!(ExperimentConfig { trials: 0, ..small_cfg() }.validate().is_err());
        assert!(ExperimentConfig { methods: vec![], ..small_cfg() }.validate().is_err());
        assert!(ExperimentConfig { sizes: vec![0], ..small_cfg() }.validate().is_err());
        let semi = ExperimentConfig { semicontinuous: true, methods: vec![Method::FgrP], ..small_cfg() };
        assert!(matches!(semi.validate(), Err(Error::UnsupportedForMip("fgrp"))));
    }

    #[test]
    fn full_method_single_row() {
        let inst = synthetic_instance(5, 1).unwrap();
        let cfg = ExperimentConfig { methods: vec![Method::Full], trials: 1, ..small_cfg() };
        let rows = run_experiment(&inst, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].train_violations, 0);
        assert_eq!(rows[0].status, RowStatus::Ok);
    }

    #[test]
    fn socp_is_skipped_without_removals() {
        let inst = synthetic_instance(5, 1).unwrap();
        let cfg = ExperimentConfig { methods: vec![Method::Socp], sizes: vec![422], trials: 1, ..small_cfg() };
        let rows = run_experiment(&inst, &cfg).unwrap();
        assert_eq!(rows[0].k, 0);
        assert_eq!(rows[0].status, RowStatus::Skipped);
        let agg = aggregate(&rows);
        assert_eq!(agg[0].completed, 0);
        assert!(agg[0].mean_objective.is_nan());
    }

    #[test]
    fn all_cash_never_fails() {
        let inst = synthetic_instance(4, 2).unwrap();
        let mut x = vec![0.0; 5];
        x[inst.cash_index.unwrap()] = 1.0;
        let v = validate(&x, &inst, 5000, 9).unwrap();
        assert_eq!(v.violations, 0);
        assert_eq!(v.rate, 0.0);
        assert!(v.upper_limit > 0.0 && v.upper_limit < 0.01);
        assert!(validate(&x[..4], &inst, 10, 9).is_err());
    }
}
