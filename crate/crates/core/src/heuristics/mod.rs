//! Scenario-discarding heuristics for the SAA program with `k` allowed
//! violations.
//!
//! | method  | idea                                                        |
//! |---------|-------------------------------------------------------------|
//! | full    | all `N` scenario rows                                       |
//! | GR-P    | drop the binding row whose removal helps most, `k` times    |
//! | RA-P    | drop a uniformly random binding row, `k` times              |
//! | FGR-P   | drop the binding row with the largest dual, `k` times       |
//! | PND     | pool violated rows, discard binding pooled rows             |
//! | FPND    | PND with dual-ranked discards                               |
//! | ASM-1   | add one violated scenario per round until certified         |
//! | ASM-2   | ASM-1 then remove/replace each working row                  |
//! | ASM-3   | ASM-1 then remove/replace the largest-dual working row      |
//!
//! With semi-continuous weights the master problem becomes a MIP. Duals do
//! not exist there, so FGR-P, FPND and ASM-3 are refused.

mod active_set;
mod master;
mod pool;
mod removal;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

pub use active_set::{active_set, polish_dual, polish_resolve};
pub use pool::pool_and_discard;
pub use removal::{dual_greedy_removal, greedy_removal, random_removal, solve_exact_mip, solve_full};

use crate::certificate::ScenarioBudget;
use crate::error::{Error, Result};
use crate::mip::SemiContinuousSpec;
use crate::saa::{ChanceProgramSpec, ScenarioSet, WorkingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Full,
    GrP,
    RaP,
    FgrP,
    Pnd,
    Fpnd,
    Asm1,
    Asm2,
    Asm3,
    ExactMip,
    Socp,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Full,
        Method::GrP,
        Method::RaP,
        Method::FgrP,
        Method::Pnd,
        Method::Fpnd,
        Method::Asm1,
        Method::Asm2,
        Method::Asm3,
        Method::ExactMip,
        Method::Socp,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::GrP => "grp",
            Method::RaP => "rap",
            Method::FgrP => "fgrp",
            Method::Pnd => "pnd",
            Method::Fpnd => "fpnd",
            Method::Asm1 => "asm1",
            Method::Asm2 => "asm2",
            Method::Asm3 => "asm3",
            Method::ExactMip => "exact-mip",
            Method::Socp => "socp",
        }
    }

    pub fn needs_duals(self) -> bool {
        matches!(self, Method::FgrP | Method::Fpnd | Method::Asm3)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsmConfig {
    /// Position of the added scenario between the `(k+1)`-th most violated
    /// (`w = 1`) and the least violated (`w = 0`).
    pub w: f64,
    /// Polish passes; `None` means one per asset.
    pub polish_iterations: Option<usize>,
    pub max_rounds: usize,
}

impl Default for AsmConfig {
    fn default() -> Self {
        Self { w: 0.5, polish_iterations: None, max_rounds: 100_000 }
    }
}

impl AsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::invalid(format!("w = {} outside [0, 1]", self.w)));
        }
        if self.polish_iterations == Some(0) {
            return Err(Error::invalid("polish iterations must be at least 1"));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn iterations(&self, n_assets: usize) -> usize {
        self.polish_iterations.unwrap_or(n_assets)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    /// Stopped at a time limit; the report holds the best certified point
    /// found so far when one exists.
    TimeLimit,
    /// A round cap was hit before certification.
    CapExceeded,
}

impl RunStatus {
    pub fn tag(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::TimeLimit => "time_limit",
            RunStatus::CapExceeded => "cap_exceeded",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub method: Method,
    pub status: RunStatus,
    /// Portfolio weights, one per asset.
    pub x: Vec<f64>,
    pub objective: f64,
    pub working_set: WorkingSet,
    pub lp_solves: u64,
    pub mip_nodes: u64,
    pub wall_time: Duration,
    pub train_violations: usize,
    pub seed: Option<u64>,
}

/// Everything a heuristic needs about the scenario program.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub scenarios: &'a ScenarioSet,
    pub spec: &'a ChanceProgramSpec,
    pub budget: ScenarioBudget,
    /// Turns the master into the semi-continuous MIP.
    pub semi: Option<&'a SemiContinuousSpec>,
    pub time_limit: Option<Duration>,
}

impl<'a> Problem<'a> {
    pub fn new(scenarios: &'a ScenarioSet, spec: &'a ChanceProgramSpec, budget: ScenarioBudget) -> Result<Self> {
        spec.check_scenarios(scenarios)?;
        if budget.n_scenarios != scenarios.n_scenarios() {
            return Err(Error::invalid(format!(
                "budget is for N = {}, scenario set has {}",
                budget.n_scenarios,
                scenarios.n_scenarios()
            )));
        }
        Ok(Self { scenarios, spec, budget, semi: None, time_limit: None })
    }

    pub fn with_semicontinuous(mut self, semi: &'a SemiContinuousSpec) -> Self {
        self.semi = Some(semi);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = Some(limit);
        self
    }

    pub fn k(&self) -> usize {
        self.budget.k_removals
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.map(|t| start + t)
    }

    pub(crate) fn refuse_without_duals(&self, method: Method) -> Result<()> {
        if self.semi.is_some() && method.needs_duals() {
            return Err(Error::UnsupportedForMip(method.tag()));
        }
        Ok(())
    }
}

/// Lowest index among the entries with the largest score.
pub(crate) fn argmax_lowest(items: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in items {
        best = match best {
            Some((bi, bv)) if bv > v || (bv == v && bi < i) => Some((bi, bv)),
            _ => Some((i, v)),
        };
    }
    best
}
