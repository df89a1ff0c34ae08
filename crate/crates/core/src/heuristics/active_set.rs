//! The active set method (ASM-1) and its two polishing passes.

use std::collections::BTreeSet;
use std::time::Instant;

use super::master::{Master, Solved};
use super::removal::report;
use super::{argmax_lowest, AsmConfig, Method, Problem, RunStatus, SolveReport};
use crate::error::{Error, Result};
use crate::saa::{evaluate_outcomes, WorkingSet, VIOLATION_TOL};

/// A polish step must beat the incumbent by this much to be accepted.
const IMPROVE_TOL: f64 = 1e-9;

/// 1-based rank of the scenario added when `violated > k` outcomes are
/// positive.
pub(crate) fn insertion_rank(w: f64, k: usize, violated: usize) -> usize {
    let j = (w * (k + 1) as f64 + (1.0 - w) * violated as f64).floor() as usize;
    j.clamp(k + 1, violated)
}

/// ASM-1: start from the relaxed problem and add one violated scenario per
/// round until at most `k` scenarios are violated.
pub fn active_set(problem: &Problem, cfg: &AsmConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let k = problem.k();
    let mut master = Master::new(*problem, problem.deadline(start))?;
    let mut current = master.solve()?;
    for _ in 0..cfg.max_rounds {
        let outcomes = evaluate_outcomes(&current.x, problem.scenarios, problem.spec)?;
        let violated = outcomes.violation_count;
        if violated <= k {
            return report(problem, Method::Asm1, &master, &current, start, None, RunStatus::Ok);
        }
        let rank = insertion_rank(cfg.w, k, violated);
        let p = outcomes.at_rank(rank).expect("rank within the violated prefix");
        master.add(p)?;
        current = master.solve()?;
    }
    report(problem, Method::Asm1, &master, &current, start, None, RunStatus::CapExceeded)
}

struct Polish<'p> {
    problem: Problem<'p>,
    master: Master<'p>,
    incumbent: Solved,
    incumbent_set: WorkingSet,
    /// 1-based rank of the outcome that decides whether to replace.
    test_rank: usize,
    moved: bool,
}

impl<'p> Polish<'p> {
    fn new(problem: &Problem<'p>, input: &SolveReport) -> Result<Self> {
        if input.train_violations > problem.k() {
            return Err(Error::invalid(format!(
                "polish needs a certified start; it violates {} > {} scenarios",
                input.train_violations,
                problem.k()
            )));
        }
        let remaining = problem.time_limit.map(|t| t.saturating_sub(input.wall_time));
        let mut master = Master::new(*problem, remaining.map(|t| Instant::now() + t))?;
        for &s in input.working_set.indices() {
            master.add(s)?;
        }
        let incumbent = master.solve()?;
        let incumbent_set = master.working().clone();
        Ok(Self { problem: *problem, master, incumbent, incumbent_set, test_rank: problem.k().max(1), moved: false })
    }

    /// Remove `s`, re-solve, replace it by the scenario at the test rank if
    /// that outcome is positive, and keep the result only when it is
    /// certified and strictly better. Returns whether the incumbent moved.
    fn try_swap(&mut self, s: usize) -> Result<bool> {
        Ok(self.swap(s, true)?.is_some())
    }

    /// Objective of the swap at `s` if it would be accepted; the master is
    /// left at the incumbent.
    fn probe_swap(&mut self, s: usize) -> Result<Option<f64>> {
        self.swap(s, false)
    }

    fn swap(&mut self, s: usize, commit: bool) -> Result<Option<f64>> {
        let problem = self.problem;
        let removed = self.master.remove(s)?;
        let mut added = None;
        let accepted = (|| -> Result<Option<Solved>> {
            let mut solved = match self.master.solve() {
                Ok(sol) => sol,
                Err(Error::Infeasible) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut outcomes = evaluate_outcomes(&solved.x, problem.scenarios, problem.spec)?;
            let j = outcomes.at_rank(self.test_rank).expect("k < N");
            if outcomes.values[j] > VIOLATION_TOL {
                if j == s {
                    return Ok(None);
                }
                self.master.add(j)?;
                added = Some(j);
                solved = match self.master.solve() {
                    Ok(sol) => sol,
                    Err(Error::Infeasible) => return Ok(None),
                    Err(e) => return Err(e),
                };
                outcomes = evaluate_outcomes(&solved.x, problem.scenarios, problem.spec)?;
            }
            let better = solved.objective > self.incumbent.objective + IMPROVE_TOL;
            Ok((outcomes.violation_count <= problem.k() && better).then_some(solved))
        })();
        match accepted? {
            Some(solved) if commit => {
                let objective = solved.objective;
                self.incumbent = solved;
                self.incumbent_set = self.master.working().clone();
                self.moved = true;
                Ok(Some(objective))
            }
            outcome => {
                if let Some(j) = added {
                    self.master.remove(j)?;
                }
                self.master.restore(removed)?;
                self.master.reset_to(&self.incumbent);
                Ok(outcome.map(|sol| sol.objective))
            }
        }
    }

    fn finish(self, method: Method, input: &SolveReport, started: Instant, status: RunStatus) -> Result<SolveReport> {
        let lp_solves = input.lp_solves + self.master.solves;
        let mip_nodes = input.mip_nodes + self.master.nodes;
        let wall_time = input.wall_time + started.elapsed();
        if !self.moved {
            // The rebuilt master can differ from the input in the last bits.
            return Ok(SolveReport { method, status, lp_solves, mip_nodes, wall_time, ..input.clone() });
        }
        let outcomes = evaluate_outcomes(&self.incumbent.x, self.problem.scenarios, self.problem.spec)?;
        Ok(SolveReport {
            method,
            status,
            x: self.incumbent.x,
            objective: self.incumbent.objective,
            working_set: self.incumbent_set,
            lp_solves,
            mip_nodes,
            wall_time,
            train_violations: outcomes.violation_count,
            seed: input.seed,
        })
    }
}

fn run_polish(
    problem: &Problem,
    input: &SolveReport,
    method: Method,
    body: impl FnOnce(&mut Polish) -> Result<()>,
) -> Result<SolveReport> {
    let started = Instant::now();
    if input.working_set.is_empty() {
        let mut out = input.clone();
        out.method = method;
        return Ok(out);
    }
    let mut polish = Polish::new(problem, input)?;
    let status = match body(&mut polish) {
        Ok(()) => RunStatus::Ok,
        Err(Error::TimeLimit) => RunStatus::TimeLimit,
        Err(e) => return Err(e),
    };
    polish.finish(method, input, started, status)
}

/// ASM-2: each pass tries the swap at every working-set scenario and
/// applies the one with the best objective.
pub fn polish_resolve(problem: &Problem, input: &SolveReport, cfg: &AsmConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let passes = cfg.iterations(problem.spec.n_assets());
    run_polish(problem, input, Method::Asm2, |polish| {
        for _ in 0..passes {
            let mut best: Option<(usize, f64)> = None;
            for s in polish.master.working().indices().to_vec() {
                if let Some(v) = polish.probe_swap(s)? {
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((s, v));
                    }
                }
            }
            let Some((s, _)) = best else { break };
            if !polish.try_swap(s)? {
                break;
            }
        }
        Ok(())
    })
}

/// ASM-3: in each iteration try removing only the working-set scenario
/// with the largest dual magnitude. A rejected scenario is skipped until
/// the incumbent next changes.
pub fn polish_dual(problem: &Problem, input: &SolveReport, cfg: &AsmConfig) -> Result<SolveReport> {
    problem.refuse_without_duals(Method::Asm3)?;
    cfg.validate()?;
    let iterations = cfg.iterations(problem.spec.n_assets());
    run_polish(problem, input, Method::Asm3, |polish| {
        let mut rejected = BTreeSet::new();
        for _ in 0..iterations {
            let candidates = polish
                .incumbent
                .rates
                .iter()
                .copied()
                .filter(|&(s, rate)| rate > 0.0 && !rejected.contains(&s));
            let Some((s, _)) = argmax_lowest(candidates) else { break };
            if polish.try_swap(s)? {
                rejected.clear();
            } else {
                rejected.insert(s);
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_formula() {
        assert_eq!(insertion_rank(1.0, 5, 40), 6);
        assert_eq!(insertion_rank(0.0, 5, 40), 40);
        assert_eq!(insertion_rank(0.5, 5, 40), 23);
        assert_eq!(insertion_rank(0.5, 5, 6), 6);
        assert_eq!(insertion_rank(0.3, 0, 1), 1);
    }
}
