//! Pool-and-discard: grow a small pool of violated scenarios, then discard
//! binding pooled rows one at a time.
//!
//! The loop, with pool `P` and discard set `D`:
//!
//! 1. Solve with `P`. If this is the first solve and at most `k`
//!    scenarios are violated, stop.
//! 2. If some scenario outside `D` is violated, pool the most violated one
//!    and go to 1.
//! 3. Otherwise `x` satisfies every scenario outside `D`, so it violates at
//!    most `|D|`. Stop if `|D| = k` or no pooled row binds; else move one
//!    binding pooled row into `D` and go to 1.
//!
//! PND picks the discard whose trial re-solve gives the best objective;
//! FPND picks the largest dual magnitude.

use std::collections::BTreeSet;
use std::time::Instant;

use super::master::{Master, Solved};
use super::removal::report;
use super::{argmax_lowest, AsmConfig, Method, Problem, RunStatus, SolveReport};
use crate::error::Result;
use crate::saa::{evaluate_outcomes, OutcomeVector};

fn most_violated_outside(outcomes: &OutcomeVector, discarded: &BTreeSet<usize>) -> Option<usize> {
    let candidates = outcomes.values.iter().copied().enumerate().filter(|(i, _)| !discarded.contains(i));
    argmax_lowest(candidates).filter(|&(_, v)| v > crate::saa::VIOLATION_TOL).map(|(i, _)| i)
}

pub fn pool_and_discard(problem: &Problem, fast: bool, cfg: &AsmConfig) -> Result<SolveReport> {
    let method = if fast { Method::Fpnd } else { Method::Pnd };
    problem.refuse_without_duals(method)?;
    cfg.validate()?;
    let start = Instant::now();
    let mut master = Master::new(*problem, problem.deadline(start))?;
    let mut current = master.solve()?;
    let outcomes = evaluate_outcomes(&current.x, problem.scenarios, problem.spec)?;
    if outcomes.violation_count <= problem.k() {
        return report(problem, method, &master, &current, start, None, RunStatus::Ok);
    }
    let mut discarded = BTreeSet::new();
    let mut outcomes = Some(outcomes);
    for _ in 0..cfg.max_rounds {
        let o = match outcomes.take() {
            Some(o) => o,
            None => evaluate_outcomes(&current.x, problem.scenarios, problem.spec)?,
        };
        if let Some(p) = most_violated_outside(&o, &discarded) {
            master.add(p)?;
            current = master.solve()?;
            continue;
        }
        if discarded.len() >= problem.k() || current.binding.is_empty() {
            return report(problem, method, &master, &current, start, None, RunStatus::Ok);
        }
        let chosen = if fast {
            let binding = &current.binding;
            let scored = current.rates.iter().copied().filter(|(s, _)| binding.binary_search(s).is_ok());
            let s = match argmax_lowest(scored) {
                Some((s, rate)) if rate > 0.0 => s,
                _ => binding[0],
            };
            master.remove(s)?;
            current = master.solve()?;
            s
        } else {
            let mut best: Option<(usize, Solved)> = None;
            for &s in &current.binding.clone() {
                if let Some(trial) = master.trial_without(s)? {
                    if best.as_ref().is_none_or(|(_, b)| trial.objective > b.objective) {
                        best = Some((s, trial));
                    }
                }
            }
            let Some((s, trial)) = best else {
                return report(problem, method, &master, &current, start, None, RunStatus::Ok);
            };
            master.commit_without(s, &trial)?;
            current = trial;
            s
        };
        discarded.insert(chosen);
    }
    report(problem, method, &master, &current, start, None, RunStatus::CapExceeded)
}
