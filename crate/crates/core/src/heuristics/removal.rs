//! Methods that start from all `N` scenario rows and remove `k` of them.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::master::{Master, Solved};
use super::{argmax_lowest, Method, Problem, RunStatus, SolveReport};
use crate::error::{Error, Result};
use crate::mip::{apply_semicontinuous, build_saa_bigm, mip_solve, MipStatus};
use crate::saa::{evaluate_outcomes, WorkingSet};

pub(crate) fn report(
    problem: &Problem,
    method: Method,
    master: &Master,
    solved: &Solved,
    start: Instant,
    seed: Option<u64>,
    status: RunStatus,
) -> Result<SolveReport> {
    let outcomes = evaluate_outcomes(&solved.x, problem.scenarios, problem.spec)?;
    Ok(SolveReport {
        method,
        status,
        x: solved.x.clone(),
        objective: solved.objective,
        working_set: master.working().clone(),
        lp_solves: master.solves,
        mip_nodes: master.nodes,
        wall_time: start.elapsed(),
        train_violations: outcomes.violation_count,
        seed,
    })
}

/// The scenario program with every row enforced.
pub fn solve_full(problem: &Problem) -> Result<SolveReport> {
    let start = Instant::now();
    let mut master = Master::new(*problem, problem.deadline(start))?;
    master.add_all()?;
    let solved = master.solve()?;
    report(problem, Method::Full, &master, &solved, start, None, RunStatus::Ok)
}

enum Pick {
    Best,
    Random(ChaCha8Rng),
    Dual,
}

fn removal(problem: &Problem, method: Method, mut pick: Pick, seed: Option<u64>) -> Result<SolveReport> {
    problem.refuse_without_duals(method)?;
    let start = Instant::now();
    let mut master = Master::new(*problem, problem.deadline(start))?;
    master.add_all()?;
    let mut current = master.solve()?;
    for _ in 0..problem.k() {
        if current.binding.is_empty() {
            break;
        }
        match &mut pick {
            Pick::Best => {
                let mut best: Option<(usize, Solved)> = None;
                for &s in &current.binding.clone() {
                    if let Some(trial) = master.trial_without(s)? {
                        if best.as_ref().is_none_or(|(_, b)| trial.objective > b.objective) {
                            best = Some((s, trial));
                        }
                    }
                }
                let Some((s, trial)) = best else { break };
                master.commit_without(s, &trial)?;
                current = trial;
            }
            Pick::Random(rng) => {
                let s = current.binding[rng.random_range(0..current.binding.len())];
                master.remove(s)?;
                current = master.solve()?;
            }
            Pick::Dual => {
                let binding = &current.binding;
                let scored = current.rates.iter().copied().filter(|(s, _)| binding.binary_search(s).is_ok());
                let s = match argmax_lowest(scored) {
                    Some((s, rate)) if rate > 0.0 => s,
                    _ => binding[0],
                };
                master.remove(s)?;
                current = master.solve()?;
            }
        }
    }
    report(problem, method, &master, &current, start, seed, RunStatus::Ok)
}

/// GR-P: each round tries every binding row and drops the one whose
/// removal gives the best objective.
pub fn greedy_removal(problem: &Problem) -> Result<SolveReport> {
    removal(problem, Method::GrP, Pick::Best, None)
}

/// RA-P: each round drops a uniformly chosen binding row.
pub fn random_removal(problem: &Problem, seed: u64) -> Result<SolveReport> {
    removal(problem, Method::RaP, Pick::Random(ChaCha8Rng::seed_from_u64(seed)), Some(seed))
}

/// FGR-P: each round drops the binding row with the largest dual
/// magnitude, so exactly `k + 1` solves are needed.
pub fn dual_greedy_removal(problem: &Problem) -> Result<SolveReport> {
    removal(problem, Method::FgrP, Pick::Dual, None)
}

/// The big-M MIP with at most `k` violated scenarios, solved to the given
/// relative gap.
pub fn solve_exact_mip(problem: &Problem, gap: f64) -> Result<SolveReport> {
    let start = Instant::now();
    let spec = problem.spec;
    let mut mip = build_saa_bigm(problem.scenarios, spec.alpha, problem.k(), &spec.objective)?.with_gap(gap)?;
    mip.time_limit = problem.time_limit;
    if let Some(semi) = problem.semi {
        apply_semicontinuous(&mut mip, semi)?;
    }
    let sol = mip_solve(&mip, None)?;
    let status = match sol.status {
        MipStatus::Optimal => RunStatus::Ok,
        MipStatus::TimeLimit => RunStatus::TimeLimit,
        MipStatus::Infeasible => return Err(Error::Infeasible),
        MipStatus::Unbounded => return Err(Error::Unbounded),
    };
    let n = spec.n_assets();
    let x = sol.x[..n].to_vec();
    let outcomes = evaluate_outcomes(&x, problem.scenarios, spec)?;
    Ok(SolveReport {
        method: Method::ExactMip,
        status,
        x,
        objective: sol.objective_value,
        working_set: WorkingSet::default(),
        lp_solves: sol.lp_solves,
        mip_nodes: sol.nodes,
        wall_time: start.elapsed(),
        train_violations: outcomes.violation_count,
        seed: None,
    })
}
