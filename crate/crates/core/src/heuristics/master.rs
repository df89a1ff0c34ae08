//! The restricted master problem shared by all heuristics: the simplex
//! budget row, optional semi-continuous structure, and whichever scenario
//! rows are currently enforced.

use std::collections::HashMap;
use std::time::Instant;

use super::Problem;
use crate::error::{Error, Result};
use crate::lp::{dot, lp_solve, Basis, LpModel, LpStatus, Relation, Row, RowId, VarStatus};
use crate::mip::{apply_semicontinuous, mip_solve, MipModel, MipStatus};
use crate::saa::{scenario_row, WorkingSet};

/// Slack below which a scenario row counts as binding.
const BINDING_LP: f64 = 1e-7;
const BINDING_MIP: f64 = 1e-1;

/// Snapshot of one master solve.
#[derive(Clone, Debug)]
pub(crate) struct Solved {
    /// Weights of the asset columns only.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Binding working-set scenarios, ascending.
    pub binding: Vec<usize>,
    /// `(scenario, |dual|)` for working-set rows; empty for MIP masters.
    pub rates: Vec<(usize, f64)>,
    pub basis: Option<Basis>,
}

/// A scenario row taken out of the master, restorable under its old id.
pub(crate) struct Removed {
    scenario: usize,
    id: RowId,
    row: Row,
}

enum Engine {
    Lp(LpModel),
    Mip(MipModel),
}

pub(crate) struct Master<'p> {
    problem: Problem<'p>,
    engine: Engine,
    working: WorkingSet,
    budget_row: RowId,
    basis: Option<Basis>,
    deadline: Option<Instant>,
    pub solves: u64,
    pub nodes: u64,
}

impl<'p> Master<'p> {
    pub fn new(problem: Problem<'p>, deadline: Option<Instant>) -> Result<Self> {
        let spec = problem.spec;
        let n = spec.n_assets();
        let mut lp = LpModel::new(spec.objective.clone())?;
        let budget_row = lp.add_row(Row::new(vec![1.0; n], Relation::Eq, 1.0))?;
        let engine = match problem.semi {
            None => Engine::Lp(lp),
            Some(semi) => {
                let mut mip = MipModel::new(lp, Vec::new())?;
                apply_semicontinuous(&mut mip, semi)?;
                Engine::Mip(mip)
            }
        };
        Ok(Self { problem, engine, working: WorkingSet::default(), budget_row, basis: None, deadline, solves: 0, nodes: 0 })
    }

    pub fn working(&self) -> &WorkingSet {
        &self.working
    }

    fn model_mut(&mut self) -> &mut LpModel {
        match &mut self.engine {
            Engine::Lp(m) => m,
            Engine::Mip(m) => &mut m.base,
        }
    }

    fn model(&self) -> &LpModel {
        match &self.engine {
            Engine::Lp(m) => m,
            Engine::Mip(m) => &m.base,
        }
    }

    pub fn add(&mut self, scenario: usize) -> Result<()> {
        if self.working.contains(scenario) {
            return Err(Error::Numerical(format!("scenario {scenario} is already enforced but reported violated")));
        }
        let mut row = scenario_row(self.problem.scenarios, self.problem.spec.alpha, scenario);
        let width = self.model().n_cols();
        row.coeffs.resize(width, 0.0);
        let id = self.model_mut().add_row(row)?;
        self.working.insert(scenario, id);
        Ok(())
    }

    pub fn add_all(&mut self) -> Result<()> {
        (0..self.problem.scenarios.n_scenarios()).try_for_each(|s| self.add(s))
    }

    pub fn remove(&mut self, scenario: usize) -> Result<Removed> {
        let id = self
            .working
            .remove(scenario)
            .ok_or_else(|| Error::invalid(format!("scenario {scenario} is not in the working set")))?;
        let row = self.model_mut().remove_row(id)?;
        Ok(Removed { scenario, id, row })
    }

    pub fn restore(&mut self, removed: Removed) -> Result<()> {
        self.model_mut().reinsert_row(removed.id, removed.row)?;
        self.working.insert(removed.scenario, removed.id);
        Ok(())
    }

    /// Make `solved` the current state without re-solving, after the model
    /// has been put back to the rows it was solved with.
    pub fn reset_to(&mut self, solved: &Solved) {
        self.basis = solved.basis.clone();
    }

    /// Solve from the current basis and adopt the result.
    pub fn solve(&mut self) -> Result<Solved> {
        let basis = self.basis.take();
        let solved = self.solve_from(basis.as_ref());
        match &solved {
            Ok(s) => self.basis = s.basis.clone(),
            Err(_) => self.basis = basis,
        }
        solved
    }

    /// Solve with `scenario` temporarily removed, leaving the master as it
    /// was.
    pub fn trial_without(&mut self, scenario: usize) -> Result<Option<Solved>> {
        let removed = self.remove(scenario)?;
        let basis = self.basis.clone();
        let solved = self.solve_from(basis.as_ref());
        self.restore(removed)?;
        match solved {
            Ok(s) => Ok(Some(s)),
            Err(Error::Infeasible) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Permanently drop `scenario`, adopting a trial solved without it.
    pub fn commit_without(&mut self, scenario: usize, trial: &Solved) -> Result<()> {
        self.remove(scenario)?;
        self.reset_to(trial);
        Ok(())
    }

    /// All weight on the best asset, with the budget row tight. Every
    /// reduced cost is then nonpositive, so the dual simplex can start
    /// straight away instead of a long phase one over many violated rows.
    fn crash_basis(&self) -> Basis {
        let model = self.model();
        let c = model.objective();
        let n = self.problem.spec.n_assets();
        let best = (0..n).fold(0, |b, j| if c[j] > c[b] { j } else { b });
        let mut cols = vec![VarStatus::AtLower; model.n_cols()];
        cols[best] = VarStatus::Basic;
        let mut point = vec![0.0; model.n_cols()];
        point[best] = 1.0;
        let mut rows = HashMap::new();
        rows.insert(self.budget_row, VarStatus::AtLower);
        Basis { cols, rows, point }
    }

    fn check_deadline(&self) -> Result<()> {
        if self.deadline.is_some_and(|d| Instant::now() > d) {
            return Err(Error::TimeLimit);
        }
        Ok(())
    }

    fn solve_from(&mut self, basis: Option<&Basis>) -> Result<Solved> {
        self.check_deadline()?;
        self.solves += 1;
        let n = self.problem.spec.n_assets();
        match &mut self.engine {
            Engine::Lp(_) if basis.is_none() => {
                let crash = self.crash_basis();
                self.solves -= 1;
                self.solve_from(Some(&crash))
            }
            Engine::Lp(model) => {
                let sol = lp_solve(model, basis)?;
                match sol.status {
                    LpStatus::Infeasible => return Err(Error::Infeasible),
                    LpStatus::Unbounded => return Err(Error::Unbounded),
                    LpStatus::Optimal => {}
                }
                let mut binding = Vec::new();
                let mut rates = Vec::new();
                for p in 0..model.n_rows() {
                    if let Some(s) = model.label_at(p) {
                        if sol.slacks[p] <= BINDING_LP {
                            binding.push(s);
                        }
                        rates.push((s, sol.duals[p].abs()));
                    }
                }
                binding.sort_unstable();
                rates.sort_unstable_by_key(|&(s, _)| s);
                Ok(Solved { x: sol.x, objective: sol.objective_value, binding, rates, basis: Some(sol.basis) })
            }
            Engine::Mip(mip) => {
                mip.time_limit = self.deadline.map(|d| d.saturating_duration_since(Instant::now()));
                let sol = mip_solve(mip, None)?;
                self.nodes += sol.nodes;
                match sol.status {
                    MipStatus::Infeasible => return Err(Error::Infeasible),
                    MipStatus::Unbounded => return Err(Error::Unbounded),
                    MipStatus::TimeLimit => return Err(Error::TimeLimit),
                    MipStatus::Optimal => {}
                }
                let x = sol.x[..n].to_vec();
                let alpha = self.problem.spec.alpha;
                let mut binding: Vec<usize> = self
                    .working
                    .indices()
                    .iter()
                    .copied()
                    .filter(|&s| dot(self.problem.scenarios.row(s), &x) - alpha <= BINDING_MIP)
                    .collect();
                binding.sort_unstable();
                Ok(Solved { x, objective: sol.objective_value, binding, rates: Vec::new(), basis: None })
            }
        }
    }
}
