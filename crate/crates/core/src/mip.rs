//! Branch-and-bound over the LP core: the big-M scenario MIP and
//! semi-continuous portfolio weights.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::lp::{dot, lp_solve, Basis, LpModel, LpStatus, Relation, Row};
use crate::saa::ScenarioSet;

pub const DEFAULT_GAP: f64 = 1e-4;
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(3600);
/// Binary values within this distance of 0 or 1 count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct MipModel {
    pub base: LpModel,
    binaries: Vec<usize>,
    semi: HashSet<usize>,
    pub gap_tolerance: f64,
    pub time_limit: Option<Duration>,
}

impl MipModel {
    pub fn new(mut base: LpModel, binaries: Vec<usize>) -> Result<Self> {
        let mut seen = HashSet::new();
        for &b in &binaries {
            if b >= base.n_cols() || !seen.insert(b) {
                return Err(Error::MalformedModel(format!("bad binary column {b}")));
            }
            base.set_bounds(b, 0.0, 1.0)?;
        }
        Ok(Self {
            base,
            binaries,
            semi: HashSet::new(),
            gap_tolerance: DEFAULT_GAP,
            time_limit: Some(DEFAULT_TIME_LIMIT),
        })
    }

    pub fn binaries(&self) -> &[usize] {
        &self.binaries
    }

    pub fn with_gap(mut self, gap: f64) -> Result<Self> {
        if !(gap > 0.0) {
            return Err(Error::invalid("gap tolerance must be positive"));
        }
        self.gap_tolerance = gap;
        Ok(self)
    }

    pub fn add_binary(&mut self, objective: f64) -> Result<usize> {
        let col = self.base.add_column(objective, 0.0, 1.0)?;
        self.binaries.push(col);
        Ok(col)
    }
}

/// `x_i in {0} U [lower, upper]` for each listed column.
#[derive(Clone, Debug, PartialEq)]
pub struct SemiContinuousSpec {
    pub lower: f64,
    pub upper: f64,
    pub columns: Vec<usize>,
}

impl SemiContinuousSpec {
    pub fn new(lower: f64, upper: f64, columns: Vec<usize>) -> Result<Self> {
        if !(0.0 < lower && lower < upper && upper < 1.0) {
            return Err(Error::invalid(format!("need 0 < l < u < 1, got l={lower}, u={upper}")));
        }
        Ok(Self { lower, upper, columns })
    }

    /// Every column except `cash`.
    pub fn for_portfolio(lower: f64, upper: f64, n_assets: usize, cash: Option<usize>) -> Result<Self> {
        Self::new(lower, upper, (0..n_assets).filter(|&j| Some(j) != cash).collect())
    }
}

/// Add an indicator `y_i` per column with `l y_i <= x_i <= u y_i`. Returns
/// the new binary columns.
pub fn apply_semicontinuous(model: &mut MipModel, spec: &SemiContinuousSpec) -> Result<Vec<usize>> {
    let mut fresh = HashSet::new();
    for &c in &spec.columns {
        if c >= model.base.n_cols() {
            return Err(Error::invalid(format!("column {c} does not exist")));
        }
        if model.semi.contains(&c) || model.binaries.contains(&c) || !fresh.insert(c) {
            return Err(Error::OverlappingSemiContinuous(c));
        }
    }
    let mut added = Vec::with_capacity(spec.columns.len());
    for &c in &spec.columns {
        let y = model.add_binary(0.0)?;
        let width = model.base.n_cols();
        let mut lo = vec![0.0; width];
        lo[c] = 1.0;
        lo[y] = -spec.lower;
        model.base.add_row(Row::new(lo, Relation::Ge, 0.0))?;
        let mut hi = vec![0.0; width];
        hi[c] = 1.0;
        hi[y] = -spec.upper;
        model.base.add_row(Row::new(hi, Relation::Le, 0.0))?;
        model.semi.insert(c);
        added.push(y);
    }
    Ok(added)
}

/// Per-scenario constant making `r_s . x + M_s >= alpha` hold on the whole
/// unit simplex.
pub fn big_m(scenario: &[f64], alpha: f64) -> f64 {
    let worst = scenario.iter().copied().fold(f64::INFINITY, f64::min);
    (alpha - worst).max(0.0) + 1e-6
}

/// Columns `x_0..x_{n-1}` then `Z_0..Z_{N-1}`; rows: budget `sum x = 1`,
/// scenario rows `r_s . x + M_s Z_s >= alpha` (labelled `s`), and the
/// cardinality row `sum Z <= k`.
pub fn build_saa_bigm(scenarios: &ScenarioSet, alpha: f64, k: usize, objective: &[f64]) -> Result<MipModel> {
    let n = scenarios.n_assets();
    let big_n = scenarios.n_scenarios();
    if objective.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: objective.len() });
    }
    if k >= big_n {
        return Err(Error::invalid(format!("k = {k} must be below N = {big_n}")));
    }
    let width = n + big_n;
    let mut c = objective.to_vec();
    c.resize(width, 0.0);
    let mut base = LpModel::new(c)?;
    let mut budget = vec![0.0; width];
    budget[..n].fill(1.0);
    base.add_row(Row::new(budget, Relation::Eq, 1.0))?;
    for s in 0..big_n {
        let r = scenarios.row(s);
        let mut coeffs = vec![0.0; width];
        coeffs[..n].copy_from_slice(r);
        coeffs[n + s] = big_m(r, alpha);
        base.add_row(Row::new(coeffs, Relation::Ge, alpha).labelled(s))?;
    }
    let mut card = vec![0.0; width];
    card[n..].fill(1.0);
    base.add_row(Row::new(card, Relation::Le, k as f64))?;
    MipModel::new(base, (n..width).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time ran out; `x` is the best incumbent found.
    TimeLimit,
}

#[derive(Clone, Debug)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Upper bound on the optimum when the search stopped.
    pub best_bound: f64,
    pub root_bound: f64,
    pub nodes: u64,
    pub lp_solves: u64,
}

impl MipSolution {
    pub fn gap(&self) -> f64 {
        (self.best_bound - self.objective_value).max(0.0) / self.objective_value.abs().max(1.0)
    }
}

struct Node {
    fixed: Vec<(usize, f64)>,
    bound: f64,
    basis: Option<Basis>,
}

fn most_fractional(x: &[f64], binaries: &[usize]) -> Option<usize> {
    let mut best = None;
    let mut best_dist = INTEGRALITY_TOL;
    for &b in binaries {
        let frac = x[b] - x[b].floor();
        let dist = frac.min(1.0 - frac);
        if dist > best_dist {
            best_dist = dist;
            best = Some(b);
        }
    }
    best
}

fn incumbent_ok(model: &MipModel, x: &[f64]) -> bool {
    let lp = &model.base;
    if x.len() != lp.n_cols() {
        return false;
    }
    let tol = 1e-7;
    let bounds_ok = (0..lp.n_cols()).all(|j| x[j] >= lp.lower()[j] - tol && x[j] <= lp.upper()[j] + tol);
    let integral = model.binaries.iter().all(|&b| (x[b] - x[b].round()).abs() <= INTEGRALITY_TOL);
    let rows_ok = lp.row_ids().iter().all(|&id| {
        let row = lp.row(id).expect("row id listed by model");
        let s = dot(&row.coeffs, x);
        let (lo, hi) = row.relation.activity_bounds(row.rhs);
        s >= lo - tol && s <= hi + tol
    });
    bounds_ok && integral && rows_ok
}

/// Best-bound branch-and-bound, diving depth-first until the first
/// incumbent is found. `warm` is an optional feasible incumbent.
pub fn mip_solve(model: &MipModel, warm: Option<&[f64]>) -> Result<MipSolution> {
    let start = Instant::now();
    let mut lp = model.base.clone();
    let defaults: Vec<(f64, f64)> = model.binaries.iter().map(|&b| (lp.lower()[b], lp.upper()[b])).collect();
    let mut incumbent: Option<(Vec<f64>, f64)> = warm
        .filter(|x| incumbent_ok(model, x))
        .map(|x| (x.to_vec(), dot(lp.objective(), x)));
    let cutoff = |inc: &Option<(Vec<f64>, f64)>| {
        inc.as_ref()
            .map_or(f64::NEG_INFINITY, |(_, v)| v + model.gap_tolerance * v.abs().max(1.0))
    };

    let mut open = vec![Node { fixed: Vec::new(), bound: f64::INFINITY, basis: None }];
    let mut nodes = 0u64;
    let mut lp_solves = 0u64;
    let mut root_bound = f64::NEG_INFINITY;
    let mut timed_out = false;

    while !open.is_empty() {
        if model.time_limit.is_some_and(|t| start.elapsed() > t) {
            timed_out = true;
            break;
        }
        let pick = if incumbent.is_none() {
            open.len() - 1
        } else {
            let mut best = 0;
            for i in 1..open.len() {
                if open[i].bound > open[best].bound {
                    best = i;
                }
            }
            best
        };
        let node = open.swap_remove(pick);
        if node.bound <= cutoff(&incumbent) {
            continue;
        }
        for (&b, &(lo, hi)) in model.binaries.iter().zip(&defaults) {
            lp.set_bounds(b, lo, hi)?;
        }
        for &(b, v) in &node.fixed {
            lp.set_bounds(b, v, v)?;
        }
        let sol = lp_solve(&lp, node.basis.as_ref())?;
        nodes += 1;
        lp_solves += 1;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Ok(MipSolution {
                    status: MipStatus::Unbounded,
                    x: sol.x,
                    objective_value: f64::INFINITY,
                    best_bound: f64::INFINITY,
                    root_bound: f64::INFINITY,
                    nodes,
                    lp_solves,
                })
            }
            LpStatus::Optimal => {}
        }
        if node.fixed.is_empty() {
            root_bound = sol.objective_value;
        }
        let bound = sol.objective_value.min(node.bound);
        if bound <= cutoff(&incumbent) {
            continue;
        }
        match most_fractional(&sol.x, &model.binaries) {
            None => {
                if incumbent.as_ref().is_none_or(|(_, v)| sol.objective_value > *v) {
                    incumbent = Some((sol.x, sol.objective_value));
                }
            }
            Some(b) => {
                let near = sol.x[b].round();
                for v in [1.0 - near, near] {
                    let mut fixed = node.fixed.clone();
                    fixed.push((b, v));
                    open.push(Node { fixed, bound, basis: Some(sol.basis.clone()) });
                }
            }
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    match incumbent {
        Some((x, value)) => Ok(MipSolution {
            status: if timed_out { MipStatus::TimeLimit } else { MipStatus::Optimal },
            x,
            objective_value: value,
            best_bound: open_bound.max(value),
            root_bound,
            nodes,
            lp_solves,
        }),
        None if timed_out => Err(Error::TimeLimit),
        None => Ok(MipSolution {
            status: MipStatus::Infeasible,
            x: Vec::new(),
            objective_value: f64::NEG_INFINITY,
            best_bound: f64::NEG_INFINITY,
            root_bound,
            nodes,
            lp_solves,
        }),
    }
}
