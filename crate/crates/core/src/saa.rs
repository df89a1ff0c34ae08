//! Scenario programs: sampled return matrices, the SAA linear model, outcome
//! evaluation and certification of candidate portfolios.
//!
//! A scenario `i` is violated by `x` when `O_i = alpha - r_i . x` exceeds
//! [`VIOLATION_TOL`], the LP feasibility tolerance, so that rows the solver
//! reports as binding are never counted against the budget.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::certificate::ScenarioBudget;
use crate::error::{Error, Result};
use crate::lp::{dot, LpModel, Relation, Row, RowId};

pub const VIOLATION_TOL: f64 = 1e-9;

/// Below this many scenarios outcome evaluation stays on the calling thread.
const PARALLEL_MIN: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Sampled { seed: u64 },
    File(PathBuf),
    InMemory,
}

/// `N x n` matrix of scenario returns, stored row-major.
#[derive(Clone, Debug)]
pub struct ScenarioSet {
    returns: Vec<f64>,
    n_scenarios: usize,
    n_assets: usize,
    provenance: Provenance,
}

impl ScenarioSet {
    pub fn new(n_assets: usize, returns: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if n_assets == 0 {
            return Err(Error::invalid("scenario set needs at least one asset"));
        }
        if returns.is_empty() {
            return Err(Error::invalid("scenario set is empty"));
        }
        if !returns.len().is_multiple_of(n_assets) {
            return Err(Error::invalid(format!(
                "{} values do not split into rows of {n_assets}",
                returns.len()
            )));
        }
        if let Some(p) = returns.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite return in scenario {}, asset {}",
                p / n_assets,
                p % n_assets
            )));
        }
        let n_scenarios = returns.len() / n_assets;
        Ok(Self { returns, n_scenarios, n_assets, provenance })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("scenario rows have different lengths"));
        }
        Self::new(n, rows.concat(), Provenance::InMemory)
    }

    pub fn n_scenarios(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.returns[i * self.n_assets..(i + 1) * self.n_assets]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.returns
    }

    pub fn sample_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_assets];
        for row in self.returns.chunks_exact(self.n_assets) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_scenarios as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Write as CSV with header `a1,...,an`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((1..=self.n_assets).map(|j| format!("a{j}")))?;
        for row in self.returns.chunks_exact(self.n_assets) {
            w.write_record(row.iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let n = r.headers()?.len();
        let mut values = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != n {
                return Err(Error::invalid(format!("{}: row {} has {} fields, expected {n}", path.display(), line + 1, record.len())));
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::invalid(format!("{}: row {}: cannot parse {field:?}", path.display(), line + 1))
                })?;
                values.push(v);
            }
        }
        Self::new(n, values, Provenance::File(path.to_path_buf()))
    }
}

/// The chance-constrained portfolio program: maximize `objective . x` over
/// the unit simplex subject to `P(r . x >= alpha) >= 1 - eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChanceProgramSpec {
    pub alpha: f64,
    pub objective: Vec<f64>,
    /// Column whose return is exactly 1 in every scenario.
    pub cash_index: Option<usize>,
}

impl ChanceProgramSpec {
    pub fn new(alpha: f64, objective: Vec<f64>, cash_index: Option<usize>) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        if objective.is_empty() || objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("objective must be a non-empty finite vector"));
        }
        if let Some(c) = cash_index {
            if c >= objective.len() {
                return Err(Error::invalid(format!("cash index {c} out of range")));
            }
            if alpha > 1.0 {
                return Err(Error::invalid(format!("alpha {alpha} > 1 leaves the all-cash portfolio infeasible")));
            }
        }
        Ok(Self { alpha, objective, cash_index })
    }

    pub fn n_assets(&self) -> usize {
        self.objective.len()
    }

    pub(crate) fn check_scenarios(&self, scenarios: &ScenarioSet) -> Result<()> {
        if scenarios.n_assets() != self.n_assets() {
            return Err(Error::DimensionMismatch { expected: self.n_assets(), got: scenarios.n_assets() });
        }
        Ok(())
    }
}

/// Scenario outcomes `O_i = alpha - r_i . x` for one candidate `x`.
#[derive(Clone, Debug)]
pub struct OutcomeVector {
    pub values: Vec<f64>,
    pub violation_count: usize,
}

impl OutcomeVector {
    fn order(&self, a: usize, b: usize) -> std::cmp::Ordering {
        self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b))
    }

    /// All scenario indices ranked by outcome, largest first, ties by index.
    pub fn ranked_all(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_unstable_by(|&a, &b| self.order(a, b));
        idx
    }

    /// The violated scenarios in ranked order (`O^R`).
    pub fn ranked_violated(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).filter(|&i| self.values[i] > VIOLATION_TOL).collect();
        idx.sort_unstable_by(|&a, &b| self.order(a, b));
        idx
    }

    /// Scenario index at 1-based `rank` of the full ranking, in linear time.
    pub fn at_rank(&self, rank: usize) -> Option<usize> {
        if rank == 0 || rank > self.values.len() {
            return None;
        }
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        let (_, nth, _) = idx.select_nth_unstable_by(rank - 1, |&a, &b| self.order(a, b));
        Some(*nth)
    }

    pub fn max_violation(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn evaluate_outcomes(x: &[f64], scenarios: &ScenarioSet, spec: &ChanceProgramSpec) -> Result<OutcomeVector> {
    spec.check_scenarios(scenarios)?;
    if x.len() != scenarios.n_assets() {
        return Err(Error::DimensionMismatch { expected: scenarios.n_assets(), got: x.len() });
    }
    let n = scenarios.n_assets();
    let alpha = spec.alpha;
    let mut values = vec![0.0; scenarios.n_scenarios()];
    if values.len() >= PARALLEL_MIN {
        values
            .par_chunks_mut(4096)
            .zip(scenarios.as_slice().par_chunks(4096 * n))
            .for_each(|(out, rows)| {
                for (o, r) in out.iter_mut().zip(rows.chunks_exact(n)) {
                    *o = alpha - dot(r, x);
                }
            });
    } else {
        for (o, r) in values.iter_mut().zip(scenarios.as_slice().chunks_exact(n)) {
            *o = alpha - dot(r, x);
        }
    }
    let violation_count = values.iter().filter(|&&v| v > VIOLATION_TOL).count();
    Ok(OutcomeVector { values, violation_count })
}

pub fn certify(x: &[f64], scenarios: &ScenarioSet, budget: &ScenarioBudget, spec: &ChanceProgramSpec) -> Result<bool> {
    Ok(evaluate_outcomes(x, scenarios, spec)?.violation_count <= budget.k_removals)
}

/// Scenario constraints currently enforced in a master model, in the order
/// they were added.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorkingSet {
    order: Vec<usize>,
    rows: HashMap<usize, RowId>,
}

impl WorkingSet {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, scenario: usize) -> bool {
        self.rows.contains_key(&scenario)
    }

    pub fn indices(&self) -> &[usize] {
        &self.order
    }

    pub fn row_id(&self, scenario: usize) -> Option<RowId> {
        self.rows.get(&scenario).copied()
    }

    pub(crate) fn insert(&mut self, scenario: usize, id: RowId) {
        if self.rows.insert(scenario, id).is_none() {
            self.order.push(scenario);
        }
    }

    pub(crate) fn remove(&mut self, scenario: usize) -> Option<RowId> {
        let id = self.rows.remove(&scenario)?;
        self.order.retain(|&s| s != scenario);
        Some(id)
    }
}

pub(crate) fn scenario_row(scenarios: &ScenarioSet, alpha: f64, i: usize) -> Row {
    Row::new(scenarios.row(i).to_vec(), Relation::Ge, alpha).labelled(i)
}

/// Maximize `objective . x` over the simplex with scenario rows
/// `r_i . x >= alpha` for `i` in `subset` (every scenario when `None`).
/// Scenario rows carry their scenario index as label.
pub fn build_saa_lp(scenarios: &ScenarioSet, spec: &ChanceProgramSpec, subset: Option<&[usize]>) -> Result<LpModel> {
    spec.check_scenarios(scenarios)?;
    let n = spec.n_assets();
    let mut model = LpModel::new(spec.objective.clone())?;
    model.add_row(Row::new(vec![1.0; n], Relation::Eq, 1.0))?;
    let mut add = |i: usize| -> Result<()> {
        if i >= scenarios.n_scenarios() {
            return Err(Error::invalid(format!("scenario index {i} out of range")));
        }
        if model.row_by_label(i).is_some() {
            return Err(Error::invalid(format!("scenario {i} listed twice")));
        }
        model.add_row(scenario_row(scenarios, spec.alpha, i))?;
        Ok(())
    };
    match subset {
        Some(idx) => idx.iter().try_for_each(|&i| add(i))?,
        None => (0..scenarios.n_scenarios()).try_for_each(add)?,
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{lp_solve, LpStatus};

    fn spec(alpha: f64, n: usize) -> ChanceProgramSpec {
        ChanceProgramSpec::new(alpha, vec![1.0; n], None).unwrap()
    }

    #[test]
    fn cash_has_no_violations() {
        let s = ScenarioSet::from_rows(&[vec![0.7, 1.0], vec![1.3, 1.0]]).unwrap();
        let sp = ChanceProgramSpec::new(0.95, vec![1.05, 1.0], Some(1)).unwrap();
        let o = evaluate_outcomes(&[0.0, 1.0], &s, &sp).unwrap();
        assert!(o.values.iter().all(|&v| (v + 0.05).abs() < 1e-15));
        assert_eq!(o.violation_count, 0);
        let high = ChanceProgramSpec { alpha: 2.0, ..sp };
        assert_eq!(evaluate_outcomes(&[0.0, 1.0], &s, &high).unwrap().violation_count, 2);
    }

    #[test]
    fn zero_outcome_is_not_a_violation() {
        let s = ScenarioSet::from_rows(&[vec![1.0]]).unwrap();
        let o = evaluate_outcomes(&[1.0], &s, &spec(1.0, 1)).unwrap();
        assert_eq!(o.violation_count, 0);
        let o = evaluate_outcomes(&[1.0], &s, &spec(1.0 + 1e-6, 1)).unwrap();
        assert_eq!(o.violation_count, 1);
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let o = OutcomeVector { values: vec![0.1, 0.3, 0.1, -0.2, 0.3], violation_count: 4 };
        assert_eq!(o.ranked_all(), vec![1, 4, 0, 2, 3]);
        assert_eq!(o.ranked_violated(), vec![1, 4, 0, 2]);
        for r in 1..=5 {
            assert_eq!(o.at_rank(r), Some(o.ranked_all()[r - 1]));
        }
        assert_eq!(o.at_rank(0), None);
        assert_eq!(o.at_rank(6), None);
    }

    #[test]
    fn single_all_ones_scenario_has_slack() {
        let s = ScenarioSet::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let model = build_saa_lp(&s, &spec(0.9, 3), None).unwrap();
        let sol = lp_solve(&model, None).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let p = model.row_position(model.row_by_label(0).unwrap()).unwrap();
        assert!((sol.slacks[p] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_subset_is_relaxed_model() {
        let s = ScenarioSet::from_rows(&[vec![0.5, 1.0], vec![1.5, 1.0]]).unwrap();
        let model = build_saa_lp(&s, &spec(0.9, 2), Some(&[])).unwrap();
        assert_eq!(model.n_rows(), 1);
        assert!(build_saa_lp(&s, &spec(0.9, 2), Some(&[0, 0])).is_err());
        assert!(build_saa_lp(&s, &spec(0.9, 2), Some(&[2])).is_err());
    }

    #[test]
    fn working_set_keeps_order() {
        let mut model = LpModel::new(vec![1.0]).unwrap();
        let mut ws = WorkingSet::default();
        for s in [5, 2, 9] {
            let id = model.add_row(Row::new(vec![1.0], Relation::Le, 1.0)).unwrap();
            ws.insert(s, id);
        }
        ws.remove(2);
        assert_eq!(ws.indices(), &[5, 9]);
        assert!(ws.contains(9) && !ws.contains(2));
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(ScenarioSet::new(2, vec![], Provenance::InMemory).is_err());
        assert!(ScenarioSet::new(2, vec![1.0, 2.0, 3.0], Provenance::InMemory).is_err());
        assert!(ScenarioSet::new(1, vec![f64::NAN], Provenance::InMemory).is_err());
        assert!(ChanceProgramSpec::new(1.1, vec![1.0], Some(0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = ScenarioSet::from_rows(&[vec![0.1, 1.0 / 3.0], vec![2.5e-17, -4.0]]).unwrap();
        s.write_csv(&path).unwrap();
        let back = ScenarioSet::read_csv(&path).unwrap();
        assert_eq!(back.as_slice(), s.as_slice());
        assert_eq!(back.provenance(), &Provenance::File(path));
    }
}
