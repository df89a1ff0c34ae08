use std::cell::Cell;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Stable handle for a row; survives removal of other rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub(crate) u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    /// Bounds on the row activity `a . x`.
    pub fn activity_bounds(self, rhs: f64) -> (f64, f64) {
        match self {
            Relation::Le => (f64::NEG_INFINITY, rhs),
            Relation::Ge => (rhs, f64::INFINITY),
            Relation::Eq => (rhs, rhs),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
    /// Caller tag, e.g. the scenario index; unique within a model.
    pub label: Option<usize>,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
            label: None,
        }
    }

    pub fn labelled(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }
}

/// `maximize c . x` subject to bounded columns and dense rows.
#[derive(Clone, Debug)]
pub struct LpModel {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    // row-major, n_rows x n_cols
    coeffs: Vec<f64>,
    relations: Vec<Relation>,
    rhs: Vec<f64>,
    ids: Vec<RowId>,
    labels: Vec<Option<usize>>,
    position: HashMap<RowId, usize>,
    by_label: HashMap<usize, RowId>,
    next_id: u64,
    solves: Cell<u64>,
}

impl LpModel {
    /// Columns default to `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Result<Self> {
        if objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::MalformedModel("objective must be finite".into()));
        }
        let n = objective.len();
        Ok(Self {
            objective,
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            coeffs: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
            position: HashMap::new(),
            by_label: HashMap::new(),
            next_id: 0,
            solves: Cell::new(0),
        })
    }

    pub fn n_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) -> Result<()> {
        if col >= self.n_cols() {
            return Err(Error::MalformedModel(format!("column {col} out of range")));
        }
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(Error::MalformedModel(format!(
                "invalid bounds [{lower}, {upper}] for column {col}"
            )));
        }
        self.lower[col] = lower;
        self.upper[col] = upper;
        Ok(())
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) -> Result<()> {
        if objective.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: objective.len(),
            });
        }
        self.objective = objective;
        Ok(())
    }

    /// Append a column with zero coefficients in every existing row.
    pub fn add_column(&mut self, objective: f64, lower: f64, upper: f64) -> Result<usize> {
        let n = self.n_cols();
        let m = self.n_rows();
        let mut coeffs = Vec::with_capacity(m * (n + 1));
        for i in 0..m {
            coeffs.extend_from_slice(&self.coeffs[i * n..(i + 1) * n]);
            coeffs.push(0.0);
        }
        self.coeffs = coeffs;
        self.objective.push(objective);
        self.lower.push(0.0);
        self.upper.push(f64::INFINITY);
        self.set_bounds(n, lower, upper)?;
        Ok(n)
    }

    fn check_row(&self, row: &Row) -> Result<()> {
        if row.coeffs.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: row.coeffs.len(),
            });
        }
        if row.coeffs.iter().any(|v| !v.is_finite()) || !row.rhs.is_finite() {
            return Err(Error::MalformedModel("row data must be finite".into()));
        }
        if let Some(label) = row.label {
            if self.by_label.contains_key(&label) {
                return Err(Error::MalformedModel(format!("duplicate row label {label}")));
            }
        }
        Ok(())
    }

    fn push_row(&mut self, id: RowId, row: Row) {
        let pos = self.ids.len();
        self.coeffs.extend_from_slice(&row.coeffs);
        self.relations.push(row.relation);
        self.rhs.push(row.rhs);
        self.ids.push(id);
        self.labels.push(row.label);
        self.position.insert(id, pos);
        if let Some(label) = row.label {
            self.by_label.insert(label, id);
        }
    }

    pub fn add_row(&mut self, row: Row) -> Result<RowId> {
        self.check_row(&row)?;
        let id = RowId(self.next_id);
        self.next_id += 1;
        self.push_row(id, row);
        Ok(id)
    }

    /// Remove a row and hand it back. The last row takes its storage slot.
    pub fn remove_row(&mut self, id: RowId) -> Result<Row> {
        let pos = *self.position.get(&id).ok_or(Error::UnknownRow(id))?;
        let n = self.n_cols();
        let last = self.ids.len() - 1;
        let coeffs = self.coeffs[pos * n..(pos + 1) * n].to_vec();
        let row = Row {
            coeffs,
            relation: self.relations[pos],
            rhs: self.rhs[pos],
            label: self.labels[pos],
        };
        if pos != last {
            let (head, tail) = self.coeffs.split_at_mut(last * n);
            head[pos * n..(pos + 1) * n].copy_from_slice(&tail[..n]);
            let moved = self.ids[last];
            self.position.insert(moved, pos);
        }
        self.coeffs.truncate(last * n);
        self.relations.swap_remove(pos);
        self.rhs.swap_remove(pos);
        self.ids.swap_remove(pos);
        self.labels.swap_remove(pos);
        self.position.remove(&id);
        if let Some(label) = row.label {
            self.by_label.remove(&label);
        }
        Ok(row)
    }

    /// Put a previously removed row back under its old id, so that bases
    /// recorded before the removal stay meaningful.
    pub fn reinsert_row(&mut self, id: RowId, row: Row) -> Result<()> {
        if self.position.contains_key(&id) || id.0 >= self.next_id {
            return Err(Error::MalformedModel(format!("row id {id:?} cannot be reinserted")));
        }
        self.check_row(&row)?;
        self.push_row(id, row);
        Ok(())
    }

    pub fn contains_row(&self, id: RowId) -> bool {
        self.position.contains_key(&id)
    }

    pub fn row_by_label(&self, label: usize) -> Option<RowId> {
        self.by_label.get(&label).copied()
    }

    pub fn row_position(&self, id: RowId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.ids
    }

    pub fn label_at(&self, pos: usize) -> Option<usize> {
        self.labels[pos]
    }

    pub fn row(&self, id: RowId) -> Result<Row> {
        let pos = self.row_position(id).ok_or(Error::UnknownRow(id))?;
        Ok(Row {
            coeffs: self.row_coeffs(pos).to_vec(),
            relation: self.relations[pos],
            rhs: self.rhs[pos],
            label: self.labels[pos],
        })
    }

    pub(crate) fn row_coeffs(&self, pos: usize) -> &[f64] {
        let n = self.n_cols();
        &self.coeffs[pos * n..(pos + 1) * n]
    }

    pub(crate) fn coeff(&self, pos: usize, col: usize) -> f64 {
        self.coeffs[pos * self.n_cols() + col]
    }

    pub fn relation_at(&self, pos: usize) -> Relation {
        self.relations[pos]
    }

    pub fn rhs_at(&self, pos: usize) -> f64 {
        self.rhs[pos]
    }

    pub(crate) fn bump_solves(&self) {
        self.solves.set(self.solves.get() + 1);
    }

    /// Number of `lp_solve` calls made against this model.
    pub fn solve_count(&self) -> u64 {
        self.solves.get()
    }

    /// Plain-text LP-format listing, for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::from("maximize\n  obj:");
        write_expr(&mut out, &self.objective);
        out.push_str("\nsubject to\n");
        for pos in 0..self.n_rows() {
            let name = match self.labels[pos] {
                Some(l) => format!("s{l}"),
                None => format!("r{}", self.ids[pos].0),
            };
            let _ = write!(out, "  {name}:");
            write_expr(&mut out, self.row_coeffs(pos));
            let _ = writeln!(out, " {} {}", self.relations[pos].symbol(), self.rhs[pos]);
        }
        out.push_str("bounds\n");
        for j in 0..self.n_cols() {
            let _ = writeln!(out, "  {} <= x{j} <= {}", self.lower[j], self.upper[j]);
        }
        out.push_str("end\n");
        out
    }
}

fn write_expr(out: &mut String, coeffs: &[f64]) {
    let mut first = true;
    for (j, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let sign = match (c < 0.0, first) {
            (true, _) => " - ",
            (false, true) => " ",
            (false, false) => " + ",
        };
        let _ = write!(out, "{sign}{} x{j}", c.abs());
        first = false;
    }
    if first {
        out.push_str(" 0");
    }
}

/// Status of a column or of a row's activity variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic strictly inside its bounds (free columns, or columns parked
    /// during basis repair).
    Free,
}

/// Warm-start token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Basis {
    pub cols: Vec<VarStatus>,
    pub rows: HashMap<RowId, VarStatus>,
    /// Column values at the time the basis was recorded; used to place
    /// `Free` columns when the basis is reused.
    pub point: Vec<f64>,
}

impl Basis {
    pub fn basic_count(&self) -> usize {
        self.cols.iter().filter(|s| **s == VarStatus::Basic).count()
            + self.rows.values().filter(|s| **s == VarStatus::Basic).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Per row, in model storage order: the rate of change of the optimal
    /// objective with respect to the row's right-hand side.
    pub duals: Vec<f64>,
    /// Per row: distance of the activity from the right-hand side on the
    /// feasible side (zero for binding rows, `|a.x - b|` for equalities).
    pub slacks: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub row_ids: Vec<RowId>,
    pub basis: Basis,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `sum_i b_i y_i + sum_j d_j x_j`; equals the primal objective at an
    /// optimal basis.
    pub fn dual_objective(&self, model: &LpModel) -> f64 {
        let rows: f64 = (0..model.n_rows()).map(|p| model.rhs_at(p) * self.duals[p]).sum();
        let cols: f64 = self
            .reduced_costs
            .iter()
            .zip(&self.x)
            .map(|(d, x)| if *d == 0.0 { 0.0 } else { d * x })
            .sum();
        rows + cols
    }
}
