//! Bounded-variable primal and dual simplex.
//!
//! Every row `i` gets an activity variable `s_i = a_i . x` whose bounds
//! encode the relation. A basis picks `m` basic variables among the `n`
//! columns and `m` activities. Rows whose activity is nonbasic are *tight*;
//! there are exactly as many tight rows as basic columns, and the basic
//! column values solve the square kernel system
//!
//! ```text
//! A[tight, basic] x_B = s_tight - A[tight, nonbasic] x_N
//! ```
//!
//! The kernel is at most `n x n`, so each pivot costs one small dense LU
//! plus `O(m n)` for the activities of the remaining rows. That suits
//! scenario programs with few columns and many rows.
//!
//! Duals `y` live on the tight rows (`A[tight, basic]^T y = c_B`), reduced
//! costs are `d_j = c_j - y . A[tight, j]` and `d_{s_r} = y_r`, with the
//! convention that `y_r` is the derivative of the optimal value with respect
//! to the right-hand side of row `r`.

use super::dense::{independent_subset, Lu};
use super::model::{Basis, LpModel, LpSolution, LpStatus, VarStatus};
use crate::error::{Error, Result};

pub const TOL_FEAS: f64 = 1e-9;
pub const TOL_DUAL: f64 = 1e-9;
pub const TOL_PIVOT: f64 = 1e-10;
const TOL_SINGULAR: f64 = 1e-11;
const TIE: f64 = 1e-12;
const STALL_LIMIT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

enum Phase {
    One,
    Two,
}

enum PrimalStep {
    Moved,
    Optimal,
    Unbounded,
}

enum DualStep {
    Moved,
    PrimalFeasible,
    Infeasible,
}

struct Simplex<'a> {
    model: &'a LpModel,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    state: Vec<State>,
    val: Vec<f64>,
    basic_cols: Vec<usize>,
    tight_rows: Vec<usize>,
    lu: Lu,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
}

/// Solve `model`, optionally warm-started from a basis recorded on an
/// earlier version of it. Stale entries (removed rows, bounds that moved)
/// are repaired rather than rejected.
pub fn lp_solve(model: &LpModel, warm: Option<&Basis>) -> Result<LpSolution> {
    model.bump_solves();
    let mut sx = Simplex::new(model, warm);
    let status = sx.run()?;
    Ok(sx.finish(status))
}

impl<'a> Simplex<'a> {
    fn new(model: &'a LpModel, warm: Option<&Basis>) -> Self {
        let n = model.n_cols();
        let m = model.n_rows();
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        lo.extend_from_slice(model.lower());
        hi.extend_from_slice(model.upper());
        for pos in 0..m {
            let (l, h) = model.relation_at(pos).activity_bounds(model.rhs_at(pos));
            lo.push(l);
            hi.push(h);
        }
        let mut sx = Simplex {
            model,
            n,
            m,
            lo,
            hi,
            state: vec![State::Basic; n + m],
            val: vec![0.0; n + m],
            basic_cols: Vec::new(),
            tight_rows: Vec::new(),
            lu: Lu::default(),
            iterations: 0,
            max_iterations: 20_000 + 50 * (n + m),
            degenerate_run: 0,
            bland: false,
        };
        sx.load_basis(warm);
        sx
    }

    fn point_value(&self, j: usize, warm: Option<&Basis>) -> f64 {
        let v = warm.and_then(|b| b.point.get(j).copied()).unwrap_or(0.0);
        v.max(self.lo[j]).min(self.hi[j])
    }

    /// Park a nonbasic column at `v`, snapping to a bound when it sits on one.
    fn park(&mut self, j: usize, v: f64) {
        let (l, h) = (self.lo[j], self.hi[j]);
        if (l == h || v <= l)
            && l.is_finite() {
                self.state[j] = State::Lower;
                self.val[j] = l;
                return;
            }
        if v >= h && h.is_finite() {
            self.state[j] = State::Upper;
            self.val[j] = h;
            return;
        }
        self.state[j] = State::Free;
        self.val[j] = v;
    }

    fn load_basis(&mut self, warm: Option<&Basis>) {
        let n = self.n;
        for j in 0..n {
            let status = warm.and_then(|b| b.cols.get(j).copied());
            let (l, h) = (self.lo[j], self.hi[j]);
            match status {
                Some(VarStatus::Basic) => self.state[j] = State::Basic,
                Some(VarStatus::AtUpper) if h.is_finite() => self.park(j, h),
                Some(VarStatus::AtLower) if l.is_finite() => self.park(j, l),
                Some(_) => {
                    let v = self.point_value(j, warm);
                    self.park(j, v)
                }
                None => {
                    let v = if l.is_finite() {
                        l
                    } else if h.is_finite() {
                        h
                    } else {
                        0.0
                    };
                    self.park(j, v)
                }
            }
        }
        for pos in 0..self.m {
            let v = n + pos;
            let id = self.model.row_ids()[pos];
            let status = warm.and_then(|b| b.rows.get(&id).copied());
            let (l, h) = (self.lo[v], self.hi[v]);
            self.state[v] = match status {
                Some(VarStatus::AtLower) if l.is_finite() => State::Lower,
                Some(VarStatus::AtUpper) if h.is_finite() => State::Upper,
                Some(VarStatus::AtLower) | Some(VarStatus::AtUpper) if l == h => State::Lower,
                _ => State::Basic,
            };
            match self.state[v] {
                State::Lower => self.val[v] = l,
                State::Upper => self.val[v] = h,
                _ => {}
            }
        }
        self.basic_cols = (0..n).filter(|&j| self.state[j] == State::Basic).collect();
        self.tight_rows = (0..self.m).filter(|&i| self.state[n + i] != State::Basic).collect();
        if !self.refactor() {
            let point: Vec<f64> = (0..n).map(|j| self.point_value(j, warm)).collect();
            self.repair(&point);
        }
    }

    fn kernel(&self) -> Vec<f64> {
        let p = self.tight_rows.len();
        let q = self.basic_cols.len();
        let mut k = Vec::with_capacity(p * q);
        for &r in &self.tight_rows {
            let row = self.model.row_coeffs(r);
            k.extend(self.basic_cols.iter().map(|&j| row[j]));
        }
        k
    }

    fn refactor(&mut self) -> bool {
        if self.tight_rows.len() != self.basic_cols.len() {
            return false;
        }
        match Lu::factor(self.basic_cols.len(), self.kernel(), TOL_SINGULAR) {
            Some(lu) => {
                self.lu = lu;
                true
            }
            None => false,
        }
    }

    /// Shrink the kernel to a nonsingular square block. Dropped rows become
    /// basic; dropped columns are parked at `point`.
    fn repair(&mut self, point: &[f64]) {
        let p = self.tight_rows.len();
        let q = self.basic_cols.len();
        let pivots = independent_subset(p, q, self.kernel(), 1e-9);
        let mut keep_rows = vec![false; p];
        let mut keep_cols = vec![false; q];
        for &(r, c) in &pivots {
            keep_rows[r] = true;
            keep_cols[c] = true;
        }
        for (a, &r) in self.tight_rows.iter().enumerate() {
            if !keep_rows[a] {
                self.state[self.n + r] = State::Basic;
            }
        }
        let dropped: Vec<usize> = self
            .basic_cols
            .iter()
            .enumerate()
            .filter(|(b, _)| !keep_cols[*b])
            .map(|(_, &j)| j)
            .collect();
        for j in dropped {
            self.park(j, point[j]);
        }
        // Keep pivot order for rows/cols so the kernel is the pivoted block.
        self.tight_rows = pivots.iter().map(|&(r, _)| self.tight_rows[r]).collect();
        self.basic_cols = pivots.iter().map(|&(_, c)| self.basic_cols[c]).collect();
        let ok = self.refactor();
        debug_assert!(ok, "repaired kernel must factor");
    }

    fn current_point(&self) -> Vec<f64> {
        self.val[..self.n].to_vec()
    }

    fn compute_values(&mut self) {
        let n = self.n;
        if !self.basic_cols.is_empty() {
            let mut rhs = Vec::with_capacity(self.tight_rows.len());
            for &r in &self.tight_rows {
                let row = self.model.row_coeffs(r);
                let mut s = self.val[n + r];
                for j in 0..n {
                    if self.state[j] != State::Basic {
                        s -= row[j] * self.val[j];
                    }
                }
                rhs.push(s);
            }
            let xb = self.lu.solve(&rhs);
            for (b, &j) in self.basic_cols.iter().enumerate() {
                self.val[j] = xb[b];
            }
        }
        let (x, s) = self.val.split_at_mut(n);
        for i in 0..self.m {
            if self.state[n + i] == State::Basic {
                s[i] = dot(self.model.row_coeffs(i), x);
            }
        }
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let x = self.val[v];
        if x < self.lo[v] - TOL_FEAS {
            self.lo[v] - x
        } else if x > self.hi[v] + TOL_FEAS {
            x - self.hi[v]
        } else {
            0.0
        }
    }

    fn basic_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.basic_cols
            .iter()
            .copied()
            .chain((0..self.m).filter(|&i| self.state[self.n + i] == State::Basic).map(|i| self.n + i))
    }

    fn total_infeasibility(&self) -> f64 {
        self.basic_vars().map(|v| self.infeasibility(v)).sum()
    }

    /// Gradient of the negated sum of infeasibilities, folded onto columns.
    fn phase_one_cost(&self) -> Vec<f64> {
        let n = self.n;
        let mut c = vec![0.0; n];
        for v in self.basic_vars() {
            let x = self.val[v];
            let sign = if x < self.lo[v] - TOL_FEAS {
                1.0
            } else if x > self.hi[v] + TOL_FEAS {
                -1.0
            } else {
                continue;
            };
            if v < n {
                c[v] += sign;
            } else {
                for (cj, a) in c.iter_mut().zip(self.model.row_coeffs(v - n)) {
                    *cj += sign * a;
                }
            }
        }
        c
    }

    /// Returns (duals on tight rows in kernel order, reduced costs for all
    /// variables; zero for basics).
    fn reduced_costs(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let cb: Vec<f64> = self.basic_cols.iter().map(|&j| cost[j]).collect();
        let y = self.lu.solve_transpose(&cb);
        let mut d = vec![0.0; n + self.m];
        for j in 0..n {
            if self.state[j] != State::Basic {
                let mut v = cost[j];
                for (a, &r) in self.tight_rows.iter().enumerate() {
                    v -= y[a] * self.model.coeff(r, j);
                }
                d[j] = v;
            }
        }
        for (a, &r) in self.tight_rows.iter().enumerate() {
            d[n + r] = y[a];
        }
        (y, d)
    }

    fn is_fixed(&self, v: usize) -> bool {
        self.lo[v] == self.hi[v]
    }

    fn can_increase(&self, v: usize) -> bool {
        match self.state[v] {
            State::Lower => self.hi[v] > self.lo[v],
            State::Free => self.val[v] < self.hi[v],
            _ => false,
        }
    }

    fn can_decrease(&self, v: usize) -> bool {
        match self.state[v] {
            State::Upper => self.hi[v] > self.lo[v],
            State::Free => self.val[v] > self.lo[v],
            _ => false,
        }
    }

    fn nonbasic_vars(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n)
            .filter(|&j| self.state[j] != State::Basic)
            .chain(self.tight_rows.iter().map(|&r| self.n + r))
    }

    fn dual_feasible(&self, d: &[f64]) -> bool {
        self.nonbasic_vars().all(|v| {
            if self.is_fixed(v) {
                return true;
            }
            match self.state[v] {
                State::Lower => d[v] <= TOL_DUAL,
                State::Upper => d[v] >= -TOL_DUAL,
                State::Free => d[v].abs() <= TOL_DUAL,
                State::Basic => true,
            }
        })
    }

    fn note_step(&mut self, step: f64) {
        if step <= TIE {
            self.degenerate_run += 1;
            if self.degenerate_run > STALL_LIMIT {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.max_iterations {
            return Err(Error::IterationLimit(self.iterations));
        }
        Ok(())
    }

    /// Swap `enter` into the basis and move `leave` to `leave_state`.
    fn pivot(&mut self, enter: usize, leave: usize, leave_state: State) {
        let n = self.n;
        let point = self.current_point();
        self.state[enter] = State::Basic;
        self.state[leave] = leave_state;
        self.val[leave] = if leave_state == State::Lower {
            self.lo[leave]
        } else {
            self.hi[leave]
        };
        match (enter < n, leave < n) {
            (true, true) => {
                let b = self.basic_cols.iter().position(|&j| j == leave).expect("leaving column is basic");
                self.basic_cols[b] = enter;
            }
            (true, false) => {
                self.basic_cols.push(enter);
                self.tight_rows.push(leave - n);
            }
            (false, true) => {
                self.basic_cols.retain(|&j| j != leave);
                self.tight_rows.retain(|&r| r != enter - n);
            }
            (false, false) => {
                let a = self.tight_rows.iter().position(|&r| r == enter - n).expect("entering row is tight");
                self.tight_rows[a] = leave - n;
            }
        }
        if !self.refactor() {
            self.repair(&point);
        }
        self.compute_values();
    }

    /// Rates of change of the columns when `enter` moves by +1.
    fn direction(&self, enter: usize) -> Vec<f64> {
        let n = self.n;
        let mut dx = vec![0.0; n];
        if enter < n {
            let col: Vec<f64> = self.tight_rows.iter().map(|&r| self.model.coeff(r, enter)).collect();
            let w = self.lu.solve(&col);
            for (b, &j) in self.basic_cols.iter().enumerate() {
                dx[j] = -w[b];
            }
            dx[enter] = 1.0;
        } else {
            let a = self.tight_rows.iter().position(|&r| r == enter - n).expect("entering row is tight");
            let mut e = vec![0.0; self.tight_rows.len()];
            e[a] = 1.0;
            let w = self.lu.solve(&e);
            for (b, &j) in self.basic_cols.iter().enumerate() {
                dx[j] = w[b];
            }
        }
        dx
    }

    fn primal_iteration(&mut self, phase: Phase) -> Result<PrimalStep> {
        let n = self.n;
        let cost = match phase {
            Phase::One => {
                if self.total_infeasibility() == 0.0 {
                    return Ok(PrimalStep::Optimal);
                }
                self.phase_one_cost()
            }
            Phase::Two => self.model.objective().to_vec(),
        };
        let phase_one = matches!(phase, Phase::One);
        let (_, d) = self.reduced_costs(&cost);

        // Pricing.
        let mut enter: Option<(usize, f64)> = None;
        for v in self.nonbasic_vars().collect::<Vec<_>>() {
            let dv = d[v];
            let ok = (dv > TOL_DUAL && self.can_increase(v)) || (dv < -TOL_DUAL && self.can_decrease(v));
            if !ok {
                continue;
            }
            let better = match enter {
                None => true,
                Some((e, de)) => {
                    if self.bland {
                        v < e
                    } else {
                        dv.abs() > de.abs() || (dv.abs() == de.abs() && v < e)
                    }
                }
            };
            if better {
                enter = Some((v, dv));
            }
        }
        let Some((q, dq)) = enter else {
            return Ok(PrimalStep::Optimal);
        };
        let sigma = if dq > 0.0 { 1.0 } else { -1.0 };
        let dx = self.direction(q);

        let own = if sigma > 0.0 {
            self.hi[q] - self.val[q]
        } else {
            self.val[q] - self.lo[q]
        };

        // Ratio test: (step, |rate|, var, state on leaving)
        let mut best: Option<(f64, f64, usize, State)> = None;
        let consider = |v: usize, rate: f64, best: &mut Option<(f64, f64, usize, State)>| {
            let rate = sigma * rate;
            if rate.abs() <= TOL_PIVOT {
                return;
            }
            let x = self.val[v];
            let (lo, hi) = (self.lo[v], self.hi[v]);
            let below = x < lo - TOL_FEAS;
            let above = x > hi + TOL_FEAS;
            let hit = if rate > 0.0 {
                if phase_one && below {
                    Some(((lo - x) / rate, State::Lower))
                } else if phase_one && above {
                    None
                } else if hi.is_finite() {
                    Some((((hi - x) / rate).max(0.0), State::Upper))
                } else {
                    None
                }
            } else if phase_one && above {
                Some(((hi - x) / rate, State::Upper))
            } else if phase_one && below {
                None
            } else if lo.is_finite() {
                Some((((lo - x) / rate).max(0.0), State::Lower))
            } else {
                None
            };
            let Some((t, st)) = hit else { return };
            let replace = match *best {
                None => true,
                Some((bt, br, bv, _)) => {
                    if t < bt - TIE {
                        true
                    } else if t <= bt + TIE {
                        if self.bland {
                            v < bv
                        } else {
                            rate.abs() > br || (rate.abs() == br && v < bv)
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                *best = Some((t, rate.abs(), v, st));
            }
        };
        for &j in &self.basic_cols {
            consider(j, dx[j], &mut best);
        }
        let moving: Vec<usize> = (0..n).filter(|&j| dx[j] != 0.0).collect();
        for i in 0..self.m {
            if self.state[n + i] != State::Basic {
                continue;
            }
            let row = self.model.row_coeffs(i);
            let rate: f64 = moving.iter().map(|&j| row[j] * dx[j]).sum();
            consider(n + i, rate, &mut best);
        }

        self.tick()?;
        match best {
            Some((t, _, leave, st)) if t < own => {
                self.note_step(t);
                self.pivot(q, leave, st);
            }
            _ if own.is_finite() => {
                self.note_step(own);
                if sigma > 0.0 {
                    self.state[q] = State::Upper;
                    self.val[q] = self.hi[q];
                } else {
                    self.state[q] = State::Lower;
                    self.val[q] = self.lo[q];
                }
                self.compute_values();
            }
            _ => {
                if phase_one {
                    return Err(Error::Numerical("unbounded ray in phase one".into()));
                }
                return Ok(PrimalStep::Unbounded);
            }
        }
        Ok(PrimalStep::Moved)
    }

    fn dual_iteration(&mut self) -> Result<DualStep> {
        let n = self.n;
        // Leaving variable: largest bound violation among basics.
        let mut leave: Option<(usize, f64)> = None;
        for v in self.basic_vars().collect::<Vec<_>>() {
            let inf = self.infeasibility(v);
            if inf <= 0.0 {
                continue;
            }
            let better = match leave {
                None => true,
                Some((l, li)) => {
                    if self.bland {
                        v < l
                    } else {
                        inf > li || (inf == li && v < l)
                    }
                }
            };
            if better {
                leave = Some((v, inf));
            }
        }
        let Some((r, _)) = leave else {
            return Ok(DualStep::PrimalFeasible);
        };
        let increase = self.val[r] < self.lo[r];
        let leave_state = if increase { State::Lower } else { State::Upper };

        // Row of the tableau for r.
        let (v, own): (Vec<f64>, Option<&[f64]>) = if r < n {
            let t = self.basic_cols.iter().position(|&j| j == r).expect("basic column");
            let mut e = vec![0.0; self.basic_cols.len()];
            e[t] = 1.0;
            (self.lu.solve_transpose(&e), None)
        } else {
            let row = self.model.row_coeffs(r - n);
            let ab: Vec<f64> = self.basic_cols.iter().map(|&j| row[j]).collect();
            (self.lu.solve_transpose(&ab), Some(row))
        };
        let alpha = |q: usize| -> f64 {
            if q < n {
                let mut a = own.map_or(0.0, |row| row[q]);
                for (k, &t) in self.tight_rows.iter().enumerate() {
                    a -= v[k] * self.model.coeff(t, q);
                }
                a
            } else {
                let k = self.tight_rows.iter().position(|&t| t == q - n).expect("tight row");
                v[k]
            }
        };

        let (_, d) = self.reduced_costs(self.model.objective());
        let mut best: Option<(f64, f64, usize)> = None;
        for q in self.nonbasic_vars().collect::<Vec<_>>() {
            if self.is_fixed(q) {
                continue;
            }
            let a = alpha(q);
            if a.abs() <= TOL_PIVOT {
                continue;
            }
            // Moving q in its allowed direction must push r toward its bound.
            let push = if increase { a } else { -a };
            let eligible = match self.state[q] {
                State::Lower => push > 0.0,
                State::Upper => push < 0.0,
                State::Free => true,
                State::Basic => false,
            };
            if !eligible {
                continue;
            }
            let ratio = d[q].abs() / a.abs();
            let replace = match best {
                None => true,
                Some((br, ba, bq)) => {
                    if ratio < br - TIE {
                        true
                    } else if ratio <= br + TIE {
                        if self.bland {
                            q < bq
                        } else {
                            a.abs() > ba || (a.abs() == ba && q < bq)
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some((ratio, a.abs(), q));
            }
        }
        let Some((ratio, _, q)) = best else {
            return Ok(DualStep::Infeasible);
        };
        self.tick()?;
        self.note_step(ratio);
        self.pivot(q, r, leave_state);
        Ok(DualStep::Moved)
    }

    fn run(&mut self) -> Result<LpStatus> {
        self.compute_values();
        if self.total_infeasibility() > 0.0 {
            let (_, d) = self.reduced_costs(self.model.objective());
            if self.dual_feasible(&d) {
                loop {
                    match self.dual_iteration()? {
                        DualStep::Moved => {}
                        DualStep::PrimalFeasible => break,
                        DualStep::Infeasible => return Ok(LpStatus::Infeasible),
                    }
                }
            }
            self.degenerate_run = 0;
            self.bland = false;
            while self.total_infeasibility() > 0.0 {
                match self.primal_iteration(Phase::One)? {
                    PrimalStep::Moved => {}
                    PrimalStep::Optimal => {
                        if self.total_infeasibility() > 0.0 {
                            return Ok(LpStatus::Infeasible);
                        }
                    }
                    PrimalStep::Unbounded => unreachable!("phase one reports unbounded as an error"),
                }
            }
        }
        self.degenerate_run = 0;
        self.bland = false;
        loop {
            match self.primal_iteration(Phase::Two)? {
                PrimalStep::Moved => {}
                PrimalStep::Optimal => return Ok(LpStatus::Optimal),
                PrimalStep::Unbounded => return Ok(LpStatus::Unbounded),
            }
        }
    }

    fn finish(self, status: LpStatus) -> LpSolution {
        let n = self.n;
        let model = self.model;
        let x: Vec<f64> = self.val[..n].to_vec();
        let (y, d) = self.reduced_costs(model.objective());
        let mut duals = vec![0.0; self.m];
        for (a, &r) in self.tight_rows.iter().enumerate() {
            duals[r] = y[a];
        }
        let slacks = (0..self.m)
            .map(|i| {
                let s = self.val[n + i];
                let b = model.rhs_at(i);
                match model.relation_at(i) {
                    super::Relation::Le => b - s,
                    super::Relation::Ge => s - b,
                    super::Relation::Eq => (s - b).abs(),
                }
            })
            .collect();
        let to_status = |s: State| match s {
            State::Basic => VarStatus::Basic,
            State::Lower => VarStatus::AtLower,
            State::Upper => VarStatus::AtUpper,
            State::Free => VarStatus::Free,
        };
        let basis = Basis {
            cols: self.state[..n].iter().map(|&s| to_status(s)).collect(),
            rows: model
                .row_ids()
                .iter()
                .enumerate()
                .map(|(i, &id)| (id, to_status(self.state[n + i])))
                .collect(),
            point: x.clone(),
        };
        let objective_value = dot(model.objective(), &x);
        LpSolution {
            status,
            x,
            objective_value,
            duals,
            slacks,
            reduced_costs: d[..n].to_vec(),
            row_ids: model.row_ids().to_vec(),
            basis,
            iterations: self.iterations,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
