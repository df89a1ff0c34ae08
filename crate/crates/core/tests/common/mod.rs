//! Independent oracles shared by the integration tests. Nothing here calls
//! into the simplex code.

#![allow(dead_code)]

use ccsaa::lp::{LpModel, Relation, Row};

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

pub struct DenseLp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseLp {
    pub fn from_model(model: &LpModel) -> Self {
        let rows = model
            .row_ids()
            .iter()
            .map(|&id| {
                let r = model.row(id).unwrap();
                (r.coeffs, r.relation, r.rhs)
            })
            .collect();
        Self {
            c: model.objective().to_vec(),
            rows,
            lower: model.lower().to_vec(),
            upper: model.upper().to_vec(),
        }
    }

    pub fn feasible(&self, x: &[f64], tol: f64) -> bool {
        for j in 0..x.len() {
            if x[j] < self.lower[j] - tol || x[j] > self.upper[j] + tol {
                return false;
            }
        }
        self.rows.iter().all(|(a, rel, b)| {
            let s: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            match rel {
                Relation::Le => s <= b + tol,
                Relation::Ge => s >= b - tol,
                Relation::Eq => (s - b).abs() <= tol,
            }
        })
    }

    /// Best objective over all basic feasible points. Requires finite
    /// bounds so that the feasible set is a polytope. `None` if infeasible.
    pub fn vertex_enumeration(&self) -> Option<f64> {
        let n = self.c.len();
        // Candidate hyperplanes: rows and finite bounds.
        let mut planes: Vec<(Vec<f64>, f64)> = self.rows.iter().map(|(a, _, b)| (a.clone(), *b)).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            if self.lower[j].is_finite() {
                planes.push((e.clone(), self.lower[j]));
            }
            if self.upper[j].is_finite() {
                planes.push((e, self.upper[j]));
            }
        }
        let mut best: Option<f64> = None;
        let mut pick = Vec::with_capacity(n);
        choose(planes.len(), n, 0, &mut pick, &mut |idx| {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
            if let Some(x) = solve_square(a, b) {
                if self.feasible(&x, 1e-9) {
                    let v: f64 = self.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        });
        best
    }
}

pub fn choose(total: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..total {
        if total - i < k - pick.len() {
            break;
        }
        pick.push(i);
        choose(total, k, i + 1, pick, f);
        pick.pop();
    }
}

/// Scenario program with cash in column 0 and `risky` normal assets with
/// independent returns. Returns `(rows, objective)`.
pub fn small_program(rng: &mut impl rand::Rng, risky: usize, count: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut mean = vec![1.0];
    let mut sd = vec![0.0];
    for _ in 0..risky {
        mean.push(rng.random_range(1.02..1.15));
        sd.push(rng.random_range(0.05..0.3));
    }
    let rows = (0..count)
        .map(|_| {
            mean.iter()
                .zip(&sd)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s * z
                })
                .collect()
        })
        .collect();
    (rows, mean)
}

/// Best objective of `max c.x` on the unit simplex subject to
/// `r.x >= alpha` for every kept row, by vertex enumeration.
pub fn simplex_lp_oracle(rows: &[&[f64]], alpha: f64, c: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut all: Vec<(Vec<f64>, Relation, f64)> = vec![(vec![1.0; n], Relation::Eq, 1.0)];
    all.extend(rows.iter().map(|r| (r.to_vec(), Relation::Ge, alpha)));
    DenseLp { c: c.to_vec(), rows: all, lower: vec![0.0; n], upper: vec![1.0; n] }.vertex_enumeration()
}

/// Exact optimum with any `k` rows dropped. Every vertex of a reduced
/// problem is the intersection of `n` planes from the full set, so the
/// candidate points are computed once; each drop set then takes the best
/// candidate whose violated rows it contains.
pub fn leave_k_out_oracle(rows: &[Vec<f64>], alpha: f64, c: &[f64], k: usize) -> f64 {
    let n = c.len();
    assert!(rows.len() <= 128, "violation masks hold 128 rows");
    let mut planes: Vec<(Vec<f64>, f64)> = vec![(vec![1.0; n], 1.0)];
    planes.extend(rows.iter().map(|r| (r.clone(), alpha)));
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, 1.0));
    }
    let mut candidates: Vec<(u128, f64)> = Vec::new();
    let mut pick = Vec::with_capacity(n);
    choose(planes.len(), n, 0, &mut pick, &mut |idx| {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| planes[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_square(a, b) else { return };
        if (x.iter().sum::<f64>() - 1.0).abs() > 1e-9 || x.iter().any(|v| *v < -1e-9 || *v > 1.0 + 1e-9) {
            return;
        }
        let mask = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() < alpha - 1e-9)
            .fold(0u128, |m, (i, _)| m | 1 << i);
        if mask.count_ones() as usize <= k {
            candidates.push((mask, c.iter().zip(&x).map(|(p, q)| p * q).sum()));
        }
    });
    let mut best = f64::NEG_INFINITY;
    let mut pick = Vec::new();
    choose(rows.len(), k, 0, &mut pick, &mut |drop| {
        let dropped = drop.iter().fold(0u128, |m, &i| m | 1 << i);
        for &(mask, v) in &candidates {
            if mask & !dropped == 0 {
                best = best.max(v);
            }
        }
    });
    best
}

pub fn violations(rows: &[Vec<f64>], alpha: f64, x: &[f64]) -> usize {
    rows.iter().filter(|r| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() < alpha - 1e-9).count()
}

pub fn random_lp(rng: &mut impl rand::Rng, n: usize, m: usize) -> LpModel {
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
    let mut model = LpModel::new(c).unwrap();
    for j in 0..n {
        let hi = rng.random_range(1.0..4.0);
        model.set_bounds(j, 0.0, hi).unwrap();
    }
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..2.0)).collect();
        let rel = match rng.random_range(0..10) {
            0 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = match rel {
            Relation::Le => rng.random_range(0.5..3.0),
            _ => rng.random_range(-1.0..0.5),
        };
        model.add_row(Row::new(a, rel, rhs)).unwrap();
    }
    model
}

/// Strong duality, sign conditions and complementary slackness at an
/// optimal solution; the first failure as text.
pub fn duality_error(model: &LpModel, sol: &ccsaa::lp::LpSolution) -> Option<String> {
    let primal = sol.objective_value;
    let dual = sol.dual_objective(model);
    if (primal - dual).abs() > 1e-7 * (1.0 + primal.abs()) {
        return Some(format!("gap {primal} vs {dual}"));
    }
    for p in 0..model.n_rows() {
        let (y, s) = (sol.duals[p], sol.slacks[p]);
        if y.abs() * s.abs() > 1e-6 * (1.0 + model.rhs_at(p).abs()) {
            return Some(format!("row {p}: y={y}, slack={s}"));
        }
        let signed = match model.relation_at(p) {
            Relation::Le => y >= -1e-9,
            Relation::Ge => y <= 1e-9,
            Relation::Eq => true,
        };
        if !signed {
            return Some(format!("row {p}: dual {y} has the wrong sign"));
        }
    }
    for j in 0..model.n_cols() {
        let (d, x) = (sol.reduced_costs[j], sol.x[j]);
        if (d > 1e-9 && (x - model.upper()[j]).abs() >= 1e-9) || (d < -1e-9 && (x - model.lower()[j]).abs() >= 1e-9) {
            return Some(format!("column {j}: reduced cost {d} at x={x}"));
        }
    }
    None
}

pub fn check_duality(model: &LpModel, sol: &ccsaa::lp::LpSolution) {
    if let Some(e) = duality_error(model, sol) {
        panic!("{e}");
    }
}

/// `Phi(x)` written out so that no library special function is involved:
/// the Taylor series of `erf` near the centre and the continued fraction
/// of the Mills ratio in the tails, where the series cancels badly.
pub fn phi_oracle(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if x.abs() > 3.0 {
        let t = x.abs();
        let mut frac = t;
        for k in (1..=300).rev() {
            frac = t + k as f64 / frac;
        }
        let tail = pdf / frac;
        return if x < 0.0 { tail } else { 1.0 - tail };
    }
    let mut term = x;
    let mut sum = x;
    let mut k = 1.0;
    while term.abs() > 1e-300 && k < 2000.0 {
        term *= x * x / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
    }
    0.5 + pdf * sum
}

pub fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0, 9.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
