//! Multivariate normal returns: quantiles, Cholesky factors, scenario
//! sampling, and the exact chance-constrained portfolio under normality.
//!
//! With `r ~ N(mu, Sigma)`, `P(r . x >= alpha) >= 1 - eps` is equivalent to
//! the second-order cone constraint
//!
//! ```text
//! z * || L^T x || <= mu . x - alpha,   z = Phi^{-1}(1 - eps),  Sigma = L L^T
//! ```
//!
//! for `eps <= 1/2`. Squaring both sides would admit points where
//! `mu . x < alpha`, so the cone form is solved directly by supporting
//! hyperplanes (Kelley's method) around an LP master. The budget row
//! `sum x = 1` is assumed, so `alpha . sum x = alpha`.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::heuristics::{Method, RunStatus, SolveReport};
use crate::lp::{dot, lp_solve, LpModel, LpStatus, Relation, Row};
use crate::mip::{apply_semicontinuous, mip_solve, MipModel, MipStatus, SemiContinuousSpec};
use crate::saa::{ChanceProgramSpec, Provenance, ScenarioSet, WorkingSet};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Quantile for `p <= 1/2`: Acklam's rational approximation followed by
/// two Newton steps on the CDF.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549671010229528,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let pdf = norm_pdf(x);
        if pdf > 0.0 {
            x -= (norm_cdf(x) - p) / pdf;
        }
    }
    x
}

/// Inverse of the standard normal CDF on `(0, 1)`. Exactly antisymmetric
/// whenever `1 - p` is representable: `inv_norm_cdf(1 - p) == -inv_norm_cdf(p)`.
pub fn inv_norm_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} outside (0, 1)")));
    }
    Ok(if p > 0.5 { -lower_quantile(1.0 - p) } else { lower_quantile(p) })
}

/// Lower-triangular `L` (row-major) with `L L^T = cov`. Semidefinite input
/// is accepted: a pivot that vanishes to rounding gets a zero column.
pub fn cholesky(cov: &[f64], n: usize) -> Result<Vec<f64>> {
    if cov.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: cov.len() });
    }
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero = 1e-12 * scale;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let d = cov[j * n + j] - (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum::<f64>();
        if d < -1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveSemidefinite { index: j, value: d });
        }
        if d <= zero {
            for i in j + 1..n {
                let r = cov[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
                if r.abs() > 1e-8 * scale {
                    return Err(Error::NotPositiveSemidefinite { index: j, value: d });
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let r = cov[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            l[i * n + j] = r / djj;
        }
    }
    Ok(l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianModel {
    mean: Vec<f64>,
    covariance: Vec<f64>,
    chol: Vec<f64>,
}

impl GaussianModel {
    /// `covariance` is row-major `n x n` and must be symmetric.
    pub fn new(mean: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::invalid("model needs at least one asset"));
        }
        if covariance.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: covariance.len() });
        }
        if mean.iter().chain(&covariance).any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean and covariance must be finite"));
        }
        let scale = covariance.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (covariance[i * n + j] - covariance[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!("covariance is not symmetric at ({i}, {j})")));
                }
            }
        }
        let chol = cholesky(&covariance, n)?;
        Ok(Self { mean, covariance, chol })
    }

    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn chol(&self) -> &[f64] {
        &self.chol
    }

    /// `Sigma x`.
    pub fn cov_times(&self, x: &[f64]) -> Vec<f64> {
        self.covariance.chunks_exact(self.n_assets()).map(|row| dot(row, x)).collect()
    }

    /// Standard deviation of `r . x`, computed as `|| L^T x ||`.
    pub fn portfolio_sd(&self, x: &[f64]) -> f64 {
        let n = self.n_assets();
        (0..n)
            .map(|j| (j..n).map(|i| self.chol[i * n + j] * x[i]).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `P(r . x < alpha)` under the model.
    pub fn violation_probability(&self, x: &[f64], alpha: f64) -> f64 {
        let mu = dot(&self.mean, x);
        let sd = self.portfolio_sd(x);
        if sd == 0.0 {
            return if mu < alpha { 1.0 } else { 0.0 };
        }
        norm_cdf((alpha - mu) / sd)
    }
}

/// `count` rows `mean + L z` with `z` standard normal from a ChaCha8 stream
/// seeded by `seed`.
pub fn sample_scenarios(model: &GaussianModel, count: usize, seed: u64) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(Error::invalid("need at least one scenario"));
    }
    let n = model.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count * n);
    let mut z = vec![0.0; n];
    for _ in 0..count {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let row = &model.chol[i * n..i * n + i + 1];
            out.push(model.mean[i] + dot(row, &z[..=i]));
        }
    }
    ScenarioSet::new(n, out, Provenance::Sampled { seed })
}

/// Constraint violation of the cone at `x`; positive means infeasible.
fn cone_violation(model: &GaussianModel, z: f64, alpha: f64, x: &[f64]) -> f64 {
    z * model.portfolio_sd(x) - (dot(model.mean(), x) - alpha)
}

const CUT_TOL: f64 = 1e-8;
const MAX_CUTS: usize = 20_000;

enum ConeMaster {
    Lp(LpModel),
    Mip(MipModel),
}

/// Maximize `spec.objective . x` over the simplex subject to the chance
/// constraint at risk `eps` under `model`, optionally with semi-continuous
/// weights. `eps` must lie in `(0, 1/2]`, where the constraint is convex.
pub fn solve_gaussian_exact(
    model: &GaussianModel,
    spec: &ChanceProgramSpec,
    eps: f64,
    semi: Option<&SemiContinuousSpec>,
) -> Result<SolveReport> {
    let start = Instant::now();
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 0.5] for a convex cone constraint")));
    }
    let n = model.n_assets();
    if spec.n_assets() != n {
        return Err(Error::DimensionMismatch { expected: n, got: spec.n_assets() });
    }
    let z = inv_norm_cdf(1.0 - eps)?;
    let alpha = spec.alpha;
    let mut lp = LpModel::new(spec.objective.clone())?;
    lp.add_row(Row::new(vec![1.0; n], Relation::Eq, 1.0))?;
    let mut master = match semi {
        None => ConeMaster::Lp(lp),
        Some(s) => {
            let mut mip = MipModel::new(lp, Vec::new())?;
            apply_semicontinuous(&mut mip, s)?;
            ConeMaster::Mip(mip)
        }
    };
    let mut basis = None;
    let mut solves = 0u64;
    let mut nodes = 0u64;
    let mut x;
    let mut converged = false;
    loop {
        solves += 1;
        x = match &mut master {
            ConeMaster::Lp(lp) => {
                let sol = lp_solve(lp, basis.as_ref())?;
                match sol.status {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => return Err(Error::Infeasible),
                    LpStatus::Unbounded => return Err(Error::Unbounded),
                }
                basis = Some(sol.basis);
                sol.x
            }
            ConeMaster::Mip(mip) => {
                let sol = mip_solve(mip, None)?;
                nodes += sol.nodes;
                match sol.status {
                    MipStatus::Optimal => {}
                    MipStatus::Infeasible => return Err(Error::Infeasible),
                    MipStatus::Unbounded => return Err(Error::Unbounded),
                    MipStatus::TimeLimit => return Err(Error::TimeLimit),
                }
                sol.x[..n].to_vec()
            }
        };
        if cone_violation(model, z, alpha, &x) <= CUT_TOL {
            converged = true;
            break;
        }
        if solves as usize > MAX_CUTS {
            break;
        }
        let sd = model.portfolio_sd(&x);
        let mut cut: Vec<f64> = model.mean().to_vec();
        if sd > 0.0 {
            for (c, g) in cut.iter_mut().zip(model.cov_times(&x)) {
                *c -= z * g / sd;
            }
        }
        let target = match &mut master {
            ConeMaster::Lp(lp) => lp,
            ConeMaster::Mip(mip) => &mut mip.base,
        };
        cut.resize(target.n_cols(), 0.0);
        target.add_row(Row::new(cut, Relation::Ge, alpha))?;
    }
    if !converged {
        return Err(Error::Numerical(format!("cutting planes did not converge in {MAX_CUTS} cuts")));
    }
    if semi.is_none() {
        if let Some(c) = spec.cash_index {
            x = pull_toward(model, z, alpha, &x, c);
        }
    }
    Ok(SolveReport {
        method: Method::Socp,
        status: RunStatus::Ok,
        objective: dot(&spec.objective, &x),
        x,
        working_set: WorkingSet::default(),
        lp_solves: solves,
        mip_nodes: nodes,
        wall_time: start.elapsed(),
        train_violations: 0,
        seed: None,
    })
}

/// Move `x` the shortest distance toward the all-cash vertex that makes the
/// cone constraint hold exactly.
fn pull_toward(model: &GaussianModel, z: f64, alpha: f64, x: &[f64], cash: usize) -> Vec<f64> {
    let blend = |t: f64| -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().map(|v| (1.0 - t) * v).collect();
        y[cash] += t;
        y
    };
    if cone_violation(model, z, alpha, x) <= 0.0 {
        return x.to_vec();
    }
    if cone_violation(model, z, alpha, &blend(1.0)) > 0.0 {
        return x.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cone_violation(model, z, alpha, &blend(mid)) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    blend(hi)
}
