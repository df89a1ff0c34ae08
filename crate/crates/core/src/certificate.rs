//! Scenario budgets for the discarding approach.
//!
//! Given `N` sampled constraints of which `k` may be discarded, the solution
//! of the remaining scenario program is feasible for the chance constraint
//! with confidence `1 - beta` whenever
//!
//! ```text
//! C(k+n-1, k) * sum_{j=0}^{J} C(N, j) eps^j (1-eps)^(N-j) <= beta
//! ```
//!
//! Everything is evaluated in log space (log-gamma binomials, log-sum-exp
//! for the tail) so that `N` in the millions does not overflow.
//!
//! The upper limit `J` of the sum is configurable. [`SumLimit::Campi`]
//! (`J = k + n - 1`) is the default: with `eps = 0.05`, `beta = 5e-6` and
//! `n = 20` it gives `N = 2500 -> k = 24`, `N = 10^4 -> k = 238` and
//! `N = 10^6 -> k = 45978`. [`SumLimit::Paper`] (`J = k + n + 1`) is kept
//! for comparison; it yields budgets two removals smaller.
//!
//! For a portfolio on the unit simplex, `n` is the number of free
//! dimensions, i.e. assets minus one.

use crate::error::{Error, Result};
use crate::gaussian::inv_norm_cdf;

const LN_10: f64 = std::f64::consts::LN_10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RiskSpec {
    pub epsilon: f64,
    pub beta: f64,
    pub n_dims: usize,
}

impl RiskSpec {
    pub fn new(epsilon: f64, beta: f64, n_dims: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0,1), got {epsilon}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0,1), got {beta}")));
        }
        if n_dims == 0 {
            return Err(Error::invalid("n_dims must be at least 1"));
        }
        Ok(Self {
            epsilon,
            beta,
            n_dims,
        })
    }
}

/// Upper limit of the binomial tail sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumLimit {
    /// `J = k + n - 1`.
    #[default]
    Campi,
    /// `J = k + n + 1`.
    Paper,
}

impl SumLimit {
    fn upper(self, k: u64, n_dims: usize) -> u64 {
        let n = n_dims as u64;
        match self {
            SumLimit::Campi => k + n - 1,
            SumLimit::Paper => k + n + 1,
        }
    }
}

impl std::str::FromStr for SumLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "campi" => Ok(SumLimit::Campi),
            "paper" => Ok(SumLimit::Paper),
            other => Err(Error::invalid(format!("unknown sum limit `{other}` (paper|campi)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioBudget {
    pub n_scenarios: usize,
    pub k_removals: usize,
    /// Value of the left-hand side of the condition (not log).
    pub beta_achieved: f64,
}

impl ScenarioBudget {
    /// A budget with no certificate attached, e.g. for oracle comparisons at
    /// a hand-picked `k`.
    pub fn unchecked(n_scenarios: usize, k_removals: usize) -> Result<Self> {
        if n_scenarios == 0 || k_removals >= n_scenarios {
            return Err(Error::invalid(format!(
                "need k < N, got N={n_scenarios}, k={k_removals}"
            )));
        }
        Ok(Self {
            n_scenarios,
            k_removals,
            beta_achieved: f64::NAN,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.k_removals as f64 / self.n_scenarios as f64
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// log10 of the left-hand side of the feasibility condition.
pub fn cg_log_beta(n_scenarios: usize, k: usize, spec: &RiskSpec, limit: SumLimit) -> Result<f64> {
    if n_scenarios == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    if k >= n_scenarios {
        return Err(Error::invalid(format!("need k < N, got N={n_scenarios}, k={k}")));
    }
    if !spec.epsilon.is_finite() || !spec.beta.is_finite() {
        return Err(Error::invalid("non-finite risk parameters"));
    }
    let n_total = n_scenarios as u64;
    let k = k as u64;
    let n = spec.n_dims as u64;
    let upper = limit.upper(k, spec.n_dims).min(n_total);

    let ln_eps = spec.epsilon.ln();
    let ln_keep = (-spec.epsilon).ln_1p();
    let ln_lead = ln_choose(k + n - 1, k);

    let ln_terms: Vec<f64> = (0..=upper)
        .map(|j| ln_choose(n_total, j) + j as f64 * ln_eps + (n_total - j) as f64 * ln_keep)
        .collect();
    let peak = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail: f64 = ln_terms.iter().map(|t| (t - peak).exp()).sum();
    Ok((ln_lead + peak + tail.ln()) / LN_10)
}

/// Largest `k` whose bound stays at or below `spec.beta`.
///
/// The bound is monotone in `k`, so this doubles until the bound fails and
/// then bisects: `O(log N)` evaluations.
pub fn max_removals(n_scenarios: usize, spec: &RiskSpec, limit: SumLimit) -> Result<ScenarioBudget> {
    if n_scenarios == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    let target = spec.beta.log10();
    let fits = |k: usize| -> Result<Option<f64>> {
        let lb = cg_log_beta(n_scenarios, k, spec, limit)?;
        Ok((lb <= target).then_some(lb))
    };

    let mut best = match fits(0)? {
        Some(lb) => (0usize, lb),
        None => {
            return Err(Error::NoFeasibleBudget {
                log_beta: cg_log_beta(n_scenarios, 0, spec, limit)?,
            })
        }
    };

    // Invariant: best.0 fits, `fail` (when Some) does not.
    let mut fail: Option<usize> = None;
    let mut step = 1usize;
    while fail.is_none() {
        let probe = best.0 + step;
        if probe >= n_scenarios {
            fail = Some(n_scenarios);
            break;
        }
        match fits(probe)? {
            Some(lb) => {
                best = (probe, lb);
                step *= 2;
            }
            None => fail = Some(probe),
        }
    }
    let mut hi = fail.unwrap_or(n_scenarios);
    while hi - best.0 > 1 {
        let mid = best.0 + (hi - best.0) / 2;
        match fits(mid)? {
            Some(lb) => best = (mid, lb),
            None => hi = mid,
        }
    }

    Ok(ScenarioBudget {
        n_scenarios,
        k_removals: best.0,
        beta_achieved: 10f64.powf(best.1),
    })
}

/// One-sided Wilson score upper limit for a binomial proportion.
///
/// `confidence` is the coverage level, e.g. `1 - beta`.
pub fn binomial_upper_limit(violations: u64, trials: u64, confidence: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("trials must be positive"));
    }
    if violations > trials {
        return Err(Error::invalid(format!(
            "violations ({violations}) exceed trials ({trials})"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid(format!("confidence must lie in (0,1), got {confidence}")));
    }
    if violations == trials {
        return Ok(1.0);
    }
    let z = inv_norm_cdf(confidence)?;
    let n = trials as f64;
    let p = violations as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(((centre + spread) / (1.0 + z2 / n)).clamp(0.0, 1.0))
}
