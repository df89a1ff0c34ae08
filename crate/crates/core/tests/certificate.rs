use ccsaa::certificate::{binomial_upper_limit, cg_log_beta, max_removals, RiskSpec, SumLimit};
use proptest::prelude::*;

fn choose_u128(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// The bound with `eps = 1/q`, summed exactly as the rational
/// `C(k+n-1, k) * sum_j C(N, j) (q-1)^(N-j) / q^N`.
fn exact_log_beta(n_scen: u32, k: u32, q: u128, n_dims: u32, limit: SumLimit) -> f64 {
    let upper = match limit {
        SumLimit::Campi => k + n_dims - 1,
        SumLimit::Paper => k + n_dims + 1,
    }
    .min(n_scen);
    let num: u128 = (0..=upper).map(|j| choose_u128(n_scen as u128, j as u128) * (q - 1).pow(n_scen - j)).sum();
    let den = q.pow(n_scen);
    let lead = choose_u128((k + n_dims - 1) as u128, k as u128);
    (lead as f64).log10() + (num as f64).log10() - (den as f64).log10()
}

#[test]
fn small_samples_match_exact_rationals() {
    for (q, max_n) in [(10u128, 30u32), (20, 29)] {
        for n_dims in [1u32, 2, 3, 5] {
            let spec = RiskSpec::new(1.0 / q as f64, 0.5, n_dims as usize).unwrap();
            for n_scen in 1..=max_n {
                for k in 0..n_scen {
                    for limit in [SumLimit::Campi, SumLimit::Paper] {
                        let got = cg_log_beta(n_scen as usize, k as usize, &spec, limit).unwrap();
                        let want = exact_log_beta(n_scen, k, q, n_dims, limit);
                        assert!((got - want).abs() <= 1e-10, "q={q} n={n_dims} N={n_scen} k={k}: {got} vs {want}");
                    }
                }
            }
        }
    }
}

#[test]
fn removal_ratio_grows_toward_eps() {
    let spec = RiskSpec::new(0.05, 5e-6, 20).unwrap();
    let mut last = 0.0;
    for n in [1000, 2500, 5000, 10_000, 20_000, 50_000, 100_000, 200_000, 500_000, 1_000_000] {
        let b = max_removals(n, &spec, SumLimit::Campi).unwrap();
        let ratio = b.ratio();
        assert!(ratio >= last && ratio < 0.05, "N={n}: {ratio}");
        assert!(b.beta_achieved <= 5e-6);
        let next = cg_log_beta(n, b.k_removals + 1, &spec, SumLimit::Campi).unwrap();
        assert!(next > 5e-6f64.log10());
        last = ratio;
    }
}

/// `ln P(X <= v)` for `X ~ Bin(n, p)`, with factorials accumulated as sums
/// of logs.
fn ln_binom_cdf(v: usize, n: usize, p: f64, ln_fact: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..=v)
        .map(|j| ln_fact[n] - ln_fact[j] - ln_fact[n - j] + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln())
        .collect();
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

#[test]
fn wilson_tracks_clopper_pearson() {
    let (v, n, beta) = (5000usize, 100_000usize, 5e-6f64);
    let mut ln_fact = vec![0.0; n + 1];
    for i in 1..=n {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let (mut lo, mut hi) = (v as f64 / n as f64, 0.2);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ln_binom_cdf(v, n, mid, &ln_fact) > beta.ln() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let wilson = binomial_upper_limit(v as u64, n as u64, 1.0 - beta).unwrap();
    assert!((wilson - lo).abs() <= 0.002, "wilson {wilson} vs clopper-pearson {lo}");
}

#[test]
fn wilson_trivial_cases() {
    let u = binomial_upper_limit(0, 100, 0.95).unwrap();
    assert!(u > 0.0 && u < 0.05);
    assert_eq!(binomial_upper_limit(40, 40, 0.99).unwrap(), 1.0);
}

proptest! {
    #[test]
    fn monotone_in_k(n in 2usize..5000, frac in 0.0f64..1.0, dims in 1usize..25) {
        let spec = RiskSpec::new(0.05, 1e-3, dims).unwrap();
        let k = ((n - 1) as f64 * frac) as usize;
        prop_assume!(k + 1 < n);
        let a = cg_log_beta(n, k, &spec, SumLimit::Campi).unwrap();
        let b = cg_log_beta(n, k + 1, &spec, SumLimit::Campi).unwrap();
        prop_assert!(b >= a - 1e-12, "{} < {}", b, a);
    }

    #[test]
    fn monotone_in_n(k in 0usize..200, extra in 0usize..20_000, dims in 1usize..25) {
        let spec = RiskSpec::new(0.05, 1e-3, dims).unwrap();
        let n = ((k as f64 / 0.05).ceil() as usize).max(k + 1) + extra;
        let a = cg_log_beta(n, k, &spec, SumLimit::Campi).unwrap();
        let b = cg_log_beta(n + 1, k, &spec, SumLimit::Campi).unwrap();
        prop_assert!(b <= a + 1e-12, "{} > {}", b, a);
    }

    #[test]
    fn wilson_monotone(v in 0u64..500, n in 500u64..5000, conf in 0.5f64..0.999_999) {
        let a = binomial_upper_limit(v, n, conf).unwrap();
        let b = binomial_upper_limit(v + 1, n, conf).unwrap();
        prop_assert!(b >= a);
        let c = binomial_upper_limit(2 * v, 2 * n, conf).unwrap();
        prop_assert!(c <= a + 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}
