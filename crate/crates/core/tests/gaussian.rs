mod common;

use ccsaa::error::Error;
use ccsaa::gaussian::{cholesky, inv_norm_cdf, sample_scenarios, solve_gaussian_exact, GaussianModel};
use ccsaa::mip::SemiContinuousSpec;
use ccsaa::saa::ChanceProgramSpec;
use common::{bisect_quantile, phi_oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn quantile_matches_bisection_oracle() {
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let p = (i as f64 + 0.5) / 10_000.0;
        let q = inv_norm_cdf(p).unwrap();
        worst = worst.max((q - bisect_quantile(p)).abs());
        assert!((phi_oracle(q) - p).abs() <= 1e-9, "p = {p}");
    }
    assert!(worst <= 1e-9, "worst quantile error {worst:e}");
    for p in [1e-12, 1e-8, 1e-5, 0.99999] {
        let q = inv_norm_cdf(p).unwrap();
        assert!((q - bisect_quantile(p)).abs() <= 1e-9 * q.abs().max(1.0), "p = {p}");
    }
}

fn random_cov(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..n * rank).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cov[i * n + j] = (0..rank).map(|k| a[i * rank + k] * a[j * rank + k]).sum();
        }
    }
    cov
}

#[test]
fn cholesky_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50 {
        let n = 1 + case % 8;
        let rank = if case % 3 == 0 { (n / 2).max(1) } else { n + 2 };
        let cov = random_cov(&mut rng, n, rank);
        let l = cholesky(&cov, n).unwrap();
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..n {
                assert_eq!(l[i * n + j] != 0.0 && j > i, false, "upper entry set");
                let v: f64 = (0..n).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((v - cov[i * n + j]).abs() <= 1e-10 * scale, "case {case} ({i},{j})");
            }
        }
    }
    let diag = cholesky(&[4.0, 0.0, 0.0, 0.0, 2.25, 0.0, 0.0, 0.0, 0.01], 3).unwrap();
    assert_eq!(diag, vec![2.0, 0.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.1]);
}

#[test]
fn sample_moments_converge() {
    let model = GaussianModel::new(vec![1.05, 0.98], vec![0.04, -0.012, -0.012, 0.09]).unwrap();
    let set = sample_scenarios(&model, 200_000, 99).unwrap();
    let n = set.n_scenarios() as f64;
    let mean = set.sample_mean();
    for j in 0..2 {
        assert!((mean[j] - model.mean()[j]).abs() < 0.01);
    }
    for a in 0..2 {
        for b in 0..2 {
            let c: f64 = (0..set.n_scenarios())
                .map(|s| (set.row(s)[a] - mean[a]) * (set.row(s)[b] - mean[b]))
                .sum::<f64>()
                / (n - 1.0);
            assert!((c - model.covariance()[a * 2 + b]).abs() < 0.02);
        }
    }
    let again = sample_scenarios(&model, 200_000, 99).unwrap();
    assert!(set.as_slice().iter().zip(again.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
    let other = sample_scenarios(&model, 10, 100).unwrap();
    assert_ne!(other.row(0), set.row(0));
}

fn cash_and_one(mu: f64, sigma: f64) -> (GaussianModel, ChanceProgramSpec) {
    let model = GaussianModel::new(vec![1.0, mu], vec![0.0, 0.0, 0.0, sigma * sigma]).unwrap();
    let spec = ChanceProgramSpec::new(0.95, vec![1.0, mu], Some(0)).unwrap();
    (model, spec)
}

#[test]
fn one_risky_asset_closed_form() {
    for (mu, sigma, eps) in [(1.1, 0.2, 0.05), (1.08, 0.15, 0.01), (1.2, 0.1, 0.05), (1.05, 0.3, 0.2), (1.3, 0.05, 0.05)] {
        let (model, spec) = cash_and_one(mu, sigma);
        let z = inv_norm_cdf(1.0 - eps).unwrap();
        let t = if z * sigma > mu - 1.0 { ((1.0 - 0.95) / (z * sigma - mu + 1.0)).min(1.0) } else { 1.0 };
        let want = 1.0 + t * (mu - 1.0);
        let r = solve_gaussian_exact(&model, &spec, eps, None).unwrap();
        assert!((r.objective - want).abs() <= 1e-6, "mu {mu} sigma {sigma} eps {eps}: {} vs {want}", r.objective);
        assert!(model.violation_probability(&r.x, 0.95) <= eps + 1e-7);
    }
}

#[test]
fn even_odds_picks_best_mean() {
    let model = GaussianModel::new(vec![1.0, 1.2, 1.1], vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.1]).unwrap();
    let spec = ChanceProgramSpec::new(0.95, model.mean().to_vec(), Some(0)).unwrap();
    let r = solve_gaussian_exact(&model, &spec, 0.5, None).unwrap();
    assert!((r.x[1] - 1.0).abs() < 1e-12);
    assert!(matches!(solve_gaussian_exact(&model, &spec, 0.6, None), Err(Error::InvalidArgument(_))));
    assert!(matches!(solve_gaussian_exact(&model, &spec, 0.0, None), Err(Error::InvalidArgument(_))));
}

/// Two risky assets, no cash: the weight on the better asset is one
/// variable, so the largest feasible value is found by bisection.
fn two_asset_oracle(model: &GaussianModel, alpha: f64, eps: f64) -> Option<f64> {
    let z = inv_norm_cdf(1.0 - eps).unwrap();
    let (hi_asset, lo_asset) = if model.mean()[0] >= model.mean()[1] { (0, 1) } else { (1, 0) };
    let point = |t: f64| {
        let mut x = vec![0.0; 2];
        x[hi_asset] = t;
        x[lo_asset] = 1.0 - t;
        x
    };
    let g = |t: f64| {
        let x = point(t);
        z * model.portfolio_sd(&x) - (model.mean().iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() - alpha)
    };
    let feasible = (0..=100_000).map(|i| i as f64 / 100_000.0).filter(|&t| g(t) <= 0.0).last()?;
    let (mut lo, mut hi) = (feasible, (feasible + 1e-5).min(1.0));
    if g(hi) <= 0.0 {
        lo = hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = point(lo);
    Some(model.mean().iter().zip(&x).map(|(a, b)| a * b).sum())
}

#[test]
fn two_asset_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..40 {
        let mean = vec![rng.random_range(1.0..1.15), rng.random_range(1.0..1.15)];
        let cov = random_cov(&mut rng, 2, 2).iter().map(|v| v * 0.05).collect();
        let model = GaussianModel::new(mean.clone(), cov).unwrap();
        let spec = ChanceProgramSpec::new(0.9, mean, None).unwrap();
        let eps = rng.random_range(0.01..0.3);
        match (two_asset_oracle(&model, 0.9, eps), solve_gaussian_exact(&model, &spec, eps, None)) {
            (Some(want), Ok(r)) => {
                assert!((r.objective - want).abs() <= 1e-6, "{} vs {want}", r.objective);
                checked += 1;
            }
            (None, Err(Error::Infeasible)) => {}
            (o, r) => panic!("oracle {o:?} vs solver {:?}", r.map(|r| r.objective)),
        }
    }
    assert!(checked > 20);
}

#[test]
fn semicontinuous_cone() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 6;
    let mut cov = random_cov(&mut rng, n, n).iter().map(|v| v * 0.01).collect::<Vec<_>>();
    for j in 0..n {
        cov[j] = 0.0;
        cov[j * n] = 0.0;
    }
    let mut mean: Vec<f64> = (0..n).map(|_| rng.random_range(1.02..1.15)).collect();
    mean[0] = 1.0;
    let model = GaussianModel::new(mean.clone(), cov).unwrap();
    let spec = ChanceProgramSpec::new(0.95, mean, Some(0)).unwrap();
    let semi = SemiContinuousSpec::for_portfolio(0.05, 0.3, n, Some(0)).unwrap();
    let plain = solve_gaussian_exact(&model, &spec, 0.05, None).unwrap();
    let r = solve_gaussian_exact(&model, &spec, 0.05, Some(&semi)).unwrap();
    assert!(r.objective <= plain.objective + 1e-9);
    assert!(model.violation_probability(&r.x, 0.95) <= 0.05 + 1e-6);
    for &j in &semi.columns {
        let v = r.x[j];
        assert!(v.abs() <= 1e-7 || (0.05 - 1e-7..=0.3 + 1e-7).contains(&v), "x[{j}] = {v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wider_spread_never_helps(seed in 0u64..10_000, t in 1.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4;
        let mut cov = random_cov(&mut rng, n, n).iter().map(|v| v * 0.01).collect::<Vec<_>>();
        for j in 0..n {
            cov[j] = 0.0;
            cov[j * n] = 0.0;
        }
        let mut mean: Vec<f64> = (0..n).map(|_| rng.random_range(1.02..1.15)).collect();
        mean[0] = 1.0;
        let spec = ChanceProgramSpec::new(0.95, mean.clone(), Some(0)).unwrap();
        let base = GaussianModel::new(mean.clone(), cov.clone()).unwrap();
        let wide = GaussianModel::new(mean, cov.iter().map(|v| v * t * t).collect()).unwrap();
        let a = solve_gaussian_exact(&base, &spec, 0.05, None).unwrap().objective;
        let b = solve_gaussian_exact(&wide, &spec, 0.05, None).unwrap().objective;
        prop_assert!(b <= a + 1e-7, "{} > {}", b, a);
    }

    #[test]
    fn quantile_is_antisymmetric(p in 1e-6f64..0.5) {
        let q = inv_norm_cdf(p).unwrap();
        let r = inv_norm_cdf(1.0 - p).unwrap();
        // 1 - p is rounded, so compare through the density.
        prop_assert!((q + r).abs() <= 1e-15 / (-(q * q) / 2.0).exp() + 1e-12);
    }
}
