use miglmm::cli::assets::{Case, Variant};
use miglmm::inference::mean_sd;
use miglmm::model::{log_likelihood, ParamState};
use miglmm::sampler::{iact, propose_beta_consistent, run_random_walk};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn random_walk_targets_a_correlated_normal() {
    // N(m, S) with unit variances and correlation 0.6
    let (m, rho) = ([1.0, -2.0], 0.6);
    let mut target = |x: &[f64]| {
        let (a, b) = (x[0] - m[0], x[1] - m[1]);
        -(a * a - 2.0 * rho * a * b + b * b) / (2.0 * (1.0 - rho * rho))
    };
    let out = run_random_walk(&mut target, &[0.0, 0.0], &[1.2, 1.2], 2_010_000, 10_000, 20, 11).unwrap();
    assert_eq!(out.draws.len(), 100_000);
    for j in 0..2 {
        let mut s: Vec<f64> = out.draws.iter().map(|d| d[j]).collect();
        let d = ks_distance(&mut s, |x| normal_cdf(x - m[j]));
        assert!(d <= 0.02, "coordinate {j}: KS distance {d}");
    }
    // the difference has variance 2 (1 - rho)
    let mut diff: Vec<f64> = out.draws.iter().map(|d| d[0] - d[1]).collect();
    let sd = (2.0 * (1.0 - rho)).sqrt();
    let d = ks_distance(&mut diff, |x| normal_cdf((x - 3.0) / sd));
    assert!(d <= 0.02, "difference: KS distance {d}");
}

#[test]
fn conjugate_normal_mean_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = (0..50).map(|_| 2.0 + rng.random::<f64>() - 0.5).collect();
    let (prior_mean, prior_var, noise_var) = (0.0, 10.0, 0.25);
    let mut target = |t: &[f64]| {
        let ll: f64 = y.iter().map(|v| -(v - t[0]).powi(2) / (2.0 * noise_var)).sum();
        ll - (t[0] - prior_mean).powi(2) / (2.0 * prior_var)
    };
    let post_prec = 1.0 / prior_var + y.len() as f64 / noise_var;
    let post_mean = (prior_mean / prior_var + y.iter().sum::<f64>() / noise_var) / post_prec;
    let out = run_random_walk(&mut target, &[0.0], &[0.15], 101_000, 1_000, 1, 3).unwrap();
    let series: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
    let (mean, sd) = mean_sd(&series);
    let se = sd * (iact(&series).unwrap() / series.len() as f64).sqrt();
    assert!((mean - post_mean).abs() <= 3.0 * se, "{mean} vs {post_mean} (se {se})");
    assert!((sd - post_prec.recip().sqrt()).abs() < 0.05 * sd);
}

#[test]
fn consistent_proposals_keep_the_epilepsy_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for variant in [Variant::Mi, Variant::Conventional] {
        let (spec, data) = Case::Epilepsy.build(variant).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let mut draw = |scale: f64, n: usize| -> Vec<f64> { (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect() };
            let state = ParamState {
                beta: draw(1.0, spec.p()),
                log_var: draw(2.0, spec.n_variances()),
                u: draw(0.8, spec.n_effects()),
            };
            let shifts = draw(0.3, spec.p());
            let beta_star: Vec<f64> = state.beta.iter().zip(&shifts).map(|(b, s)| b + s).collect();
            let candidate = propose_beta_consistent(&spec, &data, &state, &beta_star).unwrap();
            let before = log_likelihood(&spec, &data, &state).unwrap();
            let after = log_likelihood(&spec, &data, &candidate).unwrap();
            worst = worst.max((after - before).abs());
        }
        assert!(worst <= 1e-9, "{variant}: {worst}");
    }
}
