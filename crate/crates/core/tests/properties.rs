use miglmm::adjust::{adjust, marginal_mean_check, MarginalOracle};
use miglmm::law::ScalarLaw;
use miglmm::links::{logistic, LinkFunction};
use miglmm::lni::{logistic_normal_mean, phi_hybrid};
use miglmm::model::{Dataset, Family, LevelSpec, ModelSpec, NormalPrior, VarianceParam};
use miglmm::oracle;
use proptest::prelude::*;

fn bounded_link() -> impl Strategy<Value = LinkFunction> {
    prop_oneof![Just(LinkFunction::Logit), Just(LinkFunction::Probit), Just(LinkFunction::CLogLog)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bounded_links_invert(link in bounded_link(), eta in -8.0..3.0f64) {
        let mu = link.inverse(eta).unwrap();
        prop_assert!(mu > 0.0 && mu < 1.0);
        prop_assert!((link.apply(mu).unwrap() - eta).abs() <= 1e-9 * (1.0 + eta.abs()));
    }

    #[test]
    fn hybrid_is_symmetric_and_satisfies_the_recursion(mu in 0.0..60.0f64, sigma in 0.05..4.0f64) {
        let s2 = sigma * sigma;
        prop_assert_eq!(phi_hybrid(-mu, s2) + phi_hybrid(mu, s2), 1.0);
        let lhs = phi_hybrid(mu + s2, s2);
        let rhs = (-mu - 0.5 * s2).exp() * (1.0 - phi_hybrid(mu, s2));
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn hybrid_decreases_in_mu(mu in -30.0..30.0f64, sigma in 0.05..4.0f64) {
        let s2 = sigma * sigma;
        prop_assert!(phi_hybrid(mu + 1e-3, s2) < phi_hybrid(mu, s2));
    }

    #[test]
    fn hybrid_matches_the_reference(mu in -20.0..20.0f64, sigma in 0.05..4.0f64) {
        let s2 = sigma * sigma;
        prop_assert!((phi_hybrid(mu, s2) - oracle::phi_gold(mu, s2)).abs() <= 1e-8);
    }

    #[test]
    fn bounded_adjustments_preserve_the_marginal_mean(link in bounded_link(), kappa in -4.0..4.0f64, tau2 in 0.01..9.0f64) {
        let law = ScalarLaw::normal(tau2);
        let a = adjust(link, kappa, &law).unwrap();
        let m = marginal_mean_check(link, kappa, &law, &a, MarginalOracle::Quadrature { order: 1000 }).unwrap();
        prop_assert!((m - link.inverse(kappa).unwrap()).abs() <= 1e-8);
        let independent = oracle::adjustment(link, kappa, tau2).unwrap();
        prop_assert!((a.value - independent).abs() <= 1e-7 * (1.0 + independent.abs()), "{} vs {}", a.value, independent);
    }

    #[test]
    fn unbounded_closed_forms(kappa in 0.1..20.0f64, tau2 in 0.0..9.0f64) {
        let law = ScalarLaw::normal(tau2);
        prop_assert_eq!(adjust(LinkFunction::Log, kappa, &law).unwrap().value, -0.5 * tau2);
        prop_assert_eq!(adjust(LinkFunction::Identity, kappa, &law).unwrap().value, 0.0);
        let probit = adjust(LinkFunction::Probit, kappa, &law).unwrap().value;
        prop_assert!((probit - ((1.0 + tau2).sqrt() - 1.0) * kappa).abs() <= 1e-14 * (1.0 + kappa));
        if kappa * kappa > tau2 {
            let sqrt = adjust(LinkFunction::Sqrt, kappa, &law).unwrap().value;
            prop_assert!((sqrt - (-kappa + (kappa * kappa - tau2).sqrt())).abs() <= 1e-14 * (1.0 + kappa));
        }
    }

    #[test]
    fn logistic_normal_mean_is_monotone_in_kappa(kappa in -10.0..10.0f64, tau2 in 0.0..16.0f64) {
        prop_assert!(logistic_normal_mean(kappa + 1e-3, tau2) > logistic_normal_mean(kappa, tau2));
    }
}

fn bernoulli_intercepts(mi: bool, y: &[f64]) -> (ModelSpec, Dataset) {
    let n = y.len();
    let spec = ModelSpec::new(
        Family::Bernoulli,
        LinkFunction::Logit,
        vec!["b0".into()],
        vec![NormalPrior { mean: 0.0, variance: 10.0 }],
        vec![VarianceParam { name: "s".into(), prior: NormalPrior { mean: 0.0, variance: 1.0 } }],
        vec![LevelSpec::shared("obs", n, 0)],
        mi,
    )
    .unwrap();
    let data = Dataset::new(y.to_vec(), None, vec![vec![1.0]; n], vec![(0..n).collect()]).unwrap();
    (spec, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // independent adjusted intercepts leave each Bernoulli margin at h(kappa)
    #[test]
    fn adjusted_bernoulli_margins_ignore_the_variance(
        kappa in -3.0..3.0f64,
        s2 in 0.05..6.0f64,
        y in proptest::collection::vec(0u8..2, 1..8),
    ) {
        let y: Vec<f64> = y.into_iter().map(f64::from).collect();
        let (spec, data) = bernoulli_intercepts(true, &y);
        let ll = oracle::exact_marginal_loglik_small(&spec, &data, &[kappa], &[s2]).unwrap();
        let glm: f64 = y.iter().map(|&v| if v > 0.0 { logistic(kappa).ln() } else { logistic(-kappa).ln() }).sum();
        prop_assert!((ll - glm).abs() <= 1e-8, "{} vs {}", ll, glm);
    }
}
