//! The logistic-normal integral `phi(mu, s2) = E[1 / (1 + e^W)]`, `W ~ Normal(mu, s2)`.
//!
//! Four evaluators are provided: Gauss-Hermite quadrature, the exact grid
//! recursion `phi(mu + s2, s2) = e^{-mu - s2/2} (1 - phi(mu, s2))` anchored at
//! `phi(0, s2) = 1/2`, the closed-form normal-mixture approximation, and the
//! hybrid that evaluates the mixture on `[0, s2)` and climbs the recursion.

mod mixfit;
mod mixture;

use std::sync::OnceLock;

pub use mixfit::{fit_logistic_mixture, MixtureFit, MixtureFitOptions};
pub use mixture::NormalMixtureApprox;

use crate::links::{logistic, softplus};
use crate::quadrature::{cached_rule, GaussHermiteRule};

/// Recursion steps beyond which the hybrid falls back to the direct mixture.
pub const MAX_RECURSION_STEPS: u64 = 1_000_000;

/// The shared eight-component mixture.
pub fn logistic_k8() -> &'static NormalMixtureApprox {
    static K8: OnceLock<NormalMixtureApprox> = OnceLock::new();
    K8.get_or_init(NormalMixtureApprox::logistic_k8)
}

/// Quadrature estimate of `phi(mu, sigma2)`.
pub fn phi_gh(mu: f64, sigma2: f64, rule: &GaussHermiteRule) -> f64 {
    rule.expect_normal(mu, sigma2, |w| logistic(-w))
}

/// Order-1000 quadrature evaluated in log space, so far-tail values stay
/// positive instead of underflowing.
pub fn phi_gold(mu: f64, sigma2: f64) -> f64 {
    cached_rule(1000)
        .ln_expect_normal_exp(mu, sigma2, |w| -softplus(w))
        .exp()
}

/// `phi(t * sigma2, sigma2)` by `t` applications of the recursion from `1/2`.
pub fn phi_grid_exact(t: u64, sigma2: f64) -> f64 {
    climb(0.5, 0.0, t, sigma2)
}

/// Applies the recursion `steps` times starting from `phi(r, sigma2) = value`.
fn climb(mut value: f64, r: f64, steps: u64, sigma2: f64) -> f64 {
    let half = 0.5 * sigma2;
    for j in 0..steps {
        let mu = r + j as f64 * sigma2;
        value = (-mu - half).exp() * (1.0 - value);
        if value == 0.0 {
            break;
        }
    }
    value
}

/// Mixture approximation of `phi(mu, sigma2)`, evaluated as `E[h_k(-W)]` so
/// that the normal-CDF arguments are negative for `mu > 0`.
pub fn phi_ms(mu: f64, sigma2: f64, approx: &NormalMixtureApprox) -> f64 {
    approx.normal_expectation(-mu, sigma2)
}

/// The hybrid evaluator.
pub fn phi_hybrid(mu: f64, sigma2: f64) -> f64 {
    if mu < 0.0 {
        return 1.0 - phi_hybrid(-mu, sigma2);
    }
    if !(sigma2 > 0.0) {
        return logistic(-mu);
    }
    if mu > 40.0 + 4.0 * sigma2 {
        return phi_tail(mu, sigma2);
    }
    let mut t = (mu / sigma2).floor();
    let mut r = mu - t * sigma2;
    if r >= sigma2 {
        t += 1.0;
        r = 0.0;
    }
    if r < 0.0 {
        r = 0.0;
    }
    if t > MAX_RECURSION_STEPS as f64 {
        return phi_ms(mu, sigma2, logistic_k8());
    }
    let base = if r == 0.0 {
        0.5
    } else {
        phi_ms(r, sigma2, logistic_k8())
    };
    climb(base, r, t as u64, sigma2)
}

/// Two-term asymptotic expansion `e^{-mu + s2/2} (1 - e^{-mu + 3 s2 / 2})`.
fn phi_tail(mu: f64, sigma2: f64) -> f64 {
    (-mu + 0.5 * sigma2 + (-(-mu + 1.5 * sigma2).exp()).ln_1p()).exp()
}

/// `E[h(kappa + V)]` for the inverse logit `h` and `V ~ Normal(0, tau2)`.
pub fn logistic_normal_mean(kappa: f64, tau2: f64) -> f64 {
    if tau2 <= 0.0 {
        return logistic(kappa);
    }
    phi_hybrid(-kappa, tau2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussHermiteRule;

    #[test]
    fn grid_values() {
        assert_eq!(phi_grid_exact(0, 3.7), 0.5);
        let e = (-0.5f64).exp();
        assert!((phi_grid_exact(1, 1.0) - e / 2.0).abs() < 1e-16);
        let two = (-1.5f64).exp() * (1.0 - e / 2.0);
        assert!((phi_grid_exact(2, 1.0) - two).abs() < 1e-16);
    }

    #[test]
    fn hybrid_on_grid_is_exact() {
        let v = phi_hybrid(5.0, 1.0);
        let g = phi_grid_exact(5, 1.0);
        assert!(((v - g) / g).abs() <= 1e-15);
    }

    #[test]
    fn hybrid_symmetry_is_exact() {
        for (mu, s2) in [(2.3, 1.0), (0.01, 0.2), (17.0, 9.0), (60.0, 2.0)] {
            assert_eq!(phi_hybrid(-mu, s2), 1.0 - phi_hybrid(mu, s2));
        }
    }

    #[test]
    fn gold_and_quadrature_agree_with_hybrid() {
        let rule = cached_rule(1000);
        assert!((phi_gh(0.0, 1.0, rule) - 0.5).abs() < 1e-13);
        assert!((phi_gh(1.0, 1.0, rule) - phi_hybrid(1.0, 1.0)).abs() < 1e-10);
        assert!((phi_gold(2.3, 1.0) - phi_hybrid(2.3, 1.0)).abs() < 1e-9);
        let small = phi_gh(2.0, 1e-10, rule);
        assert!((small - 0.119_202_922_022_117_57).abs() < 1e-6);
        let far = phi_gold(40.0, 1.0);
        assert!(far > 0.0 && far.is_finite());
    }

    #[test]
    fn mixture_examples() {
        let m = logistic_k8();
        assert!((phi_ms(0.0, 4.0, m) - 0.5).abs() < 2.5e-9);
        assert!((phi_ms(3.0, 1.0, m) - phi_gold(3.0, 1.0)).abs() < 2.5e-9);
        assert!((phi_ms(-3.0, 1.0, m) - (1.0 - phi_ms(3.0, 1.0, m))).abs() < 5e-9);
    }

    #[test]
    fn logistic_normal_mean_examples() {
        assert_eq!(logistic_normal_mean(0.0, 5.0), 0.5);
        assert_eq!(logistic_normal_mean(2.0, 0.0), logistic(2.0));
        // mpmath quadrature at 30 digits
        let v = logistic_normal_mean(1.0, 1.0);
        assert!((v - 0.696_734_670_143_683_3).abs() < 1e-9, "{v}");
    }

    #[test]
    fn tail_matches_gold_at_switch() {
        for s2 in [0.5, 2.0] {
            let mu = 40.0 + 4.0 * s2;
            let below = phi_hybrid(mu - 1e-9, s2);
            let above = phi_hybrid(mu + 1e-9, s2);
            let gold = phi_gold(mu, s2);
            assert!(((below - gold) / gold).abs() < 1e-8);
            assert!(((above - gold) / gold).abs() < 1e-8);
        }
    }

    #[test]
    fn small_order_rule_is_usable() {
        let rule = GaussHermiteRule::new(30).unwrap();
        assert!((phi_gh(0.7, 0.3, &rule) - phi_gold(0.7, 0.3)).abs() < 1e-10);
    }
}
