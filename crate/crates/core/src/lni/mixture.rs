//! Normal-CDF mixtures approximating the inverse logit.

use crate::error::{Error, Result};
use crate::links::{logistic, normal_cdf};

/// `h_k(z) = sum_i p_i Phi(z s_i)`, a k-component approximation of the
/// inverse logit that integrates against normal densities in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMixtureApprox {
    weights: Vec<f64>,
    scales: Vec<f64>,
}

/// Minimax k = 8 constants, sorted by scale. Produced by
/// `cargo run --release --example fit_logistic_mixture`; the achieved
/// maximum error on |z| <= 40 is 2.1086e-9.
const K8_WEIGHTS: [f64; 8] = [
    0.001_449_567_804_510_215_3,
    0.027_912_418_693_438_353,
    0.131_076_880_559_888_14,
    0.274_149_576_099_639_6,
    0.315_569_823_835_950_45,
    0.195_077_912_790_715_7,
    0.051_517_476_962_605_71,
    0.003_246_343_253_251_793_3,
];
const K8_SCALES: [f64; 8] = [
    0.238_212_616_404_621_96,
    0.308_904_252_235_823_4,
    0.396_313_345_093_819_9,
    0.508_135_425_264_738_2,
    0.650_732_166_567_349_8,
    0.830_791_313_823_434_7,
    1.059_523_971_300_012_6,
    1.365_340_806_844_448_8,
];

impl NormalMixtureApprox {
    pub fn new(weights: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != scales.len() {
            return Err(Error::invalid(
                "mixture needs matching, non-empty weight and scale lists",
            ));
        }
        if weights.iter().any(|&p| !(p > 0.0)) || scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("mixture weights and scales must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        Ok(NormalMixtureApprox { weights, scales })
    }

    /// The frozen eight-component minimax fit.
    pub fn logistic_k8() -> Self {
        NormalMixtureApprox {
            weights: K8_WEIGHTS.to_vec(),
            scales: K8_SCALES.to_vec(),
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// `h_k(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.scales)
            .map(|(p, s)| p * normal_cdf(z * s))
            .sum()
    }

    /// `E[h_k(W)]` for `W ~ Normal(xi, sigma2)`.
    pub fn normal_expectation(&self, xi: f64, sigma2: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.scales)
            .map(|(p, s)| p * normal_cdf(xi * s / (1.0 + sigma2 * s * s).sqrt()))
            .sum()
    }

    /// Largest `|h(z) - h_k(z)|` over `n` evenly spaced points of `[-half_width, half_width]`.
    pub fn max_error(&self, half_width: f64, n: usize) -> f64 {
        (0..n)
            .map(|i| -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64)
            .map(|z| (logistic(z) - self.eval(z)).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k8_invariants() {
        let m = NormalMixtureApprox::logistic_k8();
        assert_eq!(m.k(), 8);
        let total: f64 = m.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.scales().iter().all(|&s| s > 0.0));
        assert!(m.max_error(40.0, 160_001) <= 2.5e-9);
    }

    #[test]
    fn validation() {
        assert!(NormalMixtureApprox::new(vec![0.5, 0.5], vec![1.0]).is_err());
        assert!(NormalMixtureApprox::new(vec![0.6, 0.5], vec![1.0, 2.0]).is_err());
        assert!(NormalMixtureApprox::new(vec![1.0], vec![-1.0]).is_err());
        assert!(NormalMixtureApprox::new(vec![1.0], vec![0.6]).is_ok());
    }

    #[test]
    fn expectation_reduces_to_eval_at_zero_variance() {
        let m = NormalMixtureApprox::logistic_k8();
        for z in [-3.0, -0.2, 0.0, 1.7] {
            assert!((m.normal_expectation(z, 0.0) - m.eval(z)).abs() < 1e-16);
        }
    }
}
