//! Random-effect distributions and their reduction to a scalar law for `d^T U`.

use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Mean-zero multivariate normal law with covariance `cov`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalLaw {
    cov: Vec<Vec<f64>>,
}

impl NormalLaw {
    pub fn new(cov: Vec<Vec<f64>>) -> Result<Self> {
        let q = cov.len();
        if q == 0 || cov.iter().any(|row| row.len() != q) {
            return Err(Error::invalid("covariance must be a non-empty square matrix"));
        }
        if cov.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance entries must be finite"));
        }
        for i in 0..q {
            for j in 0..i {
                let tol = 1e-12 * (1.0 + cov[i][j].abs());
                if (cov[i][j] - cov[j][i]).abs() > tol {
                    return Err(Error::invalid("covariance must be symmetric"));
                }
            }
        }
        // Positive semidefinite iff a slightly inflated copy factorizes.
        let scale = (0..q).map(|i| cov[i][i].abs()).fold(1.0, f64::max);
        let mut jittered = cov.clone();
        for (i, row) in jittered.iter_mut().enumerate() {
            row[i] += 1e-10 * scale;
        }
        if linalg::cholesky(&jittered).is_err() {
            return Err(Error::invalid("covariance must be positive semidefinite"));
        }
        Ok(NormalLaw { cov })
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(Error::invalid(format!(
                "variance must be finite and nonnegative, got {variance}"
            )));
        }
        Ok(NormalLaw {
            cov: vec![vec![variance]],
        })
    }

    pub fn dim(&self) -> usize {
        self.cov.len()
    }

    pub fn cov(&self) -> &[Vec<f64>] {
        &self.cov
    }
}

/// Finite mixture of univariate normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMixtureLaw {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl NormalMixtureLaw {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || variances.len() != m {
            return Err(Error::invalid(
                "mixture needs equally long, non-empty weight, mean and variance lists",
            ));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("mixture weights must sum to 1"));
        }
        if means.iter().any(|v| !v.is_finite())
            || variances.iter().any(|&v| !(v >= 0.0) || !v.is_finite())
        {
            return Err(Error::invalid(
                "mixture means must be finite and variances finite and nonnegative",
            ));
        }
        Ok(NormalMixtureLaw {
            weights,
            means,
            variances,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&w, &m), &v)| (w, m, v))
    }

    pub fn mean(&self) -> f64 {
        self.components().map(|(w, m, _)| w * m).sum()
    }

    pub fn is_centered(&self) -> bool {
        let scale = self.means.iter().fold(1.0_f64, |a, m| a.max(m.abs()));
        self.mean().abs() <= 1e-12 * scale
    }

    /// `Var(U)` for the mixture.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.components()
            .map(|(w, m, v)| w * (v + (m - mean).powi(2)))
            .sum()
    }

    /// Law of `d U`.
    pub fn scaled(&self, d: f64) -> NormalMixtureLaw {
        NormalMixtureLaw {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| d * m).collect(),
            variances: self.variances.iter().map(|v| d * d * v).collect(),
        }
    }

    /// `ln E[exp(t U)]`.
    pub fn ln_mgf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .components()
            .map(|(w, m, v)| w.ln() + t * m + 0.5 * t * t * v)
            .collect();
        crate::quadrature::log_sum_exp(&terms)
    }
}

/// Gamma law of `kappa + U` with the given shape and scale, used by the
/// reciprocal link in place of an additive shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaShiftLaw {
    pub shape: f64,
    pub scale: f64,
}

impl GammaShiftLaw {
    /// Mean of `kappa + U`.
    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    /// `E[U] = shape * scale - kappa`.
    pub fn effect_mean(&self, kappa: f64) -> f64 {
        self.mean() - kappa
    }

    /// `E[1 / (kappa + U)]`, finite for shape > 1.
    pub fn reciprocal_mean(&self) -> f64 {
        1.0 / (self.scale * (self.shape - 1.0))
    }
}

/// Distribution of a random effect vector `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RandomEffectLaw {
    Normal(NormalLaw),
    Mixture(NormalMixtureLaw),
}

/// Grouping, per-observation design vectors and law of one random-effect term.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectSpec {
    pub grouping: Vec<usize>,
    pub design: Vec<Vec<f64>>,
    pub law: RandomEffectLaw,
}

impl RandomEffectSpec {
    pub fn new(grouping: Vec<usize>, design: Vec<Vec<f64>>, law: RandomEffectLaw) -> Result<Self> {
        if grouping.len() != design.len() {
            return Err(Error::invalid("grouping and design must cover the same observations"));
        }
        let q = match &law {
            RandomEffectLaw::Normal(n) => n.dim(),
            RandomEffectLaw::Mixture(_) => 1,
        };
        if design.iter().any(|d| d.len() != q) {
            return Err(Error::invalid(format!("every design vector must have length {q}")));
        }
        Ok(RandomEffectSpec {
            grouping,
            design,
            law,
        })
    }

    /// Law of `d_i^T U` for observation `i`.
    pub fn reduced_law(&self, i: usize) -> Result<ScalarLaw> {
        let d = self
            .design
            .get(i)
            .ok_or_else(|| Error::invalid(format!("observation {i} out of range")))?;
        match &self.law {
            RandomEffectLaw::Normal(n) => Ok(ScalarLaw::Normal {
                tau2: effective_variance(d, n)?,
            }),
            RandomEffectLaw::Mixture(m) => Ok(ScalarLaw::Mixture(m.scaled(d[0]))),
        }
    }
}

/// `d^T Sigma d`.
pub fn effective_variance(d: &[f64], law: &NormalLaw) -> Result<f64> {
    if d.len() != law.dim() {
        return Err(Error::invalid(format!(
            "design vector has length {} but the covariance is {}x{}",
            d.len(),
            law.dim(),
            law.dim()
        )));
    }
    let cov = law.cov();
    let mut total = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            total += d[i] * cov[i][j] * d[j];
        }
    }
    Ok(total.max(0.0))
}

/// The scalar law of `d^T U` that every adjustment depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarLaw {
    Normal { tau2: f64 },
    Mixture(NormalMixtureLaw),
}

impl ScalarLaw {
    pub fn normal(tau2: f64) -> Self {
        ScalarLaw::Normal { tau2 }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ScalarLaw::Normal { .. } => 0.0,
            ScalarLaw::Mixture(m) => m.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ScalarLaw::Normal { tau2 } => *tau2,
            ScalarLaw::Mixture(m) => m.variance(),
        }
    }

    pub fn is_centered(&self) -> bool {
        match self {
            ScalarLaw::Normal { .. } => true,
            ScalarLaw::Mixture(m) => m.is_centered(),
        }
    }

    /// `(weight, mean, variance)` of each normal component.
    pub fn components(&self) -> Vec<(f64, f64, f64)> {
        match self {
            ScalarLaw::Normal { tau2 } => vec![(1.0, 0.0, *tau2)],
            ScalarLaw::Mixture(m) => m.components().collect(),
        }
    }

    /// Stable fingerprint for memo keys.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (w, m, v) in self.components() {
            w.to_bits().hash(&mut h);
            m.to_bits().hash(&mut h);
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_variance_examples() {
        let id = NormalLaw::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(effective_variance(&[1.0, 1.0], &id).unwrap(), 2.0);
        let s = NormalLaw::scalar(0.7).unwrap();
        assert_eq!(effective_variance(&[1.0], &s).unwrap(), 0.7);
        let ones = NormalLaw::new(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(effective_variance(&[1.0, -1.0], &ones).unwrap(), 0.0);
        assert!(effective_variance(&[1.0], &id).is_err());
    }

    #[test]
    fn covariance_validation() {
        assert!(NormalLaw::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]]).is_err());
        assert!(NormalLaw::new(vec![vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
        assert!(NormalLaw::scalar(-1.0).is_err());
    }

    #[test]
    fn mixture_moments() {
        let m = NormalMixtureLaw::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.25, 0.25]).unwrap();
        assert!(m.is_centered());
        assert!((m.variance() - 1.25).abs() < 1e-15);
        assert!((m.ln_mgf(1.0) - (1.0f64.cosh().ln() + 0.125)).abs() < 1e-15);
        let off = NormalMixtureLaw::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(!off.is_centered());
        assert!(NormalMixtureLaw::new(vec![0.4, 0.4], vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn gamma_shift_moments() {
        let g = GammaShiftLaw { shape: 2.0, scale: 1.0 };
        assert_eq!(g.effect_mean(1.0), 1.0);
        assert_eq!(g.reciprocal_mean(), 1.0);
    }

    #[test]
    fn reduced_law_scales_mixture() {
        let m = NormalMixtureLaw::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let spec = RandomEffectSpec::new(vec![0], vec![vec![2.0]], RandomEffectLaw::Mixture(m)).unwrap();
        match spec.reduced_law(0).unwrap() {
            ScalarLaw::Mixture(s) => assert_eq!(s.means(), &[-2.0, 2.0]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
