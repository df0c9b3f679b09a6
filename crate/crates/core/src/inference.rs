//! Posterior summaries, kernel density estimates, Savage-Dickey Bayes factors
//! and marginal group-mean contrasts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lni::logistic_normal_mean;
use crate::links::LinkFunction;
use crate::model::{dot, ModelSpec, NormalPrior};
use crate::sampler::ChainOutput;

/// Mean, standard deviation and upper tail areas of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `(threshold, fraction of draws above it)`.
    pub tail_areas: Vec<(f64, f64)>,
}

impl PosteriorSummary {
    pub fn new(name: impl Into<String>, samples: &[f64], thresholds: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("cannot summarize an empty sample"));
        }
        let (mean, sd) = mean_sd(samples);
        Ok(PosteriorSummary {
            name: name.into(),
            mean,
            sd,
            tail_areas: thresholds.iter().map(|&t| (t, tail_area(samples, t))).collect(),
        })
    }
}

/// Summaries of every column of a chain, pooled over chains.
pub fn summarize_chains(chains: &[ChainOutput], thresholds: &[f64]) -> Result<Vec<PosteriorSummary>> {
    let first = chains.first().ok_or_else(|| Error::invalid("no chains to summarize"))?;
    first
        .column_names()
        .iter()
        .map(|name| {
            let pooled: Vec<f64> = chains
                .iter()
                .flat_map(|c| c.series(name).unwrap_or_default())
                .collect();
            PosteriorSummary::new(name.clone(), &pooled, thresholds)
        })
        .collect()
}

/// Sample mean and standard deviation (divisor `n - 1`).
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fraction of samples strictly above `threshold`.
pub fn tail_area(samples: &[f64], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&v| v > threshold).count() as f64 / samples.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::invalid(format!(
            "density estimation needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite sample".into()));
    }
    let (_, sd) = mean_sd(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian-kernel density estimate at `point` with bandwidth `h`.
pub fn kde_with_bandwidth(samples: &[f64], point: f64, h: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    samples
        .iter()
        .map(|&x| {
            let z = (point - x) / h;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * norm
}

/// Gaussian-kernel density estimate at `point` with Silverman's bandwidth.
pub fn kde_at(samples: &[f64], point: f64) -> Result<f64> {
    let h = silverman_bandwidth(samples)?;
    Ok(kde_with_bandwidth(samples, point, h))
}

/// Density estimate on `n` equally spaced points spanning the sample range
/// padded by three bandwidths.
pub fn density_curve(samples: &[f64], n: usize) -> Result<Vec<(f64, f64)>> {
    let h = silverman_bandwidth(samples)?;
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let n = n.max(2);
    Ok((0..n)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (n - 1) as f64;
            (x, kde_with_bandwidth(samples, x, h))
        })
        .collect())
}

/// Savage-Dickey Bayes factor for `H0: theta = at`: posterior density over
/// prior density at `at`.
pub fn savage_dickey_bf(samples: &[f64], prior: &NormalPrior, at: f64) -> Result<f64> {
    NormalPrior::new(prior.mean, prior.variance)?;
    Ok(kde_at(samples, at)? / prior.pdf(at))
}

/// Bayes factor with its sensitivity to a 25% narrower and wider bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorReport {
    pub value: f64,
    pub bandwidth: f64,
    pub narrow: f64,
    pub wide: f64,
}

pub fn savage_dickey_report(samples: &[f64], prior: &NormalPrior, at: f64) -> Result<BayesFactorReport> {
    NormalPrior::new(prior.mean, prior.variance)?;
    let h = silverman_bandwidth(samples)?;
    let density = prior.pdf(at);
    let bf = |h: f64| kde_with_bandwidth(samples, at, h) / density;
    Ok(BayesFactorReport {
        value: bf(h),
        bandwidth: h,
        narrow: bf(0.75 * h),
        wide: bf(1.25 * h),
    })
}

/// Covariates of one arm of a contrast and the variance parameters whose sum
/// is the random-effect variance of that arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastArm {
    pub covariates: Vec<f64>,
    pub variance_index: Vec<usize>,
}

/// Per-draw difference of population-averaged means `E(Y | x_a) - E(Y | x_b)`.
///
/// Adjusted models use `h(x^T beta)` directly. Unadjusted models integrate
/// `h(x^T beta + u)` over `u ~ N(0, tau^2)`: exactly for the logit link, by
/// seeded Monte Carlo of size `mc_size` otherwise.
pub fn group_contrast(
    spec: &ModelSpec,
    chain: &ChainOutput,
    a: &ContrastArm,
    b: &ContrastArm,
    mc_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    for arm in [a, b] {
        if arm.covariates.len() != spec.p() {
            return Err(Error::invalid("contrast covariates do not match the fixed effects"));
        }
        if arm.variance_index.iter().any(|&k| k >= spec.n_variances()) {
            return Err(Error::invalid("contrast refers to an unknown variance parameter"));
        }
    }
    if chain.draws.is_empty() {
        return Err(Error::invalid("chain has no draws"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normals: Vec<f64> = Vec::new();
    let needs_mc = !spec.marginally_interpretable && spec.link != LinkFunction::Logit;
    if needs_mc {
        if mc_size == 0 {
            return Err(Error::invalid("Monte Carlo size must be positive"));
        }
        normals = (0..mc_size).map(|_| rng.sample(StandardNormal)).collect();
    }
    let mean = |beta: &[f64], log_var: &[f64], arm: &ContrastArm| -> Result<f64> {
        let kappa = dot(&arm.covariates, beta);
        if spec.marginally_interpretable {
            return spec.link.inverse(kappa);
        }
        let tau2: f64 = arm.variance_index.iter().map(|&k| log_var[k].exp()).sum();
        if spec.link == LinkFunction::Logit {
            return Ok(logistic_normal_mean(kappa, tau2));
        }
        let tau = tau2.sqrt();
        let total: f64 = normals
            .iter()
            .map(|z| spec.link.inverse_unchecked(kappa + tau * z))
            .sum();
        let m = total / normals.len() as f64;
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::Numeric("non-finite Monte Carlo marginal mean".into()))
        }
    };
    chain
        .draws
        .iter()
        .map(|d| Ok(mean(&d.beta, &d.log_var, a)? - mean(&d.beta, &d.log_var, b)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Family, LevelSpec, ParamState, VarianceParam};
    use crate::sampler::{BlockStats, McmcConfig, ProposalScales};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn kde_recovers_normal_density() {
        let x = normals(1_000_000, 1);
        let d = kde_at(&x, 0.0).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((d / exact - 1.0).abs() < 0.02, "{d}");
    }

    #[test]
    fn kde_is_translation_equivariant_and_decays() {
        let x = normals(1_000, 2);
        let shifted: Vec<f64> = x.iter().map(|v| v + 3.5).collect();
        let a = kde_at(&x, 0.3).unwrap();
        let b = kde_at(&shifted, 3.8).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert!(kde_at(&x, 10.0 * mean_sd(&x).1 + 10.0).unwrap() <= 1e-6);
    }

    #[test]
    fn degenerate_samples_are_rejected() {
        assert!(matches!(kde_at(&[1.0; 500], 1.0), Err(Error::Degenerate(_))));
        assert!(kde_at(&[1.0; 10], 1.0).is_err());
    }

    #[test]
    fn bayes_factor_of_prior_draws_is_one() {
        let prior = NormalPrior::new(0.0, 10.0).unwrap();
        let x: Vec<f64> = normals(200_000, 3).iter().map(|z| z * 10f64.sqrt()).collect();
        let bf = savage_dickey_bf(&x, &prior, 0.0).unwrap();
        assert!((bf - 1.0).abs() < 0.05, "{bf}");
        let r = savage_dickey_report(&x, &prior, 0.0).unwrap();
        assert_eq!(r.value, bf);
        assert!(r.narrow > 0.0 && r.wide > 0.0);
    }

    fn chain_with(draws: Vec<ParamState>) -> ChainOutput {
        ChainOutput {
            beta_names: vec!["b0".into(), "b1".into()],
            variance_names: vec!["s1".into(), "s2".into()],
            draws,
            beta: BlockStats::default(),
            alpha: BlockStats::default(),
            u: BlockStats::default(),
            scales: ProposalScales { beta: vec![1.0; 2], beta_correlation: None, log_var: vec![1.0; 2], u: vec![1.0] },
            wall_time_secs: 0.0,
            config: McmcConfig::new(2, 1, 1, 0),
            warnings: vec![],
        }
    }

    fn logit_spec(mi: bool) -> ModelSpec {
        ModelSpec::new(
            Family::Binomial,
            LinkFunction::Logit,
            vec!["b0".into(), "b1".into()],
            vec![NormalPrior { mean: 0.0, variance: 25.0 }, NormalPrior { mean: 0.0, variance: 10.0 }],
            vec![
                VarianceParam { name: "s1".into(), prior: NormalPrior { mean: -0.5, variance: 1.0 } },
                VarianceParam { name: "s2".into(), prior: NormalPrior { mean: -0.5, variance: 1.0 } },
            ],
            vec![LevelSpec { name: "litter".into(), stratum: vec![0, 1] }],
            mi,
        )
        .unwrap()
    }

    #[test]
    fn contrast_signs_follow_the_treatment_coefficient() {
        let draws: Vec<ParamState> = normals(400, 4)
            .chunks(2)
            .map(|z| ParamState { beta: vec![1.5 + 0.2 * z[0], z[1]], log_var: vec![0.4, -0.7], u: vec![] })
            .collect();
        let chain = chain_with(draws);
        let treated = ContrastArm { covariates: vec![1.0, 1.0], variance_index: vec![0] };
        let control = ContrastArm { covariates: vec![1.0, -1.0], variance_index: vec![1] };
        let c = group_contrast(&logit_spec(true), &chain, &treated, &control, 0, 0).unwrap();
        for (d, v) in chain.draws.iter().zip(&c) {
            assert_eq!(d.beta[1] > 0.0, *v > 0.0);
        }
        assert!((tail_area(&c, 0.0) - tail_area(&chain.beta_series(1), 0.0)).abs() < 1e-15);
        let same = group_contrast(&logit_spec(true), &chain, &treated, &treated, 0, 0).unwrap();
        assert!(same.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unadjusted_contrast_integrates_the_random_effect() {
        let chain = chain_with(vec![ParamState { beta: vec![1.0, 0.5], log_var: vec![0.0, 0.0], u: vec![] }]);
        let treated = ContrastArm { covariates: vec![1.0, 1.0], variance_index: vec![0] };
        let control = ContrastArm { covariates: vec![1.0, -1.0], variance_index: vec![1] };
        let exact = group_contrast(&logit_spec(false), &chain, &treated, &control, 0, 0).unwrap()[0];
        let probit = ModelSpec { link: LinkFunction::Probit, ..logit_spec(false) };
        let mc = group_contrast(&probit, &chain, &treated, &control, 200_000, 7).unwrap()[0];
        // probit-normal marginal means are Phi(kappa / sqrt(1 + tau^2))
        let phi = |k: f64| crate::links::normal_cdf(k / 2f64.sqrt());
        assert!((mc - (phi(1.5) - phi(0.5))).abs() < 3e-3, "{mc}");
        let plain = crate::links::logistic(1.5) - crate::links::logistic(0.5);
        assert!(exact.abs() < plain.abs());
    }
}
