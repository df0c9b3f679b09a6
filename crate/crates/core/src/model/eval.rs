use crate::adjust::{Adjuster, AdjustmentMemo, StandardAdjuster};
use crate::error::{Error, Result};
use crate::law::ScalarLaw;
use crate::links::LinkFunction;

use super::{Dataset, Family, ModelSpec, ParamState};

/// Per-observation fixed part `kappa_i = x_i^T beta`, total random-effect
/// variance `tau2_i` and adjustment `a_i` for one value of `(beta, alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationParts {
    pub kappa: Vec<f64>,
    pub tau2: Vec<f64>,
    pub adj: Vec<f64>,
}

impl ObservationParts {
    /// Computes all parts, requesting each distinct adjustment once.
    pub fn compute(
        spec: &ModelSpec,
        data: &Dataset,
        beta: &[f64],
        log_var: &[f64],
        adjuster: &dyn Adjuster,
    ) -> Result<Self> {
        if beta.iter().chain(log_var).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite fixed effect or log-variance".into()));
        }
        let variances: Vec<f64> = log_var.iter().map(|v| v.exp()).collect();
        let n = data.n();
        let mut kappa = Vec::with_capacity(n);
        let mut tau2 = Vec::with_capacity(n);
        let mut adj = Vec::with_capacity(n);
        let mut memo = AdjustmentMemo::new(adjuster);
        for i in 0..n {
            let k = dot(&data.x[i], beta);
            let t = obs_tau2(spec, data, &variances, i);
            let a = if spec.marginally_interpretable {
                memo.get(spec.link, k, &ScalarLaw::Normal { tau2: t })?
            } else {
                0.0
            };
            kappa.push(k);
            tau2.push(t);
            adj.push(a);
        }
        Ok(ObservationParts { kappa, tau2, adj })
    }

    /// Linear predictor of observation `i` given the random-effect sum.
    #[inline]
    pub fn eta(&self, i: usize, effect_sum: f64) -> f64 {
        self.kappa[i] + effect_sum + self.adj[i]
    }
}

/// Inner product of equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_l sigma^2_{stratum_l(g_l(i))}`.
pub(crate) fn obs_tau2(spec: &ModelSpec, data: &Dataset, variances: &[f64], i: usize) -> f64 {
    spec.levels
        .iter()
        .zip(&data.groups)
        .map(|(level, groups)| variances[level.stratum[groups[i]]])
        .sum()
}

/// `sum_l u_{l, g_l(i)}`.
pub(crate) fn effect_sum(data: &Dataset, offsets: &[usize], u: &[f64], i: usize) -> f64 {
    data.groups
        .iter()
        .zip(offsets)
        .map(|(groups, off)| u[off + groups[i]])
        .sum()
}

fn ln_choose(m: f64, y: f64) -> f64 {
    libm::lgamma(m + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(m - y + 1.0)
}

/// `log f(y | eta)`; negative infinity when the mean leaves its valid range.
pub fn obs_log_density(family: Family, link: LinkFunction, y: f64, trials: f64, eta: f64) -> f64 {
    obs_log_kernel(family, link, y, trials, eta) + obs_log_constant(family, y, trials)
}

/// The part of `log f(y | eta)` that does not depend on `eta`.
pub(crate) fn obs_log_constant(family: Family, y: f64, trials: f64) -> f64 {
    match family {
        Family::Bernoulli => 0.0,
        Family::Binomial => ln_choose(trials, y),
        Family::Poisson => -libm::lgamma(y + 1.0),
    }
}

/// `log f(y | eta)` up to [`obs_log_constant`].
pub(crate) fn obs_log_kernel(family: Family, link: LinkFunction, y: f64, trials: f64, eta: f64) -> f64 {
    if eta.is_nan() {
        return f64::NEG_INFINITY;
    }
    match family {
        Family::Bernoulli | Family::Binomial => {
            let Some((ln_h, ln_q)) = link.ln_inverse_pair(eta) else {
                return f64::NEG_INFINITY;
            };
            let m = if family == Family::Bernoulli { 1.0 } else { trials };
            let mut ll = 0.0;
            if y > 0.0 {
                ll += y * ln_h;
            }
            if m - y > 0.0 {
                ll += (m - y) * ln_q;
            }
            ll
        }
        Family::Poisson => {
            let (mu, ln_mu) = match link {
                LinkFunction::Log => (eta.exp(), eta),
                LinkFunction::Sqrt if eta >= 0.0 => (eta * eta, 2.0 * eta.ln()),
                LinkFunction::Identity if eta >= 0.0 => (eta, eta.ln()),
                _ => return f64::NEG_INFINITY,
            };
            let ll = if y > 0.0 { y * ln_mu - mu } else { -mu };
            if ll.is_nan() {
                f64::NEG_INFINITY
            } else {
                ll
            }
        }
    }
}

/// `E[Y_i | U = u]` using the standard adjustment table.
pub fn conditional_mean(spec: &ModelSpec, data: &Dataset, state: &ParamState, i: usize) -> Result<f64> {
    conditional_mean_with(spec, data, state, i, &StandardAdjuster)
}

pub fn conditional_mean_with(
    spec: &ModelSpec,
    data: &Dataset,
    state: &ParamState,
    i: usize,
    adjuster: &dyn Adjuster,
) -> Result<f64> {
    spec.check_state(state)?;
    if i >= data.n() {
        return Err(Error::invalid(format!("observation {i} out of range")));
    }
    let kappa = dot(&data.x[i], &state.beta);
    let variances = state.variances();
    let tau2 = obs_tau2(spec, data, &variances, i);
    let adj = if spec.marginally_interpretable {
        adjuster.shift(spec.link, kappa, &ScalarLaw::Normal { tau2 })?
    } else {
        0.0
    };
    let eta = kappa + effect_sum(data, &spec.level_offsets(), &state.u, i) + adj;
    spec.link.inverse(eta)
}

/// `sum_i log f(y_i | mu_i)` using the standard adjustment table.
pub fn log_likelihood(spec: &ModelSpec, data: &Dataset, state: &ParamState) -> Result<f64> {
    log_likelihood_with(spec, data, state, &StandardAdjuster)
}

pub fn log_likelihood_with(
    spec: &ModelSpec,
    data: &Dataset,
    state: &ParamState,
    adjuster: &dyn Adjuster,
) -> Result<f64> {
    spec.check_state(state)?;
    let parts = match ObservationParts::compute(spec, data, &state.beta, &state.log_var, adjuster) {
        Ok(parts) => parts,
        Err(Error::ModelUndefined { .. }) => return Ok(f64::NEG_INFINITY),
        Err(e) => return Err(e),
    };
    let offsets = spec.level_offsets();
    let mut total = 0.0;
    for i in 0..data.n() {
        let eta = parts.eta(i, effect_sum(data, &offsets, &state.u, i));
        total += obs_log_density(spec.family, spec.link, data.y[i], data.trials_of(i), eta);
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    Ok(total)
}

/// Priors on `beta` and `log sigma^2` plus the normal density of every random effect.
pub fn log_prior(spec: &ModelSpec, state: &ParamState) -> f64 {
    let mut total: f64 = spec
        .beta_prior
        .iter()
        .zip(&state.beta)
        .map(|(p, b)| p.ln_pdf(*b))
        .sum();
    total += spec
        .variances
        .iter()
        .zip(&state.log_var)
        .map(|(v, lv)| v.prior.ln_pdf(*lv))
        .sum::<f64>();
    let offsets = spec.level_offsets();
    for (level, off) in spec.levels.iter().zip(offsets) {
        for (g, &s) in level.stratum.iter().enumerate() {
            total += normal_ln_pdf(state.u[off + g], state.log_var[s]);
        }
    }
    total
}

/// `log N(x; 0, exp(log_var))`.
#[inline]
pub(crate) fn normal_ln_pdf(x: f64, log_var: f64) -> f64 {
    -0.5 * (std::f64::consts::TAU.ln() + log_var) - 0.5 * x * x * (-log_var).exp()
}

/// Population-averaged mean `h(x^T beta)` of an adjusted model.
pub fn marginal_mean(spec: &ModelSpec, beta: &[f64], x: &[f64]) -> Result<f64> {
    if !spec.marginally_interpretable {
        return Err(Error::Unsupported(
            "the unadjusted model has no closed-form marginal mean; integrate over the random effects"
                .into(),
        ));
    }
    if beta.len() != x.len() {
        return Err(Error::invalid("covariate and coefficient lengths differ"));
    }
    spec.link.inverse(dot(x, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevelSpec, NormalPrior, VarianceParam};

    fn poisson_spec(mi: bool) -> (ModelSpec, Dataset) {
        let spec = ModelSpec::new(
            Family::Poisson,
            LinkFunction::Log,
            vec!["b0".into()],
            vec![NormalPrior { mean: 0.0, variance: 100.0 }],
            vec![VarianceParam {
                name: "sigma".into(),
                prior: NormalPrior { mean: -1.0, variance: 2.0 },
            }],
            vec![LevelSpec::shared("g", 1, 0)],
            mi,
        )
        .unwrap();
        let data = Dataset::new(vec![2.0], None, vec![vec![1.0]], vec![vec![0]]).unwrap();
        (spec, data)
    }

    #[test]
    fn conditional_mean_examples() {
        let state = ParamState { beta: vec![1.0], log_var: vec![0.0], u: vec![0.3] };
        let (on, data) = poisson_spec(true);
        let m = conditional_mean(&on, &data, &state, 0).unwrap();
        assert!((m - 0.8f64.exp()).abs() < 1e-12);
        let (off, data) = poisson_spec(false);
        let m = conditional_mean(&off, &data, &state, 0).unwrap();
        assert!((m - 1.3f64.exp()).abs() < 1e-12);

        let spec = ModelSpec::new(
            Family::Binomial,
            LinkFunction::Logit,
            vec!["b0".into()],
            vec![NormalPrior { mean: 0.0, variance: 25.0 }],
            vec![VarianceParam { name: "s".into(), prior: NormalPrior { mean: 0.0, variance: 1.0 } }],
            vec![LevelSpec::shared("g", 1, 0)],
            true,
        )
        .unwrap();
        let data = Dataset::new(vec![1.0], Some(vec![2.0]), vec![vec![1.0]], vec![vec![0]]).unwrap();
        let state = ParamState { beta: vec![0.0], log_var: vec![1.3], u: vec![0.0] };
        assert_eq!(conditional_mean(&spec, &data, &state, 0).unwrap(), 0.5);
    }

    #[test]
    fn density_examples() {
        use LinkFunction::*;
        assert!((obs_log_density(Family::Bernoulli, Logit, 1.0, 1.0, 0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((obs_log_density(Family::Poisson, Log, 0.0, 1.0, 2.0f64.ln()) + 2.0).abs() < 1e-15);
        assert!((obs_log_density(Family::Binomial, Logit, 1.0, 2.0, 0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(obs_log_density(Family::Poisson, Sqrt, 1.0, 1.0, -0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_examples() {
        let (spec, _) = poisson_spec(true);
        let state = ParamState { beta: vec![0.0], log_var: vec![-1.0], u: vec![0.0] };
        let base = log_prior(&spec, &state);
        let expected = NormalPrior { mean: 0.0, variance: 100.0 }.ln_pdf(0.0)
            + NormalPrior { mean: -1.0, variance: 2.0 }.ln_pdf(-1.0)
            + normal_ln_pdf(0.0, -1.0);
        assert!((base - expected).abs() < 1e-14);
        let sigma = (-0.5f64).exp();
        let shifted = ParamState { u: vec![sigma], ..state };
        assert!((log_prior(&spec, &shifted) - base + 0.5).abs() < 1e-14);
    }

    #[test]
    fn marginal_mean_examples() {
        let (spec, _) = poisson_spec(true);
        assert!((marginal_mean(&spec, &[1.0], &[1.0]).unwrap() - 1.0f64.exp()).abs() < 1e-15);
        assert!(marginal_mean(&spec.with_adjustment(false), &[1.0], &[1.0]).is_err());
    }
}
