//! Reference evaluators for tests and accuracy gates.
//!
//! Nothing here calls the logistic-normal engine, the adjustment solvers or
//! the sampler: only link functions, the raw Gauss-Hermite rule and linear
//! algebra. Integrals are evaluated in log space where tails matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::law::RandomEffectLaw;
use crate::linalg;
use crate::links::{softplus, LinkFunction};
use crate::model::{Dataset, Family, ModelSpec};
use crate::quadrature::cached_rule;

fn ln_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `ln E[exp(g(W))]`, `W ~ N(mean, var)`, by order-`n` Gauss-Hermite.
fn ln_gh_expect(order: usize, mean: f64, var: f64, g: impl Fn(f64) -> f64) -> f64 {
    let rule = cached_rule(order);
    let s = (2.0 * var).sqrt();
    let ln_norm = -0.5 * std::f64::consts::PI.ln();
    ln_sum_exp(
        rule.nodes()
            .iter()
            .zip(rule.log_weights())
            .map(|(x, lw)| lw + ln_norm + g(mean + s * x)),
    )
}

/// Logistic-normal integral `E[1 / (1 + e^W)]` by order-1000 Gauss-Hermite in log space.
pub fn phi_gold(mu: f64, sigma2: f64) -> f64 {
    if sigma2 == 0.0 {
        return (-softplus(mu)).exp();
    }
    ln_gh_expect(1000, mu, sigma2, |w| -softplus(w)).exp()
}

/// The same integral by the trapezoid rule in `z = (w - mu) / sigma` with
/// step 0.01 on `[-40, 40]`; converges geometrically for this analytic
/// integrand and shares no code with the Gauss-Hermite path.
pub fn phi_trapezoid(mu: f64, sigma2: f64) -> f64 {
    let sigma = sigma2.sqrt();
    let h: f64 = 0.01;
    let ln_c = h.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    ln_sum_exp((-4000..=4000).map(|k| {
        let z = k as f64 * h;
        ln_c - 0.5 * z * z - softplus(mu + sigma * z)
    }))
    .exp()
}

/// Adjustment `a` with `E[h(kappa + a + V)] = h(kappa)`, `V ~ N(0, tau2)`,
/// by bisection on order-1000 quadrature. Bounded links are solved on the
/// logarithm of the smaller tail so that saturated targets keep precision.
pub fn adjustment(link: LinkFunction, kappa: f64, tau2: f64) -> Result<f64> {
    if !(tau2 >= 0.0) || !kappa.is_finite() {
        return Err(Error::invalid("need finite kappa and tau2 >= 0"));
    }
    if tau2 == 0.0 {
        return Ok(0.0);
    }
    match link {
        LinkFunction::Identity => Ok(0.0),
        LinkFunction::Log => Ok(-0.5 * tau2),
        LinkFunction::Sqrt => {
            if kappa * kappa < tau2 || kappa <= 0.0 {
                return Err(Error::ModelUndefined { kappa, var: tau2 });
            }
            let residual = |a: f64| {
                cached_rule(1000).expect_normal(kappa + a, tau2, |w| w * w) - kappa * kappa
            };
            bisect(residual, -kappa, 0.0)
        }
        LinkFunction::Reciprocal => Err(Error::Unsupported(
            "the reciprocal link is adjusted through a gamma law, not a normal shift".into(),
        )),
        LinkFunction::Logit | LinkFunction::Probit | LinkFunction::CLogLog => {
            let upper = kappa >= 0.0;
            let ln_tail = |eta: f64| -> f64 {
                let (ln_h, ln_q) = link.ln_inverse_pair(eta).expect("bounded link");
                if upper {
                    ln_q
                } else {
                    ln_h
                }
            };
            let target = ln_tail(kappa);
            // ln E[1 - h] decreases in a; ln E[h] increases
            let sign = if upper { -1.0 } else { 1.0 };
            let residual = |a: f64| sign * (ln_gh_expect(1000, kappa + a, tau2, ln_tail) - target);
            let b = 0.5 * tau2 + 10.0 * tau2.sqrt() + 10.0;
            bisect(residual, -b, b)
        }
    }
}

/// Root of an increasing function on `[lo, hi]` by plain bisection.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::Convergence(format!(
            "oracle bracket [{lo}, {hi}] does not contain a root ({flo}, {fhi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Plain seeded Monte Carlo estimate of `E[f(U)]` with its standard error.
pub fn mc_integral(
    f: &mut dyn FnMut(&[f64]) -> f64,
    law: &RandomEffectLaw,
    size: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if size < 10_000 {
        return Err(Error::invalid(format!("Monte Carlo size {size} is below 10000")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = match law {
        RandomEffectLaw::Normal(n) => {
            let cov = n.cov();
            let scale = (0..cov.len()).map(|i| cov[i][i]).fold(0.0, f64::max).max(1.0);
            let jittered: Vec<Vec<f64>> = cov
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, v)| if i == j { v + 1e-14 * scale } else { *v })
                        .collect()
                })
                .collect();
            Some(linalg::cholesky(&jittered)?)
        }
        RandomEffectLaw::Mixture(_) => None,
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut u = Vec::new();
    for k in 0..size {
        u.clear();
        match (law, &factor) {
            (RandomEffectLaw::Normal(_), Some(l)) => {
                let z: Vec<f64> = (0..l.len()).map(|_| rng.sample(StandardNormal)).collect();
                u.extend(l.iter().map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()));
            }
            (RandomEffectLaw::Mixture(m), _) => {
                let pick: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = (0.0, 0.0);
                for (w, mean, var) in m.components() {
                    chosen = (mean, var);
                    acc += w;
                    if pick < acc {
                        break;
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                u.push(chosen.0 + chosen.1.sqrt() * z);
            }
            _ => unreachable!("factor exists exactly for normal laws"),
        }
        let v = f(&u);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("integrand is not finite at draw {k}")));
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = size as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// `sum_i log integral f(y_i | eta_i + u) N(u; 0, tau2_i) du` for a model with
/// one level of per-observation intercepts, by 201-point Gauss-Hermite
/// centred and scaled at the mode of each integrand. Adjustments, when the
/// model asks for them, come from [`adjustment`].
pub fn exact_marginal_loglik_small(
    spec: &ModelSpec,
    data: &Dataset,
    beta: &[f64],
    variances: &[f64],
) -> Result<f64> {
    if data.n() > 20 || spec.levels.len() > 1 {
        return Err(Error::invalid("exact marginal needs at most 20 observations and one level"));
    }
    if beta.len() != spec.p() || variances.len() != spec.n_variances() {
        return Err(Error::invalid("parameter lengths do not match the model"));
    }
    if variances.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("variances must be nonnegative"));
    }
    if let Some(groups) = data.groups.first() {
        let mut seen = vec![false; spec.levels[0].n_groups()];
        for &g in groups {
            if std::mem::replace(&mut seen[g], true) {
                return Err(Error::invalid("random intercepts must be independent across observations"));
            }
        }
    }
    let mut total = 0.0;
    for i in 0..data.n() {
        let kappa: f64 = data.x[i].iter().zip(beta).map(|(x, b)| x * b).sum();
        let tau2 = match (spec.levels.first(), data.groups.first()) {
            (Some(level), Some(groups)) => variances[level.stratum[groups[i]]],
            _ => 0.0,
        };
        let a = if spec.marginally_interpretable {
            adjustment(spec.link, kappa, tau2)?
        } else {
            0.0
        };
        let ln_f = |eta: f64| ln_density(spec.family, spec.link, data.y[i], data.trials_of(i), eta);
        total += if tau2 == 0.0 {
            ln_f(kappa + a)
        } else {
            ln_integrate(&ln_f, kappa + a, tau2)
        };
    }
    Ok(total)
}

/// `log f(y | eta)` written out from the family definitions.
fn ln_density(family: Family, link: LinkFunction, y: f64, m: f64, eta: f64) -> f64 {
    match family {
        Family::Bernoulli | Family::Binomial => {
            let m = if family == Family::Bernoulli { 1.0 } else { m };
            let Some((ln_p, ln_q)) = link.ln_inverse_pair(eta) else {
                return f64::NEG_INFINITY;
            };
            let ln_choose = libm::lgamma(m + 1.0) - libm::lgamma(y + 1.0) - libm::lgamma(m - y + 1.0);
            ln_choose
                + if y > 0.0 { y * ln_p } else { 0.0 }
                + if m > y { (m - y) * ln_q } else { 0.0 }
        }
        Family::Poisson => {
            let mu = link.inverse_unchecked(eta);
            if !link.eta_in_domain(eta) || !(mu >= 0.0) {
                return f64::NEG_INFINITY;
            }
            let ln_mu = if y > 0.0 { y * mu.ln() } else { 0.0 };
            ln_mu - mu - libm::lgamma(y + 1.0)
        }
    }
}

/// `log integral exp(ln_f(c + u)) N(u; 0, tau2) du` with the rule centred at
/// the mode of the log integrand.
fn ln_integrate(ln_f: &dyn Fn(f64) -> f64, c: f64, tau2: f64) -> f64 {
    let ln_g = |u: f64| ln_f(c + u) - 0.5 * u * u / tau2;
    let tau = tau2.sqrt();
    // mode by golden-section search on a wide bracket, then curvature
    let (mut lo, mut hi) = (-12.0 * tau - 40.0, 12.0 * tau + 40.0);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = hi - ratio * (hi - lo);
        let x2 = lo + ratio * (hi - lo);
        if ln_g(x1) < ln_g(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    let mode = 0.5 * (lo + hi);
    let h = 1e-3 * tau.max(1e-3);
    let curv = (ln_g(mode + h) - 2.0 * ln_g(mode) + ln_g(mode - h)) / (h * h);
    let s = if curv < 0.0 { (-1.0 / curv).sqrt() } else { tau };
    let rule = cached_rule(201);
    let ln_norm = -0.5 * (2.0 * std::f64::consts::PI * tau2).ln();
    ln_norm
        + (2.0f64).sqrt().ln()
        + s.ln()
        + ln_sum_exp(
            rule.nodes()
                .iter()
                .zip(rule.log_weights())
                .map(|(x, lw)| lw + x * x + ln_g(mode + std::f64::consts::SQRT_2 * s * x)),
        )
}
