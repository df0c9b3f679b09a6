//! The adjustment `d^T a` that makes `E[h(kappa + d^T U + d^T a)] = h(kappa)`.
//!
//! Closed forms cover the identity, log, probit (normal law) and square-root
//! links. The logit link with a normal law uses the exact recursion grid to
//! locate the root to within one interval of length `tau2` and finishes by
//! bisection on the hybrid integral. Everything else bounded goes through a
//! log-space Gauss-Hermite residual solved by bisection.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{GammaShiftLaw, NormalMixtureLaw, ScalarLaw};
use crate::links::{logistic, LinkFunction};
use crate::lni::{phi_grid_exact, phi_hybrid, MAX_RECURSION_STEPS};
use crate::quadrature::{cached_rule, log_sum_exp, GaussHermiteRule};

pub use crate::law::effective_variance;

/// Quadrature order used when a numeric adjustment is requested without a rule.
pub const DEFAULT_NUMERIC_ORDER: usize = 1000;

/// Bisection stops once the bracket is this narrow, relative to `max(1, tau2)`.
pub const BRACKET_TOLERANCE: f64 = 1e-12;

const MAX_BRACKET_DOUBLINGS: usize = 10;

/// A computed additive adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub value: f64,
    pub link: LinkFunction,
    pub kappa: f64,
    pub tau2: f64,
}

fn require_centered(law: &ScalarLaw) -> Result<()> {
    if law.is_centered() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "random-effect law must have mean zero, got {}",
            law.mean()
        )))
    }
}

pub fn adjust_identity(law: &ScalarLaw) -> Result<Adjustment> {
    require_centered(law)?;
    Ok(Adjustment {
        value: 0.0,
        link: LinkFunction::Identity,
        kappa: f64::NAN,
        tau2: law.variance(),
    })
}

/// `-ln M(1)` where `M` is the moment generating function of `d^T U`.
pub fn adjust_log(law: &ScalarLaw) -> Result<Adjustment> {
    require_centered(law)?;
    let value = match law {
        ScalarLaw::Normal { tau2 } => -0.5 * tau2,
        ScalarLaw::Mixture(m) => -m.ln_mgf(1.0),
    };
    Ok(Adjustment {
        value,
        link: LinkFunction::Log,
        kappa: f64::NAN,
        tau2: law.variance(),
    })
}

pub fn adjust_probit(kappa: f64, tau2: f64) -> Result<Adjustment> {
    check_variance(tau2)?;
    Ok(Adjustment {
        value: ((1.0 + tau2).sqrt() - 1.0) * kappa,
        link: LinkFunction::Probit,
        kappa,
        tau2,
    })
}

pub fn adjust_logit(kappa: f64, tau2: f64) -> Adjustment {
    Adjustment {
        value: logit_shift(kappa, tau2),
        link: LinkFunction::Logit,
        kappa,
        tau2,
    }
}

fn logit_shift(kappa: f64, tau2: f64) -> f64 {
    if kappa == 0.0 || !(tau2 > 0.0) {
        return 0.0;
    }
    if kappa < 0.0 {
        return -logit_shift(-kappa, tau2);
    }
    // Root R of phi(R, tau2) = 1 - h(kappa); the adjustment is R - kappa and
    // lies in (0, tau2 / 2).
    let target = logistic(-kappa);
    if target == 0.0 {
        return 0.5 * tau2;
    }
    let t_low = (kappa / tau2).floor();
    let (mut lo, mut hi) = if t_low <= MAX_RECURSION_STEPS as f64 {
        let mut t = t_low as u64;
        let mut value = phi_grid_exact(t, tau2);
        while value > target {
            value = (-(t as f64) * tau2 - 0.5 * tau2).exp() * (1.0 - value);
            t += 1;
        }
        let lo = ((t.max(1) - 1) as f64 * tau2).max(kappa);
        (lo, (t as f64 * tau2).min(kappa + tau2))
    } else {
        // Beyond the recursion cap tau2 is negligible next to kappa, and the
        // second-order expansion of E[h(kappa + a + V)] is exact to O(tau2^2).
        return 0.5 * tau2 * (2.0 * logistic(kappa) - 1.0);
    };
    while phi_hybrid(hi, tau2) > target {
        hi += tau2;
    }
    let tol = BRACKET_TOLERANCE * tau2.max(1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi_hybrid(mid, tau2) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) - kappa
}

/// Logit adjustment for a scalar normal-mixture law.
pub fn adjust_logit_mixture(kappa: f64, law: &NormalMixtureLaw) -> Result<Adjustment> {
    if !law.is_centered() {
        return Err(Error::invalid("mixture law must have mean zero"));
    }
    if kappa == 0.0 && is_symmetric(law) {
        return Ok(Adjustment {
            value: 0.0,
            link: LinkFunction::Logit,
            kappa,
            tau2: law.variance(),
        });
    }
    let upper = kappa >= 0.0;
    let target = if upper { logistic(-kappa) } else { logistic(kappa) };
    // Increasing in `a` in both branches.
    let residual = |a: f64| -> f64 {
        let mass: f64 = law
            .components()
            .map(|(w, m, v)| {
                let eta = kappa + a + m;
                w * if upper { phi_hybrid(eta, v) } else { phi_hybrid(-eta, v) }
            })
            .sum();
        if upper {
            target - mass
        } else {
            mass - target
        }
    };
    let half = law
        .components()
        .map(|(_, m, v)| m * m + v)
        .fold(0.0, f64::max)
        / 2.0
        + kappa.abs();
    let value = bisect_increasing(residual, -half.max(1e-3), half.max(1e-3), half.max(1.0))?;
    Ok(Adjustment {
        value,
        link: LinkFunction::Logit,
        kappa,
        tau2: law.variance(),
    })
}

/// Whether the law is invariant under `U -> -U`.
fn is_symmetric(law: &NormalMixtureLaw) -> bool {
    let mut comps: Vec<(f64, f64, f64)> = law.components().collect();
    let mut mirror: Vec<(f64, f64, f64)> = comps.iter().map(|&(w, m, v)| (w, -m, v)).collect();
    let key = |a: &(f64, f64, f64), b: &(f64, f64, f64)| {
        a.1.total_cmp(&b.1)
            .then(a.0.total_cmp(&b.0))
            .then(a.2.total_cmp(&b.2))
    };
    comps.sort_by(key);
    mirror.sort_by(key);
    comps == mirror
}

pub fn adjust_cloglog(kappa: f64, tau2: f64, rule: &GaussHermiteRule) -> Result<Adjustment> {
    check_variance(tau2)?;
    adjust_numeric(LinkFunction::CLogLog, kappa, &ScalarLaw::Normal { tau2 }, rule)
}

/// `-kappa + sqrt(kappa^2 - var)`, defined only for `kappa >= sqrt(var)`.
pub fn adjust_sqrt(kappa: f64, var_du: f64) -> Result<Adjustment> {
    check_variance(var_du)?;
    if kappa < var_du.sqrt() {
        return Err(Error::ModelUndefined { kappa, var: var_du });
    }
    Ok(Adjustment {
        value: -kappa + (kappa * kappa - var_du).sqrt(),
        link: LinkFunction::Sqrt,
        kappa,
        tau2: var_du,
    })
}

/// Gamma law for `kappa + U` with `E[1 / (kappa + U)] = 1 / kappa`.
pub fn adjust_reciprocal(kappa: f64, shape: f64) -> Result<GammaShiftLaw> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::LinkDomain {
            link: LinkFunction::Reciprocal.name(),
            value: kappa,
        });
    }
    if !(shape > 1.0) || !shape.is_finite() {
        return Err(Error::invalid(format!(
            "gamma shape must exceed 1 for a finite reciprocal mean, got {shape}"
        )));
    }
    Ok(GammaShiftLaw {
        shape,
        scale: kappa / (shape - 1.0),
    })
}

/// Generic solver for the bounded links, working with `ln E[h]` when
/// `kappa < 0` and `ln E[1 - h]` otherwise so that both tails keep full
/// relative precision.
pub fn adjust_numeric(
    link: LinkFunction,
    kappa: f64,
    law: &ScalarLaw,
    rule: &GaussHermiteRule,
) -> Result<Adjustment> {
    if link.ln_inverse_pair(0.0).is_none() {
        return Err(Error::Unsupported(format!(
            "numeric adjustment needs a bounded link, got {link}"
        )));
    }
    require_centered(law)?;
    let variance = law.variance();
    let components = law.components();
    if components.iter().all(|&(_, m, v)| m == 0.0 && v == 0.0) {
        return Ok(Adjustment {
            value: 0.0,
            link,
            kappa,
            tau2: 0.0,
        });
    }
    let upper = kappa >= 0.0;
    let side = |eta: f64| -> f64 {
        let (ln_h, ln_q) = link.ln_inverse_pair(eta).expect("bounded link");
        if upper {
            ln_q
        } else {
            ln_h
        }
    };
    let target = side(kappa);
    let residual = |a: f64| -> f64 {
        let terms: Vec<f64> = components
            .iter()
            .map(|&(w, m, v)| w.ln() + rule.ln_expect_normal_exp(kappa + a + m, v, side))
            .collect();
        let f = log_sum_exp(&terms) - target;
        if upper {
            -f
        } else {
            f
        }
    };
    let tau = variance.sqrt();
    let half = 0.5 * variance + 5.0 * tau + 5.0;
    let value = bisect_increasing(residual, -half, half, variance.max(1.0))?;
    Ok(Adjustment {
        value,
        link,
        kappa,
        tau2: variance,
    })
}

/// Bisection on an increasing residual, expanding `[lo, hi]` by doubling its
/// half-width until the signs bracket a root.
fn bisect_increasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, scale: f64) -> Result<f64> {
    let mut doublings = 0;
    loop {
        let (flo, fhi) = (f(lo), f(hi));
        if flo.is_nan() || fhi.is_nan() {
            return Err(Error::Numeric("adjustment residual is NaN".into()));
        }
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Convergence(format!(
                "no sign change of the adjustment residual on [{lo}, {hi}]"
            )));
        }
        doublings += 1;
        if flo > 0.0 {
            lo -= hi - lo;
        }
        if fhi < 0.0 {
            hi += hi - lo;
        }
    }
    let tol = BRACKET_TOLERANCE * scale;
    for _ in 0..300 {
        if hi - lo <= tol {
            break;
        }
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

fn check_variance(v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "variance must be finite and nonnegative, got {v}"
        )))
    }
}

/// Dispatches on the link and law. The reciprocal link changes the shape of
/// the law rather than shifting it and is handled by [`adjust_reciprocal`].
pub fn adjust(link: LinkFunction, kappa: f64, law: &ScalarLaw) -> Result<Adjustment> {
    match (link, law) {
        (LinkFunction::Identity, _) => adjust_identity(law).map(|a| Adjustment { kappa, ..a }),
        (LinkFunction::Log, _) => adjust_log(law).map(|a| Adjustment { kappa, ..a }),
        (LinkFunction::Probit, ScalarLaw::Normal { tau2 }) => adjust_probit(kappa, *tau2),
        (LinkFunction::Logit, ScalarLaw::Normal { tau2 }) => {
            check_variance(*tau2)?;
            Ok(adjust_logit(kappa, *tau2))
        }
        (LinkFunction::Logit, ScalarLaw::Mixture(m)) => adjust_logit_mixture(kappa, m),
        (LinkFunction::Probit | LinkFunction::CLogLog, _) => {
            adjust_numeric(link, kappa, law, cached_rule(DEFAULT_NUMERIC_ORDER))
        }
        (LinkFunction::Sqrt, _) => {
            require_centered(law)?;
            adjust_sqrt(kappa, law.variance())
        }
        (LinkFunction::Reciprocal, _) => Err(Error::Unsupported(
            "the reciprocal link alters the shape of a gamma law; use adjust_reciprocal".into(),
        )),
    }
}

/// How [`marginal_mean_check`] evaluates the marginal mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MarginalOracle {
    Quadrature { order: usize },
    MonteCarlo { seed: u64, size: usize },
}

/// `E[h(kappa + V + a)]` for `V` drawn from `law`, evaluated independently of
/// the solver that produced `a`.
pub fn marginal_mean_check(
    link: LinkFunction,
    kappa: f64,
    law: &ScalarLaw,
    adj: &Adjustment,
    oracle: MarginalOracle,
) -> Result<f64> {
    if link == LinkFunction::Reciprocal {
        return Err(Error::Unsupported(
            "the reciprocal link has no additive adjustment to check".into(),
        ));
    }
    let eta0 = kappa + adj.value;
    let h = |eta: f64| link.inverse_unchecked(eta);
    let value = match oracle {
        MarginalOracle::Quadrature { order } => {
            let owned;
            let rule = match order {
                30 | 201 | 1000 => cached_rule(order),
                _ => {
                    owned = GaussHermiteRule::new(order)?;
                    &owned
                }
            };
            law.components()
                .iter()
                .map(|&(w, m, v)| w * rule.expect_normal(eta0 + m, v, h))
                .sum::<f64>()
        }
        MarginalOracle::MonteCarlo { seed, size } => {
            if size == 0 {
                return Err(Error::invalid("Monte Carlo size must be positive"));
            }
            let comps = law.components();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut total = 0.0;
            for _ in 0..size {
                let mut pick: f64 = rng.random();
                let mut chosen = comps[comps.len() - 1];
                for &c in &comps {
                    if pick < c.0 {
                        chosen = c;
                        break;
                    }
                    pick -= c.0;
                }
                let z: f64 = rng.sample(StandardNormal);
                total += h(eta0 + chosen.1 + chosen.2.sqrt() * z);
            }
            total / size as f64
        }
    };
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "marginal mean is not finite for {link} at kappa = {kappa}"
        )));
    }
    Ok(value)
}

/// Source of adjustments for likelihood evaluation. The sampler takes one by
/// reference so tests can observe how often adjustments are requested.
pub trait Adjuster: Send + Sync {
    fn shift(&self, link: LinkFunction, kappa: f64, law: &ScalarLaw) -> Result<f64>;

    /// Whether the shift can vary with `kappa` for this link. Memos share one
    /// entry across all `kappa` when it cannot.
    fn depends_on_kappa(&self, link: LinkFunction) -> bool {
        let _ = link;
        true
    }
}

/// Table dispatch through [`adjust`].
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardAdjuster;

impl Adjuster for StandardAdjuster {
    fn shift(&self, link: LinkFunction, kappa: f64, law: &ScalarLaw) -> Result<f64> {
        adjust(link, kappa, law).map(|a| a.value)
    }

    fn depends_on_kappa(&self, link: LinkFunction) -> bool {
        !matches!(link, LinkFunction::Log | LinkFunction::Identity)
    }
}

/// Memo for one likelihood evaluation, keyed on the link, `kappa` rounded to
/// `1e-14` and the fingerprint of the law. Owned by a single evaluation, so no
/// entry is ever observed half-written.
pub struct AdjustmentMemo<'a> {
    adjuster: &'a dyn Adjuster,
    entries: HashMap<(LinkFunction, u64, u64), f64>,
}

impl<'a> AdjustmentMemo<'a> {
    pub fn new(adjuster: &'a dyn Adjuster) -> Self {
        AdjustmentMemo {
            adjuster,
            entries: HashMap::new(),
        }
    }

    pub fn get(&mut self, link: LinkFunction, kappa: f64, law: &ScalarLaw) -> Result<f64> {
        let rounded = if self.adjuster.depends_on_kappa(link) {
            (kappa * 1e14).round()
        } else {
            0.0
        };
        let key = (link, rounded.to_bits(), law.fingerprint());
        if let Some(&v) = self.entries.get(&key) {
            return Ok(v);
        }
        let v = self.adjuster.shift(link, kappa, law)?;
        self.entries.insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lni::phi_gold;

    fn quad(link: LinkFunction, kappa: f64, law: &ScalarLaw, adj: &Adjustment) -> f64 {
        marginal_mean_check(link, kappa, law, adj, MarginalOracle::Quadrature { order: 1000 }).unwrap()
    }

    #[test]
    fn identity_examples() {
        assert_eq!(adjust_identity(&ScalarLaw::normal(9.0)).unwrap().value, 0.0);
        let off = NormalMixtureLaw::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(adjust_identity(&ScalarLaw::Mixture(off)).is_err());
    }

    #[test]
    fn log_examples() {
        assert_eq!(adjust_log(&ScalarLaw::normal(1.0)).unwrap().value, -0.5);
        assert_eq!(adjust_log(&ScalarLaw::normal(0.0)).unwrap().value, 0.0);
        let two = NormalMixtureLaw::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let a = adjust_log(&ScalarLaw::Mixture(two)).unwrap().value;
        assert!((a + 1.0f64.cosh().ln()).abs() < 1e-15);
        assert!((a + 0.433_780_830_483_027).abs() < 1e-12);
    }

    #[test]
    fn probit_examples() {
        assert_eq!(adjust_probit(2.0, 3.0).unwrap().value, 2.0);
        assert_eq!(adjust_probit(0.0, 5.0).unwrap().value, 0.0);
        assert_eq!(adjust_probit(-1.0, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn probit_closed_form_matches_numeric() {
        let rule = cached_rule(1000);
        for &(k, t) in &[(0.3, 0.5), (-2.0, 4.0), (4.0, 9.0), (-7.0, 16.0)] {
            let closed = adjust_probit(k, t).unwrap().value;
            let law = ScalarLaw::normal(t);
            let numeric = adjust_numeric(LinkFunction::Probit, k, &law, rule).unwrap().value;
            assert!((closed - numeric).abs() < 1e-10, "{k} {t}: {closed} vs {numeric}");
        }
    }

    #[test]
    fn logit_examples() {
        assert_eq!(adjust_logit(0.0, 4.0).value, 0.0);
        assert!((adjust_logit(30.0, 2.0).value - 1.0).abs() < 1e-4);
        let a = adjust_logit(1.0, 1.0).value;
        // 1000-point quadrature root found with an independent bisection
        let marginal = 1.0 - phi_gold(1.0 + a, 1.0);
        assert!((marginal - logistic(1.0)).abs() < 1e-10);
        for &k in &[0.4, 3.0, 11.0] {
            assert_eq!(adjust_logit(-k, 2.5).value, -adjust_logit(k, 2.5).value);
        }
    }

    #[test]
    fn logit_limit() {
        for t in [0.25, 1.0, 4.0] {
            assert!((adjust_logit(50.0, t).value - t / 2.0).abs() <= 1e-3);
        }
        assert_eq!(adjust_logit(800.0, 3.0).value, 1.5);
    }

    #[test]
    fn logit_tiny_variance_uses_direct_bracket() {
        let a = adjust_logit(2.0, 1e-9).value;
        let expected = 0.5e-9 * (2.0 * logistic(2.0) - 1.0);
        assert!((a - expected).abs() < 1e-12, "{a} vs {expected}");
    }

    #[test]
    fn logit_mixture_examples() {
        let single = NormalMixtureLaw::new(vec![1.0], vec![0.0], vec![1.7]).unwrap();
        for k in [-2.0, 0.5, 6.0] {
            let a = adjust_logit_mixture(k, &single).unwrap().value;
            assert!((a - adjust_logit(k, 1.7).value).abs() < 1e-12);
        }
        let sym = NormalMixtureLaw::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![0.25, 0.25]).unwrap();
        assert!(adjust_logit_mixture(0.0, &sym).unwrap().value.abs() < 1e-12);
        let a = adjust_logit_mixture(1.0, &sym).unwrap().value;
        let mass: f64 = sym
            .components()
            .map(|(w, m, v)| w * (1.0 - phi_hybrid(1.0 + a + m, v)))
            .sum();
        assert!((mass - logistic(1.0)).abs() <= 1e-12);
    }

    #[test]
    fn cloglog_examples() {
        let rule = cached_rule(1000);
        assert_eq!(adjust_cloglog(1.3, 0.0, rule).unwrap().value, 0.0);
        for &(k, t) in &[(0.0, 1.0), (-2.0, 1.0), (2.0, 1.0), (1.5, 16.0)] {
            let adj = adjust_cloglog(k, t, rule).unwrap();
            let law = ScalarLaw::normal(t);
            let m = quad(LinkFunction::CLogLog, k, &law, &adj);
            let h = LinkFunction::CLogLog.inverse_unchecked(k);
            assert!((m - h).abs() <= 1e-12, "{k} {t}: {m} vs {h}");
        }
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(adjust_sqrt(2.0, 3.0).unwrap().value, -1.0);
        assert_eq!(adjust_sqrt(5.0, 0.0).unwrap().value, 0.0);
        assert!(matches!(
            adjust_sqrt(1.0, 2.0),
            Err(Error::ModelUndefined { .. })
        ));
    }

    #[test]
    fn reciprocal_examples() {
        assert_eq!(adjust_reciprocal(3.0, 4.0).unwrap().scale, 1.0);
        let g = adjust_reciprocal(1.0, 2.0).unwrap();
        assert_eq!(g.scale, 1.0);
        assert_eq!(g.effect_mean(1.0), 1.0);
        assert!(adjust_reciprocal(2.0, 1.0).is_err());
        assert!(adjust(LinkFunction::Reciprocal, 1.0, &ScalarLaw::normal(1.0)).is_err());
    }

    #[test]
    fn marginal_check_examples() {
        let law = ScalarLaw::normal(1.0);
        let log = adjust_log(&law).unwrap();
        let m = quad(LinkFunction::Log, 1.0, &law, &log);
        assert!((m - 1.0f64.exp()).abs() < 1e-10);

        let logit = adjust_logit(1.0, 1.0);
        let m = quad(LinkFunction::Logit, 1.0, &law, &logit);
        assert!((m - 0.731_058_578_630_004_9).abs() < 1e-9);

        let id = adjust_identity(&ScalarLaw::normal(3.0)).unwrap();
        let m = quad(LinkFunction::Identity, 7.0, &ScalarLaw::normal(3.0), &id);
        assert!((m - 7.0).abs() < 1e-12);

        let mc = marginal_mean_check(
            LinkFunction::Logit,
            1.0,
            &law,
            &logit,
            MarginalOracle::MonteCarlo { seed: 3, size: 200_000 },
        )
        .unwrap();
        assert!((mc - logistic(1.0)).abs() < 4.0 * 0.5 / (200_000f64).sqrt());
    }

    #[test]
    fn memo_reuses_entries() {
        struct Counting(std::sync::atomic::AtomicUsize);
        impl Adjuster for Counting {
            fn shift(&self, link: LinkFunction, kappa: f64, law: &ScalarLaw) -> Result<f64> {
                self.0.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                StandardAdjuster.shift(link, kappa, law)
            }
        }
        let spy = Counting(Default::default());
        let mut memo = AdjustmentMemo::new(&spy);
        let law = ScalarLaw::normal(2.0);
        let a = memo.get(LinkFunction::Logit, 1.0, &law).unwrap();
        let b = memo.get(LinkFunction::Logit, 1.0 + 1e-16, &law).unwrap();
        assert_eq!(a, b);
        memo.get(LinkFunction::Logit, 1.5, &law).unwrap();
        assert_eq!(spy.0.load(std::sync::atomic::Ordering::SeqCst), 2);
        assert_eq!(memo.len(), 2);
    }
}
