use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Metropolis decision for a symmetric proposal. NaN and negative infinity reject.
pub fn accept_log_ratio<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

/// One random-walk Metropolis update of a block against `target`.
///
/// Returns the new point, its log density and whether the proposal was accepted.
pub fn mh_block_step<R: Rng + ?Sized>(
    target: &mut dyn FnMut(&[f64]) -> f64,
    current: &[f64],
    current_lp: f64,
    scales: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, f64, bool)> {
    if !current_lp.is_finite() {
        return Err(Error::invalid("current log density must be finite"));
    }
    if scales.len() != current.len() {
        return Err(Error::invalid("one proposal scale per coordinate is required"));
    }
    let proposal: Vec<f64> = current
        .iter()
        .zip(scales)
        .map(|(x, s)| x + s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lp = target(&proposal);
    if accept_log_ratio(lp - current_lp, rng) {
        Ok((proposal, lp, true))
    } else {
        Ok((current.to_vec(), current_lp, false))
    }
}

#[derive(Debug, Clone)]
pub struct RandomWalkOutput {
    pub draws: Vec<Vec<f64>>,
    pub acceptance: f64,
}

/// Random-walk Metropolis on an arbitrary log density, with fixed scales.
pub fn run_random_walk(
    target: &mut dyn FnMut(&[f64]) -> f64,
    init: &[f64],
    scales: &[f64],
    steps: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<RandomWalkOutput> {
    if burn_in >= steps || thin == 0 {
        return Err(Error::invalid("need burn_in < steps and thin >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = init.to_vec();
    let mut lp = target(&x);
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity((steps - burn_in) / thin);
    for t in 0..steps {
        let (next, next_lp, ok) = mh_block_step(target, &x, lp, scales, &mut rng)?;
        x = next;
        lp = next_lp;
        if t >= burn_in {
            accepted += ok as usize;
            if (t - burn_in + 1).is_multiple_of(thin) {
                draws.push(x.clone());
            }
        }
    }
    Ok(RandomWalkOutput {
        draws,
        acceptance: accepted as f64 / (steps - burn_in) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut target = |x: &[f64]| -0.5 * x[0] * x[0];
        for _ in 0..100 {
            let (_, _, ok) = mh_block_step(&mut target, &[0.7], -0.245, &[0.0], &mut rng).unwrap();
            assert!(ok);
        }
    }

    #[test]
    fn infinite_drop_always_rejects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(!accept_log_ratio(f64::NEG_INFINITY, &mut rng));
        assert!(!accept_log_ratio(f64::NAN, &mut rng));
        let mut target = |_: &[f64]| f64::NEG_INFINITY;
        let (x, _, ok) = mh_block_step(&mut target, &[1.0], 0.0, &[1.0], &mut rng).unwrap();
        assert!(!ok);
        assert_eq!(x, vec![1.0]);
        assert!(mh_block_step(&mut target, &[1.0], f64::NEG_INFINITY, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn flat_target_accepts_everything() {
        let out = run_random_walk(&mut |_| 0.0, &[0.0, 0.0], &[1.0, 1.0], 10_001, 1, 1, 3).unwrap();
        assert!(out.acceptance >= 0.99);
        assert_eq!(out.draws.len(), 10_000);
    }

    #[test]
    fn acceptance_matches_analytic_rule() {
        // standard normal target from x = 0 with a fixed proposal z: accept w.p. exp(-z^2 / 2)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let accepted = (0..n)
            .filter(|_| accept_log_ratio(-0.5, &mut rng))
            .count();
        let rate = accepted as f64 / n as f64;
        assert!((rate - (-0.5f64).exp()).abs() < 0.005, "{rate}");
    }
}
