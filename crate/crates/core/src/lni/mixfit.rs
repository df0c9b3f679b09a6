//! Minimax fitting of normal-CDF mixtures to the inverse logit.
//!
//! Both `h(z) - 1/2` and `Phi(z s) - 1/2` are odd, so only `z > 0` is fitted.
//! A Levenberg-Marquardt least-squares fit supplies the starting point; a
//! nonlinear Remez exchange then levels the `2k` alternating extrema of the
//! error curve. With `sum p = 1` imposed there are `2k - 1` free parameters
//! plus the levelled error, matching the `2k` alternation points.

use crate::error::{Error, Result};
use crate::linalg;
use crate::links::{logistic, normal_cdf, normal_pdf};

use super::NormalMixtureApprox;

#[derive(Debug, Clone)]
pub struct MixtureFitOptions {
    pub half_width: f64,
    pub grid_points: usize,
    pub max_exchanges: usize,
}

impl Default for MixtureFitOptions {
    fn default() -> Self {
        MixtureFitOptions {
            half_width: 40.0,
            grid_points: 130_000,
            max_exchanges: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub approx: NormalMixtureApprox,
    pub least_squares_error: f64,
    pub max_error: f64,
    pub exchanges: usize,
}

/// Fits a `k`-component minimax approximation.
pub fn fit_logistic_mixture(k: usize, opts: &MixtureFitOptions) -> Result<MixtureFit> {
    if !(2..=12).contains(&k) {
        return Err(Error::invalid(format!("mixture size {k} outside 2..=12")));
    }
    let grid = fitting_grid(opts.half_width, opts.grid_points);
    let coarse = fitting_grid(opts.half_width, 2_000);
    let (mut p, mut s) = least_squares(k, &coarse)?;
    let least_squares_error = max_abs_error(&p, &s, &grid);

    let mut exchanges = 0;
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_exchanges {
        exchanges += 1;
        let (points, signs) = alternation_points(&p, &s, &grid);
        let (points, signs) = prune_alternation(&p, &s, points, signs, 2 * k);
        if points.len() != 2 * k {
            return Err(Error::Convergence(format!(
                "error curve has {} alternations, expected {} (least-squares error {:.3e})",
                points.len(),
                2 * k,
                least_squares_error
            )));
        }
        let mut level = points
            .iter()
            .map(|&z| error_at(&p, &s, z).abs())
            .sum::<f64>()
            / points.len() as f64;
        remez_newton(&mut p, &mut s, &mut level, &points, &signs)?;
        let err = max_abs_error(&p, &s, &grid);
        if (last - err).abs() <= 1e-3 * err {
            last = err;
            break;
        }
        last = err;
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let mut weights: Vec<f64> = order.iter().map(|&i| p[i]).collect();
    let scales: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(MixtureFit {
        approx: NormalMixtureApprox::new(weights, scales)?,
        least_squares_error,
        max_error: last,
        exchanges,
    })
}

fn fitting_grid(half_width: f64, n: usize) -> Vec<f64> {
    // Dense near the origin where the error oscillates fastest.
    let knee = 10.0_f64.min(half_width);
    let n_inner = n * 10 / 13;
    let n_outer = n - n_inner;
    let mut g: Vec<f64> = (1..=n_inner)
        .map(|i| knee * i as f64 / n_inner as f64)
        .collect();
    g.extend((1..=n_outer).map(|i| knee + (half_width - knee) * i as f64 / n_outer as f64));
    g
}

fn error_at(p: &[f64], s: &[f64], z: f64) -> f64 {
    p.iter().zip(s).map(|(p, s)| p * normal_cdf(z * s)).sum::<f64>() - logistic(z)
}

fn max_abs_error(p: &[f64], s: &[f64], grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&z| error_at(p, s, z).abs())
        .fold(0.0, f64::max)
}

/// Softmax weights and log scales, fitted by damped Gauss-Newton.
fn least_squares(k: usize, grid: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    // Equal weights on geometrically spaced scales.
    let (lo, hi) = (0.24_f64, 1.37_f64);
    let mut theta = vec![0.0; k];
    for i in 0..k {
        let t = i as f64 / (k as f64 - 1.0);
        theta.push(lo.ln() * (1.0 - t) + hi.ln() * t);
    }
    let unpack = |theta: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let m = theta[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = theta[..k].iter().map(|t| (t - m).exp()).collect();
        let tot: f64 = e.iter().sum();
        (
            e.iter().map(|v| v / tot).collect(),
            theta[k..].iter().map(|v| v.exp()).collect(),
        )
    };
    let cost = |theta: &[f64]| -> f64 {
        let (p, s) = unpack(theta);
        grid.iter().map(|&z| error_at(&p, &s, z).powi(2)).sum()
    };

    let n = 2 * k;
    let mut lambda = 1e-3;
    let mut current = cost(&theta);
    for _ in 0..20_000 {
        let (p, s) = unpack(&theta);
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        let mut row = vec![0.0; n];
        for &z in grid {
            let mix: f64 = p.iter().zip(&s).map(|(p, s)| p * normal_cdf(z * s)).sum();
            let r = mix - logistic(z);
            for i in 0..k {
                row[i] = p[i] * (normal_cdf(z * s[i]) - mix);
                row[k + i] = p[i] * normal_pdf(z * s[i]) * z * s[i];
            }
            for a in 0..n {
                jtr[a] += row[a] * r;
                for b in 0..=a {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[b][a] = jtj[a][b];
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[a][a] += lambda * (jtj[a][a] + 1e-300);
            }
            let step = match linalg::solve(damped, jtr.iter().map(|v| -v).collect()) {
                Ok(step) => step,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, d)| t + d).collect();
            let c = cost(&trial);
            if c < current {
                let rel = (current - c) / current;
                theta = trial;
                current = c;
                lambda = (lambda / 3.0).max(1e-12);
                improved = rel > 1e-14;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok(unpack(&theta))
}

/// Extremum of `|error|` within each run of constant sign.
fn alternation_points(p: &[f64], s: &[f64], grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut points = Vec::new();
    let mut signs = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &z in grid {
        let e = error_at(p, s, z);
        match best {
            Some((bz, be)) if be.signum() == e.signum() => {
                if e.abs() > be.abs() {
                    best = Some((z, e));
                } else {
                    best = Some((bz, be));
                }
            }
            Some((bz, be)) => {
                if be.abs() > 1e-13 {
                    points.push(bz);
                    signs.push(be.signum());
                }
                best = Some((z, e));
            }
            None => best = Some((z, e)),
        }
    }
    if let Some((bz, be)) = best {
        if be.abs() > 1e-13 {
            points.push(bz);
            signs.push(be.signum());
        }
    }
    (points, signs)
}

/// Drops the weakest extrema until `n` remain, merging neighbours of equal
/// sign so the survivors still alternate.
fn prune_alternation(
    p: &[f64],
    s: &[f64],
    mut points: Vec<f64>,
    mut signs: Vec<f64>,
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    while points.len() > n {
        let size = |z: f64| error_at(p, s, z).abs();
        let weakest = (0..points.len())
            .min_by(|&a, &b| size(points[a]).total_cmp(&size(points[b])))
            .expect("non-empty");
        let interior = weakest > 0 && weakest + 1 < points.len();
        if interior {
            // removing one interior point leaves two equal-sign neighbours
            points.remove(weakest);
            signs.remove(weakest);
            let keep = if size(points[weakest - 1]) >= size(points[weakest]) {
                weakest - 1
            } else {
                weakest
            };
            let drop = if keep == weakest { weakest - 1 } else { weakest };
            points.remove(drop);
            signs.remove(drop);
            if points.len() < n {
                break;
            }
        } else {
            points.remove(weakest);
            signs.remove(weakest);
        }
    }
    (points, signs)
}

/// Newton iterations on `error(z_j) = sign_j * level` for all alternation points.
fn remez_newton(
    p: &mut [f64],
    s: &mut [f64],
    level: &mut f64,
    points: &[f64],
    signs: &[f64],
) -> Result<()> {
    let k = p.len();
    let n = 2 * k;
    for _ in 0..30 {
        let mut jac = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for (j, (&z, &sg)) in points.iter().zip(signs).enumerate() {
            rhs[j] = -(error_at(p, s, z) - sg * *level);
            let last = normal_cdf(z * s[k - 1]);
            for i in 0..k - 1 {
                jac[j][i] = normal_cdf(z * s[i]) - last;
            }
            for i in 0..k {
                jac[j][k - 1 + i] = p[i] * normal_pdf(z * s[i]) * z;
            }
            jac[j][n - 1] = -sg;
        }
        let step = linalg::solve(jac, rhs)?;
        for i in 0..k - 1 {
            p[i] += step[i];
        }
        p[k - 1] = 1.0 - p[..k - 1].iter().sum::<f64>();
        for i in 0..k {
            s[i] += step[k - 1 + i];
        }
        *level += step[n - 1];
        if p.iter().any(|&v| v <= 0.0) || s.iter().any(|&v| v <= 0.0) {
            return Err(Error::Convergence(
                "Remez step left the feasible region".into(),
            ));
        }
        if step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-14 {
            break;
        }
    }
    Ok(())
}
