//! Gauss-Hermite rules built by the Golub-Welsch method.
//!
//! Nodes are the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! Hermite polynomials (physicists' weight `exp(-x^2)`), each polished by one
//! Newton step on the orthonormal recurrence. Weights come from the
//! Christoffel function `1 / sum_k q_k(x)^2`, which is evaluated with running
//! rescaling so that order-1000 rules stay finite; extreme weights below the
//! smallest positive double are kept exactly in `log_weights`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported order.
pub const MAX_ORDER: usize = 1000;

/// An order-`n` Gauss-Hermite rule for `integral f(x) exp(-x^2) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
}

impl GaussHermiteRule {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::invalid(format!(
                "Gauss-Hermite order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let mut nodes = jacobi_eigenvalues(order)?;
        for x in nodes.iter_mut() {
            let (q_n, q_nm1, _, _) = hermite_orthonormal(order, *x);
            let derivative = (2.0 * order as f64).sqrt() * q_nm1;
            if derivative != 0.0 && derivative.is_finite() {
                *x -= q_n / derivative;
            }
        }
        symmetrize(&mut nodes);

        let mut weights = Vec::with_capacity(order);
        let mut log_weights = Vec::with_capacity(order);
        for &x in &nodes {
            let (_, _, sum_sq, log_scale) = hermite_orthonormal(order, x);
            let lw = -sum_sq.ln() - 2.0 * log_scale;
            log_weights.push(lw);
            weights.push(lw.exp());
        }
        Ok(GaussHermiteRule {
            order,
            nodes,
            weights,
            log_weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weights for the `exp(-x^2)` measure. Entries for `|x| > ~26.5` underflow
    /// to zero at high orders; use [`Self::log_weights`] when that matters.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `E[f(W)]` for `W ~ Normal(mean, var)` under the change of variables
    /// `w = mean + sqrt(2 var) x`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(&self, mean: f64, var: f64, mut f: F) -> f64 {
        let scale = (2.0 * var.max(0.0)).sqrt();
        let norm = PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(&x, &w)| w * f(mean + scale * x))
            .sum::<f64>()
            / norm
    }

    /// `ln E[exp(g(W))]` for `W ~ Normal(mean, var)`, evaluated by log-sum-exp
    /// so that vanishingly small expectations stay representable.
    pub fn ln_expect_normal_exp<F: FnMut(f64) -> f64>(&self, mean: f64, var: f64, mut g: F) -> f64 {
        let scale = (2.0 * var.max(0.0)).sqrt();
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&x, &lw)| lw + g(mean + scale * x))
            .collect();
        log_sum_exp(&terms) - 0.5 * PI.ln()
    }
}

/// Shared order-`n` rules, built on first use.
pub fn cached_rule(order: usize) -> &'static GaussHermiteRule {
    static R30: OnceLock<GaussHermiteRule> = OnceLock::new();
    static R201: OnceLock<GaussHermiteRule> = OnceLock::new();
    static R1000: OnceLock<GaussHermiteRule> = OnceLock::new();
    let cell = match order {
        30 => &R30,
        201 => &R201,
        1000 => &R1000,
        _ => panic!("no cached Gauss-Hermite rule of order {order}"),
    };
    cell.get_or_init(|| GaussHermiteRule::new(order).expect("valid order"))
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Returns `(q_n, q_{n-1}, S, L)` where the orthonormal Hermite values are
/// `q_k * exp(L)` and `sum_{k<n} q_k^2 = S * exp(2L)`.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut log_scale = 0.0;
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += cur * cur;
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            cur /= BIG;
            prev /= BIG;
            sum_sq /= BIG * BIG;
            log_scale += BIG.ln();
        }
    }
    (cur, prev, sum_sq, log_scale)
}

/// Eigenvalues of the Hermite Jacobi matrix (zero diagonal, off-diagonal
/// `sqrt(k/2)`) by implicit QL with Wilkinson shifts, sorted ascending.
fn jacobi_eigenvalues(n: usize) -> Result<Vec<f64>> {
    let mut d = vec![0.0_f64; n];
    // e[i] couples rows i and i+1.
    let mut e: Vec<f64> = (1..=n).map(|k| if k < n { (k as f64 / 2.0).sqrt() } else { 0.0 }).collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Convergence(format!(
                    "Jacobi eigenvalue iteration stalled at row {l} (order {n})"
                )));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}

fn symmetrize(nodes: &mut [f64]) {
    let n = nodes.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let m = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -m;
        nodes[j] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
}
