//! Accuracy and timing of logistic-normal evaluators against the reference.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lni::{logistic_k8, phi_gh, phi_hybrid, phi_ms};
use crate::oracle;
use crate::quadrature::{cached_rule, GaussHermiteRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMethod {
    Hybrid,
    /// The eight-component normal mixture applied directly.
    Mixture,
    Quadrature(usize),
    /// The trapezoid reference, measuring the accuracy of the reference itself.
    Gold,
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchMethod::Hybrid => f.write_str("hybrid"),
            BenchMethod::Mixture => f.write_str("ms"),
            BenchMethod::Quadrature(n) => write!(f, "gh{n}"),
            BenchMethod::Gold => f.write_str("gold"),
        }
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "hybrid" => Ok(BenchMethod::Hybrid),
            "ms" => Ok(BenchMethod::Mixture),
            "gold" => Ok(BenchMethod::Gold),
            other => other
                .strip_prefix("gh")
                .and_then(|n| n.parse().ok())
                .filter(|&n| n >= 1)
                .map(BenchMethod::Quadrature)
                .ok_or_else(|| Error::Config(format!("unknown method '{other}' (hybrid, ms, gh<order>, gold)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sigma: f64,
    /// 1-based: interval `k` is `[(k - 1) sigma^2, k sigma^2]`.
    pub interval: usize,
    pub method: String,
    pub max_error: f64,
    pub wall_time_secs: f64,
}

/// `0.05, 0.10, ..., 4.00`.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=80).map(|k| k as f64 / 20.0).collect()
}

/// Parses `lo:hi:step` or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid '{s}' (lo:hi:step or a,b,c)"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let (lo, hi, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| lo + k as f64 * step).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

/// Max error of each method over `points` equally spaced `mu` in each of
/// the first `intervals` intervals, per sigma.
pub fn run_bench(sigmas: &[f64], intervals: usize, points: usize, methods: &[BenchMethod]) -> Result<Vec<BenchRow>> {
    if intervals == 0 || points < 2 {
        return Err(Error::Config("need at least one interval and two points".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {s}")));
    }
    let mut owned_rules: Vec<(usize, GaussHermiteRule)> = Vec::new();
    for m in methods {
        if let BenchMethod::Quadrature(n) = *m {
            if !matches!(n, 30 | 201 | 1000) && owned_rules.iter().all(|(k, _)| *k != n) {
                owned_rules.push((n, GaussHermiteRule::new(n)?));
            }
        }
    }
    let rule = |n: usize| -> &GaussHermiteRule {
        owned_rules.iter().find(|(k, _)| *k == n).map_or_else(|| cached_rule(n), |(_, r)| r)
    };
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let s2 = sigma * sigma;
        for k in 1..=intervals {
            let mus: Vec<f64> = (0..points)
                .map(|j| s2 * ((k - 1) as f64 + j as f64 / (points - 1) as f64))
                .collect();
            let gold: Vec<f64> = mus.iter().map(|&mu| oracle::phi_gold(mu, s2)).collect();
            for &method in methods {
                let start = Instant::now();
                let values: Vec<f64> = match method {
                    BenchMethod::Hybrid => mus.iter().map(|&mu| phi_hybrid(mu, s2)).collect(),
                    BenchMethod::Mixture => mus.iter().map(|&mu| phi_ms(mu, s2, logistic_k8())).collect(),
                    BenchMethod::Quadrature(n) => mus.iter().map(|&mu| phi_gh(mu, s2, rule(n))).collect(),
                    BenchMethod::Gold => mus.iter().map(|&mu| oracle::phi_trapezoid(mu, s2)).collect(),
                };
                let wall_time_secs = start.elapsed().as_secs_f64();
                let max_error = values.iter().zip(&gold).map(|(v, g)| (v - g).abs()).fold(0.0, f64::max);
                rows.push(BenchRow { sigma, interval: k, method: method.to_string(), max_error, wall_time_secs });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_methods_parse() {
        let g = parse_grid("0.05:4.00:0.05").unwrap();
        assert_eq!(g.len(), 80);
        assert!((g[79] - 4.0).abs() < 1e-12);
        assert_eq!(parse_grid("0.5, 1").unwrap(), vec![0.5, 1.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert_eq!("gh30".parse::<BenchMethod>().unwrap(), BenchMethod::Quadrature(30));
        assert!("gh".parse::<BenchMethod>().is_err());
        assert_eq!(default_sigma_grid().len(), 80);
    }

    #[test]
    fn small_bench_has_one_row_per_cell() {
        let methods = [BenchMethod::Hybrid, BenchMethod::Mixture, BenchMethod::Quadrature(20)];
        let rows = run_bench(&[0.5, 2.0], 2, 50, &methods).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().filter(|r| r.method == "hybrid").all(|r| r.max_error <= 1e-8));
    }
}
