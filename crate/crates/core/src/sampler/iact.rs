use crate::error::{Error, Result};

/// Integrated autocorrelation time `1 + 2 sum_k rho_k`, truncated by the
/// initial positive sequence rule: lags are summed in pairs and the sum stops
/// at the first nonpositive pair.
///
/// A constant series returns 1 with a warning.
pub fn iact(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 100 {
        return Err(Error::invalid(format!("IACT needs at least 100 values, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in series".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if c0 <= 1e-24 * mean * mean || c0 == 0.0 {
        log::warn!("degenerate constant series; IACT set to 1");
        return Ok(1.0);
    }
    let rho = |lag: usize| -> f64 {
        let s: f64 = centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum();
        s / n as f64 / c0
    };
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < n / 2 {
        let pair = if m == 0 { 1.0 + rho(1) } else { rho(2 * m) + rho(2 * m + 1) };
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    Ok(tau.max(1.0))
}
