//! Link functions `g` and their inverses `h` for the supported GLMM families.
//!
//! Every link is a pure function; nothing here allocates or holds state.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven supported links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Identity,
    Log,
    Probit,
    Logit,
    #[serde(rename = "cloglog")]
    CLogLog,
    Sqrt,
    Reciprocal,
}

impl LinkFunction {
    pub const ALL: [LinkFunction; 7] = [
        LinkFunction::Identity,
        LinkFunction::Log,
        LinkFunction::Probit,
        LinkFunction::Logit,
        LinkFunction::CLogLog,
        LinkFunction::Sqrt,
        LinkFunction::Reciprocal,
    ];

    /// Lowercase name used in configuration files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::Log => "log",
            LinkFunction::Probit => "probit",
            LinkFunction::Logit => "logit",
            LinkFunction::CLogLog => "cloglog",
            LinkFunction::Sqrt => "sqrt",
            LinkFunction::Reciprocal => "reciprocal",
        }
    }

    /// True when `h` maps the whole real line into (0, 1).
    pub fn is_bounded(self) -> bool {
        matches!(
            self,
            LinkFunction::Probit | LinkFunction::Logit | LinkFunction::CLogLog
        )
    }

    /// True when `h` is increasing. Only the reciprocal link is decreasing.
    pub fn is_increasing(self) -> bool {
        self != LinkFunction::Reciprocal
    }

    /// Whether `eta` lies in the domain of `h`.
    pub fn eta_in_domain(self, eta: f64) -> bool {
        match self {
            LinkFunction::Sqrt => eta >= 0.0,
            LinkFunction::Reciprocal => eta > 0.0,
            _ => !eta.is_nan(),
        }
    }

    /// Whether `mu` lies strictly inside the range of `h`, where `g` is finite.
    pub fn mu_in_range(self, mu: f64) -> bool {
        match self {
            LinkFunction::Identity => mu.is_finite(),
            LinkFunction::Log | LinkFunction::Reciprocal => mu > 0.0 && mu.is_finite(),
            LinkFunction::Sqrt => mu >= 0.0 && mu.is_finite(),
            LinkFunction::Probit | LinkFunction::Logit | LinkFunction::CLogLog => {
                mu > 0.0 && mu < 1.0
            }
        }
    }

    /// `h(eta)` without domain checks. For `Sqrt` this is `eta^2` on the whole
    /// real line, which is what the defining integral of the adjustment uses.
    #[inline]
    pub fn inverse_unchecked(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => eta,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Probit => normal_cdf(eta),
            LinkFunction::Logit => logistic(eta),
            LinkFunction::CLogLog => -(-eta.exp()).exp_m1(),
            LinkFunction::Sqrt => eta * eta,
            LinkFunction::Reciprocal => 1.0 / eta,
        }
    }

    /// `h(eta)`, rejecting values outside the link's domain.
    pub fn inverse(self, eta: f64) -> Result<f64> {
        if !self.eta_in_domain(eta) {
            return Err(Error::LinkDomain {
                link: self.name(),
                value: eta,
            });
        }
        Ok(self.inverse_unchecked(eta))
    }

    /// `g(mu)`, rejecting values on or outside the boundary of the range of `h`.
    pub fn apply(self, mu: f64) -> Result<f64> {
        if !self.mu_in_range(mu) {
            return Err(Error::LinkDomain {
                link: self.name(),
                value: mu,
            });
        }
        Ok(match self {
            LinkFunction::Identity => mu,
            LinkFunction::Log => mu.ln(),
            LinkFunction::Probit => normal_quantile(mu),
            LinkFunction::Logit => mu.ln() - (-mu).ln_1p(),
            LinkFunction::CLogLog => (-(-mu).ln_1p()).ln(),
            LinkFunction::Sqrt => mu.sqrt(),
            LinkFunction::Reciprocal => 1.0 / mu,
        })
    }

    /// `ln h(eta)` and `ln(1 - h(eta))` for the bounded links, accurate in
    /// both tails. `None` for unbounded links.
    pub fn ln_inverse_pair(self, eta: f64) -> Option<(f64, f64)> {
        match self {
            LinkFunction::Probit => Some((ln_normal_cdf(eta), ln_normal_cdf(-eta))),
            LinkFunction::Logit => Some((-softplus(-eta), -softplus(eta))),
            LinkFunction::CLogLog => {
                let e = eta.exp();
                Some(((-(-e).exp_m1()).ln(), -e))
            }
            _ => None,
        }
    }

    /// Derivative `h'(eta)`.
    pub fn inverse_derivative(self, eta: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Log => eta.exp(),
            LinkFunction::Probit => normal_pdf(eta),
            LinkFunction::Logit => {
                let p = logistic(eta);
                p * logistic(-eta)
            }
            LinkFunction::CLogLog => {
                let e = eta.exp();
                e * (-e).exp()
            }
            LinkFunction::Sqrt => 2.0 * eta,
            LinkFunction::Reciprocal => -1.0 / (eta * eta),
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LinkFunction::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown link '{s}'")))
    }
}

/// `h(eta)` for the given link.
pub fn inverse_link(link: LinkFunction, eta: f64) -> Result<f64> {
    link.inverse(eta)
}

/// `g(mu)` for the given link.
pub fn apply_link(link: LinkFunction, mu: f64) -> Result<f64> {
    link.apply(mu)
}

/// Inverse logit, evaluated on the branch that never overflows.
#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF through the complementary error function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Natural log of the standard normal CDF, accurate in the far left tail.
pub fn ln_normal_cdf(x: f64) -> f64 {
    if x > -20.0 {
        normal_cdf(x).ln()
    } else {
        // Mills-ratio expansion; relative error below 1e-10 for x < -20.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Standard normal quantile: Wichura's AS241 rational approximation followed
/// by one Newton step against [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    if !x.is_finite() {
        return x;
    }
    // Newton on the tail that keeps the residual well conditioned.
    let dens = normal_pdf(x);
    if dens <= 0.0 {
        return x;
    }
    if p < 0.5 {
        x - (normal_cdf(x) - p) / dens
    } else {
        let q = 1.0 - p;
        x + (normal_cdf(-x) - q) / dens
    }
}

fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13_731.693_765_509_46)
            * r
            + 1971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5226.495_278_852_545 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_597)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r
            + 1.0;
        return num / den;
    }
    let r0 = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r0.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_100_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_87)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_link_examples() {
        assert_eq!(inverse_link(LinkFunction::Logit, 0.0).unwrap(), 0.5);
        assert_eq!(inverse_link(LinkFunction::Sqrt, 2.0).unwrap(), 4.0);
        let v = inverse_link(LinkFunction::CLogLog, 0.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn apply_link_examples() {
        assert_eq!(apply_link(LinkFunction::Logit, 0.5).unwrap(), 0.0);
        assert_eq!(apply_link(LinkFunction::Log, 1.0).unwrap(), 0.0);
        // scipy.special.ndtri(0.975) computed independently
        let q = apply_link(LinkFunction::Probit, 0.975).unwrap();
        assert!((q - 1.959_963_984_540_054).abs() < 1e-14, "{q}");
    }

    #[test]
    fn domain_errors_name_link_and_value() {
        let err = inverse_link(LinkFunction::Sqrt, -1.0).unwrap_err();
        assert!(err.to_string().contains("sqrt") && err.to_string().contains("-1"));
        assert!(inverse_link(LinkFunction::Reciprocal, 0.0).is_err());
        assert!(apply_link(LinkFunction::Logit, 1.0).is_err());
        assert!(apply_link(LinkFunction::Probit, 0.0).is_err());
        assert!(apply_link(LinkFunction::Log, 0.0).is_err());
        assert!(apply_link(LinkFunction::Reciprocal, -2.0).is_err());
    }

    #[test]
    fn logit_saturates_cleanly() {
        assert_eq!(inverse_link(LinkFunction::Logit, 800.0).unwrap(), 1.0);
        assert_eq!(inverse_link(LinkFunction::Logit, -800.0).unwrap(), 0.0);
    }

    #[test]
    fn names_round_trip() {
        for link in LinkFunction::ALL {
            assert_eq!(link.name().parse::<LinkFunction>().unwrap(), link);
            let json = serde_json::to_string(&link).unwrap();
            assert_eq!(json, format!("\"{}\"", link.name()));
        }
        assert!("tanh".parse::<LinkFunction>().is_err());
    }

    #[test]
    fn quantile_matches_reference_values() {
        // scipy.special.ndtri reference values
        let cases = [
            (1e-300, -37.047_096_299_361_2),
            (1e-10, -6.361_340_902_404_056),
            (0.025, -1.959_963_984_540_054),
            (0.3, -0.524_400_512_708_040_9),
            (0.5, 0.0),
            (0.9, 1.281_551_565_544_600_5),
        ];
        for (p, want) in cases {
            let got = normal_quantile(p);
            assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0), "{p}: {got} vs {want}");
        }
    }

    #[test]
    fn cdf_reference_values() {
        // scipy.special.ndtr reference values
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 1.349_898_031_630_094_6e-3).abs() < 1e-17);
        assert!((normal_cdf(-10.0) / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ln_cdf_continuous_at_switch() {
        let a = ln_normal_cdf(-20.0 + 1e-9);
        let b = ln_normal_cdf(-20.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
    }
}
