//! Case-study reproduction: fits, reference-value comparisons and the
//! consistent-proposal mixing comparison.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{group_contrast, mean_sd, savage_dickey_report, tail_area, ContrastArm};
use crate::model::{Dataset, ModelSpec};
use crate::sampler::{iact, run_chain, Adaptation, ChainOutput};

use super::assets::{Case, Scale, Variant};

/// Seeded Monte Carlo size for unadjusted contrasts with links other than logit.
pub const CONTRAST_MC_SIZE: usize = 100_000;

/// One comparison against a reference value or range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    /// Reference value, when the check is a tolerance around one.
    pub target: Option<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Check {
    pub fn near(label: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Check { label: label.into(), value, target: Some(target), lo: target - tolerance, hi: target + tolerance }
    }

    pub fn within(label: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check { label: label.into(), value, target: None, lo, hi }
    }

    pub fn passed(&self) -> bool {
        self.value >= self.lo && self.value <= self.hi
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        match self.target {
            Some(t) => write!(
                f,
                "{verdict} {:<28} {:>9.4}  target {t:.3} +- {:.3}",
                self.label,
                self.value,
                0.5 * (self.hi - self.lo)
            ),
            None => write!(f, "{verdict} {:<28} {:>9.4}  range [{:.3}, {:.3}]", self.label, self.value, self.lo, self.hi),
        }
    }
}

/// A fitted case study.
#[derive(Debug, Clone)]
pub struct CaseFit {
    pub case: Case,
    pub variant: Variant,
    pub spec: ModelSpec,
    pub data: Dataset,
    pub chain: ChainOutput,
}

pub fn fit_case(case: Case, variant: Variant, scale: Scale, seed: u64) -> Result<CaseFit> {
    let (spec, data) = case.build(variant)?;
    let chain = run_chain(&spec, &data, &case.mcmc_config(scale, seed))?;
    Ok(CaseFit { case, variant, spec, data, chain })
}

impl CaseFit {
    pub fn mean(&self, name: &str) -> Result<f64> {
        let s = self.series(name)?;
        Ok(mean_sd(&s).0)
    }

    pub fn series(&self, name: &str) -> Result<Vec<f64>> {
        self.chain
            .series(name)
            .ok_or_else(|| Error::invalid(format!("no parameter named {name}")))
    }

    /// Treated minus control population-averaged survival, per draw.
    pub fn rats_contrast(&self, seed: u64) -> Result<Vec<f64>> {
        let treated = ContrastArm { covariates: vec![1.0, 1.0], variance_index: vec![0] };
        let control = ContrastArm { covariates: vec![1.0, -1.0], variance_index: vec![1] };
        group_contrast(&self.spec, &self.chain, &treated, &control, CONTRAST_MC_SIZE, seed)
    }
}

/// Reference posterior means and the tolerances they are compared with.
pub fn table_targets(case: Case, variant: Variant) -> Vec<(&'static str, f64, f64)> {
    match (case, variant) {
        (Case::Rats, Variant::Mi) => vec![
            ("beta0", 1.66, 0.15),
            ("beta1", -0.51, 0.15),
            ("sigma1", 1.54, 0.25),
            ("sigma2", 0.73, 0.20),
        ],
        (Case::Rats, Variant::Conventional) => vec![
            ("beta0", 1.99, 0.15),
            ("beta1", -0.39, 0.15),
            ("sigma1", 1.60, 0.25),
            ("sigma2", 0.75, 0.20),
        ],
        (Case::Epilepsy, v) => vec![
            ("beta0", if v == Variant::Mi { -1.19 } else { -1.38 }, 0.30),
            ("beta1", 0.88, 0.10),
            ("beta2", -0.96, 0.15),
            ("beta3", 0.35, 0.10),
            ("beta5", -0.10, 0.05),
            ("sigma", 0.50, 0.05),
            ("tau", 0.37, 0.05),
        ],
    }
}

/// Savage-Dickey range and contrast tail target for the rat models.
pub fn rats_inference_targets(variant: Variant) -> ((f64, f64), f64) {
    match variant {
        Variant::Mi => ((1.0, 1.6), 0.016),
        Variant::Conventional => ((3.4, 5.6), 0.041),
    }
}

/// Comparison of one fit with the reference values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub case: Case,
    pub variant: Variant,
    pub scale: Scale,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Informational lines: diagnostics and values without a tolerance.
    pub notes: Vec<String>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} / {} / {} scale / seed {}", self.case, self.variant, self.scale, self.seed)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        for n in &self.notes {
            writeln!(f, "  {n}")?;
        }
        Ok(())
    }
}

pub fn report(fit: &CaseFit, scale: Scale, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();
    for (name, target, tol) in table_targets(fit.case, fit.variant) {
        checks.push(Check::near(format!("mean {name}"), fit.mean(name)?, target, tol));
    }
    let mut notes = Vec::new();
    if fit.case == Case::Rats {
        let beta1 = fit.series("beta1")?;
        let bf = savage_dickey_report(&beta1, &fit.spec.beta_prior[1], 0.0)?;
        let ((lo, hi), tail_target) = rats_inference_targets(fit.variant);
        checks.push(Check::within("Bayes factor beta1 = 0", bf.value, lo, hi));
        let contrast = fit.rats_contrast(seed)?;
        checks.push(Check::near("contrast tail above 0", tail_area(&contrast, 0.0), tail_target, 0.01));
        notes.push(format!(
            "Bayes factor at bandwidth x0.75 / x1.25: {:.3} / {:.3} (bandwidth {:.4})",
            bf.narrow, bf.wide, bf.bandwidth
        ));
        notes.push(format!("beta1 tail above 0: {:.4}", tail_area(&beta1, 0.0)));
    }
    let c = &fit.chain;
    notes.push(format!(
        "acceptance beta {:.3}, alpha {:.3}, u {:.3}; wall time {:.1} s",
        c.beta.rate(),
        c.alpha.rate(),
        c.u.rate(),
        c.wall_time_secs
    ));
    let iacts: Vec<String> = c
        .column_names()
        .iter()
        .filter_map(|n| c.series(n).and_then(|s| iact(&s).ok()).map(|v| format!("{n} {v:.1}")))
        .collect();
    notes.push(format!("IACT (retained draws): {}", iacts.join(", ")));
    notes.extend(c.warnings.iter().map(|w| format!("warning: {w}")));
    Ok(Report { case: fit.case, variant: fit.variant, scale, seed, checks, notes })
}

/// Acceptance of the fixed-effect block and IACT of one coefficient, with
/// and without consistent proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingComparison {
    pub acceptance_off: f64,
    pub acceptance_on: f64,
    pub iact_off: f64,
    pub iact_on: f64,
}

/// Runs the epilepsy model with and without consistent proposals under one
/// shared `beta` proposal: a short adaptive pilot with consistent proposals
/// fixes the `beta` scales, and both runs then keep them frozen while the
/// other blocks adapt during burn-in. IACT is measured on every step.
pub fn mixing_comparison(variant: Variant, steps: usize, burn_in: usize, seed: u64, param: &str) -> Result<MixingComparison> {
    let (spec, data) = Case::Epilepsy.build(variant)?;
    let base = Case::Epilepsy.mcmc_config(Scale::Desk, seed);
    let mut pilot = base.clone();
    pilot.steps = 20_000;
    pilot.burn_in = 19_999;
    pilot.thin = 1;
    let scales = run_chain(&spec, &data, &pilot)?.scales;
    let mut runs = [0.0; 4];
    for (k, consistent) in [false, true].into_iter().enumerate() {
        let mut config = base.clone();
        config.steps = steps;
        config.burn_in = burn_in;
        config.thin = 1;
        config.scales = Some(scales.clone());
        config.adapt = Adaptation::FrozenBeta;
        config.consistent_proposals = consistent;
        let chain = run_chain(&spec, &data, &config)?;
        let series = chain
            .series(param)
            .ok_or_else(|| Error::invalid(format!("no parameter named {param}")))?;
        runs[2 * k] = chain.beta.rate();
        runs[2 * k + 1] = iact(&series)?;
    }
    Ok(MixingComparison { acceptance_off: runs[0], iact_off: runs[1], acceptance_on: runs[2], iact_on: runs[3] })
}
