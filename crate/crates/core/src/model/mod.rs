//! The generative model: data, families, priors, parameter state and the
//! conditional and marginal means the sampler evaluates.

mod config;
mod eval;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::links::LinkFunction;

pub use config::{
    ingest_csv, FixedTerm, ModelConfig, PriorConfig, RandomTerm, Table, Term, VarianceTerm,
};
pub use eval::{
    conditional_mean, conditional_mean_with, log_likelihood, log_likelihood_with, log_prior,
    marginal_mean, obs_log_density, ObservationParts,
};
pub use eval::dot;
pub(crate) use eval::{ effect_sum, normal_ln_pdf, obs_log_constant, obs_log_kernel};

/// Response distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Binomial,
    Poisson,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Binomial => "binomial",
            Family::Poisson => "poisson",
        }
    }

    pub fn supports(self, link: LinkFunction) -> bool {
        use LinkFunction::*;
        match self {
            Family::Bernoulli | Family::Binomial => matches!(link, Logit | Probit | CLogLog),
            Family::Poisson => matches!(link, Log | Sqrt | Identity),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(Family::Bernoulli),
            "binomial" => Ok(Family::Binomial),
            "poisson" => Ok(Family::Poisson),
            other => Err(Error::invalid(format!("unknown family '{other}'"))),
        }
    }
}

/// Independent normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPrior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::invalid(format!(
                "prior needs a finite mean and positive variance, got N({mean}, {variance})"
            )));
        }
        Ok(NormalPrior { mean, variance })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        -0.5 * (2.0 * std::f64::consts::PI * self.variance).ln() - 0.5 * z * z / self.variance
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }
}

/// A random-effect variance `sigma^2`, sampled as `log(sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceParam {
    pub name: String,
    pub prior: NormalPrior,
}

/// One level of grouped scalar random intercepts. Each group draws its
/// variance from `variances[stratum[g]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub name: String,
    pub stratum: Vec<usize>,
}

impl LevelSpec {
    /// All groups share variance parameter `index`.
    pub fn shared(name: impl Into<String>, n_groups: usize, index: usize) -> Self {
        LevelSpec {
            name: name.into(),
            stratum: vec![index; n_groups],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.stratum.len()
    }
}

/// Family, link, priors and random-effect structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub link: LinkFunction,
    pub beta_names: Vec<String>,
    pub beta_prior: Vec<NormalPrior>,
    pub variances: Vec<VarianceParam>,
    pub levels: Vec<LevelSpec>,
    pub marginally_interpretable: bool,
}

impl ModelSpec {
    pub fn new(
        family: Family,
        link: LinkFunction,
        beta_names: Vec<String>,
        beta_prior: Vec<NormalPrior>,
        variances: Vec<VarianceParam>,
        levels: Vec<LevelSpec>,
        marginally_interpretable: bool,
    ) -> Result<Self> {
        if !family.supports(link) {
            return Err(Error::Unsupported(format!(
                "{family} family with {link} link"
            )));
        }
        if beta_names.len() != beta_prior.len() || beta_names.is_empty() {
            return Err(Error::invalid(
                "every fixed effect needs exactly one prior and at least one is required",
            ));
        }
        for prior in beta_prior.iter().chain(variances.iter().map(|v| &v.prior)) {
            NormalPrior::new(prior.mean, prior.variance)?;
        }
        for level in &levels {
            if let Some(&bad) = level.stratum.iter().find(|&&s| s >= variances.len()) {
                return Err(Error::invalid(format!(
                    "level '{}' refers to variance parameter {bad}, only {} declared",
                    level.name,
                    variances.len()
                )));
            }
        }
        Ok(ModelSpec {
            family,
            link,
            beta_names,
            beta_prior,
            variances,
            levels,
            marginally_interpretable,
        })
    }

    pub fn p(&self) -> usize {
        self.beta_names.len()
    }

    pub fn n_variances(&self) -> usize {
        self.variances.len()
    }

    /// Offsets of each level's block inside the concatenated `u` vector.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.levels.len());
        let mut total = 0;
        for level in &self.levels {
            offsets.push(total);
            total += level.n_groups();
        }
        offsets
    }

    pub fn n_effects(&self) -> usize {
        self.levels.iter().map(LevelSpec::n_groups).sum()
    }

    /// A copy with the adjustment switched on or off.
    pub fn with_adjustment(&self, on: bool) -> ModelSpec {
        ModelSpec {
            marginally_interpretable: on,
            ..self.clone()
        }
    }

    /// Initial state at the prior means with zero random effects.
    pub fn initial_state(&self) -> ParamState {
        ParamState {
            beta: self.beta_prior.iter().map(|p| p.mean).collect(),
            log_var: self.variances.iter().map(|v| v.prior.mean).collect(),
            u: vec![0.0; self.n_effects()],
        }
    }

    pub fn check_state(&self, state: &ParamState) -> Result<()> {
        if state.beta.len() != self.p()
            || state.log_var.len() != self.n_variances()
            || state.u.len() != self.n_effects()
        {
            return Err(Error::invalid(format!(
                "state dimensions ({}, {}, {}) do not match the model ({}, {}, {})",
                state.beta.len(),
                state.log_var.len(),
                state.u.len(),
                self.p(),
                self.n_variances(),
                self.n_effects()
            )));
        }
        Ok(())
    }

    /// Checks that the dataset fits this model: response support, design
    /// width and group counts per level.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.p() != self.p() {
            return Err(Error::invalid(format!(
                "design has {} columns but the model has {} fixed effects",
                data.p(),
                self.p()
            )));
        }
        if data.groups.len() != self.levels.len() {
            return Err(Error::invalid(format!(
                "dataset has {} grouping levels but the model has {}",
                data.groups.len(),
                self.levels.len()
            )));
        }
        for (level, groups) in self.levels.iter().zip(&data.groups) {
            if let Some(&g) = groups.iter().find(|&&g| g >= level.n_groups()) {
                return Err(Error::invalid(format!(
                    "level '{}' has {} groups but an observation uses group {g}",
                    level.name,
                    level.n_groups()
                )));
            }
        }
        data.check_support(self.family)
    }
}

/// `theta = (beta, log sigma^2, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub beta: Vec<f64>,
    pub log_var: Vec<f64>,
    pub u: Vec<f64>,
}

impl ParamState {
    pub fn variances(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }
}

/// Responses, optional binomial trial counts, fixed-effect design and the
/// group index of every observation at every random-effect level.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub trials: Option<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub groups: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        trials: Option<Vec<f64>>,
        x: Vec<Vec<f64>>,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = y.len();
        if x.len() != n {
            return Err(Error::invalid("design must have one row per observation"));
        }
        let p = x.first().map_or(0, Vec::len);
        if let Some(row) = x.iter().position(|r| r.len() != p) {
            return Err(Error::Data {
                row: row + 1,
                message: format!("design row has {} entries, expected {p}", x[row].len()),
            });
        }
        if let Some(t) = &trials {
            if t.len() != n {
                return Err(Error::invalid("trials must have one entry per observation"));
            }
        }
        if groups.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("every grouping level must cover all observations"));
        }
        for (i, row) in x.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) || !y[i].is_finite() {
                return Err(Error::Data {
                    row: i + 1,
                    message: "non-finite response or covariate".into(),
                });
            }
        }
        let data = Dataset { y, trials, x, groups };
        if data.has_rank_deficiency() {
            log::warn!("fixed-effect design is not of full column rank");
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn trials_of(&self, i: usize) -> f64 {
        self.trials.as_ref().map_or(1.0, |t| t[i])
    }

    /// Response support for the family.
    pub fn check_support(&self, family: Family) -> Result<()> {
        for (i, &y) in self.y.iter().enumerate() {
            let bad = |message: String| Err(Error::Data { row: i + 1, message });
            if y < 0.0 || y.fract() != 0.0 {
                return bad(format!("response {y} is not a nonnegative integer"));
            }
            match family {
                Family::Bernoulli if y > 1.0 => return bad(format!("response {y} is not 0 or 1")),
                Family::Binomial => {
                    let m = match &self.trials {
                        Some(t) => t[i],
                        None => return bad("binomial responses need trial counts".into()),
                    };
                    if m.fract() != 0.0 || m < 1.0 {
                        return bad(format!("trial count {m} is not a positive integer"));
                    }
                    if y > m {
                        return bad(format!("response {y} exceeds trial count {m}"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rows `indices` of this dataset, keeping the group labels.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            trials: self
                .trials
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            groups: self
                .groups
                .iter()
                .map(|g| indices.iter().map(|&i| g[i]).collect())
                .collect(),
        }
    }

    fn has_rank_deficiency(&self) -> bool {
        let p = self.p();
        if p == 0 || self.n() < p {
            return p > 0;
        }
        let mut gram = vec![vec![0.0; p]; p];
        for row in &self.x {
            for a in 0..p {
                for b in 0..p {
                    gram[a][b] += row[a] * row[b];
                }
            }
        }
        let scale = (0..p).map(|i| gram[i][i]).fold(0.0, f64::max).max(1e-300);
        for row in gram.iter_mut() {
            for v in row.iter_mut() {
                *v /= scale;
            }
        }
        crate::linalg::cholesky(&gram)
            .map(|l| (0..p).any(|i| l[i][i] < 1e-7))
            .unwrap_or(true)
    }
}
