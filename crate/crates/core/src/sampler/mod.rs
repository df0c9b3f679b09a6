//! Block Metropolis-Hastings for `(beta, log sigma^2, U)`.
//!
//! Each iteration updates `beta` as one block (optionally with the consistent
//! joint proposal for the random effects), then all log-variances as one
//! block, then every random effect group by group. Adjustments are recomputed
//! for every `beta` and variance proposal. Proposal scales adapt during
//! burn-in only, by a Robbins-Monro recursion on a per-block log multiplier.

mod consistent;
mod generic;
mod iact;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adjust::{Adjuster, StandardAdjuster};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    dot, effect_sum, normal_ln_pdf, obs_log_constant, obs_log_kernel, Dataset, Family, ModelSpec,
    ObservationParts, ParamState,
};

pub use consistent::{propose_beta_consistent, ConsistentShift};
pub use generic::{accept_log_ratio, mh_block_step, run_random_walk, RandomWalkOutput};
pub use iact::iact;

/// Parameter block of the update cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Beta,
    Alpha,
    U,
}

impl Block {
    fn stream(self) -> u64 {
        match self {
            Block::Beta => 1,
            Block::Alpha => 2,
            Block::U => 3,
        }
    }
}

/// Which proposal scales adapt during burn-in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adaptation {
    Off,
    #[default]
    All,
    /// Variance and random-effect scales adapt; `beta` scales stay as given.
    FrozenBeta,
}

/// Shape of the fixed-effect proposal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaProposal {
    /// Independent components scaled by the diagonal fixed-effect information.
    #[default]
    Independent,
    /// Correlated components following an approximate marginal covariance of
    /// `beta` (random effects integrated out by a working normal model).
    Correlated,
}

/// Random-walk standard deviations: one per fixed effect, one per variance
/// parameter (on the log scale) and one per random-effect level. An optional
/// correlation matrix couples the fixed-effect components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_correlation: Option<Vec<Vec<f64>>>,
    pub log_var: Vec<f64>,
    pub u: Vec<f64>,
}

impl ProposalScales {
    /// Starting scales from the diagonal of the fixed-effect information at
    /// the average response.
    pub fn initial(spec: &ModelSpec, data: &Dataset) -> Self {
        let n = data.n().max(1) as f64;
        let mean_y = data.y.iter().sum::<f64>() / n;
        let weight = |i: usize| match spec.family {
            Family::Poisson => mean_y.max(0.5),
            Family::Bernoulli | Family::Binomial => {
                let m = data.trials_of(i);
                let p = (mean_y / data.trials.as_ref().map_or(1.0, |t| t.iter().sum::<f64>() / n))
                    .clamp(0.05, 0.95);
                m * p * (1.0 - p)
            }
        };
        let p = spec.p();
        let mut info = vec![0.0; p];
        for i in 0..data.n() {
            let w = weight(i);
            for (j, v) in info.iter_mut().enumerate() {
                *v += w * data.x[i][j] * data.x[i][j];
            }
        }
        let beta = info
            .iter()
            .zip(&spec.beta_prior)
            .map(|(v, pr)| 2.38 / (p as f64).sqrt() / (v + 1.0 / pr.variance).sqrt())
            .collect();
        ProposalScales {
            beta,
            beta_correlation: None,
            log_var: vec![0.5; spec.n_variances()],
            u: vec![0.5; spec.levels.len()],
        }
    }

    /// Starting scales with correlated fixed-effect proposals taken from the
    /// inverse of `sum_c X_c^T V_c^{-1} X_c` plus the prior precision, where
    /// `V_c` is the working covariance of cluster `c` (groups of the first
    /// level): GLM working variances at `beta` plus the random-effect
    /// variances at `log_var`.
    pub fn correlated(spec: &ModelSpec, data: &Dataset, beta: &[f64], log_var: &[f64]) -> Result<Self> {
        let p = spec.p();
        let variances: Vec<f64> = log_var.iter().map(|v| v.exp()).collect();
        let working_var = |i: usize| -> f64 {
            let eta = dot(&data.x[i], beta);
            let m = data.trials_of(i);
            let d = spec.link.inverse_derivative(eta).abs().max(1e-10);
            let mu = spec.link.inverse_unchecked(eta);
            let var = match spec.family {
                Family::Poisson => mu.max(1e-10),
                Family::Bernoulli | Family::Binomial => (m * mu * (1.0 - mu)).max(1e-10),
            };
            let slope = if spec.family == Family::Poisson { d } else { m * d };
            var / (slope * slope)
        };
        let clusters: Vec<Vec<usize>> = match data.groups.first() {
            Some(g0) => {
                let mut c = vec![Vec::new(); spec.levels[0].n_groups()];
                for (i, &g) in g0.iter().enumerate() {
                    c[g].push(i);
                }
                c
            }
            None => (0..data.n()).map(|i| vec![i]).collect(),
        };
        let mut info: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let mut row = vec![0.0; p];
                row[j] = 1.0 / spec.beta_prior[j].variance;
                row
            })
            .collect();
        for members in clusters.iter().filter(|m| !m.is_empty()) {
            let k = members.len();
            let mut v = vec![vec![0.0; k]; k];
            for (a, &i) in members.iter().enumerate() {
                v[a][a] += working_var(i);
                for (b, &j) in members.iter().enumerate() {
                    for (l, level) in spec.levels.iter().enumerate() {
                        let (gi, gj) = (data.groups[l][i], data.groups[l][j]);
                        if gi == gj {
                            v[a][b] += variances[level.stratum[gi]];
                        }
                    }
                }
            }
            let v_inv = linalg::spd_inverse(&v)?;
            for a in 0..k {
                for b in 0..k {
                    let w = v_inv[a][b];
                    let (xa, xb) = (&data.x[members[a]], &data.x[members[b]]);
                    for r in 0..p {
                        for c in 0..p {
                            info[r][c] += xa[r] * w * xb[c];
                        }
                    }
                }
            }
        }
        let cov = linalg::spd_inverse(&info)?;
        let sd: Vec<f64> = (0..p).map(|j| cov[j][j].sqrt()).collect();
        let corr = (0..p)
            .map(|r| {
                (0..p)
                    .map(|c| if r == c { 1.0 } else { cov[r][c] / (sd[r] * sd[c]) })
                    .collect()
            })
            .collect();
        Ok(ProposalScales {
            beta: sd.iter().map(|v| 2.38 / (p as f64).sqrt() * v).collect(),
            beta_correlation: Some(corr),
            ..Self::initial(spec, data)
        })
    }

    /// Lower Cholesky factor of the correlation, if any.
    fn beta_factor(&self) -> Result<Option<Vec<Vec<f64>>>> {
        self.beta_correlation
            .as_ref()
            .map(|c| {
                linalg::cholesky(c).map_err(|_| {
                    Error::Config("fixed-effect proposal correlation is not positive definite".into())
                })
            })
            .transpose()
    }

    fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.p()
            || self.log_var.len() != spec.n_variances()
            || self.u.len() != spec.levels.len()
        {
            return Err(Error::Config("proposal scales do not match the model dimensions".into()));
        }
        if self.beta.iter().chain(&self.log_var).chain(&self.u).any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("proposal scales must be positive and finite".into()));
        }
        if let Some(c) = &self.beta_correlation {
            let ok = c.len() == spec.p()
                && c.iter().enumerate().all(|(r, row)| {
                    row.len() == spec.p() && (row[r] - 1.0).abs() < 1e-9 && row.iter().all(|v| v.is_finite())
                });
            if !ok {
                return Err(Error::Config("fixed-effect proposal correlation is malformed".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Starting scales; derived from the data according to `beta_proposal` when absent.
    pub scales: Option<ProposalScales>,
    pub beta_proposal: BetaProposal,
    pub adapt: Adaptation,
    pub target_acceptance: f64,
    pub consistent_proposals: bool,
    /// Retain random effects in every draw.
    pub keep_effects: bool,
    /// Starting state; the fixed-effect posterior mode with zero random effects when absent.
    pub init: Option<ParamState>,
}

impl McmcConfig {
    pub fn new(steps: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        McmcConfig {
            steps,
            burn_in,
            thin,
            seed,
            scales: None,
            beta_proposal: BetaProposal::Independent,
            adapt: Adaptation::All,
            target_acceptance: 0.35,
            consistent_proposals: false,
            keep_effects: false,
            init: None,
        }
    }

    pub fn n_draws(&self) -> usize {
        (self.steps - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.steps {
            return Err(Error::Config(format!(
                "burn-in ({}) must be below the number of steps ({})",
                self.burn_in, self.steps
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub attempts: u64,
    pub accepts: u64,
}

impl BlockStats {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }

    fn record(&mut self, accepted: bool) {
        self.attempts += 1;
        self.accepts += accepted as u64;
    }
}

/// Retained draws and post-burn-in acceptance counts of one chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub beta_names: Vec<String>,
    pub variance_names: Vec<String>,
    pub draws: Vec<ParamState>,
    pub beta: BlockStats,
    pub alpha: BlockStats,
    pub u: BlockStats,
    /// Scales in force after burn-in.
    pub scales: ProposalScales,
    pub wall_time_secs: f64,
    pub config: McmcConfig,
    pub warnings: Vec<String>,
}

impl ChainOutput {
    /// Fixed effects followed by random-effect standard deviations.
    pub fn column_names(&self) -> Vec<String> {
        self.beta_names.iter().chain(&self.variance_names).cloned().collect()
    }

    pub fn row(&self, draw: usize) -> Vec<f64> {
        let d = &self.draws[draw];
        d.beta.iter().copied().chain(d.log_var.iter().map(|v| (0.5 * v).exp())).collect()
    }

    /// Trace of a fixed effect or of a standard deviation, by name.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        if let Some(j) = self.beta_names.iter().position(|n| n == name) {
            return Some(self.draws.iter().map(|d| d.beta[j]).collect());
        }
        let k = self.variance_names.iter().position(|n| n == name)?;
        Some(self.draws.iter().map(|d| (0.5 * d.log_var[k]).exp()).collect())
    }

    pub fn beta_series(&self, j: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.beta[j]).collect()
    }
}

/// Runs one chain with the standard adjustment table.
pub fn run_chain(spec: &ModelSpec, data: &Dataset, config: &McmcConfig) -> Result<ChainOutput> {
    run_chain_with(spec, data, config, &StandardAdjuster)
}

/// Runs one chain, obtaining adjustments from `adjuster`.
pub fn run_chain_with(
    spec: &ModelSpec,
    data: &Dataset,
    config: &McmcConfig,
    adjuster: &dyn Adjuster,
) -> Result<ChainOutput> {
    config.validate()?;
    spec.check_data(data)?;
    let shift = if config.consistent_proposals {
        Some(ConsistentShift::new(spec, data)?)
    } else {
        None
    };
    let init = match &config.init {
        Some(s) => {
            spec.check_state(s)?;
            s.clone()
        }
        None => ParamState {
            beta: fixed_effect_mode(spec, data)?,
            ..spec.initial_state()
        },
    };
    let scales = match (&config.scales, config.beta_proposal) {
        (Some(s), _) => s.clone(),
        (None, BetaProposal::Independent) => ProposalScales::initial(spec, data),
        (None, BetaProposal::Correlated) => {
            ProposalScales::correlated(spec, data, &init.beta, &init.log_var)?
        }
    };
    scales.validate(spec)?;
    let beta_factor = scales.beta_factor()?;

    let start = Instant::now();
    let mut chain = Chain::new(spec, data, adjuster, init)?;
    let mut rng_beta = stream(config.seed, Block::Beta);
    let mut rng_alpha = stream(config.seed, Block::Alpha);
    let mut rng_u = stream(config.seed, Block::U);

    // log multipliers on the base scales
    let mut lam_beta = 0.0_f64;
    let mut lam_alpha = 0.0_f64;
    let mut lam_u = vec![0.0_f64; spec.levels.len()];
    let adapt_beta = config.adapt == Adaptation::All;
    let adapt_rest = config.adapt != Adaptation::Off;

    let mut out_beta = BlockStats::default();
    let mut out_alpha = BlockStats::default();
    let mut out_u = BlockStats::default();
    let mut draws = Vec::with_capacity(config.n_draws());
    let mut warnings = Vec::new();
    let mut beta_rejected_run = 0usize;
    let report_every = (config.steps / 10).max(1);

    for t in 0..config.steps {
        let burning = t < config.burn_in;
        let gain = (t as f64 + 1.0).powf(-0.6);

        let s: Vec<f64> = scales.beta.iter().map(|v| v * lam_beta.exp()).collect();
        let ok_beta = chain.step_beta(&s, beta_factor.as_deref(), shift.as_ref(), &mut rng_beta);
        if spec.n_variances() > 0 {
            let s: Vec<f64> = scales.log_var.iter().map(|v| v * lam_alpha.exp()).collect();
            let ok_alpha = chain.step_alpha(&s, &mut rng_alpha);
            if burning && adapt_rest {
                lam_alpha = adapt(lam_alpha, gain, ok_alpha as u8 as f64, config.target_acceptance);
            } else if !burning {
                out_alpha.record(ok_alpha);
            }
        }
        for l in 0..spec.levels.len() {
            let (acc, tried) = chain.sweep_level(l, scales.u[l] * lam_u[l].exp(), &mut rng_u);
            if burning && adapt_rest {
                lam_u[l] = adapt(lam_u[l], gain, acc as f64 / tried as f64, config.target_acceptance);
            } else if !burning {
                out_u.attempts += tried as u64;
                out_u.accepts += acc as u64;
            }
        }
        chain.refresh_total();

        if burning {
            if adapt_beta {
                lam_beta = adapt(lam_beta, gain, ok_beta as u8 as f64, config.target_acceptance);
            }
        } else {
            out_beta.record(ok_beta);
            beta_rejected_run = if ok_beta { 0 } else { beta_rejected_run + 1 };
            if beta_rejected_run == 10_000 {
                let msg = format!("fixed-effect block rejected 10000 consecutive proposals by step {t}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            if (t - config.burn_in + 1).is_multiple_of(config.thin) {
                let mut d = chain.state.clone();
                if !config.keep_effects {
                    d.u = Vec::new();
                }
                draws.push(d);
            }
        }
        if (t + 1) % report_every == 0 {
            log::info!(
                "step {}/{}: log-likelihood {:.3}, beta acceptance {:.3}",
                t + 1,
                config.steps,
                chain.total,
                out_beta.rate()
            );
        }
    }
    if chain.failed_proposals > 0 {
        warnings.push(format!(
            "{} proposals could not be evaluated and were rejected",
            chain.failed_proposals
        ));
    }

    let scale_by = |v: &[f64], lam: f64| v.iter().map(|x| x * lam.exp()).collect::<Vec<_>>();
    Ok(ChainOutput {
        beta_names: spec.beta_names.clone(),
        variance_names: spec.variances.iter().map(|v| v.name.clone()).collect(),
        draws,
        beta: out_beta,
        alpha: out_alpha,
        u: out_u,
        scales: ProposalScales {
            beta: scale_by(&scales.beta, lam_beta),
            beta_correlation: scales.beta_correlation.clone(),
            log_var: scale_by(&scales.log_var, lam_alpha),
            u: scales.u.iter().zip(&lam_u).map(|(s, l)| s * l.exp()).collect(),
        },
        wall_time_secs: start.elapsed().as_secs_f64(),
        config: config.clone(),
        warnings,
    })
}

fn stream(seed: u64, block: Block) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block.stream());
    rng
}

fn adapt(lam: f64, gain: f64, accepted: f64, target: f64) -> f64 {
    (lam + gain * (accepted - target)).clamp(-20.0, 8.0)
}

/// Current state with cached per-observation quantities.
struct Chain<'a> {
    spec: &'a ModelSpec,
    data: &'a Dataset,
    adjuster: &'a dyn Adjuster,
    offsets: Vec<usize>,
    /// `members[level][group]`: observations in the group.
    members: Vec<Vec<Vec<usize>>>,
    state: ParamState,
    parts: ObservationParts,
    /// Random-effect sum per observation.
    esum: Vec<f64>,
    eta: Vec<f64>,
    /// Log-likelihood kernel per observation.
    ll: Vec<f64>,
    total: f64,
    failed_proposals: usize,
}

impl<'a> Chain<'a> {
    fn new(spec: &'a ModelSpec, data: &'a Dataset, adjuster: &'a dyn Adjuster, state: ParamState) -> Result<Self> {
        let offsets = spec.level_offsets();
        let members = spec
            .levels
            .iter()
            .zip(&data.groups)
            .map(|(level, groups)| {
                let mut m = vec![Vec::new(); level.n_groups()];
                for (i, &g) in groups.iter().enumerate() {
                    m[g].push(i);
                }
                m
            })
            .collect();
        let parts = ObservationParts::compute(spec, data, &state.beta, &state.log_var, adjuster)?;
        let esum: Vec<f64> = (0..data.n()).map(|i| effect_sum(data, &offsets, &state.u, i)).collect();
        let eta: Vec<f64> = (0..data.n()).map(|i| parts.eta(i, esum[i])).collect();
        let ll: Vec<f64> = (0..data.n()).map(|i| kernel(spec, data, i, eta[i])).collect();
        let total = ll.iter().sum::<f64>();
        if !total.is_finite() {
            return Err(Error::Numeric("log-likelihood at the starting state is not finite".into()));
        }
        Ok(Chain {
            spec,
            data,
            adjuster,
            offsets,
            members,
            state,
            parts,
            esum,
            eta,
            ll,
            total,
            failed_proposals: 0,
        })
    }

    fn proposal_parts(&mut self, beta: &[f64], log_var: &[f64]) -> Option<ObservationParts> {
        match ObservationParts::compute(self.spec, self.data, beta, log_var, self.adjuster) {
            Ok(p) => Some(p),
            Err(Error::ModelUndefined { .. }) => None,
            Err(e) => {
                if self.failed_proposals == 0 {
                    log::warn!("rejecting a proposal that could not be evaluated: {e}");
                }
                self.failed_proposals += 1;
                None
            }
        }
    }

    fn likelihood_with(&self, parts: &ObservationParts, esum: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let n = self.data.n();
        let mut eta = Vec::with_capacity(n);
        let mut ll = Vec::with_capacity(n);
        let mut total = 0.0;
        for i in 0..n {
            let e = parts.eta(i, esum[i]);
            let l = kernel(self.spec, self.data, i, e);
            total += l;
            eta.push(e);
            ll.push(l);
        }
        (eta, ll, total)
    }

    fn effects_prior(&self, u: &[f64], log_var: &[f64]) -> f64 {
        let mut total = 0.0;
        for (level, off) in self.spec.levels.iter().zip(&self.offsets) {
            for (g, &s) in level.stratum.iter().enumerate() {
                total += normal_ln_pdf(u[off + g], log_var[s]);
            }
        }
        total
    }

    fn beta_prior(&self, beta: &[f64]) -> f64 {
        self.spec.beta_prior.iter().zip(beta).map(|(p, b)| p.ln_pdf(*b)).sum()
    }

    fn step_beta(
        &mut self,
        scales: &[f64],
        factor: Option<&[Vec<f64>]>,
        shift: Option<&ConsistentShift>,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let z: Vec<f64> = (0..scales.len()).map(|_| rng.sample(StandardNormal)).collect();
        let z = match factor {
            Some(l) => l.iter().map(|row| dot(row, &z)).collect(),
            None => z,
        };
        let beta: Vec<f64> = self
            .state
            .beta
            .iter()
            .zip(scales)
            .zip(&z)
            .map(|((b, s), z)| b + s * z)
            .collect();
        let u_log = rng.random::<f64>().ln();
        let Some(parts) = self.proposal_parts(&beta, &self.state.log_var.clone()) else {
            return false;
        };
        let mut log_ratio = self.beta_prior(&beta) - self.beta_prior(&self.state.beta);
        let (candidate_u, esum) = match shift {
            Some(shift) => {
                let cand = shift.apply(&self.state, &beta);
                log_ratio += self.effects_prior(&cand.u, &self.state.log_var)
                    - self.effects_prior(&self.state.u, &self.state.log_var);
                let esum: Vec<f64> = (0..self.data.n())
                    .map(|i| effect_sum(self.data, &self.offsets, &cand.u, i))
                    .collect();
                (Some(cand.u), esum)
            }
            None => (None, self.esum.clone()),
        };
        let (eta, ll, total) = self.likelihood_with(&parts, &esum);
        log_ratio += total - self.total;
        if !(u_log < log_ratio) || log_ratio.is_nan() {
            return false;
        }
        self.state.beta = beta;
        if let Some(u) = candidate_u {
            self.state.u = u;
        }
        self.parts = parts;
        self.esum = esum;
        self.eta = eta;
        self.ll = ll;
        self.total = total;
        true
    }

    fn step_alpha(&mut self, scales: &[f64], rng: &mut ChaCha8Rng) -> bool {
        let log_var: Vec<f64> = self
            .state
            .log_var
            .iter()
            .zip(scales)
            .map(|(v, s)| v + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u_log = rng.random::<f64>().ln();
        let Some(parts) = self.proposal_parts(&self.state.beta.clone(), &log_var) else {
            return false;
        };
        let prior = |lv: &[f64]| -> f64 {
            self.spec.variances.iter().zip(lv).map(|(v, x)| v.prior.ln_pdf(*x)).sum()
        };
        let mut log_ratio = prior(&log_var) - prior(&self.state.log_var)
            + self.effects_prior(&self.state.u, &log_var)
            - self.effects_prior(&self.state.u, &self.state.log_var);
        let (eta, ll, total) = self.likelihood_with(&parts, &self.esum);
        log_ratio += total - self.total;
        if !(u_log < log_ratio) || log_ratio.is_nan() {
            return false;
        }
        self.state.log_var = log_var;
        self.parts = parts;
        self.eta = eta;
        self.ll = ll;
        self.total = total;
        true
    }

    /// One Metropolis decision per group of `level`; returns (accepted, tried).
    fn sweep_level(&mut self, level: usize, scale: f64, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let off = self.offsets[level];
        let n_groups = self.spec.levels[level].n_groups();
        let mut accepted = 0;
        for g in 0..n_groups {
            let d = scale * rng.sample::<f64, _>(StandardNormal);
            let u_log = rng.random::<f64>().ln();
            let idx = off + g;
            let lv = self.state.log_var[self.spec.levels[level].stratum[g]];
            let old = self.state.u[idx];
            let mut log_ratio = normal_ln_pdf(old + d, lv) - normal_ln_pdf(old, lv);
            for &i in &self.members[level][g] {
                log_ratio += kernel(self.spec, self.data, i, self.eta[i] + d) - self.ll[i];
            }
            if u_log < log_ratio {
                self.state.u[idx] = old + d;
                for &i in &self.members[level][g] {
                    self.esum[i] += d;
                    self.eta[i] += d;
                    self.ll[i] = kernel(self.spec, self.data, i, self.eta[i]);
                }
                accepted += 1;
            }
        }
        (accepted, n_groups)
    }

    fn refresh_total(&mut self) {
        self.total = self.ll.iter().sum();
    }
}

#[inline]
fn kernel(spec: &ModelSpec, data: &Dataset, i: usize, eta: f64) -> f64 {
    obs_log_kernel(spec.family, spec.link, data.y[i], data.trials_of(i), eta)
}

/// Posterior mode of `beta` with every random effect and adjustment at zero,
/// by damped Newton steps on finite-difference derivatives.
pub fn fixed_effect_mode(spec: &ModelSpec, data: &Dataset) -> Result<Vec<f64>> {
    let p = spec.p();
    let objective = |beta: &[f64]| -> f64 {
        let mut total: f64 = spec.beta_prior.iter().zip(beta).map(|(pr, b)| pr.ln_pdf(*b)).sum();
        for i in 0..data.n() {
            let eta = dot(&data.x[i], beta);
            total += obs_log_kernel(spec.family, spec.link, data.y[i], data.trials_of(i), eta)
                + obs_log_constant(spec.family, data.y[i], data.trials_of(i));
        }
        total
    };
    let gradient = |beta: &[f64]| -> Vec<f64> {
        (0..p)
            .map(|j| {
                let h = 1e-5 * beta[j].abs().max(1.0);
                let mut a = beta.to_vec();
                let mut b = beta.to_vec();
                a[j] += h;
                b[j] -= h;
                (objective(&a) - objective(&b)) / (2.0 * h)
            })
            .collect()
    };
    let mut beta: Vec<f64> = spec.beta_prior.iter().map(|pr| pr.mean).collect();
    if spec.link == crate::links::LinkFunction::Sqrt || spec.link == crate::links::LinkFunction::Identity {
        // start inside the valid region of the mean
        let mean_y = data.y.iter().sum::<f64>() / data.n().max(1) as f64;
        beta = vec![0.0; p];
        if let Some(j) = (0..p).find(|&j| data.x.iter().all(|r| r[j] == 1.0)) {
            beta[j] = if spec.link == crate::links::LinkFunction::Sqrt {
                mean_y.max(0.25).sqrt()
            } else {
                mean_y.max(0.25)
            };
        }
    }
    let mut value = objective(&beta);
    if !value.is_finite() {
        return Ok(beta);
    }
    for _ in 0..100 {
        let g = gradient(&beta);
        let mut hess = vec![vec![0.0; p]; p];
        for j in 0..p {
            let h = 1e-4 * beta[j].abs().max(1.0);
            let mut a = beta.clone();
            let mut b = beta.clone();
            a[j] += h;
            b[j] -= h;
            let (ga, gb) = (gradient(&a), gradient(&b));
            for k in 0..p {
                hess[j][k] = -(ga[k] - gb[k]) / (2.0 * h);
            }
        }
        for j in 0..p {
            for k in 0..j {
                let m = 0.5 * (hess[j][k] + hess[k][j]);
                hess[j][k] = m;
                hess[k][j] = m;
            }
        }
        let Ok(step) = linalg::solve(hess, g.clone()) else {
            break;
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let v = objective(&trial);
            if v.is_finite() && v >= value {
                moved = v - value > 1e-12 * value.abs().max(1.0);
                beta = trial;
                value = v;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok(beta)
}
