//! The two bundled case studies and their run schedules.

use std::fmt;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Dataset, ModelConfig, ModelSpec, Table};
use crate::sampler::{BetaProposal, McmcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Rats,
    Epilepsy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// With the adjustment.
    Mi,
    /// Without it.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// One tenth of the reference chain lengths.
    Desk,
    /// The reference chain lengths.
    Full,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Rats => "rats",
            Case::Epilepsy => "epilepsy",
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Mi => "mi",
            Variant::Conventional => "conventional",
        })
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

impl Variant {
    pub fn adjusted(self) -> bool {
        self == Variant::Mi
    }
}

impl Case {
    pub fn config_toml(self) -> &'static str {
        match self {
            Case::Rats => include_str!("../../configs/rats.toml"),
            Case::Epilepsy => include_str!("../../configs/epilepsy.toml"),
        }
    }

    pub fn data_csv(self) -> &'static str {
        match self {
            Case::Rats => include_str!("../../data/rats.csv"),
            Case::Epilepsy => include_str!("../../data/epilepsy.csv"),
        }
    }

    pub fn config(self) -> Result<ModelConfig> {
        ModelConfig::from_toml_str(self.config_toml())
    }

    pub fn table(self) -> Result<Table> {
        Table::from_reader(self.data_csv().as_bytes())
    }

    /// Model and data with the adjustment switched according to `variant`.
    pub fn build(self, variant: Variant) -> Result<(ModelSpec, Dataset)> {
        let (spec, data) = self.config()?.build(&self.table()?)?;
        Ok((spec.with_adjustment(variant.adjusted()), data))
    }

    /// `(steps, burn_in, thin)`.
    pub fn schedule(self, scale: Scale) -> (usize, usize, usize) {
        match (self, scale) {
            (Case::Rats, Scale::Desk) => (110_000, 10_000, 10),
            (Case::Rats, Scale::Full) => (1_010_000, 10_000, 100),
            (Case::Epilepsy, Scale::Desk) => (210_000, 10_000, 20),
            (Case::Epilepsy, Scale::Full) => (2_100_000, 100_000, 200),
        }
    }

    /// Sampler settings used for reproduction. The epilepsy model moves
    /// `beta` jointly with the random effects and with a correlated proposal.
    pub fn mcmc_config(self, scale: Scale, seed: u64) -> McmcConfig {
        let (steps, burn_in, thin) = self.schedule(scale);
        let mut config = McmcConfig::new(steps, burn_in, thin, seed);
        if self == Case::Epilepsy {
            config.beta_proposal = BetaProposal::Correlated;
            config.consistent_proposals = true;
        }
        config
    }
}
