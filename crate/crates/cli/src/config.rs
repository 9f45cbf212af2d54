use std::path::{Path, PathBuf};

use bmw_core::experiment::{seed_range, SweepAxis, SystemSource};
use bmw_core::model::PolicySpec;
use serde::{Deserialize, Serialize};

/// Experiment description read from a JSON file. Command-line flags
/// override the matching fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_star: Option<f64>,
    /// `T_s`; presets default to 1, inline systems keep their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_overhead: Option<u32>,
    pub policy: Policies,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Output>,
}

fn default_horizon() -> u64 {
    2_000_000
}

fn default_warmup() -> u64 {
    200_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Policies {
    One(PolicySpec),
    Many(Vec<PolicySpec>),
}

impl Policies {
    pub fn to_vec(&self) -> Vec<PolicySpec> {
        match self {
            Policies::One(p) => vec![*p],
            Policies::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { base_seed: u64, count: usize },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Range { base_seed: 1, count: 10 }
    }
}

impl Seeds {
    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { base_seed, count } => seed_range(*base_seed, *count),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Format,
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}
