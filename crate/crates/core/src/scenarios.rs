//! Named experiment presets `S1`..`S8`.
//!
//! S1 and S2 have fixed rates. S3 to S8 scale a rate pattern to a requested
//! utilization factor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capacity::calibrate_arrivals;
use crate::error::{Error, Result};
use crate::model::{bernoulli_traffic, singleton_schedules, Schedule, SystemConfig};
use crate::traffic::{Distribution, TrafficSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
    S7,
    S8,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::S1,
        Scenario::S2,
        Scenario::S3,
        Scenario::S4,
        Scenario::S5,
        Scenario::S6,
        Scenario::S7,
        Scenario::S8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
            Scenario::S5 => "S5",
            Scenario::S6 => "S6",
            Scenario::S7 => "S7",
            Scenario::S8 => "S8",
        }
    }

    /// Whether the preset takes a target utilization factor.
    pub fn calibrated(self) -> bool {
        !matches!(self, Scenario::S1 | Scenario::S2)
    }

    pub fn n_queues(self) -> usize {
        match self {
            Scenario::S1 | Scenario::S2 | Scenario::S3 | Scenario::S4 => 4,
            Scenario::S5 | Scenario::S6 => 6,
            Scenario::S7 | Scenario::S8 => 8,
        }
    }

    /// Arrival rates (S1, S2) or the rate pattern scaled by calibration.
    pub fn arrival_pattern(self) -> Vec<f64> {
        match self {
            Scenario::S1 => vec![0.11875; 4],
            Scenario::S2 => vec![0.08, 0.25, 0.09, 0.01],
            Scenario::S3 => vec![0.125; 4],
            Scenario::S4 => vec![0.25, 0.15, 0.075, 0.025],
            Scenario::S5 => vec![0.18, 0.16, 0.25, 0.3, 0.9, 0.8],
            Scenario::S6 => vec![0.35, 0.15, 0.3, 0.2, 0.5, 0.5],
            Scenario::S7 => vec![0.1, 0.5, 0.1, 0.3, 0.1, 0.5, 0.1, 0.3],
            Scenario::S8 => vec![0.02, 0.26, 0.24, 0.48, 0.24, 0.48, 0.02, 0.26],
        }
    }

    pub fn service_rates(self) -> Vec<f64> {
        match self {
            Scenario::S2 => vec![0.8, 0.5, 0.3, 0.2],
            Scenario::S5 => vec![0.3, 0.4, 0.5, 0.6, 0.9, 0.8],
            Scenario::S7 | Scenario::S8 => vec![1.0; 8],
            other => vec![0.5; other.n_queues()],
        }
    }

    pub fn default_schedules(self) -> Vec<Schedule> {
        let labels = |sets: &[&[usize]]| -> Vec<Schedule> {
            sets.iter()
                .map(|s| Schedule::from_labels(s.iter().copied()).expect("static labels are valid"))
                .collect()
        };
        match self {
            Scenario::S5 | Scenario::S6 => {
                labels(&[&[1, 3, 5, 6], &[1, 4, 5, 6], &[2, 3, 5, 6], &[2, 4, 5, 6]])
            }
            // Queues: 1 N-left, 2 N-through, 3 S-left, 4 S-through,
            // 5 E-left, 6 E-through, 7 W-left, 8 W-through.
            Scenario::S7 | Scenario::S8 => {
                labels(&[&[2, 4], &[1, 3], &[6, 8], &[5, 7], &[1, 2], &[5, 6]])
            }
            other => singleton_schedules(other.n_queues()),
        }
    }

    fn traffic(self, lambda: &[f64]) -> Vec<TrafficSpec> {
        match self {
            Scenario::S7 | Scenario::S8 => lambda
                .iter()
                .map(|&l| TrafficSpec::new(Distribution::Bernoulli(l), Distribution::Deterministic(1)))
                .collect(),
            _ => bernoulli_traffic(lambda, &self.service_rates()),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}' (expected S1..S8)")))
    }
}

/// Builds the named preset. `beta_star` is required for S3..S8 and
/// rejected for S1 and S2.
pub fn preset(name: &str, beta_star: Option<f64>, switch_overhead: u32) -> Result<SystemConfig> {
    let scenario: Scenario = name.parse()?;
    build(scenario, beta_star, switch_overhead, None)
}

/// Like [`preset`] with a replacement schedule set.
pub fn preset_with_schedules(
    name: &str,
    beta_star: Option<f64>,
    switch_overhead: u32,
    schedules: Vec<Schedule>,
) -> Result<SystemConfig> {
    let scenario: Scenario = name.parse()?;
    build(scenario, beta_star, switch_overhead, Some(schedules))
}

pub fn build(
    scenario: Scenario,
    beta_star: Option<f64>,
    switch_overhead: u32,
    schedules: Option<Vec<Schedule>>,
) -> Result<SystemConfig> {
    if switch_overhead == 0 {
        return Err(Error::Config("switching overhead must be at least 1 slot".into()));
    }
    let schedules = schedules.unwrap_or_else(|| scenario.default_schedules());
    let lambda = match (scenario.calibrated(), beta_star) {
        (false, None) => scenario.arrival_pattern(),
        (false, Some(_)) => {
            return Err(Error::Config(format!("{scenario} has fixed rates and takes no beta_star")));
        }
        (true, None) => return Err(Error::Config(format!("{scenario} requires beta_star"))),
        (true, Some(target)) => calibrate_arrivals(
            &scenario.arrival_pattern(),
            &scenario.service_rates(),
            &schedules,
            target,
        )?,
    };
    let config = SystemConfig {
        n_queues: scenario.n_queues(),
        schedules,
        switch_overhead,
        traffic: scenario.traffic(&lambda),
    };
    config.validated()?;
    Ok(config)
}
