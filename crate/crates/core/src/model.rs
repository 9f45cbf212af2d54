//! System topology: queues, maximal feasible schedules and the switching
//! overhead, plus the policy selector shared by the engine and the CLI.
//!
//! Queue indices are 0-based in memory. Everything that crosses a user-facing
//! boundary (serde, `Display`, violation messages) is 1-based.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::{Distribution, TrafficSpec};

/// A feasible schedule: the set of queues the server serves together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Schedule {
    members: Vec<usize>,
}

impl Schedule {
    /// Builds a schedule from 0-based queue indices. Duplicates are removed.
    pub fn new<I: IntoIterator<Item = usize>>(members: I) -> Self {
        let set: BTreeSet<usize> = members.into_iter().collect();
        Self { members: set.into_iter().collect() }
    }

    /// Builds a schedule from 1-based queue labels.
    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I) -> Result<Self> {
        let mut members = Vec::new();
        for label in labels {
            if label == 0 {
                return Err(Error::Config("queue labels are 1-based; got 0".into()));
            }
            members.push(label - 1);
        }
        Ok(Self::new(members))
    }

    pub fn singleton(queue: usize) -> Self {
        Self { members: vec![queue] }
    }

    /// Sorted 0-based members.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, queue: usize) -> bool {
        self.members.binary_search(&queue).is_ok()
    }

    pub fn is_strict_subset_of(&self, other: &Schedule) -> bool {
        self.len() < other.len() && self.members.iter().all(|&q| other.contains(q))
    }

    /// 1-based labels, as shown to users.
    pub fn labels(&self) -> Vec<usize> {
        self.members.iter().map(|q| q + 1).collect()
    }

    /// Sum of `state` over the schedule's members (the dot product `I^T x`).
    #[inline]
    pub fn weight(&self, state: &[f64]) -> f64 {
        self.members.iter().map(|&q| state[q]).sum()
    }
}

/// Sum of `state` entries over the members of `schedule`.
pub fn schedule_weight(schedule: &Schedule, state: &[f64]) -> Result<f64> {
    if let Some(&last) = schedule.members.last() {
        if last >= state.len() {
            return Err(Error::Dimension {
                expected: last + 1,
                found: state.len(),
            });
        }
    }
    Ok(schedule.weight(state))
}

impl TryFrom<Vec<usize>> for Schedule {
    type Error = Error;

    fn try_from(labels: Vec<usize>) -> Result<Self> {
        Schedule::from_labels(labels)
    }
}

impl From<Schedule> for Vec<usize> {
    fn from(s: Schedule) -> Self {
        s.labels()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, label) in self.labels().into_iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{label}")?;
        }
        f.write_str("}")
    }
}

/// A queueing system: queues, maximal schedules, switching overhead and
/// per-queue traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_queues: usize,
    pub schedules: Vec<Schedule>,
    /// Slots lost on every schedule change (`T_s`).
    pub switch_overhead: u32,
    pub traffic: Vec<TrafficSpec>,
}

impl SystemConfig {
    /// Largest number of queues served at once (`K`).
    pub fn max_concurrency(&self) -> usize {
        self.schedules.iter().map(Schedule::len).max().unwrap_or(0)
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        self.traffic.iter().map(|t| t.arrival.mean()).collect()
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.traffic.iter().map(|t| t.service.mean()).collect()
    }

    /// Normalized load `rho_i = lambda_i / mu_i`.
    pub fn loads(&self) -> Vec<f64> {
        self.traffic
            .iter()
            .map(|t| t.arrival.mean() / t.service.mean())
            .collect()
    }

    /// Largest arrival bound over all queues.
    pub fn max_arrival(&self) -> u32 {
        self.traffic.iter().map(|t| t.arrival.bound()).max().unwrap_or(0)
    }

    /// Largest service bound over all queues.
    pub fn max_service(&self) -> u32 {
        self.traffic.iter().map(|t| t.service.bound()).max().unwrap_or(0)
    }

    pub fn is_single_server(&self) -> bool {
        self.max_concurrency() == 1
    }

    /// Returns `Ok(())` or every violation found.
    pub fn validated(&self) -> Result<()> {
        let violations = validate_config(self);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(violations))
        }
    }
}

/// One reason a [`SystemConfig`] is unusable.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigViolation {
    NoQueues,
    EmptySchedule { index: usize },
    QueueOutOfRange { schedule: Schedule, queue: usize },
    DuplicateSchedule(Schedule),
    NonMaximal { schedule: Schedule, superset: Schedule },
    Uncovered { queue: usize },
    ZeroOverhead,
    TrafficLength { expected: usize, found: usize },
    Traffic { queue: usize, reason: String },
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoQueues => write!(f, "system has no queues"),
            Self::EmptySchedule { index } => write!(f, "schedule #{} is empty", index + 1),
            Self::QueueOutOfRange { schedule, queue } => {
                write!(f, "schedule {schedule} references queue {} out of range", queue + 1)
            }
            Self::DuplicateSchedule(s) => write!(f, "duplicate schedule {s}"),
            Self::NonMaximal { schedule, superset } => {
                write!(f, "non-maximal schedule {schedule} (contained in {superset})")
            }
            Self::Uncovered { queue } => write!(f, "queue {} uncovered", queue + 1),
            Self::ZeroOverhead => write!(f, "switch overhead must be at least 1 slot"),
            Self::TrafficLength { expected, found } => {
                write!(f, "expected {expected} traffic specs, found {found}")
            }
            Self::Traffic { queue, reason } => write!(f, "queue {}: {reason}", queue + 1),
        }
    }
}

/// Collects every invariant violation of `cfg`. An empty list means valid.
pub fn validate_config(cfg: &SystemConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    let n = cfg.n_queues;
    if n == 0 {
        out.push(ConfigViolation::NoQueues);
    }
    if cfg.switch_overhead < 1 {
        out.push(ConfigViolation::ZeroOverhead);
    }

    let mut in_range = Vec::with_capacity(cfg.schedules.len());
    for (index, s) in cfg.schedules.iter().enumerate() {
        if s.is_empty() {
            out.push(ConfigViolation::EmptySchedule { index });
            in_range.push(false);
            continue;
        }
        let bad: Vec<usize> = s.members().iter().copied().filter(|&q| q >= n).collect();
        for queue in &bad {
            out.push(ConfigViolation::QueueOutOfRange { schedule: s.clone(), queue: *queue });
        }
        in_range.push(bad.is_empty());
    }

    for (i, a) in cfg.schedules.iter().enumerate() {
        if a.is_empty() {
            continue;
        }
        if cfg.schedules[..i].contains(a) {
            out.push(ConfigViolation::DuplicateSchedule(a.clone()));
            continue;
        }
        if let Some(sup) = cfg.schedules.iter().find(|b| a.is_strict_subset_of(b)) {
            out.push(ConfigViolation::NonMaximal { schedule: a.clone(), superset: sup.clone() });
        }
    }

    for queue in 0..n {
        let covered = cfg
            .schedules
            .iter()
            .zip(&in_range)
            .any(|(s, &ok)| ok && s.contains(queue));
        if !covered {
            out.push(ConfigViolation::Uncovered { queue });
        }
    }

    if cfg.traffic.len() != n {
        out.push(ConfigViolation::TrafficLength { expected: n, found: cfg.traffic.len() });
    }
    for (queue, spec) in cfg.traffic.iter().enumerate() {
        if let Err(reason) = spec.check() {
            out.push(ConfigViolation::Traffic { queue, reason });
        }
    }
    out
}

/// Singleton schedules `{1}, ..., {n}` (a polling system).
pub fn singleton_schedules(n: usize) -> Vec<Schedule> {
    (0..n).map(Schedule::singleton).collect()
}

/// Bernoulli arrivals and services for every queue.
pub fn bernoulli_traffic(lambda: &[f64], mu: &[f64]) -> Vec<TrafficSpec> {
    lambda
        .iter()
        .zip(mu)
        .map(|(&l, &m)| TrafficSpec::new(Distribution::Bernoulli(l), Distribution::Bernoulli(m)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyVariant {
    #[serde(rename = "QBMW")]
    QBmw,
    #[serde(rename = "WBMW")]
    WBmw,
    #[serde(rename = "VFMW")]
    Vfmw,
    MaxWeight,
}

impl PolicyVariant {
    pub const ALL: [PolicyVariant; 4] =
        [PolicyVariant::QBmw, PolicyVariant::WBmw, PolicyVariant::Vfmw, PolicyVariant::MaxWeight];

    pub fn name(self) -> &'static str {
        match self {
            PolicyVariant::QBmw => "QBMW",
            PolicyVariant::WBmw => "WBMW",
            PolicyVariant::Vfmw => "VFMW",
            PolicyVariant::MaxWeight => "MaxWeight",
        }
    }

    pub fn uses_alpha(self) -> bool {
        !matches!(self, PolicyVariant::MaxWeight)
    }
}

impl fmt::Display for PolicyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "qbmw" => Ok(PolicyVariant::QBmw),
            "wbmw" => Ok(PolicyVariant::WBmw),
            "vfmw" => Ok(PolicyVariant::Vfmw),
            "maxweight" | "mw" => Ok(PolicyVariant::MaxWeight),
            _ => Err(Error::Config(format!("unknown policy '{s}'"))),
        }
    }
}

/// Policy variant plus its exponent `alpha` (bias exponent for the BMW
/// policies, frame exponent for VFMW, unused by Max-Weight).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub variant: PolicyVariant,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.001
}

impl PolicySpec {
    pub fn new(variant: PolicyVariant, alpha: f64) -> Result<Self> {
        let spec = Self { variant, alpha };
        spec.check()?;
        Ok(spec)
    }

    pub fn max_weight() -> Self {
        Self { variant: PolicyVariant::MaxWeight, alpha: 0.5 }
    }

    pub fn check(&self) -> Result<()> {
        if self.variant.uses_alpha() && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie strictly inside (0,1); got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Short label such as `QBMW(0.001)` or `MaxWeight`.
    pub fn label(&self) -> String {
        if self.variant.uses_alpha() {
            format!("{}({})", self.variant, self.alpha)
        } else {
            self.variant.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(sets: &[&[usize]]) -> Vec<Schedule> {
        sets.iter().map(|s| Schedule::from_labels(s.iter().copied()).unwrap()).collect()
    }

    fn polling(n: usize, rate: f64) -> SystemConfig {
        SystemConfig {
            n_queues: n,
            schedules: singleton_schedules(n),
            switch_overhead: 1,
            traffic: bernoulli_traffic(&vec![rate; n], &vec![0.5; n]),
        }
    }

    #[test]
    fn canonical_polling_config_is_valid() {
        assert!(validate_config(&polling(4, 0.1)).is_empty());
    }

    #[test]
    fn subset_schedule_is_reported() {
        let mut cfg = polling(6, 0.1);
        cfg.schedules = labels(&[&[1, 3, 5, 6], &[1, 3, 5], &[2, 4, 5, 6]]);
        let v = validate_config(&cfg);
        let msgs: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert!(msgs.iter().any(|m| m.starts_with("non-maximal schedule {1,3,5}")), "{msgs:?}");
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn uncovered_queue_is_reported() {
        let mut cfg = polling(4, 0.1);
        cfg.schedules = labels(&[&[1], &[2], &[3]]);
        let msgs: Vec<String> = validate_config(&cfg).iter().map(ToString::to_string).collect();
        assert_eq!(msgs, vec!["queue 4 uncovered".to_string()]);
    }

    #[test]
    fn zero_overhead_and_bad_rate_are_reported() {
        let mut cfg = polling(2, 0.1);
        cfg.switch_overhead = 0;
        cfg.traffic[1].arrival = Distribution::Bernoulli(1.5);
        let v = validate_config(&cfg);
        assert!(v.contains(&ConfigViolation::ZeroOverhead));
        assert!(v.iter().any(|x| matches!(x, ConfigViolation::Traffic { queue: 1, .. })));
    }

    #[test]
    fn duplicate_and_empty_schedules() {
        let mut cfg = polling(2, 0.1);
        cfg.schedules.push(Schedule::singleton(0));
        cfg.schedules.push(Schedule::new([]));
        let v = validate_config(&cfg);
        assert!(v.contains(&ConfigViolation::DuplicateSchedule(Schedule::singleton(0))));
        assert!(v.contains(&ConfigViolation::EmptySchedule { index: 3 }));
    }

    #[test]
    fn scenario_v_topology_accepts_exactly_four_schedules() {
        let four = labels(&[&[1, 3, 5, 6], &[1, 4, 5, 6], &[2, 3, 5, 6], &[2, 4, 5, 6]]);
        let mut cfg = polling(6, 0.1);
        cfg.schedules = four.clone();
        assert!(validate_config(&cfg).is_empty());
        // A fifth candidate either breaks a conflict pair or is dominated.
        for extra in [&[1usize, 2, 5, 6][..], &[3, 4, 5, 6], &[1, 3, 5]] {
            let mut c = cfg.clone();
            c.schedules.push(Schedule::from_labels(extra.iter().copied()).unwrap());
            let conflicts = crate::capacity::ConflictSpec::new(6, 4, &[(0, 1), (2, 3)]).unwrap();
            let accepted = validate_config(&c).is_empty()
                && c.schedules.iter().all(|s| conflicts.is_feasible(s));
            assert!(!accepted, "accepted {extra:?}");
        }
    }

    #[test]
    fn weight_examples() {
        let s = Schedule::from_labels([1, 3, 5, 6]).unwrap();
        assert_eq!(schedule_weight(&s, &[2.0, 9.0, 1.0, 0.0, 4.0, 3.0]).unwrap(), 10.0);
        assert_eq!(schedule_weight(&s, &[0.0; 6]).unwrap(), 0.0);
        let two = Schedule::from_labels([2]).unwrap();
        assert_eq!(schedule_weight(&two, &[5.0, 7.0, 1.0, 1.0]).unwrap(), 7.0);
        assert!(schedule_weight(&s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn schedule_serde_is_one_based() {
        let s = Schedule::from_labels([2, 4]).unwrap();
        assert_eq!(s.members(), &[1, 3]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[2,4]");
        let back: Schedule = serde_json::from_str("[4,2]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Schedule>("[0,1]").is_err());
    }

    #[test]
    fn policy_alpha_bounds() {
        assert!(PolicySpec::new(PolicyVariant::QBmw, 0.0).is_err());
        assert!(PolicySpec::new(PolicyVariant::Vfmw, 1.0).is_err());
        assert!(PolicySpec::new(PolicyVariant::WBmw, 0.5).is_ok());
        assert!(PolicySpec::new(PolicyVariant::MaxWeight, 7.0).is_ok());
        assert_eq!("w-bmw".parse::<PolicyVariant>().unwrap(), PolicyVariant::WBmw);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weight_is_linear(
                q1 in proptest::collection::vec(0.0f64..100.0, 6),
                q2 in proptest::collection::vec(0.0f64..100.0, 6),
                a in 0.0f64..10.0,
                b in 0.0f64..10.0,
                mask in 1u32..64,
            ) {
                let s = Schedule::new((0..6).filter(|i| mask & (1 << i) != 0));
                let mix: Vec<f64> = q1.iter().zip(&q2).map(|(x, y)| a * x + b * y).collect();
                let lhs = s.weight(&mix);
                let rhs = a * s.weight(&q1) + b * s.weight(&q2);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
