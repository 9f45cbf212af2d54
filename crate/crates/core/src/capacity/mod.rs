//! Schedule enumeration and the utilization factor.
//!
//! The utilization factor is the value of the covering LP
//!
//! ```text
//! beta* = min 1^T beta   s.t.  sum_j beta_j I^(j) >= rho,  beta >= 0
//! ```
//!
//! and `epsilon* = 1 - beta*` is the distance to the capacity boundary. The
//! solver works on the dual (`max rho^T y` s.t. `y^T I^(j) <= 1`), whose slack
//! basis is feasible, and reads the primal weights off the final reduced
//! costs.

mod oracle;
mod simplex;

use serde::{Deserialize, Serialize};

pub use oracle::{lp_oracle, MAX_DIM as ORACLE_MAX_DIM};

use crate::error::{Error, Result};
use crate::model::Schedule;

/// Largest system accepted by [`enumerate_maximal_schedules`].
pub const MAX_ENUMERATION_QUEUES: usize = 24;

/// Pairwise conflicts plus a cap on simultaneously served queues.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictSpec {
    n_queues: usize,
    max_concurrency: usize,
    /// Bit `j` of `conflicts[i]` is set iff queues `i` and `j` conflict.
    conflicts: Vec<u32>,
}

impl ConflictSpec {
    /// `pairs` are 0-based.
    pub fn new(n_queues: usize, max_concurrency: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if n_queues > MAX_ENUMERATION_QUEUES {
            return Err(Error::TooLarge(format!(
                "schedule enumeration supports at most {MAX_ENUMERATION_QUEUES} queues, got {n_queues}"
            )));
        }
        if max_concurrency == 0 {
            return Err(Error::Config("max concurrency must be positive".into()));
        }
        let mut conflicts = vec![0u32; n_queues];
        for &(a, b) in pairs {
            if a >= n_queues || b >= n_queues || a == b {
                return Err(Error::Config(format!(
                    "invalid conflict pair ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
            conflicts[a] |= 1 << b;
            conflicts[b] |= 1 << a;
        }
        Ok(Self { n_queues, max_concurrency, conflicts })
    }

    pub fn n_queues(&self) -> usize {
        self.n_queues
    }

    pub fn max_concurrency(&self) -> usize {
        self.max_concurrency
    }

    pub fn conflict(&self, a: usize, b: usize) -> bool {
        self.conflicts[a] & (1 << b) != 0
    }

    pub fn is_feasible(&self, s: &Schedule) -> bool {
        s.len() <= self.max_concurrency
            && s.members().iter().all(|&q| q < self.n_queues)
            && s.members()
                .iter()
                .enumerate()
                .all(|(i, &a)| s.members()[i + 1..].iter().all(|&b| !self.conflict(a, b)))
    }
}

/// Every conflict-free set of at most `K` queues that no queue can extend,
/// in lexicographic order of sorted members.
pub fn enumerate_maximal_schedules(spec: &ConflictSpec) -> Result<Vec<Schedule>> {
    if spec.n_queues > MAX_ENUMERATION_QUEUES {
        return Err(Error::TooLarge(format!("{} queues", spec.n_queues)));
    }
    let mut out = Vec::new();
    let mut members = Vec::new();
    extend(spec, 0, 0, &mut members, &mut out);
    Ok(out)
}

// Pre-order DFS over increasing member sequences; a set is emitted when
// nothing (not only larger indices) can be added.
fn extend(spec: &ConflictSpec, next: usize, mask: u32, members: &mut Vec<usize>, out: &mut Vec<Schedule>) {
    if !members.is_empty() {
        let blocked = members.iter().fold(mask, |acc, &q| acc | spec.conflicts[q]);
        let full = members.len() == spec.max_concurrency;
        let extendable = !full && (0..spec.n_queues).any(|q| blocked & (1 << q) == 0);
        if !extendable {
            out.push(Schedule::new(members.iter().copied()));
            return;
        }
    }
    if members.len() == spec.max_concurrency {
        return;
    }
    for q in next..spec.n_queues {
        if mask & (1 << q) != 0 || members.iter().any(|&m| spec.conflict(m, q)) {
            continue;
        }
        members.push(q);
        extend(spec, q + 1, mask | (1 << q), members, out);
        members.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub beta_star: f64,
    pub epsilon_star: f64,
    /// Time share of each schedule achieving `beta_star`.
    pub weights: Vec<f64>,
    /// False iff some queue with positive load is in no schedule.
    pub feasible: bool,
}

impl CapacityResult {
    pub(crate) fn feasible(beta_star: f64, weights: Vec<f64>) -> Self {
        Self { beta_star, epsilon_star: 1.0 - beta_star, weights, feasible: true }
    }

    pub(crate) fn infeasible(n_schedules: usize) -> Self {
        Self {
            beta_star: f64::INFINITY,
            epsilon_star: f64::NEG_INFINITY,
            weights: vec![0.0; n_schedules],
            feasible: false,
        }
    }
}

/// Utilization factor of load vector `rho` under `schedules`.
///
/// An uncovered queue with positive load yields `feasible = false` rather
/// than an error so callers can report it alongside the other results.
pub fn utilization_factor(rho: &[f64], schedules: &[Schedule]) -> Result<CapacityResult> {
    let n = rho.len();
    if let Some(s) = schedules.iter().find(|s| s.members().iter().any(|&q| q >= n)) {
        return Err(Error::Dimension { expected: n, found: s.members()[s.len() - 1] + 1 });
    }
    if rho.iter().any(|&r| !r.is_finite() || r < 0.0) {
        return Err(Error::Config("loads must be finite and nonnegative".into()));
    }
    let covered = |q: usize| schedules.iter().any(|s| s.contains(q));
    if (0..n).any(|q| rho[q] > 0.0 && !covered(q)) {
        return Ok(CapacityResult::infeasible(schedules.len()));
    }

    // dual: max rho^T y  s.t.  for each schedule j: sum_{i in j} y_i <= 1
    let a: Vec<Vec<f64>> = schedules
        .iter()
        .map(|s| (0..n).map(|q| if s.contains(q) { 1.0 } else { 0.0 }).collect())
        .collect();
    let b = vec![1.0; schedules.len()];
    match simplex::maximize(&a, &b, rho) {
        simplex::Outcome::Optimal { duals, .. } => {
            let weights: Vec<f64> =
                duals.into_iter().map(|w| if w < simplex::TOL * 1e-3 { 0.0 } else { w }).collect();
            let beta_star = weights.iter().sum();
            Ok(CapacityResult::feasible(beta_star, weights))
        }
        // covered queues bound every y_i by 1, so this only happens on bad input
        simplex::Outcome::Unbounded => Ok(CapacityResult::infeasible(schedules.len())),
    }
}

/// Scales `pattern` so that the resulting arrival rates have utilization
/// factor `target_beta`.
pub fn calibrate_arrivals(
    pattern: &[f64],
    mu: &[f64],
    schedules: &[Schedule],
    target_beta: f64,
) -> Result<Vec<f64>> {
    if !(target_beta > 0.0 && target_beta < 1.0) {
        return Err(Error::Config(format!(
            "target utilization must lie strictly inside (0,1); got {target_beta}"
        )));
    }
    if pattern.len() != mu.len() {
        return Err(Error::Dimension { expected: pattern.len(), found: mu.len() });
    }
    let rho: Vec<f64> = pattern.iter().zip(mu).map(|(l, m)| l / m).collect();
    let base = utilization_factor(&rho, schedules)?;
    if !base.feasible {
        let queue = (0..rho.len())
            .find(|&q| rho[q] > 0.0 && !schedules.iter().any(|s| s.contains(q)))
            .unwrap_or(0);
        return Err(Error::Uncovered { queue: queue + 1 });
    }
    if base.beta_star <= 0.0 {
        return Err(Error::Config("pattern has zero load; cannot calibrate".into()));
    }
    let scale = target_beta / base.beta_star;
    Ok(pattern.iter().map(|p| p * scale).collect())
}
