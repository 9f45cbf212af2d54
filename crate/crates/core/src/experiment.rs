//! Replications and parameter sweeps.
//!
//! Every `(point, seed)` pair is an independent simulation. Work is spread
//! over the rayon pool and results are returned sorted by point, then seed.
//! Seeds are shared across points, so compared policies see the same
//! arrival and service samples.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, SimOptions};
use crate::error::{Error, Result};
use crate::metrics::{finalize, Estimate, SimReport};
use crate::model::{PolicySpec, Schedule, SystemConfig};
use crate::scenarios::{self, Scenario};
use crate::traffic::Distribution;

/// Where a point's system comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    Preset {
        scenario: Scenario,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedules: Option<Vec<Schedule>>,
    },
    Inline(SystemConfig),
}

impl SystemSource {
    pub fn label(&self) -> String {
        match self {
            SystemSource::Preset { scenario, .. } => scenario.to_string(),
            SystemSource::Inline(_) => "custom".into(),
        }
    }

    /// Materializes the system at `beta_star` (if any) and `switch_overhead`
    /// (if any; inline systems keep their own otherwise).
    pub fn build(&self, beta_star: Option<f64>, switch_overhead: Option<u32>) -> Result<SystemConfig> {
        match self {
            SystemSource::Preset { scenario, schedules } => {
                scenarios::build(*scenario, beta_star, switch_overhead.unwrap_or(1), schedules.clone())
            }
            SystemSource::Inline(base) => {
                let mut cfg = base.clone();
                if let Some(ts) = switch_overhead {
                    cfg.switch_overhead = ts;
                }
                if let Some(target) = beta_star {
                    recalibrate(&mut cfg, target)?;
                }
                cfg.validated()?;
                Ok(cfg)
            }
        }
    }
}

/// Rescales Bernoulli arrival probabilities to reach utilization `target`.
pub fn recalibrate(config: &mut SystemConfig, target: f64) -> Result<()> {
    let mut pattern = Vec::with_capacity(config.n_queues);
    for (i, t) in config.traffic.iter().enumerate() {
        match t.arrival {
            Distribution::Bernoulli(p) => pattern.push(p),
            _ => {
                return Err(Error::Config(format!(
                    "cannot calibrate queue {}: only Bernoulli arrivals can be rescaled",
                    i + 1
                )))
            }
        }
    }
    let lambda = crate::capacity::calibrate_arrivals(&pattern, &config.service_rates(), &config.schedules, target)?;
    for (t, l) in config.traffic.iter_mut().zip(lambda) {
        if l > 1.0 {
            return Err(Error::Config(format!("calibrated arrival probability {l} exceeds 1")));
        }
        t.arrival = Distribution::Bernoulli(l);
    }
    Ok(())
}

/// One parameter combination of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub scenario: String,
    pub system: SystemConfig,
    pub policy: PolicySpec,
    pub beta_star: Option<f64>,
}

impl Point {
    pub fn new(source: &SystemSource, policy: PolicySpec, beta_star: Option<f64>, ts: Option<u32>) -> Result<Self> {
        policy.check()?;
        Ok(Self { scenario: source.label(), system: source.build(beta_star, ts)?, policy, beta_star })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPlan {
    pub horizon: u64,
    pub warmup: u64,
}

impl RunPlan {
    pub const DEFAULT: RunPlan = RunPlan { horizon: 2_000_000, warmup: 200_000 };
}

/// One replication's report with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub policy: String,
    pub alpha: Option<f64>,
    pub beta_star: Option<f64>,
    pub switch_overhead: u32,
    pub seed: u64,
    pub report: SimReport,
}

/// Runs one simulation and summarizes its measurement window.
pub fn run_one(point: &Point, plan: RunPlan, seed: u64) -> Result<RunRecord> {
    let trace = simulate(&point.system, point.policy, SimOptions::lean(plan.horizon, plan.warmup, seed))?;
    let report = finalize(&trace, point.policy.alpha, trace.window())?;
    Ok(RunRecord {
        scenario: point.scenario.clone(),
        policy: point.policy.variant.name().to_string(),
        alpha: point.policy.variant.uses_alpha().then_some(point.policy.alpha),
        beta_star: point.beta_star,
        switch_overhead: point.system.switch_overhead,
        seed,
        report,
    })
}

/// Runs every point under every seed. The result holds one group of
/// `seeds.len()` records per point, in the order of `points`.
pub fn run_batch(points: &[Point], seeds: &[u64], plan: RunPlan) -> Result<Vec<RunRecord>> {
    if plan.warmup >= plan.horizon {
        return Err(Error::Config(format!(
            "warmup exceeds horizon ({} >= {})",
            plan.warmup, plan.horizon
        )));
    }
    let jobs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|p| (0..seeds.len()).map(move |s| (p, s))).collect();
    let mut out: Vec<((usize, usize), RunRecord)> = jobs
        .into_par_iter()
        .map(|(p, s)| run_one(&points[p], plan, seeds[s]).map(|r| ((p, s), r)))
        .collect::<Result<_>>()?;
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

/// `base, base + 1, ...`.
pub fn seed_range(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| base + k).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    BetaStar,
    #[serde(rename = "T_s")]
    SwitchOverhead,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "alpha" => Ok(SweepAxis::Alpha),
            "beta_star" | "beta" => Ok(SweepAxis::BetaStar),
            "t_s" | "ts" => Ok(SweepAxis::SwitchOverhead),
            _ => Err(Error::Config(format!("unknown sweep axis '{s}' (alpha, beta_star, T_s)"))),
        }
    }
}

/// Cross product of policies and axis values, policy-major.
pub fn sweep_points(
    source: &SystemSource,
    policies: &[PolicySpec],
    beta_star: Option<f64>,
    ts: Option<u32>,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<Point>> {
    let mut points = Vec::with_capacity(policies.len() * values.len());
    for &policy in policies {
        for &v in values {
            let point = match axis {
                SweepAxis::Alpha => {
                    if !policy.variant.uses_alpha() {
                        return Err(Error::Config(format!("{} has no alpha to sweep", policy.variant)));
                    }
                    Point::new(source, PolicySpec { alpha: v, ..policy }, beta_star, ts)?
                }
                SweepAxis::BetaStar => Point::new(source, policy, Some(v), ts)?,
                SweepAxis::SwitchOverhead => {
                    if v < 1.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
                        return Err(Error::Config(format!("T_s must be a positive integer; got {v}")));
                    }
                    Point::new(source, policy, beta_star, Some(v as u32))?
                }
            };
            points.push(point);
        }
    }
    Ok(points)
}

/// Mean and standard error of every numeric column over one point's seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub policy: String,
    pub alpha: Option<f64>,
    pub beta_star: Option<f64>,
    pub switch_overhead: u32,
    pub seeds: usize,
    pub total_avg_delay: Option<Estimate>,
    pub per_queue_delay: Vec<Option<Estimate>>,
    pub time_avg_total_queue: Option<Estimate>,
    pub powered_queue_mean: Option<Estimate>,
    pub switch_fraction: Option<Estimate>,
    pub mean_tk: Option<Estimate>,
    pub fairness_ratio: Option<Estimate>,
    pub stability_slope: Option<Estimate>,
    pub diverged: usize,
    pub little_ratio: Option<Estimate>,
}

fn same_point(a: &RunRecord, b: &RunRecord) -> bool {
    a.scenario == b.scenario
        && a.policy == b.policy
        && a.alpha == b.alpha
        && a.beta_star == b.beta_star
        && a.switch_overhead == b.switch_overhead
}

/// Groups consecutive records of the same point and summarizes each group.
/// Undefined values are left out of the estimates.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let mut end = start + 1;
        while end < records.len() && same_point(&records[start], &records[end]) {
            end += 1;
        }
        out.push(summarize(&records[start..end]));
        start = end;
    }
    out
}

fn summarize(group: &[RunRecord]) -> Aggregate {
    let first = &group[0];
    let est = |f: &dyn Fn(&SimReport) -> Option<f64>| {
        let xs: Vec<f64> = group.iter().filter_map(|r| f(&r.report)).collect();
        Estimate::from_samples(&xs)
    };
    let n = group.iter().map(|r| r.report.per_queue_avg_delay.len()).max().unwrap_or(0);
    Aggregate {
        scenario: first.scenario.clone(),
        policy: first.policy.clone(),
        alpha: first.alpha,
        beta_star: first.beta_star,
        switch_overhead: first.switch_overhead,
        seeds: group.len(),
        total_avg_delay: est(&|r| r.total_avg_delay),
        per_queue_delay: (0..n).map(|i| est(&|r| r.per_queue_avg_delay.get(i).copied().flatten())).collect(),
        time_avg_total_queue: est(&|r| Some(r.time_avg_total_queue)),
        powered_queue_mean: est(&|r| Some(r.powered_queue_mean)),
        switch_fraction: est(&|r| Some(r.switch_fraction)),
        mean_tk: est(&|r| r.interval_stats.mean),
        fairness_ratio: est(&|r| crate::metrics::fairness_ratio(r).ok()),
        stability_slope: est(&|r| r.stability_slope),
        diverged: group.iter().filter(|r| r.report.diverged).count(),
        little_ratio: est(&|r| r.little_ratio),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn header(n_queues: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["scenario", "policy", "alpha", "beta_star", "T_s", "seed", "total_avg_delay"].map(String::from).into();
    h.extend((1..=n_queues).map(|i| format!("per_queue_delay_{i}")));
    h.extend(
        ["time_avg_total_queue", "powered_queue_mean", "switch_fraction", "mean_Tk", "diverged", "little_ratio"]
            .map(String::from),
    );
    h
}

/// Writes one row per record and, if `with_mean`, one row per point whose
/// seed column reads `mean` (the `diverged` column then counts diverged seeds).
pub fn write_csv<W: Write>(records: &[RunRecord], with_mean: bool, out: W) -> Result<()> {
    let n = records.iter().map(|r| r.report.per_queue_avg_delay.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header(n)).map_err(io)?;

    let groups = aggregate(records);
    let mut at = 0;
    for g in &groups {
        for r in &records[at..at + g.seeds] {
            let rep = &r.report;
            let mut row = vec![
                r.scenario.clone(),
                r.policy.clone(),
                opt(r.alpha),
                opt(r.beta_star),
                r.switch_overhead.to_string(),
                r.seed.to_string(),
                opt(rep.total_avg_delay),
            ];
            row.extend((0..n).map(|i| opt(rep.per_queue_avg_delay.get(i).copied().flatten())));
            row.extend([
                rep.time_avg_total_queue.to_string(),
                rep.powered_queue_mean.to_string(),
                rep.switch_fraction.to_string(),
                opt(rep.interval_stats.mean),
                rep.diverged.to_string(),
                opt(rep.little_ratio),
            ]);
            w.write_record(&row).map_err(io)?;
        }
        at += g.seeds;
        if with_mean {
            let m = |e: &Option<Estimate>| opt(e.map(|e| e.mean));
            let mut row = vec![
                g.scenario.clone(),
                g.policy.clone(),
                opt(g.alpha),
                opt(g.beta_star),
                g.switch_overhead.to_string(),
                "mean".into(),
                m(&g.total_avg_delay),
            ];
            row.extend((0..n).map(|i| g.per_queue_delay.get(i).map(m).unwrap_or_default()));
            row.extend([
                m(&g.time_avg_total_queue),
                m(&g.powered_queue_mean),
                m(&g.switch_fraction),
                m(&g.mean_tk),
                g.diverged.to_string(),
                m(&g.little_ratio),
            ]);
            w.write_record(&row).map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}
