//! Run summaries: delays, time-average and powered queue lengths, interval
//! statistics, Lyapunov functions, Little's-law consistency and the per-interval
//! lower bounds on `T_k`.

use serde::Serialize;

use crate::engine::{job_delay, Trace};
use crate::error::{Error, Result};
use crate::model::{PolicyVariant, SystemConfig};
use crate::policy::bias_denominator;
use crate::traffic::{interarrival_bound, InterarrivalBound};

/// Minimum trace length for [`stability_slope`].
pub const MIN_SLOPE_SLOTS: u64 = 10_000;

/// Backlog growth, in jobs per slot, above which a run counts as diverged.
pub const DIVERGENCE_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalStats {
    /// Completed intervals starting inside the window.
    pub count: u64,
    pub mean: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    /// Job-weighted mean delay in slots; `None` without completed jobs.
    pub total_avg_delay: Option<f64>,
    pub per_queue_avg_delay: Vec<Option<f64>>,
    pub time_avg_total_queue: f64,
    pub time_avg_queue: Vec<f64>,
    /// Time average of `(1^T Q)^(1 - alpha)`.
    pub powered_queue_mean: f64,
    pub switch_fraction: f64,
    pub interval_stats: IntervalStats,
    /// The run hit the backlog ceiling or its stability slope exceeds
    /// [`DIVERGENCE_SLOPE`].
    pub diverged: bool,
    pub jobs_counted: u64,
    pub little_ratio: Option<f64>,
    /// `None` for traces shorter than [`MIN_SLOPE_SLOTS`].
    pub stability_slope: Option<f64>,
}

impl SimReport {
    pub fn mean_interval(&self) -> Option<f64> {
        self.interval_stats.mean
    }
}

struct DelayTotals {
    sum: Vec<u64>,
    count: Vec<u64>,
}

/// Summarizes `trace` over `window = [from, to)`.
///
/// The run's own window is served from the statistics gathered during the
/// run; any other window needs a stride-1 trace with a job log.
pub fn finalize(trace: &Trace, alpha: f64, window: (u64, u64)) -> Result<SimReport> {
    let (from, to) = window;
    if from > to || to > trace.end {
        return Err(Error::Config(format!(
            "window [{from}, {to}) is not inside the simulated range [0, {})",
            trace.end
        )));
    }
    let n = trace.n_queues;
    let slots = to - from;
    let own_window = window == trace.window();

    let (queue_sum, switching, delays) = if own_window {
        let s = &trace.stats;
        (
            s.queue_sum.clone(),
            s.switching_slots,
            DelayTotals { sum: s.delay_sum.clone(), count: s.delay_count.clone() },
        )
    } else {
        recompute(trace, window)?
    };

    let mut powered = 0.0;
    let mut total = 0.0;
    for &q in &trace.total_q[from as usize..to as usize] {
        let q = f64::from(q);
        total += q;
        powered += q.powf(1.0 - alpha);
    }
    let per_slot = |x: f64| if slots == 0 { 0.0 } else { x / slots as f64 };

    let per_queue_avg_delay: Vec<Option<f64>> = (0..n)
        .map(|i| (delays.count[i] > 0).then(|| delays.sum[i] as f64 / delays.count[i] as f64))
        .collect();
    let jobs_counted: u64 = delays.count.iter().sum();
    let total_avg_delay =
        (jobs_counted > 0).then(|| delays.sum.iter().sum::<u64>() as f64 / jobs_counted as f64);

    let slope = stability_slope(trace).ok();
    let mut report = SimReport {
        total_avg_delay,
        per_queue_avg_delay,
        time_avg_total_queue: per_slot(total),
        time_avg_queue: queue_sum.iter().map(|&x| per_slot(x as f64)).collect(),
        powered_queue_mean: per_slot(powered),
        switch_fraction: per_slot(switching as f64),
        interval_stats: interval_stats(trace, window),
        diverged: trace.diverged || slope.is_some_and(|s| s > DIVERGENCE_SLOPE),
        jobs_counted,
        little_ratio: None,
        stability_slope: slope,
    };
    report.little_ratio = little_consistency(&report, trace.lambda.iter().sum()).ok();
    Ok(report)
}

fn recompute(trace: &Trace, (from, to): (u64, u64)) -> Result<(Vec<u64>, u64, DelayTotals)> {
    if trace.stride != 1 || (trace.slots.len() as u64) < to {
        return Err(Error::Mismatch(
            "a window other than the run's own needs a stride-1 trace".into(),
        ));
    }
    if trace.jobs.is_empty() && trace.stats.delay_count.iter().any(|&c| c > 0) {
        return Err(Error::Mismatch(
            "a window other than the run's own needs the job log".into(),
        ));
    }
    let n = trace.n_queues;
    let mut queue_sum = vec![0u64; n];
    let mut switching = 0;
    for k in from as usize..to as usize {
        for (sum, &q) in queue_sum.iter_mut().zip(trace.slots.q_at(k)) {
            *sum += u64::from(q);
        }
        switching += u64::from(!trace.slots.active[k]);
    }
    let mut delays = DelayTotals { sum: vec![0; n], count: vec![0; n] };
    for job in &trace.jobs {
        if job.arrival_slot >= from && job.departure_slot < to {
            let i = job.queue as usize;
            delays.sum[i] += job_delay(job) * u64::from(job.count);
            delays.count[i] += u64::from(job.count);
        }
    }
    Ok((queue_sum, switching, delays))
}

fn interval_stats(trace: &Trace, (from, to): (u64, u64)) -> IntervalStats {
    let lens: Vec<u64> = trace
        .intervals
        .iter()
        .filter(|iv| iv.complete && iv.start >= from && iv.start + iv.len <= to)
        .map(|iv| iv.len)
        .collect();
    let count = lens.len() as u64;
    IntervalStats {
        count,
        mean: (count > 0).then(|| lens.iter().sum::<u64>() as f64 / count as f64),
        min: lens.iter().copied().min(),
        max: lens.iter().copied().max(),
    }
}

/// `time_avg_total_queue / (lambda_total * total_avg_delay)`.
pub fn little_consistency(report: &SimReport, lambda_total: f64) -> Result<f64> {
    let delay = report.total_avg_delay.ok_or(Error::Undefined("little_ratio"))?;
    if lambda_total <= 0.0 {
        return Err(Error::Undefined("little_ratio"));
    }
    Ok(report.time_avg_total_queue / (lambda_total * delay))
}

/// `sum_i Q_i^2 / mu_i`.
pub fn lyapunov_q(q: &[f64], mu: &[f64]) -> f64 {
    q.iter().zip(mu).map(|(&x, &m)| x * x / m).sum()
}

/// `sum_i rho_i W_i^2`.
pub fn lyapunov_w(w: &[f64], rho: &[f64]) -> f64 {
    w.iter().zip(rho).map(|(&x, &r)| r * x * x).sum()
}

/// Least-squares slope of `1^T Q(t)` against `t` over the second half of the
/// trace, in jobs per slot.
pub fn stability_slope(trace: &Trace) -> Result<f64> {
    if trace.end < MIN_SLOPE_SLOTS {
        return Err(Error::Config(format!(
            "stability slope needs at least {MIN_SLOPE_SLOTS} slots, trace has {}",
            trace.end
        )));
    }
    let lo = (trace.end / 2) as usize;
    let ys = &trace.total_q[lo..trace.end as usize];
    let m = ys.len() as f64;
    let t_mean = (m - 1.0) / 2.0;
    let y_mean = ys.iter().map(|&y| f64::from(y)).sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &y) in ys.iter().enumerate() {
        let dt = k as f64 - t_mean;
        sxy += dt * (f64::from(y) - y_mean);
        sxx += dt * dt;
    }
    Ok(sxy / sxx)
}

/// Largest over smallest per-queue average delay. Queues without completed
/// jobs are left out.
pub fn fairness_ratio(report: &SimReport) -> Result<f64> {
    let defined: Vec<f64> = report.per_queue_avg_delay.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Undefined("fairness_ratio"));
    }
    let max = defined.iter().copied().fold(f64::MIN, f64::max);
    let min = defined.iter().copied().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// An interval shorter than its guaranteed minimum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub interval: usize,
    pub start: u64,
    pub len: u64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `C_0` or `C_1`.
    pub constant: f64,
    /// Inter-arrival bound used for W-BMW; observed on the sample path when
    /// the arrival law has none.
    pub v_max: Option<u64>,
    pub checked: u64,
    pub violations: Vec<BoundViolation>,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `C_0 = T_s / (N K (A_max + (1 + T_s) S_max))`.
pub fn qbmw_interval_constant(config: &SystemConfig) -> f64 {
    let ts = f64::from(config.switch_overhead);
    let nk = (config.n_queues * config.max_concurrency()) as f64;
    ts / (nk * (f64::from(config.max_arrival()) + (1.0 + ts) * f64::from(config.max_service())))
}

/// `C_1 = T_s / (N K (1 + (1 + T_s) S_max V_max))`.
pub fn wbmw_interval_constant(config: &SystemConfig, v_max: u64) -> f64 {
    let ts = f64::from(config.switch_overhead);
    let nk = (config.n_queues * config.max_concurrency()) as f64;
    ts / (nk * (1.0 + (1.0 + ts) * f64::from(config.max_service()) * v_max as f64))
}

/// Checks every completed interval against the lower bound on `T_k` for the
/// policy that produced the trace.
pub fn interval_bound_check(
    trace: &Trace,
    config: &SystemConfig,
    alpha: f64,
    variant: PolicyVariant,
) -> Result<BoundCheck> {
    if variant != trace.policy.variant {
        return Err(Error::Mismatch(format!(
            "trace was produced by {}, not {}",
            trace.policy.variant.name(),
            variant.name()
        )));
    }
    let (constant, v_max) = match variant {
        PolicyVariant::QBmw => (qbmw_interval_constant(config), None),
        PolicyVariant::WBmw => {
            let v_max = config
                .traffic
                .iter()
                .zip(&trace.max_interarrival)
                .map(|(spec, &seen)| match interarrival_bound(&spec.arrival) {
                    InterarrivalBound::Finite(v) => u64::from(v).max(seen),
                    InterarrivalBound::Unbounded => seen,
                })
                .max()
                .unwrap_or(0)
                .max(1);
            (wbmw_interval_constant(config, v_max), Some(v_max))
        }
        other => {
            return Err(Error::Mismatch(format!("{} has no interval bound", other.name())));
        }
    };

    let mut out = BoundCheck { constant, v_max, checked: 0, violations: Vec::new() };
    for (k, iv) in trace.intervals.iter().enumerate() {
        if !iv.complete {
            continue;
        }
        out.checked += 1;
        let total = match variant {
            PolicyVariant::QBmw => iv.total_q(),
            _ => iv.total_w(),
        } as f64;
        let bound = constant * total / bias_denominator(total, alpha);
        if (iv.len as f64) < bound {
            out.violations.push(BoundViolation { interval: k, start: iv.start, len: iv.len, bound });
        }
    }
    Ok(out)
}

/// Mean change of `sum_i Q_i^2 / mu_i` between consecutive interval starts,
/// over intervals whose starting backlog is at least `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftDiagnostic {
    pub threshold: u64,
    pub samples: u64,
    pub mean_drift: Option<f64>,
}

pub fn lyapunov_drift(trace: &Trace, threshold: u64) -> DriftDiagnostic {
    let as_f64 = |q: &[u32]| q.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
    let mut sum = 0.0;
    let mut samples = 0u64;
    for pair in trace.intervals.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if !a.complete || a.total_q() < threshold || b.q_start.is_empty() {
            continue;
        }
        sum += lyapunov_q(&as_f64(&b.q_start), &trace.mu) - lyapunov_q(&as_f64(&a.q_start), &trace.mu);
        samples += 1;
    }
    DriftDiagnostic { threshold, samples, mean_drift: (samples > 0).then(|| sum / samples as f64) }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Some(Self { mean, stderr, n })
    }

    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.stderr
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.stderr
    }

    /// True when `self +- k se` lies entirely below `other +- k se`.
    pub fn below(&self, other: &Estimate, k: f64) -> bool {
        self.upper(k) < other.lower(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, SimOptions};
    use crate::model::{bernoulli_traffic, singleton_schedules, PolicySpec, SystemConfig};
    use crate::traffic::{Distribution, TrafficSpec};
    use proptest::prelude::*;

    fn dd1() -> SystemConfig {
        SystemConfig {
            n_queues: 1,
            schedules: singleton_schedules(1),
            switch_overhead: 1,
            traffic: vec![TrafficSpec::new(Distribution::Deterministic(1), Distribution::Deterministic(1))],
        }
    }

    fn qbmw() -> PolicySpec {
        PolicySpec::new(PolicyVariant::QBmw, 0.001).unwrap()
    }

    #[test]
    fn lyapunov_examples() {
        assert_eq!(lyapunov_q(&[0.0, 0.0], &[0.5, 0.5]), 0.0);
        assert_eq!(lyapunov_q(&[1.0, 2.0], &[0.5, 0.5]), 10.0);
        assert_eq!(lyapunov_w(&[1.0, 2.0], &[0.5, 0.25]), 1.5);
    }

    proptest! {
        #[test]
        fn lyapunov_is_quadratic(q in prop::collection::vec(0.0f64..100.0, 1..6), c in 0.0f64..10.0) {
            let mu = vec![0.7; q.len()];
            let scaled: Vec<f64> = q.iter().map(|x| c * x).collect();
            let (l, lc) = (lyapunov_q(&q, &mu), lyapunov_q(&scaled, &mu));
            prop_assert!((lc - c * c * l).abs() <= 1e-9 * (1.0 + lc.abs()));
        }
    }

    #[test]
    fn dd1_report() {
        let cfg = dd1();
        let trace = simulate(&cfg, qbmw(), SimOptions::new(200, 20, 1)).unwrap();
        let r = finalize(&trace, 0.001, trace.window()).unwrap();
        assert_eq!(r.total_avg_delay, Some(1.0));
        assert_eq!(r.time_avg_total_queue, 1.0);
        assert_eq!(r.little_ratio, Some(1.0));
        assert_eq!(little_consistency(&r, 1.0).unwrap(), 1.0);
        assert_eq!(r.switch_fraction, 0.0);
    }

    #[test]
    fn empty_traffic_report() {
        let cfg = SystemConfig {
            n_queues: 2,
            schedules: singleton_schedules(2),
            switch_overhead: 2,
            traffic: bernoulli_traffic(&[0.0, 0.0], &[0.5, 0.5]),
        };
        let trace = simulate(&cfg, qbmw(), SimOptions::new(20_000, 100, 3)).unwrap();
        let r = finalize(&trace, 0.001, trace.window()).unwrap();
        assert_eq!(r.jobs_counted, 0);
        assert_eq!(r.total_avg_delay, None);
        assert_eq!(r.little_ratio, None);
        assert_eq!(r.time_avg_total_queue, 0.0);
        assert_eq!(r.powered_queue_mean, 0.0);
        assert_eq!(r.stability_slope, Some(0.0));
        assert!(little_consistency(&r, 0.0).is_err());
    }

    #[test]
    fn switch_fraction_ratio() {
        // Two queues, T_s = 3: the first backlog on queue 2 triggers switches.
        let cfg = SystemConfig {
            n_queues: 2,
            schedules: singleton_schedules(2),
            switch_overhead: 3,
            traffic: vec![
                TrafficSpec::new(Distribution::Bernoulli(0.0), Distribution::Deterministic(1)),
                TrafficSpec::new(Distribution::Deterministic(1), Distribution::Deterministic(1)),
            ],
        };
        let trace = simulate(&cfg, qbmw(), SimOptions::new(40, 10, 0)).unwrap();
        let r = finalize(&trace, 0.001, trace.window()).unwrap();
        let switching = (10..40).filter(|&k| !trace.slots.active[k]).count();
        assert_eq!(r.switch_fraction, switching as f64 / 30.0);
    }

    #[test]
    fn own_window_matches_recomputation() {
        let cfg = SystemConfig {
            n_queues: 3,
            schedules: singleton_schedules(3),
            switch_overhead: 2,
            traffic: bernoulli_traffic(&[0.1, 0.15, 0.05], &[0.5, 0.7, 0.4]),
        };
        let trace = simulate(&cfg, qbmw(), SimOptions::new(30_000, 3_000, 9)).unwrap();
        let fast = finalize(&trace, 0.3, trace.window()).unwrap();
        let mut stripped = trace.clone();
        stripped.warmup = 0;
        let slow = finalize(&stripped, 0.3, (3_000, 30_000)).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn other_window_needs_detail() {
        let cfg = dd1();
        let trace = simulate(&cfg, qbmw(), SimOptions::lean(100, 10, 1)).unwrap();
        assert!(matches!(finalize(&trace, 0.001, (20, 100)), Err(Error::Mismatch(_))));
        assert!(finalize(&trace, 0.001, (20, 101)).is_err());
    }

    #[test]
    fn fairness_examples() {
        let mut r = finalize(
            &simulate(&dd1(), qbmw(), SimOptions::new(50, 5, 0)).unwrap(),
            0.001,
            (5, 50),
        )
        .unwrap();
        r.per_queue_avg_delay = vec![Some(4.0); 4];
        assert_eq!(fairness_ratio(&r).unwrap(), 1.0);
        r.per_queue_avg_delay = vec![Some(2.0), Some(8.0)];
        assert_eq!(fairness_ratio(&r).unwrap(), 4.0);
        r.per_queue_avg_delay = vec![Some(2.0), None, Some(3.0)];
        assert_eq!(fairness_ratio(&r).unwrap(), 1.5);
        r.per_queue_avg_delay = vec![None];
        assert!(fairness_ratio(&r).is_err());
    }

    #[test]
    fn slope_of_a_ramp() {
        // Two arrivals and one departure per slot: Q(t) = t.
        let cfg = SystemConfig {
            n_queues: 1,
            schedules: singleton_schedules(1),
            switch_overhead: 1,
            traffic: vec![TrafficSpec::new(Distribution::Deterministic(2), Distribution::Deterministic(1))],
        };
        let trace = simulate(&cfg, qbmw(), SimOptions::lean(20_000, 0, 0)).unwrap();
        assert!((stability_slope(&trace).unwrap() - 1.0).abs() < 1e-9);
        assert!(!trace.diverged);
        assert!(finalize(&trace, 0.001, trace.window()).unwrap().diverged);
        let short = simulate(&cfg, qbmw(), SimOptions::lean(100, 0, 0)).unwrap();
        assert!(stability_slope(&short).is_err());
    }

    #[test]
    fn interval_constants() {
        let cfg = SystemConfig {
            n_queues: 4,
            schedules: singleton_schedules(4),
            switch_overhead: 2,
            traffic: bernoulli_traffic(&[0.1; 4], &[0.5; 4]),
        };
        // 2 / (4 * 1 * (1 + 3 * 1))
        assert!((qbmw_interval_constant(&cfg) - 0.125).abs() < 1e-15);
        // 2 / (4 * 1 * (1 + 3 * 1 * 5))
        assert!((wbmw_interval_constant(&cfg, 5) - 2.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn bound_check_variant_mismatch() {
        let trace = simulate(&dd1(), qbmw(), SimOptions::new(50, 5, 0)).unwrap();
        assert!(interval_bound_check(&trace, &dd1(), 0.001, PolicyVariant::WBmw).is_err());
        assert!(interval_bound_check(&trace, &dd1(), 0.001, PolicyVariant::Vfmw).is_err());
        let ok = interval_bound_check(&trace, &dd1(), 0.001, PolicyVariant::QBmw).unwrap();
        assert!(ok.passed());
    }

    #[test]
    fn estimate_basics() {
        assert!(Estimate::from_samples(&[]).is_none());
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let f = Estimate::from_samples(&[10.0, 11.0, 12.0]).unwrap();
        assert!(e.below(&f, 2.0));
        assert!(!f.below(&e, 2.0));
    }
}
