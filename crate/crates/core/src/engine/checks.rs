//! Trace invariants: conservation, FIFO order, service accounting, waiting
//! time consistency, work conservation and interval coverage.
//!
//! The per-slot checks need a trace recorded with stride 1.

use serde::Serialize;

use crate::model::SystemConfig;
use crate::traffic::{sample, StreamHandle, StreamId, StreamRole};

use super::Trace;

/// Keep at most this many messages per check.
const MAX_MESSAGES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Number of items (slots, jobs, intervals) examined.
    pub checked: u64,
    pub violation_count: u64,
    /// First few violations.
    pub violations: Vec<String>,
}

impl CheckOutcome {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), checked: 0, violation_count: 0, violations: Vec::new() }
    }

    fn fail(&mut self, msg: impl FnOnce() -> String) {
        self.violation_count += 1;
        if self.violations.len() < MAX_MESSAGES {
            self.violations.push(msg());
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn require_stride_one(&mut self, trace: &Trace) -> bool {
        if trace.stride != 1 || trace.slots.len() as u64 != trace.end {
            self.fail(|| "requires a stride-1 trace".into());
            return false;
        }
        true
    }
}

/// `Q_i(t+1) = Q_i(t) - S-hat_i(t) + A_i(t)` for every queue and slot, and
/// per-slot departures in the job log match `S-hat`.
pub fn conservation(trace: &Trace) -> CheckOutcome {
    let mut out = CheckOutcome::new("conservation");
    if !out.require_stride_one(trace) {
        return out;
    }
    let n = trace.n_queues;
    let s = &trace.slots;
    for k in 0..s.len() {
        out.checked += 1;
        let (q, served, a) = (s.q_at(k), s.served_at(k), s.arrivals_at(k));
        if k == 0 && q.iter().any(|&x| x != 0) {
            out.fail(|| "Q(0) is not zero".into());
        }
        if k + 1 < s.len() {
            let next = s.q_at(k + 1);
            for i in 0..n {
                let expected = i64::from(q[i]) - i64::from(served[i]) + i64::from(a[i]);
                if i64::from(next[i]) != expected {
                    out.fail(|| format!("t={}: queue {} has {} jobs, expected {expected}", k + 1, i + 1, next[i]));
                }
            }
        }
    }

    let mut departed = vec![0u64; s.len() * n];
    for job in &trace.jobs {
        departed[job.departure_slot as usize * n + job.queue as usize] += u64::from(job.count);
    }
    for (k, (&d, &sv)) in departed.iter().zip(&s.served).enumerate() {
        if d != u64::from(sv) {
            out.fail(|| format!("t={}: queue {} logged {d} departures but served {sv}", k / n, k % n + 1));
        }
    }
    out
}

/// Departures of each queue happen in arrival order and never before arrival.
pub fn fifo_order(trace: &Trace) -> CheckOutcome {
    let mut out = CheckOutcome::new("fifo");
    let mut last: Vec<(u64, u64)> = vec![(0, 0); trace.n_queues];
    for job in &trace.jobs {
        out.checked += u64::from(job.count);
        let i = job.queue as usize;
        if job.departure_slot < job.arrival_slot {
            out.fail(|| format!("queue {}: job arriving at {} departed at {}", i + 1, job.arrival_slot, job.departure_slot));
        }
        let (prev_arrival, prev_departure) = last[i];
        if job.arrival_slot < prev_arrival || job.departure_slot < prev_departure {
            out.fail(|| format!("queue {}: job arriving at {} overtook one arriving at {prev_arrival}", i + 1, job.arrival_slot));
        }
        last[i] = (job.arrival_slot, job.departure_slot);
    }
    out
}

/// `S-hat_i(t) <= min{Q_i(t), S_i(t)}`, and zero while switching or when
/// queue `i` is not in the served schedule. `S_i(t)` is re-drawn from the
/// trace's seed.
pub fn service_accounting(trace: &Trace, config: &SystemConfig) -> CheckOutcome {
    let mut out = CheckOutcome::new("service_accounting");
    if !out.require_stride_one(trace) {
        return out;
    }
    let streams: Vec<StreamHandle> = (0..trace.n_queues)
        .map(|queue| StreamHandle::new(trace.seed, StreamId { queue, role: StreamRole::Service }))
        .collect();
    let s = &trace.slots;
    for k in 0..s.len() {
        out.checked += 1;
        let t = s.t[k];
        let schedule = &config.schedules[s.schedule[k] as usize];
        for (i, (&served, &q)) in s.served_at(k).iter().zip(s.q_at(k)).enumerate() {
            let offered = sample(&config.traffic[i].service, &streams[i], t);
            let eligible = s.active[k] && schedule.contains(i);
            if served > q || served > offered || (!eligible && served > 0) {
                out.fail(|| format!("t={t}: queue {} served {served} (Q={q}, S={offered}, eligible={eligible})", i + 1));
            }
        }
    }
    out
}

/// Waiting times from timestamps: `W_i` grows by exactly one per slot while
/// the queue is backlogged and unserved, never grows faster, and is zero on an
/// empty queue.
pub fn waiting_time_consistency(trace: &Trace) -> CheckOutcome {
    let mut out = CheckOutcome::new("waiting_time");
    if !out.require_stride_one(trace) {
        return out;
    }
    let s = &trace.slots;
    for k in 0..s.len() {
        out.checked += 1;
        let (q, w, served) = (s.q_at(k), s.w_at(k), s.served_at(k));
        for i in 0..trace.n_queues {
            if q[i] == 0 && w[i] != 0 {
                out.fail(|| format!("t={k}: empty queue {} has W={}", i + 1, w[i]));
            }
            if k + 1 < s.len() {
                let next = s.w_at(k + 1)[i];
                if next > w[i] + 1 {
                    out.fail(|| format!("t={k}: W of queue {} jumped {} -> {next}", i + 1, w[i]));
                }
                if served[i] == 0 && q[i] > 0 && next != w[i] + 1 {
                    out.fail(|| format!("t={k}: unserved queue {} W {} -> {next}", i + 1, w[i]));
                }
            }
        }
    }
    out
}

/// No ACTIVE stretch longer than `T_s` slots in which the served schedule is
/// empty while some other queue holds a job.
pub fn work_conservation(trace: &Trace, config: &SystemConfig) -> CheckOutcome {
    let mut out = CheckOutcome::new("work_conservation");
    if !out.require_stride_one(trace) {
        return out;
    }
    let limit = u64::from(config.switch_overhead);
    let s = &trace.slots;
    let mut run = 0u64;
    for k in 0..s.len() {
        out.checked += 1;
        let q = s.q_at(k);
        let schedule = &config.schedules[s.schedule[k] as usize];
        let served_weight: u64 = schedule.members().iter().map(|&i| u64::from(q[i])).sum();
        let total: u64 = q.iter().map(|&x| u64::from(x)).sum();
        if s.active[k] && served_weight == 0 && total > 0 {
            run += 1;
            if run == limit + 1 {
                out.fail(|| format!("t={}: server idle on an empty schedule for more than {limit} slots", s.t[k]));
            }
        } else {
            run = 0;
        }
    }
    out
}

/// Intervals tile `[0, end)` with no gaps or overlaps and only the last one
/// is censored.
pub fn interval_coverage(trace: &Trace) -> CheckOutcome {
    let mut out = CheckOutcome::new("interval_coverage");
    let mut at = 0;
    for (k, iv) in trace.intervals.iter().enumerate() {
        out.checked += 1;
        if iv.start != at {
            out.fail(|| format!("interval {k} starts at {} but previous ended at {at}", iv.start));
        }
        if iv.complete == (k + 1 == trace.intervals.len()) {
            out.fail(|| format!("interval {k} has the wrong completion flag"));
        }
        at = iv.start + iv.len;
    }
    if at != trace.end {
        out.fail(|| format!("intervals end at {at}, trace ends at {}", trace.end));
    }
    out
}

/// All trace-level checks that apply to any policy.
pub fn all(trace: &Trace, config: &SystemConfig) -> Vec<CheckOutcome> {
    vec![
        conservation(trace),
        fifo_order(trace),
        service_accounting(trace, config),
        waiting_time_consistency(trace),
        interval_coverage(trace),
    ]
}
