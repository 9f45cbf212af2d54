//! Slot-by-slot simulation.
//!
//! Each slot runs, in order: (1) if ACTIVE, ask the policy for a decision on
//! the pre-service state and, on a switch, enter SWITCH mode for the next
//! `T_s` slots (this one included); (2) serve
//! `S-hat_i(t) = min{Q_i(t), M(t) I_i(t) S_i(t)}` from the head of each FIFO;
//! (3) append `A_i(t)`, first visible in `Q(t+1)`; (4) count down a switch in
//! progress and activate the target when it finishes.

pub mod checks;
mod trace;

use std::collections::VecDeque;

pub use trace::{job_delay, IntervalRecord, JobRecord, SlotSeries, Trace, WindowStats};

use crate::error::{Error, Result};
use crate::model::{PolicySpec, PolicyVariant, SystemConfig};
use crate::policy::{self, bias_denominator, Decision, Mode, ServerState};
use crate::traffic::{sample, Distribution, StreamHandle, StreamId, StreamRole};

/// Runs whose total backlog exceeds this are stopped and marked diverged.
pub const DEFAULT_DIVERGENCE_CEILING: u64 = 10_000_000;

/// Upper limit on slots reserved up front.
const PREALLOC_SLOTS: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub horizon: u64,
    pub warmup: u64,
    pub seed: u64,
    /// Record a snapshot every `stride` slots (0 = none).
    pub stride: u64,
    /// Keep a record of every completed job.
    pub record_jobs: bool,
    pub divergence_ceiling: u64,
}

impl SimOptions {
    pub fn new(horizon: u64, warmup: u64, seed: u64) -> Self {
        Self {
            horizon,
            warmup,
            seed,
            stride: 1,
            record_jobs: true,
            divergence_ceiling: DEFAULT_DIVERGENCE_CEILING,
        }
    }

    /// Summary statistics only: no slot snapshots and no job log.
    pub fn lean(horizon: u64, warmup: u64, seed: u64) -> Self {
        Self { stride: 0, record_jobs: false, ..Self::new(horizon, warmup, seed) }
    }
}

/// Per-queue backlog with FIFO arrival timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueueState {
    pub backlog: Vec<u64>,
    /// Run-length encoded `(arrival_slot, count)`, oldest first.
    pub fifo: Vec<VecDeque<(u64, u32)>>,
    /// Cumulative completions per queue.
    pub served: Vec<u64>,
    /// Cumulative arrivals per queue.
    pub arrived: Vec<u64>,
}

impl QueueState {
    pub fn new(n: usize) -> Self {
        Self {
            backlog: vec![0; n],
            fifo: vec![VecDeque::new(); n],
            served: vec![0; n],
            arrived: vec![0; n],
        }
    }

    /// Head-of-line waiting time of queue `i` at slot `t`.
    #[inline]
    pub fn hol_wait(&self, i: usize, t: u64) -> u64 {
        self.fifo[i].front().map_or(0, |&(slot, _)| t - slot)
    }

    pub fn total(&self) -> u64 {
        self.backlog.iter().sum()
    }

    fn push(&mut self, i: usize, slot: u64, count: u32) {
        if count == 0 {
            return;
        }
        match self.fifo[i].back_mut() {
            Some((s, c)) if *s == slot => *c += count,
            _ => self.fifo[i].push_back((slot, count)),
        }
        self.backlog[i] += u64::from(count);
        self.arrived[i] += u64::from(count);
    }

    /// Removes up to `amount` jobs from the head, reporting each
    /// `(arrival_slot, count)` run to `depart`.
    fn pop(&mut self, i: usize, amount: u32, mut depart: impl FnMut(u64, u32)) -> u32 {
        let mut left = amount;
        while left > 0 {
            let Some(head) = self.fifo[i].front_mut() else { break };
            let take = head.1.min(left);
            depart(head.0, take);
            head.1 -= take;
            left -= take;
            if head.1 == 0 {
                self.fifo[i].pop_front();
            }
        }
        let done = amount - left;
        self.backlog[i] -= u64::from(done);
        self.served[i] += u64::from(done);
        done
    }
}

/// One simulation instance: configuration, streams, queues, server and the
/// trace being recorded.
pub struct Simulation {
    config: SystemConfig,
    policy: PolicySpec,
    opts: SimOptions,
    arrivals: Vec<(StreamHandle, Distribution)>,
    services: Vec<(StreamHandle, Distribution)>,
    /// `membership[j][i]` iff queue `i` is in schedule `j`.
    membership: Vec<Vec<bool>>,
    queues: QueueState,
    server: ServerState,
    t: u64,
    state: Vec<f64>,
    interval_q: Vec<u32>,
    interval_w: Vec<u32>,
    pending_q: Vec<u32>,
    pending_w: Vec<u32>,
    last_arrival: Vec<u64>,
    trace: Trace,
}

impl Simulation {
    pub fn new(config: &SystemConfig, policy: PolicySpec, opts: SimOptions) -> Result<Self> {
        config.validated()?;
        policy.check()?;
        if opts.warmup >= opts.horizon {
            return Err(Error::Config(format!(
                "warmup exceeds horizon ({} >= {})",
                opts.warmup, opts.horizon
            )));
        }
        let n = config.n_queues;
        let stream = |i: usize, role: StreamRole| StreamHandle::new(opts.seed, StreamId { queue: i, role });
        let arrivals = config
            .traffic
            .iter()
            .enumerate()
            .map(|(i, t)| (stream(i, StreamRole::Arrival), t.arrival.clone()))
            .collect();
        let services = config
            .traffic
            .iter()
            .enumerate()
            .map(|(i, t)| (stream(i, StreamRole::Service), t.service.clone()))
            .collect();
        let membership = config
            .schedules
            .iter()
            .map(|s| (0..n).map(|i| s.contains(i)).collect())
            .collect();

        // t = 0: all queues empty, so the argmax tie goes to schedule 1 and
        // no overhead is paid.
        let zeros = vec![0.0; n];
        let (initial, _) = policy::argmax_schedule(&zeros, &config.schedules, None);
        let mut server = ServerState::new(initial);
        if policy.variant == PolicyVariant::Vfmw {
            server.frame_end = 1;
        }

        let capacity = opts.horizon.checked_div(opts.stride).map_or(0, |k| (k + 1).min(PREALLOC_SLOTS) as usize);
        let trace = Trace {
            n_queues: n,
            policy,
            switch_overhead: config.switch_overhead,
            seed: opts.seed,
            horizon: opts.horizon,
            end: 0,
            warmup: opts.warmup,
            stride: opts.stride,
            diverged: false,
            lambda: config.arrival_rates(),
            mu: config.service_rates(),
            max_interarrival: vec![0; n],
            total_q: Vec::with_capacity(opts.horizon.min(PREALLOC_SLOTS) as usize),
            stats: WindowStats::new(n),
            slots: SlotSeries::new(n, capacity),
            intervals: Vec::new(),
            jobs: Vec::new(),
        };

        Ok(Self {
            config: config.clone(),
            policy,
            opts,
            arrivals,
            services,
            membership,
            queues: QueueState::new(n),
            server,
            t: 0,
            state: zeros,
            interval_q: vec![0; n],
            interval_w: vec![0; n],
            pending_q: vec![0; n],
            pending_w: vec![0; n],
            last_arrival: vec![0; n],
            trace,
        })
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn queues(&self) -> &QueueState {
        &self.queues
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Adds `count` jobs to queue `i`, stamped with the current slot.
    /// Used to start from a non-empty state.
    pub fn inject(&mut self, i: usize, count: u32) {
        self.queues.push(i, self.t, count);
    }

    fn observe_q(&mut self) {
        for (s, &b) in self.state.iter_mut().zip(&self.queues.backlog) {
            *s = b as f64;
        }
    }

    fn observe_w(&mut self) {
        let t = self.t;
        for i in 0..self.state.len() {
            self.state[i] = self.queues.hol_wait(i, t) as f64;
        }
    }

    fn snapshot_into(&self, q: &mut Vec<u32>, w: &mut Vec<u32>) {
        q.clear();
        w.clear();
        for i in 0..self.config.n_queues {
            q.push(clamp_u32(self.queues.backlog[i]));
            w.push(clamp_u32(self.queues.hol_wait(i, self.t)));
        }
    }

    fn decide(&mut self) -> Result<()> {
        let t = self.t;
        match self.policy.variant {
            PolicyVariant::WBmw => self.observe_w(),
            _ => self.observe_q(),
        }
        let schedules = &self.config.schedules;
        let overhead = self.config.switch_overhead;
        let alpha = self.policy.alpha;
        let decision = match self.policy.variant {
            PolicyVariant::QBmw | PolicyVariant::WBmw => {
                policy::biased_decide(&self.state, &self.server, schedules, overhead)
            }
            PolicyVariant::MaxWeight => policy::maxweight_decide(&self.state, &self.server, schedules)?,
            PolicyVariant::Vfmw => {
                let frame = policy::vfmw_decide(&self.state, &self.server, schedules, t, alpha)?;
                if let Some(len) = frame.frame_len {
                    self.server.frame_end = match frame.decision {
                        Decision::Stay => t + len,
                        Decision::Switch(_) => t + u64::from(overhead) + len,
                    };
                }
                frame.decision
            }
        };

        if let Decision::Switch(target) = decision {
            let bias = match self.policy.variant {
                PolicyVariant::QBmw | PolicyVariant::WBmw => {
                    bias_denominator(self.state.iter().sum(), alpha)
                }
                _ => 1.0,
            };
            let (mut q, mut w) = (std::mem::take(&mut self.pending_q), std::mem::take(&mut self.pending_w));
            self.snapshot_into(&mut q, &mut w);
            self.pending_q = q;
            self.pending_w = w;
            self.server.begin_switch(t, target, bias, overhead)?;
        }
        Ok(())
    }

    /// Advances the world from slot `t` to `t + 1`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t;
        if self.server.is_active() {
            self.decide()?;
        }

        let (active, schedule) = match self.server.mode {
            Mode::Active => (true, self.server.current),
            Mode::Switch { target, .. } => (false, target),
        };
        let record = self.opts.stride != 0 && t.is_multiple_of(self.opts.stride);
        let n = self.config.n_queues;

        if record {
            let slots = &mut self.trace.slots;
            slots.t.push(t);
            for i in 0..n {
                slots.q.push(clamp_u32(self.queues.backlog[i]));
                slots.w.push(clamp_u32(self.queues.hol_wait(i, t)));
            }
            slots.active.push(active);
            slots.schedule.push(schedule as u32);
        }

        let measured = t >= self.opts.warmup;
        let total: u64 = self.queues.total();
        self.trace.total_q.push(clamp_u32(total));
        if measured {
            let stats = &mut self.trace.stats;
            stats.slots += 1;
            stats.switching_slots += u64::from(!active);
            for (sum, &b) in stats.queue_sum.iter_mut().zip(&self.queues.backlog) {
                *sum += b;
            }
        }

        for i in 0..n {
            let (ref stream, ref dist) = self.arrivals[i];
            let a = sample(dist, stream, t);
            let (ref stream, ref dist) = self.services[i];
            let s = sample(dist, stream, t);

            let mut served = 0;
            if active && self.membership[schedule][i] {
                let amount = s.min(clamp_u32(self.queues.backlog[i]));
                let warmup = self.opts.warmup;
                let record_jobs = self.opts.record_jobs;
                let jobs = &mut self.trace.jobs;
                let stats = &mut self.trace.stats;
                served = self.queues.pop(i, amount, |arrival_slot, count| {
                    if arrival_slot >= warmup {
                        stats.delay_sum[i] += (t - arrival_slot + 1) * u64::from(count);
                        stats.delay_count[i] += u64::from(count);
                    }
                    if record_jobs {
                        jobs.push(JobRecord { queue: i as u32, arrival_slot, departure_slot: t, count });
                    }
                });
            }
            self.queues.push(i, t + 1, a);
            if a > 0 {
                let gap = t + 1 - self.last_arrival[i];
                let max = &mut self.trace.max_interarrival[i];
                *max = (*max).max(gap);
                self.last_arrival[i] = t + 1;
            }

            if record {
                self.trace.slots.served.push(served);
                self.trace.slots.arrivals.push(a);
            }
        }

        self.t = t + 1;
        if !self.server.is_active() && self.server.tick_switch()? {
            let schedule = self.server.current;
            let bias = self.server.frozen_bias;
            let closed = self.server.on_switch_complete(self.t)?;
            let q_start = std::mem::replace(&mut self.interval_q, self.pending_q.clone());
            let w_start = std::mem::replace(&mut self.interval_w, self.pending_w.clone());
            self.trace.intervals.push(IntervalRecord {
                start: closed.start,
                len: closed.len,
                complete: true,
                schedule,
                q_start,
                w_start,
                bias,
            });
        }
        Ok(())
    }

    /// Runs to the horizon (or until the backlog ceiling is crossed) and
    /// returns the trace.
    pub fn run(mut self) -> Result<Trace> {
        while self.t < self.opts.horizon {
            self.step()?;
            if self.queues.total() > self.opts.divergence_ceiling {
                self.trace.diverged = true;
                break;
            }
        }
        Ok(self.finish())
    }

    /// Closes the interval log at the current slot and hands over the trace.
    pub fn finish(mut self) -> Trace {
        let end = self.t;
        let schedule = self.server.current;
        let bias = self.server.frozen_bias;
        let start = self.server.interval_start;
        match self.server.mode {
            Mode::Switch { trigger, target, bias: next_bias, .. } => {
                self.trace.intervals.push(IntervalRecord {
                    start,
                    len: trigger - start,
                    complete: true,
                    schedule,
                    q_start: std::mem::take(&mut self.interval_q),
                    w_start: std::mem::take(&mut self.interval_w),
                    bias,
                });
                self.trace.intervals.push(IntervalRecord {
                    start: trigger,
                    len: end - trigger,
                    complete: false,
                    schedule: target,
                    q_start: std::mem::take(&mut self.pending_q),
                    w_start: std::mem::take(&mut self.pending_w),
                    bias: next_bias,
                });
            }
            Mode::Active => {
                self.trace.intervals.push(IntervalRecord {
                    start,
                    len: end - start,
                    complete: false,
                    schedule,
                    q_start: std::mem::take(&mut self.interval_q),
                    w_start: std::mem::take(&mut self.interval_w),
                    bias,
                });
            }
        }
        self.trace.end = end;
        self.trace
    }
}

/// Simulates `config` under `policy` from empty queues.
pub fn simulate(config: &SystemConfig, policy: PolicySpec, opts: SimOptions) -> Result<Trace> {
    Simulation::new(config, policy, opts)?.run()
}

#[inline]
fn clamp_u32(x: u64) -> u32 {
    u32::try_from(x).unwrap_or(u32::MAX)
}
