use serde::Serialize;

use crate::model::PolicySpec;

/// Per-slot snapshots, stored column-wise (`n_queues` entries per slot for
/// the vector columns).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotSeries {
    n_queues: usize,
    /// Slot of each snapshot.
    pub t: Vec<u64>,
    /// `Q(t)` before service.
    pub q: Vec<u32>,
    /// `W(t)` before service.
    pub w: Vec<u32>,
    /// `S-hat(t)`, the service actually used.
    pub served: Vec<u32>,
    /// `A(t)`.
    pub arrivals: Vec<u32>,
    /// `M(t)`.
    pub active: Vec<bool>,
    /// Schedule index `I(t)` (the target while switching).
    pub schedule: Vec<u32>,
}

impl SlotSeries {
    pub(crate) fn new(n_queues: usize, capacity: usize) -> Self {
        Self {
            n_queues,
            t: Vec::with_capacity(capacity),
            q: Vec::with_capacity(capacity * n_queues),
            w: Vec::with_capacity(capacity * n_queues),
            served: Vec::with_capacity(capacity * n_queues),
            arrivals: Vec::with_capacity(capacity * n_queues),
            active: Vec::with_capacity(capacity),
            schedule: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n_queues(&self) -> usize {
        self.n_queues
    }

    fn row<'a>(&self, col: &'a [u32], i: usize) -> &'a [u32] {
        &col[i * self.n_queues..(i + 1) * self.n_queues]
    }

    pub fn q_at(&self, i: usize) -> &[u32] {
        self.row(&self.q, i)
    }

    pub fn w_at(&self, i: usize) -> &[u32] {
        self.row(&self.w, i)
    }

    pub fn served_at(&self, i: usize) -> &[u32] {
        self.row(&self.served, i)
    }

    pub fn arrivals_at(&self, i: usize) -> &[u32] {
        self.row(&self.arrivals, i)
    }

    /// `1^T Q` of snapshot `i`.
    pub fn total_q(&self, i: usize) -> u64 {
        self.q_at(i).iter().map(|&x| u64::from(x)).sum()
    }
}

/// One interval between consecutive switch triggers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalRecord {
    /// `t_k`.
    pub start: u64,
    /// `T_k`; for the final, censored interval the time until the end of the run.
    pub len: u64,
    /// False for the last interval, which the run cut short.
    pub complete: bool,
    /// Schedule served during the interval.
    pub schedule: usize,
    /// `Q(t_k)`.
    pub q_start: Vec<u32>,
    /// `W(t_k)`.
    pub w_start: Vec<u32>,
    /// Frozen bias in effect during the interval.
    pub bias: f64,
}

impl IntervalRecord {
    pub fn total_q(&self) -> u64 {
        self.q_start.iter().map(|&x| u64::from(x)).sum()
    }

    pub fn total_w(&self) -> u64 {
        self.w_start.iter().map(|&x| u64::from(x)).sum()
    }
}

/// `count` jobs of `queue` that arrived together and left together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JobRecord {
    pub queue: u32,
    /// First slot in which the job is counted in `Q`.
    pub arrival_slot: u64,
    /// Slot in which the job was served.
    pub departure_slot: u64,
    pub count: u32,
}

/// Delay of a completed job in slots: a job served in the first slot it is
/// backlogged has delay 1.
pub fn job_delay(job: &JobRecord) -> u64 {
    job.departure_slot - job.arrival_slot + 1
}

/// Sufficient statistics over the measurement window `[warmup, end)`,
/// accumulated while the run progresses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowStats {
    /// Measured slots.
    pub slots: u64,
    /// Measured slots with `M(t) = 0`.
    pub switching_slots: u64,
    /// Per-queue sum of `Q_i(t)` over measured slots.
    pub queue_sum: Vec<u64>,
    /// Per-queue sum and count of delays of jobs arriving in the window.
    pub delay_sum: Vec<u64>,
    pub delay_count: Vec<u64>,
}

impl WindowStats {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            queue_sum: vec![0; n],
            delay_sum: vec![0; n],
            delay_count: vec![0; n],
            ..Self::default()
        }
    }
}

/// Everything recorded during one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n_queues: usize,
    pub policy: PolicySpec,
    pub switch_overhead: u32,
    pub seed: u64,
    /// Requested horizon.
    pub horizon: u64,
    /// One past the last simulated slot (`< horizon` when the run diverged).
    pub end: u64,
    pub warmup: u64,
    /// Snapshot stride; 0 disables snapshots.
    pub stride: u64,
    pub diverged: bool,
    /// Mean arrival and service rates of the simulated system.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// Largest observed gap between consecutive arrival slots of each queue
    /// (the first gap counted from slot 0).
    pub max_interarrival: Vec<u64>,
    /// `1^T Q(t)` of every simulated slot.
    pub total_q: Vec<u32>,
    pub stats: WindowStats,
    pub slots: SlotSeries,
    pub intervals: Vec<IntervalRecord>,
    /// Completed jobs; empty unless job recording was requested.
    pub jobs: Vec<JobRecord>,
}

impl Trace {
    /// Index range of snapshots with `t` in `[from, to)`.
    pub fn snapshot_range(&self, from: u64, to: u64) -> std::ops::Range<usize> {
        let lo = self.slots.t.partition_point(|&t| t < from);
        let hi = self.slots.t.partition_point(|&t| t < to);
        lo..hi
    }

    /// Measurement window `[warmup, end)`.
    pub fn window(&self) -> (u64, u64) {
        (self.warmup.min(self.end), self.end)
    }
}
