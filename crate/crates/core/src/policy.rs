//! Per-slot scheduling decisions.
//!
//! All decision functions are pure: they look at the observable state vector
//! (queue lengths or head-of-line waiting times) and the server's bookkeeping,
//! and return [`Decision::Stay`] or [`Decision::Switch`]. The engine owns the
//! [`ServerState`] and applies the decision.
//!
//! Tie-breaking everywhere: the current schedule wins a tie for the maximum
//! weight, otherwise the lowest schedule index does. A switch whose target is
//! the current schedule is suppressed.

use crate::error::{Error, Result};
use crate::model::Schedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Active,
    Switch {
        /// Switching slots still to go, including the current one.
        remaining: u32,
        target: usize,
        /// Slot at which the switch was triggered (`t_{k+1}`).
        trigger: u64,
        /// Bias evaluated on the state at `trigger`, frozen for the next interval.
        bias: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stay,
    Switch(usize),
}

/// A closed interval `(t_k, T_k)` between two consecutive switch triggers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedInterval {
    pub start: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub mode: Mode,
    /// Schedule served in the current interval, `I(t_k)`.
    pub current: usize,
    /// `t_k`.
    pub interval_start: u64,
    /// `F(Q(t_k))` or `G(W(t_k))`; always at least 1.
    pub frozen_bias: f64,
    /// First slot after the current VFMW frame.
    pub frame_end: u64,
    pub intervals: Vec<ClosedInterval>,
}

impl ServerState {
    /// Server at `t_0 = 0`, active on `initial`, with no overhead paid.
    pub fn new(initial: usize) -> Self {
        Self {
            mode: Mode::Active,
            current: initial,
            interval_start: 0,
            frozen_bias: 1.0,
            frame_end: 0,
            intervals: Vec::new(),
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(self.mode, Mode::Active)
    }

    /// Enters SWITCH mode at slot `t`; the slots `t..t + overhead` are lost.
    pub fn begin_switch(&mut self, t: u64, target: usize, bias: f64, overhead: u32) -> Result<()> {
        if !self.is_active() {
            return Err(Error::WrongMode("begin_switch"));
        }
        debug_assert!(overhead >= 1 && bias >= 1.0 && target != self.current);
        self.mode = Mode::Switch { remaining: overhead, target, trigger: t, bias };
        Ok(())
    }

    /// Consumes one switching slot. Returns true when none remain.
    pub fn tick_switch(&mut self) -> Result<bool> {
        match &mut self.mode {
            Mode::Switch { remaining, .. } => {
                *remaining -= 1;
                Ok(*remaining == 0)
            }
            Mode::Active => Err(Error::WrongMode("tick_switch")),
        }
    }

    /// Finishes a switch at slot boundary `t`: the server becomes active on
    /// the target, the interval that ended at the trigger is logged and the
    /// bias evaluated at the trigger is frozen for the new interval.
    pub fn on_switch_complete(&mut self, _t: u64) -> Result<ClosedInterval> {
        let Mode::Switch { remaining: 0, target, trigger, bias } = self.mode else {
            return Err(Error::WrongMode("on_switch_complete"));
        };
        let closed = ClosedInterval { start: self.interval_start, len: trigger - self.interval_start };
        self.intervals.push(closed);
        self.mode = Mode::Active;
        self.current = target;
        self.interval_start = trigger;
        self.frozen_bias = bias;
        Ok(closed)
    }
}

/// `max{1, sum^alpha}`: the bias denominator `F` (or `G`) of the BMW policies.
#[inline]
pub fn bias_denominator(state_sum: f64, alpha: f64) -> f64 {
    state_sum.powf(alpha).max(1.0)
}

/// Index and weight of the heaviest schedule, preferring `current` and then
/// the lowest index on ties.
#[inline]
pub fn argmax_schedule(state: &[f64], schedules: &[Schedule], current: Option<usize>) -> (usize, f64) {
    let mut best = 0;
    let mut best_w = f64::NEG_INFINITY;
    for (j, s) in schedules.iter().enumerate() {
        let w = s.weight(state);
        if w > best_w {
            best = j;
            best_w = w;
        }
    }
    if let Some(c) = current {
        if schedules[c].weight(state) >= best_w {
            return (c, best_w);
        }
    }
    (best, best_w)
}

fn check_active(server: &ServerState, what: &'static str) -> Result<()> {
    if server.is_active() {
        Ok(())
    } else {
        Err(Error::WrongMode(what))
    }
}

fn check_dims(state: &[f64], schedules: &[Schedule]) -> Result<()> {
    let needed = schedules
        .iter()
        .filter_map(|s| s.members().last())
        .max()
        .map_or(0, |&q| q + 1);
    if state.len() < needed {
        return Err(Error::Dimension { expected: needed, found: state.len() });
    }
    Ok(())
}

/// Biased switching rule shared by Q-BMW and W-BMW: switch to the heaviest
/// schedule iff `(1 + T_s / bias) * I(t_k)^T x <= max_j I^(j)^T x`.
pub fn biased_decide(state: &[f64], server: &ServerState, schedules: &[Schedule], overhead: u32) -> Decision {
    let current_w = schedules[server.current].weight(state);
    let (best, best_w) = argmax_schedule(state, schedules, Some(server.current));
    let inflated = (1.0 + f64::from(overhead) / server.frozen_bias) * current_w;
    if inflated <= best_w && best != server.current {
        Decision::Switch(best)
    } else {
        Decision::Stay
    }
}

/// Q-BMW decision on queue lengths `q`.
pub fn qbmw_decide(q: &[f64], server: &ServerState, schedules: &[Schedule], overhead: u32) -> Result<Decision> {
    check_active(server, "qbmw_decide")?;
    check_dims(q, schedules)?;
    Ok(biased_decide(q, server, schedules, overhead))
}

/// W-BMW decision on head-of-line waiting times `w`.
pub fn wbmw_decide(w: &[f64], server: &ServerState, schedules: &[Schedule], overhead: u32) -> Result<Decision> {
    check_active(server, "wbmw_decide")?;
    check_dims(w, schedules)?;
    Ok(biased_decide(w, server, schedules, overhead))
}

/// VFMW outcome: the decision plus, at a frame boundary, the number of
/// ACTIVE slots in the next frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDecision {
    pub decision: Decision,
    pub frame_len: Option<u64>,
}

/// Frame length `max{1, floor((1^T Q)^alpha)}`.
pub fn frame_length(total: f64, alpha: f64) -> u64 {
    (total.powf(alpha).floor() as u64).max(1)
}

/// Variable-frame Max-Weight: inside a frame the server stays put; at the
/// boundary it picks the heaviest schedule and starts a frame of
/// `frame_length` active slots.
pub fn vfmw_decide(
    q: &[f64],
    server: &ServerState,
    schedules: &[Schedule],
    t: u64,
    alpha: f64,
) -> Result<FrameDecision> {
    check_active(server, "vfmw_decide")?;
    check_dims(q, schedules)?;
    if t < server.frame_end {
        return Ok(FrameDecision { decision: Decision::Stay, frame_len: None });
    }
    let (best, _) = argmax_schedule(q, schedules, Some(server.current));
    let len = frame_length(q.iter().sum(), alpha);
    let decision = if best == server.current { Decision::Stay } else { Decision::Switch(best) };
    Ok(FrameDecision { decision, frame_len: Some(len) })
}

/// Unbiased Max-Weight: follow the argmax every active slot.
pub fn maxweight_decide(q: &[f64], server: &ServerState, schedules: &[Schedule]) -> Result<Decision> {
    check_active(server, "maxweight_decide")?;
    check_dims(q, schedules)?;
    let (best, _) = argmax_schedule(q, schedules, Some(server.current));
    Ok(if best == server.current { Decision::Stay } else { Decision::Switch(best) })
}
