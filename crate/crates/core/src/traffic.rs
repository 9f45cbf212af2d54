//! Arrival and service processes.
//!
//! Every sample is a pure function of `(master seed, queue, role, slot)`: the
//! generator is counter based, so two simulations that share a seed see the
//! same `A_i(t)` and `S_i(t)` no matter which policy drives them or in which
//! order they query the streams.

use serde::{Deserialize, Serialize};

const PROB_TOL: f64 = 1e-12;

/// A bounded, integer-valued distribution for per-slot arrivals or services.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    Bernoulli(f64),
    Deterministic(u32),
    FiniteDiscrete { values: Vec<u32>, probs: Vec<f64> },
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Bernoulli(p) => *p,
            Distribution::Deterministic(c) => f64::from(*c),
            Distribution::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .map(|(&v, &p)| f64::from(v) * p)
                .sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Distribution::Bernoulli(p) => p * (1.0 - p),
            Distribution::Deterministic(_) => 0.0,
            Distribution::FiniteDiscrete { values, probs } => {
                let m = self.mean();
                values
                    .iter()
                    .zip(probs)
                    .map(|(&v, &p)| p * (f64::from(v) - m).powi(2))
                    .sum()
            }
        }
    }

    /// Largest value in the support (`A_max` / `S_max` for this queue).
    pub fn bound(&self) -> u32 {
        match self {
            Distribution::Bernoulli(p) => u32::from(*p > 0.0),
            Distribution::Deterministic(c) => *c,
            Distribution::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&v, _)| v)
                .max()
                .unwrap_or(0),
        }
    }

    /// Probability of a zero draw.
    pub fn prob_zero(&self) -> f64 {
        match self {
            Distribution::Bernoulli(p) => 1.0 - p,
            Distribution::Deterministic(c) => f64::from(u8::from(*c == 0)),
            Distribution::FiniteDiscrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(&v, _)| v == 0)
                .map(|(_, &p)| p)
                .sum(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            Distribution::Bernoulli(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(format!("Bernoulli parameter {p} outside [0,1]"));
                }
            }
            Distribution::Deterministic(_) => {}
            Distribution::FiniteDiscrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err("FiniteDiscrete needs equally many values and probs".into());
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err("FiniteDiscrete probability outside [0,1]".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(format!("FiniteDiscrete probabilities sum to {total}"));
                }
            }
        }
        Ok(())
    }

    /// Maps a uniform `u` in `[0,1)` to a draw.
    #[inline]
    pub fn quantile(&self, u: f64) -> u32 {
        match self {
            Distribution::Bernoulli(p) => u32::from(u < *p),
            Distribution::Deterministic(c) => *c,
            Distribution::FiniteDiscrete { values, probs } => {
                let mut acc = 0.0;
                for (&v, &p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                // rounding left u above the last partial sum
                values[values.len() - 1]
            }
        }
    }
}

/// Arrival and service processes of one queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub arrival: Distribution,
    pub service: Distribution,
}

impl TrafficSpec {
    pub fn new(arrival: Distribution, service: Distribution) -> Self {
        Self { arrival, service }
    }

    pub fn check(&self) -> Result<(), String> {
        self.arrival.check().map_err(|e| format!("arrival: {e}"))?;
        self.service.check().map_err(|e| format!("service: {e}"))?;
        if self.service.mean() <= 0.0 {
            return Err("service rate must be positive".into());
        }
        Ok(())
    }
}

/// Exact `(lambda, mu)` of a spec.
pub fn mean_rates(spec: &TrafficSpec) -> (f64, f64) {
    (spec.arrival.mean(), spec.service.mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterarrivalBound {
    Finite(u32),
    Unbounded,
}

impl InterarrivalBound {
    pub fn finite(self) -> Option<u32> {
        match self {
            InterarrivalBound::Finite(v) => Some(v),
            InterarrivalBound::Unbounded => None,
        }
    }
}

/// Bound `V_max` on the gap between consecutive arrivals. Only processes that
/// never skip a slot have one; anything with `P(A = 0) > 0` has geometric
/// gaps.
pub fn interarrival_bound(arrival: &Distribution) -> InterarrivalBound {
    if arrival.prob_zero() == 0.0 && arrival.bound() > 0 {
        InterarrivalBound::Finite(1)
    } else {
        InterarrivalBound::Unbounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Arrival,
    Service,
}

/// Identifies one substream under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub queue: usize,
    pub role: StreamRole,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random-access uniform stream keyed by `(seed, stream id)`.
///
/// Slot `t` yields the `t`-th SplitMix64 output for a key derived from the
/// seed and the stream id, so any slot can be sampled without touching the
/// others.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHandle {
    pub master_seed: u64,
    pub id: StreamId,
    key: u64,
}

impl StreamHandle {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let role = match id.role {
            StreamRole::Arrival => 0u64,
            StreamRole::Service => 1u64,
        };
        let code = ((id.queue as u64) << 1) | role;
        let key = mix64(mix64(master_seed ^ 0x5851_f42d_4c95_7f2d) ^ mix64(code.wrapping_add(GOLDEN_GAMMA)));
        Self { master_seed, id, key }
    }

    #[inline]
    pub fn bits(&self, t: u64) -> u64 {
        mix64(self.key.wrapping_add(t.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&self, t: u64) -> f64 {
        (self.bits(t) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Draw of `dist` on `stream` at slot `t`.
#[inline]
pub fn sample(dist: &Distribution, stream: &StreamHandle, t: u64) -> u32 {
    dist.quantile(stream.uniform(t))
}
