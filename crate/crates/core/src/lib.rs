//! Discrete-time simulation of single-server multi-queue systems with
//! switching overhead, and the Biased Max-Weight scheduling policies.

pub mod capacity;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod scenarios;
pub mod traffic;

pub use capacity::{calibrate_arrivals, utilization_factor, CapacityResult};
pub use engine::{simulate, SimOptions, Trace};
pub use error::{Error, Result};
pub use metrics::{finalize, Estimate, SimReport};
pub use model::{PolicySpec, PolicyVariant, Schedule, SystemConfig};
pub use scenarios::{preset, Scenario};
pub use traffic::{Distribution, TrafficSpec};
