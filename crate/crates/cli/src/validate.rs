use bmw_core::capacity::{lp_oracle, utilization_factor};
use bmw_core::engine::{checks, simulate, SimOptions};
use bmw_core::metrics::{finalize, interval_bound_check, little_consistency, BoundCheck};
use bmw_core::model::{PolicySpec, PolicyVariant, Schedule, SystemConfig};
use bmw_core::scenarios::preset;
use bmw_core::traffic::{StreamHandle, StreamId, StreamRole};
use bmw_core::Trace;
use serde::Serialize;

const LP_CASES: usize = 200;
const LP_TOL: f64 = 1e-9;
const LITTLE_HORIZON: u64 = 1_000_000;
const LITTLE_BAND: (f64, f64) = (0.95, 1.05);

#[derive(Debug, Serialize)]
struct Suite {
    name: &'static str,
    passed: bool,
    checked: u64,
    failures: Vec<String>,
}

impl Suite {
    fn new(name: &'static str) -> Self {
        Self { name, passed: true, checked: 0, failures: Vec::new() }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.passed = false;
            if self.failures.len() < 50 {
                self.failures.push(what());
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct Report {
    seed: u64,
    horizon: u64,
    negative_control: bool,
    passed: bool,
    suites: Vec<Suite>,
}

fn systems() -> Vec<(&'static str, SystemConfig)> {
    [("S1", None), ("S2", None), ("S3", Some(0.95)), ("S4", Some(0.95))]
        .into_iter()
        .map(|(name, beta)| (name, preset(name, beta, 1).expect("preset")))
        .collect()
}

fn policies() -> Vec<PolicySpec> {
    vec![
        PolicySpec::new(PolicyVariant::QBmw, 0.001).expect("alpha"),
        PolicySpec::new(PolicyVariant::WBmw, 0.001).expect("alpha"),
        PolicySpec::new(PolicyVariant::Vfmw, 0.5).expect("alpha"),
        PolicySpec::max_weight(),
    ]
}

fn is_bmw(p: &PolicySpec) -> bool {
    matches!(p.variant, PolicyVariant::QBmw | PolicyVariant::WBmw)
}

/// Zeroes the length of every completed interval that started with a
/// nonempty system.
fn corrupt(trace: &mut Trace) {
    for iv in trace.intervals.iter_mut().filter(|iv| iv.complete && iv.total_q() > 0) {
        iv.len = 0;
    }
}

fn trace_suites(seed: u64, horizon: u64, negative_control: bool) -> Result<(Suite, Suite), String> {
    let mut invariants = Suite::new("trace_invariants");
    let mut bounds = Suite::new("interval_bounds");
    let warmup = horizon / 10;
    for (name, cfg) in systems() {
        for policy in policies() {
            let label = format!("{name}/{}", policy.label());
            let mut trace = simulate(&cfg, policy, SimOptions::new(horizon, warmup, seed)).map_err(|e| e.to_string())?;
            let mut outcomes = checks::all(&trace, &cfg);
            if is_bmw(&policy) {
                outcomes.push(checks::work_conservation(&trace, &cfg));
            }
            for c in outcomes {
                invariants.record(c.passed(), || format!("{label} {}: {:?}", c.name, c.violations));
            }
            if !is_bmw(&policy) {
                continue;
            }
            if negative_control {
                corrupt(&mut trace);
            }
            let check: BoundCheck =
                interval_bound_check(&trace, &cfg, policy.alpha, policy.variant).map_err(|e| e.to_string())?;
            bounds.record(check.passed(), || {
                format!(
                    "{label}: {} of {} intervals below the bound (C = {:.3e})",
                    check.violations.len(),
                    check.checked,
                    check.constant
                )
            });
        }
    }
    Ok((invariants, bounds))
}

fn capacity_suite(seed: u64) -> Result<Suite, String> {
    let mut suite = Suite::new("capacity_lp");
    let rng = StreamHandle::new(seed, StreamId { queue: 0, role: StreamRole::Arrival });
    let mut draw = 0u64;
    let mut next = || {
        draw += 1;
        rng.uniform(draw)
    };
    for case in 0..LP_CASES {
        let n = 2 + (next() * 5.0) as usize;
        let j = 1 + (next() * 5.0) as usize;
        let mut schedules: Vec<Schedule> =
            (0..j).map(|_| Schedule::new((0..n).filter(|_| next() < 0.4))).filter(|s| !s.is_empty()).collect();
        for q in 0..n {
            if !schedules.iter().any(|s| s.contains(q)) {
                schedules.push(Schedule::singleton(q));
            }
        }
        let rho: Vec<f64> = (0..n).map(|_| next()).collect();
        let a = utilization_factor(&rho, &schedules).map_err(|e| e.to_string())?;
        let b = lp_oracle(&rho, &schedules).map_err(|e| e.to_string())?;
        let diff = (a.beta_star - b.beta_star).abs();
        suite.record(diff <= LP_TOL, || {
            format!("case {case}: simplex {} vs oracle {} (diff {diff:.2e})", a.beta_star, b.beta_star)
        });
    }
    Ok(suite)
}

fn little_suite(seed: u64, horizon: u64) -> Result<Suite, String> {
    let mut suite = Suite::new("little_law");
    let horizon = horizon.max(LITTLE_HORIZON);
    let warmup = horizon / 10;
    for (name, cfg) in [("S3", preset("S3", Some(0.9), 1)), ("S5", preset("S5", Some(0.9), 1))] {
        let cfg = cfg.map_err(|e| e.to_string())?;
        let lambda: f64 = cfg.arrival_rates().iter().sum();
        for policy in policies().into_iter().filter(is_bmw) {
            let trace = simulate(&cfg, policy, SimOptions::lean(horizon, warmup, seed)).map_err(|e| e.to_string())?;
            let report = finalize(&trace, policy.alpha, (warmup, trace.end)).map_err(|e| e.to_string())?;
            let ratio = little_consistency(&report, lambda).map_err(|e| e.to_string())?;
            suite.record((LITTLE_BAND.0..=LITTLE_BAND.1).contains(&ratio), || {
                format!("{name}/{}: ratio {ratio:.4}", policy.label())
            });
        }
    }
    Ok(suite)
}

fn determinism_suite(seed: u64) -> Result<Suite, String> {
    let mut suite = Suite::new("determinism");
    let cfg = preset("S4", Some(0.9), 2).map_err(|e| e.to_string())?;
    for policy in policies() {
        let run = || simulate(&cfg, policy, SimOptions::new(20_000, 2_000, seed)).map_err(|e| e.to_string());
        let (a, b) = (run()?, run()?);
        suite.record(a == b, || format!("S4/{}: traces differ", policy.label()));
    }
    Ok(suite)
}

pub fn run(seed: u64, horizon: u64, negative_control: bool) -> Result<u8, String> {
    if horizon < 2 {
        return Err("horizon must be at least 2".into());
    }
    let (invariants, bounds) = trace_suites(seed, horizon, negative_control)?;
    let suites = vec![invariants, bounds, capacity_suite(seed)?, little_suite(seed, horizon)?, determinism_suite(seed)?];
    let passed = suites.iter().all(|s| s.passed);
    let report = Report { seed, horizon, negative_control, passed, suites };
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?);
    Ok(if passed { 0 } else { 3 })
}
