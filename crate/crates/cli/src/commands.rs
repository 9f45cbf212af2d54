use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use bmw_core::capacity::utilization_factor;
use bmw_core::experiment::{aggregate, run_batch, sweep_points, write_csv, Point, RunPlan, RunRecord, SystemSource};
use bmw_core::model::{PolicySpec, PolicyVariant};
use bmw_core::scenarios::Scenario;
use serde::Serialize;

use crate::config::{self, Format, Output, Policies, RunConfig, Seeds, Sweep};
use crate::{RunArgs, SystemArgs};

fn system_source(args: &SystemArgs, base: Option<&RunConfig>) -> Result<SystemSource, String> {
    match (&args.scenario, base) {
        (Some(name), _) => {
            let scenario: Scenario = name.parse().map_err(|e| format!("--scenario: {e}"))?;
            Ok(SystemSource::Preset { scenario, schedules: None })
        }
        (None, Some(cfg)) => Ok(cfg.system.clone()),
        (None, None) => Err("give --config or --scenario".into()),
    }
}

fn parse_policy(text: &str, default_alpha: f64) -> Result<PolicySpec, String> {
    let (name, alpha) = match text.split_once(':') {
        Some((n, a)) => (n, a.parse::<f64>().map_err(|_| format!("bad alpha in policy '{text}'"))?),
        None => (text, default_alpha),
    };
    let variant: PolicyVariant = name.trim().parse().map_err(|e| format!("--policy: {e}"))?;
    if variant == PolicyVariant::MaxWeight {
        return Ok(PolicySpec::max_weight());
    }
    PolicySpec::new(variant, alpha).map_err(|e| format!("--policy {text}: {e}"))
}

/// Merges the optional config file with the flags; flags win.
pub fn resolve(args: &RunArgs, sweep: Option<(Option<String>, Option<Vec<f64>>)>) -> Result<RunConfig, String> {
    let base = args.system.config.as_deref().map(config::load).transpose()?;
    let system = system_source(&args.system, base.as_ref())?;
    let default_alpha = args.alpha.unwrap_or(0.001);
    let policy = match (&args.policy, &base) {
        (Some(list), _) => {
            Policies::Many(list.iter().map(|p| parse_policy(p, default_alpha)).collect::<Result<_, _>>()?)
        }
        (None, Some(cfg)) => match args.alpha {
            Some(a) => Policies::Many(
                cfg.policy
                    .to_vec()
                    .into_iter()
                    .map(|p| if p.variant.uses_alpha() { PolicySpec { alpha: a, ..p } } else { p })
                    .collect(),
            ),
            None => cfg.policy.clone(),
        },
        (None, None) => return Err("give --policy or a config with a policy".into()),
    };
    for p in policy.to_vec() {
        p.check().map_err(|e| e.to_string())?;
    }

    let seeds = match (args.seeds, args.base_seed, &base) {
        (None, None, Some(cfg)) => cfg.seeds.clone(),
        (count, base_seed, _) => {
            let Seeds::Range { base_seed: b0, count: c0 } = Seeds::default() else { unreachable!() };
            Seeds::Range { base_seed: base_seed.unwrap_or(b0), count: count.unwrap_or(c0) }
        }
    };

    let sweep = match sweep {
        None => None,
        Some((axis, values)) => {
            let from_file = base.as_ref().and_then(|c| c.sweep.clone());
            let axis = match (axis, &from_file) {
                (Some(a), _) => a.parse().map_err(|e: bmw_core::Error| e.to_string())?,
                (None, Some(s)) => s.axis,
                (None, None) => return Err("sweep needs --axis".into()),
            };
            let values = match (values, &from_file) {
                (Some(v), _) => v,
                (None, Some(s)) => s.values.clone(),
                (None, None) => return Err("sweep needs --values".into()),
            };
            if values.is_empty() {
                return Err("sweep needs at least one value".into());
            }
            Some(Sweep { axis, values })
        }
    };

    let output = match (&args.out, &base.as_ref().and_then(|c| c.output.clone())) {
        (Some(path), _) => Some(Output { path: path.clone(), format: args.format.unwrap_or_default() }),
        (None, Some(o)) => Some(Output { path: o.path.clone(), format: args.format.unwrap_or(o.format) }),
        (None, None) => None,
    };

    Ok(RunConfig {
        system,
        beta_star: args.system.beta_star.or(base.as_ref().and_then(|c| c.beta_star)),
        switch_overhead: args.system.ts.or(base.as_ref().and_then(|c| c.switch_overhead)),
        policy,
        horizon: args.horizon.or(base.as_ref().map(|c| c.horizon)).unwrap_or(2_000_000),
        warmup: args.warmup.or(base.as_ref().map(|c| c.warmup)).unwrap_or(200_000),
        seeds,
        sweep,
        output,
    })
}

pub fn points(cfg: &RunConfig) -> Result<Vec<Point>, String> {
    let policies = cfg.policy.to_vec();
    match &cfg.sweep {
        Some(s) => sweep_points(&cfg.system, &policies, cfg.beta_star, cfg.switch_overhead, s.axis, &s.values)
            .map_err(|e| e.to_string()),
        None => policies
            .into_iter()
            .map(|p| Point::new(&cfg.system, p, cfg.beta_star, cfg.switch_overhead).map_err(|e| e.to_string()))
            .collect(),
    }
}

#[derive(Serialize)]
struct JsonOut<'a> {
    runs: &'a [RunRecord],
    aggregates: Vec<bmw_core::experiment::Aggregate>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    version: &'static str,
    config: &'a RunConfig,
    runs: usize,
    elapsed_seconds: f64,
    threads: usize,
}

fn emit(records: &[RunRecord], with_mean: bool, format: Format, out: &mut dyn Write) -> Result<(), String> {
    match format {
        Format::Csv => write_csv(records, with_mean, out).map_err(|e| e.to_string()),
        Format::Json => {
            let doc = JsonOut { runs: records, aggregates: aggregate(records) };
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(|e| e.to_string())?;
            out.write_all(b"\n").map_err(|e| e.to_string())
        }
    }
}

pub fn run(args: &RunArgs, sweep: Option<(Option<String>, Option<Vec<f64>>)>) -> Result<u8, String> {
    let cfg = resolve(args, sweep)?;
    let points = points(&cfg)?;
    let seeds = cfg.seeds.to_vec();
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    let plan = RunPlan { horizon: cfg.horizon, warmup: cfg.warmup };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let records = pool.install(|| run_batch(&points, &seeds, plan)).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed().as_secs_f64();

    let with_mean = cfg.sweep.is_none();
    match &cfg.output {
        Some(o) => {
            let file = File::create(&o.path).map_err(|e| format!("{}: {e}", o.path.display()))?;
            let mut w = BufWriter::new(file);
            emit(&records, with_mean, o.format, &mut w)?;
            w.flush().map_err(|e| e.to_string())?;
            let mut meta = o.path.clone().into_os_string();
            meta.push(".meta.json");
            let sidecar = Sidecar {
                version: env!("CARGO_PKG_VERSION"),
                config: &cfg,
                runs: records.len(),
                elapsed_seconds: elapsed,
                threads: pool.current_num_threads(),
            };
            let text = serde_json::to_string_pretty(&sidecar).map_err(|e| e.to_string())?;
            std::fs::write(&meta, text + "\n").map_err(|e| e.to_string())?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(&records, with_mean, args.format.unwrap_or_default(), &mut lock)?;
            lock.flush().map_err(|e| e.to_string())?;
        }
    }

    let diverged = records.iter().filter(|r| r.report.diverged).count();
    if diverged > 0 {
        eprintln!("warning: {diverged} of {} runs diverged", records.len());
        return Ok(2);
    }
    Ok(0)
}

#[derive(Serialize)]
struct CapacityOut {
    scenario: String,
    schedules: Vec<Vec<usize>>,
    loads: Vec<f64>,
    beta_star: f64,
    epsilon_star: f64,
    weights: Vec<f64>,
    feasible: bool,
}

pub fn capacity(args: &SystemArgs) -> Result<u8, String> {
    let base = args.config.as_deref().map(config::load).transpose()?;
    let source = system_source(args, base.as_ref())?;
    let beta = args.beta_star.or(base.as_ref().and_then(|c| c.beta_star));
    let ts = args.ts.or(base.as_ref().and_then(|c| c.switch_overhead));
    let system = source.build(beta, ts).map_err(|e| e.to_string())?;
    let loads = system.loads();
    let result = utilization_factor(&loads, &system.schedules).map_err(|e| e.to_string())?;
    let out = CapacityOut {
        scenario: source.label(),
        schedules: system.schedules.iter().map(|s| s.labels()).collect(),
        loads,
        beta_star: result.beta_star,
        epsilon_star: result.epsilon_star,
        weights: result.weights,
        feasible: result.feasible,
    };
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?);
    Ok(0)
}
