use super::config::{ConfigError, Layout, ScenarioConfig};
use super::metrics::{compute_metrics, MetricsReport};
use super::trace::{write_ledger_csv, write_trace, TraceError};
use crate::collision::{box_margin, BoxRules};
use crate::deconfliction::{AgentParams, Variant};
use crate::planner::LatticePlanner;
use crate::simnet::{AgentSpec, Engine, EngineSetup, ObstacleSpec, RunResult};
use crate::trajectory::{obstacle_as_spline, trefoil_position, AgentBox, TrefoilParams, Vec3};
use crate::AgentId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

/// Obstacle ids start here so they never collide with agent ids.
pub const OBSTACLE_ID_BASE: u32 = 1000;

const PLACEMENT_ATTEMPTS: usize = 200;

/// Agent start/goal pairs with their protocol variants.
pub fn agent_endpoints(cfg: &ScenarioConfig) -> Vec<(Vec3, Vec3, Variant)> {
    match &cfg.layout {
        Layout::CircleExchange { count, radius, z } => (0..*count)
            .map(|i| {
                let th = TAU * i as f64 / *count as f64;
                let p = Vec3::new(radius * th.cos(), radius * th.sin(), *z);
                let q = Vec3::new(-p.x, -p.y, *z);
                (p, q, cfg.variant)
            })
            .collect(),
        Layout::Explicit { agents } => agents
            .iter()
            .map(|a| {
                (
                    Vec3::from(a.start),
                    Vec3::from(a.goal),
                    a.variant.unwrap_or(cfg.variant),
                )
            })
            .collect(),
    }
}

fn uniform3(rng: &mut ChaCha8Rng, lo: &[f64; 3], hi: &[f64; 3]) -> Vec3 {
    Vec3::from_fn(|i, _| {
        if hi[i] > lo[i] {
            rng.gen_range(lo[i]..hi[i])
        } else {
            lo[i]
        }
    })
}

/// Samples trefoil obstacles whose whole path keeps `clearance` from every
/// agent start and goal.
fn place_obstacles(
    cfg: &ScenarioConfig,
    endpoints: &[(Vec3, Vec3, Variant)],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ObstacleSpec>, ConfigError> {
    let Some(o) = &cfg.obstacles else {
        return Ok(Vec::new());
    };
    let half = AgentBox {
        half_extents: Vec3::from(cfg.boxes.obstacle),
    };
    let combined = half.half_extents + Vec3::from(cfg.boxes.agent);
    let duration = cfg.t_end + cfg.horizon + 1.0;
    let mut out = Vec::with_capacity(o.count);
    for k in 0..o.count {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let rate = if o.rate_hi > o.rate_lo {
                rng.gen_range(o.rate_lo..o.rate_hi)
            } else {
                o.rate_lo
            };
            let params = TrefoilParams {
                center: uniform3(rng, &o.center_lo, &o.center_hi),
                scale: uniform3(rng, &o.scale_lo, &o.scale_hi),
                angular_rate: if rng.gen::<bool>() { rate } else { -rate },
                phase: rng.gen_range(0.0..TAU),
            };
            let period = params.period();
            let clear = (0..=256).all(|j| {
                let p = trefoil_position(&params, period * j as f64 / 256.0, 0);
                endpoints.iter().all(|(s, g, _)| {
                    box_margin(&(p - s), &combined) >= o.clearance && box_margin(&(p - g), &combined) >= o.clearance
                })
            });
            if clear {
                placed = Some(params);
                break;
            }
        }
        let params = placed.ok_or_else(|| ConfigError::Invalid {
            field: "obstacles",
            msg: format!("could not place obstacle {k} clear of agent starts and goals"),
        })?;
        let segments = ((duration / params.period()) * o.segments_per_period as f64).ceil() as usize;
        let traj = obstacle_as_spline(
            AgentId(OBSTACLE_ID_BASE + k as u32),
            &params,
            0.0,
            duration,
            segments.max(1),
        )
        .map_err(|e| ConfigError::Invalid {
            field: "obstacles",
            msg: e.to_string(),
        })?;
        out.push(ObstacleSpec {
            traj: Arc::new(traj),
            half,
        });
    }
    Ok(out)
}

/// Expands a validated config into an engine setup. Agent ids are `0..n`.
pub fn build_setup(cfg: &ScenarioConfig) -> Result<EngineSetup, ConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let endpoints = agent_endpoints(cfg);
    let obstacles = place_obstacles(cfg, &endpoints, &mut rng)?;
    let exact = AgentBox {
        half_extents: Vec3::from(cfg.boxes.agent),
    };
    let boxes = BoxRules {
        own: exact.inflated(cfg.boxes.inflation),
        peer: exact,
        obstacle: AgentBox {
            half_extents: Vec3::from(cfg.boxes.obstacle),
        },
    };
    let agents = endpoints
        .iter()
        .enumerate()
        .map(|(i, (start, goal, variant))| AgentSpec {
            id: AgentId(i as u32),
            params: AgentParams {
                variant: *variant,
                delta_dc: cfg.delta_dc,
                delta_c: cfg.delta_c,
                tick: cfg.tick,
                delta_o_max: cfg.latency.max(),
                goal: *goal,
                goal_tol: cfg.goal_tol,
                boxes,
                limits: cfg.limits,
                horizon: cfg.horizon,
                failure_budget: cfg.failure_budget,
            },
            start: *start,
            first_iteration: if cfg.start_spread > 0.0 {
                rng.gen_range(0.0..=cfg.start_spread)
            } else {
                0.0
            },
            exact_box: exact,
        })
        .collect();
    Ok(EngineSetup {
        agents,
        obstacles,
        delay: cfg.delay.clone(),
        latency: cfg.latency.clone(),
        seed: cfg.seed,
    })
}

/// Runs a scenario with the sampling planner and computes its metrics.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(MetricsReport, RunResult), ConfigError> {
    let setup = build_setup(cfg)?;
    let planner = LatticePlanner::new(cfg.planner);
    let result = Engine::new(setup, &planner).run_until(cfg.t_end);
    let metrics = compute_metrics(&result, cfg.goal_tol);
    Ok((metrics, result))
}

/// Writes `trace.jsonl`, `ledger.csv`, `metrics.json` and a two-column
/// `delay_histogram.dat` (bin start in ms, count) into `dir`.
pub fn write_outputs(dir: &Path, metrics: &MetricsReport, result: &RunResult) -> Result<(), TraceError> {
    fs::create_dir_all(dir)?;
    let mut trace = BufWriter::new(File::create(dir.join("trace.jsonl"))?);
    write_trace(&mut trace, &result.trace)?;
    trace.flush()?;
    write_ledger_csv(File::create(dir.join("ledger.csv"))?, &result.ledger)?;
    fs::write(dir.join("metrics.json"), metrics.to_json())?;
    let mut hist = BufWriter::new(File::create(dir.join("delay_histogram.dat"))?);
    for (i, count) in metrics.delay_histogram.iter().enumerate() {
        writeln!(hist, "{} {}", i as f64 * metrics.histogram_width * 1e3, count)?;
    }
    hist.flush()?;
    Ok(())
}
