//! Run metrics computed from the executed trajectories.
//!
//! An agent executes the most recently committed trajectory at every instant.
//! Commits only replace the portion after the switch time, so evaluating the
//! latest commit at or before `t` reproduces the flown path exactly.

use crate::collision::box_margin;
use crate::deconfliction::Counters;
use crate::simnet::{guarantee_monitor, histogram, AgentOutcome, RunResult};
use crate::trajectory::{TrajectorySpline, Vec3};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Sampling step for path integrals and stop detection (s).
pub const SAMPLE_DT: f64 = 0.01;
/// Sampling step for the physical-overlap scan (s).
pub const OVERLAP_DT: f64 = 0.001;
/// Speed below which an agent counts as stopped (m/s).
pub const STOP_SPEED: f64 = 0.05;
/// Minimum duration of a counted stop (s).
pub const STOP_MIN_DURATION: f64 = 0.5;
/// Speed below which an unfinished agent counts as stuck (m/s).
pub const DEADLOCK_SPEED: f64 = 0.01;
/// Window at the end of the run over which deadlock is judged (s).
pub const DEADLOCK_WINDOW: f64 = 10.0;
/// Delay histogram bin width (s).
pub const HISTOGRAM_WIDTH: f64 = 0.01;

/// Piecewise view of what an agent actually flew.
pub struct ExecutedPath<'a> {
    timeline: &'a [(f64, Arc<TrajectorySpline>)],
}

impl<'a> ExecutedPath<'a> {
    pub fn new(timeline: &'a [(f64, Arc<TrajectorySpline>)]) -> Self {
        assert!(!timeline.is_empty(), "timeline holds the initial trajectory");
        Self { timeline }
    }

    pub fn active(&self, t: f64) -> &TrajectorySpline {
        let i = self.timeline.partition_point(|(tc, _)| *tc <= t);
        &self.timeline[i.saturating_sub(1)].1
    }

    pub fn evaluate(&self, t: f64, order: usize) -> Vec3 {
        self.active(t).evaluate(t, order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub id: AgentId,
    pub done: bool,
    pub stopped: bool,
    /// No sampled overlap with any peer or obstacle using exact boxes.
    pub collision_free: bool,
    /// Smallest sampled box-metric margin to any peer or obstacle (m);
    /// `None` when there is nothing else in the scene.
    pub min_margin: Option<f64>,
    /// First time after which the agent stays within goal tolerance.
    pub arrival_time: Option<f64>,
    /// From first motion to arrival (s).
    pub travel_time: Option<f64>,
    pub travel_distance: f64,
    pub stops: u32,
    pub stop_time: f64,
    /// Integral of squared jerk norm over the run.
    pub jerk_integral: f64,
    pub deadlocked: bool,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub t_final: f64,
    pub agents: Vec<AgentMetrics>,
    pub all_done: bool,
    pub collision_free: bool,
    pub deadlock: bool,
    pub totals: Counters,
    pub max_delay: Option<f64>,
    pub histogram_width: f64,
    pub delay_histogram: Vec<u64>,
    pub monitor_violations: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Mean travel time over agents that arrived.
    pub fn mean_travel_time(&self) -> Option<f64> {
        let times: Vec<f64> = self.agents.iter().filter_map(|a| a.travel_time).collect();
        (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
    }
}

fn sample_times(t_final: f64, dt: f64) -> impl Iterator<Item = f64> {
    let n = (t_final / dt).floor() as usize;
    (0..=n)
        .map(move |k| k as f64 * dt)
        .chain((t_final > n as f64 * dt).then_some(t_final))
}

fn add_counters(acc: &mut Counters, c: &Counters) {
    acc.iterations += c.iterations;
    acc.rejections += c.rejections;
    acc.dc_aborts += c.dc_aborts;
    acc.commits += c.commits;
    acc.planner_failures += c.planner_failures;
}

/// Per-agent smallest sampled margins over `[0, t_final]`.
fn overlap_margins(result: &RunResult) -> Vec<f64> {
    let n = result.agents.len();
    let paths: Vec<ExecutedPath> = result.agents.iter().map(|a| ExecutedPath::new(&a.timeline)).collect();
    let mut margins = vec![f64::INFINITY; n];
    let times: Vec<f64> = sample_times(result.t_final, OVERLAP_DT).collect();
    for t in times {
        let pos: Vec<Vec3> = paths.iter().map(|p| p.evaluate(t, 0)).collect();
        for i in 0..n {
            for j in i + 1..n {
                let combined = result.agents[i].own_box.combined(&result.agents[j].own_box);
                let m = box_margin(&(pos[j] - pos[i]), &combined);
                margins[i] = margins[i].min(m);
                margins[j] = margins[j].min(m);
            }
            for o in &result.obstacles {
                let combined = result.agents[i].own_box.combined(&o.half);
                let m = box_margin(&(o.traj.evaluate(t, 0) - pos[i]), &combined);
                margins[i] = margins[i].min(m);
            }
        }
    }
    margins
}

fn agent_metrics(a: &AgentOutcome, t_final: f64, goal_tol: f64, min_margin: f64) -> AgentMetrics {
    let path = ExecutedPath::new(&a.timeline);
    let samples: Vec<(f64, Vec3, f64, f64)> = sample_times(t_final, SAMPLE_DT)
        .map(|t| {
            (
                t,
                path.evaluate(t, 0),
                path.evaluate(t, 1).norm(),
                path.evaluate(t, 3).norm_squared(),
            )
        })
        .collect();
    let mut travel_distance = 0.0;
    let mut jerk_integral = 0.0;
    for w in samples.windows(2) {
        travel_distance += (w[1].1 - w[0].1).norm();
        jerk_integral += 0.5 * (w[0].3 + w[1].3) * (w[1].0 - w[0].0);
    }
    let departure = samples.iter().find(|s| (s.1 - a.start).norm() > 1e-3).map(|s| s.0);
    let arrival = samples
        .iter()
        .rposition(|s| (s.1 - a.goal).norm() > goal_tol)
        .map_or(Some(0), |i| (i + 1 < samples.len()).then_some(i + 1))
        .map(|i| samples[i].0);
    let arrival = if a.done { arrival } else { None };
    let travel_time = match (departure, arrival) {
        (Some(d), Some(r)) => Some(r - d),
        (None, Some(_)) => Some(0.0),
        _ => None,
    };
    let (mut stops, mut stop_time) = (0u32, 0.0);
    if let Some(d) = departure {
        let end = arrival.unwrap_or(t_final);
        let mut run_start: Option<f64> = None;
        for s in samples.iter().filter(|s| s.0 >= d && s.0 <= end) {
            match (s.2 < STOP_SPEED, run_start) {
                (true, None) => run_start = Some(s.0),
                (false, Some(r)) => {
                    if s.0 - r >= STOP_MIN_DURATION {
                        stops += 1;
                        stop_time += s.0 - r;
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
        // A slow stretch running into arrival is the final approach, not a stop.
        if let (Some(r), None) = (run_start, arrival) {
            if end - r >= STOP_MIN_DURATION {
                stops += 1;
                stop_time += end - r;
            }
        }
    }
    let deadlocked = !a.done
        && t_final >= DEADLOCK_WINDOW
        && samples
            .iter()
            .filter(|s| s.0 >= t_final - DEADLOCK_WINDOW)
            .all(|s| s.2 < DEADLOCK_SPEED);
    AgentMetrics {
        id: a.id,
        done: a.done,
        stopped: a.stopped,
        collision_free: min_margin >= 0.0,
        min_margin: min_margin.is_finite().then_some(min_margin),
        arrival_time: arrival,
        travel_time,
        travel_distance,
        stops,
        stop_time,
        jerk_integral,
        deadlocked,
        counters: a.counters,
    }
}

pub fn compute_metrics(result: &RunResult, goal_tol: f64) -> MetricsReport {
    let margins = overlap_margins(result);
    let agents: Vec<AgentMetrics> = result
        .agents
        .iter()
        .zip(&margins)
        .map(|(a, m)| agent_metrics(a, result.t_final, goal_tol, *m))
        .collect();
    let mut totals = Counters::default();
    for a in &agents {
        add_counters(&mut totals, &a.counters);
    }
    let deltas = result.ledger.iter().map(|r| r.delta);
    MetricsReport {
        t_final: result.t_final,
        all_done: agents.iter().all(|a| a.done),
        collision_free: agents.iter().all(|a| a.collision_free),
        deadlock: agents.iter().any(|a| a.deadlocked),
        totals,
        max_delay: deltas.clone().reduce(f64::max),
        histogram_width: HISTOGRAM_WIDTH,
        delay_histogram: histogram(deltas, HISTOGRAM_WIDTH),
        monitor_violations: guarantee_monitor(&result.ledger, &result.delta_dc_by_agent()).len(),
        agents,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::EndStatus;
    use crate::trajectory::AgentBox;

    fn outcome(id: u32, timeline: Vec<(f64, Arc<TrajectorySpline>)>, goal: Vec3, done: bool) -> AgentOutcome {
        AgentOutcome {
            id: AgentId(id),
            start: timeline[0].1.evaluate(0.0, 0),
            goal,
            done,
            stopped: false,
            counters: Counters::default(),
            detections: Vec::new(),
            timeline,
            own_box: AgentBox::cube(0.1),
            delta_dc: 0.1,
        }
    }

    fn line(owner: u32, a: Vec3, b: Vec3, t0: f64, t1: f64) -> Arc<TrajectorySpline> {
        // Rest-to-rest is not needed here; C² holds inside a single segment.
        let seg = [a, a + (b - a) / 3.0, a + (b - a) * (2.0 / 3.0), b];
        Arc::new(TrajectorySpline::new(AgentId(owner), 1, vec![seg], vec![t0, t1], false).unwrap())
    }

    fn run(agents: Vec<AgentOutcome>, t_final: f64) -> RunResult {
        RunResult {
            status: EndStatus::AllDone,
            t_final,
            trace: Vec::new(),
            ledger: Vec::new(),
            agents,
            obstacles: Vec::new(),
        }
    }

    #[test]
    fn executed_path_switches_at_commit_time() {
        let a = Vec3::zeros();
        let first = Arc::new(TrajectorySpline::hover(AgentId(0), 0, a, 0.0, 1.0));
        let second = line(0, a, Vec3::new(4.0, 0.0, 0.0), 0.0, 4.0);
        let tl = vec![(0.0, first), (2.0, second)];
        let p = ExecutedPath::new(&tl);
        assert_eq!(p.evaluate(1.999, 0), a);
        assert!((p.evaluate(3.0, 0).x - 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_and_travel_time_of_a_straight_flight() {
        let goal = Vec3::new(4.0, 0.0, 0.0);
        let tl = vec![(0.0, line(0, Vec3::zeros(), goal, 0.0, 4.0))];
        let r = run(vec![outcome(0, tl, goal, true)], 6.0);
        let m = compute_metrics(&r, 0.1);
        let a = &m.agents[0];
        assert!((a.travel_distance - 4.0).abs() < 1e-9);
        // Leaves at the first sample past t = 0 and enters the 0.1 m ball at 3.9 s.
        assert!((a.travel_time.unwrap() - 3.9).abs() < 0.011, "{:?}", a.travel_time);
        assert_eq!(a.stops, 0);
        assert!(m.collision_free && m.all_done && !m.deadlock);
    }

    #[test]
    fn overlap_is_detected_with_exact_boxes() {
        let g = Vec3::new(4.0, 0.0, 0.0);
        let a = vec![(0.0, line(0, Vec3::zeros(), g, 0.0, 4.0))];
        let b = vec![(0.0, line(1, g, Vec3::zeros(), 0.0, 4.0))];
        let m = compute_metrics(
            &run(vec![outcome(0, a, g, true), outcome(1, b, Vec3::zeros(), true)], 4.0),
            0.1,
        );
        assert!(!m.collision_free);
        assert!(m.agents[0].min_margin.unwrap() < 0.0);
    }

    #[test]
    fn a_hovering_unfinished_agent_is_deadlocked() {
        let p = Vec3::zeros();
        let tl = vec![(0.0, Arc::new(TrajectorySpline::hover(AgentId(0), 0, p, 0.0, 1.0)))];
        let m = compute_metrics(&run(vec![outcome(0, tl, Vec3::new(5.0, 0.0, 0.0), false)], 12.0), 0.1);
        assert!(m.deadlock);
        assert_eq!(m.agents[0].travel_time, None);
    }

    #[test]
    fn json_round_trip() {
        let goal = Vec3::new(1.0, 0.0, 0.0);
        let tl = vec![(0.0, line(0, Vec3::zeros(), goal, 0.0, 1.0))];
        let m = compute_metrics(&run(vec![outcome(0, tl, goal, true)], 2.0), 0.1);
        assert_eq!(MetricsReport::from_json(&m.to_json()).unwrap(), m);
    }
}
