//! Offline verification of a recorded trace.
//!
//! Rebuilds every agent's committed timeline from `init` and `commit`
//! records, certifies every co-committed pair of intervals with the exact
//! boxes, checks the joins at each switch time, and re-runs the delay
//! monitor over the recorded deliveries.

use super::trace::{parse_trace, TraceError, TraceEvent, TraceRecord};
use crate::collision::{check_pair, ConflictReport};
use crate::deconfliction::Variant;
use crate::simnet::{guarantee_monitor, LedgerRecord, MonitorViolation};
use crate::trajectory::{continuity_gap, AgentBox, TrajectoryError, TrajectorySpline, Vec3, CONTINUITY_TOL};
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("agent {0} has records before its init")]
    MissingInit(AgentId),
    #[error("agent {0} is initialized twice")]
    DuplicateInit(AgentId),
    #[error("record without an agent: {0}")]
    Anonymous(&'static str),
    #[error("invalid trajectory for {agent}: {source}")]
    Trajectory { agent: AgentId, source: TrajectoryError },
    #[error("invalid box for {0}")]
    InvalidBox(AgentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityViolation {
    pub agent: AgentId,
    pub t_switch: f64,
    /// Position, velocity and acceleration gaps.
    pub gaps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub agents: usize,
    /// Agents running the variant without a Delay Check; any makes the
    /// guarantee inapplicable.
    pub baseline_agents: usize,
    pub obstacles: usize,
    pub commits: usize,
    pub intervals_checked: usize,
    pub conflicts: Vec<ConflictReport>,
    pub continuity_violations: Vec<ContinuityViolation>,
    /// Largest position, velocity and acceleration gaps over all commits.
    pub max_gaps: [f64; 3],
    pub monitor_violations: Vec<MonitorViolation>,
}

impl AuditReport {
    pub fn collision_free(&self) -> bool {
        self.conflicts.is_empty()
    }

    /// A clean delay monitor implies collision-free commits. False means the
    /// guarantee was broken by this trace.
    pub fn implication_holds(&self) -> bool {
        self.baseline_agents > 0 || !self.monitor_violations.is_empty() || self.conflicts.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.conflicts.is_empty() && self.continuity_violations.is_empty() && self.monitor_violations.is_empty()
    }
}

struct Track {
    half: AgentBox,
    timeline: Vec<(f64, TrajectorySpline)>,
}

fn to_box(agent: AgentId, h: [f64; 3]) -> Result<AgentBox, AuditError> {
    AgentBox::new(Vec3::from(h)).map_err(|_| AuditError::InvalidBox(agent))
}

fn decode(agent: AgentId, rec: &crate::trajectory::TrajectoryRecord) -> Result<TrajectorySpline, AuditError> {
    TrajectorySpline::try_from(rec.clone()).map_err(|source| AuditError::Trajectory { agent, source })
}

fn gap_tol(scale: f64) -> f64 {
    CONTINUITY_TOL * scale.max(1.0)
}

/// Checks two timelines over every interval in which both active
/// trajectories are fixed. The last interval runs until every trajectory has
/// reached its final state, plus one second.
fn check_timelines(a: &Track, b: &Track, horizon_end: f64, conflicts: &mut Vec<ConflictReport>) -> usize {
    let mut cuts: Vec<f64> = a.timeline.iter().chain(&b.timeline).map(|(t, _)| *t).collect();
    cuts.push(horizon_end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let active = |tl: &[(f64, TrajectorySpline)], t: f64| {
        let i = tl.partition_point(|(tc, _)| *tc <= t);
        i.saturating_sub(1)
    };
    let mut checked = 0;
    for w in cuts.windows(2) {
        if !(w[1] > w[0]) {
            continue;
        }
        let ta = &a.timeline[active(&a.timeline, w[0])].1;
        let tb = &b.timeline[active(&b.timeline, w[0])].1;
        let report = check_pair(ta, tb, &a.half, &b.half, (w[0], w[1])).expect("window is non-degenerate");
        checked += 1;
        if report.in_conflict {
            conflicts.push(report);
            // One report per pair; later windows add nothing actionable.
            break;
        }
    }
    checked
}

pub fn verify_trace(records: &[TraceRecord]) -> Result<AuditReport, AuditError> {
    let mut agents: BTreeMap<AgentId, Track> = BTreeMap::new();
    let mut delta_dc: BTreeMap<AgentId, f64> = BTreeMap::new();
    let mut obstacles: Vec<Track> = Vec::new();
    let mut ledger = Vec::new();
    let mut continuity_violations = Vec::new();
    let mut max_gaps = [0.0f64; 3];
    let mut commits = 0;
    let mut baseline_agents = 0;
    for r in records {
        let who = |what| r.agent.ok_or(AuditError::Anonymous(what));
        match &r.event {
            TraceEvent::Init {
                traj,
                half_extents,
                delta_dc: d,
                variant,
                ..
            } => {
                let id = who("init")?;
                if agents.contains_key(&id) {
                    return Err(AuditError::DuplicateInit(id));
                }
                let track = Track {
                    half: to_box(id, *half_extents)?,
                    timeline: vec![(r.t, decode(id, traj)?)],
                };
                agents.insert(id, track);
                delta_dc.insert(id, *d);
                baseline_agents += usize::from(*variant == Variant::MaderBaseline);
            }
            TraceEvent::ObstacleInit { traj, half_extents } => {
                let id = who("obstacle_init")?;
                obstacles.push(Track {
                    half: to_box(id, *half_extents)?,
                    timeline: vec![(r.t, decode(id, traj)?)],
                });
            }
            TraceEvent::Commit { traj, t_switch } => {
                let id = who("commit")?;
                let track = agents.get_mut(&id).ok_or(AuditError::MissingInit(id))?;
                let next = decode(id, traj)?;
                let prev = &track.timeline.last().expect("init entry").1;
                let (dp, dv, da) = continuity_gap(prev, &next, *t_switch);
                let scale = |o| prev.evaluate(*t_switch, o).norm();
                let gaps = [dp, dv, da];
                for k in 0..3 {
                    max_gaps[k] = max_gaps[k].max(gaps[k]);
                }
                if dp > gap_tol(scale(0)) || dv > gap_tol(scale(1)) || da > gap_tol(scale(2)) {
                    continuity_violations.push(ContinuityViolation {
                        agent: id,
                        t_switch: *t_switch,
                        gaps,
                    });
                }
                track.timeline.push((r.t, next));
                commits += 1;
            }
            TraceEvent::Deliver {
                sender,
                seq,
                t_pub,
                delay,
            } => {
                let receiver = who("deliver")?;
                ledger.push(LedgerRecord {
                    sender: *sender,
                    receiver,
                    seq: *seq,
                    t_pub: *t_pub,
                    t_recv: r.t,
                    delta: *delay,
                });
            }
            _ => {
                if let Some(id) = r.agent {
                    if id.0 < crate::harness::scenario::OBSTACLE_ID_BASE && !agents.contains_key(&id) {
                        return Err(AuditError::MissingInit(id));
                    }
                }
            }
        }
    }
    let horizon_end = agents
        .values()
        .chain(&obstacles)
        .flat_map(|t| t.timeline.iter().map(|(tc, s)| tc.max(s.end_time())))
        .fold(0.0, f64::max)
        + 1.0;
    let tracks: Vec<&Track> = agents.values().collect();
    let mut conflicts = Vec::new();
    let mut intervals_checked = 0;
    for (i, a) in tracks.iter().enumerate() {
        for b in &tracks[i + 1..] {
            intervals_checked += check_timelines(a, b, horizon_end, &mut conflicts);
        }
        for o in &obstacles {
            intervals_checked += check_timelines(a, o, horizon_end, &mut conflicts);
        }
    }
    Ok(AuditReport {
        agents: tracks.len(),
        baseline_agents,
        obstacles: obstacles.len(),
        commits,
        intervals_checked,
        conflicts,
        continuity_violations,
        max_gaps,
        monitor_violations: guarantee_monitor(&ledger, &delta_dc),
    })
}

/// Audits `<dir>/trace.jsonl`.
pub fn verify_trace_dir(dir: &Path) -> Result<AuditReport, AuditError> {
    let file = File::open(dir.join("trace.jsonl")).map_err(TraceError::Io)?;
    verify_trace(&parse_trace(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn init(id: u32, traj: TrajectorySpline, half: f64) -> TraceRecord {
        TraceRecord {
            t: 0.0,
            agent: Some(AgentId(id)),
            event: TraceEvent::Init {
                traj: traj.into(),
                goal: [0.0; 3],
                delta_dc: 0.1,
                variant: Variant::Rmader,
                half_extents: [half; 3],
            },
        }
    }

    fn line(owner: u32, seq: u64, a: Vec3, b: Vec3, t0: f64, t1: f64) -> TrajectorySpline {
        let seg = [a, a + (b - a) / 3.0, a + (b - a) * (2.0 / 3.0), b];
        TrajectorySpline::new(AgentId(owner), seq, vec![seg], vec![t0, t1], false).unwrap()
    }

    #[test]
    fn separated_hovers_are_clean() {
        let recs = vec![
            init(0, TrajectorySpline::hover(AgentId(0), 0, Vec3::zeros(), 0.0, 1.0), 0.2),
            init(
                1,
                TrajectorySpline::hover(AgentId(1), 0, Vec3::new(3.0, 0.0, 0.0), 0.0, 1.0),
                0.2,
            ),
        ];
        let r = verify_trace(&recs).unwrap();
        assert!(r.is_clean() && r.implication_holds());
        assert_eq!(r.intervals_checked, 1);
    }

    #[test]
    fn committed_crossing_is_flagged_and_breaks_the_implication() {
        let a0 = TrajectorySpline::hover(AgentId(0), 0, Vec3::new(-5.0, 0.0, 0.0), 0.0, 1.0);
        let b0 = TrajectorySpline::hover(AgentId(1), 0, Vec3::new(5.0, 0.0, 0.0), 0.0, 1.0);
        // Without acceleration at the join the hover prefix would not be C²,
        // so the commit replaces the whole trajectory from t = 0.
        let a1 = line(0, 1, Vec3::new(-5.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0), 0.0, 4.0);
        let recs = vec![
            init(0, a0, 0.2),
            init(1, b0, 0.2),
            TraceRecord {
                t: 0.0,
                agent: Some(AgentId(0)),
                event: TraceEvent::Commit {
                    traj: a1.into(),
                    t_switch: 0.0,
                },
            },
        ];
        let r = verify_trace(&recs).unwrap();
        assert_eq!(r.conflicts.len(), 1);
        assert!(r.monitor_violations.is_empty());
        assert!(!r.implication_holds());
        // The line starts moving at t = 0 while the hover is at rest.
        assert_eq!(r.continuity_violations.len(), 1);
    }

    #[test]
    fn late_delivery_is_a_monitor_violation() {
        let recs = vec![
            init(0, TrajectorySpline::hover(AgentId(0), 0, Vec3::zeros(), 0.0, 1.0), 0.2),
            TraceRecord {
                t: 0.5,
                agent: Some(AgentId(0)),
                event: TraceEvent::Deliver {
                    sender: AgentId(1),
                    seq: 1,
                    t_pub: 0.2,
                    delay: 0.3,
                },
            },
        ];
        let r = verify_trace(&recs).unwrap();
        assert_eq!(r.monitor_violations.len(), 1);
        assert!(r.implication_holds());
    }

    #[test]
    fn commit_before_init_is_an_error() {
        let recs = vec![TraceRecord {
            t: 0.0,
            agent: Some(AgentId(3)),
            event: TraceEvent::Commit {
                traj: TrajectorySpline::hover(AgentId(3), 1, Vec3::zeros(), 0.0, 1.0).into(),
                t_switch: 0.5,
            },
        }];
        assert!(matches!(verify_trace(&recs), Err(AuditError::MissingInit(AgentId(3)))));
    }
}
