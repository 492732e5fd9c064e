//! JSON-lines trace and ledger CSV formats.
//!
//! Every trace line is `{"t":..,"agent":..,"kind":..,"detail":{..}}`. Floats
//! are written in shortest round-trip form, so parsing a trace reproduces the
//! exact in-memory values.

use crate::deconfliction::{MsgKind, Phase, Variant};
use crate::planner::EntryRef;
use crate::simnet::LedgerRecord;
use crate::trajectory::TrajectoryRecord;
use crate::AgentId;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// The candidate conflicts with a stored trajectory.
    Conflict,
    /// A message arrived while checking (baseline recheck).
    ArrivalDuringCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndStatus {
    AllDone,
    TimeLimit,
    QueueExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum TraceEvent {
    Init {
        traj: TrajectoryRecord,
        goal: [f64; 3],
        delta_dc: f64,
        variant: Variant,
        half_extents: [f64; 3],
    },
    ObstacleInit {
        traj: TrajectoryRecord,
        half_extents: [f64; 3],
    },
    Phase {
        phase: Phase,
    },
    Broadcast {
        msg: MsgKind,
        seq: u64,
        traj_seq: u64,
    },
    Deliver {
        sender: AgentId,
        seq: u64,
        t_pub: f64,
        delay: f64,
    },
    Reject {
        reason: RejectReason,
        against: Option<EntryRef>,
    },
    DcAbort {
        against: EntryRef,
    },
    PlannerAvoided {
        against: Vec<EntryRef>,
    },
    PlannerInfeasible {
        consecutive: u32,
    },
    Commit {
        traj: TrajectoryRecord,
        t_switch: f64,
    },
    Done,
    End {
        status: EndStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub agent: Option<AgentId>,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("csv: {0}")]
    Csv(String),
}

pub fn write_trace<W: Write>(mut w: W, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

/// Parses a JSON-lines trace; blank lines are skipped.
pub fn parse_trace<R: BufRead>(r: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_trace_str(s: &str) -> Result<Vec<TraceRecord>, TraceError> {
    parse_trace(s.as_bytes())
}

pub fn write_ledger_csv<W: Write>(w: W, ledger: &[LedgerRecord]) -> Result<(), TraceError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in ledger {
        wr.serialize(r).map_err(|e| TraceError::Csv(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn parse_ledger_csv<R: io::Read>(r: R) -> Result<Vec<LedgerRecord>, TraceError> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize()
        .map(|row| row.map_err(|e| TraceError::Csv(e.to_string())))
        .collect()
}
