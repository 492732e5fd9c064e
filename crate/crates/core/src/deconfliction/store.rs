use super::message::{MsgKind, TrajMessage};
use crate::trajectory::TrajectorySpline;
use crate::AgentId;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone)]
struct Stored {
    traj: Arc<TrajectorySpline>,
    msg_seq: u64,
    /// Store version at which the entry was applied.
    added_at: u64,
}

#[derive(Debug, Clone)]
struct PeerEntry {
    comm: Stored,
    opts: Vec<Stored>,
}

/// Trajectories an agent holds as constraints, with queued updates.
///
/// Incoming messages only reach `pending`; [`drain_pending`](Self::drain_pending)
/// applies them in delivery order under these rules:
/// - OPT appends to the sender's opt entries, keeping its comm entry.
/// - A COMM newer than the held one replaces it and clears every opt entry
///   published before it. Opts published after it survive (out-of-order links).
/// - A COMM not newer than the held one is ignored.
#[derive(Debug, Clone, Default)]
pub struct PeerStore {
    peers: BTreeMap<AgentId, PeerEntry>,
    obstacles: Vec<Arc<TrajectorySpline>>,
    pending: Vec<TrajMessage>,
    seen: BTreeSet<(AgentId, u64)>,
    version: u64,
}

impl PeerStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeds a peer's committed trajectory before any traffic (publication
    /// counter 0).
    pub fn seed_peer(&mut self, traj: Arc<TrajectorySpline>) {
        let owner = traj.owner();
        self.peers.insert(
            owner,
            PeerEntry {
                comm: Stored {
                    traj,
                    msg_seq: 0,
                    added_at: 0,
                },
                opts: Vec::new(),
            },
        );
    }

    pub fn add_obstacle(&mut self, traj: Arc<TrajectorySpline>) {
        self.obstacles.push(traj);
    }

    /// Queues a message. Returns false for a duplicate `(sender, seq)`.
    pub fn enqueue(&mut self, msg: TrajMessage) -> bool {
        if !self.seen.insert(msg.key()) {
            return false;
        }
        self.pending.push(msg);
        true
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Applies all queued messages in delivery order. Returns how many were
    /// applied.
    pub fn drain_pending(&mut self) -> usize {
        let pending = std::mem::take(&mut self.pending);
        let n = pending.len();
        for msg in pending {
            self.apply(msg);
        }
        n
    }

    fn apply(&mut self, msg: TrajMessage) {
        self.version += 1;
        let stored = Stored {
            traj: msg.traj,
            msg_seq: msg.seq,
            added_at: self.version,
        };
        match self.peers.get_mut(&msg.sender) {
            None => {
                // First contact. A lone OPT cannot stand in for a comm entry,
                // so it is held as the comm until the real one arrives.
                self.peers.insert(
                    msg.sender,
                    PeerEntry {
                        comm: stored,
                        opts: Vec::new(),
                    },
                );
            }
            Some(entry) => match msg.kind {
                MsgKind::Opt => entry.opts.push(stored),
                MsgKind::Comm => {
                    if msg.seq > entry.comm.msg_seq {
                        entry.opts.retain(|o| o.msg_seq > msg.seq);
                        entry.comm = stored;
                    }
                }
            },
        }
    }

    pub fn comm_of(&self, peer: AgentId) -> Option<&Arc<TrajectorySpline>> {
        self.peers.get(&peer).map(|e| &e.comm.traj)
    }

    pub fn opts_of(&self, peer: AgentId) -> Vec<Arc<TrajectorySpline>> {
        self.peers
            .get(&peer)
            .map(|e| e.opts.iter().map(|o| o.traj.clone()).collect())
            .unwrap_or_default()
    }

    pub fn peer_count(&self) -> usize {
        self.peers.len()
    }

    /// Number of trajectories that constrain planning against `peer`.
    pub fn entries_for(&self, peer: AgentId) -> usize {
        self.peers.get(&peer).map_or(0, |e| 1 + e.opts.len())
    }

    /// Immutable view of every applied entry.
    pub fn snapshot(&self) -> StoreSnapshot {
        self.snapshot_since(0)
    }

    /// Entries applied after version `since`; obstacles only when `since == 0`.
    pub fn snapshot_since(&self, since: u64) -> StoreSnapshot {
        let mut entries = Vec::new();
        for e in self.peers.values() {
            for s in std::iter::once(&e.comm).chain(&e.opts) {
                if s.added_at > since || since == 0 {
                    entries.push(SnapshotEntry {
                        traj: s.traj.clone(),
                        obstacle: false,
                    });
                }
            }
        }
        if since == 0 {
            entries.extend(self.obstacles.iter().map(|t| SnapshotEntry {
                traj: t.clone(),
                obstacle: true,
            }));
        }
        StoreSnapshot {
            entries,
            version: self.version,
        }
    }
}

#[derive(Debug, Clone)]
struct SnapshotEntry {
    traj: Arc<TrajectorySpline>,
    obstacle: bool,
}

/// Frozen copy of a [`PeerStore`]'s entries; later store mutation does not
/// affect it.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    entries: Vec<SnapshotEntry>,
    version: u64,
}

impl StoreSnapshot {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a snapshot directly from trajectories; `true` marks obstacles.
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (Arc<TrajectorySpline>, bool)>,
    {
        Self {
            entries: entries
                .into_iter()
                .map(|(traj, obstacle)| SnapshotEntry { traj, obstacle })
                .collect(),
            version: 0,
        }
    }

    /// `(trajectory, is_obstacle)` pairs in peer order, then obstacles.
    pub fn entries(&self) -> impl Iterator<Item = (&TrajectorySpline, bool)> {
        self.entries.iter().map(|e| (e.traj.as_ref(), e.obstacle))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Store version the snapshot was taken at.
    pub fn version(&self) -> u64 {
        self.version
    }
}
