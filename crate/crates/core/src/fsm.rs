//! Crossing state machine driven by the per-frame dominant ROI.
//!
//! A person walking in passes through ROI 3, then 2, then 1. Two flags
//! remember which outer band the current traversal came from when it
//! entered the middle band; leaving the middle band then resolves the
//! traversal into one of four events:
//!
//! | from | middle exit | flag set | event         |
//! |------|-------------|----------|---------------|
//! | 3    | to 1        | `3_2`    | `Entry`       |
//! | 1    | to 3        | `1_2`    | `Exit`        |
//! | 1    | to 1        | `1_2`    | `RegretExit`  |
//! | 3    | to 3        | `3_2`    | `RegretEnter` |
//!
//! Both flags are cleared after any event. When both are set, the full
//! traversal wins over the regret. Idle frames (no ROI active) keep the
//! flags until `idle_timeout_frames` consecutive idle frames have passed.

use serde::{Deserialize, Serialize};

use crate::depth::RoiState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Entry,
    Exit,
    RegretEnter,
    RegretExit,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [Self::Entry, Self::Exit, Self::RegretEnter, Self::RegretExit];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Entry => "entry",
            Self::Exit => "exit",
            Self::RegretEnter => "regret_enter",
            Self::RegretExit => "regret_exit",
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four event counters plus occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub entries: u64,
    pub exits: u64,
    pub regret_enter: u64,
    pub regret_exit: u64,
    pub occupancy: i64,
}

impl Counts {
    pub fn with_occupancy(occupancy: i64) -> Self {
        Self {
            occupancy,
            ..Default::default()
        }
    }

    pub fn get(&self, kind: EventKind) -> u64 {
        match kind {
            EventKind::Entry => self.entries,
            EventKind::Exit => self.exits,
            EventKind::RegretEnter => self.regret_enter,
            EventKind::RegretExit => self.regret_exit,
        }
    }

    pub fn total_events(&self) -> u64 {
        self.entries + self.exits + self.regret_enter + self.regret_exit
    }

    fn bump(&mut self, kind: EventKind) {
        match kind {
            EventKind::Entry => {
                self.entries += 1;
                self.occupancy += 1;
            }
            EventKind::Exit => {
                self.exits += 1;
                self.occupancy -= 1;
            }
            EventKind::RegretEnter => self.regret_enter += 1,
            EventKind::RegretExit => self.regret_exit += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub frame_index: u64,
    pub timestamp_us: u64,
    pub counts_after: Counts,
    pub snapshot_id: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterConfig {
    pub idle_timeout_frames: u32,
    pub initial_occupancy: i64,
}

impl Default for CounterConfig {
    fn default() -> Self {
        Self {
            idle_timeout_frames: 30,
            initial_occupancy: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterState {
    pub cur_state: RoiState,
    pub flag_1_2: bool,
    pub flag_3_2: bool,
    pub counts: Counts,
    pub idle_frames: u32,
    pub idle_timeout_frames: u32,
    pub initial_occupancy: i64,
    /// Sequence number the next event will carry. Survives [`reset`].
    pub next_seq: u64,
}

impl CounterState {
    pub fn new(cfg: CounterConfig) -> Self {
        Self {
            cur_state: RoiState::Idle,
            flag_1_2: false,
            flag_3_2: false,
            counts: Counts::with_occupancy(cfg.initial_occupancy),
            idle_frames: 0,
            idle_timeout_frames: cfg.idle_timeout_frames,
            initial_occupancy: cfg.initial_occupancy,
            next_seq: 1,
        }
    }

    pub fn occupancy(&self) -> i64 {
        occupancy(self)
    }

    /// Negative occupancy means more exits than entries were seen.
    pub fn occupancy_consistent(&self) -> bool {
        self.occupancy() >= 0
    }
}

impl Default for CounterState {
    fn default() -> Self {
        Self::new(CounterConfig::default())
    }
}

/// Advances the machine by one published frame state. Emits at most one event.
pub fn fsm_step(
    state: &CounterState,
    next: RoiState,
    frame_index: u64,
    timestamp_us: u64,
) -> (CounterState, Option<CrossingEvent>) {
    use RoiState::*;

    let mut s = *state;

    if next == Idle {
        s.cur_state = Idle;
        s.idle_frames = s.idle_frames.saturating_add(1);
        if s.idle_frames >= s.idle_timeout_frames {
            s.flag_1_2 = false;
            s.flag_3_2 = false;
        }
        return (s, None);
    }
    if s.cur_state == Idle {
        s.cur_state = next;
        s.idle_frames = 0;
        return (s, None);
    }
    if next == s.cur_state {
        return (s, None);
    }

    let kind = match (s.cur_state, next) {
        (Roi1, Roi2) => {
            s.flag_1_2 = true;
            None
        }
        (Roi3, Roi2) => {
            s.flag_3_2 = true;
            None
        }
        (Roi2, Roi1) if s.flag_3_2 => Some(EventKind::Entry),
        (Roi2, Roi1) if s.flag_1_2 => Some(EventKind::RegretExit),
        (Roi2, Roi3) if s.flag_1_2 => Some(EventKind::Exit),
        (Roi2, Roi3) if s.flag_3_2 => Some(EventKind::RegretEnter),
        // middle band skipped, or middle band left without a flag
        _ => None,
    };
    s.cur_state = next;

    let event = kind.map(|kind| {
        s.counts.bump(kind);
        s.flag_1_2 = false;
        s.flag_3_2 = false;
        let ev = CrossingEvent {
            seq: s.next_seq,
            kind,
            frame_index,
            timestamp_us,
            counts_after: s.counts,
            snapshot_id: None,
        };
        s.next_seq += 1;
        ev
    });

    debug_assert_eq!(
        s.counts.occupancy,
        s.initial_occupancy + s.counts.entries as i64 - s.counts.exits as i64,
        "occupancy identity"
    );
    debug_assert!(
        EventKind::ALL
            .iter()
            .all(|&k| s.counts.get(k) >= state.counts.get(k)),
        "counters must not decrease"
    );
    (s, event)
}

pub fn occupancy(state: &CounterState) -> i64 {
    state.initial_occupancy + state.counts.entries as i64 - state.counts.exits as i64
}

/// Zeroes counters, flags and the idle run; keeps the event sequence.
pub fn reset(state: &CounterState) -> CounterState {
    CounterState {
        cur_state: RoiState::Idle,
        flag_1_2: false,
        flag_3_2: false,
        counts: Counts::with_occupancy(state.initial_occupancy),
        idle_frames: 0,
        idle_timeout_frames: state.idle_timeout_frames,
        initial_occupancy: state.initial_occupancy,
        next_seq: state.next_seq,
    }
}

/// Folds a dominant-state sequence through [`fsm_step`], using the position
/// in the sequence as both frame index and timestamp.
pub fn run_sequence(
    initial: CounterState,
    states: &[RoiState],
) -> (CounterState, Vec<CrossingEvent>) {
    let mut s = initial;
    let mut events = Vec::new();
    for (i, &next) in states.iter().enumerate() {
        let (ns, ev) = fsm_step(&s, next, i as u64, i as u64);
        s = ns;
        events.extend(ev);
    }
    (s, events)
}
