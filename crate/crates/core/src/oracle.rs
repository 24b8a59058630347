//! Reference implementation of the crossing rules, kept deliberately naive
//! and separate from [`crate::fsm`] so the two can be checked against each
//! other over exhaustive inputs.

use crate::fsm::{Counts, CrossingEvent, EventKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome {
    pub counts: Counts,
    pub events: Vec<CrossingEvent>,
}

/// Replays raw state symbols (`0..=3`). Event `frame_index` and
/// `timestamp_us` are both the symbol's position in `sequence`; sequence
/// numbers start at 1.
///
/// Panics on symbols outside `0..=3`.
pub fn oracle_replay(
    sequence: &[u8],
    idle_timeout_frames: u32,
    initial_occupancy: i64,
) -> OracleOutcome {
    let mut entries = 0u64;
    let mut exits = 0u64;
    let mut regret_enter = 0u64;
    let mut regret_exit = 0u64;

    // where we were on the previous frame; 0 = nobody in any band
    let mut here = 0u8;
    let mut came_from_inside = false;
    let mut came_from_outside = false;
    let mut quiet_frames = 0u64;

    let mut events = Vec::new();

    for (pos, &there) in sequence.iter().enumerate() {
        assert!(there <= 3, "state symbol {there} out of range");

        if there == 0 {
            here = 0;
            quiet_frames += 1;
            if quiet_frames >= idle_timeout_frames as u64 {
                came_from_inside = false;
                came_from_outside = false;
            }
            continue;
        }
        if here == 0 {
            here = there;
            quiet_frames = 0;
            continue;
        }
        if here == there {
            continue;
        }

        let mut counted: Option<EventKind> = None;
        if here == 1 && there == 2 {
            came_from_inside = true;
        }
        if here == 3 && there == 2 {
            came_from_outside = true;
        }
        if here == 2 && there == 1 {
            if came_from_outside {
                counted = Some(EventKind::Entry);
            } else if came_from_inside {
                counted = Some(EventKind::RegretExit);
            }
        }
        if here == 2 && there == 3 {
            if came_from_inside {
                counted = Some(EventKind::Exit);
            } else if came_from_outside {
                counted = Some(EventKind::RegretEnter);
            }
        }
        here = there;

        if let Some(kind) = counted {
            match kind {
                EventKind::Entry => entries += 1,
                EventKind::Exit => exits += 1,
                EventKind::RegretEnter => regret_enter += 1,
                EventKind::RegretExit => regret_exit += 1,
            }
            came_from_inside = false;
            came_from_outside = false;
            events.push(CrossingEvent {
                seq: events.len() as u64 + 1,
                kind,
                frame_index: pos as u64,
                timestamp_us: pos as u64,
                counts_after: Counts {
                    entries,
                    exits,
                    regret_enter,
                    regret_exit,
                    occupancy: initial_occupancy + entries as i64 - exits as i64,
                },
                snapshot_id: None,
            });
        }
    }

    OracleOutcome {
        counts: Counts {
            entries,
            exits,
            regret_enter,
            regret_exit,
            occupancy: initial_occupancy + entries as i64 - exits as i64,
        },
        events,
    }
}
