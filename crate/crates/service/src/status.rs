use doorcount_core::Counts;
use serde::{Deserialize, Serialize};

/// Counter values as served by `/api/v1/counts`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountsSnapshot {
    pub entries: u64,
    pub exits: u64,
    pub regret_enter: u64,
    pub regret_exit: u64,
    pub occupancy: i64,
    /// Timestamp of the last processed frame, 0 before the first one.
    pub timestamp_us: u64,
}

impl CountsSnapshot {
    pub fn new(c: &Counts, timestamp_us: u64) -> Self {
        Self {
            entries: c.entries,
            exits: c.exits,
            regret_enter: c.regret_enter,
            regret_exit: c.regret_exit,
            occupancy: c.occupancy,
            timestamp_us,
        }
    }
}

/// One published view of the processing loop. Readers always see a whole
/// snapshot, never a mix of two.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ServiceStatus {
    pub running: bool,
    pub source: String,
    /// The source has ended (or failed) and every frame it produced has been
    /// either processed or dropped.
    pub source_exhausted: bool,
    pub frames_produced: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub counts: CountsSnapshot,
    pub initial_occupancy: i64,
    pub last_event_seq: Option<u64>,
    pub fps_estimate: f64,
    pub occupancy_consistent: bool,
    pub degraded: Option<String>,
    pub source_error: Option<String>,
}
