//! On-disk formats: replay files, analysis and event logs, snapshots, reports.

mod logs;
mod replay;
mod report;
mod snapshot;

pub use logs::{
    open_event_log_append, parse_events, read_analysis, read_events, AnalysisLog, AnalysisRecord,
    EventLog, ANALYSIS_HEADER,
};
pub use replay::{
    open_replay, read_replay, read_replay_file, write_replay, write_replay_file, ReplayHeader,
    ReplayReader, ReplayWriter, REPLAY_HEADER_LEN, REPLAY_MAGIC,
};
pub use report::{build_report, Report, ReportRow, ReportTotals, MAX_REPORT_BUCKETS};
pub use snapshot::{decode_pgm, encode_pgm, SnapshotStore};

pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_DIR: &str = "snapshots";
