//! Time-bucketed summaries of an event log.

use serde::Serialize;

use crate::error::ReportError;
use crate::fsm::{CrossingEvent, EventKind};

pub const MAX_REPORT_BUCKETS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ReportTotals {
    pub entries: u64,
    pub exits: u64,
    pub regret_enter: u64,
    pub regret_exit: u64,
}

impl ReportTotals {
    fn add(&mut self, kind: EventKind) {
        match kind {
            EventKind::Entry => self.entries += 1,
            EventKind::Exit => self.exits += 1,
            EventKind::RegretEnter => self.regret_enter += 1,
            EventKind::RegretExit => self.regret_exit += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub start_us: u64,
    pub end_us: u64,
    pub entries: u64,
    pub exits: u64,
    pub regret_enter: u64,
    pub regret_exit: u64,
    /// Occupancy after the last event before `end_us`.
    pub occupancy: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub from_us: u64,
    pub to_us: u64,
    pub bucket_us: u64,
    pub rows: Vec<ReportRow>,
    pub totals: ReportTotals,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("start_us,end_us,entries,exits,regret_enter,regret_exit,occupancy\n");
        for r in &self.rows {
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                r.start_us,
                r.end_us,
                r.entries,
                r.exits,
                r.regret_enter,
                r.regret_exit,
                r.occupancy
            );
        }
        let t = &self.totals;
        s += &format!(
            "total,,{},{},{},{},\n",
            t.entries, t.exits, t.regret_enter, t.regret_exit
        );
        s
    }
}

fn occupancy_before(ev: &CrossingEvent) -> i64 {
    ev.counts_after.occupancy
        - match ev.kind {
            EventKind::Entry => 1,
            EventKind::Exit => -1,
            _ => 0,
        }
}

/// Buckets events with `from_us <= timestamp_us < to_us` into windows of
/// `bucket_us` (the last one may be shorter). Events are taken in log order.
pub fn build_report(
    events: &[CrossingEvent],
    from_us: u64,
    to_us: u64,
    bucket_us: u64,
) -> Result<Report, ReportError> {
    if from_us > to_us {
        return Err(ReportError::ReversedWindow { from_us, to_us });
    }
    if bucket_us == 0 {
        return Err(ReportError::ZeroBucket);
    }
    let n_buckets = (to_us - from_us).div_ceil(bucket_us);
    if n_buckets > MAX_REPORT_BUCKETS {
        return Err(ReportError::TooManyBuckets(n_buckets));
    }

    let mut occupancy = events
        .iter()
        .rev()
        .find(|e| e.timestamp_us < from_us)
        .map(|e| e.counts_after.occupancy)
        .or_else(|| events.first().map(occupancy_before))
        .unwrap_or(0);

    let mut rows: Vec<ReportRow> = (0..n_buckets)
        .map(|k| {
            let start_us = from_us + k * bucket_us;
            ReportRow {
                start_us,
                end_us: (start_us + bucket_us).min(to_us),
                entries: 0,
                exits: 0,
                regret_enter: 0,
                regret_exit: 0,
                occupancy: 0,
            }
        })
        .collect();

    let mut totals = ReportTotals::default();
    let mut in_window: Vec<&CrossingEvent> = events
        .iter()
        .filter(|e| (from_us..to_us).contains(&e.timestamp_us))
        .collect();
    in_window.sort_by_key(|e| (e.timestamp_us, e.seq));

    let mut next = in_window.iter().peekable();
    for row in &mut rows {
        let mut t = ReportTotals::default();
        while let Some(e) = next.next_if(|e| e.timestamp_us < row.end_us) {
            t.add(e.kind);
            totals.add(e.kind);
            occupancy = e.counts_after.occupancy;
        }
        row.entries = t.entries;
        row.exits = t.exits;
        row.regret_enter = t.regret_enter;
        row.regret_exit = t.regret_exit;
        row.occupancy = occupancy;
    }

    Ok(Report {
        from_us,
        to_us,
        bucket_us,
        rows,
        totals,
    })
}
