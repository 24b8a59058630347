//! Per-frame processing shared by the offline `count` command and the live
//! service: ROI tracking, the crossing counter, and the log/snapshot sinks.

use std::path::{Path, PathBuf};

use doorcount_core::store::{
    AnalysisLog, AnalysisRecord, EventLog, SnapshotStore, ANALYSIS_FILE, EVENTS_FILE, SNAPSHOT_DIR,
};
use doorcount_core::{
    fsm_step, reset, CounterConfig, CounterState, Counts, CrossingEvent, DepthFrame, LogError,
    RoiActivation, RoiLayout, RoiTracker, SegmentationConfig,
};
use tracing::warn;

use crate::source::{FrameSource, SourceError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub layout: RoiLayout,
    pub segmentation: SegmentationConfig,
    pub counter: CounterConfig,
}

/// Log files and snapshot directory of one run.
pub struct Sinks {
    analysis: Option<AnalysisLog>,
    events: Option<EventLog>,
    snapshots: Option<SnapshotStore>,
}

impl Sinks {
    /// Creates `analysis.csv`, `events.jsonl` and `snapshots/` under `dir`,
    /// truncating logs left by an earlier run.
    pub fn create(dir: impl AsRef<Path>) -> Result<Self, LogError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let snapshots = SnapshotStore::open(dir.join(SNAPSHOT_DIR))?;
        snapshots.clear()?;
        Ok(Self {
            analysis: Some(AnalysisLog::create(dir.join(ANALYSIS_FILE))?),
            events: Some(EventLog::create(dir.join(EVENTS_FILE))?),
            snapshots: Some(snapshots),
        })
    }

    pub fn none() -> Self {
        Self {
            analysis: None,
            events: None,
            snapshots: None,
        }
    }

    pub fn snapshot_store(&self) -> Option<&SnapshotStore> {
        self.snapshots.as_ref()
    }

    pub fn event_log_path(&self) -> Option<PathBuf> {
        self.events.as_ref().map(|l| l.path().to_path_buf())
    }
}

pub struct StepOutput {
    pub activation: RoiActivation,
    pub event: Option<CrossingEvent>,
}

pub struct Engine {
    config: PipelineConfig,
    tracker: RoiTracker,
    counter: CounterState,
    sinks: Sinks,
    frames_processed: u64,
    last_timestamp_us: u64,
    degraded: Option<String>,
}

impl Engine {
    pub fn new(config: PipelineConfig, sinks: Sinks) -> Self {
        Self {
            config,
            tracker: RoiTracker::new(config.layout, config.segmentation),
            counter: CounterState::new(config.counter),
            sinks,
            frames_processed: 0,
            last_timestamp_us: 0,
            degraded: None,
        }
    }

    pub fn process(&mut self, frame: &DepthFrame) -> StepOutput {
        let activation = self.tracker.push(frame);
        let (next, event) = fsm_step(
            &self.counter,
            activation.dominant,
            frame.frame_index,
            frame.timestamp_us,
        );
        self.counter = next;
        self.frames_processed += 1;
        self.last_timestamp_us = frame.timestamp_us;

        if let Some(log) = &mut self.sinks.analysis {
            if let Err(e) = log.append(&AnalysisRecord::from(&activation)) {
                Self::degrade(&mut self.degraded, "analysis log", &e);
            }
        }

        let event = event.map(|mut ev| {
            if let Some(store) = &self.sinks.snapshots {
                match store.save(frame, &self.config.segmentation, ev.seq) {
                    Ok(id) => ev.snapshot_id = Some(id),
                    Err(e) => Self::degrade(&mut self.degraded, "snapshot", &e),
                }
            }
            if let Some(log) = &mut self.sinks.events {
                if let Err(e) = log.append(&ev) {
                    Self::degrade(&mut self.degraded, "event log", &e);
                }
            }
            ev
        });

        StepOutput { activation, event }
    }

    fn degrade(slot: &mut Option<String>, what: &str, err: &dyn std::fmt::Display) {
        let msg = format!("{what}: {err}");
        warn!("sink failure, counting continues: {msg}");
        *slot = Some(msg);
    }

    pub fn reset_counters(&mut self) {
        self.counter = reset(&self.counter);
    }

    /// Truncates both logs and deletes snapshots. Counters are untouched.
    pub fn clear_logs(&mut self) -> Result<(), LogError> {
        if let Some(l) = &mut self.sinks.analysis {
            l.clear()?;
        }
        if let Some(l) = &mut self.sinks.events {
            l.clear()?;
        }
        if let Some(s) = &self.sinks.snapshots {
            s.clear()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) {
        if let Some(l) = &mut self.sinks.analysis {
            if let Err(e) = l.flush() {
                Self::degrade(&mut self.degraded, "analysis log", &e);
            }
        }
    }

    pub fn counts(&self) -> Counts {
        self.counter.counts
    }

    pub fn counter(&self) -> &CounterState {
        &self.counter
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    pub fn last_timestamp_us(&self) -> u64 {
        self.last_timestamp_us
    }

    pub fn degraded(&self) -> Option<&str> {
        self.degraded.as_deref()
    }

    pub fn sinks(&self) -> &Sinks {
        &self.sinks
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.flush();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub counts: Counts,
    pub frames_processed: u64,
    pub events: Vec<CrossingEvent>,
    pub elapsed_s: f64,
    pub degraded: Option<String>,
}

impl RunSummary {
    pub fn fps(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.frames_processed as f64 / self.elapsed_s
        } else {
            0.0
        }
    }
}

/// Drains `source` through a fresh engine as fast as possible.
pub fn run_offline(
    source: &mut dyn FrameSource,
    config: PipelineConfig,
    sinks: Sinks,
) -> Result<RunSummary, SourceError> {
    let start = std::time::Instant::now();
    let mut engine = Engine::new(config, sinks);
    let mut events = Vec::new();
    while let Some(frame) = source.next_frame()? {
        events.extend(engine.process(&frame).event);
    }
    engine.flush();
    Ok(RunSummary {
        counts: engine.counts(),
        frames_processed: engine.frames_processed(),
        events,
        elapsed_s: start.elapsed().as_secs_f64(),
        degraded: engine.degraded().map(str::to_owned),
    })
}

pub fn event_log_in(dir: &Path) -> PathBuf {
    dir.join(EVENTS_FILE)
}

pub fn analysis_log_in(dir: &Path) -> PathBuf {
    dir.join(ANALYSIS_FILE)
}
