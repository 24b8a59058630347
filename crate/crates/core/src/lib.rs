//! Bidirectional people counting from overhead depth frames.
//!
//! Frames are segmented by a depth threshold, reduced to a per-frame
//! dominant region of interest ([`depth`]), and fed to a crossing state
//! machine ([`fsm`]) that emits entry, exit and "changed their mind" events.
//! [`synth`] renders reproducible test scenes and [`store`] holds the file
//! formats.

pub mod depth;
pub mod error;
pub mod fsm;
pub mod oracle;
pub mod store;
pub mod synth;

pub use depth::{
    dominant_roi, process_frame, render_grayscale, roi_counts, segment_foreground, CrossingAxis,
    DepthFrame, GrayImage, Mask, Rect, RoiActivation, RoiLayout, RoiState, RoiTracker,
    SegmentationConfig,
};
pub use error::{ConfigError, LogError, ReplayError, ReportError, SynthError};
pub use fsm::{
    fsm_step, occupancy, reset, CounterConfig, CounterState, Counts, CrossingEvent, EventKind,
};
pub use oracle::{oracle_replay, OracleOutcome};
pub use synth::{
    generate, generate_suite, suite_specs, ScenarioExpectation, ScenarioKind, ScenarioSpec,
    SceneRenderer, SceneSequence,
};
