//! Counting service: frame sources, the live processing loop, the HTTP API
//! and the `doorcount` command line.

pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod service;
pub mod source;
pub mod status;

pub use engine::{run_offline, Engine, PipelineConfig, RunSummary, Sinks};
pub use service::{ControlAction, ControlError, ServiceHandle, ServiceOptions, Shared};
pub use status::{CountsSnapshot, ServiceStatus};
