use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use doorcount_core::store::{build_report, read_events, ReplayHeader, ReplayWriter};
use doorcount_core::synth::{SceneSequence, DEFAULT_FRAME_PERIOD_US};
use doorcount_core::{
    suite_specs, Counts, CrossingAxis, RoiLayout, ScenarioExpectation, ScenarioKind, ScenarioSpec,
    SceneRenderer,
};
use tracing::info;

use crate::api;
use crate::config::{Settings, SourceChoice, UsageError};
use crate::engine::{event_log_in, run_offline, PipelineConfig, Sinks};
use crate::service::{ServiceHandle, ServiceOptions};
use crate::source::{FrameSource, ReplaySource, SyntheticSource};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_LOG_DIR: &str = "doorcount-logs";

#[derive(Debug, Parser)]
#[command(
    name = "doorcount",
    version,
    about = "Overhead depth-camera people counter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the counting service with its HTTP API
    Serve(ServeArgs),
    /// Write a DRF1 replay file of synthetic scenes
    Gen(GenArgs),
    /// Count a replay (or synthetic suite) offline and print the final counters
    Count(CountArgs),
    /// Summarize an event log into time buckets
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// key = value file with the same keys as the long flags
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Exit once the source has ended and every frame is processed
    #[arg(long)]
    pub exit_when_done: bool,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output DRF1 file
    #[arg(short, long, value_name = "PATH")]
    pub output: PathBuf,
    #[arg(long, default_value = "entry")]
    pub kind: ScenarioKind,
    /// Instead of one scenario, write this many of every kind back to back
    #[arg(long, value_name = "N")]
    pub suite_per_kind: Option<u32>,
    #[arg(long)]
    pub frame_count: Option<u32>,
    #[arg(long, default_value_t = 2200)]
    pub camera_height_mm: u16,
    #[arg(long, default_value_t = 1700)]
    pub person_height_mm: u16,
    #[arg(long, default_value_t = 40)]
    pub head_radius_px: u32,
    #[arg(long, default_value_t = 8)]
    pub speed_px_per_frame: u32,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub start_offset_px: i32,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub lateral_offset_px: i32,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma_mm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
    #[arg(long, default_value_t = DEFAULT_FRAME_PERIOD_US)]
    pub frame_period_us: u64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    #[arg(long, default_value = "vertical")]
    pub crossing_axis: CrossingAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding events.jsonl
    #[arg(long, value_name = "DIR", default_value = DEFAULT_LOG_DIR, conflicts_with = "events")]
    pub log_dir: PathBuf,
    /// Event log to read instead of <log-dir>/events.jsonl
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Window start, microseconds
    #[arg(long, default_value_t = 0)]
    pub from: u64,
    /// Window end (exclusive), microseconds; defaults to just past the last event
    #[arg(long)]
    pub to: Option<u64>,
    /// Bucket width, microseconds
    #[arg(long, default_value_t = api::DEFAULT_REPORT_BUCKET_US)]
    pub bucket: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ReportFormat,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve(a) => serve(a),
        Command::Gen(a) => gen(a),
        Command::Count(a) => count(a),
        Command::Report(a) => report(a),
    }
}

/// Opens the configured source and derives the pipeline config from it.
fn open_source(settings: &Settings) -> Result<(Box<dyn FrameSource>, PipelineConfig)> {
    let segmentation = settings.segmentation()?;
    let counter = settings.counter();
    let (source, layout): (Box<dyn FrameSource>, RoiLayout) = match settings.source_choice()? {
        SourceChoice::Replay(path) => {
            let src =
                ReplaySource::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let (w, h) = src.dims();
            (Box::new(src), settings.layout(w, h)?)
        }
        SourceChoice::Synthetic => {
            let dims = settings.synthetic_dims();
            let layout = settings.layout(dims.0, dims.1)?;
            let src = SyntheticSource::suite(
                settings.synthetic_per_kind.unwrap_or(1),
                settings.seed.unwrap_or(0),
                &ScenarioSpec::default(),
                &layout,
                dims,
            )?;
            (Box::new(src), layout)
        }
    };
    Ok((
        source,
        PipelineConfig {
            layout,
            segmentation,
            counter,
        },
    ))
}

fn log_dir(settings: &Settings) -> PathBuf {
    settings
        .log_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_LOG_DIR))
}

pub fn counts_line(c: &Counts, frames: u64) -> String {
    format!(
        "entries={} exits={} regret_enter={} regret_exit={} occupancy={} frames={}",
        c.entries, c.exits, c.regret_enter, c.regret_exit, c.occupancy, frames
    )
}

fn count(args: CountArgs) -> Result<()> {
    let settings = args.settings.with_config_file(args.config.as_deref())?;
    let (mut source, config) = open_source(&settings)?;
    let dir = log_dir(&settings);
    let sinks =
        Sinks::create(&dir).with_context(|| format!("creating logs in {}", dir.display()))?;
    let summary = run_offline(&mut *source, config, sinks)?;
    if let Some(d) = &summary.degraded {
        eprintln!("warning: {d}");
    }
    println!("{}", counts_line(&summary.counts, summary.frames_processed));
    info!("{:.1} fps", summary.fps());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let settings = args.settings.with_config_file(args.config.as_deref())?;
    let listen: SocketAddr = match settings.listen {
        Some(a) => a,
        None => DEFAULT_LISTEN.parse()?,
    };
    let (source, config) = open_source(&settings)?;
    let dir = log_dir(&settings);
    let sinks =
        Sinks::create(&dir).with_context(|| format!("creating logs in {}", dir.display()))?;
    let opts = ServiceOptions {
        paced: settings.pacing().unwrap_or(true),
        ..Default::default()
    };

    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = rt
        .block_on(tokio::net::TcpListener::bind(listen))
        .with_context(|| format!("binding {listen}"))?;
    let bound = listener.local_addr()?;

    let svc = ServiceHandle::spawn(source, config, sinks, opts);
    let shared = svc.shared();
    println!("listening on {bound}");
    std::io::stdout().flush()?;
    info!(
        "serving {} on http://{bound}/api/v1",
        shared.status().source
    );

    let app = api::router(shared.clone());
    let exit_when_done = args.exit_when_done;
    let mut status_rx = shared.subscribe();
    rt.block_on(async move {
        let stop = async move {
            let done = async {
                if exit_when_done {
                    let _ = status_rx.wait_for(|s| s.source_exhausted).await;
                } else {
                    std::future::pending::<()>().await;
                }
            };
            tokio::select! {
                _ = tokio::signal::ctrl_c() => info!("interrupted"),
                _ = done => info!("source finished"),
            }
        };
        axum::serve(listener, app)
            .with_graceful_shutdown(stop)
            .await
    })?;

    let st = svc.shutdown();
    let counts = Counts {
        entries: st.counts.entries,
        exits: st.counts.exits,
        regret_enter: st.counts.regret_enter,
        regret_exit: st.counts.regret_exit,
        occupancy: st.counts.occupancy,
    };
    println!("{}", counts_line(&counts, st.frames_processed));
    if let Some(e) = &st.source_error {
        anyhow::bail!("source failed: {e}");
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    let dims = (a.width, a.height);
    let layout = RoiLayout::equal_bands(a.width, a.height, a.crossing_axis);
    layout
        .validate(a.width, a.height)
        .map_err(|e| UsageError::Invalid(e.to_string()))?;
    let spec = ScenarioSpec {
        kind: a.kind,
        frame_count: a.frame_count,
        camera_height_mm: a.camera_height_mm,
        person_height_mm: a.person_height_mm,
        head_radius_px: a.head_radius_px,
        speed_px_per_frame: a.speed_px_per_frame,
        start_offset_px: a.start_offset_px,
        lateral_offset_px: a.lateral_offset_px,
        noise_sigma_mm: a.noise_sigma_mm,
        dropout_prob: a.dropout_prob,
        rng_seed: a.rng_seed,
        frame_period_us: a.frame_period_us,
    };
    let specs = match a.suite_per_kind {
        Some(n) => suite_specs(n, &spec, a.rng_seed, dims, a.crossing_axis)?,
        None => vec![spec],
    };
    let scenes = specs
        .iter()
        .map(|s| SceneRenderer::new(s, &layout, dims))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| UsageError::Invalid(e.to_string()))?;
    let seq = SceneSequence::new(scenes, a.frame_period_us);
    let total = seq.total_frames();
    let expect: ScenarioExpectation = seq.expectation();
    let frame_count = u32::try_from(total).context("too many frames for one replay file")?;

    let file = std::fs::File::create(&a.output)
        .with_context(|| format!("creating {}", a.output.display()))?;
    let header = ReplayHeader {
        width: a.width,
        height: a.height,
        frame_count,
    };
    let mut w = ReplayWriter::new(std::io::BufWriter::new(file), header)?;
    for f in seq {
        w.push(&f)?;
    }
    w.finish()?.flush()?;
    println!(
        "frames={total} entries={} exits={} regret_enter={} regret_exit={}",
        expect.entries, expect.exits, expect.regret_enter, expect.regret_exit
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let path = a.events.clone().unwrap_or_else(|| event_log_in(&a.log_dir));
    let events = read_events(&path).with_context(|| format!("reading {}", path.display()))?;
    let to =
        a.to.unwrap_or_else(|| events.last().map_or(0, |e| e.timestamp_us).max(a.from) + 1);
    let report = build_report(&events, a.from, to, a.bucket)
        .map_err(|e| UsageError::Invalid(e.to_string()))?;
    match a.format {
        ReportFormat::Csv => print!("{}", report.to_csv()),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

/// Exit status for an error returned by [`run`]: 2 for usage errors.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}
