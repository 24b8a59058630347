//! The live pipeline: a producer thread reading the frame source, a bounded
//! queue, and a processing thread that owns the engine.
//!
//! Paced sources never wait for the consumer: when the queue is full the
//! oldest queued frame is dropped and counted. Unpaced sources (replay as
//! fast as possible) block instead, so every frame is processed.
//!
//! Control commands reach the processing thread as messages and are applied
//! between frames. Status is published through a `watch` channel as
//! immutable snapshots.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, select, Receiver, SendTimeoutError, Sender, TrySendError};
use doorcount_core::CrossingEvent;
use tokio::sync::{oneshot, watch};
use tracing::{info, warn};

use crate::engine::{Engine, PipelineConfig, Sinks};
use crate::source::FrameSource;
use crate::status::{CountsSnapshot, ServiceStatus};

pub const DEFAULT_QUEUE_CAPACITY: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceOptions {
    /// Release frames at their recorded timestamps and drop when lagging.
    pub paced: bool,
    pub queue_capacity: usize,
    /// Begin producing immediately instead of waiting for `start`.
    pub autostart: bool,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            paced: true,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            autostart: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Stop,
    Reset,
    ClearLogs,
}

impl std::str::FromStr for ControlAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "start" => Ok(Self::Start),
            "stop" => Ok(Self::Stop),
            "reset" => Ok(Self::Reset),
            "clear_logs" => Ok(Self::ClearLogs),
            other => Err(format!("unknown action {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("the source has ended; nothing left to start")]
    SourceExhausted,
    #[error("clearing logs failed: {0}")]
    ClearFailed(String),
    #[error("the processing loop has shut down")]
    ShutDown,
}

type Reply = oneshot::Sender<Result<Arc<ServiceStatus>, ControlError>>;

enum Control {
    Action(ControlAction, Reply),
    Shutdown,
}

enum Item {
    Frame(doorcount_core::DepthFrame),
    End,
    Failed(String),
}

#[derive(Default)]
struct GateState {
    running: bool,
    shutdown: bool,
}

/// Lets the processing thread pause and resume the producer.
#[derive(Default)]
struct Gate {
    state: Mutex<GateState>,
    cv: Condvar,
}

impl Gate {
    fn set_running(&self, running: bool) {
        self.state.lock().unwrap().running = running;
        self.cv.notify_all();
    }

    fn shutdown(&self) {
        self.state.lock().unwrap().shutdown = true;
        self.cv.notify_all();
    }

    fn is_shutdown(&self) -> bool {
        self.state.lock().unwrap().shutdown
    }

    /// Blocks while paused. Returns false on shutdown. `paused` is set when
    /// the call had to wait.
    fn wait_running(&self, paused: &mut bool) -> bool {
        let mut st = self.state.lock().unwrap();
        while !st.running && !st.shutdown {
            *paused = true;
            st = self.cv.wait(st).unwrap();
        }
        !st.shutdown
    }
}

#[derive(Default)]
struct Counters {
    produced: AtomicU64,
    dropped: AtomicU64,
}

/// Read side shared with HTTP handlers.
pub struct Shared {
    status: watch::Receiver<Arc<ServiceStatus>>,
    events: RwLock<Vec<CrossingEvent>>,
    control: Sender<Control>,
    snapshot_dir: Option<PathBuf>,
}

impl Shared {
    pub fn status(&self) -> Arc<ServiceStatus> {
        self.status.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<Arc<ServiceStatus>> {
        self.status.clone()
    }

    /// Up to `limit` events with `seq > since_seq`, oldest first.
    pub fn events_since(&self, since_seq: u64, limit: usize) -> Vec<CrossingEvent> {
        let events = self.events.read().unwrap();
        let start = events.partition_point(|e| e.seq <= since_seq);
        events[start..].iter().take(limit).cloned().collect()
    }

    pub fn all_events(&self) -> Vec<CrossingEvent> {
        self.events.read().unwrap().clone()
    }

    pub fn snapshot_dir(&self) -> Option<&PathBuf> {
        self.snapshot_dir.as_ref()
    }

    pub async fn control(&self, action: ControlAction) -> Result<Arc<ServiceStatus>, ControlError> {
        let (tx, rx) = oneshot::channel();
        self.control
            .send(Control::Action(action, tx))
            .map_err(|_| ControlError::ShutDown)?;
        rx.await.map_err(|_| ControlError::ShutDown)?
    }

    /// Blocking variant for non-async callers.
    pub fn control_blocking(
        &self,
        action: ControlAction,
    ) -> Result<Arc<ServiceStatus>, ControlError> {
        let (tx, rx) = oneshot::channel();
        self.control
            .send(Control::Action(action, tx))
            .map_err(|_| ControlError::ShutDown)?;
        rx.blocking_recv().map_err(|_| ControlError::ShutDown)?
    }
}

pub struct ServiceHandle {
    shared: Arc<Shared>,
    gate: Arc<Gate>,
    producer: Option<JoinHandle<()>>,
    consumer: Option<JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn spawn(
        mut source: Box<dyn FrameSource>,
        config: PipelineConfig,
        sinks: Sinks,
        opts: ServiceOptions,
    ) -> Self {
        let capacity = opts.queue_capacity.max(1);
        let (frame_tx, frame_rx) = bounded::<Item>(capacity);
        let (control_tx, control_rx) = crossbeam_channel::unbounded();
        let gate = Arc::new(Gate::default());
        gate.set_running(opts.autostart);
        let counters = Arc::new(Counters::default());

        let initial = ServiceStatus {
            running: opts.autostart,
            source: source.describe(),
            initial_occupancy: config.counter.initial_occupancy,
            counts: CountsSnapshot::new(
                &doorcount_core::Counts::with_occupancy(config.counter.initial_occupancy),
                0,
            ),
            occupancy_consistent: config.counter.initial_occupancy >= 0,
            ..Default::default()
        };
        let (status_tx, status_rx) = watch::channel(Arc::new(initial.clone()));
        let snapshot_dir = sinks.snapshot_store().map(|s| s.dir().to_path_buf());
        let shared = Arc::new(Shared {
            status: status_rx,
            events: RwLock::new(Vec::new()),
            control: control_tx,
            snapshot_dir,
        });

        let producer = {
            let gate = gate.clone();
            let counters = counters.clone();
            let evict = frame_rx.clone();
            std::thread::Builder::new()
                .name("frame-producer".into())
                .spawn(move || produce(&mut *source, frame_tx, evict, &gate, &counters, opts.paced))
                .expect("spawn producer thread")
        };

        let consumer = {
            let mut lp = Loop {
                engine: Engine::new(config, sinks),
                shared: shared.clone(),
                gate: gate.clone(),
                counters,
                status_tx,
                status: initial,
                fps: FpsMeter::default(),
            };
            std::thread::Builder::new()
                .name("frame-consumer".into())
                .spawn(move || lp.run(frame_rx, control_rx))
                .expect("spawn consumer thread")
        };

        Self {
            shared,
            gate,
            producer: Some(producer),
            consumer: Some(consumer),
        }
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    pub fn status(&self) -> Arc<ServiceStatus> {
        self.shared.status()
    }

    /// Blocks until the source has ended and the queue is drained, or until
    /// `timeout` passes. Returns the final status in the first case.
    pub fn wait_until_done(&self, timeout: Duration) -> Option<Arc<ServiceStatus>> {
        let deadline = Instant::now() + timeout;
        let mut rx = self.shared.subscribe();
        loop {
            let st = rx.borrow_and_update().clone();
            if st.source_exhausted {
                return Some(st);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            // watch has no blocking wait; poll at a fine grain
            std::thread::sleep((deadline - now).min(Duration::from_millis(2)));
        }
    }

    /// Stops both threads and flushes the logs. Returns the last status.
    pub fn shutdown(mut self) -> Arc<ServiceStatus> {
        self.stop_threads();
        self.shared.status()
    }

    fn stop_threads(&mut self) {
        self.gate.shutdown();
        let _ = self.shared.control.send(Control::Shutdown);
        if let Some(h) = self.consumer.take() {
            let _ = h.join();
        }
        if let Some(h) = self.producer.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}

fn produce(
    source: &mut dyn FrameSource,
    tx: Sender<Item>,
    evict: Receiver<Item>,
    gate: &Gate,
    counters: &Counters,
    paced: bool,
) {
    // (wall clock, timestamp) of the frame that anchors pacing
    let mut anchor: Option<(Instant, u64)> = None;
    loop {
        let mut paused = false;
        if !gate.wait_running(&mut paused) {
            return;
        }
        if paused {
            anchor = None;
        }
        let item = match source.next_frame() {
            Ok(Some(frame)) => {
                if paced {
                    let (t0, ts0) = *anchor.get_or_insert((Instant::now(), frame.timestamp_us));
                    let due = t0 + Duration::from_micros(frame.timestamp_us.saturating_sub(ts0));
                    let now = Instant::now();
                    if due > now {
                        std::thread::sleep(due - now);
                    }
                }
                counters.produced.fetch_add(1, Ordering::SeqCst);
                Item::Frame(frame)
            }
            Ok(None) => Item::End,
            Err(e) => {
                warn!("frame source failed: {e}");
                Item::Failed(e.to_string())
            }
        };
        let last = !matches!(item, Item::Frame(_));
        let sent = if paced && !last {
            push_drop_oldest(&tx, &evict, item, counters)
        } else {
            push_blocking(&tx, item, gate)
        };
        if !sent || last {
            return;
        }
    }
}

fn push_drop_oldest(
    tx: &Sender<Item>,
    evict: &Receiver<Item>,
    mut item: Item,
    counters: &Counters,
) -> bool {
    loop {
        match tx.try_send(item) {
            Ok(()) => return true,
            Err(TrySendError::Disconnected(_)) => return false,
            Err(TrySendError::Full(back)) => {
                item = back;
                // only frames are ever queued ahead of a new frame
                if let Ok(Item::Frame(_)) = evict.try_recv() {
                    counters.dropped.fetch_add(1, Ordering::SeqCst);
                }
            }
        }
    }
}

fn push_blocking(tx: &Sender<Item>, mut item: Item, gate: &Gate) -> bool {
    loop {
        match tx.send_timeout(item, Duration::from_millis(50)) {
            Ok(()) => return true,
            Err(SendTimeoutError::Disconnected(_)) => return false,
            Err(SendTimeoutError::Timeout(back)) => {
                if gate.is_shutdown() {
                    return false;
                }
                item = back;
            }
        }
    }
}

/// Frames per second over roughly the last second.
#[derive(Default)]
struct FpsMeter {
    window_start: Option<Instant>,
    window_frames: u64,
    estimate: f64,
}

impl FpsMeter {
    fn tick(&mut self) -> f64 {
        let now = Instant::now();
        let start = *self.window_start.get_or_insert(now);
        self.window_frames += 1;
        let dt = now.duration_since(start).as_secs_f64();
        if dt >= 1.0 {
            self.estimate = self.window_frames as f64 / dt;
            self.window_start = Some(now);
            self.window_frames = 0;
        } else if self.estimate == 0.0 && dt > 0.0 {
            self.estimate = self.window_frames as f64 / dt;
        }
        self.estimate
    }
}

struct Loop {
    engine: Engine,
    shared: Arc<Shared>,
    gate: Arc<Gate>,
    counters: Arc<Counters>,
    status_tx: watch::Sender<Arc<ServiceStatus>>,
    status: ServiceStatus,
    fps: FpsMeter,
}

impl Loop {
    fn run(&mut self, frames: Receiver<Item>, control: Receiver<Control>) {
        let mut frames = Some(frames);
        loop {
            let never = crossbeam_channel::never();
            let frame_rx = frames.as_ref().unwrap_or(&never);
            select! {
                recv(control) -> msg => match msg {
                    Ok(Control::Action(action, reply)) => {
                        let _ = reply.send(self.apply(action));
                    }
                    Ok(Control::Shutdown) | Err(_) => break,
                },
                recv(frame_rx) -> item => match item {
                    Ok(Item::Frame(frame)) => self.process(&frame),
                    Ok(Item::End) => {
                        info!("source ended after {} frames", self.engine.frames_processed());
                        self.finish(None);
                        frames = None;
                    }
                    Ok(Item::Failed(reason)) => {
                        self.finish(Some(reason));
                        frames = None;
                    }
                    // the producer also quits on shutdown, possibly before
                    // the shutdown message is seen here
                    Err(_) if self.gate.is_shutdown() => break,
                    Err(_) => {
                        self.finish(Some("frame producer stopped unexpectedly".into()));
                        frames = None;
                    }
                },
            }
        }
        self.engine.flush();
    }

    fn process(&mut self, frame: &doorcount_core::DepthFrame) {
        let out = self.engine.process(frame);
        if let Some(ev) = out.event {
            self.status.last_event_seq = Some(ev.seq);
            self.shared.events.write().unwrap().push(ev);
        }
        self.status.fps_estimate = self.fps.tick();
        self.publish();
    }

    fn finish(&mut self, error: Option<String>) {
        self.engine.flush();
        self.status.source_exhausted = true;
        self.status.running = false;
        self.status.source_error = error;
        self.gate.set_running(false);
        self.publish();
    }

    fn apply(&mut self, action: ControlAction) -> Result<Arc<ServiceStatus>, ControlError> {
        match action {
            ControlAction::Start => {
                if self.status.source_exhausted {
                    return Err(ControlError::SourceExhausted);
                }
                self.status.running = true;
                self.gate.set_running(true);
            }
            ControlAction::Stop => {
                self.status.running = false;
                self.gate.set_running(false);
            }
            ControlAction::Reset => self.engine.reset_counters(),
            ControlAction::ClearLogs => {
                self.engine
                    .clear_logs()
                    .map_err(|e| ControlError::ClearFailed(e.to_string()))?;
                self.shared.events.write().unwrap().clear();
            }
        }
        Ok(self.publish())
    }

    fn publish(&mut self) -> Arc<ServiceStatus> {
        let st = &mut self.status;
        st.frames_produced = self.counters.produced.load(Ordering::SeqCst);
        st.frames_dropped = self.counters.dropped.load(Ordering::SeqCst);
        st.frames_processed = self.engine.frames_processed();
        st.counts = CountsSnapshot::new(&self.engine.counts(), self.engine.last_timestamp_us());
        st.occupancy_consistent = self.engine.counter().occupancy_consistent();
        st.degraded = self.engine.degraded().map(str::to_owned);
        let snapshot = Arc::new(st.clone());
        self.status_tx.send_replace(snapshot.clone());
        snapshot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use doorcount_core::store::read_events;
    use doorcount_core::{
        CounterConfig, CrossingAxis, DepthFrame, EventKind, RoiLayout, ScenarioKind, ScenarioSpec,
        SceneRenderer, SceneSequence, SegmentationConfig,
    };

    use crate::engine::event_log_in;
    use crate::source::VecSource;

    const DIMS: (u32, u32) = (160, 120);
    const WAIT: Duration = Duration::from_secs(30);

    fn config() -> PipelineConfig {
        PipelineConfig {
            layout: RoiLayout::equal_bands(DIMS.0, DIMS.1, CrossingAxis::Vertical),
            segmentation: SegmentationConfig::default(),
            counter: CounterConfig::default(),
        }
    }

    fn frames(kinds: &[ScenarioKind]) -> Vec<DepthFrame> {
        let layout = config().layout;
        let scenes = kinds
            .iter()
            .map(|&kind| {
                let spec = ScenarioSpec {
                    kind,
                    head_radius_px: 12,
                    speed_px_per_frame: 4,
                    frame_period_us: 1_000,
                    ..Default::default()
                };
                SceneRenderer::new(&spec, &layout, DIMS).unwrap()
            })
            .collect();
        SceneSequence::new(scenes, 1_000).collect()
    }

    fn unpaced() -> ServiceOptions {
        ServiceOptions {
            paced: false,
            ..Default::default()
        }
    }

    #[test]
    fn entry_replay_counts_one() {
        let dir = tempfile::tempdir().unwrap();
        let src = VecSource::new(frames(&[ScenarioKind::Entry]));
        let svc = ServiceHandle::spawn(
            Box::new(src),
            config(),
            Sinks::create(dir.path()).unwrap(),
            unpaced(),
        );
        let st = svc.wait_until_done(WAIT).unwrap();
        assert_eq!(st.counts.entries, 1);
        assert_eq!(st.frames_dropped, 0);
        assert_eq!(st.frames_processed, st.frames_produced);
        assert!(!st.running);
        let events = svc.shared().events_since(0, 100);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, EventKind::Entry);
        drop(svc);
        assert_eq!(read_events(event_log_in(dir.path())).unwrap(), events);
    }

    #[test]
    fn start_after_end_is_rejected() {
        let src = VecSource::new(frames(&[ScenarioKind::EmptyScene]));
        let svc = ServiceHandle::spawn(Box::new(src), config(), Sinks::none(), unpaced());
        svc.wait_until_done(WAIT).unwrap();
        assert_eq!(
            svc.shared().control_blocking(ControlAction::Start),
            Err(ControlError::SourceExhausted)
        );
    }

    #[test]
    fn paused_service_produces_nothing_until_started() {
        let src = VecSource::new(frames(&[ScenarioKind::Exit]));
        let opts = ServiceOptions {
            autostart: false,
            ..unpaced()
        };
        let svc = ServiceHandle::spawn(Box::new(src), config(), Sinks::none(), opts);
        std::thread::sleep(Duration::from_millis(50));
        let st = svc.status();
        assert!(!st.running);
        assert_eq!(st.frames_produced, 0);
        let st = svc.shared().control_blocking(ControlAction::Start).unwrap();
        assert!(st.running);
        let st = svc.wait_until_done(WAIT).unwrap();
        assert_eq!(st.counts.exits, 1);
    }

    #[test]
    fn stop_start_cycles_keep_every_event() {
        let kinds = [
            ScenarioKind::Entry,
            ScenarioKind::Exit,
            ScenarioKind::RegretEnter,
            ScenarioKind::Entry,
        ];
        let src = VecSource::new(frames(&kinds));
        let svc = ServiceHandle::spawn(Box::new(src), config(), Sinks::none(), unpaced());
        let shared = svc.shared();
        for _ in 0..20 {
            shared.control_blocking(ControlAction::Stop).unwrap();
            match shared.control_blocking(ControlAction::Start) {
                Ok(_) | Err(ControlError::SourceExhausted) => {}
                Err(e) => panic!("{e}"),
            }
        }
        let st = svc.wait_until_done(WAIT).unwrap();
        assert_eq!(st.counts.entries, 2);
        assert_eq!(st.counts.exits, 1);
        assert_eq!(st.counts.regret_enter, 1);
        let seqs: Vec<u64> = shared.all_events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4]);
    }

    #[test]
    fn reset_keeps_event_history() {
        let src = VecSource::new(frames(&[ScenarioKind::Entry]));
        let svc = ServiceHandle::spawn(Box::new(src), config(), Sinks::none(), unpaced());
        svc.wait_until_done(WAIT).unwrap();
        let st = svc.shared().control_blocking(ControlAction::Reset).unwrap();
        assert_eq!(
            st.counts,
            CountsSnapshot {
                timestamp_us: st.counts.timestamp_us,
                ..Default::default()
            }
        );
        assert_eq!(svc.shared().events_since(0, 10).len(), 1);
    }

    #[test]
    fn paced_overflow_drops_oldest_and_accounts_for_it() {
        // identical timestamps mean no pacing delay, so the producer floods
        let mut fs = frames(&[ScenarioKind::Entry, ScenarioKind::Exit]);
        for f in &mut fs {
            f.timestamp_us = 0;
        }
        let n = fs.len() as u64;
        let opts = ServiceOptions {
            paced: true,
            queue_capacity: 1,
            autostart: true,
        };
        let svc = ServiceHandle::spawn(Box::new(VecSource::new(fs)), config(), Sinks::none(), opts);
        let st = svc.wait_until_done(WAIT).unwrap();
        assert_eq!(st.frames_produced, n);
        assert_eq!(st.frames_processed + st.frames_dropped, n);
    }

    #[test]
    fn paced_replay_follows_timestamps() {
        let fs: Vec<_> = (0..5)
            .map(|i| DepthFrame::filled(DIMS.0, DIMS.1, i, i * 20_000, 0))
            .collect();
        let t = Instant::now();
        let svc = ServiceHandle::spawn(
            Box::new(VecSource::new(fs)),
            config(),
            Sinks::none(),
            ServiceOptions::default(),
        );
        let st = svc.wait_until_done(WAIT).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(80));
        assert_eq!(st.frames_processed + st.frames_dropped, 5);
    }

    #[test]
    fn shutdown_mid_stream_is_not_a_source_error() {
        for _ in 0..20 {
            let fs: Vec<_> = (0..1000)
                .map(|i| DepthFrame::filled(DIMS.0, DIMS.1, i, i * 1_000, 0))
                .collect();
            let svc = ServiceHandle::spawn(
                Box::new(VecSource::new(fs)),
                config(),
                Sinks::none(),
                ServiceOptions::default(),
            );
            std::thread::sleep(Duration::from_millis(3));
            let st = svc.shutdown();
            assert_eq!(st.source_error, None);
            assert!(!st.source_exhausted);
        }
    }
}
