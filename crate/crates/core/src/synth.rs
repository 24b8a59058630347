//! Deterministic synthetic doorway scenes.
//!
//! A person is modelled as a flat disc at head depth over a flat floor at
//! camera height. The disc center travels along the crossing axis on a
//! trajectory fixed by the scenario kind; the other coordinate stays at the
//! middle of ROI 2 (plus an optional lateral offset).
//!
//! # Pseudo-random scheme
//!
//! All randomness comes from [`SplitMix64`] so scenes are bit-reproducible:
//!
//! * Frame `t` of a scene seeds its own generator with
//!   `rng_seed ^ ((t + 1) * 0x9E3779B97F4A7C15)` (wrapping multiply).
//! * Pixels are visited in row-major order and each takes one draw `c`.
//!   When `noise_sigma_mm > 0` the top 16 bits pick a standard normal
//!   `z = Q[c >> 48]` from a table of quantiles,
//!   `Q[i] = Phi^-1((i + 0.5) / 65536)`, and the depth becomes
//!   `depth + round(sigma * z)` (half away from zero) clamped to `1..=65535`.
//! * When `dropout_prob > 0` the sample is zeroed if the low 48 bits,
//!   as `(c & (2^48 - 1)) / 2^48`, fall below `dropout_prob`.
//! * [`suite_specs`] draws scenario parameters from `SplitMix64::new(seed)`,
//!   scenario by scenario in suite order: speed `6 + next % 11`, start offset
//!   `next % 41`, lateral offset `next % (2q + 1) - q` with `q` a quarter of
//!   the frame size across the axis (less if the disc would not fit), then
//!   the scene's `rng_seed = next`.

use std::cell::RefCell;
use std::sync::OnceLock;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::depth::{CrossingAxis, DepthFrame, RoiLayout};
use crate::error::SynthError;
use crate::fsm::{Counts, EventKind};

/// Frame period used for synthetic timestamps (30 fps).
pub const DEFAULT_FRAME_PERIOD_US: u64 = 33_333;

/// Frames generated for static scenes when no explicit count is given.
pub const STATIC_SCENE_FRAMES: u32 = 30;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GOLDEN);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

const QUANTILE_BITS: u32 = 16;
const LOW_BITS: u32 = 64 - QUANTILE_BITS;

thread_local! {
    /// `round(sigma * Q[i])` for the last sigma used on this thread.
    static NOISE_OFFSETS: RefCell<(Option<u64>, Vec<i32>)> = const { RefCell::new((None, Vec::new())) };
}

/// Standard normal quantiles at `(i + 0.5) / 2^16`.
fn normal_quantiles() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = 1usize << QUANTILE_BITS;
        let normal = Normal::standard();
        (0..n)
            .map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Entry,
    Exit,
    RegretEnter,
    RegretExit,
    Loiter,
    EmptyScene,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        Self::Entry,
        Self::Exit,
        Self::RegretEnter,
        Self::RegretExit,
        Self::Loiter,
        Self::EmptyScene,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Entry => "entry",
            Self::Exit => "exit",
            Self::RegretEnter => "regret_enter",
            Self::RegretExit => "regret_exit",
            Self::Loiter => "loiter",
            Self::EmptyScene => "empty",
        }
    }

    pub fn expectation(self) -> ScenarioExpectation {
        let mut e = ScenarioExpectation::default();
        match self {
            Self::Entry => e.entries = 1,
            Self::Exit => e.exits = 1,
            Self::RegretEnter => e.regret_enter = 1,
            Self::RegretExit => e.regret_exit = 1,
            Self::Loiter | Self::EmptyScene => {}
        }
        e
    }

    /// Dominant-state pattern of a clean run once repeats and idles are removed.
    pub fn canonical_pattern(self) -> &'static [u8] {
        match self {
            Self::Entry => &[3, 2, 1],
            Self::Exit => &[1, 2, 3],
            Self::RegretEnter => &[3, 2, 3],
            Self::RegretExit => &[1, 2, 1],
            Self::Loiter => &[2],
            Self::EmptyScene => &[],
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::Param(format!("unknown scenario kind {s:?}")))
    }
}

/// Expected counter deltas for one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScenarioExpectation {
    pub entries: u64,
    pub exits: u64,
    pub regret_enter: u64,
    pub regret_exit: u64,
}

impl ScenarioExpectation {
    pub fn total(&self) -> u64 {
        self.entries + self.exits + self.regret_enter + self.regret_exit
    }

    pub fn get(&self, kind: EventKind) -> u64 {
        match kind {
            EventKind::Entry => self.entries,
            EventKind::Exit => self.exits,
            EventKind::RegretEnter => self.regret_enter,
            EventKind::RegretExit => self.regret_exit,
        }
    }

    /// Whether the counter difference `after - before` equals this expectation.
    pub fn matches_delta(&self, before: &Counts, after: &Counts) -> bool {
        EventKind::ALL
            .iter()
            .all(|&k| after.get(k) - before.get(k) == self.get(k))
    }
}

impl std::ops::Add for ScenarioExpectation {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            entries: self.entries + o.entries,
            exits: self.exits + o.exits,
            regret_enter: self.regret_enter + o.regret_enter,
            regret_exit: self.regret_exit + o.regret_exit,
        }
    }
}

impl std::iter::Sum for ScenarioExpectation {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// `None` picks the shortest run that completes the trajectory
    /// ([`STATIC_SCENE_FRAMES`] for static scenes).
    pub frame_count: Option<u32>,
    pub camera_height_mm: u16,
    pub person_height_mm: u16,
    pub head_radius_px: u32,
    pub speed_px_per_frame: u32,
    /// Extra distance beyond the outer bands where trajectories start and end.
    pub start_offset_px: i32,
    /// Shift of the path across the crossing axis, from the middle of ROI 2.
    pub lateral_offset_px: i32,
    pub noise_sigma_mm: f64,
    pub dropout_prob: f64,
    pub rng_seed: u64,
    pub frame_period_us: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Entry,
            frame_count: None,
            camera_height_mm: 2200,
            person_height_mm: 1700,
            head_radius_px: 40,
            speed_px_per_frame: 8,
            start_offset_px: 0,
            lateral_offset_px: 0,
            noise_sigma_mm: 0.0,
            dropout_prob: 0.0,
            rng_seed: 0,
            frame_period_us: DEFAULT_FRAME_PERIOD_US,
        }
    }
}

impl ScenarioSpec {
    pub fn head_depth_mm(&self) -> u16 {
        self.camera_height_mm.saturating_sub(self.person_height_mm)
    }

    /// Whether the head is within `threshold_mm` of the camera.
    pub fn is_detectable(&self, threshold_mm: u16) -> bool {
        let d = self.head_depth_mm();
        d > 0 && d <= threshold_mm
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.person_height_mm == 0 || self.person_height_mm >= self.camera_height_mm {
            return Err(SynthError::Param(format!(
                "person height {} mm must be in (0, camera height {} mm)",
                self.person_height_mm, self.camera_height_mm
            )));
        }
        if self.head_radius_px == 0 {
            return Err(SynthError::Param("head radius must be > 0".into()));
        }
        if self.speed_px_per_frame == 0 {
            return Err(SynthError::Param("speed must be > 0".into()));
        }
        if self.frame_count == Some(0) {
            return Err(SynthError::Param("frame count must be >= 1".into()));
        }
        if !(self.noise_sigma_mm >= 0.0 && self.noise_sigma_mm.is_finite()) {
            return Err(SynthError::Param(
                "noise sigma must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(SynthError::Param(
                "dropout probability must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Path {
    Still(f64),
    /// Straight walk, clamped at `to` once reached.
    Walk {
        from: f64,
        to: f64,
    },
    /// Walk to `turn` and back to `from`.
    OutAndBack {
        from: f64,
        turn: f64,
    },
    Absent,
}

impl Path {
    fn min_frames(&self, speed: f64) -> u32 {
        let frames_for = |dist: f64| (dist / speed).ceil() as u32 + 1;
        match *self {
            Path::Still(_) | Path::Absent => 1,
            Path::Walk { from, to } => frames_for((to - from).abs()),
            Path::OutAndBack { from, turn } => frames_for(2.0 * (turn - from).abs()),
        }
    }

    fn position(&self, t: u32, speed: f64) -> Option<f64> {
        let travelled = t as f64 * speed;
        match *self {
            Path::Absent => None,
            Path::Still(c) => Some(c),
            Path::Walk { from, to } => {
                let len = (to - from).abs();
                Some(from + (to - from).signum() * travelled.min(len))
            }
            Path::OutAndBack { from, turn } => {
                let half = (turn - from).abs();
                let dir = (turn - from).signum();
                let d = if travelled <= half {
                    travelled
                } else if travelled <= 2.0 * half {
                    2.0 * half - travelled
                } else {
                    0.0
                };
                Some(from + dir * d)
            }
        }
    }
}

/// Renders the frames of one scenario on demand.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    spec: ScenarioSpec,
    width: u32,
    height: u32,
    axis: CrossingAxis,
    path: Path,
    lateral: f64,
    frame_count: u32,
}

impl SceneRenderer {
    pub fn new(
        spec: &ScenarioSpec,
        layout: &RoiLayout,
        dims: (u32, u32),
    ) -> Result<Self, SynthError> {
        spec.validate()?;
        let (width, height) = dims;
        layout.validate(width, height)?;
        let axis = layout.crossing_axis;
        let (along_len, across_len) = match axis {
            CrossingAxis::Horizontal => (width, height),
            CrossingAxis::Vertical => (height, width),
        };
        let r = spec.head_radius_px as i64;
        if 2 * r + 1 > along_len.min(across_len) as i64 {
            return Err(SynthError::Geometry(format!(
                "disc of radius {r} px does not fit a {width}x{height} frame"
            )));
        }

        let (s1, _) = layout.rois[0].span(axis);
        let (s2, e2) = layout.rois[1].span(axis);
        let (_, e3) = layout.rois[2].span(axis);
        let off = spec.start_offset_px as i64;
        // disc fully past ROI 3 / before ROI 1
        let outside = e3 as i64 + r + off;
        let inside = s1 as i64 - r - 1 - off;
        if outside - r < e3 as i64 || inside + r >= s1 as i64 {
            return Err(SynthError::Geometry(format!(
                "trajectory endpoints ({inside}, {outside}) overlap the outer ROIs"
            )));
        }
        let turn = (s2 as f64 + e2 as f64 - 1.0) / 2.0;
        let (outside, inside) = (outside as f64, inside as f64);

        let path = match spec.kind {
            ScenarioKind::Entry => Path::Walk {
                from: outside,
                to: inside,
            },
            ScenarioKind::Exit => Path::Walk {
                from: inside,
                to: outside,
            },
            ScenarioKind::RegretEnter => Path::OutAndBack {
                from: outside,
                turn,
            },
            ScenarioKind::RegretExit => Path::OutAndBack { from: inside, turn },
            ScenarioKind::Loiter => Path::Still(turn),
            ScenarioKind::EmptyScene => Path::Absent,
        };

        let (a2, b2) = match axis {
            CrossingAxis::Horizontal => (layout.rois[1].y, layout.rois[1].h),
            CrossingAxis::Vertical => (layout.rois[1].x, layout.rois[1].w),
        };
        let lateral = (a2 as f64 + (a2 + b2) as f64 - 1.0) / 2.0 + spec.lateral_offset_px as f64;
        if lateral - (r as f64) < 0.0 || lateral + (r as f64) > across_len as f64 - 1.0 {
            return Err(SynthError::Geometry(format!(
                "lateral offset {} px pushes the disc out of the frame",
                spec.lateral_offset_px
            )));
        }

        let needed = path.min_frames(spec.speed_px_per_frame as f64);
        let frame_count = match (spec.frame_count, spec.kind) {
            (Some(n), _) if n < needed => {
                return Err(SynthError::Geometry(format!(
                    "{} needs at least {needed} frames, got {n}",
                    spec.kind
                )))
            }
            (Some(n), _) => n,
            (None, ScenarioKind::Loiter | ScenarioKind::EmptyScene) => STATIC_SCENE_FRAMES,
            (None, _) => needed,
        };

        Ok(Self {
            spec: spec.clone(),
            width,
            height,
            axis,
            path,
            lateral,
            frame_count,
        })
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    pub fn expectation(&self) -> ScenarioExpectation {
        self.spec.kind.expectation()
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    /// Disc center `(x, y)` at frame `t`, if a person is present.
    pub fn disc_center(&self, t: u32) -> Option<(f64, f64)> {
        let a = self.path.position(t, self.spec.speed_px_per_frame as f64)?;
        Some(match self.axis {
            CrossingAxis::Horizontal => (a, self.lateral),
            CrossingAxis::Vertical => (self.lateral, a),
        })
    }

    /// Frame `t` of the scene, indexed and timestamped from zero.
    pub fn render(&self, t: u32) -> DepthFrame {
        let mut depth = Vec::new();
        self.render_into(t, &mut depth);
        DepthFrame {
            width: self.width,
            height: self.height,
            frame_index: t as u64,
            timestamp_us: t as u64 * self.spec.frame_period_us,
            depth,
        }
    }

    pub fn render_into(&self, t: u32, depth: &mut Vec<u16>) {
        let (w, h) = (self.width as i64, self.height as i64);
        depth.clear();
        depth.resize((w * h) as usize, self.spec.camera_height_mm);

        if let Some((cx, cy)) = self.disc_center(t) {
            let head = self.spec.head_depth_mm();
            let r = self.spec.head_radius_px as f64;
            let r2 = r * r;
            let y0 = ((cy - r).ceil() as i64).max(0);
            let y1 = ((cy + r).floor() as i64).min(h - 1);
            let x0 = ((cx - r).ceil() as i64).max(0);
            let x1 = ((cx + r).floor() as i64).min(w - 1);
            for y in y0..=y1 {
                let dy = y as f64 - cy;
                let row = (y * w) as usize;
                for x in x0..=x1 {
                    let dx = x as f64 - cx;
                    if dx * dx + dy * dy <= r2 {
                        depth[row + x as usize] = head;
                    }
                }
            }
        }

        let sigma = self.spec.noise_sigma_mm;
        let p = self.spec.dropout_prob;
        if sigma == 0.0 && p == 0.0 {
            return;
        }
        let mut rng =
            SplitMix64::new(self.spec.rng_seed ^ (t as u64 + 1).wrapping_mul(SplitMix64::GOLDEN));
        let low_mask = (1u64 << LOW_BITS) - 1;
        // u < p  <=>  low bits < ceil(p * 2^48); the product is exact
        let drop_below = (p * (1u64 << LOW_BITS) as f64).ceil() as u64;
        NOISE_OFFSETS.with_borrow_mut(|(key, offsets)| {
            if sigma > 0.0 && *key != Some(sigma.to_bits()) {
                *offsets = normal_quantiles()
                    .iter()
                    .map(|z| (sigma * z).round() as i32)
                    .collect();
                *key = Some(sigma.to_bits());
            }
            for d in depth.iter_mut() {
                let c = rng.next_u64();
                if sigma > 0.0 {
                    let v = *d as i32 + offsets[(c >> LOW_BITS) as usize];
                    *d = v.clamp(1, u16::MAX as i32) as u16;
                }
                if c & low_mask < drop_below {
                    *d = 0;
                }
            }
        });
    }

    pub fn frames(&self) -> impl Iterator<Item = DepthFrame> + '_ {
        (0..self.frame_count).map(|t| self.render(t))
    }
}

/// Builds every frame of a scenario along with its expected counter deltas.
pub fn generate(
    spec: &ScenarioSpec,
    layout: &RoiLayout,
    dims: (u32, u32),
) -> Result<(Vec<DepthFrame>, ScenarioExpectation), SynthError> {
    let renderer = SceneRenderer::new(spec, layout, dims)?;
    Ok((renderer.frames().collect(), renderer.expectation()))
}

/// Parameters for `n_per_kind` scenarios of every kind, interleaved by kind
/// (one of each kind, then the next round). See the module docs for how
/// parameters derive from `seed`.
pub fn suite_specs(
    n_per_kind: u32,
    base: &ScenarioSpec,
    seed: u64,
    dims: (u32, u32),
    axis: CrossingAxis,
) -> Result<Vec<ScenarioSpec>, SynthError> {
    if n_per_kind == 0 {
        return Err(SynthError::Param("n_per_kind must be >= 1".into()));
    }
    let across = match axis {
        CrossingAxis::Horizontal => dims.1,
        CrossingAxis::Vertical => dims.0,
    } as u64;
    // keep the whole disc inside the frame across the axis
    let room = ((across.saturating_sub(1)) / 2).saturating_sub(base.head_radius_px as u64);
    let q = (across / 4).min(room);
    let mut rng = SplitMix64::new(seed);
    let mut specs = Vec::with_capacity(n_per_kind as usize * ScenarioKind::ALL.len());
    for _ in 0..n_per_kind {
        for kind in ScenarioKind::ALL {
            let speed = 6 + (rng.next_u64() % 11) as u32;
            let offset = (rng.next_u64() % 41) as i32;
            let lateral = (rng.next_u64() % (2 * q + 1)) as i64 - q as i64;
            let rng_seed = rng.next_u64();
            specs.push(ScenarioSpec {
                kind,
                speed_px_per_frame: speed,
                start_offset_px: offset,
                lateral_offset_px: lateral as i32,
                rng_seed,
                ..base.clone()
            });
        }
    }
    Ok(specs)
}

/// Materializes a whole suite. Memory grows with `n_per_kind`; prefer
/// [`suite_specs`] plus [`SceneRenderer`] for large suites.
pub fn generate_suite(
    n_per_kind: u32,
    base: &ScenarioSpec,
    seed: u64,
    layout: &RoiLayout,
    dims: (u32, u32),
) -> Result<Vec<(Vec<DepthFrame>, ScenarioExpectation)>, SynthError> {
    suite_specs(n_per_kind, base, seed, dims, layout.crossing_axis)?
        .iter()
        .map(|s| generate(s, layout, dims))
        .collect()
}

/// Plays several scenes back to back as one stream, renumbering frames and
/// timestamps so they keep increasing.
#[derive(Debug, Clone)]
pub struct SceneSequence {
    scenes: Vec<SceneRenderer>,
    scene: usize,
    t: u32,
    next_index: u64,
    frame_period_us: u64,
}

impl SceneSequence {
    pub fn new(scenes: Vec<SceneRenderer>, frame_period_us: u64) -> Self {
        Self {
            scenes,
            scene: 0,
            t: 0,
            next_index: 0,
            frame_period_us,
        }
    }

    pub fn total_frames(&self) -> u64 {
        self.scenes.iter().map(|s| s.frame_count() as u64).sum()
    }

    pub fn expectation(&self) -> ScenarioExpectation {
        self.scenes.iter().map(|s| s.expectation()).sum()
    }
}

impl Iterator for SceneSequence {
    type Item = DepthFrame;

    fn next(&mut self) -> Option<DepthFrame> {
        while self.scene < self.scenes.len() {
            let r = &self.scenes[self.scene];
            if self.t < r.frame_count() {
                let mut f = r.render(self.t);
                self.t += 1;
                f.frame_index = self.next_index;
                f.timestamp_us = self.next_index * self.frame_period_us;
                self.next_index += 1;
                return Some(f);
            }
            self.scene += 1;
            self.t = 0;
        }
        None
    }
}
