//! Depth-frame segmentation and ROI state extraction.
//!
//! A frame is reduced to a single "dominant" state per frame: the index of
//! the region of interest holding the most foreground (near-camera) pixels,
//! or [`RoiState::Idle`] when no region passes its area floor.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// One overhead depth capture. Depth samples are millimeters, row-major;
/// `0` means the sensor returned nothing for that pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub frame_index: u64,
    pub timestamp_us: u64,
    pub depth: Vec<u16>,
}

impl DepthFrame {
    pub fn new(
        width: u32,
        height: u32,
        frame_index: u64,
        timestamp_us: u64,
        depth: Vec<u16>,
    ) -> Result<Self, ConfigError> {
        let expected = width as usize * height as usize;
        if depth.len() != expected {
            return Err(ConfigError::FrameSize {
                expected,
                actual: depth.len(),
            });
        }
        Ok(Self {
            width,
            height,
            frame_index,
            timestamp_us,
            depth,
        })
    }

    /// A frame filled with a single depth value.
    pub fn filled(
        width: u32,
        height: u32,
        frame_index: u64,
        timestamp_us: u64,
        value: u16,
    ) -> Self {
        Self {
            width,
            height,
            frame_index,
            timestamp_us,
            depth: vec![value; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn at(&self, x: u32, y: u32) -> u16 {
        self.depth[y as usize * self.width as usize + x as usize]
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Pixels at or nearer than this depth are foreground.
    pub threshold_mm: u16,
    /// Fraction of an ROI's area that must be foreground before the ROI can
    /// become dominant.
    pub min_area_frac: f64,
    /// Consecutive frames a new raw state must persist before it is published.
    pub debounce_frames: u32,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            threshold_mm: 1000,
            min_area_frac: 0.01,
            debounce_frames: 1,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threshold_mm == 0 {
            return Err(ConfigError::Invalid("threshold_mm must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.min_area_frac) {
            return Err(ConfigError::Invalid(format!(
                "min_area_frac must be in [0, 1], got {}",
                self.min_area_frac
            )));
        }
        if self.debounce_frames == 0 {
            return Err(ConfigError::Invalid("debounce_frames must be >= 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn is_foreground(&self, depth_mm: u16) -> bool {
        depth_mm != 0 && depth_mm <= self.threshold_mm
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    fn x_end(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    fn y_end(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        (self.x as u64) < other.x_end()
            && (other.x as u64) < self.x_end()
            && (self.y as u64) < other.y_end()
            && (other.y as u64) < self.y_end()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && (x as u64) < self.x_end() && y >= self.y && (y as u64) < self.y_end()
    }

    /// Twice the center coordinate along `axis`, kept integral.
    fn center2(&self, axis: CrossingAxis) -> u64 {
        match axis {
            CrossingAxis::Horizontal => 2 * self.x as u64 + self.w as u64,
            CrossingAxis::Vertical => 2 * self.y as u64 + self.h as u64,
        }
    }

    /// `[start, end)` extent along `axis`.
    pub fn span(&self, axis: CrossingAxis) -> (u32, u32) {
        match axis {
            CrossingAxis::Horizontal => (self.x, self.x + self.w),
            CrossingAxis::Vertical => (self.y, self.y + self.h),
        }
    }
}

impl std::str::FromStr for Rect {
    type Err = ConfigError;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || ConfigError::Invalid(format!("expected x,y,w,h, got {s:?}"));
        if parts.len() != 4 {
            return Err(bad());
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| bad())?;
        }
        Ok(Rect::new(v[0], v[1], v[2], v[3]))
    }
}

impl std::fmt::Display for Rect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// Direction people walk through the doorway, in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingAxis {
    /// Walking along x; bands are vertical stripes.
    Horizontal,
    /// Walking along y; bands are horizontal stripes.
    #[default]
    Vertical,
}

impl std::str::FromStr for CrossingAxis {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "horizontal" => Ok(Self::Horizontal),
            "vertical" => Ok(Self::Vertical),
            other => Err(ConfigError::Invalid(format!(
                "crossing axis must be horizontal or vertical, got {other:?}"
            ))),
        }
    }
}

/// Three disjoint detection bands. `rois[0]` faces inside, `rois[2]` outside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiLayout {
    pub rois: [Rect; 3],
    pub crossing_axis: CrossingAxis,
}

impl RoiLayout {
    /// Checks bounds, disjointness and center ordering against a frame size.
    pub fn new(
        rois: [Rect; 3],
        crossing_axis: CrossingAxis,
        width: u32,
        height: u32,
    ) -> Result<Self, ConfigError> {
        let layout = Self {
            rois,
            crossing_axis,
        };
        layout.validate(width, height)?;
        Ok(layout)
    }

    /// Three equal bands covering the whole frame, stacked along the axis.
    /// Leftover pixels (when the frame does not divide by three) go to the
    /// middle band.
    pub fn equal_bands(width: u32, height: u32, crossing_axis: CrossingAxis) -> Self {
        let len = match crossing_axis {
            CrossingAxis::Horizontal => width,
            CrossingAxis::Vertical => height,
        };
        let band = len / 3;
        let mid = len - 2 * band;
        let spans = [(0, band), (band, mid), (band + mid, band)];
        let rois = spans.map(|(start, size)| match crossing_axis {
            CrossingAxis::Horizontal => Rect::new(start, 0, size, height),
            CrossingAxis::Vertical => Rect::new(0, start, width, size),
        });
        Self {
            rois,
            crossing_axis,
        }
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), ConfigError> {
        for (i, r) in self.rois.iter().enumerate() {
            if r.w == 0 || r.h == 0 {
                return Err(ConfigError::Layout(format!("ROI {} is empty", i + 1)));
            }
            if r.x_end() > width as u64 || r.y_end() > height as u64 {
                return Err(ConfigError::Layout(format!(
                    "ROI {} ({r}) exceeds frame {width}x{height}",
                    i + 1
                )));
            }
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if self.rois[i].intersects(&self.rois[j]) {
                    return Err(ConfigError::Layout(format!(
                        "ROI {} and ROI {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let c = self.rois.map(|r| r.center2(self.crossing_axis));
        if !(c[0] < c[1] && c[1] < c[2]) {
            return Err(ConfigError::Layout(
                "ROI centers must be strictly ordered 1 < 2 < 3 along the crossing axis".into(),
            ));
        }
        Ok(())
    }

    pub fn areas(&self) -> [u64; 3] {
        self.rois.map(|r| r.area())
    }
}

/// Published per-frame state: which ROI holds the person, or idle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum RoiState {
    #[default]
    Idle = 0,
    Roi1 = 1,
    Roi2 = 2,
    Roi3 = 3,
}

impl RoiState {
    pub const ALL: [RoiState; 4] = [Self::Idle, Self::Roi1, Self::Roi2, Self::Roi3];

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// State for the ROI at zero-based position `i`.
    fn from_roi_index(i: usize) -> Self {
        match i {
            0 => Self::Roi1,
            1 => Self::Roi2,
            _ => Self::Roi3,
        }
    }
}

impl TryFrom<u8> for RoiState {
    type Error = ConfigError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Self::Idle),
            1 => Ok(Self::Roi1),
            2 => Ok(Self::Roi2),
            3 => Ok(Self::Roi3),
            _ => Err(ConfigError::Invalid(format!(
                "state must be 0..=3, got {v}"
            ))),
        }
    }
}

impl std::fmt::Display for RoiState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoiActivation {
    pub frame_index: u64,
    pub fg_px: [u32; 3],
    /// Debounced state handed to the counter.
    pub dominant: RoiState,
    /// Undebounced dominant state of this frame.
    pub raw: RoiState,
    /// How many consecutive frames (including this one) produced `raw`.
    pub raw_run: u32,
}

/// Row-major foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

pub fn segment_foreground(frame: &DepthFrame, cfg: &SegmentationConfig) -> Mask {
    Mask {
        width: frame.width,
        height: frame.height,
        bits: frame.depth.iter().map(|&d| cfg.is_foreground(d)).collect(),
    }
}

/// Maps foreground depth to brightness (nearer is brighter); background is 0.
pub fn render_grayscale(frame: &DepthFrame, cfg: &SegmentationConfig) -> GrayImage {
    let t = cfg.threshold_mm as f64;
    let pixels = frame
        .depth
        .iter()
        .map(|&d| {
            if cfg.is_foreground(d) {
                (255.0 * (1.0 - d as f64 / t)).round() as u8
            } else {
                0
            }
        })
        .collect();
    GrayImage {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

/// Foreground pixels inside each ROI. The layout must already be validated
/// against the mask dimensions.
pub fn roi_counts(mask: &Mask, layout: &RoiLayout) -> [u32; 3] {
    let w = mask.width as usize;
    layout.rois.map(|r| {
        let mut n = 0u32;
        for y in r.y..r.y + r.h {
            let row = y as usize * w;
            let line = &mask.bits[row + r.x as usize..row + (r.x + r.w) as usize];
            n += line.iter().filter(|&&b| b).count() as u32;
        }
        n
    })
}

/// Counts foreground pixels per ROI directly from depth, touching only ROI
/// pixels. Equivalent to `roi_counts(&segment_foreground(..))`.
pub fn roi_counts_from_depth(
    frame: &DepthFrame,
    layout: &RoiLayout,
    cfg: &SegmentationConfig,
) -> [u32; 3] {
    let w = frame.width as usize;
    let t = cfg.threshold_mm;
    layout.rois.map(|r| {
        let mut n = 0u32;
        for y in r.y..r.y + r.h {
            let row = y as usize * w;
            let line = &frame.depth[row + r.x as usize..row + (r.x + r.w) as usize];
            // (d - 1) < t  <=>  0 < d <= t, with d = 0 wrapping to u16::MAX
            n += line.iter().filter(|&&d| d.wrapping_sub(1) < t).count() as u32;
        }
        n
    })
}

/// Picks the ROI with the most foreground among those meeting the area floor.
/// Ties keep `prev` when it is one of the tied maxima, otherwise the lowest id.
pub fn dominant_roi(
    counts: [u32; 3],
    layout: &RoiLayout,
    cfg: &SegmentationConfig,
    prev: RoiState,
) -> RoiState {
    dominant_with_areas(counts, layout.areas(), cfg.min_area_frac, prev)
}

pub(crate) fn dominant_with_areas(
    counts: [u32; 3],
    areas: [u64; 3],
    min_area_frac: f64,
    prev: RoiState,
) -> RoiState {
    let eligible: [bool; 3] =
        std::array::from_fn(|i| counts[i] as f64 >= min_area_frac * areas[i] as f64);
    let Some(best) = (0..3).filter(|&i| eligible[i]).map(|i| counts[i]).max() else {
        return RoiState::Idle;
    };
    let tied = (0..3).filter(|&i| eligible[i] && counts[i] == best);
    let mut first = None;
    for i in tied {
        let s = RoiState::from_roi_index(i);
        if s == prev {
            return s;
        }
        first.get_or_insert(s);
    }
    first.unwrap_or(RoiState::Idle)
}

/// One pipeline step: segmentation, ROI counting, dominant selection and
/// debouncing. `prev` is the activation of the previous frame in the same
/// stream, `None` for the first frame.
pub fn process_frame(
    frame: &DepthFrame,
    layout: &RoiLayout,
    cfg: &SegmentationConfig,
    prev: Option<&RoiActivation>,
) -> RoiActivation {
    debug_assert!(prev.is_none_or(|p| frame.frame_index > p.frame_index));
    let fg_px = roi_counts_from_depth(frame, layout, cfg);
    let prev_raw = prev.map_or(RoiState::Idle, |p| p.raw);
    let raw = dominant_roi(fg_px, layout, cfg, prev_raw);
    let (dominant, raw_run) = debounce(prev, raw, cfg.debounce_frames);
    RoiActivation {
        frame_index: frame.frame_index,
        fg_px,
        dominant,
        raw,
        raw_run,
    }
}

fn debounce(prev: Option<&RoiActivation>, raw: RoiState, frames: u32) -> (RoiState, u32) {
    let Some(prev) = prev else {
        // nothing published yet: adopt the first observation
        return (raw, 1);
    };
    let run = if prev.raw == raw {
        prev.raw_run.saturating_add(1)
    } else {
        1
    };
    let dominant = if raw != prev.dominant && run >= frames {
        raw
    } else {
        prev.dominant
    };
    (dominant, run)
}

/// Stateful wrapper around [`process_frame`] for a single stream.
#[derive(Debug, Clone)]
pub struct RoiTracker {
    layout: RoiLayout,
    cfg: SegmentationConfig,
    prev: Option<RoiActivation>,
}

impl RoiTracker {
    pub fn new(layout: RoiLayout, cfg: SegmentationConfig) -> Self {
        Self {
            layout,
            cfg,
            prev: None,
        }
    }

    pub fn push(&mut self, frame: &DepthFrame) -> RoiActivation {
        let act = process_frame(frame, &self.layout, &self.cfg, self.prev.as_ref());
        self.prev = Some(act);
        act
    }

    pub fn layout(&self) -> &RoiLayout {
        &self.layout
    }

    pub fn config(&self) -> &SegmentationConfig {
        &self.cfg
    }
}
