//! Service settings from command-line flags and `key = value` config files.
//!
//! Config file keys are the long flag names without the leading dashes,
//! e.g. `threshold-mm = 900`. Boolean flags take `true`/`false`. Flags given
//! on the command line win over the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, ValueEnum};
use doorcount_core::{CounterConfig, CrossingAxis, Rect, RoiLayout, SegmentationConfig};

#[derive(Debug, thiserror::Error)]
pub enum UsageError {
    #[error("{0}")]
    Invalid(String),
    #[error("config file {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config file {path} line {line}: {reason}")]
    ConfigLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Synthetic,
    Replay,
}

/// Every configurable knob shared by `serve` and `count`.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// HTTP listen address
    #[arg(long, value_name = "HOST:PORT")]
    pub listen: Option<SocketAddr>,
    /// Frame source
    #[arg(long, value_enum)]
    pub source: Option<SourceKind>,
    /// DRF1 replay file (implies --source replay)
    #[arg(long, value_name = "PATH")]
    pub replay_file: Option<PathBuf>,
    /// Foreground depth threshold in millimeters
    #[arg(long)]
    pub threshold_mm: Option<u16>,
    /// Fraction of an ROI that must be foreground for it to count
    #[arg(long)]
    pub min_area_frac: Option<f64>,
    /// Frames a new ROI state must persist before it is published
    #[arg(long)]
    pub debounce_frames: Option<u32>,
    /// Idle frames after which an unfinished crossing is forgotten
    #[arg(long)]
    pub idle_timeout_frames: Option<u32>,
    /// Directory for analysis/event logs and snapshots
    #[arg(long, value_name = "DIR")]
    pub log_dir: Option<PathBuf>,
    /// Feed frames at their recorded rate
    #[arg(long, conflicts_with = "unpaced")]
    pub paced: bool,
    /// Feed frames as fast as they can be processed
    #[arg(long)]
    pub unpaced: bool,
    /// ROI 1 (inside band) as x,y,w,h
    #[arg(long, value_name = "X,Y,W,H")]
    pub roi1: Option<Rect>,
    /// ROI 2 (middle band) as x,y,w,h
    #[arg(long, value_name = "X,Y,W,H")]
    pub roi2: Option<Rect>,
    /// ROI 3 (outside band) as x,y,w,h
    #[arg(long, value_name = "X,Y,W,H")]
    pub roi3: Option<Rect>,
    #[arg(long)]
    pub crossing_axis: Option<CrossingAxis>,
    /// People inside when counting starts
    #[arg(long, allow_negative_numbers = true)]
    pub initial_occupancy: Option<i64>,
    /// Synthetic source frame width
    #[arg(long)]
    pub width: Option<u32>,
    /// Synthetic source frame height
    #[arg(long)]
    pub height: Option<u32>,
    /// Synthetic source: scenarios generated per kind
    #[arg(long)]
    pub synthetic_per_kind: Option<u32>,
    /// Synthetic source seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct SettingsLine {
    #[command(flatten)]
    settings: Settings,
}

impl Settings {
    /// `Some(true)` for paced, `Some(false)` for unpaced.
    pub fn pacing(&self) -> Option<bool> {
        match (self.paced, self.unpaced) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }

    pub fn parse_config(text: &str, path: &Path) -> Result<Settings, UsageError> {
        let mut merged = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| UsageError::ConfigLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let args: Vec<String> = match (key, value) {
                ("paced" | "unpaced", "true") => vec![format!("--{key}")],
                ("paced" | "unpaced", "false") => vec![],
                ("paced" | "unpaced", other) => {
                    return Err(err(format!("{key} must be true or false, got {other:?}")))
                }
                _ => vec![format!("--{key}"), value.to_string()],
            };
            let parsed = SettingsLine::try_parse_from(args)
                .map_err(|e| err(e.kind().to_string() + ": " + first_line(&e.to_string())))?;
            merged = parsed.settings.or(merged);
        }
        Ok(merged)
    }

    pub fn load_config(path: &Path) -> Result<Settings, UsageError> {
        let text = std::fs::read_to_string(path).map_err(|source| UsageError::ConfigRead {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_config(&text, path)
    }

    /// Field-wise: values set in `self` win, the rest come from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        let (paced, unpaced) = match self.pacing().or(fallback.pacing()) {
            Some(true) => (true, false),
            Some(false) => (false, true),
            None => (false, false),
        };
        Settings {
            listen: self.listen.or(fallback.listen),
            source: self.source.or(fallback.source),
            replay_file: self.replay_file.or(fallback.replay_file),
            threshold_mm: self.threshold_mm.or(fallback.threshold_mm),
            min_area_frac: self.min_area_frac.or(fallback.min_area_frac),
            debounce_frames: self.debounce_frames.or(fallback.debounce_frames),
            idle_timeout_frames: self.idle_timeout_frames.or(fallback.idle_timeout_frames),
            log_dir: self.log_dir.or(fallback.log_dir),
            paced,
            unpaced,
            roi1: self.roi1.or(fallback.roi1),
            roi2: self.roi2.or(fallback.roi2),
            roi3: self.roi3.or(fallback.roi3),
            crossing_axis: self.crossing_axis.or(fallback.crossing_axis),
            initial_occupancy: self.initial_occupancy.or(fallback.initial_occupancy),
            width: self.width.or(fallback.width),
            height: self.height.or(fallback.height),
            synthetic_per_kind: self.synthetic_per_kind.or(fallback.synthetic_per_kind),
            seed: self.seed.or(fallback.seed),
        }
    }

    /// Command-line settings layered over an optional config file.
    pub fn with_config_file(self, config: Option<&Path>) -> Result<Settings, UsageError> {
        match config {
            Some(p) => Ok(self.or(Self::load_config(p)?)),
            None => Ok(self),
        }
    }

    pub fn source_choice(&self) -> Result<SourceChoice, UsageError> {
        match (self.source, &self.replay_file) {
            (Some(SourceKind::Synthetic), Some(_)) => Err(UsageError::Invalid(
                "--source synthetic contradicts --replay-file".into(),
            )),
            (Some(SourceKind::Replay), None) => Err(UsageError::Invalid(
                "--source replay needs --replay-file".into(),
            )),
            (_, Some(p)) => Ok(SourceChoice::Replay(p.clone())),
            (Some(SourceKind::Synthetic), None) | (None, None) => Ok(SourceChoice::Synthetic),
        }
    }

    pub fn segmentation(&self) -> Result<SegmentationConfig, UsageError> {
        let d = SegmentationConfig::default();
        let cfg = SegmentationConfig {
            threshold_mm: self.threshold_mm.unwrap_or(d.threshold_mm),
            min_area_frac: self.min_area_frac.unwrap_or(d.min_area_frac),
            debounce_frames: self.debounce_frames.unwrap_or(d.debounce_frames),
        };
        cfg.validate()
            .map_err(|e| UsageError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn counter(&self) -> CounterConfig {
        let d = CounterConfig::default();
        CounterConfig {
            idle_timeout_frames: self.idle_timeout_frames.unwrap_or(d.idle_timeout_frames),
            initial_occupancy: self.initial_occupancy.unwrap_or(d.initial_occupancy),
        }
    }

    /// Explicit ROIs when all three are given, otherwise equal bands.
    pub fn layout(&self, width: u32, height: u32) -> Result<RoiLayout, UsageError> {
        let axis = self.crossing_axis.unwrap_or_default();
        let layout = match (self.roi1, self.roi2, self.roi3) {
            (Some(a), Some(b), Some(c)) => RoiLayout {
                rois: [a, b, c],
                crossing_axis: axis,
            },
            (None, None, None) => RoiLayout::equal_bands(width, height, axis),
            _ => {
                return Err(UsageError::Invalid(
                    "--roi1, --roi2 and --roi3 must be given together".into(),
                ))
            }
        };
        layout
            .validate(width, height)
            .map_err(|e| UsageError::Invalid(e.to_string()))?;
        Ok(layout)
    }

    pub fn synthetic_dims(&self) -> (u32, u32) {
        (self.width.unwrap_or(640), self.height.unwrap_or(480))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceChoice {
    Synthetic,
    Replay(PathBuf),
}

fn first_line(s: &str) -> &str {
    s.lines().next().unwrap_or(s).trim_start_matches("error: ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Settings, UsageError> {
        Settings::parse_config(text, Path::new("test.conf"))
    }

    #[test]
    fn config_keys_match_flags() {
        let s = parse(
            "# comment\n\
             threshold-mm = 900\n\
             min-area-frac = 0.02\n\
             roi1 = 0,0,10,10\n\
             crossing-axis = horizontal\n\
             initial-occupancy = -3\n\
             unpaced = true\n\
             listen = 127.0.0.1:9000\n",
        )
        .unwrap();
        assert_eq!(s.threshold_mm, Some(900));
        assert_eq!(s.min_area_frac, Some(0.02));
        assert_eq!(s.roi1, Some(Rect::new(0, 0, 10, 10)));
        assert_eq!(s.crossing_axis, Some(CrossingAxis::Horizontal));
        assert_eq!(s.initial_occupancy, Some(-3));
        assert_eq!(s.pacing(), Some(false));
        assert_eq!(s.listen.unwrap().port(), 9000);
    }

    #[test]
    fn bad_config_lines() {
        assert!(matches!(
            parse("bogus-key = 1"),
            Err(UsageError::ConfigLine { line: 1, .. })
        ));
        assert!(matches!(
            parse("\nthreshold-mm = lots"),
            Err(UsageError::ConfigLine { line: 2, .. })
        ));
        assert!(parse("threshold-mm").is_err());
        assert!(parse("paced = maybe").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = parse("threshold-mm = 900\ndebounce-frames = 2\npaced = true").unwrap();
        let cli = Settings {
            threshold_mm: Some(1200),
            unpaced: true,
            ..Default::default()
        };
        let s = cli.or(file);
        assert_eq!(s.threshold_mm, Some(1200));
        assert_eq!(s.debounce_frames, Some(2));
        assert_eq!(s.pacing(), Some(false));
    }

    #[test]
    fn source_resolution() {
        let both = Settings {
            source: Some(SourceKind::Synthetic),
            replay_file: Some("x.drf".into()),
            ..Default::default()
        };
        assert!(both.source_choice().is_err());
        let replay_without_file = Settings {
            source: Some(SourceKind::Replay),
            ..Default::default()
        };
        assert!(replay_without_file.source_choice().is_err());
        let implied = Settings {
            replay_file: Some("x.drf".into()),
            ..Default::default()
        };
        assert_eq!(
            implied.source_choice().unwrap(),
            SourceChoice::Replay("x.drf".into())
        );
        assert_eq!(
            Settings::default().source_choice().unwrap(),
            SourceChoice::Synthetic
        );
    }

    #[test]
    fn layout_and_knobs() {
        let s = Settings::default();
        assert_eq!(
            s.layout(640, 480).unwrap(),
            RoiLayout::equal_bands(640, 480, CrossingAxis::Vertical)
        );
        let partial = Settings {
            roi1: Some(Rect::new(0, 0, 1, 1)),
            ..Default::default()
        };
        assert!(partial.layout(640, 480).is_err());
        let bad = Settings {
            min_area_frac: Some(2.0),
            ..Default::default()
        };
        assert!(bad.segmentation().is_err());
        assert_eq!(s.counter(), CounterConfig::default());
    }
}
