//! Frame sources: where depth frames come from.
//!
//! A camera backend would implement [`FrameSource`] as well; the service
//! only relies on the trait contract.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use doorcount_core::store::{open_replay, ReplayReader};
use doorcount_core::synth::DEFAULT_FRAME_PERIOD_US;
use doorcount_core::{
    suite_specs, DepthFrame, ReplayError, RoiLayout, ScenarioSpec, SceneRenderer, SceneSequence,
    SynthError,
};

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Yields frames with strictly increasing `frame_index`, then `Ok(None)`
/// forever once the stream has ended.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Result<Option<DepthFrame>, SourceError>;

    /// Frame size, known before the first frame.
    fn dims(&self) -> (u32, u32);

    /// Human-readable description for status output.
    fn describe(&self) -> String;
}

pub struct ReplaySource {
    path: PathBuf,
    reader: ReplayReader<BufReader<File>>,
    done: bool,
}

impl ReplaySource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SourceError> {
        let path = path.as_ref().to_path_buf();
        let reader = open_replay(&path)?;
        Ok(Self {
            path,
            reader,
            done: false,
        })
    }

    pub fn frame_count(&self) -> u32 {
        self.reader.header().frame_count
    }
}

impl FrameSource for ReplaySource {
    fn next_frame(&mut self) -> Result<Option<DepthFrame>, SourceError> {
        if self.done {
            return Ok(None);
        }
        match self.reader.next() {
            Some(Ok(f)) => Ok(Some(f)),
            Some(Err(e)) => {
                self.done = true;
                Err(e.into())
            }
            None => {
                self.done = true;
                Ok(None)
            }
        }
    }

    fn dims(&self) -> (u32, u32) {
        let h = self.reader.header();
        (h.width, h.height)
    }

    fn describe(&self) -> String {
        format!("replay:{}", self.path.display())
    }
}

/// Back-to-back synthetic scenarios, rendered lazily.
pub struct SyntheticSource {
    seq: SceneSequence,
    dims: (u32, u32),
    label: String,
}

impl SyntheticSource {
    pub fn new(scenes: Vec<SceneRenderer>, dims: (u32, u32), label: impl Into<String>) -> Self {
        Self {
            seq: SceneSequence::new(scenes, DEFAULT_FRAME_PERIOD_US),
            dims,
            label: label.into(),
        }
    }

    /// A suite with `per_kind` scenarios of every kind.
    pub fn suite(
        per_kind: u32,
        seed: u64,
        base: &ScenarioSpec,
        layout: &RoiLayout,
        dims: (u32, u32),
    ) -> Result<Self, SourceError> {
        let scenes = suite_specs(per_kind, base, seed, dims, layout.crossing_axis)?
            .iter()
            .map(|s| SceneRenderer::new(s, layout, dims))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(
            scenes,
            dims,
            format!("synthetic:suite per_kind={per_kind} seed={seed}"),
        ))
    }

    pub fn total_frames(&self) -> u64 {
        self.seq.total_frames()
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<DepthFrame>, SourceError> {
        Ok(self.seq.next())
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

/// In-memory frames; mostly for tests and tools.
pub struct VecSource {
    frames: std::vec::IntoIter<DepthFrame>,
    dims: (u32, u32),
}

impl VecSource {
    pub fn new(frames: Vec<DepthFrame>) -> Self {
        let dims = frames.first().map_or((0, 0), |f| f.dims());
        Self {
            frames: frames.into_iter(),
            dims,
        }
    }
}

impl FrameSource for VecSource {
    fn next_frame(&mut self) -> Result<Option<DepthFrame>, SourceError> {
        Ok(self.frames.next())
    }

    fn dims(&self) -> (u32, u32) {
        self.dims
    }

    fn describe(&self) -> String {
        "memory".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use doorcount_core::store::write_replay_file;
    use doorcount_core::CrossingAxis;

    #[test]
    fn replay_source_ends_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.drf");
        let frames: Vec<_> = (0..3)
            .map(|i| DepthFrame::filled(4, 2, i, i * 10, 700))
            .collect();
        write_replay_file(&frames, &path).unwrap();
        let mut src = ReplaySource::open(&path).unwrap();
        assert_eq!(src.dims(), (4, 2));
        assert_eq!(src.frame_count(), 3);
        for want in &frames {
            assert_eq!(src.next_frame().unwrap().as_ref(), Some(want));
        }
        assert!(src.next_frame().unwrap().is_none());
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn truncated_replay_errors_once() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.drf");
        let frames: Vec<_> = (0..3)
            .map(|i| DepthFrame::filled(4, 2, i, i, 700))
            .collect();
        write_replay_file(&frames, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let mut src = ReplaySource::open(&path).unwrap();
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().unwrap().is_some());
        assert!(src.next_frame().is_err());
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn synthetic_suite_indices_increase() {
        let dims = (160, 120);
        let layout = RoiLayout::equal_bands(dims.0, dims.1, CrossingAxis::Vertical);
        let mut src =
            SyntheticSource::suite(1, 3, &ScenarioSpec::default(), &layout, dims).unwrap();
        let total = src.total_frames();
        let mut n = 0;
        let mut last = None;
        while let Some(f) = src.next_frame().unwrap() {
            assert!(last.is_none_or(|l| f.frame_index > l));
            last = Some(f.frame_index);
            n += 1;
        }
        assert_eq!(n, total);
    }
}
