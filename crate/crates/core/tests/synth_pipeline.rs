//! Synthetic scenes run through segmentation and the counter.

use doorcount_core::fsm::run_sequence;
use doorcount_core::store::{
    decode_pgm, read_analysis, AnalysisLog, AnalysisRecord, SnapshotStore,
};
use doorcount_core::{
    CounterState, CrossingAxis, RoiLayout, RoiState, RoiTracker, ScenarioKind, ScenarioSpec,
    SceneRenderer, SegmentationConfig,
};

const DIMS: (u32, u32) = (640, 480);

fn dominant_trace(spec: &ScenarioSpec, layout: &RoiLayout) -> Vec<RoiState> {
    let r = SceneRenderer::new(spec, layout, DIMS).unwrap();
    let mut tracker = RoiTracker::new(*layout, SegmentationConfig::default());
    r.frames().map(|f| tracker.push(&f).dominant).collect()
}

fn collapse(trace: &[RoiState]) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::new();
    for s in trace.iter().map(|s| s.as_u8()).filter(|&s| s != 0) {
        if out.last() != Some(&s) {
            out.push(s);
        }
    }
    out
}

#[test]
fn clean_scenes_follow_canonical_patterns() {
    for axis in [CrossingAxis::Vertical, CrossingAxis::Horizontal] {
        let layout = RoiLayout::equal_bands(DIMS.0, DIMS.1, axis);
        for kind in ScenarioKind::ALL {
            for speed in [3, 8, 17, 31] {
                let spec = ScenarioSpec {
                    kind,
                    speed_px_per_frame: speed,
                    ..Default::default()
                };
                let trace = dominant_trace(&spec, &layout);
                assert_eq!(
                    collapse(&trace),
                    kind.canonical_pattern(),
                    "{kind} at speed {speed} on {axis:?}: {trace:?}"
                );
            }
        }
    }
}

#[test]
fn clean_scenes_count_exactly() {
    let layout = RoiLayout::equal_bands(DIMS.0, DIMS.1, CrossingAxis::Vertical);
    for kind in ScenarioKind::ALL {
        let spec = ScenarioSpec {
            kind,
            start_offset_px: 15,
            lateral_offset_px: -100,
            ..Default::default()
        };
        let trace = dominant_trace(&spec, &layout);
        let (state, events) = run_sequence(CounterState::default(), &trace);
        let exp = kind.expectation();
        assert!(
            exp.matches_delta(&Default::default(), &state.counts),
            "{kind}: {:?}",
            state.counts
        );
        assert_eq!(events.len() as u64, exp.total());
    }
}

#[test]
fn analysis_log_of_entry_reads_3_2_1() {
    let layout = RoiLayout::equal_bands(DIMS.0, DIMS.1, CrossingAxis::Vertical);
    let spec = ScenarioSpec::default();
    let r = SceneRenderer::new(&spec, &layout, DIMS).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("analysis.csv");
    let mut log = AnalysisLog::create(&path).unwrap();
    let mut tracker = RoiTracker::new(layout, SegmentationConfig::default());
    for f in r.frames() {
        log.append(&AnalysisRecord::from(&tracker.push(&f)))
            .unwrap();
    }
    log.flush().unwrap();
    let records = read_analysis(&path).unwrap();
    assert_eq!(records.len() as u32, r.frame_count());
    let mut states: Vec<u8> = records.iter().map(|r| r.dominant).collect();
    states.dedup();
    assert_eq!(states, vec![0, 3, 2, 1, 0]);
}

#[test]
fn mid_crossing_snapshot_shows_bright_disc() {
    let layout = RoiLayout::equal_bands(DIMS.0, DIMS.1, CrossingAxis::Vertical);
    let spec = ScenarioSpec::default();
    let r = SceneRenderer::new(&spec, &layout, DIMS).unwrap();
    let t = r.frame_count() / 2;
    let (cx, cy) = r.disc_center(t).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = SnapshotStore::open(dir.path()).unwrap();
    store
        .save(&r.render(t), &SegmentationConfig::default(), 1)
        .unwrap();
    let img = decode_pgm(&store.load(1).unwrap().unwrap()).unwrap();
    assert_eq!(img.pixels.len(), 640 * 480);
    // head at 500 mm with a 1000 mm threshold renders as 128
    let lit = img.pixels.iter().filter(|&&p| p == 128).count();
    assert_eq!(lit, img.pixels.iter().filter(|&&p| p != 0).count());
    let area = std::f64::consts::PI * 40.0 * 40.0;
    assert!((lit as f64 - area).abs() / area < 0.02);
    assert_eq!(img.pixels[cy as usize * 640 + cx as usize], 128);
    assert_eq!(img.pixels[0], 0);
}
