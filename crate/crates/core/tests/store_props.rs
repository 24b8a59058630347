use doorcount_core::fsm::run_sequence;
use doorcount_core::store::{build_report, read_replay, write_replay, ReplayHeader};
use doorcount_core::{CounterState, DepthFrame, RoiState};
use proptest::prelude::*;

fn frames_strategy() -> impl Strategy<Value = Vec<DepthFrame>> {
    (1u32..6, 1u32..6, 1usize..5).prop_flat_map(|(w, h, n)| {
        let px = (w * h) as usize;
        (
            prop::collection::vec(
                prop::collection::vec(
                    prop_oneof![Just(0u16), Just(1u16), Just(u16::MAX), any::<u16>()],
                    px,
                ),
                n,
            ),
            prop::collection::vec((1u64..1000, any::<u64>()), n),
        )
            .prop_map(move |(depths, stamps)| {
                let mut index = 0u64;
                depths
                    .into_iter()
                    .zip(stamps)
                    .map(|(depth, (step, ts))| {
                        index += step;
                        DepthFrame::new(w, h, index, ts, depth).unwrap()
                    })
                    .collect()
            })
    })
}

proptest! {
    #[test]
    fn replay_round_trip_is_bit_exact(frames in frames_strategy()) {
        let bytes = write_replay(&frames, Vec::new()).unwrap();
        let header = ReplayHeader { width: frames[0].width, height: frames[0].height, frame_count: frames.len() as u32 };
        prop_assert_eq!(bytes.len() as u64, header.file_len());
        let back = read_replay(&bytes[..]).unwrap();
        prop_assert_eq!(&back, &frames);
        prop_assert_eq!(write_replay(&back, Vec::new()).unwrap(), bytes);
    }

    #[test]
    fn any_truncation_is_rejected(frames in frames_strategy(), cut in any::<prop::sample::Index>()) {
        let bytes = write_replay(&frames, Vec::new()).unwrap();
        let len = cut.index(bytes.len());
        prop_assert!(read_replay(&bytes[..len]).is_err());
    }

    #[test]
    fn report_totals_equal_counter_deltas(seq in prop::collection::vec(0u8..4, 0..300), bucket in 1u64..50) {
        let states: Vec<RoiState> = seq.iter().map(|&b| RoiState::try_from(b).unwrap()).collect();
        let (state, events) = run_sequence(CounterState::default(), &states);
        let report = build_report(&events, 0, seq.len() as u64, bucket).unwrap();
        prop_assert_eq!(report.totals.entries, state.counts.entries);
        prop_assert_eq!(report.totals.exits, state.counts.exits);
        prop_assert_eq!(report.totals.regret_enter, state.counts.regret_enter);
        prop_assert_eq!(report.totals.regret_exit, state.counts.regret_exit);
        let summed: u64 = report.rows.iter().map(|r| r.entries + r.exits + r.regret_enter + r.regret_exit).sum();
        prop_assert_eq!(summed, state.counts.total_events());
        if let Some(last) = report.rows.last() {
            prop_assert_eq!(last.occupancy, state.counts.occupancy);
        }
    }
}

#[test]
fn extreme_depths_survive() {
    let f = DepthFrame::new(3, 1, 0, 0, vec![1, 65535, 0]).unwrap();
    let bytes = write_replay(std::slice::from_ref(&f), Vec::new()).unwrap();
    assert_eq!(read_replay(&bytes[..]).unwrap(), vec![f]);
}
