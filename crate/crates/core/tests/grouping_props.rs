use lrt_core::grouping::{aggregate, extract_ref_grid, match_group, Coord, GroupingConfig};
use lrt_core::rng::SplitMix64;
use lrt_core::{Frame, VideoSequence};
use proptest::prelude::*;

/// Values on a coarse dyadic grid, so SSDs are exact and ties are common.
fn coarse_sequence(frames: usize, w: usize, h: usize, seed: u64) -> VideoSequence {
    let mut rng = SplitMix64::new(seed);
    VideoSequence::new(
        (0..frames)
            .map(|_| Frame::from_fn(w, h, 1, |_, _, _| rng.below(9) as f64 / 8.0).unwrap())
            .collect(),
    )
    .unwrap()
}

fn brute_force(seq: &VideoSequence, anchor: Coord, cfg: &GroupingConfig) -> Vec<Coord> {
    let n = seq.len() as isize;
    let half = (cfg.temporal_window / 2) as isize;
    let f = anchor.frame as isize;
    let start = (f - half).max(0);
    let end = (f + half).min(n - 1);
    let time = (end - start + 1) as usize;
    let offset = (f - start) as usize;
    let p = cfg.patch_size;
    let px = |fr: usize, r: usize, c: usize| seq.frames()[fr].get(0, r, c);
    let ssd = |c: Coord| {
        let (a0, c0) = (anchor.frame - offset, c.frame - offset);
        let mut s = 0.0;
        for t in 0..time {
            for dy in 0..p {
                for dx in 0..p {
                    let d = px(c0 + t, c.row + dy, c.col + dx) - px(a0 + t, anchor.row + dy, anchor.col + dx);
                    s += d * d;
                }
            }
        }
        s
    };
    let mut cands = Vec::new();
    for fr in start as usize..=end as usize {
        if fr < offset || fr - offset + time > seq.len() {
            continue;
        }
        for r in 0..=seq.height() - p {
            for c in 0..=seq.width() - p {
                let within = r.abs_diff(anchor.row) <= cfg.search_radius && c.abs_diff(anchor.col) <= cfg.search_radius;
                let coord = Coord::new(fr, r, c);
                if within && coord != anchor {
                    cands.push((ssd(coord), coord));
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![anchor];
    out.extend(cands.iter().take(cfg.group_size - 1).map(|c| c.1));
    let chosen = out.len();
    while out.len() < cfg.group_size {
        out.push(out[out.len() % chosen]);
    }
    out
}

fn config_strategy() -> impl Strategy<Value = GroupingConfig> {
    (2usize..4, 1usize..4, 1usize..4, prop::sample::select(vec![1usize, 3, 5]), 1usize..12).prop_map(
        |(patch_size, stride, search_radius, temporal_window, group_size)| GroupingConfig {
            patch_size,
            stride: stride.min(patch_size),
            search_radius,
            temporal_window,
            group_size,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matching_equals_exhaustive_search(cfg in config_strategy(), frames in 1usize..6, seed in any::<u64>()) {
        let seq = coarse_sequence(frames, 9, 8, seed);
        for anchor in extract_ref_grid(&seq, &cfg).unwrap() {
            let group = match_group(&seq, anchor, &cfg).unwrap();
            prop_assert_eq!(group.coords(), &brute_force(&seq, anchor, &cfg)[..]);
        }
    }

    #[test]
    fn distances_start_at_zero_and_grow(cfg in config_strategy(), seed in any::<u64>()) {
        let seq = coarse_sequence(4, 8, 8, seed);
        for anchor in extract_ref_grid(&seq, &cfg).unwrap() {
            let g = match_group(&seq, anchor, &cfg).unwrap();
            prop_assert_eq!(g.layout.distances[0], 0.0);
            if !g.layout.padded {
                prop_assert!(g.layout.distances.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn identity_restoration_is_lossless(cfg in config_strategy(), frames in 1usize..5, seed in any::<u64>()) {
        let seq = coarse_sequence(frames, 8, 7, seed);
        let groups: Vec<_> = extract_ref_grid(&seq, &cfg)
            .unwrap()
            .into_iter()
            .map(|a| match_group(&seq, a, &cfg).unwrap())
            .collect();
        let base = VideoSequence::new(seq.frames().iter().map(|_| Frame::filled(8, 7, 1, 0.5).unwrap()).collect()).unwrap();
        let out = aggregate(&groups, &base).unwrap();
        prop_assert_eq!(out.frames(), seq.frames());
    }

    #[test]
    fn matching_ignores_constant_offset(cfg in config_strategy(), seed in any::<u64>()) {
        let seq = coarse_sequence(3, 8, 8, seed);
        // half the grid step keeps the shifted values exact and inside [0, 1]
        let shifted = VideoSequence::new(
            seq.frames()
                .iter()
                .map(|f| Frame::new(8, 8, 1, f.data().iter().map(|v| v * 0.5 + 0.25).collect()).unwrap())
                .collect(),
        )
        .unwrap();
        let scaled = VideoSequence::new(
            seq.frames()
                .iter()
                .map(|f| Frame::new(8, 8, 1, f.data().iter().map(|v| v * 0.5).collect()).unwrap())
                .collect(),
        )
        .unwrap();
        for anchor in extract_ref_grid(&seq, &cfg).unwrap() {
            let a = match_group(&scaled, anchor, &cfg).unwrap();
            let b = match_group(&shifted, anchor, &cfg).unwrap();
            prop_assert_eq!(a.coords(), b.coords());
            prop_assert_eq!(&a.layout.distances, &b.layout.distances);
        }
    }
}
