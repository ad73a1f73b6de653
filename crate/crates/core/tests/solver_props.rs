use lrt_core::grouping::GroupingConfig;
use lrt_core::rng::SplitMix64;
use lrt_core::tensor::{fold, svt, unfold, Dims, Mode, Tensor3};
use lrt_core::{derain_sequence, solve_group, Frame, SolverConfig, VideoSequence};
use proptest::prelude::*;

fn rel_err(a: &Tensor3, b: &Tensor3) -> f64 {
    let num: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    num / b.frobenius_norm().max(1e-300)
}

fn group_strategy() -> impl Strategy<Value = Tensor3> {
    (1usize..=36, 1usize..=5, 1usize..=30, any::<u64>()).prop_map(|(d, t, k, seed)| {
        let mut rng = SplitMix64::new(seed);
        Tensor3::from_fn(Dims::new(d, t, k), |_, _, _| rng.next_f64())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn prox_only_runs_reach_the_closed_form(y in group_strategy(), tau in 0.05f64..2.0) {
        let cfg = SolverConfig {
            tau,
            lambda: 0.0,
            rho: 1.0,
            tol: 1e-6,
            max_iter: 200,
            use_weighted_nuclear: false,
            ..SolverConfig::default()
        };
        let (l, report) = solve_group(&y, &cfg).unwrap();
        let closed = fold(&svt(&unfold(&y, Mode::Group), tau, None).unwrap(), Mode::Group, y.dims()).unwrap();
        prop_assert!(report.iterations <= 200);
        prop_assert!(rel_err(&l, &closed) <= 1e-4 || closed.frobenius_norm() < 1e-9);
    }

    #[test]
    fn zero_weights_give_back_the_input(y in group_strategy(), rho in 0.1f64..10.0, weighted in any::<bool>()) {
        let cfg = SolverConfig { tau: 0.0, lambda: 0.0, rho, use_weighted_nuclear: weighted, ..SolverConfig::default() };
        let (l, _) = solve_group(&y, &cfg).unwrap();
        prop_assert!(rel_err(&l, &y) <= 1e-9);
    }

    #[test]
    fn converged_runs_satisfy_the_constraints(y in group_strategy(), tau in 0.0f64..0.5, lambda in 0.0f64..0.1) {
        prop_assume!(y.dims().time >= 2);
        let cfg = SolverConfig { tau, lambda, max_iter: 300, ..SolverConfig::default() };
        let (l, report) = solve_group(&y, &cfg).unwrap();
        if report.converged {
            let bound = cfg.tol * l.frobenius_norm().max(1.0);
            prop_assert!(report.lowrank_gap < bound, "{} vs {}", report.lowrank_gap, bound);
            prop_assert!(report.gradient_gap < bound, "{} vs {}", report.gradient_gap, bound);
        }
        prop_assert_eq!(report.nuclear_prox_calls[0], 0);
        prop_assert_eq!(report.nuclear_prox_calls[1], 0);
        prop_assert_eq!(report.nuclear_prox_calls[2], report.iterations);
    }
}

#[test]
fn low_rank_group_is_recovered_from_noise() {
    let mut rng = SplitMix64::new(5);
    let dims = Dims::new(36, 5, 30);
    let basis: Vec<f64> = (0..dims.pixels * dims.time).map(|_| rng.uniform(0.2, 0.8)).collect();
    let gains: Vec<f64> = (0..dims.group).map(|_| rng.uniform(0.8, 1.2)).collect();
    let clean = Tensor3::from_fn(dims, |i, t, k| basis[i + dims.pixels * t] * gains[k]);
    let noisy = Tensor3::from_fn(dims, |i, t, k| clean.get(i, t, k) + 0.1 * rng.uniform(-1.0, 1.0));
    let (restored, report) = solve_group(&noisy, &SolverConfig { lambda: 0.0, ..SolverConfig::default() }).unwrap();
    assert!(report.converged);
    let before = rel_err(&noisy, &clean);
    let after = rel_err(&restored, &clean);
    assert!(after < 0.5 * before, "{before} -> {after}");
}

#[test]
fn derain_output_stays_in_range() {
    let mut rng = SplitMix64::new(8);
    let frames = (0..4)
        .map(|_| Frame::from_fn(14, 12, 3, |_, _, _| if rng.below(4) == 0 { 1.0 } else { rng.next_f64() }).unwrap())
        .collect();
    let seq = VideoSequence::new(frames).unwrap();
    let g = GroupingConfig { patch_size: 4, stride: 3, search_radius: 3, temporal_window: 3, group_size: 6 };
    let (out, report) = derain_sequence(&seq, &g, &SolverConfig { tau: 0.3, ..SolverConfig::default() }).unwrap();
    assert_eq!(out.channels(), 3);
    assert_eq!(report.group_solves, report.groups_per_pass * 3 * 2);
    assert!(out.frames().iter().all(|f| f.data().iter().all(|v| (0.0..=1.0).contains(v))));
}
