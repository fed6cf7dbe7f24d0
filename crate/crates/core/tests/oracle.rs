use proptest::prelude::*;

use mpcut::engine;
use mpcut::graph::generate_random_regular;
use mpcut::oracle::{brute_force, sanity_bound, sanity_bound_exact};
use mpcut::rounding::{balance_repair, clip, evaluate, randomized_round, sign_round};
use mpcut::wave::{make_wave_schedule, WaveConfig};
use mpcut::{Mode, RegularGraph};

#[test]
fn known_optima() {
    let c4 = RegularGraph::cycle(4).unwrap();
    let mc = brute_force(&c4, Mode::MaxCut).unwrap();
    assert_eq!(mc.value, 1.0);
    assert_eq!(mc.witness, vec![1, -1, 1, -1]);
    assert_eq!(brute_force(&c4, Mode::MinBis).unwrap().value, 0.0);
    assert_eq!(brute_force(&RegularGraph::complete(4).unwrap(), Mode::MaxCut).unwrap().value, 0.5);
}

#[test]
fn witness_attains_the_optimum() {
    let g = generate_random_regular(12, 3, 2).unwrap();
    for mode in [Mode::MaxCut, Mode::MinBis] {
        let exact = brute_force(&g, mode).unwrap();
        let cut = evaluate(&g, &exact.witness, mode).unwrap();
        let v = if mode == Mode::MaxCut { -cut.u_value } else { cut.u_value };
        assert_eq!(v, exact.value);
        sanity_bound_exact(&exact, &cut).unwrap();
    }
}

#[test]
fn k4_roundings_never_beat_half() {
    let g = RegularGraph::complete(4).unwrap();
    for s in 0..200 {
        let sigma = randomized_round(&[0.3, -0.2, 0.9, 0.0], s);
        let cut = evaluate(&g, &sigma, Mode::MaxCut).unwrap();
        assert!(-cut.u_value <= 0.5);
        sanity_bound(&g, &cut, Mode::MaxCut).unwrap();
    }
}

#[test]
fn wave_cuts_on_cubic_graphs_are_bounded() {
    for seed in 0..50 {
        let g = generate_random_regular(12, 3, seed).unwrap();
        let max_exact = brute_force(&g, Mode::MaxCut).unwrap();
        let bis_exact = brute_force(&g, Mode::MinBis).unwrap();
        let z = engine::run(&g, &make_wave_schedule(WaveConfig::bottom(3).unwrap()), seed).unwrap().z;
        sanity_bound_exact(&max_exact, &evaluate(&g, &sign_round(&z), Mode::MaxCut).unwrap()).unwrap();
        let z = engine::run(&g, &make_wave_schedule(WaveConfig::top(3).unwrap()), seed).unwrap().z;
        let sigma = balance_repair(&sign_round(&z), &clip(&z)).unwrap();
        sanity_bound_exact(&bis_exact, &evaluate(&g, &sigma, Mode::MinBis).unwrap()).unwrap();
    }
}

#[test]
fn unbalanced_bisections_are_rejected() {
    let g = RegularGraph::cycle(4).unwrap();
    let cut = evaluate(&g, &[1, 1, 1, 1], Mode::MinBis).unwrap();
    assert!(sanity_bound(&g, &cut, Mode::MinBis).is_err());
}

#[test]
fn size_limits() {
    let g = generate_random_regular(26, 3, 1).unwrap();
    assert!(matches!(brute_force(&g, Mode::MaxCut), Err(mpcut::Error::Resource(_))));
    let odd = RegularGraph::complete(5).unwrap();
    assert!(brute_force(&odd, Mode::MinBis).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_is_invariant_under_relabelling(seed in 0u64..500, shift in 1usize..11) {
        let g = generate_random_regular(12, 3, seed).unwrap();
        let perm: Vec<usize> = (0..12).map(|i| (i * 5 + shift) % 12).collect();
        let h = g.relabel(&perm).unwrap();
        for mode in [Mode::MaxCut, Mode::MinBis] {
            prop_assert_eq!(brute_force(&g, mode).unwrap().value, brute_force(&h, mode).unwrap().value);
        }
    }
}
