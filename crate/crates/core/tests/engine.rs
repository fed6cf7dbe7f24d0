use std::sync::Arc;

use mpcut::engine::{self, FullHistory, Normalization, RunOptions, Schedule};
use mpcut::graph::generate_random_regular;
use mpcut::iamp::{self, XiMode};
use mpcut::parisi::{self, GammaStep};
use mpcut::stats::Estimate;
use mpcut::wave::{make_wave_schedule, WaveConfig};
use mpcut::Mode;

/// One round, `A ≡ 1`, `B^0 = 1`, `δ = 1`: `z_i = u^1_i`.
fn single_round() -> FullHistory {
    FullHistory {
        delta: 1.0,
        rounds: 1,
        bound: 1.0,
        normalization: Normalization::Exact,
        sign_symmetric: true,
        edge: Box::new(|_, _| 1.0),
        vertex: Box::new(|_, _| 1.0),
        name: "single".into(),
    }
}

fn fixture_schedule(delta: f64, xi: XiMode) -> iamp::IampSchedule {
    let raw: GammaStep = serde_json::from_str(include_str!("data/gamma_m8.json")).unwrap();
    let gamma = GammaStep::new(raw.breakpoints().to_vec(), raw.values().to_vec()).unwrap();
    let sol = parisi::solve_pde(&gamma, parisi::DEFAULT_M_T, parisi::DEFAULT_M_X, parisi::DEFAULT_X_MAX).unwrap();
    iamp::build_schedule(Arc::new(sol), delta, 0.1, xi, 20_000, 1, Mode::MinBis).unwrap()
}

#[test]
fn single_round_output_is_the_scaled_neighbour_sum() {
    let g = generate_random_regular(20_000, 10, 1).unwrap();
    let out = engine::run_with(&g, &single_round(), 1, RunOptions { center: false }).unwrap();
    let s = 1.0 / 10f64.sqrt();
    for i in 0..g.n() {
        let want: f64 = g.neighbors(i).iter().map(|&v| out.u0[v as usize]).sum::<f64>() * s;
        assert!((out.z[i] - want).abs() < 1e-12);
    }
    let z2: Vec<f64> = out.z.iter().map(|z| z * z).collect();
    let v = Estimate::from_samples(&z2);
    assert!(v.within(1.0, 3.0), "{v:?}");
}

#[test]
fn first_round_edge_messages_have_unit_variance() {
    let g = generate_random_regular(20_000, 10, 2).unwrap();
    let out = engine::run(&g, &make_wave_schedule(WaveConfig::top(4).unwrap()), 2).unwrap();
    let u0 = Estimate::from_samples(&out.u0.iter().map(|u| u * u).collect::<Vec<_>>());
    assert!(u0.within(1.0, 3.0), "{u0:?}");
    // Cross terms average out; what is left is the sample second moment of u^0.
    assert!((out.rounds[0].mean_u2_edge - u0.mean).abs() < 0.03, "{:?}", out.rounds[0]);
    assert!(out.rounds.iter().all(|r| r.mean_a2 == 1.0 && r.bound_violations == 0));
}

#[test]
fn worker_count_does_not_change_output() {
    let g = generate_random_regular(5000, 6, 3).unwrap();
    let s = make_wave_schedule(WaveConfig::top(6).unwrap());
    let a = engine::run_on_workers(&g, &s, 3, RunOptions::default(), 1).unwrap();
    let b = engine::run_on_workers(&g, &s, 3, RunOptions::default(), 3).unwrap();
    assert!(a.z.iter().zip(&b.z).all(|(x, y)| x.to_bits() == y.to_bits()));
    let sched = fixture_schedule(0.1, XiMode::LargeK);
    let a = engine::run_on_workers(&g, &sched, 4, RunOptions::default(), 1).unwrap();
    let b = engine::run_on_workers(&g, &sched, 4, RunOptions::default(), 2).unwrap();
    assert!(a.z.iter().zip(&b.z).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn single_round_tree_correlation_is_zero() {
    // z_o and z_v sum disjoint sets of independent initial messages.
    let t = engine::tree_monte_carlo(4, &single_round(), 20_000, 4).unwrap();
    assert!(t.correlation.within(0.0, 3.0), "{:?}", t.correlation);
    assert!(t.variance.within(1.0, 3.0), "{:?}", t.variance);
}

#[test]
fn iamp_decomposition_cross_validates() {
    let s = fixture_schedule(0.18, XiMode::LargeK);
    assert_eq!(s.rounds(), 5);
    let mc = engine::tree_monte_carlo(4, &s, 10_000, 5).unwrap();
    let rhs = engine::decomposition_rhs(4, &s, 10_000, 6).unwrap();
    let se = (mc.correlation.se.powi(2) + rhs.rhs.se.powi(2)).sqrt();
    assert!((mc.correlation.mean - rhs.rhs.mean).abs() <= 3.0 * se, "{:?} vs {:?}", mc.correlation, rhs.rhs);
}

#[test]
fn wave_messages_are_independent_standard_normals() {
    let s = make_wave_schedule(WaveConfig::top(4).unwrap());
    let rep = engine::clt_diagnostics(10, &s, 20_000, 7).unwrap();
    for a in 0..rep.dim() {
        for b in 0..rep.dim() {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!(rep.cov(a, b).within(want, 3.0), "({a},{b}) {:?}", rep.cov(a, b));
        }
    }
}

#[test]
fn iamp_messages_become_gaussian_with_degree() {
    let s = fixture_schedule(0.18, XiMode::LargeK);
    let small = engine::clt_diagnostics(100, &s, 5000, 8).unwrap();
    let large = engine::clt_diagnostics(2000, &s, 5000, 8).unwrap();
    // KS noise at 5000 samples is about 0.012.
    assert!(large.max_ks() <= small.max_ks() + 0.02, "{} vs {}", large.max_ks(), small.max_ks());
    assert!(large.max_ks() <= 0.03);
    // Later messages are orthogonal to the initial one.
    for l in 1..large.dim() {
        assert!(large.cov(0, l).within(0.0, 3.0), "u0 vs u{l}: {:?}", large.cov(0, l));
    }
}

#[test]
fn tree_budget_is_enforced() {
    let s = make_wave_schedule(WaveConfig::top(8).unwrap());
    assert!(matches!(engine::tree_monte_carlo(50, &s, 100, 1), Err(mpcut::Error::Resource(_))));
}
