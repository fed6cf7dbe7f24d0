use std::f64::consts::PI;
use std::sync::Arc;

use mpcut::parisi::{self, GammaStep, DEFAULT_M_T, DEFAULT_M_X, DEFAULT_X_MAX};

/// `E[f(G)]` for `G ~ N(0,1)` by composite Simpson on `[-12, 12]`.
fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
    let n = 24_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let g = a + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * f(g) * (-0.5 * g * g).exp();
    }
    s * h / 3.0 / (2.0 * PI).sqrt()
}

/// Constant-γ solution through the heat equation for `exp(γΦ)`.
fn cole_hopf(gamma: f64, t: f64, x: f64) -> f64 {
    let s = (1.0 - t).sqrt();
    gauss_expect(|g| (gamma * (x + s * g).abs()).exp()).ln() / gamma
}

fn default_solve(gamma: &GammaStep) -> parisi::ParisiSolution {
    parisi::solve_pde(gamma, DEFAULT_M_T, DEFAULT_M_X, DEFAULT_X_MAX).unwrap()
}

fn fixture() -> GammaStep {
    let text = include_str!("data/gamma_m8.json");
    let raw: GammaStep = serde_json::from_str(text).unwrap();
    GammaStep::new(raw.breakpoints().to_vec(), raw.values().to_vec()).unwrap()
}

#[test]
fn zero_gamma_origin_is_mean_abs_normal() {
    let sol = default_solve(&GammaStep::constant(0.0).unwrap());
    let exact = (2.0 / PI).sqrt();
    assert!((sol.phi00() - exact).abs() <= 5e-4, "{}", sol.phi00());
    assert!((parisi::parisi_value(&sol) - exact).abs() <= 5e-4);
}

#[test]
fn unit_gamma_matches_cole_hopf() {
    let sol = default_solve(&GammaStep::constant(1.0).unwrap());
    let phi = gauss_expect(|g| g.abs().exp()).ln();
    assert!((phi - 1.020392).abs() < 1e-5, "oracle {phi}");
    assert!((sol.phi00() - phi).abs() <= 1e-3, "{} vs {phi}", sol.phi00());
    assert!((parisi::parisi_value(&sol) - (phi - 0.25)).abs() <= 1e-3);
}

#[test]
fn pde_sup_norm_against_closed_form() {
    for gamma in [0.5, 1.0, 2.0] {
        let sol = default_solve(&GammaStep::constant(gamma).unwrap());
        for t in [0.0, 0.5] {
            let mut worst = 0.0f64;
            for i in 0..=60 {
                let x = -3.0 + 0.1 * i as f64;
                worst = worst.max((sol.phi_at(t, x) - cole_hopf(gamma, t, x)).abs());
            }
            assert!(worst <= 1e-3, "gamma {gamma} t {t}: {worst}");
        }
    }
}

#[test]
fn terminal_row_is_abs_x() {
    let sol = default_solve(&fixture());
    let last = sol.t_grid().len() - 1;
    for (x, v) in sol.x_grid().iter().zip(sol.phi_row(last)) {
        assert_eq!(*v, x.abs());
    }
}

#[test]
fn grid_refinement_is_consistent() {
    for g in [0.0, 1.0] {
        let gamma = GammaStep::constant(g).unwrap();
        let coarse = default_solve(&gamma).phi00();
        let fine = parisi::solve_pde(&gamma, 2 * DEFAULT_M_T, 2 * DEFAULT_M_X - 1, DEFAULT_X_MAX).unwrap().phi00();
        assert!((coarse - fine).abs() < 2e-4, "gamma {g}: {coarse} vs {fine}");
    }
}

#[test]
fn convex_in_x_with_bounded_slope() {
    let sol = default_solve(&fixture());
    for it in 0..sol.t_grid().len() {
        let row = sol.phi_row(it);
        for w in row.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-10, "row {it}");
        }
        for &p in sol.phi_x_row(it) {
            assert!(p.abs() <= 1.0 + 1e-6);
        }
    }
}

#[test]
fn parisi_value_subtracts_exact_correction() {
    let gamma = fixture();
    let sol = default_solve(&gamma);
    // ½∫ t γ(t) dt for the step function, by hand.
    let mut corr = 0.0;
    for (i, v) in gamma.values().iter().enumerate() {
        let (a, b) = (gamma.breakpoints()[i], gamma.breakpoints()[i + 1]);
        corr += 0.25 * v * (b * b - a * a);
    }
    assert!((parisi::parisi_value(&sol) - (sol.phi00() - corr)).abs() < 1e-14);
}

#[test]
fn fixture_is_near_the_ground_state_value() {
    let gamma = fixture();
    assert!(gamma.is_strictly_increasing());
    let p = parisi::parisi_value(&default_solve(&gamma));
    assert!((0.7625..=0.7660).contains(&p), "{p}");
}

#[test]
fn one_step_fit_beats_unit_gamma() {
    let fit = parisi::optimize_gamma(1, 300, 3).unwrap();
    let p = parisi::parisi_value(&default_solve(&fit.gamma));
    assert!(p <= 0.7704, "{p}");
    let again = parisi::optimize_gamma(1, 300, 3).unwrap();
    assert_eq!(fit.gamma.hash_hex(), again.gamma.hash_hex());
}

#[test]
fn zero_drift_paths_are_brownian() {
    let sol = default_solve(&GammaStep::constant(0.0).unwrap());
    let paths = parisi::simulate_sde(&sol, 100_000, 1.0 / DEFAULT_M_T as f64, 5).unwrap();
    let end: Vec<f64> = paths.at(paths.steps).iter().map(|&x| x as f64 * x as f64).collect();
    let m = mpcut::stats::Estimate::from_samples(&end);
    assert!(m.within(1.0, 3.0), "{m:?}");
}

#[test]
fn identity_report_is_finite_and_martingale_holds() {
    let sol = Arc::new(default_solve(&GammaStep::constant(1.0).unwrap()));
    let paths = parisi::simulate_sde(&sol, 20_000, 1.0 / DEFAULT_M_T as f64, 9).unwrap();
    let rep = parisi::check_identities(&sol, &paths);
    for e in rep.second_moment.iter().chain(&rep.first_moment) {
        assert!(e.mean.is_finite() && e.se.is_finite());
    }
    for j in 1..10 {
        let e = rep.martingale[rep.index_of(j as f64 / 10.0)];
        assert!(e.within(0.0, 3.0), "t = {}: {e:?}", j as f64 / 10.0);
    }
}

#[test]
fn solution_file_round_trip() {
    let sol = parisi::solve_pde(&fixture(), 64, 257, DEFAULT_X_MAX).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("phi.bin");
    sol.save(&p).unwrap();
    assert_eq!(parisi::ParisiSolution::load(&p).unwrap(), sol);
}
