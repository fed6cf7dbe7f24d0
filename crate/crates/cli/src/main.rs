use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use mpcut::engine;
use mpcut::graph::{self, RegularGraph};
use mpcut::oracle;
use mpcut::parisi;
use mpcut::rounding;
use mpcut::wave::{self, WaveConfig};
use mpcut::Mode;
use mpcut_cli::{config, diag, run, BenchArgs, Cli, Command, Format, GammaFitArgs, OracleArgs, PdeSolveArgs};

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// A single record as a one-row CSV, or as JSON.
fn table<T: Serialize>(format: Format, header: &str, rows: &[String], value: &T) -> Result<String> {
    Ok(match format {
        Format::Csv => {
            let mut s = format!("{header}\n");
            for r in rows {
                s.push_str(r);
                s.push('\n');
            }
            s
        }
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
    })
}

fn gamma_fit(a: &GammaFitArgs, format: Format) -> Result<()> {
    let fit = parisi::optimize_gamma(a.m, a.budget, a.seed)?;
    let sol = parisi::solve_pde(&fit.gamma, parisi::DEFAULT_M_T, parisi::DEFAULT_M_X, parisi::DEFAULT_X_MAX)?;
    let full = parisi::parisi_value(&sol);
    let report = serde_json::json!({
        "gamma": fit.gamma,
        "value": full,
        "optimizer_value": fit.value,
        "evaluations": fit.evaluations,
        "seed": fit.seed,
        "m": a.m,
        "gamma_hash": fit.gamma.hash_hex(),
        "warnings": fit.warnings,
    });
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", a.out.display()))?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let row = format!("{},{},{},{},{}", a.m, a.seed, full, fit.evaluations, fit.gamma.hash_hex());
    emit(None, &table(format, "m,seed,parisi_value,evaluations,gamma_hash", &[row], &report)?)
}

fn pde_solve(a: &PdeSolveArgs, format: Format) -> Result<()> {
    let gamma = run::read_gamma(&a.gamma_file)?;
    let start = Instant::now();
    let sol = parisi::solve_pde(&gamma, a.m_t, a.m_x, a.x_max)?;
    let wall_ms = start.elapsed().as_millis();
    sol.save(&a.out)?;
    let report = serde_json::json!({
        "phi00": sol.phi00(),
        "parisi_value": parisi::parisi_value(&sol),
        "gamma_hash": gamma.hash_hex(),
        "m_t": a.m_t,
        "m_x": a.m_x,
        "x_max": a.x_max,
        "wall_ms": wall_ms,
    });
    let row = format!(
        "{},{},{},{},{},{},{}",
        sol.phi00(),
        parisi::parisi_value(&sol),
        gamma.hash_hex(),
        a.m_t,
        a.m_x,
        a.x_max,
        wall_ms
    );
    emit(None, &table(format, "phi00,parisi_value,gamma_hash,m_t,m_x,x_max,wall_ms", &[row], &report)?)
}

fn run_cmd(a: &mpcut_cli::RunArgs, format: Format) -> Result<()> {
    let cfg = a.to_config();
    let seeds = a.seed_list()?;
    let results = run::cmd_run(&cfg, &seeds)?;
    if let Some(dir) = &a.sigma_dir {
        std::fs::create_dir_all(dir)?;
        for (row, cut) in &results {
            std::fs::write(dir.join(format!("{}.sigma", row.run_id)), cut.sigma_text())?;
        }
    }
    let rows: Vec<run::RunRow> = results.into_iter().map(|(r, _)| r).collect();
    let text = match format {
        Format::Csv => run::rows_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    emit(a.out.as_deref(), &text)
}

#[derive(Serialize)]
struct OracleReport {
    mode: Mode,
    n: usize,
    k: usize,
    seed: Option<u64>,
    exact_value: f64,
    witness: String,
    wave_value: f64,
    sanity: bool,
}

fn oracle_cmd(a: &OracleArgs, format: Format) -> Result<()> {
    let (g, seed) = match &a.graph {
        Some(p) => (RegularGraph::load(p)?, None),
        None => (graph::generate_random_regular(a.n, a.k, a.seed)?, Some(a.seed)),
    };
    let exact = oracle::brute_force(&g, a.mode)?;
    let cfg = match a.mode {
        Mode::MinBis => WaveConfig::top(a.rounds)?,
        Mode::MaxCut => WaveConfig::bottom(a.rounds)?,
    };
    let out = engine::run(&g, &wave::make_wave_schedule(cfg), a.seed)?;
    let sigma = rounding::sign_round(&out.z);
    let sigma = match a.mode {
        Mode::MinBis => rounding::balance_repair(&sigma, &rounding::clip(&out.z))?,
        Mode::MaxCut => sigma,
    };
    let cut = rounding::evaluate(&g, &sigma, a.mode)?;
    // A violation is a hard error.
    oracle::sanity_bound_exact(&exact, &cut)?;
    let wave_value = match a.mode {
        Mode::MinBis => cut.u_value,
        Mode::MaxCut => -cut.u_value,
    };
    let witness: String = exact.witness.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
    let rep = OracleReport {
        mode: a.mode,
        n: g.n(),
        k: g.k(),
        seed,
        exact_value: exact.value,
        witness: witness.clone(),
        wave_value,
        sanity: true,
    };
    let row = format!(
        "{},{},{},{},{},{},{},true",
        a.mode,
        g.n(),
        g.k(),
        seed.map(|s| s.to_string()).unwrap_or_default(),
        exact.value,
        witness,
        wave_value
    );
    emit(a.out.as_deref(), &table(format, "mode,n,k,seed,exact_value,witness,wave_value,sanity", &[row], &rep)?)
}

fn diag_cmd(a: &mpcut_cli::DiagArgs, format: Format) -> Result<bool> {
    let gamma = run::read_gamma(&a.gamma_file)?;
    let rows = diag::cmd_diag(&gamma, &a.to_config())?;
    let text = match format {
        Format::Csv => diag::records_csv(&rows),
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    emit(a.out.as_deref(), &text)?;
    let failed: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
    for r in &failed {
        eprintln!("FAIL {} {} round {:?}: {} (tolerance {})", r.check, r.statistic, r.round, r.value, r.tolerance);
    }
    Ok(failed.is_empty())
}

fn bench(a: &BenchArgs, format: Format) -> Result<()> {
    if a.repeat == 0 {
        bail!("--repeat must be positive");
    }
    let g = graph::generate_random_regular(a.n, a.k, a.seed)?;
    let sched = wave::make_wave_schedule(WaveConfig::top(a.rounds)?);
    let mut best = f64::INFINITY;
    for r in 0..a.repeat {
        let start = Instant::now();
        engine::run(&g, &sched, a.seed + r as u64)?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    let updates = (a.n * a.k * a.rounds) as f64 / best;
    let workers = rayon::current_num_threads();
    let rep = serde_json::json!({
        "n": a.n, "k": a.k, "L": a.rounds, "workers": workers,
        "best_ms": best * 1e3, "edge_updates_per_sec": updates,
    });
    let row = format!("{},{},{},{},{},{}", a.n, a.k, a.rounds, workers, best * 1e3, updates);
    emit(a.out.as_deref(), &table(format, "n,k,L,workers,best_ms,edge_updates_per_sec", &[row], &rep)?)
}

fn real_main() -> Result<bool> {
    let args = config::splice_config(std::env::args_os().collect())?;
    let cli = Cli::parse_from(args);
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::GammaFit(a) => gamma_fit(a, cli.format)?,
        Command::PdeSolve(a) => pde_solve(a, cli.format)?,
        Command::Run(a) => run_cmd(a, cli.format)?,
        Command::Oracle(a) => oracle_cmd(a, cli.format)?,
        Command::Diag(a) => return diag_cmd(a, cli.format),
        Command::Bench(a) => bench(a, cli.format)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
