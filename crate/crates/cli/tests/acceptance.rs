//! Acceptance criteria, one line each.
//!
//! The reproduction runs (5, 6, 8) take from half an hour to several hours
//! on one core and are skipped unless `--ignored` or `--include-ignored` is
//! passed, or `GAS_ACCEPTANCE_FULL` is set. Numeric arguments select
//! criteria by number, e.g. `cargo test --release --test acceptance -- 7 9`.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use gas_core::check::{gradient_check, laplacian_check};
use gas_core::metrics::fns_ans;
use gas_core::sampler::{laplace_sigma_1d, risk_maximization_oracle, RiskGrid};
use gas_core::trainer::{gas_loop, GasSession};
use gas_core::{GasConfig, RoundMetrics};

// Tolerances.
const GRADIENT_REL: f64 = 1e-6;
const LAPLACIAN_REL: f64 = 1e-5;
const LAPLACE_SIGMA_ABS: f64 = 1e-3; // times a
const ONE_PEAK_GAS_MSE: f64 = 1e-4;
const ONE_PEAK_RATIO: f64 = 0.1;
const TWO_PEAK_GAS_L_MSE: f64 = 1e-3;
const CONCENTRATION_RADIUS: f64 = 0.3;
const CONCENTRATION_FRACTION: f64 = 0.8;
const DIM10_TREND_RATIO: f64 = 0.2;
const DIM10_TARGET: f64 = 0.05;
const SEEDS: [u64; 3] = [0, 1, 2];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    id: u32,
    name: &'static str,
    long: bool,
    run: fn() -> Verdict,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn gradient_exactness() -> Verdict {
    match gradient_check(0, &[1, 2, 10], 10, 20, 1e-5) {
        Ok(r) => verdict(
            r.max_error < GRADIENT_REL,
            format!("{} directional checks, max rel err {:.3e}", r.cases, r.max_error),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn laplacian_exactness() -> Verdict {
    match laplacian_check(0, &[1, 2, 10], 100, 1e-3) {
        Ok(r) => verdict(
            r.max_error < LAPLACIAN_REL,
            format!("{} pairs, max rel err {:.3e}", r.cases, r.max_error),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn laplace_formula() -> Verdict {
    let mut worst: f64 = 0.0;
    for &a in &[0.1, 1.0, 3.0] {
        let x0 = 0.7;
        let r = move |x: f64| (-(x - x0) * (x - x0) / (2.0 * a * a)).exp();
        match laplace_sigma_1d(r, x0, 1e-3 * a) {
            Ok(s) => worst = worst.max((s - a / 2f64.sqrt()).abs() / a),
            Err(e) => return Verdict::Fail(format!("a = {a}: {e}")),
        }
    }
    verdict(
        worst < LAPLACE_SIGMA_ABS,
        format!("max |σ - a/√2| / a = {worst:.3e}"),
    )
}

fn risk_oracle() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for &a in &[0.1, 0.25, 0.5] {
        let x0 = 0.3;
        let r = move |x: f64| (-(x - x0) * (x - x0) / (2.0 * a * a)).exp();
        let grid = RiskGrid {
            mu_range: (-1.0, 1.0),
            n_mu: 101,
            sigma_range: (0.01, 1.0),
            n_sigma: 100,
            x_range: (-6.0, 6.0),
            n_quad: 2001,
        };
        let floored = risk_maximization_oracle(r, a, &grid);
        let collapsed = risk_maximization_oracle(r, 0.0, &grid);
        match (floored, collapsed) {
            (Ok((mu, s)), Ok((mu0, s0))) => {
                let in_cell = (mu - x0).abs() <= grid.mu_step() && (s - a).abs() <= grid.sigma_step();
                let collapse = s0 == grid.sigma(0) && (mu0 - x0).abs() <= grid.mu_step();
                ok &= in_cell && collapse;
                notes.push(format!("a={a}: ({mu:.3},{s:.3}) floor0 σ={s0:.3}"));
            }
            (Err(e), _) | (_, Err(e)) => return Verdict::Fail(e.to_string()),
        }
    }
    verdict(ok, notes.join("; "))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn preset(name: &str, seed: u64, rounds: usize) -> GasConfig {
    let mut c = GasConfig::preset(name).expect("builtin preset");
    c.seed = seed;
    c.rounds = c.rounds.min(rounds);
    c
}

fn metrics_of(name: &str, seed: u64, rounds: usize) -> Result<Vec<RoundMetrics>, String> {
    let t = Instant::now();
    let run = gas_loop(&preset(name, seed, rounds), &mut ()).map_err(|e| format!("{name} seed {seed}: {e}"))?;
    eprintln!("  {name} seed {seed}: {:.0}s", t.elapsed().as_secs_f64());
    Ok(run.metrics)
}

fn mse_at(metrics: &[RoundMetrics], interior: usize) -> Result<f64, String> {
    metrics
        .iter()
        .find(|m| m.interior == interior)
        .and_then(|m| m.mse)
        .ok_or_else(|| format!("no MSE at |S| = {interior}"))
}

fn median_mse(name: &str, rounds: usize, budgets: &[usize]) -> Result<Vec<f64>, String> {
    let mut per_budget = vec![Vec::new(); budgets.len()];
    for seed in SEEDS {
        let m = metrics_of(name, seed, rounds)?;
        for (b, v) in budgets.iter().zip(per_budget.iter_mut()) {
            v.push(mse_at(&m, *b)?);
        }
    }
    eprintln!("  {name}: {per_budget:?}");
    Ok(per_budget.into_iter().map(median).collect())
}

fn one_peak_reproduction() -> Verdict {
    let run = || -> Result<Verdict, String> {
        let gas = median_mse("one_peak_gas_t", 10, &[5000])?[0];
        let uni = median_mse("one_peak_uniform", 10, &[5000])?[0];
        Ok(verdict(
            gas <= ONE_PEAK_GAS_MSE && gas <= ONE_PEAK_RATIO * uni,
            format!("median MSE at |S|=5000: GAS-T {gas:.3e}, uniform {uni:.3e}"),
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

fn two_peak_ordering() -> Verdict {
    let run = || -> Result<Verdict, String> {
        // Rounds past |S| = 5000 cannot change these rows.
        let l = median_mse("two_peak_gas_l", 10, &[2500, 5000])?;
        let t = median_mse("two_peak_gas_t", 10, &[2500])?;
        Ok(verdict(
            l[0] < t[0] && l[1] <= TWO_PEAK_GAS_L_MSE,
            format!(
                "median MSE at 2500: GAS-L {:.3e} vs GAS-T {:.3e}; GAS-L at 5000: {:.3e}",
                l[0], t[0], l[1]
            ),
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

fn concentration() -> Verdict {
    let run = || -> gas_core::Result<Verdict> {
        let mut s = GasSession::new(GasConfig::preset("one_peak_gas_t").unwrap())?;
        let trace = s.train()?;
        s.finish_round(&trace)?;
        let a = s.propose()?;
        let near = a
            .added
            .iter()
            .filter(|p| ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() < CONCENTRATION_RADIUS)
            .count();
        let frac = near as f64 / a.added.len() as f64;
        Ok(verdict(
            frac >= CONCENTRATION_FRACTION,
            format!("{near}/{} new points within {CONCENTRATION_RADIUS} of the peak", a.added.len()),
        ))
    };
    run().unwrap_or_else(|e| Verdict::Fail(e.to_string()))
}

fn dim10_trend() -> Verdict {
    let run = || -> Result<Verdict, String> {
        let m = metrics_of("dim10", 0, 5)?;
        let rel: Vec<f64> = m.iter().filter_map(|m| m.rel_l2).collect();
        eprintln!("  dim10 rel_l2 per round: {rel:?}");
        if rel.len() < 5 {
            return Ok(Verdict::Fail(format!("only {} rounds", rel.len())));
        }
        let (first, fifth) = (rel[0], rel[4]);
        let target = if fifth <= DIM10_TARGET { "met" } else { "not met" };
        Ok(verdict(
            fifth <= DIM10_TREND_RATIO * first,
            format!(
                "rel L2 round 1 {first:.3e}, round 5 {fifth:.3e} (FNS {}); optional target {DIM10_TARGET} {target}",
                m[4].fns
            ),
        ))
    };
    run().unwrap_or_else(Verdict::Fail)
}

fn cost_accounting() -> Verdict {
    let five: Vec<usize> = (1..=5).map(|k| k * 10_000).collect();
    let ten: Vec<usize> = (1..=10).map(|k| k * 10_000).collect();
    let a = fns_ans(&five).unwrap();
    let b = fns_ans(&ten).unwrap();
    verdict(
        a == (50_000, 150_000) && b == (100_000, 550_000),
        format!("{a:?}, {b:?}"),
    )
}

fn determinism() -> Verdict {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let cfg = dir.path().join("short.toml");
    if let Err(e) = fs::write(&cfg, "preset = \"one_peak_gas_t\"\nepochs_per_round = 100\n") {
        return Verdict::Fail(e.to_string());
    }
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_gas"))
            .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads])
            .output();
        match status {
            Ok(o) if o.status.success() => {}
            Ok(o) => return Verdict::Fail(String::from_utf8_lossy(&o.stderr).into_owned()),
            Err(e) => return Verdict::Fail(e.to_string()),
        }
        match fs::read(out.join("metrics.csv")) {
            Ok(b) => outputs.push(b),
            Err(e) => return Verdict::Fail(e.to_string()),
        }
    }
    let rows = outputs[0].iter().filter(|&&c| c == b'\n').count() - 1;
    verdict(
        outputs.iter().all(|o| *o == outputs[0]),
        format!("{rows} rounds, metrics.csv identical across 3 runs (1, 1, 2 threads)"),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored")
        || std::env::var_os("GAS_ACCEPTANCE_FULL").is_some();
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();

    let criteria = [
        Criterion { id: 1, name: "gradient exactness", long: false, run: gradient_exactness },
        Criterion { id: 2, name: "laplacian exactness", long: false, run: laplacian_exactness },
        Criterion { id: 3, name: "laplace scale formula", long: false, run: laplace_formula },
        Criterion { id: 4, name: "risk maximization oracle", long: false, run: risk_oracle },
        Criterion { id: 5, name: "one-peak reproduction", long: true, run: one_peak_reproduction },
        Criterion { id: 6, name: "two-peak ordering", long: true, run: two_peak_ordering },
        Criterion { id: 7, name: "sample concentration", long: false, run: concentration },
        Criterion { id: 8, name: "10-D trend", long: true, run: dim10_trend },
        Criterion { id: 9, name: "cost accounting", long: false, run: cost_accounting },
        Criterion { id: 10, name: "determinism", long: false, run: determinism },
    ];

    let mut failed = 0;
    for c in &criteria {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        let t = Instant::now();
        let v = if c.long && !full && !selected.contains(&c.id) {
            Verdict::Skip("long-running; pass --ignored to run".into())
        } else {
            (c.run)()
        };
        let secs = t.elapsed().as_secs_f64();
        let (tag, detail) = match &v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("criterion {:>2} {:<26} {tag}  {detail} [{secs:.1}s]", c.id, c.name);
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
