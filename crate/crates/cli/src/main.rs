use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gas_core::check::{gradient_check, laplacian_check, risk_max_check};
use gas_core::config::PRESETS;
use gas_core::network::load_checkpoint;
use gas_core::report::{field_rows, fmt_real, write_field_csv, ArtifactWriter};
use gas_core::trainer::gas_loop;
use gas_core::{GasConfig, ProblemId, RoundMetrics};

#[derive(Parser)]
#[command(name = "gas", version, about = "Adaptive-sampling PINN solver")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key-value config file, or a run manifest to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Builtin preset used as the base config.
    #[arg(long, global = true)]
    preset: Vec<String>,
    /// Output directory (`run`) or file (`field`, `table`, `check`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the root seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train with adaptive sampling and write per-round artifacts.
    Run,
    /// Evaluate a 2-D checkpoint on a lattice.
    Field {
        checkpoint: PathBuf,
        #[arg(default_value_t = 201)]
        grid_n: usize,
    },
    /// Error at fixed training-set sizes for each preset.
    Table {
        /// Comma-separated interior-set sizes; defaults depend on the problem.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<usize>,
    },
    /// Derivative and sampler self-checks.
    Check,
    /// List builtin presets.
    Presets,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    config: GasConfig,
    seed: u64,
    started: String,
    finished: Option<String>,
    out_dir: PathBuf,
    metrics: PathBuf,
    sampler_log: PathBuf,
    added_points: PathBuf,
    checkpoints: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.max(1))
        .build_global()
        .context("thread pool")?;
    match cli.command {
        Command::Run => run(&cli.common),
        Command::Field { checkpoint, grid_n } => field(&cli.common, &checkpoint, grid_n),
        Command::Table { budgets } => table(&cli.common, &budgets),
        Command::Check => check(&cli.common),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Resolves the config from `--config` (key-value file or manifest) and at
/// most one `--preset`, then applies `--seed`.
fn load_config(common: &Common) -> Result<GasConfig> {
    if common.preset.len() > 1 {
        bail!("at most one --preset for this command");
    }
    let preset = common.preset.first();
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                m.config.validate()?;
                m.config
            } else {
                let mut text = text;
                if let Some(p) = preset {
                    let has_preset = text
                        .parse::<toml::Table>()
                        .map(|t| t.contains_key("preset"))
                        .unwrap_or(false);
                    if !has_preset {
                        text = format!("preset = {p:?}\n{text}");
                    }
                }
                GasConfig::from_kv_str(&text).with_context(|| format!("invalid config {}", path.display()))?
            }
        }
        None => match preset {
            Some(p) => GasConfig::from_kv_str(&format!("preset = {p:?}"))?,
            None => GasConfig::default(),
        },
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339()
}

fn write_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, m)?;
    writeln!(f)?;
    Ok(())
}

fn run(common: &Common) -> Result<ExitCode> {
    let cfg = load_config(common)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("gas_out"));
    let mut writer = ArtifactWriter::create(&out, cfg.dim)?;
    let mut manifest = RunManifest {
        seed: cfg.seed,
        config: cfg.clone(),
        started: timestamp(),
        finished: None,
        out_dir: out.clone(),
        metrics: out.join("metrics.csv"),
        sampler_log: out.join("sampler_log.csv"),
        added_points: out.join("added_points.csv"),
        checkpoints: Vec::new(),
    };
    let manifest_path = out.join("manifest.json");
    write_manifest(&manifest_path, &manifest)?;
    let result = gas_loop(&cfg, &mut writer);
    manifest.checkpoints = writer.checkpoints.clone();
    match result {
        Ok(run) => {
            manifest.finished = Some(timestamp());
            write_manifest(&manifest_path, &manifest)?;
            if let Some(m) = run.metrics.last() {
                println!("{}", summary(m));
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            write_manifest(&manifest_path, &manifest)?;
            Err(e.into())
        }
    }
}

fn summary(m: &RoundMetrics) -> String {
    let mut s = format!("round {} interior {} boundary {} loss {}", m.round, m.interior, m.boundary, fmt_real(m.loss));
    if let Some(v) = m.mse {
        s += &format!(" mse {}", fmt_real(v));
    }
    if let Some(v) = m.rel_l2 {
        s += &format!(" rel_l2 {}", fmt_real(v));
    }
    s
}

/// The run config for a checkpoint: explicit flags first, else the manifest
/// of the run directory holding `checkpoints/`.
fn checkpoint_config(common: &Common, checkpoint: &Path) -> Result<GasConfig> {
    if common.config.is_some() || !common.preset.is_empty() {
        return load_config(common);
    }
    let manifest = checkpoint
        .parent()
        .and_then(Path::parent)
        .map(|d| d.join("manifest.json"))
        .filter(|p| p.exists());
    match manifest {
        Some(p) => {
            let m: RunManifest = serde_json::from_str(&fs::read_to_string(&p)?)
                .with_context(|| format!("reading {}", p.display()))?;
            Ok(m.config)
        }
        None => load_config(common),
    }
}

fn field(common: &Common, checkpoint: &Path, grid_n: usize) -> Result<ExitCode> {
    let cfg = checkpoint_config(common, checkpoint)?;
    let problem = cfg.problem()?;
    let params = load_checkpoint(checkpoint)?;
    if params.input_dim() != 2 {
        bail!("field needs a 2-D checkpoint, got input dimension {}", params.input_dim());
    }
    if params.input_dim() != problem.dim {
        bail!("checkpoint dimension {} does not match the problem", params.input_dim());
    }
    let rows = field_rows(&params, &problem, grid_n)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("field.csv"));
    write_field_csv(&out, &rows)?;
    Ok(ExitCode::SUCCESS)
}

pub const TABLE_HEADER: &str = "strategy,mode,budget,round,mse,rel_l2";

fn default_budgets(cfg: &GasConfig) -> Vec<usize> {
    match cfg.problem {
        ProblemId::OnePeak => vec![2000, 3000, 4000, 5000],
        ProblemId::TwoPeak => vec![2500, 5000, 7500, 10000],
        ProblemId::NinePeak => vec![5000, 10000, 15000, 20000],
        ProblemId::Dim10 => vec![50_000, 100_000],
    }
}

fn table(common: &Common, budgets: &[usize]) -> Result<ExitCode> {
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("table.csv"));
    let mut jobs = Vec::new();
    for name in &common.preset {
        let mut cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                GasConfig::from_kv_str(&format!("preset = {name:?}\n{text}"))?
            }
            None => GasConfig::from_kv_str(&format!("preset = {name:?}"))?,
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        jobs.push((name.clone(), cfg));
    }
    let mut text = format!("{TABLE_HEADER}\n");
    for (name, mut cfg) in jobs {
        let budgets = if budgets.is_empty() {
            default_budgets(&cfg)
        } else {
            budgets.to_vec()
        };
        // Rounds past the largest budget cannot change earlier rows.
        let max_budget = budgets.iter().copied().max().unwrap_or(0);
        let per_round = cfg.added_per_round().max(1);
        let needed = max_budget.saturating_sub(cfg.n_interior).div_ceil(per_round) + 1;
        cfg.rounds = cfg.rounds.min(needed);
        let run = gas_loop(&cfg, &mut ()).with_context(|| format!("preset {name}"))?;
        for b in budgets {
            let m = run.metrics.iter().find(|m| m.interior == b);
            let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
            text += &format!(
                "{name},{},{b},{},{},{}\n",
                cfg.mode.name(),
                m.map(|m| m.round.to_string()).unwrap_or_default(),
                opt(m.and_then(|m| m.mse)),
                opt(m.and_then(|m| m.rel_l2)),
            );
        }
        eprintln!("{name}: done");
    }
    fs::write(&out, text)?;
    Ok(ExitCode::SUCCESS)
}

fn check(common: &Common) -> Result<ExitCode> {
    let seed = common.seed.unwrap_or(0);
    let reports = vec![
        gradient_check(seed, &[1, 2, 10], 10, 20, 1e-5)?,
        laplacian_check(seed, &[1, 2, 10], 100, 1e-3)?,
        risk_max_check()?,
    ];
    let mut ok = true;
    for r in &reports {
        println!(
            "{:<10} {} cases={} max_error={} tolerance={}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.cases,
            fmt_real(r.max_error),
            fmt_real(r.tolerance)
        );
        ok &= r.passed;
    }
    if let Some(out) = &common.out {
        fs::write(out, serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
