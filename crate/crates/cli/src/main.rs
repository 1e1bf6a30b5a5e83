use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use gnep_core::io::{ground_truth_json, summary_json, trace_csv, ProblemDocument};
use gnep_core::validate::{validate_game, validate_shares, Severity};
use gnep_core::verification::{
    check_g_cocoercive, check_is_gne, check_phi_monotone, gradient_check, oracle_solve, Sampler,
};
use gnep_core::{solve_gnep, Game, OracleError, RunStatus};

const EXIT_CONFIG: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_INNER: u8 = 3;
const EXIT_ORACLE_BUDGET: u8 = 4;
const EXIT_NO_GROUND_TRUTH: u8 = 5;
const EXIT_CHECK_FAILED: u8 = 6;

#[derive(Parser)]
#[command(name = "gnep", version, about = "Decomposable penalty solver for generalized Nash games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the penalty continuation; writes <name>.trace.csv and <name>.summary.json.
    Solve {
        path: PathBuf,
        /// Dotted override, e.g. schedule.k_max=3 (repeatable, last wins).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the exact normalized equilibrium of a small affine game.
    Oracle {
        path: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a sampled property battery and report the worst violation.
    Check {
        path: PathBuf,
        kind: CheckKind,
        /// Number of samples (pairs for monotone/cocoercive).
        #[arg(default_value_t = 100)]
        n: usize,
        /// Defaults to solver.seed from the document.
        seed: Option<u64>,
        /// Penalty parameter for the cocoercive and gradients batteries.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Solve several documents concurrently, one output pair per document.
    Bench {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckKind {
    Monotone,
    Cocoercive,
    Gradients,
    Gne,
}

impl CheckKind {
    fn tolerance(self) -> f64 {
        match self {
            CheckKind::Monotone => 1e-9,
            CheckKind::Cocoercive | CheckKind::Gradients => 1e-6,
            CheckKind::Gne => 1e-4,
        }
    }
}

fn init_logging() {
    let level = match std::env::var("GNEP_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Ok(v) = std::env::var("GNEP_LOG") {
        if !matches!(v.as_str(), "quiet" | "info" | "debug") {
            warn!("GNEP_LOG={v} not recognized (quiet|info|debug)");
        }
    }
}

/// Loads and validates a document; any failure is a configuration error.
fn load(path: &Path, overrides: &[String]) -> anyhow::Result<(ProblemDocument, Game)> {
    let doc = ProblemDocument::load(path, overrides).with_context(|| format!("{}", path.display()))?;
    let game = doc.to_game().with_context(|| format!("{}", path.display()))?;
    let mut findings = validate_game(&game).with_context(|| format!("{}: invalid game", path.display()))?;
    findings.extend(validate_shares(&game, doc.shares).with_context(|| format!("{}: shares", path.display()))?);
    for f in findings {
        match f.severity {
            Severity::Warning => warn!("{}: {}", game.name(), f.message),
            Severity::Info => info!("{}: {}", game.name(), f.message),
        }
    }
    Ok((doc, game))
}

/// Writes to stdout, ignoring a closed pipe (`gnep solve ... | head`).
fn emit(text: std::fmt::Arguments) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_fmt(text).and_then(|_| out.write_all(b"\n"));
}

fn report_config_error(err: anyhow::Error) -> ExitCode {
    eprintln!("error: {err:#}");
    ExitCode::from(EXIT_CONFIG)
}

struct SolveOutcome {
    code: u8,
    summary: serde_json::Value,
}

fn solve_one(doc: &ProblemDocument, game: &Game, out_dir: &Path) -> anyhow::Result<SolveOutcome> {
    let cfg = doc.to_config().context("solver configuration")?;
    let phi = doc.penalty();
    let started = Instant::now();
    let report = solve_gnep(game, phi.as_ref(), &cfg).context("solver configuration")?;
    info!("{}: {} in {:.3}s", game.name(), report.status.as_str(), started.elapsed().as_secs_f64());

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let trace_path = out_dir.join(format!("{}.trace.csv", game.name()));
    std::fs::write(&trace_path, trace_csv(game, &report)).with_context(|| format!("writing {}", trace_path.display()))?;
    let summary = summary_json(game, &report);
    let summary_path = out_dir.join(format!("{}.summary.json", game.name()));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let code = match report.status {
        RunStatus::Converged => 0,
        RunStatus::BudgetExhausted => EXIT_BUDGET,
        RunStatus::InnerFailure => EXIT_INNER,
    };
    Ok(SolveOutcome { code, summary })
}

fn cmd_solve(path: &Path, overrides: &[String], out_dir: &Path) -> ExitCode {
    let (doc, game) = match load(path, overrides) {
        Ok(v) => v,
        Err(e) => return report_config_error(e),
    };
    match solve_one(&doc, &game, out_dir) {
        Ok(out) => {
            emit(format_args!("{}", serde_json::to_string_pretty(&out.summary).expect("json")));
            ExitCode::from(out.code)
        }
        Err(e) => report_config_error(e),
    }
}

fn oracle_exit(err: &OracleError) -> u8 {
    match err {
        OracleError::BudgetExceeded { .. } => EXIT_ORACLE_BUDGET,
        OracleError::Model(_) | OracleError::NonAffine | OracleError::Solve(_) => EXIT_CONFIG,
        OracleError::NoCandidate | OracleError::NonUnique { .. } | OracleError::Degenerate => EXIT_NO_GROUND_TRUTH,
    }
}

fn cmd_oracle(path: &Path, overrides: &[String]) -> ExitCode {
    let (_, game) = match load(path, overrides) {
        Ok(v) => v,
        Err(e) => return report_config_error(e),
    };
    match oracle_solve(&game) {
        Ok(truth) => {
            emit(format_args!("{}", serde_json::to_string_pretty(&ground_truth_json(&truth)).expect("json")));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}: {e}", game.name());
            ExitCode::from(oracle_exit(&e))
        }
    }
}

fn run_check(doc: &ProblemDocument, game: &Game, kind: CheckKind, n: usize, seed: u64, tau: f64) -> Result<f64, u8> {
    let phi = doc.penalty();
    let cfg = doc.to_config().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let mut sampler = Sampler::new(seed);
    let fail = |e: &dyn std::fmt::Display| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    };
    match kind {
        CheckKind::Monotone => check_phi_monotone(game, &mut sampler, n).map_err(|e| fail(&e)),
        CheckKind::Cocoercive => {
            check_g_cocoercive(game, phi.as_ref(), tau, doc.shares, &mut sampler, n, &cfg.master.nep).map_err(|e| fail(&e))
        }
        CheckKind::Gradients => {
            let mut worst: f64 = 0.0;
            for _ in 0..n {
                let x = sampler.sample_x(game);
                let u = sampler.sample_u(game, doc.shares).map_err(|e| fail(&e))?;
                let rep = gradient_check(game, phi.as_ref(), tau, &u, &x, 1e-6).map_err(|e| fail(&e))?;
                worst = worst.max(rep.max());
            }
            Ok(worst)
        }
        CheckKind::Gne => {
            let report = solve_gnep(game, phi.as_ref(), &cfg).map_err(|e| fail(&e))?;
            let gains = check_is_gne(game, &report.x).map_err(|e| {
                eprintln!("error: {e}");
                oracle_exit(&e)
            })?;
            Ok(gains.into_iter().fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

fn cmd_check(path: &Path, overrides: &[String], kind: CheckKind, n: usize, seed: Option<u64>, tau: f64) -> ExitCode {
    let (doc, game) = match load(path, overrides) {
        Ok(v) => v,
        Err(e) => return report_config_error(e),
    };
    let seed = seed.unwrap_or(doc.solver.seed);
    match run_check(&doc, &game, kind, n, seed, tau) {
        Ok(worst) => {
            let tolerance = kind.tolerance();
            let pass = worst <= tolerance;
            let out = json!({
                "name": game.name(),
                "kind": format!("{kind:?}").to_lowercase(),
                "samples": n,
                "seed": seed,
                "max_violation": worst,
                "tolerance": tolerance,
                "pass": pass,
            });
            emit(format_args!("{}", serde_json::to_string_pretty(&out).expect("json")));
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_CHECK_FAILED)
            }
        }
        Err(code) => ExitCode::from(code),
    }
}

fn cmd_bench(paths: &[PathBuf], overrides: &[String], out_dir: &Path) -> ExitCode {
    let results: Vec<(PathBuf, u8, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                scope.spawn(move || {
                    let started = Instant::now();
                    let code = match load(p, overrides).and_then(|(doc, game)| solve_one(&doc, &game, out_dir)) {
                        Ok(out) => out.code,
                        Err(e) => {
                            eprintln!("error: {e:#}");
                            EXIT_CONFIG
                        }
                    };
                    (p.clone(), code, started.elapsed().as_secs_f64())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });

    emit(format_args!("{:<40} {:>5} {:>10}", "document", "exit", "seconds"));
    for (p, code, secs) in &results {
        emit(format_args!("{:<40} {:>5} {:>10.3}", p.display(), code, secs));
    }
    // Most severe outcome wins: config error, then inner failure, then budget.
    let worst = [EXIT_CONFIG, EXIT_INNER, EXIT_BUDGET]
        .into_iter()
        .find(|c| results.iter().any(|(_, code, _)| code == c))
        .unwrap_or(0);
    ExitCode::from(worst)
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match cli.command {
        Command::Solve { path, overrides, out_dir } => cmd_solve(&path, &overrides, &out_dir),
        Command::Oracle { path, overrides } => cmd_oracle(&path, &overrides),
        Command::Check {
            path,
            kind,
            n,
            seed,
            tau,
            overrides,
        } => cmd_check(&path, &overrides, kind, n, seed, tau),
        Command::Bench {
            paths,
            overrides,
            out_dir,
        } => cmd_bench(&paths, &overrides, &out_dir),
    }
}
