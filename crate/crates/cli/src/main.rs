use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lamlock::{
    analyze_source, compare_manifest, compare_source, compare_table, oracle_source, read, solve_source, verdict_json,
    CliError,
};
use lamlock_core::oracle::Bounds;
use lamlock_core::solver::SolverConfig;

/// Static deadlock analysis for JVML_d assembly.
///
/// Exit codes: 0 no deadlock, 1 deadlock (or, for `compare`, a concrete
/// deadlock missed statically), 2 error.
#[derive(Parser)]
#[command(name = "lamlock", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Human,
    Json,
}

#[derive(clap::Args)]
struct SolverFlags {
    /// Cap on conjunctive states per function summary.
    #[arg(long, default_value_t = SolverConfig::default().max_states)]
    max_states: usize,
    /// Recursive functions keep at most this many states; beyond it states
    /// are merged.
    #[arg(long, default_value_t = SolverConfig::default().widen_at)]
    widen_at: usize,
}

#[derive(clap::Args)]
struct OracleFlags {
    /// Total transitions explored.
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    #[arg(long, default_value_t = 6)]
    max_threads: usize,
    /// Integer arguments of the entry method, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    args: Vec<i64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Infer lams from a `.jd` file and check them for circularities.
    Analyze {
        file: PathBuf,
        /// Entry method `C.m`; defaults to the only `main`.
        #[arg(long)]
        entry: Option<String>,
        /// Write the inferred lam program here.
        #[arg(long)]
        emit_lam: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Check a `.lam` program.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Run a `.jd` file under every interleaving.
    Oracle {
        file: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[command(flatten)]
        oracle: OracleFlags,
    },
    /// Static verdict against exhaustive execution, for one `.jd` file or
    /// every program listed in a `manifest.toml`.
    Compare {
        file: PathBuf,
        #[arg(long)]
        entry: Option<String>,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        oracle: OracleFlags,
    },
}

fn solver_cfg(f: &SolverFlags) -> SolverConfig {
    SolverConfig { max_states: f.max_states, widen_at: f.widen_at, ..SolverConfig::default() }
}

fn bounds(f: &OracleFlags) -> Bounds {
    Bounds { max_steps: f.max_steps, max_threads: f.max_threads }
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let json = cli.format == Format::Json;
    match &cli.cmd {
        Cmd::Analyze { file, entry, emit_lam, solver } => {
            let report = analyze_source(&read(file)?, entry.as_deref(), solver_cfg(solver))?;
            if let Some(p) = emit_lam {
                std::fs::write(p, &report.lam)
                    .map_err(|e| CliError::Io { path: p.clone(), message: e.to_string() })?;
            }
            if json {
                print_json(&report);
            } else {
                print!("{}", report.human());
            }
            Ok(if report.deadlock_free() { 0 } else { 1 })
        }
        Cmd::Solve { file, solver } => {
            let v = solve_source(&read(file)?, solver_cfg(solver))?;
            if json {
                print_json(&verdict_json(&v));
            } else {
                println!("{}", lamlock::verdict_word(v.deadlock_free()));
                for c in &v.circularities {
                    println!("  circularity {} via {}", c.cycle.join(" "), c.functions.join(", "));
                }
            }
            Ok(if v.deadlock_free() { 0 } else { 1 })
        }
        Cmd::Oracle { file, entry, oracle } => {
            let r = oracle_source(&read(file)?, entry.as_deref(), &oracle.args, bounds(oracle))?;
            if json {
                print_json(&r);
            } else {
                println!(
                    "{} ({} states, {} steps{})",
                    if r.deadlocked() { "deadlock reachable" } else { "no deadlock found" },
                    r.states,
                    r.steps,
                    if r.exhausted { "" } else { ", bounds hit" }
                );
                if let Some(t) = r.deadlocks.first() {
                    for s in t {
                        println!("  t{} {}@{}: {}", s.tid, s.method, s.pc, s.instr);
                    }
                }
            }
            Ok(if r.deadlocked() { 1 } else { 0 })
        }
        Cmd::Compare { file, entry, solver, oracle } => {
            let rows = if file.extension().is_some_and(|e| e == "toml") {
                compare_manifest(file, solver_cfg(solver), bounds(oracle))?
            } else {
                let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                vec![compare_source(&name, &read(file)?, entry.as_deref(), &oracle.args, solver_cfg(solver), bounds(oracle))?]
            };
            if json {
                print_json(&rows);
            } else {
                print!("{}", compare_table(&rows));
            }
            Ok(if rows.iter().any(|r| r.is_failure()) { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if cli.format == Format::Json {
                print_json(&serde_json::json!({ "error": e.diagnostic() }));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(2)
        }
    }
}
