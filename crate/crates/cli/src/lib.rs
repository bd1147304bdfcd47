//! Pipeline glue behind the `lamlock` binary: assembly to lam to verdict,
//! plus concrete exploration and the comparison of the two.

use std::path::{Path, PathBuf};
use std::time::Instant;

use lamlock_core::frontend::{flow_facts, parse_program, ClassTable, MethodId};
use lamlock_core::lam::{parse_lam, print_lam, LamProgram};
use lamlock_core::oracle::{explore, Bounds, ExploreResult};
use lamlock_core::solver::{analyze, Circularity, SolverConfig, Verdict};
use lamlock_core::typesystem::{infer, resolve_entry, TypeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{phase}: {message}")]
    Phase { phase: &'static str, message: String, method: Option<String>, addr: Option<u32> },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    fn phase(phase: &'static str, e: impl std::fmt::Display) -> CliError {
        CliError::Phase { phase, message: e.to_string(), method: None, addr: None }
    }

    pub fn diagnostic(&self) -> Diagnostic {
        match self {
            CliError::Phase { phase, message, method, addr } => Diagnostic {
                phase: phase.to_string(),
                method: method.clone(),
                addr: *addr,
                message: message.clone(),
            },
            CliError::Io { path, message } => Diagnostic {
                phase: "io".into(),
                method: None,
                addr: None,
                message: format!("{}: {message}", path.display()),
            },
        }
    }
}

impl From<TypeError> for CliError {
    fn from(e: TypeError) -> CliError {
        match &e {
            TypeError::At { method, addr, msg } => CliError::Phase {
                phase: "typesystem",
                message: msg.clone(),
                method: Some(method.clone()),
                addr: Some(*addr),
            },
            _ => CliError::phase("typesystem", e),
        }
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Diagnostic {
    pub phase: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub addr: Option<u32>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Timings {
    pub parse_ms: f64,
    pub infer_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub verdict: &'static str,
    pub circularities: Vec<Circularity>,
    pub entry: String,
    pub lam: String,
    pub timings: Timings,
    pub diagnostics: Vec<Diagnostic>,
}

impl AnalysisReport {
    pub fn deadlock_free(&self) -> bool {
        self.circularities.is_empty()
    }

    pub fn human(&self) -> String {
        let mut out = format!("entry {}: {}\n", self.entry, self.verdict);
        for c in &self.circularities {
            out += &format!("  circularity {} via {}\n", c.cycle.join(" "), c.functions.join(", "));
        }
        out
    }
}

pub fn verdict_word(free: bool) -> &'static str {
    if free {
        "deadlock-free"
    } else {
        "deadlock"
    }
}

/// JSON form of a solver verdict.
pub fn verdict_json(v: &Verdict) -> serde_json::Value {
    serde_json::json!({
        "verdict": verdict_word(v.deadlock_free()),
        "circularities": v.circularities,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn load_table(src: &str) -> Result<ClassTable, CliError> {
    parse_program(src).map_err(|e| CliError::phase("frontend", e))
}

/// Lam program of an assembly source.
pub fn infer_source(src: &str, entry: Option<&str>) -> Result<(MethodId, LamProgram), CliError> {
    let table = load_table(src)?;
    let facts = flow_facts(&table);
    let id = resolve_entry(&table, entry)?;
    let (_, prog) = infer(&table, &facts, Some(&id.to_string()))?;
    Ok((id, prog))
}

pub fn analyze_source(src: &str, entry: Option<&str>, cfg: SolverConfig) -> Result<AnalysisReport, CliError> {
    let t0 = Instant::now();
    let table = load_table(src)?;
    let facts = flow_facts(&table);
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let id = resolve_entry(&table, entry)?;
    let (_, prog) = infer(&table, &facts, Some(&id.to_string()))?;
    prog.validate().map_err(|e| CliError::phase("typesystem", e))?;
    let infer_ms = ms(t1);
    let t2 = Instant::now();
    let v = analyze(&prog, cfg).map_err(|e| CliError::phase("solver", e))?;
    let solve_ms = ms(t2);
    Ok(AnalysisReport {
        verdict: verdict_word(v.deadlock_free()),
        circularities: v.circularities,
        entry: id.to_string(),
        lam: print_lam(&prog),
        timings: Timings { parse_ms, infer_ms, solve_ms },
        diagnostics: Vec::new(),
    })
}

pub fn solve_source(src: &str, cfg: SolverConfig) -> Result<Verdict, CliError> {
    let prog = parse_lam(src).map_err(|e| CliError::phase("lam", e))?;
    analyze(&prog, cfg).map_err(|e| CliError::phase("solver", e))
}

pub fn oracle_source(src: &str, entry: Option<&str>, args: &[i64], bounds: Bounds) -> Result<ExploreResult, CliError> {
    let table = load_table(src)?;
    let id = resolve_entry(&table, entry)?;
    explore(&table, &id, args, bounds).map_err(|e| CliError::phase("oracle", e))
}

/// One line of the static-versus-concrete table.
#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub program: String,
    pub entry: String,
    pub args: Vec<i64>,
    pub static_verdict: &'static str,
    pub circularities: usize,
    pub oracle_deadlock: bool,
    pub oracle_exhausted: bool,
    pub oracle_states: usize,
    /// `agree`, `over-approximation`, `inconclusive` or `FAILURE` (a
    /// concrete deadlock the analysis missed).
    pub status: &'static str,
}

impl CompareRow {
    pub fn is_failure(&self) -> bool {
        self.status == "FAILURE"
    }
}

pub fn compare_source(
    name: &str,
    src: &str,
    entry: Option<&str>,
    args: &[i64],
    cfg: SolverConfig,
    bounds: Bounds,
) -> Result<CompareRow, CliError> {
    let report = analyze_source(src, entry, cfg)?;
    let r = oracle_source(src, Some(&report.entry), args, bounds)?;
    let flagged = !report.deadlock_free();
    let status = match (r.deadlocked(), flagged) {
        (true, false) => "FAILURE",
        (true, true) => "agree",
        (false, true) if r.exhausted => "over-approximation",
        (false, false) if r.exhausted => "agree",
        _ => "inconclusive",
    };
    Ok(CompareRow {
        program: name.to_string(),
        entry: report.entry.clone(),
        args: args.to_vec(),
        static_verdict: report.verdict,
        circularities: report.circularities.len(),
        oracle_deadlock: r.deadlocked(),
        oracle_exhausted: r.exhausted,
        oracle_states: r.states,
        status,
    })
}

/// Corpus description: one entry per program.
#[derive(Debug, Clone, Deserialize)]
pub struct Manifest {
    pub program: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub entry: Option<String>,
    #[serde(default)]
    pub args: Vec<i64>,
    /// `deadlock` or `free`.
    pub expect: String,
    pub family: Option<String>,
    pub n: Option<u32>,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl ManifestEntry {
    pub fn expects_deadlock(&self) -> bool {
        self.expect == "deadlock"
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    toml::from_str(&read(path)?).map_err(|e| CliError::Io { path: path.to_path_buf(), message: e.to_string() })
}

/// Compares every program of a manifest; paths are relative to it.
pub fn compare_manifest(path: &Path, cfg: SolverConfig, bounds: Bounds) -> Result<Vec<CompareRow>, CliError> {
    let m = load_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    m.program
        .iter()
        .map(|e| compare_source(&e.file, &read(&dir.join(&e.file))?, e.entry.as_deref(), &e.args, cfg, bounds))
        .collect()
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = format!("{:<28} {:<14} {:>5} {:<8} {:<6} {}\n", "program", "static", "circ", "oracle", "exh", "status");
    for r in rows {
        out += &format!(
            "{:<28} {:<14} {:>5} {:<8} {:<6} {}\n",
            r.program,
            r.static_verdict,
            r.circularities,
            if r.oracle_deadlock { "deadlock" } else { "none" },
            r.oracle_exhausted,
            r.status
        );
    }
    out
}
