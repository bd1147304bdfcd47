//! Circularity analysis of lam programs.
//!
//! Recursive lam functions are saturated into non-recursive summaries:
//! starting from all bodies `0`, each round replaces every invocation in a
//! body by the callee's current summary, closes the result transitively and
//! projects away the names that are not formal. Rounds stop when no summary
//! changes; the lattice is finite because summaries only mention formal
//! names, `✓` and a bounded number of anonymous threads. The main lam is
//! then expanded against the stable summaries and checked for `(a,a)_✓`.
//!
//! Compositions of distinct named threads are labelled with the set of
//! those threads rather than `✓`, so that a caller passing the same thread
//! for two formals undoes them. A cycle through a lock that projection
//! drops survives in the summary as a marker `(⟲f,⟲f)_l` carrying the
//! cycle's label.

mod closure;

pub use closure::{canonical_bullets, closure, closure_tracked, drop_dominated, has_circularity, project, Closed};

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;
use serde::Serialize;
use thiserror::Error;

use crate::lam::{bind_formal, dnf, Dependency, FunDef, Invoke, Lam, LamError, LamProgram, ThreadLabel};
use crate::name::Name;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error(transparent)]
    Lam(#[from] LamError),
    #[error("state set of `{func}` exceeds the cap of {cap} states")]
    StateCap { func: String, cap: usize },
    #[error("saturation did not stabilise within {0} rounds")]
    IterationBound(usize),
}

/// One conjunctive state: a set of dependencies.
pub type State = BTreeSet<Dependency>;

/// Per function, the stable set of conjunctive states over its formals.
pub type Summary = BTreeMap<String, BTreeSet<State>>;

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Largest state set a single body may expand to.
    pub max_states: usize,
    pub max_rounds: usize,
    /// Summaries of recursive functions with more states than this are
    /// coarsened by merging states.
    pub widen_at: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_states: 200_000, max_rounds: 10_000, widen_at: 32 }
    }
}

/// One reported circularity.
#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
pub struct Circularity {
    pub cycle: Vec<String>,
    pub functions: Vec<String>,
    #[serde(skip)]
    pub deps: Vec<Dependency>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Verdict {
    pub circularities: Vec<Circularity>,
    /// Saturation rounds until the summaries were stable.
    pub rounds: usize,
}

impl Verdict {
    pub fn deadlock_free(&self) -> bool {
        self.circularities.is_empty()
    }
}

/// Keeps only states not contained in another state.
fn maximal(states: BTreeSet<State>) -> BTreeSet<State> {
    let mut by_size: Vec<State> = states.into_iter().collect();
    by_size.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut kept: Vec<State> = Vec::new();
    for s in by_size {
        if !kept.iter().any(|k| s.is_subset(k)) {
            kept.push(s);
        }
    }
    kept.into_iter().collect()
}

struct Evaluator<'a> {
    program: &'a LamProgram,
    summary: &'a Summary,
    cfg: SolverConfig,
    recursive: BTreeSet<&'a str>,
}

impl Evaluator<'_> {
    /// Replace each invocation of a conjunction by the callee's summary,
    /// distributing over the callee's alternative states.
    fn expand(&self, owner: &str, deps: &State, pending: &BTreeSet<Invoke>) -> Result<Vec<State>, SolverError> {
        let approx = self.recursive.contains(owner) || pending.iter().any(|i| self.recursive.contains(i.func.as_str()));
        let mut next_bullet = max_bullet(deps.iter());
        let mut acc = vec![deps.clone()];
        for (k, inv) in pending.iter().enumerate() {
            let def = self
                .program
                .defs
                .get(&inv.func)
                .ok_or_else(|| LamError::UnresolvedFunction(inv.func.clone()))?;
            let states = self.summary.get(&inv.func).cloned().unwrap_or_default();
            let map = actual_map(def, inv, k)?;
            let instances: Vec<State> = states.iter().map(|s| instantiate_state(s, &map, next_bullet)).collect();
            next_bullet += max_bullet(states.iter().flatten());
            if instances.is_empty() {
                continue;
            }
            let mut out = BTreeSet::new();
            for a in &acc {
                for inst in &instances {
                    out.insert(a.union(inst).cloned().collect::<State>());
                }
            }
            if out.len() > self.cfg.max_states {
                return Err(SolverError::StateCap { func: owner.to_string(), cap: self.cfg.max_states });
            }
            // a state inside another closes inside it too
            let mut kept = maximal(out);
            if approx {
                kept = widen(kept, 4 * self.cfg.widen_at);
            }
            acc = kept.into_iter().collect();
        }
        Ok(acc)
    }

    /// Evaluate `body` against the current summaries and close every state.
    /// When `formals` is given, project onto it; witnesses of cycles go to
    /// `cycles`.
    fn eval(
        &self,
        owner: &str,
        body: &Lam,
        formals: Option<&BTreeSet<Name>>,
        mut cycles: Option<&mut Vec<Vec<Dependency>>>,
    ) -> Result<BTreeSet<State>, SolverError> {
        let avoid = formals.cloned().unwrap_or_default();
        let (flat, _) = body.freshen_binders(&avoid);
        let mark = marker(owner);
        let mut out = BTreeSet::new();
        for conj in dnf(&flat) {
            for st in self.expand(owner, &conj.deps, &conj.pending)? {
                let mut closed = closure_tracked(&st);
                if let Some(c) = cycles.as_deref_mut() {
                    c.extend(closed.circularities());
                }
                let deps = match formals {
                    Some(f) => {
                        let keep = |n: &Name| FunDef::is_formal(f, n) || is_marker(n);
                        let lost: Vec<Dependency> = closed
                            .deps
                            .iter()
                            .filter(|d| d.holder == d.wanted && d.thread.is_check() && !keep(&d.holder))
                            .map(|d| Dependency { holder: mark.clone(), wanted: mark.clone(), thread: d.thread.clone() })
                            .collect();
                        closed.deps.extend(lost);
                        drop_dominated(project(&closed.deps, &keep))
                    }
                    None => closed.deps,
                };
                out.insert(deps);
                if out.len() > self.cfg.max_states {
                    return Err(SolverError::StateCap { func: owner.to_string(), cap: self.cfg.max_states });
                }
            }
        }
        Ok(maximal(out))
    }
}

/// Formal-to-actual renaming for one invocation; formals left unmatched
/// get names private to this invocation.
fn actual_map(def: &FunDef, inv: &Invoke, k: usize) -> Result<BTreeMap<Name, Name>, SolverError> {
    if def.params.len() != inv.args.len() {
        return Err(LamError::Arity { func: def.name.clone(), expected: def.params.len(), got: inv.args.len() }.into());
    }
    let mut map = BTreeMap::new();
    for (f, a) in def.params.iter().zip(&inv.args) {
        bind_formal(f, a, &mut map);
    }
    if let (Some(f), Some(a)) = (&def.ret, &inv.ret) {
        bind_formal(f, a, &mut map);
    }
    for f in def.formal_names() {
        map.entry(f.clone()).or_insert_with(|| Name::new(format!("{f}~{k}")));
    }
    Ok(map)
}

fn max_bullet<'a>(deps: impl Iterator<Item = &'a Dependency>) -> u32 {
    deps.filter_map(|d| match d.thread {
        ThreadLabel::Bullet(k) => Some(k),
        _ => None,
    })
    .max()
    .unwrap_or(0)
}

fn instantiate_state(s: &State, map: &BTreeMap<Name, Name>, bullet_base: u32) -> State {
    let f = |n: &Name| map.get(n).cloned();
    s.iter()
        .map(|d| {
            let mut r = d.rename_with(&f);
            if let ThreadLabel::Bullet(k) = r.thread {
                r.thread = ThreadLabel::Bullet(k + bullet_base);
            }
            r
        })
        .collect()
}

/// Iterates summaries from all-`0` bodies to the fixpoint.
pub fn saturate(program: &LamProgram, cfg: SolverConfig) -> Result<(Summary, usize), SolverError> {
    program.validate()?;
    let mut current: Summary = program.defs.keys().map(|k| (k.clone(), BTreeSet::from([State::new()]))).collect();
    for round in 1..=cfg.max_rounds {
        let next = saturate_step(program, &current, cfg)?;
        if next == current {
            return Ok((current, round));
        }
        current = next;
    }
    Err(SolverError::IterationBound(cfg.max_rounds))
}

/// One saturation round: every body evaluated against `current`, joined
/// with `current` so that rounds only grow.
pub fn saturate_step(program: &LamProgram, current: &Summary, cfg: SolverConfig) -> Result<Summary, SolverError> {
    let rec = recursive(program);
    let ev = Evaluator { program, summary: current, cfg, recursive: rec.clone() };
    let mut next = Summary::new();
    for (name, def) in &program.defs {
        let formals = def.formal_names();
        let mut states = ev.eval(name, &def.body, Some(&formals), None)?;
        states.extend(current.get(name).into_iter().flatten().cloned());
        let mut states = maximal(states);
        if rec.contains(name.as_str()) {
            states = widen(states, cfg.widen_at);
        }
        next.insert(name.clone(), states);
    }
    Ok(next)
}

/// Functions on a cycle of the call graph.
fn recursive(program: &LamProgram) -> BTreeSet<&str> {
    let mut g: DiGraphMap<&str, ()> = DiGraphMap::new();
    for (name, def) in &program.defs {
        g.add_node(name.as_str());
        let mut cs = BTreeSet::new();
        callees(&def.body, &mut cs);
        for c in cs {
            if let Some((k, _)) = program.defs.get_key_value(&c) {
                g.add_edge(name.as_str(), k.as_str(), ());
            }
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .filter(|c| c.len() > 1 || g.contains_edge(c[0], c[0]))
        .flatten()
        .collect()
}

fn callees(l: &Lam, out: &mut BTreeSet<String>) {
    match l {
        Lam::Zero | Lam::Dep(_) => {}
        Lam::Invoke(i) => {
            out.insert(i.func.clone());
        }
        Lam::Nu(_, b) => callees(b, out),
        Lam::And(xs) | Lam::Or(xs) => xs.iter().for_each(|x| callees(x, out)),
    }
}

/// Union of two states. Anonymous threads become `✓`: once states are
/// merged their indices no longer tell threads apart, and `✓` is the
/// strongest label a pair can carry.
fn merge(a: &State, b: &State) -> State {
    a.iter()
        .chain(b)
        .map(|d| match d.thread {
            ThreadLabel::Bullet(_) => Dependency { thread: ThreadLabel::Check, ..d.clone() },
            _ => d.clone(),
        })
        .collect()
}

/// Merges states until at most `k` remain: first those relating the same
/// pairs of names, then neighbours in order. Each old state is contained in
/// a new one, so circularities are kept and rounds only grow.
fn widen(states: BTreeSet<State>, k: usize) -> BTreeSet<State> {
    if states.len() <= k {
        return states;
    }
    let mut groups: BTreeMap<BTreeSet<(Name, Name)>, State> = BTreeMap::new();
    for st in states {
        let key = st.iter().map(|d| (d.holder.clone(), d.wanted.clone())).collect();
        let merged = match groups.remove(&key) {
            Some(old) => merge(&old, &st),
            None => st,
        };
        groups.insert(key, merged);
    }
    let mut v: Vec<State> = maximal(groups.into_values().collect()).into_iter().collect();
    while v.len() > k.max(1) {
        v = v.chunks(2).map(|c| if c.len() == 2 { merge(&c[0], &c[1]) } else { c[0].clone() }).collect();
        v = maximal(v.into_iter().collect()).into_iter().collect();
    }
    v.into_iter().collect()
}

const MARKER: char = '⟲';

fn marker(func: &str) -> Name {
    Name::new(format!("{MARKER}{func}"))
}

fn is_marker(n: &Name) -> bool {
    n.as_str().starts_with(MARKER)
}

/// A witness for a cycle inside `func`: the shortest one its body closes
/// to, markers of callees replaced by their own witnesses.
fn inside(
    ev: &Evaluator,
    func: &str,
    seen: &mut BTreeSet<String>,
) -> Result<(Vec<Dependency>, BTreeSet<String>), SolverError> {
    let mut functions = BTreeSet::from([func.to_string()]);
    let Some(def) = ev.program.defs.get(func) else {
        return Ok((Vec::new(), functions));
    };
    if !seen.insert(func.to_string()) {
        return Ok((Vec::new(), functions));
    }
    let mut found = Vec::new();
    ev.eval(func, &def.body, Some(&def.formal_names()), Some(&mut found))?;
    let Some(best) = found.into_iter().min_by_key(|w| (w.iter().filter(|d| is_marker(&d.holder)).count(), w.len())) else {
        return Ok((Vec::new(), functions));
    };
    let mut out = Vec::new();
    for d in best {
        match d.holder.as_str().strip_prefix(MARKER) {
            Some(g) => {
                let (w, fs) = inside(ev, g, seen)?;
                functions.extend(fs);
                out.extend(w);
            }
            None => out.push(d),
        }
    }
    Ok((out, functions))
}

/// Decides whether the main lam displays a circularity.
pub fn analyze(program: &LamProgram, cfg: SolverConfig) -> Result<Verdict, SolverError> {
    let (summary, rounds) = saturate(program, cfg)?;
    let ev = Evaluator { program, summary: &summary, cfg, recursive: recursive(program) };
    // main is not projected: its free names act as global objects
    let mut found = Vec::new();
    ev.eval("main", &program.main, None, Some(&mut found))?;
    let mut by_set: BTreeMap<BTreeSet<Dependency>, Vec<Dependency>> = BTreeMap::new();
    for deps in found {
        by_set.entry(deps.iter().cloned().collect()).or_insert(deps);
    }
    let mut circularities = Vec::new();
    for deps in by_set.into_values() {
        let mut functions = BTreeSet::new();
        let mut shown = Vec::new();
        for d in &deps {
            match d.holder.as_str().strip_prefix(MARKER) {
                Some(f) => {
                    let (w, fs) = inside(&ev, f, &mut BTreeSet::new())?;
                    functions.extend(fs);
                    shown.extend(w);
                }
                None => {
                    functions.insert("main".to_string());
                    shown.push(d.clone());
                }
            }
        }
        circularities.push(Circularity {
            cycle: shown.iter().map(|d| d.to_string()).collect(),
            functions: functions.into_iter().collect(),
            deps: shown,
        });
    }
    Ok(Verdict { circularities, rounds })
}
