//! Behavioural type inference: one lam per method, computed by abstract
//! interpretation of the bytecode and a fixpoint over the call graph.

mod env;
mod method;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::frontend::{Addr, ClassTable, FlowFacts, FrontendError, MethodId, TypeName};
use crate::lam::{build_run_def, FunDef, Invoke, Lam, LamProgram, SType};
use crate::name::Name;

pub use env::{formal_env, match_formal, AVal, Env, Flat, Shape};
pub use method::{fresh_names, param_formal, AbstractState, Contribution, LAST_LOCK, THREAD};

use method::{formals, Ctx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("{method} at {addr}: {msg}")]
    At { method: String, addr: Addr, msg: String },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("no entry method named `main`")]
    NoEntry,
    #[error("several candidate entry methods: {0}")]
    AmbiguousEntry(String),
    #[error("unknown entry method {0}")]
    UnknownEntry(String),
    #[error("no fixpoint for {methods} within {bound} iterations")]
    NoFixpoint { methods: String, bound: usize },
}

/// One entry of the behavioural class table.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MethodBehavior {
    pub id: MethodId,
    /// Receiver as seen by the callee; all fields `_` for constructors.
    pub carrier: SType,
    pub args: Vec<SType>,
    pub thread: Name,
    pub last_lock: Name,
    /// Names bound by `nu` in the body.
    pub binder: Vec<Name>,
    /// Lam return pattern: the initialised receiver for constructors, the
    /// returned object otherwise.
    pub ret: Option<SType>,
    pub ret_val: Option<AVal>,
    pub carrier_after: SType,
    /// Threads left running on return, by formal or exported name.
    pub once: BTreeSet<Name>,
    pub many: BTreeSet<Name>,
    /// Bindings visible to callers: everything reachable from the formals,
    /// the returned object and the started threads.
    pub exports: Env,
    pub body: Lam,
}

impl MethodBehavior {
    /// Entry used for methods of the current recursive cycle that have not
    /// been typed yet.
    pub fn initial(table: &ClassTable, id: &MethodId) -> MethodBehavior {
        let def = table.method(id).expect("known method");
        let (fenv, vals) = formals(table, id, def);
        let empty = BTreeMap::new();
        let carrier = fenv.constr(&Name::new("this"), table, &empty).to_stype();
        let mut exports = fenv.clone();
        let ret_val = def.ret.as_ref().map(|t| match t {
            TypeName::Int => AVal::Int,
            TypeName::Top => AVal::Top,
            TypeName::Class(c) => {
                let n = Name::new(format!("{id}#ret"));
                formal_env(table, c, &n, true, &mut exports);
                AVal::Obj(n)
            }
        });
        let ret = if id.method == "init" {
            Some(carrier.clone())
        } else {
            match &ret_val {
                Some(AVal::Obj(n)) => Some(exports.constr(n, table, &empty).to_stype()),
                _ => None,
            }
        };
        MethodBehavior {
            id: id.clone(),
            carrier: carrier.clone(),
            args: vals[1..].iter().map(|v| shape_of(&fenv, table, v)).collect(),
            thread: Name::new(THREAD),
            last_lock: Name::new(LAST_LOCK),
            binder: Vec::new(),
            ret,
            ret_val,
            carrier_after: carrier,
            once: BTreeSet::new(),
            many: BTreeSet::new(),
            exports,
            body: Lam::Zero,
        }
    }

    pub fn to_fundef(&self) -> FunDef {
        let mut params = vec![self.carrier.clone()];
        params.extend(self.args.iter().cloned());
        params.push(SType::name(self.thread.clone()));
        params.push(SType::name(self.last_lock.clone()));
        FunDef { name: self.id.to_string(), params, ret: self.ret.clone(), body: self.body.clone() }
    }
}

fn shape_of(env: &Env, table: &ClassTable, v: &AVal) -> SType {
    match v {
        AVal::Obj(n) => env.constr(n, table, &BTreeMap::new()).to_stype(),
        _ => SType::Top,
    }
}

pub type Bct = BTreeMap<MethodId, MethodBehavior>;

/// Upper bound on re-typing rounds per call-graph cycle.
pub const FIXPOINT_BOUND: usize = 1_000;

fn scc_of(facts: &FlowFacts, id: &MethodId) -> BTreeSet<MethodId> {
    facts.sccs.iter().find(|s| s.contains(id)).map(|s| s.iter().cloned().collect()).unwrap_or_default()
}

/// Types one method body against `bct`.
pub fn type_method(table: &ClassTable, facts: &FlowFacts, bct: &Bct, id: &MethodId) -> Result<MethodBehavior, TypeError> {
    let def = table.method(id).ok_or_else(|| TypeError::UnknownEntry(id.to_string()))?;
    let scc = scc_of(facts, id);
    let ctx = Ctx { table, facts, bct, id, def, scc: &scc };
    let analysis = ctx.analyze()?;
    let init = ctx.initial_state();
    let empty = BTreeMap::new();
    let this = Name::new("this");
    let carrier = init.gamma.constr(&this, table, &empty).to_stype();
    let (_, vals) = formals(table, id, def);
    let args: Vec<SType> = vals[1..].iter().map(|v| shape_of(&init.gamma, table, v)).collect();

    let mut behavior = MethodBehavior::initial(table, id);
    behavior.carrier = carrier.clone();
    behavior.args = args.clone();
    if let Some((exit, ret_val)) = &analysis.exit {
        let local = &exit.local;
        behavior.once = exit.once.difference(local).cloned().collect();
        behavior.many = exit.many.difference(local).cloned().collect();
        behavior.carrier_after = exit.gamma.constr(&this, table, &empty).to_stype();
        behavior.ret_val = ret_val.clone();
        behavior.ret = if id.method == "init" {
            Some(behavior.carrier_after.clone())
        } else {
            match ret_val {
                Some(AVal::Obj(n)) => Some(exit.gamma.constr(n, table, &empty).to_stype()),
                _ => None,
            }
        };
        let mut roots: Vec<Name> = vals.iter().filter_map(|v| v.obj().cloned()).collect();
        roots.extend(ret_val.as_ref().and_then(|v| v.obj().cloned()));
        roots.extend(behavior.once.iter().cloned());
        roots.extend(behavior.many.iter().cloned());
        behavior.exports = exit.gamma.restrict(&exit.gamma.reachable(roots));
    }

    let mut summands: Vec<Lam> = Vec::new();
    for (i, st) in &analysis.states {
        let c = &analysis.contributions[i];
        match ctx.effective_lam(st, c) {
            Lam::Or(xs) => summands.extend(xs),
            Lam::Zero => {}
            l => summands.push(l),
        }
    }
    let body = Lam::or_all(drop_subsumed(summands));
    let formal = behavior.to_fundef().formal_names();
    let binder: BTreeSet<Name> = body
        .free_names()
        .into_iter()
        .filter(|n| !FunDef::is_formal(&formal, n))
        .map(|n| n.lock_owner().unwrap_or(n))
        .filter(|n| !formal.contains(n))
        .collect();
    behavior.body = Lam::nu(binder.iter().cloned(), body);
    behavior.binder = match &behavior.body {
        Lam::Nu(bs, _) => bs.clone(),
        _ => Vec::new(),
    };
    Ok(behavior)
}

fn conjuncts(l: &Lam) -> BTreeSet<&Lam> {
    match l {
        Lam::And(xs) => xs.iter().collect(),
        l => BTreeSet::from([l]),
    }
}

/// Drops summands whose conjuncts all occur in another summand.
fn drop_subsumed(mut summands: Vec<Lam>) -> Vec<Lam> {
    summands.sort();
    summands.dedup();
    let sets: Vec<BTreeSet<&Lam>> = summands.iter().map(conjuncts).collect();
    let keep: Vec<bool> = (0..sets.len())
        .map(|k| !(0..sets.len()).any(|j| j != k && sets[k].is_subset(&sets[j]) && sets[k] != sets[j]))
        .collect();
    summands.into_iter().zip(keep).filter(|(_, k)| *k).map(|(l, _)| l).collect()
}

/// The behavioural class table: every method typed, cycles of the call
/// graph iterated until their entries are stable.
pub fn infer_bct(table: &ClassTable, facts: &FlowFacts) -> Result<Bct, TypeError> {
    let mut bct = Bct::new();
    for scc in &facts.sccs {
        for round in 0.. {
            if round == FIXPOINT_BOUND {
                let names: Vec<String> = scc.iter().map(|m| m.to_string()).collect();
                return Err(TypeError::NoFixpoint { methods: names.join(", "), bound: FIXPOINT_BOUND });
            }
            let mut changed = false;
            for id in scc {
                let b = type_method(table, facts, &bct, id)?;
                if bct.get(id) != Some(&b) {
                    bct.insert(id.clone(), b);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    Ok(bct)
}

/// The entry `C.m` if given, else the unique method named `main`.
pub fn resolve_entry(table: &ClassTable, entry: Option<&str>) -> Result<MethodId, TypeError> {
    match entry {
        Some(e) => {
            let id = MethodId::parse(e).ok_or_else(|| TypeError::UnknownEntry(e.to_string()))?;
            table.method(&id).map(|_| id.clone()).ok_or_else(|| TypeError::UnknownEntry(e.to_string()))
        }
        None => {
            let mains: Vec<MethodId> = table.method_ids().filter(|m| m.method == "main").collect();
            match mains.len() {
                0 => Err(TypeError::NoEntry),
                1 => Ok(mains[0].clone()),
                _ => Err(TypeError::AmbiguousEntry(mains.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(", "))),
            }
        }
    }
}

/// Lam program of a typed table: one definition per method, one `RUN$C`
/// per thread class, and a main lam calling `entry` on fresh objects.
pub fn emit_program(table: &ClassTable, bct: &Bct, entry: &MethodId) -> LamProgram {
    let mut defs = BTreeMap::new();
    for b in bct.values() {
        let d = b.to_fundef();
        defs.insert(d.name.clone(), d);
        if b.id.method == "run" {
            let r = build_run_def(&b.id.class, &b.carrier);
            defs.insert(r.name.clone(), r);
        }
    }
    let main = match bct.get(entry) {
        None => Lam::Zero,
        Some(b) => {
            let global = |n: &Name| Some(Name::new(format!("main${n}")));
            let t = Name::new(format!("main${THREAD}"));
            let mut args = vec![b.carrier.rename_with(&global)];
            args.extend(b.args.iter().map(|a| a.rename_with(&global)));
            args.push(SType::name(t.clone()));
            args.push(SType::name(Name::lock_of(&t)));
            Lam::Invoke(Invoke { func: entry.to_string(), args, ret: None })
        }
    };
    let _ = table;
    LamProgram { defs, main }
}

/// Parse-level facts to lam program in one call.
pub fn infer(table: &ClassTable, facts: &FlowFacts, entry: Option<&str>) -> Result<(Bct, LamProgram), TypeError> {
    let entry = resolve_entry(table, entry)?;
    let bct = infer_bct(table, facts)?;
    let program = emit_program(table, &bct, &entry);
    Ok((bct, program))
}

/// One instruction of `method` from `state`: successor states and the
/// instruction's own lam contribution.
pub fn step_type(
    table: &ClassTable,
    facts: &FlowFacts,
    bct: &Bct,
    method: &MethodId,
    i: Addr,
    state: AbstractState,
) -> Result<(Vec<(Addr, AbstractState)>, Contribution), TypeError> {
    let def = table.method(method).ok_or_else(|| TypeError::UnknownEntry(method.to_string()))?;
    let ins = def.body.get(&i).ok_or_else(|| TypeError::At {
        method: method.to_string(),
        addr: i,
        msg: "no instruction".into(),
    })?;
    let scc = scc_of(facts, method);
    let ctx = Ctx { table, facts, bct, id: method, def, scc: &scc };
    let s = ctx.step(i, ins, state)?;
    Ok((s.succ, s.contribution))
}

/// State in which `method` starts: formals bound, `Z` holding `u` only.
pub fn initial_state(table: &ClassTable, facts: &FlowFacts, method: &MethodId) -> Option<AbstractState> {
    let def = table.method(method)?;
    let scc = BTreeSet::new();
    let bct = Bct::new();
    Some(Ctx { table, facts, bct: &bct, id: method, def, scc: &scc }.initial_state())
}

/// Join of the states reaching address `at` of `method`.
pub fn merge(
    table: &ClassTable,
    facts: &FlowFacts,
    method: &MethodId,
    at: Addr,
    states: &[AbstractState],
) -> Result<AbstractState, TypeError> {
    let def = table.method(method).ok_or_else(|| TypeError::UnknownEntry(method.to_string()))?;
    let scc = BTreeSet::new();
    let bct = Bct::new();
    let ctx = Ctx { table, facts, bct: &bct, id: method, def, scc: &scc };
    let (first, rest) = states.split_first().expect("at least one state");
    rest.iter().try_fold(first.clone(), |acc, s| ctx.join(&acc, s, at))
}

/// Lam of one address: contribution, lock chain and parallel threads.
pub fn effective_lam(table: &ClassTable, facts: &FlowFacts, method: &MethodId, state: &AbstractState, c: &Contribution) -> Lam {
    let Some(def) = table.method(method) else { return Lam::Zero };
    let scc = BTreeSet::new();
    let bct = Bct::new();
    Ctx { table, facts, bct: &bct, id: method, def, scc: &scc }.effective_lam(state, c)
}
