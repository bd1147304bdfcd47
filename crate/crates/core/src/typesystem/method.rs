//! Abstract interpretation of one method body under a thread name `t`.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{executed_once, Addr, ClassTable, FlowFacts, Instr, MethodDef, MethodId, TypeName};
use crate::lam::{run_function_name, Dependency, Invoke, Lam, SType, ThreadLabel};
use crate::name::Name;

use super::env::{formal_env, match_formal, AVal, Env, Flat};
use super::{Bct, MethodBehavior, TypeError};

/// Judgment components at one address: Γ, F, S, Z, T, R. `locks` lists Z
/// bottom first, so its last element is `top(Z)`. `local` marks threads
/// that came from calls inside the method's own recursive cycle and are
/// not exported to callers.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AbstractState {
    pub gamma: Env,
    pub frame: BTreeMap<String, AVal>,
    pub stack: Vec<AVal>,
    pub locks: Vec<Name>,
    pub once: BTreeSet<Name>,
    pub many: BTreeSet<Name>,
    pub local: BTreeSet<Name>,
}

/// What an instruction adds to the lam besides the state-derived part.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Contribution {
    Nothing,
    Dep { holder: Name, wanted: Name },
    Invoke { func: String, receiver: Name, args: Vec<Option<Name>>, last: Name, ret: Option<SType> },
}

pub const THREAD: &str = "t";
pub const LAST_LOCK: &str = "u";

/// Formal name of a parameter; avoids the thread and last-lock formals.
pub fn param_formal(p: &str) -> Name {
    if p == THREAD || p == LAST_LOCK {
        Name::new(format!("{p}$arg"))
    } else {
        Name::new(p)
    }
}

/// Formal environment and values of receiver plus parameters.
pub fn formals(table: &ClassTable, id: &MethodId, def: &MethodDef) -> (Env, Vec<AVal>) {
    let mut env = Env::default();
    let this = Name::new("this");
    formal_env(table, &id.class, &this, id.method == "init", &mut env);
    let mut vals = vec![AVal::Obj(this)];
    for (p, ty) in &def.params {
        vals.push(match ty {
            TypeName::Int => AVal::Int,
            TypeName::Top => AVal::Top,
            TypeName::Class(c) => {
                let n = param_formal(p);
                formal_env(table, c, &n, false, &mut env);
                AVal::Obj(n)
            }
        });
    }
    (env, vals)
}

/// `⌜i⌝`: deterministic names for the objects created at address `i`.
pub fn fresh_names(method: &MethodId, i: Addr, k: usize) -> Vec<Name> {
    (1..=k).map(|j| Name::new(format!("{method}#{i}#{j}"))).collect()
}

pub(super) struct Ctx<'a> {
    pub table: &'a ClassTable,
    pub facts: &'a FlowFacts,
    pub bct: &'a Bct,
    pub id: &'a MethodId,
    pub def: &'a MethodDef,
    pub scc: &'a BTreeSet<MethodId>,
}

pub(super) struct Analysis {
    pub states: BTreeMap<Addr, AbstractState>,
    pub contributions: BTreeMap<Addr, Contribution>,
    pub exit: Option<(AbstractState, Option<AVal>)>,
}

impl Ctx<'_> {
    fn err<T>(&self, addr: Addr, msg: impl Into<String>) -> Result<T, TypeError> {
        Err(TypeError::At { method: self.id.to_string(), addr, msg: msg.into() })
    }

    pub fn initial_state(&self) -> AbstractState {
        let (gamma, vals) = formals(self.table, self.id, self.def);
        let mut frame = BTreeMap::new();
        frame.insert("this".to_string(), vals[0].clone());
        for ((p, _), v) in self.def.params.iter().zip(&vals[1..]) {
            frame.insert(p.clone(), v.clone());
        }
        AbstractState {
            gamma,
            frame,
            stack: Vec::new(),
            locks: vec![Name::new(LAST_LOCK)],
            once: BTreeSet::new(),
            many: BTreeSet::new(),
            local: BTreeSet::new(),
        }
    }

    pub fn analyze(&self) -> Result<Analysis, TypeError> {
        let mut states = BTreeMap::new();
        states.insert(0, self.initial_state());
        let mut work: BTreeSet<Addr> = BTreeSet::from([0]);
        let mut contributions = BTreeMap::new();
        let mut exit: Option<(AbstractState, Option<AVal>)> = None;
        while let Some(i) = work.pop_first() {
            let st = states[&i].clone();
            let ins = &self.def.body[&i];
            let out = self.step(i, ins, st)?;
            contributions.insert(i, out.contribution);
            for (j, s) in out.succ {
                match states.get(&j) {
                    None => {
                        states.insert(j, s);
                        work.insert(j);
                    }
                    Some(old) => {
                        let joined = self.join(old, &s, j)?;
                        if &joined != old {
                            states.insert(j, joined);
                            work.insert(j);
                        }
                    }
                }
            }
            if let Some((s, v)) = out.exit {
                exit = Some(match exit {
                    None => (s, v),
                    Some((old, ov)) => {
                        let mut a = old;
                        let mut b = s;
                        a.stack.extend(ov.clone());
                        b.stack.extend(v.clone());
                        let mut j = self.join(&a, &b, Addr::MAX)?;
                        let rv = if ov.is_some() { j.stack.pop() } else { None };
                        (j, rv)
                    }
                });
            }
        }
        Ok(Analysis { states, contributions, exit })
    }

    fn pop(&self, i: Addr, st: &mut AbstractState) -> Result<AVal, TypeError> {
        match st.stack.pop() {
            Some(v) => Ok(v),
            None => self.err(i, "stack underflow"),
        }
    }

    fn pop_obj(&self, i: Addr, st: &mut AbstractState, class: Option<&str>) -> Result<Name, TypeError> {
        match self.pop(i, st)? {
            AVal::Obj(n) => {
                if let Some(c) = class {
                    let got = st.gamma.class_of(&n).unwrap_or("?");
                    if got != c {
                        return self.err(i, format!("expected an object of class {c}, found `{n}` of class {got}"));
                    }
                }
                Ok(n)
            }
            v => self.err(i, format!("expected an object, found {v}")),
        }
    }

    fn pop_scalar(&self, i: Addr, st: &mut AbstractState) -> Result<(), TypeError> {
        match self.pop(i, st)? {
            AVal::Int | AVal::Top => Ok(()),
            v => self.err(i, format!("expected an integer, found {v}")),
        }
    }

    fn add_threads(&self, i: Addr, st: &mut AbstractState, once: &BTreeSet<Name>, many: &BTreeSet<Name>, local: bool) -> Result<(), TypeError> {
        let single = executed_once(self.facts, self.id, i).map_err(|e| TypeError::Frontend(e))?;
        for t in many {
            st.once.remove(t);
            st.many.insert(t.clone());
        }
        for t in once {
            if single && !st.many.contains(t) {
                st.once.insert(t.clone());
            } else {
                st.once.remove(t);
                st.many.insert(t.clone());
            }
        }
        if local {
            st.local.extend(once.iter().chain(many).cloned());
        }
        Ok(())
    }

    pub fn step(&self, i: Addr, ins: &Instr, mut st: AbstractState) -> Result<Step, TypeError> {
        let next = self.def.next_addr(i);
        let mut contribution = Contribution::Nothing;
        let mut exit = None;
        let mut succ = Vec::new();
        match ins {
            Instr::Inc => {
                self.pop_scalar(i, &mut st)?;
                st.stack.push(AVal::Int);
            }
            Instr::Pop => {
                self.pop(i, &mut st)?;
            }
            Instr::Push => st.stack.push(AVal::Int),
            Instr::Dup => {
                let v = self.pop(i, &mut st)?;
                st.stack.push(v.clone());
                st.stack.push(v);
            }
            Instr::Sub => {
                self.pop_scalar(i, &mut st)?;
                self.pop_scalar(i, &mut st)?;
                st.stack.push(AVal::Int);
            }
            Instr::Load(x) => match st.frame.get(x) {
                Some(v) => st.stack.push(v.clone()),
                None => return self.err(i, format!("load of unassigned variable `{x}`")),
            },
            Instr::Store(x) => {
                let v = self.pop(i, &mut st)?;
                st.frame.insert(x.clone(), v);
            }
            Instr::If(l) => {
                self.pop(i, &mut st)?;
                succ.push((*l, st.clone()));
            }
            Instr::Goto(l) => {
                return Ok(Step { succ: vec![(*l, st)], contribution, exit });
            }
            Instr::New(c) => {
                let n = fresh_names(self.id, i, 1).remove(0);
                let fields = self.table.classes[c].fields.iter().map(|(f, _)| (f.clone(), AVal::Top)).collect();
                st.gamma.aliases.remove(&n);
                st.gamma.bindings.insert(n.clone(), Flat { class: c.clone(), fields });
                st.stack.push(AVal::Obj(n));
            }
            Instr::GetField(r) => {
                let a = self.pop_obj(i, &mut st, Some(&r.class))?;
                let v = st.gamma.bindings[&a].fields.get(&r.field).cloned().unwrap_or(AVal::Top);
                st.stack.push(v);
            }
            Instr::PutField(r) => {
                let v = self.pop(i, &mut st)?;
                let a = self.pop_obj(i, &mut st, Some(&r.class))?;
                if self.id.method != "init" || self.id.class != r.class {
                    return self.err(i, format!("putfield {}.{} outside the constructor of {}", r.class, r.field, r.class));
                }
                let slot = st.gamma.bindings.get_mut(&a).and_then(|f| f.fields.get_mut(&r.field));
                match slot {
                    Some(s) if *s == AVal::Top => *s = v,
                    _ => return self.err(i, format!("field {}.{} of `{a}` is already set", r.class, r.field)),
                }
            }
            Instr::MonitorEnter => {
                let a = self.pop_obj(i, &mut st, None)?;
                let top = st.locks.last().expect("lock base").clone();
                contribution = Contribution::Dep { holder: top, wanted: a.clone() };
                st.locks.push(a);
            }
            Instr::MonitorExit => {
                let a = self.pop_obj(i, &mut st, None)?;
                if st.locks.len() < 2 || st.locks.last() != Some(&a) {
                    return self.err(i, format!("monitorexit on `{a}`, which is not the last lock acquired"));
                }
                st.locks.pop();
            }
            Instr::InvokeVirtual(r) => {
                contribution = self.invoke(i, r.id(), &mut st)?;
            }
            Instr::Start(c) => {
                let t = self.pop_obj(i, &mut st, Some(c))?;
                self.add_threads(i, &mut st, &BTreeSet::from([t]), &BTreeSet::new(), false)?;
            }
            Instr::Return => {
                if st.locks.len() != 1 {
                    return self.err(i, "return while holding locks");
                }
                let v = match &self.def.ret {
                    None => None,
                    Some(_) => Some(self.pop(i, &mut st)?),
                };
                st.stack.clear();
                exit = Some((st, v));
                return Ok(Step { succ, contribution, exit });
            }
        }
        match next {
            Some(n) => succ.push((n, st)),
            None => return self.err(i, "falls through past the last address"),
        }
        Ok(Step { succ, contribution, exit })
    }

    fn invoke(&self, i: Addr, callee: MethodId, st: &mut AbstractState) -> Result<Contribution, TypeError> {
        let cdef = self.table.method(&callee).expect("validated call");
        let beh = match self.bct.get(&callee) {
            Some(b) => b.clone(),
            None => MethodBehavior::initial(self.table, &callee),
        };
        let mut args = Vec::new();
        for _ in &cdef.params {
            args.push(self.pop(i, st)?);
        }
        args.reverse();
        let recv = self.pop_obj(i, st, Some(&callee.class))?;
        let (fenv, fvals) = formals(self.table, &callee, cdef);

        let mut map = BTreeMap::new();
        map.insert(Name::new(THREAD), Name::new(THREAD));
        map.insert(Name::new(LAST_LOCK), st.locks.last().expect("lock base").clone());
        match_formal(&fenv, &Name::new("this"), &st.gamma, &recv, &mut map);
        for (fv, av) in fvals[1..].iter().zip(&args) {
            match (fv, av) {
                (AVal::Obj(f), AVal::Obj(a)) => match_formal(&fenv, f, &st.gamma, a, &mut map),
                (AVal::Obj(_), v) if *v != AVal::Top => {
                    return self.err(i, format!("argument {v} passed for an object parameter of {callee}"))
                }
                (AVal::Int, AVal::Obj(a)) => return self.err(i, format!("object `{a}` passed for an int parameter of {callee}")),
                _ => {}
            }
        }
        let prefix = format!("{}#{i}/", self.id);
        let rename = |n: &Name| -> Name {
            if let Some(a) = map.get(n) {
                return a.clone();
            }
            match n.as_str().find(&prefix) {
                Some(pos) => Name::new(&n.as_str()[pos..]),
                None => Name::new(format!("{prefix}{n}")),
            }
        };
        let actuals: BTreeSet<Name> = map.values().cloned().collect();
        let arg_roots: Vec<Option<Name>> = args.iter().map(|a| a.obj().cloned()).collect();
        st.gamma.absorb(&beh.exports.rename(&rename), &actuals);

        let ret_val = beh.ret_val.as_ref().map(|v| match v {
            AVal::Obj(n) => AVal::Obj(rename(n)),
            v => v.clone(),
        });
        let empty = BTreeMap::new();
        let ret = if callee.method == "init" {
            Some(st.gamma.constr(&recv, self.table, &empty).to_stype())
        } else {
            match &ret_val {
                Some(AVal::Obj(n)) => Some(st.gamma.constr(n, self.table, &empty).to_stype()),
                _ => None,
            }
        };
        if let Some(v) = ret_val {
            st.stack.push(v);
        }
        let once: BTreeSet<Name> = beh.once.iter().map(&rename).collect();
        let many: BTreeSet<Name> = beh.many.iter().map(&rename).collect();
        self.add_threads(i, st, &once, &many, self.scc.contains(&callee))?;
        Ok(Contribution::Invoke {
            func: callee.to_string(),
            receiver: recv,
            args: arg_roots,
            last: map[&Name::new(LAST_LOCK)].clone(),
            ret,
        })
    }

    /// Pointwise join of two states reaching address `at`.
    pub fn join(&self, a: &AbstractState, b: &AbstractState, at: Addr) -> Result<AbstractState, TypeError> {
        let at_label = if at == Addr::MAX { "exit".to_string() } else { at.to_string() };
        if a.stack.len() != b.stack.len() {
            return self.err(at, format!("stack depths {} and {} meet at {at_label}", a.stack.len(), b.stack.len()));
        }
        if a.locks != b.locks {
            return self.err(at, format!("different lock sequences meet at {at_label}"));
        }
        let mut gamma = join_env(&a.gamma, &b.gamma);
        let mut summaries = Vec::new();
        let mut jv = |x: &AVal, y: &AVal, pos: &str, gamma: &mut Env| -> Result<AVal, TypeError> {
            Ok(match (x, y) {
                _ if x == y => x.clone(),
                (AVal::Obj(p), AVal::Obj(q)) => {
                    let (cp, cq) = (gamma.class_of(p).unwrap_or("?").to_string(), gamma.class_of(q).unwrap_or("?").to_string());
                    if cp != cq {
                        return self.err(at, format!("objects of classes {cp} and {cq} meet at {at_label}"));
                    }
                    let s = Name::new(format!("{}#{at_label}#join{pos}", self.id));
                    let mut members = gamma.members(p);
                    members.extend(gamma.members(q));
                    members.remove(&s);
                    gamma.aliases.entry(s.clone()).or_default().extend(members);
                    summaries.push(s.clone());
                    AVal::Obj(s)
                }
                (AVal::Int, AVal::Int) => AVal::Int,
                _ => AVal::Top,
            })
        };
        let mut stack = Vec::new();
        for (k, (x, y)) in a.stack.iter().zip(&b.stack).enumerate() {
            stack.push(jv(x, y, &format!("s{k}"), &mut gamma)?);
        }
        let mut frame = BTreeMap::new();
        for (v, x) in &a.frame {
            if let Some(y) = b.frame.get(v) {
                frame.insert(v.clone(), jv(x, y, &format!("v{v}"), &mut gamma)?);
            }
        }
        for s in summaries {
            let members = gamma.aliases[&s].clone();
            let mut flat: Option<Flat> = None;
            for m in &members {
                if let Some(f) = gamma.bindings.get(m) {
                    flat = Some(match flat {
                        None => f.clone(),
                        Some(acc) => join_flat(&acc, f),
                    });
                }
            }
            if let Some(f) = flat {
                gamma.bindings.insert(s, f);
            }
        }
        let many: BTreeSet<Name> = a.many.union(&b.many).cloned().collect();
        let once = a.once.union(&b.once).filter(|t| !many.contains(*t)).cloned().collect();
        Ok(AbstractState {
            gamma,
            frame,
            stack,
            locks: a.locks.clone(),
            once,
            many,
            local: a.local.union(&b.local).cloned().collect(),
        })
    }

    /// The lam of address `i`: its contribution, the lock chain of `Z` and
    /// the threads running in parallel. Summary names are expanded into a
    /// disjunction over their members.
    pub fn effective_lam(&self, st: &AbstractState, c: &Contribution) -> Lam {
        expand(&st.gamma, &BTreeMap::new(), &|subst| self.build(st, c, subst))
    }

    fn build(&self, st: &AbstractState, c: &Contribution, subst: &BTreeMap<Name, Name>) -> Lam {
        let nm = |n: &Name| subst.get(n).cloned().unwrap_or_else(|| n.clone());
        let shape = |n: &Name| st.gamma.constr(n, self.table, subst).to_stype();
        let t = ThreadLabel::Named(Name::new(THREAD));
        let mut parts = Vec::new();
        match c {
            Contribution::Nothing => {}
            Contribution::Dep { holder, wanted } => {
                parts.push(Lam::Dep(Dependency { holder: nm(holder), wanted: nm(wanted), thread: t.clone() }))
            }
            Contribution::Invoke { func, receiver, args, last, ret } => {
                let mut a = vec![shape(receiver)];
                a.extend(args.iter().map(|x| x.as_ref().map_or(SType::Top, |n| shape(n))));
                a.push(SType::name(THREAD));
                a.push(SType::name(nm(last)));
                parts.push(Lam::Invoke(Invoke { func: func.clone(), args: a, ret: ret.clone() }));
            }
        }
        for w in st.locks.windows(2) {
            parts.push(Lam::Dep(Dependency { holder: nm(&w[0]), wanted: nm(&w[1]), thread: t.clone() }));
        }
        for th in &st.once {
            let r = nm(th);
            let class = st.gamma.class_of(&r).unwrap_or("?");
            parts.push(Lam::Invoke(Invoke {
                func: format!("{class}.run"),
                args: vec![shape(th), SType::name(r.clone()), SType::name(Name::lock_of(&r))],
                ret: None,
            }));
        }
        for th in &st.many {
            let class = st.gamma.class_of(&nm(th)).unwrap_or("?");
            parts.push(Lam::Invoke(Invoke { func: run_function_name(class), args: vec![shape(th)], ret: None }));
        }
        Lam::and_all(parts)
    }
}

pub(super) struct Step {
    pub succ: Vec<(Addr, AbstractState)>,
    pub contribution: Contribution,
    pub exit: Option<(AbstractState, Option<AVal>)>,
}

fn expand(gamma: &Env, subst: &BTreeMap<Name, Name>, build: &dyn Fn(&BTreeMap<Name, Name>) -> Lam) -> Lam {
    let l = build(subst);
    let pending = l.all_names().into_iter().find_map(|n| {
        let base = n.lock_owner().unwrap_or(n);
        (gamma.is_summary(&base) && !subst.contains_key(&base)).then_some(base)
    });
    match pending {
        None => l,
        Some(s) => Lam::or_all(gamma.members(&s).into_iter().map(|m| {
            let mut sub = subst.clone();
            sub.insert(s.clone(), m);
            expand(gamma, &sub, build)
        })),
    }
}

fn join_flat(a: &Flat, b: &Flat) -> Flat {
    let mut fields = a.fields.clone();
    for (k, v) in fields.iter_mut() {
        if b.fields.get(k) != Some(v) {
            *v = AVal::Top;
        }
    }
    Flat { class: a.class.clone(), fields }
}

fn join_env(a: &Env, b: &Env) -> Env {
    let mut out = a.clone();
    for (n, f) in &b.bindings {
        match out.bindings.get(n) {
            Some(mine) if mine != f => {
                let j = join_flat(mine, f);
                out.bindings.insert(n.clone(), j);
            }
            Some(_) => {}
            None => {
                out.bindings.insert(n.clone(), f.clone());
            }
        }
    }
    for (n, m) in &b.aliases {
        out.aliases.entry(n.clone()).or_default().extend(m.iter().cloned());
    }
    out
}
