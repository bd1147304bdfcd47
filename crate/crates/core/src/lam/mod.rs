//! Lams: behavioural types built from thread-labelled lock dependencies,
//! function invocations, name binders, conjunction and disjunction.
//!
//! Terms are kept in an AC-normal form by the smart constructors
//! ([`Lam::and`], [`Lam::or`], [`Lam::normalize`]): `&` and `+` are n-ary,
//! flattened, sorted and deduplicated, and `0` is the unit of both. Two
//! lams are equal modulo AC, unit and idempotence iff their normal forms are
//! structurally equal.

mod dnf;
mod parse;
mod print;

pub use dnf::{dnf, Conj};
pub use parse::{parse_lam, parse_lam_term};
pub use print::print_lam;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::name::Name;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LamError {
    #[error("lam syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unresolved function `{0}`")]
    UnresolvedFunction(String),
    #[error("arity mismatch calling `{func}`: expected {expected} arguments, got {got}")]
    Arity { func: String, expected: usize, got: usize },
    #[error("unbound name `{name}` in body of `{func}`")]
    Unbound { func: String, name: Name },
    #[error("duplicate definition of `{0}`")]
    DuplicateDef(String),
}

/// Thread label of a dependency.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ThreadLabel {
    Named(Name),
    /// Produced by the contribution of two or more distinct threads.
    Check,
    /// An anonymous thread whose name was projected away. The index keeps
    /// anonymous threads of one conjunctive state apart.
    Bullet(u32),
    /// `✓` made of named threads only, kept apart so that renaming them to
    /// one thread undoes it. Only the solver's summaries produce it.
    Joint(BTreeSet<Name>),
}

impl ThreadLabel {
    /// Label of the composition of two dependencies `(a,b)_self & (b,c)_other`.
    pub fn compose(&self, other: &ThreadLabel) -> ThreadLabel {
        match (self, other) {
            (ThreadLabel::Named(a), ThreadLabel::Named(b)) if a == b => self.clone(),
            (ThreadLabel::Bullet(a), ThreadLabel::Bullet(b)) if a == b => self.clone(),
            _ => ThreadLabel::Check,
        }
    }

    /// Like [`ThreadLabel::compose`], but distinct named threads give a
    /// [`ThreadLabel::Joint`] over their names.
    pub fn compose_tracked(&self, other: &ThreadLabel) -> ThreadLabel {
        match (self.names(), other.names()) {
            (Some(a), Some(b)) => ThreadLabel::from_names(a.union(&b).cloned().collect()),
            _ => self.compose(other),
        }
    }

    fn names(&self) -> Option<BTreeSet<Name>> {
        match self {
            ThreadLabel::Named(n) => Some(BTreeSet::from([n.clone()])),
            ThreadLabel::Joint(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// One name is that thread, more are a joint `✓`.
    pub fn from_names(mut s: BTreeSet<Name>) -> ThreadLabel {
        match s.len() {
            1 => ThreadLabel::Named(s.pop_first().expect("one name")),
            _ => ThreadLabel::Joint(s),
        }
    }

    /// `✓`, joint or not.
    pub fn is_check(&self) -> bool {
        matches!(self, ThreadLabel::Check | ThreadLabel::Joint(_))
    }

    pub fn named(&self) -> Option<&Name> {
        match self {
            ThreadLabel::Named(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for ThreadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThreadLabel::Named(n) => write!(f, "{n}"),
            ThreadLabel::Check => f.write_str("✓"),
            ThreadLabel::Bullet(0) => f.write_str("•"),
            ThreadLabel::Bullet(k) => write!(f, "•{k}"),
            ThreadLabel::Joint(s) => {
                write!(f, "✓{{{}}}", s.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(","))
            }
        }
    }
}

/// `(holder, wanted)_thread`: `thread`, owning the lock of `holder`, is
/// going to lock `wanted`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Dependency {
    pub holder: Name,
    pub wanted: Name,
    pub thread: ThreadLabel,
}

impl Dependency {
    pub fn new(holder: impl Into<Name>, wanted: impl Into<Name>, thread: ThreadLabel) -> Self {
        Dependency { holder: holder.into(), wanted: wanted.into(), thread }
    }

    pub fn named(holder: &str, wanted: &str, thread: &str) -> Self {
        Dependency::new(holder, wanted, ThreadLabel::Named(Name::new(thread)))
    }

    pub fn rename_with(&self, f: &dyn Fn(&Name) -> Option<Name>) -> Dependency {
        Dependency {
            holder: self.holder.rename_with(f),
            wanted: self.wanted.rename_with(f),
            thread: match &self.thread {
                ThreadLabel::Named(n) => ThreadLabel::Named(n.rename_with(f)),
                ThreadLabel::Joint(s) => ThreadLabel::from_names(s.iter().map(|n| n.rename_with(f)).collect()),
                other => other.clone(),
            },
        }
    }
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})_{}", self.holder, self.wanted, self.thread)
    }
}

/// Structured argument of an invocation: `_` or `root[field: arg, ...]`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum SType {
    Top,
    Node { root: Name, fields: Vec<(String, SType)> },
}

impl SType {
    pub fn name(n: impl Into<Name>) -> SType {
        SType::Node { root: n.into(), fields: Vec::new() }
    }

    pub fn root(&self) -> Option<&Name> {
        match self {
            SType::Top => None,
            SType::Node { root, .. } => Some(root),
        }
    }

    /// All names in preorder.
    pub fn names(&self, out: &mut Vec<Name>) {
        if let SType::Node { root, fields } = self {
            out.push(root.clone());
            for (_, f) in fields {
                f.names(out);
            }
        }
    }

    pub fn rename_with(&self, f: &dyn Fn(&Name) -> Option<Name>) -> SType {
        match self {
            SType::Top => SType::Top,
            SType::Node { root, fields } => SType::Node {
                root: root.rename_with(f),
                fields: fields.iter().map(|(k, v)| (k.clone(), v.rename_with(f))).collect(),
            },
        }
    }
}

/// Pairs each formal name with the actual name found at the same position.
/// Positions where the actual is `_` or lacks the field stay unbound; the
/// first binding of a repeated formal name wins.
pub fn bind_formal(formal: &SType, actual: &SType, map: &mut BTreeMap<Name, Name>) {
    match (formal, actual) {
        (SType::Node { root: fr, fields: ff }, SType::Node { root: ar, fields: af }) => {
            map.entry(fr.clone()).or_insert_with(|| ar.clone());
            for (fname, fsub) in ff {
                if let Some((_, asub)) = af.iter().find(|(n, _)| n == fname) {
                    bind_formal(fsub, asub, map);
                }
            }
        }
        _ => {}
    }
}

/// `func(args) [-> ret]`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Invoke {
    pub func: String,
    pub args: Vec<SType>,
    pub ret: Option<SType>,
}

impl Invoke {
    pub fn rename_with(&self, f: &dyn Fn(&Name) -> Option<Name>) -> Invoke {
        Invoke {
            func: self.func.clone(),
            args: self.args.iter().map(|a| a.rename_with(f)).collect(),
            ret: self.ret.as_ref().map(|r| r.rename_with(f)),
        }
    }

    pub fn names(&self, out: &mut Vec<Name>) {
        for a in &self.args {
            a.names(out);
        }
        if let Some(r) = &self.ret {
            r.names(out);
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub enum Lam {
    #[default]
    Zero,
    Dep(Dependency),
    Invoke(Invoke),
    Nu(Vec<Name>, Box<Lam>),
    And(Vec<Lam>),
    Or(Vec<Lam>),
}

impl Lam {
    pub fn dep(d: Dependency) -> Lam {
        Lam::Dep(d)
    }

    pub fn and(a: Lam, b: Lam) -> Lam {
        Lam::and_all([a, b])
    }

    pub fn or(a: Lam, b: Lam) -> Lam {
        Lam::or_all([a, b])
    }

    pub fn and_all(items: impl IntoIterator<Item = Lam>) -> Lam {
        let mut flat = Vec::new();
        for it in items {
            match it {
                Lam::Zero => {}
                Lam::And(xs) => flat.extend(xs),
                x => flat.push(x),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => Lam::Zero,
            1 => flat.pop().unwrap(),
            _ => Lam::And(flat),
        }
    }

    pub fn or_all(items: impl IntoIterator<Item = Lam>) -> Lam {
        let mut flat = Vec::new();
        for it in items {
            match it {
                Lam::Zero => {}
                Lam::Or(xs) => flat.extend(xs),
                x => flat.push(x),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => Lam::Zero,
            1 => flat.pop().unwrap(),
            _ => Lam::Or(flat),
        }
    }

    pub fn nu(binders: impl IntoIterator<Item = Name>, body: Lam) -> Lam {
        let free = body.free_names();
        let mut bs: Vec<Name> = binders
            .into_iter()
            .filter(|b| free.contains(b) || free.contains(&Name::lock_of(b)))
            .collect();
        bs.sort();
        bs.dedup();
        if bs.is_empty() {
            return body;
        }
        match body {
            Lam::Nu(inner, b) if inner.iter().all(|n| !bs.contains(n)) => {
                bs.extend(inner);
                bs.sort();
                Lam::Nu(bs, b)
            }
            body => Lam::Nu(bs, Box::new(body)),
        }
    }

    /// AC-normal form.
    pub fn normalize(&self) -> Lam {
        match self {
            Lam::Zero | Lam::Dep(_) | Lam::Invoke(_) => self.clone(),
            Lam::Nu(bs, body) => Lam::nu(bs.iter().cloned(), body.normalize()),
            Lam::And(xs) => Lam::and_all(xs.iter().map(Lam::normalize)),
            Lam::Or(xs) => Lam::or_all(xs.iter().map(Lam::normalize)),
        }
    }

    /// Every name occurring in the term, bound or free, pseudo-locks
    /// included.
    pub fn all_names(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.walk_names(&mut |n| {
            out.insert(n.clone());
        });
        out
    }

    fn walk_names(&self, f: &mut impl FnMut(&Name)) {
        match self {
            Lam::Zero => {}
            Lam::Dep(d) => {
                f(&d.holder);
                f(&d.wanted);
                match &d.thread {
                    ThreadLabel::Named(t) => f(t),
                    ThreadLabel::Joint(ts) => ts.iter().for_each(&mut *f),
                    _ => {}
                }
            }
            Lam::Invoke(inv) => {
                let mut v = Vec::new();
                inv.names(&mut v);
                v.iter().for_each(f);
            }
            Lam::Nu(bs, body) => {
                bs.iter().for_each(&mut *f);
                body.walk_names(f);
            }
            Lam::And(xs) | Lam::Or(xs) => xs.iter().for_each(|x| x.walk_names(f)),
        }
    }

    /// Free names. A pseudo-lock `lock$x` is free iff `x` is.
    pub fn free_names(&self) -> BTreeSet<Name> {
        match self {
            Lam::Nu(bs, body) => {
                let mut s = body.free_names();
                s.retain(|n| {
                    let base = n.lock_owner().unwrap_or_else(|| n.clone());
                    !bs.contains(n) && !bs.contains(&base)
                });
                s
            }
            Lam::And(xs) | Lam::Or(xs) => xs.iter().flat_map(Lam::free_names).collect(),
            _ => self.all_names(),
        }
    }

    /// Simultaneous renaming of free names. Binders are assumed not to
    /// clash with the renaming's range (see [`Lam::freshen_binders`]).
    pub fn rename(&self, map: &BTreeMap<Name, Name>) -> Lam {
        self.rename_with(&|n: &Name| map.get(n).cloned())
    }

    pub fn rename_with(&self, f: &dyn Fn(&Name) -> Option<Name>) -> Lam {
        match self {
            Lam::Zero => Lam::Zero,
            Lam::Dep(d) => Lam::Dep(d.rename_with(f)),
            Lam::Invoke(i) => Lam::Invoke(i.rename_with(f)),
            Lam::Nu(bs, body) => {
                let shadow = |n: &Name| {
                    let base = n.lock_owner().unwrap_or_else(|| n.clone());
                    if bs.contains(n) || bs.contains(&base) {
                        None
                    } else {
                        f(n)
                    }
                };
                Lam::Nu(bs.clone(), Box::new(body.rename_with(&shadow)))
            }
            Lam::And(xs) => Lam::And(xs.iter().map(|x| x.rename_with(f)).collect()),
            Lam::Or(xs) => Lam::Or(xs.iter().map(|x| x.rename_with(f)).collect()),
        }
    }

    /// Renames every binder that collides with `avoid` or with an earlier
    /// binder to `base'k`, then removes all binders. The result has no `Nu`
    /// and each former binder occurrence denotes a distinct name; the
    /// returned map sends each new name to the binder it replaced.
    pub fn freshen_binders(&self, avoid: &BTreeSet<Name>) -> (Lam, BTreeMap<Name, Name>) {
        let mut used: BTreeSet<Name> = avoid.clone();
        used.extend(self.all_names());
        let mut origin = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let out = self.freshen_rec(avoid, &mut used, &mut seen, &mut origin);
        (out, origin)
    }

    fn freshen_rec(
        &self,
        avoid: &BTreeSet<Name>,
        used: &mut BTreeSet<Name>,
        seen: &mut BTreeSet<Name>,
        origin: &mut BTreeMap<Name, Name>,
    ) -> Lam {
        match self {
            Lam::Nu(bs, body) => {
                let mut map = BTreeMap::new();
                for b in bs {
                    if avoid.contains(b) || seen.contains(b) {
                        let mut k = 1;
                        let fresh = loop {
                            let cand = Name::new(format!("{b}'{k}"));
                            if !used.contains(&cand) {
                                break cand;
                            }
                            k += 1;
                        };
                        used.insert(fresh.clone());
                        seen.insert(fresh.clone());
                        origin.insert(fresh.clone(), b.clone());
                        map.insert(b.clone(), fresh);
                    } else {
                        seen.insert(b.clone());
                        origin.insert(b.clone(), b.clone());
                    }
                }
                let renamed = body.rename(&map);
                renamed.freshen_rec(avoid, used, seen, origin)
            }
            Lam::And(xs) => Lam::And(xs.iter().map(|x| x.freshen_rec(avoid, used, seen, origin)).collect()),
            Lam::Or(xs) => Lam::Or(xs.iter().map(|x| x.freshen_rec(avoid, used, seen, origin)).collect()),
            other => other.clone(),
        }
    }

    pub fn invokes(&self, out: &mut Vec<Invoke>) {
        match self {
            Lam::Invoke(i) => out.push(i.clone()),
            Lam::Nu(_, b) => b.invokes(out),
            Lam::And(xs) | Lam::Or(xs) => xs.iter().for_each(|x| x.invokes(out)),
            _ => {}
        }
    }
}

impl fmt::Display for Lam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print::lam_to_string(self))
    }
}

/// `name(params) [-> ret] = body`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<SType>,
    pub ret: Option<SType>,
    pub body: Lam,
}

impl FunDef {
    /// Names bound by the parameter list and the return pattern.
    pub fn formal_names(&self) -> BTreeSet<Name> {
        let mut v = Vec::new();
        for p in &self.params {
            p.names(&mut v);
        }
        if let Some(r) = &self.ret {
            r.names(&mut v);
        }
        v.into_iter().collect()
    }

    /// Whether `n` is a formal or the pseudo-lock of one.
    pub fn is_formal(formals: &BTreeSet<Name>, n: &Name) -> bool {
        formals.contains(n) || n.lock_owner().is_some_and(|o| formals.contains(&o))
    }

    /// Body instance for the call `inv`: formals replaced by the actual
    /// names at matching positions, every bound name replaced by a name from
    /// `fresh` that occurs neither in the actuals nor elsewhere in the body.
    /// Formals left unmatched (the actual is `_`) are freshened too.
    pub fn instantiate(&self, inv: &Invoke, fresh: &mut NameSupply) -> Result<Lam, LamError> {
        if inv.args.len() != self.params.len() {
            return Err(LamError::Arity {
                func: self.name.clone(),
                expected: self.params.len(),
                got: inv.args.len(),
            });
        }
        let formals = self.formal_names();
        let mut actual_names = Vec::new();
        inv.names(&mut actual_names);
        let mut avoid = formals.clone();
        avoid.extend(actual_names.iter().cloned());
        fresh.avoid.extend(actual_names);
        let (flat, _) = self.body.freshen_binders(&avoid);

        let mut map = BTreeMap::new();
        for (f, a) in self.params.iter().zip(&inv.args) {
            bind_formal(f, a, &mut map);
        }
        if let (Some(f), Some(a)) = (&self.ret, &inv.ret) {
            bind_formal(f, a, &mut map);
        }
        for n in &formals {
            if !map.contains_key(n) {
                map.insert(n.clone(), fresh.next_for(n));
            }
        }
        // formerly bound names (and stray ones) become supply names
        for n in flat.all_names() {
            let base = n.lock_owner().unwrap_or_else(|| n.clone());
            if !map.contains_key(&base) {
                map.insert(base.clone(), fresh.next_for(&base));
            }
        }
        Ok(flat.rename(&map).normalize())
    }
}

/// Deterministic supply of fresh names, `$fresh<k>` by default.
#[derive(Clone, Debug)]
pub struct NameSupply {
    prefix: String,
    next: u64,
    pub avoid: BTreeSet<Name>,
}

impl NameSupply {
    pub fn new(prefix: impl Into<String>) -> Self {
        NameSupply { prefix: prefix.into(), next: 0, avoid: BTreeSet::new() }
    }

    pub fn next_name(&mut self) -> Name {
        loop {
            self.next += 1;
            let n = Name::new(format!("{}{}", self.prefix, self.next));
            if !self.avoid.contains(&n) {
                self.avoid.insert(n.clone());
                return n;
            }
        }
    }

    /// A fresh name; the hint is ignored beyond keeping call sites readable.
    pub fn next_for(&mut self, _hint: &Name) -> Name {
        self.next_name()
    }
}

impl Default for NameSupply {
    fn default() -> Self {
        NameSupply::new("$fresh")
    }
}

/// A set of function definitions plus the main lam.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct LamProgram {
    pub defs: BTreeMap<String, FunDef>,
    pub main: Lam,
}

impl LamProgram {
    /// Every invocation resolves with matching arity; every free name of a
    /// body is a formal (or its pseudo-lock). `main` may mention free names,
    /// which stand for distinct top-level objects.
    pub fn validate(&self) -> Result<(), LamError> {
        let check_invokes = |lam: &Lam| -> Result<(), LamError> {
            let mut invs = Vec::new();
            lam.invokes(&mut invs);
            for inv in invs {
                let def = self
                    .defs
                    .get(&inv.func)
                    .ok_or_else(|| LamError::UnresolvedFunction(inv.func.clone()))?;
                if def.params.len() != inv.args.len() {
                    return Err(LamError::Arity {
                        func: inv.func.clone(),
                        expected: def.params.len(),
                        got: inv.args.len(),
                    });
                }
            }
            Ok(())
        };
        for def in self.defs.values() {
            check_invokes(&def.body)?;
            let formals = def.formal_names();
            for n in def.body.free_names() {
                if !FunDef::is_formal(&formals, &n) {
                    return Err(LamError::Unbound { func: def.name.clone(), name: n });
                }
            }
        }
        check_invokes(&self.main)
    }

    /// Whether some function can reach itself through invocations.
    pub fn is_recursive(&self) -> bool {
        let mut graph: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
        for (name, def) in &self.defs {
            let mut invs = Vec::new();
            def.body.invokes(&mut invs);
            graph.insert(name, invs.into_iter().map(|i| i.func).collect());
        }
        for start in self.defs.keys() {
            let mut stack: Vec<String> = graph[start.as_str()].iter().cloned().collect();
            let mut seen = BTreeSet::new();
            while let Some(f) = stack.pop() {
                if &f == start {
                    return true;
                }
                if seen.insert(f.clone()) {
                    if let Some(next) = graph.get(f.as_str()) {
                        stack.extend(next.iter().cloned());
                    }
                }
            }
        }
        false
    }
}

/// The function `RUN$C` modelling unboundedly many threads of class `C`
/// sharing the field objects described by `carrier`:
/// `RUN$C(a[..]) = C.run(a[..], a, lock$a) & nu a'.( RUN$C(a'[..]) )`.
pub fn build_run_def(class: &str, carrier: &SType) -> FunDef {
    let root = carrier.root().cloned().unwrap_or_else(|| Name::new("this"));
    let fields = match carrier {
        SType::Node { fields, .. } => fields.clone(),
        SType::Top => Vec::new(),
    };
    let param = SType::Node { root: root.clone(), fields: fields.clone() };
    let other = Name::new(format!("{root}'"));
    let name = run_function_name(class);
    let body = Lam::and(
        Lam::Invoke(Invoke {
            func: format!("{class}.run"),
            args: vec![param.clone(), SType::name(root.clone()), SType::name(Name::lock_of(&root))],
            ret: None,
        }),
        Lam::nu(
            [other.clone()],
            Lam::Invoke(Invoke {
                func: name.clone(),
                args: vec![SType::Node { root: other, fields }],
                ret: None,
            }),
        ),
    );
    FunDef { name, params: vec![param], ret: None, body }
}

pub fn run_function_name(class: &str) -> String {
    format!("RUN${class}")
}
