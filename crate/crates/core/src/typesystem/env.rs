//! Flattened object environments and their structured views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::frontend::{ClassTable, TypeName};
use crate::lam::SType;
use crate::name::Name;

/// Abstract value held in a local, on the stack or in a field.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum AVal {
    Int,
    Top,
    Void,
    Obj(Name),
}

impl AVal {
    pub fn obj(&self) -> Option<&Name> {
        match self {
            AVal::Obj(n) => Some(n),
            _ => None,
        }
    }
}

impl fmt::Display for AVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AVal::Int => f.write_str("int"),
            AVal::Top => f.write_str("⊤"),
            AVal::Void => f.write_str("void"),
            AVal::Obj(n) => write!(f, "{n}"),
        }
    }
}

/// Flattened type `([f: v, ...], C)`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Flat {
    pub class: String,
    pub fields: BTreeMap<String, AVal>,
}

/// Bindings of symbolic names to flattened types. A name with an alias set
/// is a summary standing for any one of its members.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Env {
    pub bindings: BTreeMap<Name, Flat>,
    pub aliases: BTreeMap<Name, BTreeSet<Name>>,
}

/// Structured type: the tree of an object's fields, with class labels.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Shape {
    Top,
    Int,
    Obj { root: Name, class: String, fields: Vec<(String, Shape)> },
}

impl Shape {
    pub fn root(&self) -> Option<&Name> {
        match self {
            Shape::Obj { root, .. } => Some(root),
            _ => None,
        }
    }

    /// The lam argument form; integers become `_`.
    pub fn to_stype(&self) -> SType {
        match self {
            Shape::Top | Shape::Int => SType::Top,
            Shape::Obj { root, fields, .. } => SType::Node {
                root: root.clone(),
                fields: fields.iter().map(|(f, s)| (f.clone(), s.to_stype())).collect(),
            },
        }
    }
}

impl Env {
    pub fn class_of(&self, n: &Name) -> Option<&str> {
        self.bindings.get(n).map(|f| f.class.as_str())
    }

    pub fn is_summary(&self, n: &Name) -> bool {
        self.aliases.contains_key(n)
    }

    /// Members of a summary, or the name itself.
    pub fn members(&self, n: &Name) -> BTreeSet<Name> {
        match self.aliases.get(n) {
            Some(m) => m.clone(),
            None => BTreeSet::from([n.clone()]),
        }
    }

    /// `⟦Γ, a⟧`: expand `a` through the bindings. Names are looked up after
    /// `subst`, which picks one member for summaries.
    pub fn constr(&self, a: &Name, table: &ClassTable, subst: &BTreeMap<Name, Name>) -> Shape {
        let a = subst.get(a).unwrap_or(a);
        let Some(flat) = self.bindings.get(a) else {
            return Shape::Obj { root: a.clone(), class: String::new(), fields: Vec::new() };
        };
        let order: Vec<String> = match table.classes.get(&flat.class) {
            Some(c) => c.fields.iter().map(|(f, _)| f.clone()).collect(),
            None => flat.fields.keys().cloned().collect(),
        };
        let fields = order
            .into_iter()
            .map(|f| {
                let s = match flat.fields.get(&f) {
                    Some(AVal::Obj(b)) => self.constr(b, table, subst),
                    Some(AVal::Int) => Shape::Int,
                    _ => Shape::Top,
                };
                (f, s)
            })
            .collect();
        Shape::Obj { root: a.clone(), class: flat.class.clone(), fields }
    }

    /// `⦅ρ⦆`: one binding per node of the shape.
    pub fn destr(rho: &Shape) -> Env {
        let mut env = Env::default();
        fn go(s: &Shape, env: &mut Env) -> AVal {
            match s {
                Shape::Top => AVal::Top,
                Shape::Int => AVal::Int,
                Shape::Obj { root, class, fields } => {
                    let fs = fields.iter().map(|(f, sub)| (f.clone(), go(sub, env))).collect();
                    env.bindings.insert(root.clone(), Flat { class: class.clone(), fields: fs });
                    AVal::Obj(root.clone())
                }
            }
        }
        go(rho, &mut env);
        env
    }

    /// Names reachable from `roots` through fields and alias members.
    pub fn reachable(&self, roots: impl IntoIterator<Item = Name>) -> BTreeSet<Name> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<Name> = roots.into_iter().collect();
        while let Some(n) = stack.pop() {
            if !seen.insert(n.clone()) {
                continue;
            }
            if let Some(f) = self.bindings.get(&n) {
                stack.extend(f.fields.values().filter_map(|v| v.obj().cloned()));
            }
            if let Some(m) = self.aliases.get(&n) {
                stack.extend(m.iter().cloned());
            }
        }
        seen
    }

    pub fn restrict(&self, keep: &BTreeSet<Name>) -> Env {
        Env {
            bindings: self.bindings.iter().filter(|(n, _)| keep.contains(*n)).map(|(n, f)| (n.clone(), f.clone())).collect(),
            aliases: self.aliases.iter().filter(|(n, _)| keep.contains(*n)).map(|(n, m)| (n.clone(), m.clone())).collect(),
        }
    }

    pub fn rename(&self, f: &dyn Fn(&Name) -> Name) -> Env {
        let val = |v: &AVal| match v {
            AVal::Obj(n) => AVal::Obj(f(n)),
            v => v.clone(),
        };
        Env {
            bindings: self
                .bindings
                .iter()
                .map(|(n, fl)| {
                    let fields = fl.fields.iter().map(|(k, v)| (k.clone(), val(v))).collect();
                    (f(n), Flat { class: fl.class.clone(), fields })
                })
                .collect(),
            aliases: self.aliases.iter().map(|(n, m)| (f(n), m.iter().map(f).collect())).collect(),
        }
    }

    /// Binding-wise union. Names in `refine_only` keep their fields except
    /// where those are `⊤`; other names take the incoming binding.
    pub fn absorb(&mut self, other: &Env, refine_only: &BTreeSet<Name>) {
        for (n, fl) in &other.bindings {
            match self.bindings.get_mut(n) {
                Some(mine) if refine_only.contains(n) => {
                    for (k, v) in &fl.fields {
                        let slot = mine.fields.entry(k.clone()).or_insert(AVal::Top);
                        if *slot == AVal::Top {
                            *slot = v.clone();
                        }
                    }
                }
                _ => {
                    self.bindings.insert(n.clone(), fl.clone());
                }
            }
        }
        for (n, m) in &other.aliases {
            self.aliases.entry(n.clone()).or_default().extend(m.iter().cloned());
        }
    }
}

/// Formal environment of an object of `class` rooted at `root`: nested
/// objects are named `root.f`, `root.f.g`, ...
pub fn formal_env(table: &ClassTable, class: &str, root: &Name, all_top: bool, env: &mut Env) {
    let mut fields = BTreeMap::new();
    if let Some(c) = table.classes.get(class) {
        for (f, t) in &c.fields {
            let v = match t {
                _ if all_top => AVal::Top,
                TypeName::Int => AVal::Int,
                TypeName::Top => AVal::Top,
                TypeName::Class(d) => {
                    let n = Name::new(format!("{root}.{f}"));
                    formal_env(table, d, &n, false, env);
                    AVal::Obj(n)
                }
            };
            fields.insert(f.clone(), v);
        }
    }
    env.bindings.insert(root.clone(), Flat { class: class.to_string(), fields });
}

/// Pairs names of a formal tree with the actual names at the same
/// positions; positions where the actual is not an object stay unpaired.
pub fn match_formal(formal: &Env, f: &Name, actual: &Env, a: &Name, map: &mut BTreeMap<Name, Name>) {
    if map.contains_key(f) {
        return;
    }
    map.insert(f.clone(), a.clone());
    let (Some(ff), Some(af)) = (formal.bindings.get(f), actual.bindings.get(a)) else {
        return;
    };
    for (k, v) in &ff.fields {
        if let (AVal::Obj(fs), Some(AVal::Obj(asub))) = (v, af.fields.get(k)) {
            match_formal(formal, fs, actual, asub, map);
        }
    }
}
