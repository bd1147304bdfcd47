//! JVML_d class tables: textual assembly, validation and flow facts.

mod flow;
mod parse;
mod print;

pub use flow::{executed_once, flow_facts, FlowFacts, MethodFlow};
pub use parse::parse_program;
pub use print::print_program;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub type Addr = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrontendError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("class `{class}`: duplicate field `{field}`")]
    DuplicateField { class: String, field: String },
    #[error("class `{class}`: duplicate method `{method}` (overloading is not supported)")]
    DuplicateMethod { class: String, method: String },
    #[error("{method}: duplicate address {addr}")]
    DuplicateAddress { method: String, addr: Addr },
    #[error("{method}: missing address 0")]
    MissingEntry { method: String },
    #[error("{method}@{addr}: jump to missing address {target}")]
    MissingTarget { method: String, addr: Addr, target: Addr },
    #[error("{method}@{addr}: falls through past the last address")]
    FallsOffEnd { method: String, addr: Addr },
    #[error("undeclared class `{0}`")]
    UndeclaredClass(String),
    #[error("undeclared field `{0}`")]
    UndeclaredField(String),
    #[error("undeclared method `{0}`")]
    UndeclaredMethod(String),
    #[error("recursive class type through `{0}`")]
    RecursiveClass(String),
    #[error("class `{0}` has no `run()` method")]
    NoRun(String),
    #[error("{method}: duplicate parameter name `{name}`")]
    DuplicateParam { method: String, name: String },
    #[error("unknown method or address: {0}")]
    Unknown(String),
}

/// Value types of fields, parameters and results.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum TypeName {
    Top,
    Int,
    Class(String),
}

impl fmt::Display for TypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeName::Top => f.write_str("top"),
            TypeName::Int => f.write_str("int"),
            TypeName::Class(c) => f.write_str(c),
        }
    }
}

/// `C.m`, the key of a method (no overloading).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct MethodId {
    pub class: String,
    pub method: String,
}

impl MethodId {
    pub fn new(class: impl Into<String>, method: impl Into<String>) -> Self {
        MethodId { class: class.into(), method: method.into() }
    }

    /// Parses `C.m`, splitting at the last dot.
    pub fn parse(s: &str) -> Option<MethodId> {
        let (c, m) = s.rsplit_once('.')?;
        (!c.is_empty() && !m.is_empty()).then(|| MethodId::new(c, m))
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.class, self.method)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FieldRef {
    pub class: String,
    pub field: String,
    pub ty: TypeName,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MethodRef {
    pub class: String,
    pub method: String,
    pub params: Vec<TypeName>,
}

impl MethodRef {
    pub fn id(&self) -> MethodId {
        MethodId::new(&self.class, &self.method)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Instr {
    Inc,
    Pop,
    Push,
    Dup,
    Sub,
    Load(String),
    Store(String),
    If(Addr),
    Goto(Addr),
    New(String),
    PutField(FieldRef),
    GetField(FieldRef),
    MonitorEnter,
    MonitorExit,
    InvokeVirtual(MethodRef),
    Start(String),
    Return,
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instr::Inc => f.write_str("inc"),
            Instr::Pop => f.write_str("pop"),
            Instr::Push => f.write_str("push"),
            Instr::Dup => f.write_str("dup"),
            Instr::Sub => f.write_str("sub"),
            Instr::Load(x) => write!(f, "load {x}"),
            Instr::Store(x) => write!(f, "store {x}"),
            Instr::If(l) => write!(f, "if {l}"),
            Instr::Goto(l) => write!(f, "goto {l}"),
            Instr::New(c) => write!(f, "new {c}"),
            Instr::PutField(r) => write!(f, "putfield {}.{}:{}", r.class, r.field, r.ty),
            Instr::GetField(r) => write!(f, "getfield {}.{}:{}", r.class, r.field, r.ty),
            Instr::MonitorEnter => f.write_str("monitorenter"),
            Instr::MonitorExit => f.write_str("monitorexit"),
            Instr::InvokeVirtual(m) => {
                let ps: Vec<String> = m.params.iter().map(|t| t.to_string()).collect();
                write!(f, "invokevirtual {}.{}({})", m.class, m.method, ps.join(", "))
            }
            Instr::Start(c) => write!(f, "start {c}"),
            Instr::Return => f.write_str("return"),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MethodDef {
    pub name: String,
    /// `None` for void.
    pub ret: Option<TypeName>,
    /// Parameter local names and types, receiver excluded.
    pub params: Vec<(String, TypeName)>,
    pub body: BTreeMap<Addr, Instr>,
}

impl MethodDef {
    /// The least address strictly greater than `i`.
    pub fn next_addr(&self, i: Addr) -> Option<Addr> {
        self.body.range(i + 1..).next().map(|(a, _)| *a)
    }

    pub fn param_types(&self) -> Vec<TypeName> {
        self.params.iter().map(|(_, t)| t.clone()).collect()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClassDef {
    pub name: String,
    pub fields: Vec<(String, TypeName)>,
    pub methods: BTreeMap<String, MethodDef>,
}

impl ClassDef {
    pub fn field(&self, f: &str) -> Option<&TypeName> {
        self.fields.iter().find(|(n, _)| n == f).map(|(_, t)| t)
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct ClassTable {
    pub classes: BTreeMap<String, ClassDef>,
}

impl ClassTable {
    pub fn method(&self, id: &MethodId) -> Option<&MethodDef> {
        self.classes.get(&id.class)?.methods.get(&id.method)
    }

    pub fn method_ids(&self) -> impl Iterator<Item = MethodId> + '_ {
        self.classes
            .values()
            .flat_map(|c| c.methods.keys().map(move |m| MethodId::new(&c.name, m)))
    }

    /// Checks every structural invariant of a class table.
    pub fn validate(&self) -> Result<(), FrontendError> {
        for c in self.classes.values() {
            let mut seen = BTreeSet::new();
            for (f, t) in &c.fields {
                if !seen.insert(f) {
                    return Err(FrontendError::DuplicateField { class: c.name.clone(), field: f.clone() });
                }
                self.check_type(t)?;
            }
            for m in c.methods.values() {
                self.validate_method(c, m)?;
            }
        }
        self.check_class_nesting()
    }

    fn check_type(&self, t: &TypeName) -> Result<(), FrontendError> {
        match t {
            TypeName::Class(c) if !self.classes.contains_key(c) => Err(FrontendError::UndeclaredClass(c.clone())),
            _ => Ok(()),
        }
    }

    fn validate_method(&self, c: &ClassDef, m: &MethodDef) -> Result<(), FrontendError> {
        let id = MethodId::new(&c.name, &m.name).to_string();
        if let Some(t) = &m.ret {
            self.check_type(t)?;
        }
        let mut names = BTreeSet::from(["this"]);
        for (n, t) in &m.params {
            self.check_type(t)?;
            if !names.insert(n.as_str()) {
                return Err(FrontendError::DuplicateParam { method: id, name: n.clone() });
            }
        }
        if !m.body.contains_key(&0) {
            return Err(FrontendError::MissingEntry { method: id });
        }
        for (&i, ins) in &m.body {
            match ins {
                Instr::If(l) | Instr::Goto(l) if !m.body.contains_key(l) => {
                    return Err(FrontendError::MissingTarget { method: id, addr: i, target: *l })
                }
                _ => {}
            }
            if !matches!(ins, Instr::Goto(_) | Instr::Return) && m.next_addr(i).is_none() {
                return Err(FrontendError::FallsOffEnd { method: id, addr: i });
            }
            match ins {
                Instr::New(k) => {
                    self.check_type(&TypeName::Class(k.clone()))?;
                }
                Instr::PutField(r) | Instr::GetField(r) => {
                    let cls = self.classes.get(&r.class).ok_or_else(|| FrontendError::UndeclaredClass(r.class.clone()))?;
                    if cls.field(&r.field) != Some(&r.ty) {
                        return Err(FrontendError::UndeclaredField(format!("{}.{}:{}", r.class, r.field, r.ty)));
                    }
                }
                Instr::InvokeVirtual(r) => {
                    let callee = self
                        .method(&r.id())
                        .ok_or_else(|| FrontendError::UndeclaredMethod(r.id().to_string()))?;
                    if callee.param_types() != r.params {
                        return Err(FrontendError::UndeclaredMethod(ins.to_string()));
                    }
                }
                Instr::Start(k) => {
                    let cls = self.classes.get(k).ok_or_else(|| FrontendError::UndeclaredClass(k.clone()))?;
                    match cls.methods.get("run") {
                        Some(run) if run.params.is_empty() => {}
                        _ => return Err(FrontendError::NoRun(k.clone())),
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Rejects cycles in the "has a field of class" relation.
    fn check_class_nesting(&self) -> Result<(), FrontendError> {
        // 0 unvisited, 1 on stack, 2 done
        let mut mark: BTreeMap<&str, u8> = BTreeMap::new();
        fn visit<'a>(t: &'a ClassTable, c: &'a str, mark: &mut BTreeMap<&'a str, u8>) -> Result<(), FrontendError> {
            match mark.get(c) {
                Some(1) => return Err(FrontendError::RecursiveClass(c.to_string())),
                Some(2) => return Ok(()),
                _ => {}
            }
            mark.insert(c, 1);
            for (_, ty) in &t.classes[c].fields {
                if let TypeName::Class(d) = ty {
                    visit(t, d, mark)?;
                }
            }
            mark.insert(c, 2);
            Ok(())
        }
        for c in self.classes.keys() {
            visit(self, c, &mut mark)?;
        }
        Ok(())
    }
}
