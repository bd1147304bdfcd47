//! Assembly reader.
//!
//! ```text
//! class Network {
//!   fields:
//!   methods:
//!     void takeForks(Object x, Object y) {
//!       0: load x
//!       1: monitorenter
//!       ...
//!     }
//! }
//! ```
//!
//! Parameter names are optional; unnamed parameters are called `arg1`,
//! `arg2`, ... The bytecode sugar `aload`, `iload`, `astore`, `istore`,
//! `ifne`, `invokespecial` and `isub` is accepted.

use std::collections::BTreeMap;

use super::{Addr, ClassDef, ClassTable, FieldRef, FrontendError, Instr, MethodDef, MethodRef, TypeName};

#[derive(Clone, PartialEq, Eq, Debug)]
enum Tok {
    Ident(String),
    Num(u64),
    Punct(char),
    Eof,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    col: usize,
}

fn is_ident(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '$' | '.')
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { chars: src.char_indices().peekable(), line: 1, col: 1 }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, FrontendError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '/' {
                    let mut look = self.chars.clone();
                    look.next();
                    if look.peek().map(|(_, c)| *c) == Some('/') {
                        while let Some(c) = self.bump() {
                            if c == '\n' {
                                break;
                            }
                        }
                    } else {
                        break;
                    }
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            if c.is_ascii_digit() {
                let mut s = String::new();
                while let Some(d) = self.peek().filter(|d| d.is_ascii_digit()) {
                    s.push(d);
                    self.bump();
                }
                if self.peek().is_some_and(|c| is_ident(c) && c != '.') {
                    return Err(FrontendError::Syntax { line, col, msg: format!("malformed number `{s}...`") });
                }
                let n = s
                    .parse()
                    .map_err(|_| FrontendError::Syntax { line, col, msg: format!("number `{s}` out of range") })?;
                out.push((Tok::Num(n), line, col));
            } else if is_ident(c) {
                let mut s = String::new();
                while let Some(d) = self.peek().filter(|d| is_ident(*d)) {
                    s.push(d);
                    self.bump();
                }
                out.push((Tok::Ident(s), line, col));
            } else if "{}(),:".contains(c) {
                self.bump();
                out.push((Tok::Punct(c), line, col));
            } else {
                return Err(FrontendError::Syntax { line, col, msg: format!("unexpected character `{c}`") });
            }
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, FrontendError> {
        let (_, line, col) = self.toks[self.pos];
        Err(FrontendError::Syntax { line, col, msg: msg.into() })
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn punct(&mut self, c: char) -> Result<(), FrontendError> {
        if *self.peek() == Tok::Punct(c) {
            self.next();
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {}", describe(self.peek())))
        }
    }

    fn is_punct(&self, c: char) -> bool {
        *self.peek() == Tok::Punct(c)
    }

    fn ident(&mut self, what: &str) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            t => self.err(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn simple_ident(&mut self, what: &str) -> Result<String, FrontendError> {
        let s = self.ident(what)?;
        if s.contains('.') {
            self.pos -= 1;
            return self.err(format!("`.` not allowed in {what} `{s}`"));
        }
        Ok(s)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            t => self.err(format!("expected `{kw}`, found {}", describe(t))),
        }
    }

    fn addr(&mut self) -> Result<Addr, FrontendError> {
        match self.peek() {
            Tok::Num(n) if *n <= Addr::MAX as u64 => {
                let n = *n as Addr;
                self.next();
                Ok(n)
            }
            t => self.err(format!("expected address, found {}", describe(t))),
        }
    }

    fn ty(&mut self) -> Result<TypeName, FrontendError> {
        let s = self.simple_ident("type")?;
        Ok(type_of(&s))
    }

    fn program(&mut self) -> Result<ClassTable, FrontendError> {
        let mut table = ClassTable::default();
        while *self.peek() != Tok::Eof {
            let c = self.class()?;
            if table.classes.contains_key(&c.name) {
                return Err(FrontendError::DuplicateClass(c.name));
            }
            table.classes.insert(c.name.clone(), c);
        }
        Ok(table)
    }

    fn class(&mut self) -> Result<ClassDef, FrontendError> {
        self.keyword("class")?;
        let name = self.simple_ident("class name")?;
        if matches!(name.as_str(), "int" | "top" | "void") {
            self.pos -= 1;
            return self.err(format!("reserved class name `{name}`"));
        }
        self.punct('{')?;
        let mut fields = Vec::new();
        if matches!(self.peek(), Tok::Ident(s) if s == "fields") {
            self.next();
            self.punct(':')?;
            while !matches!(self.peek(), Tok::Ident(s) if s == "methods") && !self.is_punct('}') {
                let f = self.simple_ident("field name")?;
                self.punct(':')?;
                let t = self.ty()?;
                fields.push((f, t));
            }
        }
        let mut methods = BTreeMap::new();
        if matches!(self.peek(), Tok::Ident(s) if s == "methods") {
            self.next();
            self.punct(':')?;
            while !self.is_punct('}') {
                let m = self.method(&name)?;
                if methods.contains_key(&m.name) {
                    return Err(FrontendError::DuplicateMethod { class: name, method: m.name });
                }
                methods.insert(m.name.clone(), m);
            }
        }
        self.punct('}')?;
        Ok(ClassDef { name, fields, methods })
    }

    fn method(&mut self, class: &str) -> Result<MethodDef, FrontendError> {
        let ret = self.simple_ident("return type")?;
        let ret = (ret != "void").then(|| type_of(&ret));
        let name = self.simple_ident("method name")?;
        self.punct('(')?;
        let mut params = Vec::new();
        while !self.is_punct(')') {
            if !params.is_empty() {
                self.punct(',')?;
            }
            let t = self.ty()?;
            let n = match self.peek() {
                Tok::Ident(_) => self.simple_ident("parameter name")?,
                _ => format!("arg{}", params.len() + 1),
            };
            params.push((n, t));
        }
        self.punct(')')?;
        self.punct('{')?;
        let mut body = BTreeMap::new();
        while !self.is_punct('}') {
            let a = self.addr()?;
            self.punct(':')?;
            let ins = self.instr()?;
            if body.insert(a, ins).is_some() {
                return Err(FrontendError::DuplicateAddress { method: format!("{class}.{name}"), addr: a });
            }
        }
        self.punct('}')?;
        Ok(MethodDef { name, ret, params, body })
    }

    fn field_ref(&mut self) -> Result<FieldRef, FrontendError> {
        let at = self.pos;
        let path = self.ident("field reference")?;
        self.punct(':')?;
        let ty = self.ty()?;
        match path.rsplit_once('.') {
            Some((c, f)) if !c.is_empty() && !f.is_empty() => {
                Ok(FieldRef { class: c.to_string(), field: f.to_string(), ty })
            }
            _ => {
                self.pos = at;
                self.err(format!("expected `Class.field`, found `{path}`"))
            }
        }
    }

    fn method_ref(&mut self) -> Result<MethodRef, FrontendError> {
        let path = self.ident("method reference")?;
        let Some((c, m)) = path.rsplit_once('.').filter(|(c, m)| !c.is_empty() && !m.is_empty()) else {
            self.pos -= 1;
            return self.err(format!("expected `Class.method`, found `{path}`"));
        };
        self.punct('(')?;
        let mut params = Vec::new();
        while !self.is_punct(')') {
            if !params.is_empty() {
                self.punct(',')?;
            }
            params.push(self.ty()?);
        }
        self.punct(')')?;
        Ok(MethodRef { class: c.to_string(), method: m.to_string(), params })
    }

    fn instr(&mut self) -> Result<Instr, FrontendError> {
        let op = self.simple_ident("instruction")?;
        Ok(match op.as_str() {
            "inc" => Instr::Inc,
            "pop" => Instr::Pop,
            "push" => Instr::Push,
            "dup" => Instr::Dup,
            "sub" | "isub" => Instr::Sub,
            "load" | "aload" | "iload" => Instr::Load(self.simple_ident("variable")?),
            "store" | "astore" | "istore" => Instr::Store(self.simple_ident("variable")?),
            "if" | "ifne" => Instr::If(self.addr()?),
            "goto" => Instr::Goto(self.addr()?),
            "new" => Instr::New(self.simple_ident("class name")?),
            "putfield" => Instr::PutField(self.field_ref()?),
            "getfield" => Instr::GetField(self.field_ref()?),
            "monitorenter" => Instr::MonitorEnter,
            "monitorexit" => Instr::MonitorExit,
            "invokevirtual" | "invokespecial" => Instr::InvokeVirtual(self.method_ref()?),
            "start" => Instr::Start(self.simple_ident("class name")?),
            "return" => Instr::Return,
            _ => {
                self.pos -= 1;
                return self.err(format!("unknown instruction `{op}`"));
            }
        })
    }
}

fn type_of(s: &str) -> TypeName {
    match s {
        "int" => TypeName::Int,
        "top" => TypeName::Top,
        c => TypeName::Class(c.to_string()),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(n) => format!("`{n}`"),
        Tok::Punct(c) => format!("`{c}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parses and validates an assembly program.
pub fn parse_program(src: &str) -> Result<ClassTable, FrontendError> {
    let toks = Lexer::new(src).tokens()?;
    let table = Parser { toks, pos: 0 }.program()?;
    table.validate()?;
    Ok(table)
}
