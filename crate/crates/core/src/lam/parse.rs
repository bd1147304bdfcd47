use std::collections::BTreeMap;

use super::{Dependency, FunDef, Invoke, Lam, LamError, LamProgram, SType, ThreadLabel};
use crate::name::Name;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    Colon,
    Eq,
    Amp,
    Plus,
    Arrow,
    Dot,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '$' | '#' | '\'' | '/' | '@' | '.')
}

fn lex(src: &str) -> Result<Vec<(Tok, usize, usize)>, LamError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            *i += n;
            col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => advance(1, &mut i),
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' | ')' | '[' | ']' | ',' | ':' | '=' | '&' | '+' => {
                let t = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBrack,
                    ']' => Tok::RBrack,
                    ',' => Tok::Comma,
                    ':' => Tok::Colon,
                    '=' => Tok::Eq,
                    '&' => Tok::Amp,
                    _ => Tok::Plus,
                };
                out.push((t, l0, c0));
                advance(1, &mut i);
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push((Tok::Arrow, l0, c0));
                advance(2, &mut i);
            }
            '.' => {
                out.push((Tok::Dot, l0, c0));
                advance(1, &mut i);
            }
            c if is_name_char(c) => {
                let start = i;
                while i < chars.len() && is_name_char(chars[i]) {
                    // a dot ends the name when it opens a binder body
                    if chars[i] == '.' {
                        let next = chars.get(i + 1).copied();
                        if next.is_none_or(|n| n == '(' || n.is_whitespace()) {
                            break;
                        }
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                col += i - start;
                out.push((Tok::Ident(text), l0, c0));
            }
            other => {
                return Err(LamError::Syntax { line, col, msg: format!("unexpected character `{other}`") })
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.0)
    }

    fn err(&self, msg: impl Into<String>) -> LamError {
        let (line, col) = self
            .toks
            .get(self.pos)
            .or(self.toks.last())
            .map(|t| (t.1, t.2))
            .unwrap_or((1, 1));
        LamError::Syntax { line, col, msg: msg.into() }
    }

    fn expect(&mut self, t: Tok) -> Result<(), LamError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {t:?}, found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, LamError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            other => Err(self.err(format!("expected a name, found {other:?}"))),
        }
    }

    fn stype(&mut self) -> Result<SType, LamError> {
        let root = self.ident()?;
        if root == "_" {
            return Ok(SType::Top);
        }
        let mut fields = Vec::new();
        if self.peek() == Some(&Tok::LBrack) {
            self.pos += 1;
            if self.peek() != Some(&Tok::RBrack) {
                loop {
                    let f = self.ident()?;
                    self.expect(Tok::Colon)?;
                    fields.push((f, self.stype()?));
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RBrack)?;
        }
        Ok(SType::Node { root: Name::new(root), fields })
    }

    fn stype_list(&mut self) -> Result<Vec<SType>, LamError> {
        self.expect(Tok::LParen)?;
        let mut out = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                out.push(self.stype()?);
                if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<Lam, LamError> {
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Tok::Plus) {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(Lam::or_all(terms))
    }

    fn term(&mut self) -> Result<Lam, LamError> {
        let mut fs = vec![self.factor()?];
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            fs.push(self.factor()?);
        }
        Ok(Lam::and_all(fs))
    }

    fn factor(&mut self) -> Result<Lam, LamError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                let is_dep = matches!(self.peek_at(1), Some(Tok::Ident(_)))
                    && self.peek_at(2) == Some(&Tok::Comma);
                self.pos += 1;
                if is_dep {
                    let a = self.ident()?;
                    self.expect(Tok::Comma)?;
                    let b = self.ident()?;
                    self.expect(Tok::RParen)?;
                    let label = self.ident()?;
                    let t = label
                        .strip_prefix('_')
                        .filter(|t| !t.is_empty())
                        .ok_or_else(|| self.err("dependency needs a thread label `_t`"))?;
                    Ok(Lam::Dep(Dependency::new(a, b, ThreadLabel::Named(Name::new(t)))))
                } else {
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(e)
                }
            }
            Some(Tok::Ident(s)) if s == "0" => {
                self.pos += 1;
                Ok(Lam::Zero)
            }
            Some(Tok::Ident(s)) if s == "nu" && self.peek_at(1) != Some(&Tok::LParen) => {
                self.pos += 1;
                let mut names = vec![Name::new(self.ident()?)];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    names.push(Name::new(self.ident()?));
                }
                self.expect(Tok::Dot)?;
                self.expect(Tok::LParen)?;
                let body = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(Lam::nu(names, body))
            }
            Some(Tok::Ident(_)) => {
                let func = self.ident()?;
                let args = self.stype_list()?;
                let ret = if self.peek() == Some(&Tok::Arrow) {
                    self.pos += 1;
                    Some(self.stype()?)
                } else {
                    None
                };
                Ok(Lam::Invoke(Invoke { func, args, ret }))
            }
            other => Err(self.err(format!("expected a lam, found {other:?}"))),
        }
    }
}

/// Parses a single lam term; function names are not resolved.
pub fn parse_lam_term(src: &str) -> Result<Lam, LamError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let l = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(l)
}

/// Parses and validates a `.lam` program.
pub fn parse_lam(src: &str) -> Result<LamProgram, LamError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let mut defs = BTreeMap::new();
    loop {
        let name = p.ident()?;
        if name == "main" && p.peek() == Some(&Tok::Eq) {
            p.pos += 1;
            let main = p.expr()?;
            if p.pos != p.toks.len() {
                return Err(p.err("trailing input after main"));
            }
            let prog = LamProgram { defs, main };
            prog.validate()?;
            return Ok(prog);
        }
        let params = p.stype_list()?;
        let ret = if p.peek() == Some(&Tok::Arrow) {
            p.pos += 1;
            Some(p.stype()?)
        } else {
            None
        };
        p.expect(Tok::Eq)?;
        let body = p.expr()?;
        if defs.contains_key(&name) {
            return Err(LamError::DuplicateDef(name));
        }
        defs.insert(name.clone(), FunDef { name, params, ret, body });
        if p.peek().is_none() {
            return Err(p.err("missing `main = ...`"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lam::print_lam;

    #[test]
    fn parses_fork_taking_body() {
        let p = parse_lam("takeForks(this,x,y,t,u) = (u,x)_t & (x,y)_t\nmain = 0").unwrap();
        let def = &p.defs["takeForks"];
        assert_eq!(def.params.len(), 5);
        assert_eq!(
            def.body,
            Lam::and(
                Lam::Dep(Dependency::named("u", "x", "t")),
                Lam::Dep(Dependency::named("x", "y", "t"))
            )
        );
        let mut invs = Vec::new();
        def.body.invokes(&mut invs);
        assert!(invs.is_empty());
    }

    #[test]
    fn empty_main() {
        let p = parse_lam("main = 0").unwrap();
        assert!(p.defs.is_empty());
        assert_eq!(p.main, Lam::Zero);
    }

    #[test]
    fn binder_pair() {
        let p = parse_lam("f(x,t,u) = nu z,t1.( (u,z)_t1 )  main = f(a,t0,bot)").unwrap();
        match &p.defs["f"].body {
            Lam::Nu(bs, _) => assert_eq!(bs, &vec![Name::new("t1"), Name::new("z")]),
            other => panic!("expected binder, got {other:?}"),
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_lam("main = g(a)"), Err(LamError::UnresolvedFunction(_))));
        assert!(matches!(parse_lam("f(x) = 0 main = f(a,b)"), Err(LamError::Arity { .. })));
        assert!(matches!(parse_lam("f(x,t) = (x,y)_t main = 0"), Err(LamError::Unbound { .. })));
        assert!(matches!(parse_lam("main = (a,b)"), Err(LamError::Syntax { .. })));
    }

    #[test]
    fn structured_arguments_round_trip() {
        let src = "Network$1.init(this[this$0: X, val$x: Y], x1, x2, t, u) -> this[this$0: x1, val$x: x2] = 0\n\
                   main = nu a,t0.( Network$1.init(a[this$0: _, val$x: _], a, a, t0, lock$t0) -> a[this$0: a, val$x: a] )\n";
        let p = parse_lam(src).unwrap();
        let again = parse_lam(&print_lam(&p)).unwrap();
        assert_eq!(p, again);
    }
}
