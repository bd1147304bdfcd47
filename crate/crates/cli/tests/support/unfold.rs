//! Brute-force reference for the solver: unfold invocations to a fixed
//! depth with fresh names per instance, expand to conjunctions, and close
//! each one by plain transitive composition.

use std::collections::{BTreeMap, BTreeSet};

use lamlock_core::lam::{Dependency, Lam, LamProgram, SType, ThreadLabel};
use lamlock_core::Name;

type Conj = BTreeSet<Dependency>;

pub struct Unfolder<'a> {
    program: &'a LamProgram,
    counter: usize,
    /// Give up when a lam expands to more conjunctions than this.
    pub cap: usize,
}

fn subst(l: &Lam, map: &BTreeMap<Name, Name>) -> Lam {
    let get = |n: &Name| -> Name {
        if let Some(m) = map.get(n) {
            return m.clone();
        }
        match n.lock_owner().and_then(|o| map.get(&o)) {
            Some(m) => Name::lock_of(m),
            None => n.clone(),
        }
    };
    match l {
        Lam::Zero => Lam::Zero,
        Lam::Dep(d) => Lam::Dep(Dependency {
            holder: get(&d.holder),
            wanted: get(&d.wanted),
            thread: match &d.thread {
                ThreadLabel::Named(t) => ThreadLabel::Named(get(t)),
                t => t.clone(),
            },
        }),
        Lam::Invoke(i) => {
            let mut i = i.clone();
            i.args = i.args.iter().map(|a| a.rename_with(&|n| Some(get(n)))).collect();
            Lam::Invoke(i)
        }
        Lam::Nu(bs, b) => {
            let mut inner = map.clone();
            for x in bs {
                inner.remove(x);
            }
            Lam::Nu(bs.clone(), Box::new(subst(b, &inner)))
        }
        Lam::And(xs) => Lam::And(xs.iter().map(|x| subst(x, map)).collect()),
        Lam::Or(xs) => Lam::Or(xs.iter().map(|x| subst(x, map)).collect()),
    }
}

impl<'a> Unfolder<'a> {
    pub fn new(program: &'a LamProgram) -> Self {
        Unfolder { program, counter: 0, cap: 20_000 }
    }

    fn fresh(&mut self) -> Name {
        self.counter += 1;
        Name::new(format!("#u{}", self.counter))
    }

    /// Conjunctions of `l` with invocations unfolded `depth` times; `None`
    /// when the expansion exceeds the cap.
    pub fn expand(&mut self, l: &Lam, depth: usize) -> Option<BTreeSet<Conj>> {
        let out = match l {
            Lam::Zero => BTreeSet::from([Conj::new()]),
            Lam::Dep(d) => BTreeSet::from([Conj::from([d.clone()])]),
            Lam::Nu(bs, b) => {
                let map: BTreeMap<Name, Name> = bs.iter().map(|x| (x.clone(), self.fresh())).collect();
                let b = subst(b, &map);
                self.expand(&b, depth)?
            }
            Lam::Or(xs) => {
                let mut acc = BTreeSet::new();
                for x in xs {
                    acc.extend(self.expand(x, depth)?);
                }
                acc
            }
            Lam::And(xs) => {
                let mut acc = BTreeSet::from([Conj::new()]);
                for x in xs {
                    let right = self.expand(x, depth)?;
                    if acc.len() * right.len() > self.cap {
                        return None;
                    }
                    acc = acc.iter().flat_map(|a| right.iter().map(move |r| a.union(r).cloned().collect())).collect();
                }
                acc
            }
            Lam::Invoke(i) => {
                if depth == 0 {
                    return Some(BTreeSet::from([Conj::new()]));
                }
                let def = &self.program.defs[&i.func];
                let mut map = BTreeMap::new();
                for (f, a) in def.params.iter().zip(&i.args) {
                    if let (SType::Node { root: fr, .. }, SType::Node { root: ar, .. }) = (f, a) {
                        map.entry(fr.clone()).or_insert_with(|| ar.clone());
                    }
                }
                let mut unmatched: Vec<Name> = Vec::new();
                for f in &def.params {
                    if let SType::Node { root, .. } = f {
                        if !map.contains_key(root) {
                            unmatched.push(root.clone());
                        }
                    }
                }
                for f in unmatched {
                    let n = self.fresh();
                    map.insert(f, n);
                }
                let body = subst(&def.body, &map);
                self.expand(&body, depth - 1)?
            }
        };
        if out.len() > self.cap {
            None
        } else {
            Some(out)
        }
    }
}

/// Transitive closure by repeated composition of adjacent pairs.
pub fn naive_closure(c: &Conj) -> Conj {
    let mut all = c.clone();
    loop {
        let mut new = Vec::new();
        for x in &all {
            for y in &all {
                if x.wanted == y.holder {
                    let thread = match (&x.thread, &y.thread) {
                        (a, b) if a == b && *a != ThreadLabel::Check => a.clone(),
                        _ => ThreadLabel::Check,
                    };
                    let d = Dependency { holder: x.holder.clone(), wanted: y.wanted.clone(), thread };
                    if !all.contains(&d) {
                        new.push(d);
                    }
                }
            }
        }
        if new.is_empty() {
            return all;
        }
        all.extend(new);
    }
}

pub fn naive_circular(c: &Conj) -> bool {
    naive_closure(c).iter().any(|d| d.holder == d.wanted && d.thread == ThreadLabel::Check)
}

/// Whether some conjunction of main unfolded to `depth` is circular;
/// `None` if the expansion blew past the cap.
pub fn unfold_circular(p: &LamProgram, depth: usize) -> Option<bool> {
    let mut u = Unfolder::new(p);
    let states = u.expand(&p.main, depth)?;
    Some(states.iter().any(naive_circular))
}
