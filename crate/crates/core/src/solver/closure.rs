use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::lam::{Dependency, ThreadLabel};
use crate::name::Name;

/// Transitive closure of a conjunction of dependencies, with one recorded
/// derivation per added dependency.
#[derive(Clone, Debug)]
pub struct Closed {
    pub deps: BTreeSet<Dependency>,
    parents: HashMap<Dependency, (Dependency, Dependency)>,
}

/// Least superset closed under `(a,b)_u & (b,c)_v ⇒ (a,c)_{u∘v}`, where
/// `u∘v` is `u` when both labels denote the same thread and `✓` otherwise.
pub fn closure(deps: &BTreeSet<Dependency>) -> Closed {
    close_with(deps, ThreadLabel::compose)
}

/// [`closure`] with joint labels for compositions of named threads.
pub fn closure_tracked(deps: &BTreeSet<Dependency>) -> Closed {
    close_with(deps, ThreadLabel::compose_tracked)
}

fn close_with(deps: &BTreeSet<Dependency>, compose: fn(&ThreadLabel, &ThreadLabel) -> ThreadLabel) -> Closed {
    let mut all: BTreeSet<Dependency> = deps.clone();
    let mut parents = HashMap::new();
    let mut by_holder: BTreeMap<Name, Vec<Dependency>> = BTreeMap::new();
    let mut by_wanted: BTreeMap<Name, Vec<Dependency>> = BTreeMap::new();
    for d in deps {
        by_holder.entry(d.holder.clone()).or_default().push(d.clone());
        by_wanted.entry(d.wanted.clone()).or_default().push(d.clone());
    }
    // breadth first, so recorded derivations are shortest
    let mut queue: VecDeque<Dependency> = deps.iter().cloned().collect();
    while let Some(d) = queue.pop_front() {
        let mut fresh = Vec::new();
        for right in by_holder.get(&d.wanted).into_iter().flatten() {
            let c = Dependency {
                holder: d.holder.clone(),
                wanted: right.wanted.clone(),
                thread: compose(&d.thread, &right.thread),
            };
            fresh.push((c, d.clone(), right.clone()));
        }
        for left in by_wanted.get(&d.holder).into_iter().flatten() {
            let c = Dependency {
                holder: left.holder.clone(),
                wanted: d.wanted.clone(),
                thread: compose(&left.thread, &d.thread),
            };
            fresh.push((c, left.clone(), d.clone()));
        }
        for (c, l, r) in fresh {
            if all.insert(c.clone()) {
                parents.insert(c.clone(), (l, r));
                by_holder.entry(c.holder.clone()).or_default().push(c.clone());
                by_wanted.entry(c.wanted.clone()).or_default().push(c.clone());
                queue.push_back(c);
            }
        }
    }
    Closed { deps: all, parents }
}

impl Closed {
    /// The original dependencies composing to `d`, left to right.
    pub fn witness(&self, d: &Dependency) -> Vec<Dependency> {
        let mut out = Vec::new();
        let mut stack = vec![d.clone()];
        while let Some(x) = stack.pop() {
            match self.parents.get(&x) {
                Some((l, r)) => {
                    stack.push(r.clone());
                    stack.push(l.clone());
                }
                None => out.push(x),
            }
        }
        out
    }

    /// One witness per distinct cycle: every `(a,a)_✓` yields the original
    /// dependencies deriving it; witnesses with equal dependency sets are
    /// reported once.
    pub fn circularities(&self) -> Vec<Vec<Dependency>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for d in &self.deps {
            if d.holder == d.wanted && d.thread.is_check() {
                let w = self.witness(d);
                let key: BTreeSet<Dependency> = w.iter().cloned().collect();
                if seen.insert(key) {
                    out.push(w);
                }
            }
        }
        out
    }
}

/// Some `(a,a)_✓` in the closure, as a witness cycle. `(a,a)_t` with a
/// named thread is a re-acquisition, not a circularity.
pub fn has_circularity(deps: &BTreeSet<Dependency>) -> Option<Vec<Dependency>> {
    closure_tracked(deps).circularities().into_iter().next()
}

/// Keeps the dependencies between formal names (pseudo-locks of formals
/// included) and relabels threads that are not formal to anonymous
/// bullets, one index per projected thread. Then renumbers bullets
/// canonically and keeps at most two anonymous threads with identical
/// dependency sets: a third copy cannot add a composition the first two
/// do not already give.
pub fn project(deps: &BTreeSet<Dependency>, is_formal: &dyn Fn(&Name) -> bool) -> BTreeSet<Dependency> {
    let mut next = deps
        .iter()
        .filter_map(|d| match d.thread {
            ThreadLabel::Bullet(k) => Some(k + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    let mut fresh_ids: BTreeMap<Name, u32> = BTreeMap::new();
    let mut kept = BTreeSet::new();
    for d in deps {
        if !is_formal(&d.holder) || !is_formal(&d.wanted) {
            continue;
        }
        let thread = match &d.thread {
            ThreadLabel::Named(t) if !is_formal(t) => {
                let id = *fresh_ids.entry(t.clone()).or_insert_with(|| {
                    next += 1;
                    next
                });
                ThreadLabel::Bullet(id)
            }
            // a fresh thread never meets the others
            ThreadLabel::Joint(ts) if !ts.iter().all(is_formal) => ThreadLabel::Check,
            other => other.clone(),
        };
        kept.insert(Dependency { holder: d.holder.clone(), wanted: d.wanted.clone(), thread });
    }
    canonical_bullets(kept)
}

/// Whether every composition through `(a,b)_l` is matched by one through
/// `(a,b)_m` that is at least as close to a circularity.
fn dominated(l: &ThreadLabel, m: &ThreadLabel) -> bool {
    match (l, m) {
        (l, ThreadLabel::Check) => *l != ThreadLabel::Check,
        (ThreadLabel::Named(t), ThreadLabel::Joint(s)) => s.contains(t),
        (ThreadLabel::Joint(r), ThreadLabel::Joint(s)) => r != s && r.is_subset(s),
        _ => false,
    }
}

/// Drops dependencies dominated by another one between the same names;
/// circularities are unaffected.
pub fn drop_dominated(deps: BTreeSet<Dependency>) -> BTreeSet<Dependency> {
    let mut by_pair: BTreeMap<(&Name, &Name), Vec<&ThreadLabel>> = BTreeMap::new();
    for d in &deps {
        by_pair.entry((&d.holder, &d.wanted)).or_default().push(&d.thread);
    }
    let keep: BTreeSet<Dependency> = deps
        .iter()
        .filter(|d| !by_pair[&(&d.holder, &d.wanted)].iter().any(|m| dominated(&d.thread, m)))
        .cloned()
        .collect();
    canonical_bullets(keep)
}

/// Renumbers bullet indices by the dependency sets of their threads.
pub fn canonical_bullets(deps: BTreeSet<Dependency>) -> BTreeSet<Dependency> {
    let mut groups: BTreeMap<u32, Vec<(Name, Name)>> = BTreeMap::new();
    for d in &deps {
        if let ThreadLabel::Bullet(k) = d.thread {
            groups.entry(k).or_default().push((d.holder.clone(), d.wanted.clone()));
        }
    }
    if groups.is_empty() {
        return deps;
    }
    let mut order: Vec<(Vec<(Name, Name)>, u32)> = groups.into_iter().map(|(k, v)| (v, k)).collect();
    order.sort();
    let mut renum: BTreeMap<u32, u32> = BTreeMap::new();
    let mut next = 1;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].0 == order[i].0 {
            j += 1;
        }
        for (sig_copy, (_, old)) in order[i..j].iter().enumerate() {
            if sig_copy < 2 {
                renum.insert(*old, next);
                next += 1;
            }
        }
        i = j;
    }
    deps.into_iter()
        .filter_map(|d| match d.thread {
            ThreadLabel::Bullet(k) => renum.get(&k).map(|&n| Dependency { thread: ThreadLabel::Bullet(n), ..d }),
            _ => Some(d),
        })
        .collect()
}
