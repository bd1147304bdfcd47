use std::collections::BTreeSet;

use super::{Dependency, Invoke, Lam};

/// A conjunction of dependencies and pending invocations.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Conj {
    pub deps: BTreeSet<Dependency>,
    pub pending: BTreeSet<Invoke>,
}

impl Conj {
    pub fn union(&self, other: &Conj) -> Conj {
        Conj {
            deps: self.deps.union(&other.deps).cloned().collect(),
            pending: self.pending.union(&other.pending).cloned().collect(),
        }
    }

    pub fn is_subset(&self, other: &Conj) -> bool {
        self.deps.is_subset(&other.deps) && self.pending.is_subset(&other.pending)
    }

    pub fn to_lam(&self) -> Lam {
        Lam::and_all(
            self.deps
                .iter()
                .cloned()
                .map(Lam::Dep)
                .chain(self.pending.iter().cloned().map(Lam::Invoke)),
        )
    }

    /// `+` over the states of `&` over their members.
    pub fn sum(states: &BTreeSet<Conj>) -> Lam {
        Lam::or_all(states.iter().map(Conj::to_lam))
    }
}

/// Disjunctive normal form: the set of conjunctive states whose sum is
/// AC-equal to `lam`. Binders are transparent, so callers freshen them
/// first when names must stay apart.
pub fn dnf(lam: &Lam) -> BTreeSet<Conj> {
    match lam {
        Lam::Zero => BTreeSet::from([Conj::default()]),
        Lam::Dep(d) => {
            BTreeSet::from([Conj { deps: BTreeSet::from([d.clone()]), pending: BTreeSet::new() }])
        }
        Lam::Invoke(i) => {
            BTreeSet::from([Conj { deps: BTreeSet::new(), pending: BTreeSet::from([i.clone()]) }])
        }
        Lam::Nu(_, body) => dnf(body),
        Lam::Or(xs) => xs.iter().flat_map(dnf).collect(),
        Lam::And(xs) => {
            let mut acc = BTreeSet::from([Conj::default()]);
            for x in xs {
                let right = dnf(x);
                acc = acc.iter().flat_map(|l| right.iter().map(move |r| l.union(r))).collect();
            }
            acc
        }
    }
}
