use std::collections::BTreeSet;

use lamlock_core::lam::{dnf, Conj, Dependency, FunDef, Invoke, Lam, NameSupply, SType, ThreadLabel};
use lamlock_core::solver::{closure, closure_tracked, drop_dominated};
use lamlock_core::Name;
use proptest::prelude::*;

const LOCKS: [&str; 4] = ["a", "b", "c", "d"];
const THREADS: [&str; 3] = ["t", "u", "v"];

fn label() -> impl Strategy<Value = ThreadLabel> {
    prop_oneof![
        4 => prop::sample::select(&THREADS[..]).prop_map(|t| ThreadLabel::Named(Name::new(t))),
        1 => Just(ThreadLabel::Check),
        1 => (1u32..3).prop_map(ThreadLabel::Bullet),
    ]
}

fn dep() -> impl Strategy<Value = Dependency> {
    (prop::sample::select(&LOCKS[..]), prop::sample::select(&LOCKS[..]), label())
        .prop_map(|(h, w, l)| Dependency::new(h, w, l))
}

fn deps(max: usize) -> impl Strategy<Value = BTreeSet<Dependency>> {
    prop::collection::btree_set(dep(), 0..max)
}

fn lam() -> impl Strategy<Value = Lam> {
    let leaf = prop_oneof![Just(Lam::Zero), dep().prop_map(Lam::Dep)];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Lam::and_all),
            prop::collection::vec(inner, 1..4).prop_map(Lam::or_all),
        ]
    })
}

fn circular(ds: &BTreeSet<Dependency>) -> bool {
    closure_tracked(ds).deps.iter().any(|d| d.holder == d.wanted && d.thread.is_check())
}

proptest! {
    #[test]
    fn closure_is_a_closure_operator(a in deps(8), extra in deps(4)) {
        let ca = closure(&a).deps;
        prop_assert!(a.is_subset(&ca));
        prop_assert_eq!(&closure(&ca).deps, &ca);
        let b: BTreeSet<_> = a.union(&extra).cloned().collect();
        prop_assert!(ca.is_subset(&closure(&b).deps));
    }

    #[test]
    fn witnesses_come_from_the_input(a in deps(8)) {
        let c = closure(&a);
        for w in c.circularities() {
            prop_assert!(w.iter().all(|d| a.contains(d)));
        }
    }

    #[test]
    fn tracked_and_plain_closure_agree_on_circularity(a in deps(8)) {
        let plain = closure(&a).deps.iter().any(|d| d.holder == d.wanted && d.thread == ThreadLabel::Check);
        prop_assert_eq!(plain, circular(&a));
    }

    #[test]
    fn dropping_dominated_keeps_the_verdict(a in deps(8)) {
        let c = closure_tracked(&a).deps;
        prop_assert_eq!(circular(&c), circular(&drop_dominated(c.clone())));
    }

    #[test]
    fn dnf_is_stable_under_remultiplying(l in lam()) {
        let d = dnf(&l);
        prop_assert_eq!(&dnf(&Conj::sum(&d)), &d);
        prop_assert!(!d.is_empty());
    }

    #[test]
    fn dnf_distributes(x in lam(), y in lam(), z in lam()) {
        // raw nodes: the smart constructors simplify around 0
        let left = dnf(&Lam::And(vec![x.clone(), Lam::Or(vec![y.clone(), z.clone()])]));
        let right = dnf(&Lam::Or(vec![Lam::And(vec![x.clone(), y]), Lam::And(vec![x, z])]));
        prop_assert_eq!(left, right);
    }

    #[test]
    fn instantiation_never_captures(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..6),
        actuals in prop::sample::subsequence(vec!["b", "c", "x", "y"], 2),
    ) {
        // formals p, q; binders b, c, which may clash with the actuals
        let pool = ["p", "q", "b", "c"];
        let body_deps: BTreeSet<Dependency> =
            pairs.iter().map(|&(h, w)| Dependency::named(pool[h], pool[w], "p")).collect();
        let def = FunDef {
            name: "f".into(),
            params: vec![SType::name("p"), SType::name("q")],
            ret: None,
            body: Lam::nu([Name::new("b"), Name::new("c")], Lam::and_all(body_deps.iter().cloned().map(Lam::Dep))),
        };
        let inv = Invoke { func: "f".into(), args: actuals.iter().map(|a| SType::name(*a)).collect(), ret: None };
        let out = def.instantiate(&inv, &mut NameSupply::default()).unwrap();
        let states = dnf(&out);
        prop_assert_eq!(states.len(), 1);
        let got = &states.iter().next().unwrap().deps;
        prop_assert_eq!(got.len(), body_deps.len());
        // shape with bound names erased must survive
        let erase = |n: &Name, keep: &[&str]| if keep.contains(&n.as_str()) { n.as_str().to_string() } else { "_".into() };
        let formal_to_actual = |n: &Name| match n.as_str() {
            "p" => actuals[0].to_string(),
            "q" => actuals[1].to_string(),
            _ => "_".into(),
        };
        let want: BTreeSet<(String, String)> =
            body_deps.iter().map(|d| (formal_to_actual(&d.holder), formal_to_actual(&d.wanted))).collect();
        let seen: BTreeSet<(String, String)> =
            got.iter().map(|d| (erase(&d.holder, &actuals), erase(&d.wanted, &actuals))).collect();
        prop_assert_eq!(seen, want);
    }
}
