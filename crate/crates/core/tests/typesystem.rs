use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use lamlock_core::frontend::{flow_facts, parse_program, ClassTable, FlowFacts, MethodId};
use lamlock_core::lam::{bind_formal, parse_lam, parse_lam_term, FunDef, Lam, SType};
use lamlock_core::solver::{analyze, SolverConfig};
use lamlock_core::typesystem::{
    effective_lam, infer, infer_bct, initial_state, merge, step_type, type_method, AVal, Bct, Contribution,
    Flat, TypeError,
};
use lamlock_core::Name;

fn corpus(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn load(src: &str) -> (ClassTable, FlowFacts) {
    let t = parse_program(src).unwrap();
    let f = flow_facts(&t);
    (t, f)
}

fn lam(src: &str) -> Lam {
    parse_lam_term(src).unwrap()
}

/// Equality up to a renaming of formals, position by position.
fn alpha_eq(ours: &FunDef, golden: &FunDef) -> bool {
    if ours.params.len() != golden.params.len() {
        return false;
    }
    let mut map = BTreeMap::new();
    for (g, o) in golden.params.iter().zip(&ours.params) {
        bind_formal(g, o, &mut map);
    }
    if let (Some(g), Some(o)) = (&golden.ret, &ours.ret) {
        bind_formal(g, o, &mut map);
    }
    let params: Vec<SType> = golden.params.iter().map(|p| p.rename_with(&|n| map.get(n).cloned())).collect();
    let ret = golden.ret.as_ref().map(|r| r.rename_with(&|n| map.get(n).cloned()));
    params == ours.params && ret == ours.ret && golden.body.rename(&map).normalize() == ours.body.normalize()
}

#[test]
fn network_definitions_match_the_hand_written_lams() {
    let (t, f) = load(&corpus("network_xy.jd"));
    let (_, prog) = infer(&t, &f, None).unwrap();
    let golden = parse_lam(&corpus("network_golden.lam")).unwrap();
    for (name, g) in &golden.defs {
        let ours = &prog.defs[name];
        assert!(alpha_eq(ours, g), "{name}: got {:?}", ours);
    }
    assert_eq!(prog.defs["Network.takeForks"].body, lam("(u,x)_t & (x,y)_t"));
}

#[test]
fn build_network_summands() {
    let (t, f) = load(&corpus("network_xy.jd"));
    let (_, prog) = infer(&t, &f, None).unwrap();
    let Lam::Nu(_, body) = &prog.defs["Network.buildNetwork"].body else { panic!("expected binders") };
    let Lam::Or(summands) = body.as_ref() else { panic!("expected a sum") };
    let z = "Network.buildNetwork#13#1";
    let t1 = "Network.buildNetwork#22#1";
    let rec = lam(&format!(
        "Network.buildNetwork(this, _, {z}, y, t, u) & RUN$Network$1({t1}[this$0: this, val$x: x, val$z: {z}])"
    ));
    assert!(summands.contains(&rec), "{summands:?}");
    assert!(summands.contains(&lam("Network.takeForks(this, x, y, t, u)")));
    assert!(summands.contains(&lam(&format!("Object.init({z}, t, u) -> {z}"))));
}

#[test]
fn network_verdicts() {
    for (file, free) in [("network_xy.jd", true), ("network_xx.jd", false)] {
        let (t, f) = load(&corpus(file));
        let (_, prog) = infer(&t, &f, None).unwrap();
        prog.validate().unwrap();
        let v = analyze(&prog, SolverConfig::default()).unwrap();
        assert_eq!(v.deadlock_free(), free, "{file}: {v:?}");
    }
}

#[test]
fn step_at_the_first_fork_call() {
    let (t, f) = load(&corpus("network_xy.jd"));
    let bn = MethodId::new("Network", "buildNetwork");
    let bct = infer_bct(&t, &f).unwrap();
    let mut st = initial_state(&t, &f, &bn).unwrap();
    for i in [0, 1, 4, 5, 6] {
        let (succ, c) = step_type(&t, &f, &bct, &bn, i, st).unwrap();
        assert_eq!(c, Contribution::Nothing);
        st = succ.into_iter().find(|(a, _)| *a > i && *a <= 7).unwrap().1;
    }
    let (_, c) = step_type(&t, &f, &bct, &bn, 7, st.clone()).unwrap();
    assert_eq!(effective_lam(&t, &f, &bn, &st, &c), lam("Network.takeForks(this, x, y, t, u)"));
}

#[test]
fn start_in_recursive_method_is_many() {
    let (t, f) = load(&corpus("network_xy.jd"));
    let bn = MethodId::new("Network", "buildNetwork");
    let bct = infer_bct(&t, &f).unwrap();
    let mut st = initial_state(&t, &f, &bn).unwrap();
    let mut i = 0;
    while i != 37 {
        let (succ, _) = step_type(&t, &f, &bct, &bn, i, st).unwrap();
        let next = if i == 1 { 13 } else { succ[0].0 };
        st = succ.into_iter().find(|(a, _)| *a == next).unwrap().1;
        i = next;
    }
    let (succ, _) = step_type(&t, &f, &bct, &bn, 37, st).unwrap();
    let after = &succ[0].1;
    assert!(after.once.is_empty());
    assert_eq!(after.many, BTreeSet::from([Name::new("Network.buildNetwork#22#1")]));
}

#[test]
fn synchronized_self_call() {
    let src = "class A { methods: void m() {
        0: load this 1: monitorenter 2: load this 3: invokevirtual A.m() 4: load this 5: monitorexit 6: return } }";
    let (t, f) = load(src);
    let m = MethodId::new("A", "m");
    let first = type_method(&t, &f, &Bct::new(), &m).unwrap();
    assert_eq!(first.body, lam("(u,this)_t & A.m(this, t, this)"));
    let bct = Bct::from([(m.clone(), first.clone())]);
    assert_eq!(type_method(&t, &f, &bct, &m).unwrap(), first);
    assert_eq!(infer_bct(&t, &f).unwrap()[&m], first);
}

#[test]
fn monitorexit_must_release_the_last_lock() {
    let src = "class A { methods: void m(A b) {
        0: load this 1: monitorenter 2: load b 3: monitorenter 4: load this 5: monitorexit
        6: load b 7: monitorexit 8: return } }";
    let (t, f) = load(src);
    match infer_bct(&t, &f) {
        Err(TypeError::At { method, addr, .. }) => assert_eq!((method.as_str(), addr), ("A.m", 5)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unbalanced_return_is_rejected() {
    let (t, f) = load("class A { methods: void m() { 0: load this 1: monitorenter 2: return } }");
    assert!(matches!(infer_bct(&t, &f), Err(TypeError::At { addr: 2, .. })));
}

#[test]
fn putfield_outside_constructor_is_rejected() {
    let src = "class A { fields: f: int methods: void m() { 0: load this 1: push 2: putfield A.f:int 3: return } }";
    let (t, f) = load(src);
    assert!(matches!(infer_bct(&t, &f), Err(TypeError::At { addr: 2, .. })));
}

const BRANCHES: &str = "class O { methods: void init() { 0: return } }
class A { methods: void m(int n, O x, O y) {
  0: load n 1: if 4 2: load x 3: goto 5 4: load y 5: store w
  6: load w 7: monitorenter 8: load this 9: monitorenter 10: load this 11: monitorexit
  12: load w 13: monitorexit 14: return } }";

#[test]
fn join_of_two_objects_is_a_summary() {
    let (t, f) = load(BRANCHES);
    let m = MethodId::new("A", "m");
    let base = initial_state(&t, &f, &m).unwrap();
    let mut a = base.clone();
    a.frame.insert("w".into(), AVal::Obj("x".into()));
    let mut b = base.clone();
    b.frame.insert("w".into(), AVal::Obj("y".into()));
    let j = merge(&t, &f, &m, 5, &[a.clone(), b]).unwrap();
    let AVal::Obj(s) = &j.frame["w"] else { panic!() };
    assert_eq!(j.gamma.members(s), BTreeSet::from([Name::new("x"), Name::new("y")]));
    assert_eq!(j.gamma.bindings[s], Flat { class: "O".into(), fields: BTreeMap::new() });

    assert_eq!(merge(&t, &f, &m, 5, &[a.clone(), a.clone()]).unwrap(), a);

    let mut locked = a.clone();
    locked.locks.push("x".into());
    assert!(merge(&t, &f, &m, 5, &[a, locked]).is_err());
}

#[test]
fn summaries_expand_to_alternatives() {
    let (t, f) = load(BRANCHES);
    let m = MethodId::new("A", "m");
    let mut st = initial_state(&t, &f, &m).unwrap();
    st.gamma.aliases.insert("s".into(), BTreeSet::from([Name::new("x"), Name::new("y")]));
    st.gamma.bindings.insert("s".into(), Flat { class: "O".into(), fields: BTreeMap::new() });
    let c = Contribution::Dep { holder: "u".into(), wanted: "s".into() };
    assert_eq!(effective_lam(&t, &f, &m, &st, &c), lam("(u,x)_t + (u,y)_t"));

    st.locks.push("a".into());
    st.locks.push("a2".into());
    assert_eq!(effective_lam(&t, &f, &m, &st, &Contribution::Nothing), lam("(u,a)_t & (a,a2)_t"));
}

#[test]
fn branch_program_body() {
    let (t, f) = load(BRANCHES);
    let (bct, _) = infer(&t, &f, Some("A.m")).unwrap();
    let body = &bct[&MethodId::new("A", "m")].body;
    assert_eq!(*body, lam("(u,x)_t & (x,this)_t + (u,y)_t & (y,this)_t"));
}

#[test]
fn thread_started_once_runs_in_parallel() {
    let src = "class T { methods: void init() { 0: return } void run() { 0: return } }
    class M { methods: void main() { 0: new T 1: dup 2: invokevirtual T.init() 3: start T 4: return } }";
    let (t, f) = load(src);
    let (bct, _) = infer(&t, &f, None).unwrap();
    let body = &bct[&MethodId::new("M", "main")].body;
    let n = "M.main#0#1";
    let expected = Lam::nu(
        [Name::new(n)],
        lam(&format!("T.init({n}, t, u) -> {n} + T.run({n}, {n}, lock${n})")),
    );
    assert_eq!(*body, expected);
}

#[test]
fn inference_is_deterministic() {
    let (t, f) = load(&corpus("network_xx.jd"));
    let a = infer(&t, &f, None).unwrap();
    let b = infer(&t, &f, None).unwrap();
    assert_eq!(a, b);
}
