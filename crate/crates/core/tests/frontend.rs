use std::collections::BTreeSet;
use std::path::PathBuf;

use lamlock_core::frontend::{
    executed_once, flow_facts, parse_program, print_program, FrontendError, Instr, MethodId, TypeName,
};
use proptest::prelude::*;

fn corpus(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn network_build_method_addresses() {
    let t = parse_program(&corpus("network_xy.jd")).unwrap();
    let m = t.method(&MethodId::new("Network", "buildNetwork")).unwrap();
    let dom: Vec<u32> = m.body.keys().copied().collect();
    assert_eq!(
        dom,
        vec![0, 1, 4, 5, 6, 7, 10, 13, 16, 17, 20, 22, 25, 26, 27, 28, 30, 33, 35, 37, 40, 41, 42, 43, 44, 45, 46, 47, 50]
    );
    assert_eq!(m.body[&1], Instr::If(13));
    assert_eq!(m.body[&37], Instr::Start("Network$1".into()));
    assert_eq!(m.params[0], ("n".to_string(), TypeName::Int));
}

#[test]
fn minimal_program() {
    let t = parse_program("class A { methods: void m(A) { 0: return } }").unwrap();
    assert_eq!(t.classes.len(), 1);
    let m = t.method(&MethodId::new("A", "m")).unwrap();
    assert_eq!(m.body.len(), 1);
    assert_eq!(m.body[&0], Instr::Return);
    assert_eq!(m.params, vec![("arg1".to_string(), TypeName::Class("A".into()))]);
}

#[test]
fn rejects_recursive_class_types() {
    let src = "class A { fields: b: B } class B { fields: a: A }";
    assert!(matches!(parse_program(src), Err(FrontendError::RecursiveClass(_))));
    let self_ref = "class A { fields: next: A }";
    assert!(matches!(parse_program(self_ref), Err(FrontendError::RecursiveClass(_))));
}

#[test]
fn structural_errors() {
    let cases: [(&str, fn(&FrontendError) -> bool); 8] = [
        ("class A { methods: void m() { 1: return } }", |e| matches!(e, FrontendError::MissingEntry { .. })),
        ("class A { methods: void m() { 0: goto 7 } }", |e| matches!(e, FrontendError::MissingTarget { .. })),
        ("class A { methods: void m() { 0: push } }", |e| matches!(e, FrontendError::FallsOffEnd { .. })),
        ("class A { methods: void m() { 0: push 0: return } }", |e| matches!(e, FrontendError::DuplicateAddress { .. })),
        ("class A { methods: void m() { 0: new B 1: return } }", |e| matches!(e, FrontendError::UndeclaredClass(_))),
        ("class A { methods: void m() { 0: load this 1: invokevirtual A.k() 2: return } }", |e| {
            matches!(e, FrontendError::UndeclaredMethod(_))
        }),
        ("class A { methods: void m() { 0: load this 1: getfield A.f:int 2: return } }", |e| {
            matches!(e, FrontendError::UndeclaredField(_))
        }),
        ("class A { methods: void m() { 0: return } void m(int) { 0: return } }", |e| {
            matches!(e, FrontendError::DuplicateMethod { .. })
        }),
    ];
    for (src, ok) in cases {
        let e = parse_program(src).unwrap_err();
        assert!(ok(&e), "{src}: {e}");
    }
}

#[test]
fn syntax_error_position() {
    let e = parse_program("class A {\n  methods:\n    void m() {\n      0: frobnicate\n    }\n}").unwrap_err();
    match e {
        FrontendError::Syntax { line, col, msg } => {
            assert_eq!((line, col), (4, 10));
            assert!(msg.contains("frobnicate"));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn start_requires_run() {
    let src = "class T { methods: void m() { 0: new T 1: start T 2: return } }";
    assert!(matches!(parse_program(src), Err(FrontendError::NoRun(_))));
}

#[test]
fn network_flow_facts() {
    let t = parse_program(&corpus("network_xy.jd")).unwrap();
    let f = flow_facts(&t);
    let bn = MethodId::new("Network", "buildNetwork");
    assert!(f.recursive.contains(&bn));
    assert!(f.methods[&bn].in_loop.is_empty());
    assert!(f.calls[&bn].contains(&(47, bn.clone())));
    assert_eq!(executed_once(&f, &bn, 37), Ok(false));
    let main = MethodId::new("Network", "main");
    for &i in t.method(&main).unwrap().body.keys() {
        assert_eq!(executed_once(&f, &main, i), Ok(true));
    }
    // started from a repeated site
    let run = MethodId::new("Network$1", "run");
    assert_eq!(executed_once(&f, &run, 0), Ok(false));
    assert!(executed_once(&f, &main, 99).is_err());
}

#[test]
fn loops_and_many_propagation() {
    let straight = parse_program("class A { methods: void m() { 0: push 1: return } }").unwrap();
    let f = flow_facts(&straight);
    let m = MethodId::new("A", "m");
    assert!(f.methods[&m].in_loop.is_empty());
    assert!(f.calls[&m].is_empty());

    let looping = parse_program("class A { methods: void m() { 0: push 1: if 0 2: return } }").unwrap();
    let f = flow_facts(&looping);
    assert_eq!(f.methods[&m].in_loop, BTreeSet::from([0, 1]));
    assert_eq!(executed_once(&f, &m, 2), Ok(true));
    assert_eq!(executed_once(&f, &m, 0), Ok(false));

    let helper = "class A { methods:
        void m() { 0: push 1: load this 2: invokevirtual A.h() 3: if 0 4: return }
        void h() { 0: push 1: pop 2: return } }";
    let t = parse_program(helper).unwrap();
    let f = flow_facts(&t);
    let h = MethodId::new("A", "h");
    assert!(!f.recursive.contains(&m));
    for i in [0, 1, 2] {
        assert_eq!(executed_once(&f, &h, i), Ok(false));
    }
    assert_eq!(executed_once(&f, &m, 4), Ok(true));
}

#[test]
fn print_then_parse_is_identity_on_corpus() {
    for name in ["network_xy.jd", "network_xx.jd"] {
        let t = parse_program(&corpus(name)).unwrap();
        assert_eq!(parse_program(&print_program(&t)).unwrap(), t);
    }
}

fn arb_type(classes: usize) -> impl Strategy<Value = TypeName> {
    prop_oneof![
        Just(TypeName::Int),
        Just(TypeName::Top),
        (0..classes).prop_map(|k| TypeName::Class(format!("C{k}"))),
    ]
}

fn arb_instr(len: u32) -> impl Strategy<Value = Instr> {
    prop_oneof![
        Just(Instr::Inc),
        Just(Instr::Pop),
        Just(Instr::Push),
        Just(Instr::Dup),
        Just(Instr::Sub),
        Just(Instr::MonitorEnter),
        Just(Instr::MonitorExit),
        "[a-z][a-z0-9_]{0,4}".prop_map(Instr::Load),
        "[a-z][a-z0-9_]{0,4}".prop_map(Instr::Store),
        (0..len).prop_map(|k| Instr::If(k * 2)),
        (0..len).prop_map(|k| Instr::Goto(k * 2)),
    ]
}

fn arb_program() -> impl Strategy<Value = String> {
    (1usize..4).prop_flat_map(|nc| {
        let class = (
            prop::collection::vec(("[a-z][a-z0-9]{0,3}", arb_type(nc)), 0..3),
            prop::collection::vec(
                (
                    prop::option::of(arb_type(nc)),
                    prop::collection::vec(arb_type(nc), 0..3),
                    prop::collection::vec(arb_instr(6), 0..6),
                ),
                0..3,
            ),
        );
        prop::collection::vec(class, nc..=nc)
    })
    .prop_map(|classes| {
        let mut out = String::new();
        for (k, (fields, methods)) in classes.iter().enumerate() {
            out += &format!("class C{k} {{ fields: ");
            let mut seen = BTreeSet::new();
            for (f, t) in fields {
                // only fields of lower-numbered classes, so nesting stays acyclic
                let t = match t {
                    TypeName::Class(c) if c[1..].parse::<usize>().unwrap() >= k => TypeName::Top,
                    t => t.clone(),
                };
                if seen.insert(f.clone()) {
                    out += &format!("{f}: {t} ");
                }
            }
            out += "methods: ";
            for (j, (ret, params, body)) in methods.iter().enumerate() {
                let ret = ret.as_ref().map_or("void".to_string(), |t| t.to_string());
                let ps: Vec<String> = params.iter().map(|t| t.to_string()).collect();
                out += &format!("{ret} m{j}({}) {{ ", ps.join(", "));
                let clamp = |l: u32| (l / 2) % (body.len() as u32 + 1) * 2;
                for (a, ins) in body.iter().enumerate() {
                    let ins = match ins {
                        Instr::If(l) => Instr::If(clamp(*l)),
                        Instr::Goto(l) => Instr::Goto(clamp(*l)),
                        i => i.clone(),
                    };
                    out += &format!("{}: {ins} ", a * 2);
                }
                out += &format!("{}: return }} ", body.len() * 2);
            }
            out += "} ";
        }
        out
    })
}

proptest! {
    #[test]
    fn print_then_parse_roundtrip(src in arb_program()) {
        let t = parse_program(&src).unwrap();
        prop_assert_eq!(parse_program(&print_program(&t)).unwrap(), t);
    }
}
