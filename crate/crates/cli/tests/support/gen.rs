//! Random lam programs: at most four functions over at most six names each.

use std::collections::{BTreeMap, BTreeSet};

use lamlock_core::lam::{Dependency, FunDef, Invoke, Lam, LamProgram, SType, ThreadLabel};
use lamlock_core::Name;
use rand::rngs::StdRng;
use rand::Rng;

fn pick(rng: &mut StdRng, names: &[Name]) -> Name {
    names[rng.gen_range(0..names.len())].clone()
}

fn atom(rng: &mut StdRng, names: &[Name], arities: &[usize]) -> Lam {
    if rng.gen_bool(0.6) || arities.is_empty() {
        Lam::Dep(Dependency {
            holder: pick(rng, names),
            wanted: pick(rng, names),
            thread: ThreadLabel::Named(pick(rng, names)),
        })
    } else {
        let f = rng.gen_range(0..arities.len());
        let args = (0..arities[f]).map(|_| SType::name(pick(rng, names))).collect();
        Lam::Invoke(Invoke { func: format!("f{f}"), args, ret: None })
    }
}

fn body(rng: &mut StdRng, names: &[Name], arities: &[usize]) -> Lam {
    let summands = rng.gen_range(1..=3);
    Lam::or_all((0..summands).map(|_| {
        let atoms = rng.gen_range(1..=3);
        Lam::and_all((0..atoms).map(|_| atom(rng, names, arities)))
    }))
}

pub fn random_program(rng: &mut StdRng) -> LamProgram {
    let nf = rng.gen_range(1..=4);
    let arities: Vec<usize> = (0..nf).map(|_| rng.gen_range(2..=4)).collect();
    let mut defs = BTreeMap::new();
    for (k, &ar) in arities.iter().enumerate() {
        let params: Vec<Name> = (0..ar).map(|i| Name::new(format!("p{i}"))).collect();
        let nb = rng.gen_range(0..=(6 - ar).min(2));
        let binders: Vec<Name> = (0..nb).map(|i| Name::new(format!("n{i}"))).collect();
        let names: Vec<Name> = params.iter().chain(&binders).cloned().collect();
        let b = Lam::nu(binders, body(rng, &names, &arities));
        let name = format!("f{k}");
        defs.insert(name.clone(), FunDef { name, params: params.into_iter().map(SType::name).collect(), ret: None, body: b });
    }
    let globals: Vec<Name> = (0..rng.gen_range(2..=4)).map(|i| Name::new(format!("g{i}"))).collect();
    let nb = rng.gen_range(0..=2);
    let binders: Vec<Name> = (0..nb).map(|i| Name::new(format!("m{i}"))).collect();
    let names: Vec<Name> = globals.iter().chain(&binders).cloned().collect();
    let main = Lam::nu(binders, body(rng, &names, &arities));
    LamProgram { defs, main }
}

/// The program with every name and function renamed injectively.
pub fn rename_program(p: &LamProgram, tag: &str) -> LamProgram {
    let f = |n: &Name| -> Option<Name> {
        let s = n.as_str();
        match s.strip_prefix("lock$") {
            Some(o) => Some(Name::lock_of(&Name::new(format!("{tag}{o}")))),
            None => Some(Name::new(format!("{tag}{s}"))),
        }
    };
    let rn_fun = |s: &str| format!("{tag}{s}");
    fn funs(l: &Lam, g: &dyn Fn(&str) -> String) -> Lam {
        match l {
            Lam::Invoke(i) => Lam::Invoke(Invoke { func: g(&i.func), args: i.args.clone(), ret: i.ret.clone() }),
            Lam::Nu(bs, b) => Lam::Nu(bs.clone(), Box::new(funs(b, g))),
            Lam::And(xs) => Lam::And(xs.iter().map(|x| funs(x, g)).collect()),
            Lam::Or(xs) => Lam::Or(xs.iter().map(|x| funs(x, g)).collect()),
            l => l.clone(),
        }
    }
    let rename_binders = |l: &Lam| -> Lam {
        fn go(l: &Lam, f: &dyn Fn(&Name) -> Option<Name>) -> Lam {
            match l {
                Lam::Nu(bs, b) => Lam::Nu(bs.iter().map(|n| f(n).unwrap()).collect(), Box::new(go(b, f))),
                Lam::And(xs) => Lam::And(xs.iter().map(|x| go(x, f)).collect()),
                Lam::Or(xs) => Lam::Or(xs.iter().map(|x| go(x, f)).collect()),
                l => l.rename_with(f),
            }
        }
        go(l, &f)
    };
    let defs = p
        .defs
        .values()
        .map(|d| {
            let name = rn_fun(&d.name);
            let def = FunDef {
                name: name.clone(),
                params: d.params.iter().map(|s| s.rename_with(&f)).collect(),
                ret: d.ret.as_ref().map(|s| s.rename_with(&f)),
                body: funs(&rename_binders(&d.body), &rn_fun).normalize(),
            };
            (name, def)
        })
        .collect();
    LamProgram { defs, main: funs(&rename_binders(&p.main), &rn_fun).normalize() }
}

/// Random dependency set over a few names and threads.
pub fn random_deps(rng: &mut StdRng, size: usize) -> BTreeSet<Dependency> {
    let names = ["a", "b", "c", "d", "e"];
    let threads = ["t", "s", "r"];
    (0..size)
        .map(|_| {
            Dependency::named(
                names[rng.gen_range(0..names.len())],
                names[rng.gen_range(0..names.len())],
                threads[rng.gen_range(0..threads.len())],
            )
        })
        .collect()
}
