use super::{FunDef, Invoke, Lam, LamProgram, SType};

pub(crate) fn stype_to_string(s: &SType) -> String {
    match s {
        SType::Top => "_".to_string(),
        SType::Node { root, fields } if fields.is_empty() => root.to_string(),
        SType::Node { root, fields } => {
            let inner: Vec<String> =
                fields.iter().map(|(f, v)| format!("{f}: {}", stype_to_string(v))).collect();
            format!("{root}[{}]", inner.join(", "))
        }
    }
}

pub(crate) fn invoke_to_string(i: &Invoke) -> String {
    let args: Vec<String> = i.args.iter().map(stype_to_string).collect();
    match &i.ret {
        Some(r) => format!("{}({}) -> {}", i.func, args.join(", "), stype_to_string(r)),
        None => format!("{}({})", i.func, args.join(", ")),
    }
}

pub(crate) fn lam_to_string(l: &Lam) -> String {
    match l {
        Lam::Zero => "0".to_string(),
        Lam::Dep(d) => d.to_string(),
        Lam::Invoke(i) => invoke_to_string(i),
        Lam::Nu(bs, body) => {
            let names: Vec<&str> = bs.iter().map(|b| b.as_str()).collect();
            format!("nu {}.( {} )", names.join(","), lam_to_string(body))
        }
        Lam::And(xs) => xs
            .iter()
            .map(|x| match x {
                Lam::Or(_) => format!("({})", lam_to_string(x)),
                _ => lam_to_string(x),
            })
            .collect::<Vec<_>>()
            .join(" & "),
        Lam::Or(xs) => xs.iter().map(lam_to_string).collect::<Vec<_>>().join(" + "),
    }
}

pub(crate) fn def_to_string(d: &FunDef) -> String {
    let params: Vec<String> = d.params.iter().map(stype_to_string).collect();
    let head = match &d.ret {
        Some(r) => format!("{}({}) -> {}", d.name, params.join(", "), stype_to_string(r)),
        None => format!("{}({})", d.name, params.join(", ")),
    };
    format!("{head} = {}", lam_to_string(&d.body))
}

/// Text of a lam program in the `.lam` format: one definition per line,
/// `main` last.
pub fn print_lam(p: &LamProgram) -> String {
    let mut out = String::new();
    for d in p.defs.values() {
        out.push_str(&def_to_string(d));
        out.push('\n');
    }
    out.push_str("main = ");
    out.push_str(&lam_to_string(&p.main));
    out.push('\n');
    out
}
