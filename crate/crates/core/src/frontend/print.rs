use std::fmt::Write;

use super::ClassTable;

/// Renders a class table in the assembly syntax accepted by
/// [`parse_program`](super::parse_program).
pub fn print_program(table: &ClassTable) -> String {
    let mut out = String::new();
    for c in table.classes.values() {
        let _ = writeln!(out, "class {} {{", c.name);
        if !c.fields.is_empty() {
            let _ = writeln!(out, "  fields:");
            for (f, t) in &c.fields {
                let _ = writeln!(out, "    {f}: {t}");
            }
        }
        if !c.methods.is_empty() {
            let _ = writeln!(out, "  methods:");
        }
        for m in c.methods.values() {
            let ret = m.ret.as_ref().map_or("void".to_string(), |t| t.to_string());
            let ps: Vec<String> = m.params.iter().map(|(n, t)| format!("{t} {n}")).collect();
            let _ = writeln!(out, "    {ret} {}({}) {{", m.name, ps.join(", "));
            for (a, ins) in &m.body {
                let _ = writeln!(out, "      {a}: {ins}");
            }
            let _ = writeln!(out, "    }}");
        }
        let _ = writeln!(out, "}}");
    }
    out
}
