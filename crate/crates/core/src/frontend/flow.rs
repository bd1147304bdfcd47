use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graphmap::DiGraphMap;

use super::{Addr, ClassTable, FrontendError, Instr, MethodDef, MethodId};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MethodFlow {
    pub succ: BTreeMap<Addr, Vec<Addr>>,
    /// Addresses lying on a cfg cycle.
    pub in_loop: BTreeSet<Addr>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlowFacts {
    pub methods: BTreeMap<MethodId, MethodFlow>,
    /// Edges from invokevirtual and start sites, with the site address.
    pub calls: BTreeMap<MethodId, BTreeSet<(Addr, MethodId)>>,
    pub recursive: BTreeSet<MethodId>,
    /// Methods reachable from a site that is not executed once.
    pub many: BTreeSet<MethodId>,
    /// Call-graph SCCs, callees before callers.
    pub sccs: Vec<Vec<MethodId>>,
}

fn successors(m: &MethodDef, i: Addr, ins: &Instr) -> Vec<Addr> {
    let next = m.next_addr(i);
    match ins {
        Instr::Return => vec![],
        Instr::Goto(l) => vec![*l],
        Instr::If(l) => {
            let mut v = vec![*l];
            v.extend(next.filter(|n| n != l));
            v
        }
        _ => next.into_iter().collect(),
    }
}

fn method_flow(m: &MethodDef) -> MethodFlow {
    let mut g: DiGraphMap<Addr, ()> = DiGraphMap::new();
    let mut succ = BTreeMap::new();
    for (&i, ins) in &m.body {
        g.add_node(i);
        let s = successors(m, i, ins);
        for &j in &s {
            g.add_edge(i, j, ());
        }
        succ.insert(i, s);
    }
    let mut in_loop = BTreeSet::new();
    for scc in tarjan_scc(&g) {
        if scc.len() > 1 || g.contains_edge(scc[0], scc[0]) {
            in_loop.extend(scc);
        }
    }
    MethodFlow { succ, in_loop }
}

fn callee(ins: &Instr) -> Option<MethodId> {
    match ins {
        Instr::InvokeVirtual(r) => Some(r.id()),
        Instr::Start(c) => Some(MethodId::new(c, "run")),
        _ => None,
    }
}

/// Control-flow and call-graph facts of a validated class table.
pub fn flow_facts(table: &ClassTable) -> FlowFacts {
    let ids: Vec<MethodId> = table.method_ids().collect();
    let index: BTreeMap<&MethodId, usize> = ids.iter().enumerate().map(|(k, id)| (id, k)).collect();
    let mut facts = FlowFacts::default();
    let mut cg: DiGraphMap<usize, ()> = DiGraphMap::new();
    for (k, id) in ids.iter().enumerate() {
        let m = table.method(id).expect("listed method");
        facts.methods.insert(id.clone(), method_flow(m));
        cg.add_node(k);
        let mut out = BTreeSet::new();
        for (&i, ins) in &m.body {
            if let Some(c) = callee(ins) {
                cg.add_edge(k, index[&c], ());
                out.insert((i, c));
            }
        }
        facts.calls.insert(id.clone(), out);
    }
    // tarjan_scc yields SCCs in reverse topological order
    for scc in tarjan_scc(&cg) {
        let rec = scc.len() > 1 || cg.contains_edge(scc[0], scc[0]);
        let mut members: Vec<MethodId> = scc.iter().map(|&k| ids[k].clone()).collect();
        members.sort();
        if rec {
            facts.recursive.extend(members.iter().cloned());
        }
        facts.sccs.push(members);
    }
    let mut work: Vec<MethodId> = Vec::new();
    for (id, calls) in &facts.calls {
        let flow = &facts.methods[id];
        for (i, c) in calls {
            if facts.recursive.contains(id) || flow.in_loop.contains(i) {
                work.push(c.clone());
            }
        }
    }
    while let Some(m) = work.pop() {
        if facts.many.insert(m.clone()) {
            work.extend(facts.calls[&m].iter().map(|(_, c)| c.clone()));
        }
    }
    facts
}

/// False when `i` lies on a loop, or its method is recursive or reachable
/// from a site that is itself not executed once.
pub fn executed_once(facts: &FlowFacts, method: &MethodId, i: Addr) -> Result<bool, FrontendError> {
    let flow = facts
        .methods
        .get(method)
        .ok_or_else(|| FrontendError::Unknown(method.to_string()))?;
    if !flow.succ.contains_key(&i) {
        return Err(FrontendError::Unknown(format!("{method}@{i}")));
    }
    Ok(!facts.recursive.contains(method) && !flow.in_loop.contains(&i) && !facts.many.contains(method))
}
