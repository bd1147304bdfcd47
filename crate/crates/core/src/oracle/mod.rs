//! Concrete interpreter with exhaustive exploration of thread
//! interleavings, used as ground truth for the static analysis.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::frontend::{Addr, ClassTable, Instr, MethodId, TypeName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("unknown entry method {0}")]
    UnknownEntry(String),
    #[error("entry takes {expected} integer arguments, got {got}")]
    Args { expected: usize, got: usize },
    #[error("thread {tid} in {method} at {pc}: {msg}")]
    Runtime { tid: usize, method: String, pc: Addr, msg: String },
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Value {
    Int(i64),
    /// An unset field or a value of unknown type.
    Unset,
    Ref(usize),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Object {
    pub class: String,
    pub fields: BTreeMap<String, Value>,
    pub owner: Option<usize>,
    pub count: u32,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Frame {
    pub method: MethodId,
    pub pc: Addr,
    pub locals: BTreeMap<String, Value>,
    pub stack: Vec<Value>,
    /// Locks entered by this frame, innermost last.
    pub held: Vec<usize>,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Status {
    Running,
    Blocked(usize),
    Done,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Thread {
    pub frames: Vec<Frame>,
    pub status: Status,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct RunConfig {
    pub heap: Vec<Object>,
    pub threads: Vec<Thread>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    /// Total number of transitions explored.
    pub max_steps: usize,
    pub max_threads: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_steps: 1_000_000, max_threads: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub tid: usize,
    pub method: String,
    pub pc: Addr,
    pub instr: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExploreResult {
    /// One trace per distinct deadlocked configuration, up to
    /// [`MAX_TRACES`].
    pub deadlocks: Vec<Vec<TraceStep>>,
    pub deadlock_states: usize,
    /// Every interleaving was covered within the bounds.
    pub exhausted: bool,
    pub states: usize,
    pub steps: usize,
}

impl ExploreResult {
    pub fn deadlocked(&self) -> bool {
        self.deadlock_states > 0
    }
}

pub const MAX_TRACES: usize = 16;

fn default_value(t: &TypeName) -> Value {
    match t {
        TypeName::Int => Value::Int(0),
        _ => Value::Unset,
    }
}

fn alloc(table: &ClassTable, heap: &mut Vec<Object>, class: &str) -> usize {
    let fields = table.classes[class].fields.iter().map(|(f, t)| (f.clone(), default_value(t))).collect();
    heap.push(Object { class: class.to_string(), fields, owner: None, count: 0 });
    heap.len() - 1
}

/// Start configuration: one thread running `entry` on fresh objects, with
/// `args` for the integer parameters in order.
pub fn initial_config(table: &ClassTable, entry: &MethodId, args: &[i64]) -> Result<RunConfig, OracleError> {
    let def = table.method(entry).ok_or_else(|| OracleError::UnknownEntry(entry.to_string()))?;
    let ints = def.params.iter().filter(|(_, t)| *t == TypeName::Int).count();
    if ints != args.len() {
        return Err(OracleError::Args { expected: ints, got: args.len() });
    }
    let mut cfg = RunConfig::default();
    let this = alloc(table, &mut cfg.heap, &entry.class);
    let mut locals = BTreeMap::from([("this".to_string(), Value::Ref(this))]);
    let mut ints = args.iter();
    for (p, t) in &def.params {
        let v = match t {
            TypeName::Int => Value::Int(*ints.next().expect("counted")),
            TypeName::Top => Value::Unset,
            TypeName::Class(c) => Value::Ref(alloc(table, &mut cfg.heap, c)),
        };
        locals.insert(p.clone(), v);
    }
    let frame = Frame { method: entry.clone(), pc: 0, locals, stack: Vec::new(), held: Vec::new() };
    cfg.threads.push(Thread { frames: vec![frame], status: Status::Running });
    Ok(cfg)
}

impl RunConfig {
    fn current(&self, tid: usize) -> Option<&Frame> {
        self.threads.get(tid).and_then(|t| t.frames.last())
    }

    /// Whether stepping `tid` makes progress: it is not finished and does
    /// not wait for a lock held by another thread.
    pub fn can_step(&self, table: &ClassTable, tid: usize) -> bool {
        let th = &self.threads[tid];
        if th.status == Status::Done {
            return false;
        }
        let Some(f) = th.frames.last() else { return false };
        match table.method(&f.method).and_then(|m| m.body.get(&f.pc)) {
            Some(Instr::MonitorEnter) => match f.stack.last() {
                Some(Value::Ref(a)) => self.heap[*a].owner.is_none_or(|o| o == tid),
                _ => true,
            },
            _ => true,
        }
    }

    /// Some thread waits and none can make progress.
    pub fn is_deadlocked(&self, table: &ClassTable) -> bool {
        let live: Vec<usize> = (0..self.threads.len()).filter(|&t| self.threads[t].status != Status::Done).collect();
        !live.is_empty() && live.iter().all(|&t| !self.can_step(table, t))
    }
}

/// Executes one instruction of thread `tid`. A `monitorenter` on a lock
/// owned by another thread leaves the thread `Blocked` without moving.
pub fn step(table: &ClassTable, cfg: &RunConfig, tid: usize) -> Result<RunConfig, OracleError> {
    let mut c = cfg.clone();
    let frame = c.current(tid).ok_or_else(|| OracleError::Runtime {
        tid,
        method: String::new(),
        pc: 0,
        msg: "thread has finished".into(),
    })?;
    let (method, pc) = (frame.method.clone(), frame.pc);
    let err = |msg: String| OracleError::Runtime { tid, method: method.to_string(), pc, msg };
    let def = table.method(&method).ok_or_else(|| err("unknown method".into()))?;
    let ins = def.body.get(&pc).ok_or_else(|| err("no instruction".into()))?;
    let next = def.next_addr(pc);
    let fall = || next.ok_or_else(|| err("falls off the end".into()));

    let th = &mut c.threads[tid];
    th.status = Status::Running;
    let f = th.frames.last_mut().expect("frame");
    let pop = |f: &mut Frame| f.stack.pop().ok_or_else(|| err("stack underflow".into()));
    let pop_int = |f: &mut Frame| match f.stack.pop() {
        Some(Value::Int(n)) => Ok(n),
        other => Err(err(format!("expected an integer, found {other:?}"))),
    };
    let pop_ref = |f: &mut Frame| match f.stack.pop() {
        Some(Value::Ref(a)) => Ok(a),
        other => Err(err(format!("expected an object, found {other:?}"))),
    };
    match ins {
        Instr::Inc => {
            let n = pop_int(f)?;
            f.stack.push(Value::Int(n.wrapping_add(1)));
            f.pc = fall()?;
        }
        Instr::Pop => {
            pop(f)?;
            f.pc = fall()?;
        }
        Instr::Push => {
            f.stack.push(Value::Int(0));
            f.pc = fall()?;
        }
        Instr::Dup => {
            let v = pop(f)?;
            f.stack.push(v.clone());
            f.stack.push(v);
            f.pc = fall()?;
        }
        Instr::Sub => {
            let b = pop_int(f)?;
            let a = pop_int(f)?;
            f.stack.push(Value::Int(a.wrapping_sub(b)));
            f.pc = fall()?;
        }
        Instr::Load(x) => {
            let v = f.locals.get(x).cloned().ok_or_else(|| err(format!("unassigned variable {x}")))?;
            f.stack.push(v);
            f.pc = fall()?;
        }
        Instr::Store(x) => {
            let v = pop(f)?;
            f.locals.insert(x.clone(), v);
            f.pc = fall()?;
        }
        Instr::If(l) => {
            let v = pop(f)?;
            f.pc = if v != Value::Int(0) { *l } else { fall()? };
        }
        Instr::Goto(l) => f.pc = *l,
        Instr::New(class) => {
            f.pc = fall()?;
            let a = alloc(table, &mut c.heap, class);
            c.threads[tid].frames.last_mut().expect("frame").stack.push(Value::Ref(a));
        }
        Instr::GetField(r) => {
            let a = pop_ref(f)?;
            let v = c.heap[a].fields.get(&r.field).cloned().ok_or_else(|| err(format!("no field {}", r.field)))?;
            let f = c.threads[tid].frames.last_mut().expect("frame");
            f.stack.push(v);
            f.pc = fall()?;
        }
        Instr::PutField(r) => {
            let v = pop(f)?;
            let a = pop_ref(f)?;
            f.pc = fall()?;
            c.heap[a].fields.insert(r.field.clone(), v);
        }
        Instr::MonitorEnter => {
            let a = match f.stack.last() {
                Some(Value::Ref(a)) => *a,
                other => return Err(err(format!("monitorenter on {other:?}"))),
            };
            let obj = &mut c.heap[a];
            match obj.owner {
                Some(o) if o != tid => {
                    c.threads[tid].status = Status::Blocked(a);
                    return Ok(c);
                }
                _ => {
                    obj.owner = Some(tid);
                    obj.count += 1;
                }
            }
            let f = c.threads[tid].frames.last_mut().expect("frame");
            f.stack.pop();
            f.held.push(a);
            f.pc = fall()?;
        }
        Instr::MonitorExit => {
            let a = pop_ref(f)?;
            let pos = f.held.iter().rposition(|&h| h == a).ok_or_else(|| err("monitorexit on a lock not entered here".into()))?;
            f.held.remove(pos);
            f.pc = fall()?;
            let obj = &mut c.heap[a];
            obj.count -= 1;
            if obj.count == 0 {
                obj.owner = None;
            }
        }
        Instr::InvokeVirtual(r) => {
            let callee = r.id();
            let cdef = table.method(&callee).ok_or_else(|| err(format!("unknown method {callee}")))?;
            let mut args = Vec::new();
            for _ in &cdef.params {
                args.push(pop(f)?);
            }
            args.reverse();
            let recv = pop_ref(f)?;
            if c.heap[recv].class != callee.class {
                return Err(err(format!("receiver of class {} for {callee}", c.heap[recv].class)));
            }
            let mut locals = BTreeMap::from([("this".to_string(), Value::Ref(recv))]);
            for ((p, _), v) in cdef.params.iter().zip(args) {
                locals.insert(p.clone(), v);
            }
            c.threads[tid].frames.push(Frame { method: callee, pc: 0, locals, stack: Vec::new(), held: Vec::new() });
        }
        Instr::Start(class) => {
            let a = pop_ref(f)?;
            f.pc = fall()?;
            if c.heap[a].class != *class {
                return Err(err(format!("start {class} on an object of class {}", c.heap[a].class)));
            }
            let run = MethodId::new(class, "run");
            let locals = BTreeMap::from([("this".to_string(), Value::Ref(a))]);
            let frame = Frame { method: run, pc: 0, locals, stack: Vec::new(), held: Vec::new() };
            c.threads.push(Thread { frames: vec![frame], status: Status::Running });
        }
        Instr::Return => {
            if !f.held.is_empty() {
                return Err(err("return while holding locks".into()));
            }
            let ret = match def.ret {
                Some(_) => Some(pop(f)?),
                None => None,
            };
            let th = &mut c.threads[tid];
            th.frames.pop();
            match th.frames.last_mut() {
                None => th.status = Status::Done,
                Some(caller) => {
                    caller.stack.extend(ret);
                    let cm = table.method(&caller.method).expect("caller");
                    caller.pc = cm.next_addr(caller.pc).ok_or_else(|| err("caller falls off the end".into()))?;
                }
            }
        }
    }
    Ok(c)
}

/// Renumbers heap addresses in order of first reach from the threads, so
/// that configurations differing only in allocation order coincide.
pub fn canonical(cfg: &RunConfig) -> RunConfig {
    let mut order: HashMap<usize, usize> = HashMap::new();
    let mut queue: Vec<usize> = Vec::new();
    let visit = |v: &Value, order: &mut HashMap<usize, usize>, queue: &mut Vec<usize>| {
        if let Value::Ref(a) = v {
            if !order.contains_key(a) {
                order.insert(*a, order.len());
                queue.push(*a);
            }
        }
    };
    for th in &cfg.threads {
        for f in &th.frames {
            for v in f.locals.values().chain(&f.stack) {
                visit(v, &mut order, &mut queue);
            }
            for &h in &f.held {
                visit(&Value::Ref(h), &mut order, &mut queue);
            }
        }
        if let Status::Blocked(a) = th.status {
            visit(&Value::Ref(a), &mut order, &mut queue);
        }
    }
    let mut k = 0;
    while k < queue.len() {
        let a = queue[k];
        for v in cfg.heap[a].fields.values() {
            visit(v, &mut order, &mut queue);
        }
        k += 1;
    }
    let map = |v: &Value| match v {
        Value::Ref(a) => Value::Ref(order[a]),
        v => v.clone(),
    };
    let mut heap = vec![None; queue.len()];
    for &a in &queue {
        let o = &cfg.heap[a];
        heap[order[&a]] = Some(Object {
            class: o.class.clone(),
            fields: o.fields.iter().map(|(f, v)| (f.clone(), map(v))).collect(),
            owner: o.owner,
            count: o.count,
        });
    }
    let threads = cfg
        .threads
        .iter()
        .map(|th| Thread {
            frames: th
                .frames
                .iter()
                .map(|f| Frame {
                    method: f.method.clone(),
                    pc: f.pc,
                    locals: f.locals.iter().map(|(x, v)| (x.clone(), map(v))).collect(),
                    stack: f.stack.iter().map(map).collect(),
                    held: f.held.iter().map(|h| order[h]).collect(),
                })
                .collect(),
            status: match th.status {
                Status::Blocked(a) => Status::Blocked(order[&a]),
                ref s => s.clone(),
            },
        })
        .collect();
    RunConfig { heap: heap.into_iter().map(|o| o.expect("reached")).collect(), threads }
}

/// Depth-first search over every scheduling choice from the entry
/// configuration, memoising canonical configurations.
pub fn explore(table: &ClassTable, entry: &MethodId, args: &[i64], bounds: Bounds) -> Result<ExploreResult, OracleError> {
    let start = canonical(&initial_config(table, entry, args)?);
    // trace arena: (parent, step)
    let mut arena: Vec<(usize, Option<TraceStep>)> = vec![(usize::MAX, None)];
    let mut seen: HashSet<RunConfig> = HashSet::from([start.clone()]);
    let mut stack: Vec<(RunConfig, usize)> = vec![(start, 0)];
    let mut out = ExploreResult { deadlocks: Vec::new(), deadlock_states: 0, exhausted: true, states: 1, steps: 0 };
    while let Some((cfg, node)) = stack.pop() {
        if cfg.is_deadlocked(table) {
            out.deadlock_states += 1;
            if out.deadlocks.len() < MAX_TRACES {
                out.deadlocks.push(trace(&arena, node));
            }
            continue;
        }
        for tid in (0..cfg.threads.len()).rev() {
            if !cfg.can_step(table, tid) {
                continue;
            }
            if out.steps >= bounds.max_steps {
                out.exhausted = false;
                return Ok(out);
            }
            out.steps += 1;
            let f = cfg.current(tid).expect("live thread");
            let instr = table.method(&f.method).and_then(|m| m.body.get(&f.pc)).map(|i| i.to_string()).unwrap_or_default();
            let label = TraceStep { tid, method: f.method.to_string(), pc: f.pc, instr };
            let next = step(table, &cfg, tid)?;
            if next.threads.len() > bounds.max_threads {
                out.exhausted = false;
                continue;
            }
            let next = canonical(&next);
            if seen.insert(next.clone()) {
                out.states += 1;
                arena.push((node, Some(label)));
                stack.push((next, arena.len() - 1));
            }
        }
    }
    Ok(out)
}

fn trace(arena: &[(usize, Option<TraceStep>)], mut node: usize) -> Vec<TraceStep> {
    let mut out = Vec::new();
    while node != usize::MAX {
        let (parent, s) = &arena[node];
        out.extend(s.clone());
        node = *parent;
    }
    out.reverse();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    const SRC: &str = "class O { methods: void init() { 0: return } }
    class T { fields: a: O b: O methods:
      void init(O a, O b) { 0: load this 1: load a 2: putfield T.a:O 3: load this 4: load b 5: putfield T.b:O 6: return }
      void run() { 0: load this 1: getfield T.a:O 2: monitorenter 3: load this 4: getfield T.a:O 5: monitorexit 6: return } }";

    fn with_lock() -> (ClassTable, RunConfig) {
        let t = parse_program(SRC).unwrap();
        let mut cfg = RunConfig::default();
        let o = alloc(&t, &mut cfg.heap, "O");
        let frame = |tid: usize| Frame {
            method: MethodId::new("O", "init"),
            pc: 0,
            locals: BTreeMap::new(),
            stack: vec![Value::Ref(o)],
            held: if tid == 0 { vec![o] } else { vec![] },
        };
        cfg.heap[o].owner = Some(0);
        cfg.heap[o].count = 1;
        for tid in 0..2 {
            cfg.threads.push(Thread { frames: vec![frame(tid)], status: Status::Running });
        }
        (t, cfg)
    }

    fn at_monitorenter(cfg: &mut RunConfig, tid: usize) {
        let f = cfg.threads[tid].frames.last_mut().unwrap();
        f.method = MethodId::new("T", "run");
        f.pc = 2;
    }

    #[test]
    fn reentrant_enter_counts() {
        let (t, mut cfg) = with_lock();
        at_monitorenter(&mut cfg, 0);
        let next = step(&t, &cfg, 0).unwrap();
        assert_eq!(next.heap[0].count, 2);
        assert_eq!(next.threads[0].status, Status::Running);
        assert_eq!(next.threads[0].frames[0].pc, 3);
    }

    #[test]
    fn foreign_lock_blocks() {
        let (t, mut cfg) = with_lock();
        at_monitorenter(&mut cfg, 1);
        assert!(!cfg.can_step(&t, 1));
        let next = step(&t, &cfg, 1).unwrap();
        assert_eq!(next.threads[1].status, Status::Blocked(0));
        assert_eq!(next.threads[1].frames[0].pc, 2);
    }

    #[test]
    fn start_spawns_run() {
        let prog = parse_program(&format!("{SRC} class M {{ methods: void m() {{ 0: start T 1: return }} }}")).unwrap();
        let mut cfg = RunConfig::default();
        let th = alloc(&prog, &mut cfg.heap, "T");
        let f = Frame {
            method: MethodId::new("M", "m"),
            pc: 0,
            locals: BTreeMap::new(),
            stack: vec![Value::Ref(th)],
            held: vec![],
        };
        cfg.threads.push(Thread { frames: vec![f], status: Status::Running });
        let next = step(&prog, &cfg, 0).unwrap();
        assert_eq!(next.threads.len(), 2);
        assert_eq!(next.threads[1].frames[0].method, MethodId::new("T", "run"));
        assert_eq!(next.threads[1].frames[0].pc, 0);
    }

    #[test]
    fn canonical_ignores_allocation_order() {
        let t = parse_program(SRC).unwrap();
        let mut a = RunConfig::default();
        let x = alloc(&t, &mut a.heap, "O");
        let y = alloc(&t, &mut a.heap, "T");
        let mut b = RunConfig::default();
        let y2 = alloc(&t, &mut b.heap, "T");
        let x2 = alloc(&t, &mut b.heap, "O");
        let frame = |o: usize, th: usize| Frame {
            method: MethodId::new("O", "init"),
            pc: 0,
            locals: BTreeMap::from([("o".to_string(), Value::Ref(o)), ("t".to_string(), Value::Ref(th))]),
            stack: vec![],
            held: vec![],
        };
        a.threads.push(Thread { frames: vec![frame(x, y)], status: Status::Running });
        b.threads.push(Thread { frames: vec![frame(x2, y2)], status: Status::Running });
        assert_ne!(a, b);
        assert_eq!(canonical(&a), canonical(&b));
    }
}
