//! Bounded exhaustive exploration of program configurations, refinement
//! checking, and dynamic audits.
//!
//! The explorer builds the full interleaving graph of a program by
//! breadth-first search from its initial configurations (every stack over
//! the precondition's free variables paired with every normal heap
//! satisfying the precondition). On top of the graph it checks the two
//! routes to refinement:
//!
//! 1. **Step-local:** every edge out of an initialized configuration
//!    projects to a transition of the abstract system, and every
//!    initializing edge lands in an abstract initial state.
//! 2. **Trace-global:** every observation sequence of the program (the
//!    `stdOut` value at each initialized configuration) is a trace of the
//!    stutter-closed abstract system.
//!
//! The routes are checked independently; the first implies the second, and
//! the test suite cross-validates them. Dynamic audits cover fault/race
//! freedom, postconditions, lock-invariant maintenance, and agreement of
//! the printed output with the ghost-erased program.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::assertion::{
    assertion_fv, holds, infer_var_types, satisfying_heaps, type_domain, CheckError, Domains,
};
use crate::ats::{admits_trace, is_initial, is_transition};
use crate::heap::{get_state, PermHeap, Stack};
use crate::semantics::{is_init, step, Next, StepLabel, StepOpts};
use crate::syntax::ast::{Assertion, AtsSpec, Command, LockId, Program, Ty};
use crate::syntax::pretty::command_to_string;
use crate::syntax::wellformed::ghost_free_flow;
use crate::value::{Addr, Value};

/// Exploration bounds.
#[derive(Clone, Debug)]
pub struct ExploreOpts {
    /// Depth bound on the configuration graph.
    pub max_steps: usize,
    /// Bound on observation-sequence length during trace checking.
    pub max_trace_len: usize,
    /// Hard cap on stored configurations.
    pub state_cap: usize,
    /// Worker threads for frontier expansion (1 = sequential).
    pub workers: usize,
    pub step: StepOpts,
}

impl Default for ExploreOpts {
    fn default() -> ExploreOpts {
        let state_cap = std::env::var("REFINE_STATE_CAP")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(1_000_000);
        ExploreOpts {
            max_steps: 64,
            max_trace_len: 6,
            state_cap,
            workers: 1,
            step: StepOpts::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Run(Command),
    Done,
    Abort,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub stack: Stack,
    pub heap: PermHeap,
    /// Whether the ghost lock has been declared (observations count).
    pub init: bool,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: StepLabel,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub initial: Vec<usize>,
    /// First incoming edge of each node, for witness-path reconstruction.
    pub first_in: Vec<Option<usize>>,
    /// True when the depth bound or state cap cut the search short.
    pub truncated: bool,
}

impl Graph {
    /// Outgoing adjacency as edge indices.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.from].push(i);
        }
        out
    }

    /// The node sequence of the BFS-first path from an initial node to `n`.
    pub fn path_to(&self, n: usize) -> Vec<usize> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(e) = self.first_in[cur] {
            cur = self.edges[e].from;
            path.push(cur);
        }
        path.reverse();
        path
    }
}

fn domain_for(d: &Domains, ty: Option<Ty>) -> Result<Vec<Value>, CheckError> {
    match ty {
        Some(t) => type_domain(d, t),
        None => {
            let mut out = type_domain(d, Ty::Int)?;
            out.extend(type_domain(d, Ty::Bool)?);
            out.extend(type_domain(d, Ty::Addr)?);
            out.extend(type_domain(d, Ty::Seq)?);
            Ok(out)
        }
    }
}

/// The initial configurations of a program: stacks ranging over the
/// precondition's free variables, heaps the normal models of the
/// precondition.
pub fn initial_configs(p: &Program, d: &Domains) -> Result<Vec<(Stack, PermHeap)>, CheckError> {
    let pre = p.requires.clone().unwrap_or(Assertion::Emp);
    let fv: Vec<String> = assertion_fv(&pre).into_iter().collect();
    let types = infer_var_types(&pre);
    let mut stacks = vec![Stack::new()];
    for x in &fv {
        let dom = domain_for(d, types.get(x).copied())?;
        let mut next = Vec::with_capacity(stacks.len() * dom.len());
        for s in &stacks {
            for v in &dom {
                next.push(s.with(x, v.clone()));
            }
        }
        stacks = next;
    }
    let mut out = Vec::new();
    for s in stacks {
        for h in satisfying_heaps(d, &s, &pre)? {
            if h.is_normal() && !out.contains(&(s.clone(), h.clone())) {
                out.push((s.clone(), h));
            }
        }
    }
    Ok(out)
}

type NodeKey = (NodeKind, Stack, PermHeap);

fn node_key(kind: &NodeKind, s: &Stack, h: &PermHeap) -> NodeKey {
    let stack = match kind {
        // dead variables must not distinguish states
        NodeKind::Run(c) => s.restricted(&c.fv()),
        NodeKind::Done => {
            let live: BTreeSet<String> = s.bindings().map(|(k, _)| k.clone()).collect();
            s.restricted(&live)
        }
        NodeKind::Abort => Stack::new(),
    };
    let heap = match kind {
        NodeKind::Abort => PermHeap::empty(),
        _ => h.clone(),
    };
    (kind.clone(), stack, heap)
}

/// Builds the configuration graph from explicit start configurations.
pub fn explore_from(
    body: &Command,
    starts: &[(Stack, PermHeap)],
    o: &ExploreOpts,
) -> Graph {
    let mut g = Graph::default();
    let mut index: HashMap<NodeKey, usize> = HashMap::new();
    let mut intern = |g: &mut Graph, kind: NodeKind, s: Stack, h: PermHeap, depth: usize| {
        let key = node_key(&kind, &s, &h);
        match index.get(&key) {
            Some(&i) => (i, false),
            None => {
                let i = g.nodes.len();
                let init = match &kind {
                    NodeKind::Run(c) => is_init(c),
                    _ => false,
                };
                g.nodes.push(Node {
                    kind,
                    stack: s,
                    heap: h,
                    init,
                    depth,
                });
                g.first_in.push(None);
                index.insert(key, i);
                (i, true)
            }
        }
    };

    let mut frontier: Vec<usize> = Vec::new();
    for (s, h) in starts {
        let (i, fresh) = intern(&mut g, NodeKind::Run(body.clone()), s.clone(), h.clone(), 0);
        g.initial.push(i);
        if fresh {
            frontier.push(i);
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(o.workers.max(1))
        .build()
        .expect("thread pool");
    let held = BTreeSet::new();

    for depth in 0..o.max_steps {
        if frontier.is_empty() {
            break;
        }
        if g.nodes.len() > o.state_cap {
            g.truncated = true;
            break;
        }
        // expand in parallel, merge in frontier order for determinism
        let work: Vec<(usize, Command, Stack, PermHeap)> = frontier
            .iter()
            .filter_map(|&i| match &g.nodes[i].kind {
                NodeKind::Run(c) => {
                    Some((i, c.clone(), g.nodes[i].stack.clone(), g.nodes[i].heap.clone()))
                }
                _ => None,
            })
            .collect();
        let expanded: Vec<Vec<(StepLabel, Next)>> = pool.install(|| {
            work.par_iter()
                .map(|(_, c, s, h)| step(c, s, h, &held, &o.step))
                .collect()
        });
        let mut next_frontier = Vec::new();
        for ((from, _, _, _), succs) in work.into_iter().zip(expanded) {
            for (label, n) in succs {
                let (kind, s2, h2) = match n {
                    Next::Run(c2, s2, h2) => (NodeKind::Run(c2), s2, h2),
                    Next::Done(s2, h2) => (NodeKind::Done, s2, h2),
                    Next::Abort => (NodeKind::Abort, Stack::new(), PermHeap::empty()),
                };
                let (to, fresh) = intern(&mut g, kind, s2, h2, depth + 1);
                let eidx = g.edges.len();
                g.edges.push(Edge { from, to, label });
                if g.first_in[to].is_none() && to != from && !g.initial.contains(&to) {
                    g.first_in[to] = Some(eidx);
                }
                if fresh {
                    next_frontier.push(to);
                }
            }
        }
        if depth + 1 == o.max_steps && !next_frontier.is_empty() {
            g.truncated = true;
        }
        frontier = next_frontier;
    }
    g
}

/// Explores a program from its precondition-derived initial configurations.
pub fn explore(p: &Program, d: &Domains, o: &ExploreOpts) -> Result<Graph, CheckError> {
    let starts = initial_configs(p, d)?;
    Ok(explore_from(&p.body, &starts, o))
}

// ----- step-local refinement -------------------------------------------------

/// One failed refinement obligation on a graph edge.
#[derive(Clone, Debug)]
pub struct RefsuccViolation {
    pub edge: usize,
    /// `missing-state`, `not-a-transition`, or `not-initial`.
    pub kind: &'static str,
    pub from_state: Option<Vec<Value>>,
    pub to_state: Option<Vec<Value>>,
    /// Witness path (node ids) from an initial configuration to the edge.
    pub path: Vec<usize>,
}

/// Checks every edge of the graph against the abstract system: steps from
/// initialized configurations must project to transitions of the
/// stutter-closed system, and the initializing step must land in an
/// abstract initial state. Edges into the abort configuration are the
/// safety audit's concern and are skipped here.
pub fn check_refsucc(
    g: &Graph,
    closed: &AtsSpec,
    d: &Domains,
) -> Result<Vec<RefsuccViolation>, CheckError> {
    let ghosts = closed.ghost_addrs();
    let mut out = Vec::new();
    for (i, e) in g.edges.iter().enumerate() {
        let u = &g.nodes[e.from];
        let v = &g.nodes[e.to];
        if matches!(v.kind, NodeKind::Abort) {
            continue;
        }
        let fail = |kind, from_state, to_state, out: &mut Vec<RefsuccViolation>| {
            let mut path = g.path_to(e.from);
            path.push(e.to);
            out.push(RefsuccViolation {
                edge: i,
                kind,
                from_state,
                to_state,
                path,
            });
        };
        if u.init {
            let sig = get_state(&u.heap, &ghosts);
            let sig2 = get_state(&v.heap, &ghosts);
            match (&sig, &sig2) {
                (Some(a), Some(b)) => {
                    if !is_transition(closed, d, a, b)? {
                        fail("not-a-transition", sig, sig2, &mut out);
                    }
                }
                _ => fail("missing-state", sig, sig2, &mut out),
            }
        } else if v.init {
            let sig2 = get_state(&v.heap, &ghosts);
            match &sig2 {
                Some(b) => {
                    if !is_initial(closed, d, b)? {
                        fail("not-initial", None, sig2, &mut out);
                    }
                }
                None => fail("missing-state", None, sig2, &mut out),
            }
        }
    }
    Ok(out)
}

// ----- trace-global refinement -------------------------------------------------

/// Every observation sequence of the graph up to the length bound, paired
/// with one witness path producing it.
pub fn program_traces(
    g: &Graph,
    max_trace_len: usize,
) -> BTreeMap<Vec<Value>, Vec<usize>> {
    let obs = |n: &Node| -> Option<Value> {
        if n.init {
            n.heap.value(&Addr::stdout()).cloned()
        } else {
            None
        }
    };
    let adj = g.out_edges();
    let mut traces: BTreeMap<Vec<Value>, Vec<usize>> = BTreeMap::new();
    let mut seen: BTreeSet<(usize, Vec<Value>)> = BTreeSet::new();
    let mut frontier: Vec<(usize, Vec<Value>, Vec<usize>)> = Vec::new();
    traces.insert(vec![], vec![]);
    for &i in &g.initial {
        let t = match obs(&g.nodes[i]) {
            Some(v) => vec![v],
            None => vec![],
        };
        if seen.insert((i, t.clone())) {
            traces.entry(t.clone()).or_insert_with(|| vec![i]);
            frontier.push((i, t, vec![i]));
        }
    }
    while let Some((n, t, path)) = frontier.pop() {
        for &ei in &adj[n] {
            let to = g.edges[ei].to;
            let mut t2 = t.clone();
            if let Some(v) = obs(&g.nodes[to]) {
                t2.push(v);
            }
            if t2.len() > max_trace_len {
                continue;
            }
            if seen.insert((to, t2.clone())) {
                let mut path2 = path.clone();
                path2.push(to);
                traces
                    .entry(t2.clone())
                    .or_insert_with(|| path2.clone());
                frontier.push((to, t2, path2));
            }
        }
    }
    traces
}

/// A program trace that the abstract system does not admit.
#[derive(Clone, Debug)]
pub struct TraceCex {
    pub trace: Vec<Value>,
    pub path: Vec<usize>,
}

/// Candidate hidden-variable assignments consistent with an observation
/// prefix; `None` before the first observation.
type Cand = Option<(Value, BTreeSet<usize>)>;

/// Trace inclusion: every observation sequence of the graph is a trace of
/// the (stutter-closed) abstract system, returning a shortest-by-search
/// counterexample. Decided exactly — without bounding trace length — by a
/// breadth-first product of graph nodes with the set of hidden abstract
/// states consistent with the observations so far; an initialized node
/// whose candidate set is empty yields the counterexample.
pub fn check_trace_inclusion(
    g: &Graph,
    closed: &AtsSpec,
    d: &Domains,
) -> Result<Option<TraceCex>, CheckError> {
    fn ints_of(v: &Value, out: &mut Vec<i64>) {
        match v {
            Value::Int(i) => out.push(*i),
            Value::Seq(xs) => xs.iter().for_each(|x| ints_of(x, out)),
            _ => {}
        }
    }
    // Widen the integer bounds to cover every observation in the graph,
    // with one unit of slack per distinct observation, so that the hidden
    // state of a spec that tracks the observations stays representable.
    // If the widened hidden state space would blow up, keep the caller's
    // bounds; the confirmation pass below still reports domain exhaustion
    // honestly instead of a spurious counterexample.
    let mut obs_ints = vec![d.int_min, d.int_max];
    let mut longest = d.max_seq_len;
    let mut distinct: BTreeSet<&Value> = BTreeSet::new();
    for n in &g.nodes {
        if !n.init {
            continue;
        }
        if let Some(v) = n.heap.value(&Addr::stdout()) {
            distinct.insert(v);
            ints_of(v, &mut obs_ints);
            if let Value::Seq(xs) = v {
                longest = longest.max(xs.len());
            }
        }
    }
    let slack = distinct.len() as i64 + 1;
    let mut widened = d.clone();
    widened.int_min = obs_ints.iter().copied().min().unwrap() - slack;
    widened.int_max = obs_ints.iter().copied().max().unwrap() + slack;
    widened.max_seq_len = longest;
    let hidden_size = |d: &Domains| -> usize {
        let k = (d.int_max - d.int_min + 1).max(0) as usize;
        let mut total = 1usize;
        for (_, ty) in &closed.vars[1..] {
            let n = match ty {
                Ty::Int => k,
                Ty::Bool => 2,
                Ty::Addr => d.addr_count as usize + d.ghost_addrs.len(),
                Ty::Seq => {
                    let mut tot = 1usize;
                    let mut pow = 1usize;
                    for _ in 0..d.max_seq_len {
                        pow = pow.saturating_mul(k);
                        tot = tot.saturating_add(pow);
                    }
                    tot
                }
            };
            total = total.saturating_mul(n);
        }
        total
    };
    let d = if hidden_size(&widened) <= 50_000 { &widened } else { d };

    let mut hidden: Vec<Vec<Value>> = vec![vec![]];
    for (_, ty) in &closed.vars[1..] {
        let dom = type_domain(d, *ty)?;
        let mut next = Vec::with_capacity(hidden.len() * dom.len());
        for h in &hidden {
            for v in &dom {
                let mut h2 = h.clone();
                h2.push(v.clone());
                next.push(h2);
            }
        }
        hidden = next;
    }
    let full = |o: &Value, h: &[Value]| {
        let mut st = vec![o.clone()];
        st.extend_from_slice(h);
        st
    };
    let mut init_memo: HashMap<Value, BTreeSet<usize>> = HashMap::new();
    let mut trans_memo: HashMap<(Value, Value), Vec<BTreeSet<usize>>> = HashMap::new();

    struct Item {
        node: usize,
        cand: Cand,
        parent: Option<usize>,
    }
    let mut items: Vec<Item> = Vec::new();
    let mut visited: BTreeSet<(usize, Cand)> = BTreeSet::new();
    let mut queue: std::collections::VecDeque<usize> = Default::default();

    let obs_of = |n: &Node| -> Option<Value> {
        if n.init {
            n.heap.value(&Addr::stdout()).cloned()
        } else {
            None
        }
    };
    // A rejection under the bounded hidden domain may be an artifact of the
    // hidden state walking out of the domain, so every candidate
    // counterexample is re-checked over a domain widened to cover the
    // integers it mentions; disagreement means the bounds were too small.
    let confirm = |t: TraceCex| -> Result<Option<TraceCex>, CheckError> {
        let mut ints = vec![d.int_min, d.int_max];
        let mut longest = d.max_seq_len;
        for v in &t.trace {
            ints_of(v, &mut ints);
            if let Value::Seq(xs) = v {
                longest = longest.max(xs.len());
            }
        }
        let slack = t.trace.len() as i64 + 1;
        let mut wide = d.clone();
        wide.int_min = ints.iter().copied().min().unwrap() - slack;
        wide.int_max = ints.iter().copied().max().unwrap() + slack;
        wide.max_seq_len = longest;
        if admits_trace(closed, &wide, &t.trace)? {
            Err(CheckError::Domain(format!(
                "hidden abstract state left the bounded domain along the \
                 observation sequence {:?}",
                t.trace
            )))
        } else {
            Ok(Some(t))
        }
    };
    let cex = |items: &[Item], last: usize, extra: Option<Value>| -> TraceCex {
        let mut trace = Vec::new();
        let mut path = Vec::new();
        let mut cur = Some(last);
        while let Some(i) = cur {
            path.push(items[i].node);
            if let Some((o, _)) = &items[i].cand {
                trace.push(o.clone());
            }
            cur = items[i].parent;
        }
        trace.reverse();
        path.reverse();
        if let Some(o) = extra {
            trace.push(o);
        }
        TraceCex { trace, path }
    };

    // seed with the initial configurations
    for &n in &g.initial {
        let cand: Cand = match obs_of(&g.nodes[n]) {
            Some(o) => {
                let set = match init_memo.get(&o) {
                    Some(s) => s.clone(),
                    None => {
                        let mut s = BTreeSet::new();
                        for (i, h) in hidden.iter().enumerate() {
                            if is_initial(closed, d, &full(&o, h))? {
                                s.insert(i);
                            }
                        }
                        init_memo.insert(o.clone(), s.clone());
                        s
                    }
                };
                if set.is_empty() {
                    items.push(Item {
                        node: n,
                        cand: None,
                        parent: None,
                    });
                    return confirm(cex(&items, items.len() - 1, Some(o)));
                }
                Some((o, set))
            }
            None => None,
        };
        if visited.insert((n, cand.clone())) {
            items.push(Item {
                node: n,
                cand,
                parent: None,
            });
            queue.push_back(items.len() - 1);
        }
    }

    let adj = g.out_edges();
    while let Some(it) = queue.pop_front() {
        if items.len() > 1_000_000 {
            return Err(CheckError::Budget);
        }
        let node = items[it].node;
        for &ei in adj[node].clone().iter() {
            let v = g.edges[ei].to;
            let cand2: Cand = match (&items[it].cand, obs_of(&g.nodes[v])) {
                (c, None) => c.clone(),
                (None, Some(o2)) => {
                    // the initializing step must land in an abstract
                    // initial state
                    let mut set = BTreeSet::new();
                    for (i, h) in hidden.iter().enumerate() {
                        if is_initial(closed, d, &full(&o2, h))? {
                            set.insert(i);
                        }
                    }
                    if set.is_empty() {
                        return confirm(cex(&items, it, Some(o2)));
                    }
                    Some((o2, set))
                }
                (Some((o, set)), Some(o2)) => {
                    let key = (o.clone(), o2.clone());
                    if !trans_memo.contains_key(&key) {
                        let mut table = Vec::with_capacity(hidden.len());
                        for hi in &hidden {
                            let mut img = BTreeSet::new();
                            for (j, hj) in hidden.iter().enumerate() {
                                if is_transition(closed, d, &full(o, hi), &full(&o2, hj))? {
                                    img.insert(j);
                                }
                            }
                            table.push(img);
                        }
                        trans_memo.insert(key.clone(), table);
                    }
                    let table = &trans_memo[&key];
                    let mut img = BTreeSet::new();
                    for &i in set {
                        img.extend(table[i].iter().copied());
                    }
                    if img.is_empty() {
                        return confirm(cex(&items, it, Some(o2)));
                    }
                    Some((o2, img))
                }
            };
            if visited.insert((v, cand2.clone())) {
                items.push(Item {
                    node: v,
                    cand: cand2,
                    parent: Some(it),
                });
                queue.push_back(items.len() - 1);
            }
        }
    }
    Ok(None)
}

// ----- audits ---------------------------------------------------------------------

/// Outcome of one dynamic audit.
#[derive(Clone, Debug, PartialEq)]
pub enum AuditResult {
    Pass { warnings: Vec<String> },
    Fail { detail: String },
    Skipped { reason: String },
}

impl AuditResult {
    pub fn ok(&self) -> bool {
        !matches!(self, AuditResult::Fail { .. })
    }

    fn pass() -> AuditResult {
        AuditResult::Pass { warnings: vec![] }
    }
}

/// Fault freedom and postconditions: no abort configuration is reachable,
/// and terminal states satisfy the declared postcondition. Printing before
/// initialization is reported as a warning.
pub fn audit_safety(g: &Graph, p: &Program, d: &Domains) -> Result<AuditResult, CheckError> {
    let mut warnings = Vec::new();
    for (i, n) in g.nodes.iter().enumerate() {
        if matches!(n.kind, NodeKind::Abort) {
            let path = g.path_to(i);
            let label = g.first_in[i]
                .map(|e| g.edges[e].label.rule_path())
                .unwrap_or_default();
            return Ok(AuditResult::Fail {
                detail: format!("abort reachable via {label} along nodes {path:?}"),
            });
        }
    }
    for e in &g.edges {
        if !e.label.prints.is_empty() && !g.nodes[e.from].init {
            warnings.push(format!(
                "print before initialization at node {}",
                e.from
            ));
            break;
        }
    }
    if let Some(q) = &p.ensures {
        for (i, n) in g.nodes.iter().enumerate() {
            if matches!(n.kind, NodeKind::Done) && !holds(d, &n.stack, &n.heap, q)? {
                return Ok(AuditResult::Fail {
                    detail: format!(
                        "terminal configuration {i} violates the postcondition (heap {})",
                        n.heap
                    ),
                });
            }
        }
    }
    Ok(AuditResult::Pass { warnings })
}

/// Collects declared lock invariants, with the `init` annotation standing
/// for the ghost lock's.
pub fn lock_invariants(p: &Program) -> BTreeMap<LockId, Assertion> {
    let mut out = BTreeMap::new();
    p.body.visit(&mut |c| match c {
        Command::LockDecl {
            lock,
            inv: Some(inv),
            ..
        } => {
            out.entry(lock.clone()).or_insert_with(|| inv.clone());
        }
        Command::InitBlock { inv: Some(inv), .. } => {
            out.entry(LockId::Ghost).or_insert_with(|| inv.clone());
        }
        _ => {}
    });
    out
}

/// Lock-invariant maintenance: whenever a lock is acquired or released, and
/// when the ghost lock comes into existence, some sub-heap of the
/// configuration satisfies the lock's invariant.
pub fn audit_lock_invariants(
    g: &Graph,
    p: &Program,
    d: &Domains,
) -> Result<AuditResult, CheckError> {
    let invs = lock_invariants(p);
    if invs.is_empty() {
        return Ok(AuditResult::Skipped {
            reason: "no lock invariants declared".into(),
        });
    }
    let framed: BTreeMap<&LockId, Assertion> = invs
        .iter()
        .map(|(l, a)| (l, Assertion::sep(a.clone(), Assertion::tt())))
        .collect();
    for (i, e) in g.edges.iter().enumerate() {
        let rule = *e.label.path.last().unwrap_or(&"");
        let (lock, node) = match rule {
            // the invariant must hold while the lock is free: at
            // acquisition it is consumed from the source configuration,
            // at release it is re-established in the target
            "With" => (e.label.lock.as_ref(), e.from),
            "WithinS" => (e.label.lock.as_ref(), e.to),
            "Init" => (Some(&LockId::Ghost), e.to),
            _ => (None, 0),
        };
        let Some(lock) = lock else { continue };
        let Some(want) = framed.get(lock) else {
            continue;
        };
        let n = &g.nodes[node];
        if !holds(d, &n.stack, &n.heap, want)? {
            return Ok(AuditResult::Fail {
                detail: format!(
                    "invariant of lock {lock} does not hold at edge {i} ({rule}), heap {}",
                    n.heap
                ),
            });
        }
    }
    Ok(AuditResult::pass())
}

/// All print sequences of a graph up to the length bound.
fn print_sequences(g: &Graph, max_len: usize) -> BTreeSet<Vec<Value>> {
    let adj = g.out_edges();
    let mut out: BTreeSet<Vec<Value>> = BTreeSet::new();
    let mut seen: BTreeSet<(usize, Vec<Value>)> = BTreeSet::new();
    let mut frontier: Vec<(usize, Vec<Value>)> = Vec::new();
    for &i in &g.initial {
        if seen.insert((i, vec![])) {
            out.insert(vec![]);
            frontier.push((i, vec![]));
        }
    }
    while let Some((n, t)) = frontier.pop() {
        for &ei in &adj[n] {
            let e = &g.edges[ei];
            let mut t2 = t.clone();
            t2.extend(e.label.prints.iter().cloned());
            t2.truncate(max_len);
            if seen.insert((e.to, t2.clone())) {
                out.insert(t2.clone());
                frontier.push((e.to, t2));
            }
        }
    }
    out
}

/// Ghost erasure preserves printed output: the ghost-erased program,
/// started from the same configurations with all ghost cells but `stdOut`
/// removed, produces exactly the same set of print prefixes. Skipped when
/// ghost state flows into program expressions (erasure would change
/// behaviour by construction).
pub fn audit_erasure(
    g: &Graph,
    p: &Program,
    starts: &[(Stack, PermHeap)],
    o: &ExploreOpts,
) -> AuditResult {
    if !ghost_free_flow(p) {
        return AuditResult::Skipped {
            reason: "ghost state flows into program expressions".into(),
        };
    }
    let erased = crate::semantics::erase_ghost(&p.body);
    let erased_starts: Vec<(Stack, PermHeap)> = starts
        .iter()
        .map(|(s, h)| {
            let mut h2 = h.clone();
            let ghost: Vec<Addr> = h2
                .dom()
                .filter(|a| matches!(a, Addr::Ghost(_)) && **a != Addr::stdout())
                .cloned()
                .collect();
            for a in ghost {
                h2 = h2.delete(&a);
            }
            (s.clone(), h2)
        })
        .collect();
    let ge = explore_from(&erased, &erased_starts, o);
    let k = o.max_trace_len;
    let a = print_sequences(g, k);
    let b = print_sequences(&ge, k);
    if g.truncated || ge.truncated {
        return AuditResult::Skipped {
            reason: "exploration truncated; print sets incomparable".into(),
        };
    }
    if a == b {
        AuditResult::pass()
    } else {
        let only_a: Vec<_> = a.difference(&b).take(3).collect();
        let only_b: Vec<_> = b.difference(&a).take(3).collect();
        AuditResult::Fail {
            detail: format!(
                "print sets differ: original-only {only_a:?}, erased-only {only_b:?}"
            ),
        }
    }
}

// ----- JSON views ------------------------------------------------------------------

pub fn label_json(l: &StepLabel) -> serde_json::Value {
    serde_json::json!({
        "rule": l.rule_path(),
        "alloc": l.alloc.as_ref().map(|a| a.to_string()),
        "prints": l.prints,
        "lock": l.lock.as_ref().map(|l| l.to_string()),
    })
}

pub fn graph_json(g: &Graph) -> serde_json::Value {
    let nodes: Vec<serde_json::Value> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            serde_json::json!({
                "id": i,
                "kind": match &n.kind {
                    NodeKind::Run(_) => "run",
                    NodeKind::Done => "done",
                    NodeKind::Abort => "abort",
                },
                "cmd": match &n.kind {
                    NodeKind::Run(c) => Some(command_to_string(c)),
                    _ => None,
                },
                "stack": n.stack.to_json(),
                "heap": n.heap.to_json(),
                "init": n.init,
                "depth": n.depth,
            })
        })
        .collect();
    let edges: Vec<serde_json::Value> = g
        .edges
        .iter()
        .map(|e| {
            serde_json::json!({
                "from": e.from,
                "to": e.to,
                "label": label_json(&e.label),
            })
        })
        .collect();
    serde_json::json!({
        "nodes": nodes,
        "edges": edges,
        "initial": g.initial,
        "truncated": g.truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ats::stutter_close;
    use crate::syntax::parser::{parse_ats, parse_program};

    fn small() -> Domains {
        Domains {
            int_min: 0,
            int_max: 3,
            addr_count: 2,
            max_seq_len: 3,
            max_heap_cells: 2,
            ghost_addrs: vec![Addr::stdout(), Addr::Ghost("count".into())],
            budget: 10_000_000,
        }
    }

    fn opts(max_steps: usize) -> ExploreOpts {
        ExploreOpts {
            max_steps,
            max_trace_len: 3,
            ..ExploreOpts::default()
        }
    }

    fn counter_ats() -> AtsSpec {
        parse_ats(
            "vars { stdOut: seq, count: int }\n\
             init { 0 <= count && stdOut == [] }\n\
             next { stdOut' == stdOut ++ [count] && count' == count + 1 }",
        )
        .unwrap()
    }

    const ECHO: &str = "ghost count;\n\
        requires (stdOut |-> [] ** count |-> 0);\n\
        c := 0;\n\
        init inv (acc(count, 2/3) ** acc(stdOut, 1)) {\n\
          while true {\n\
            next { print(c); ghost count := count + 1; };\n\
            c := c + 1;\n\
          }\n\
        }";

    #[test]
    fn initial_configs_from_precondition() {
        let p = parse_program(ECHO).unwrap();
        let starts = initial_configs(&p, &small()).unwrap();
        assert_eq!(starts.len(), 1);
        let (_, h) = &starts[0];
        assert!(h.is_normal());
        assert_eq!(h.value(&Addr::stdout()), Some(&Value::Seq(vec![])));
        assert_eq!(h.value(&Addr::Ghost("count".into())), Some(&Value::Int(0)));
    }

    #[test]
    fn echo_refines_the_counter() {
        let p = parse_program(ECHO).unwrap();
        let d = small();
        let g = explore(&p, &d, &opts(24)).unwrap();
        assert!(g.nodes.len() > 3);
        let closed = stutter_close(&counter_ats());
        let viols = check_refsucc(&g, &closed, &d).unwrap();
        assert!(viols.is_empty(), "violations: {viols:?}");
        let cex = check_trace_inclusion(&g, &closed, &d).unwrap();
        assert!(cex.is_none(), "counterexample: {cex:?}");
    }

    #[test]
    fn wrong_print_breaks_both_routes() {
        // doubling the printed value first diverges from the counter at the
        // second print: the first one alone still matches an abstract run
        // that happened to start there
        let bad = ECHO.replace("print(c)", "print(c * 2)");
        let p = parse_program(&bad).unwrap();
        let d = small();
        let g = explore(&p, &d, &opts(32)).unwrap();
        let closed = stutter_close(&counter_ats());
        let viols = check_refsucc(&g, &closed, &d).unwrap();
        assert!(!viols.is_empty());
        assert!(viols.iter().any(|v| v.kind == "not-a-transition"));
        let cex = check_trace_inclusion(&g, &closed, &d).unwrap();
        let cex = cex.expect("expected a trace counterexample");
        assert_eq!(cex.trace.last(), Some(&Value::Seq(vec![Value::Int(0), Value::Int(2)])));
        // the bounded trace-enumeration route agrees
        let traces = program_traces(&g, 16);
        let mut rejected = false;
        for t in traces.keys() {
            if !admits_trace(&closed, &d, t).unwrap() {
                rejected = true;
                break;
            }
        }
        assert!(rejected);
        // step-local violations come with a witness path from an initial node
        let v = &viols[0];
        assert!(g.initial.contains(&v.path[0]));
    }

    #[test]
    fn traces_grow_along_executions() {
        let p = parse_program(ECHO).unwrap();
        let d = small();
        let g = explore(&p, &d, &opts(24)).unwrap();
        let traces = program_traces(&g, 8);
        assert!(traces.contains_key(&vec![]));
        // observations stutter at every initialized configuration
        assert!(traces.contains_key(&vec![Value::Seq(vec![])]));
        // and eventually the first print shows up
        let first = Value::Seq(vec![Value::Int(0)]);
        assert!(traces.keys().any(|t| t.last() == Some(&first)));
        // every enumerated trace of the correct program is admitted
        let closed = stutter_close(&counter_ats());
        for t in traces.keys() {
            assert!(admits_trace(&closed, &d, t).unwrap(), "rejected: {t:?}");
        }
    }

    #[test]
    fn safety_audit_catches_aborts() {
        let p = parse_program("x := [y];").unwrap();
        let d = small();
        let g = explore(&p, &d, &opts(4)).unwrap();
        let r = audit_safety(&g, &p, &d).unwrap();
        assert!(matches!(r, AuditResult::Fail { .. }));
        // and passes on a clean program with a postcondition
        let p = parse_program("ensures (x |-> 5); new(x, 5);").unwrap();
        let g = explore(&p, &d, &opts(4)).unwrap();
        let r = audit_safety(&g, &p, &d).unwrap();
        assert!(r.ok(), "{r:?}");
    }

    #[test]
    fn lock_invariant_audit() {
        let d = small();
        // invariant holds at acquire and release
        let ok = parse_program(
            "requires (x |-> 0);\n\
             lock L inv (exists v :: x |-> v) { with L when true { [x] := 1; } }",
        )
        .unwrap();
        let g = explore(&ok, &d, &opts(8)).unwrap();
        assert!(audit_lock_invariants(&g, &ok, &d).unwrap().ok());
        // the body frees the protected cell: broken at release
        let bad = parse_program(
            "requires (x |-> 0);\n\
             lock L inv (exists v :: x |-> v) { with L when true { free(x); } }",
        )
        .unwrap();
        let g = explore(&bad, &d, &opts(8)).unwrap();
        assert!(!audit_lock_invariants(&g, &bad, &d).unwrap().ok());
    }

    #[test]
    fn erasure_audit_compares_prints() {
        let p = parse_program(ECHO).unwrap();
        let d = small();
        let o = opts(24);
        let starts = initial_configs(&p, &d).unwrap();
        let g = explore_from(&p.body, &starts, &o);
        match audit_erasure(&g, &p, &starts, &o) {
            AuditResult::Pass { .. } | AuditResult::Skipped { .. } => {}
            f => panic!("{f:?}"),
        }
    }

    #[test]
    fn worker_count_does_not_change_the_graph() {
        let p = parse_program(ECHO).unwrap();
        let d = small();
        let mut o = opts(16);
        let g1 = explore(&p, &d, &o).unwrap();
        o.workers = 8;
        let g8 = explore(&p, &d, &o).unwrap();
        assert_eq!(
            serde_json::to_string(&graph_json(&g1)).unwrap(),
            serde_json::to_string(&graph_json(&g8)).unwrap()
        );
    }
}
