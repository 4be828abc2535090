//! Small-step operational semantics of the concurrent heap language.
//!
//! Configurations are command/stack/heap triples over *normal* heaps (every
//! cell at full permission), plus a distinguished abort configuration for
//! memory faults, runtime type errors, and races. The step function returns
//! every successor of a configuration together with a [`StepLabel`]
//! identifying the applied rule, the chosen address on allocation, the lock
//! acquired, and the values printed.
//!
//! Ghost commands execute like ordinary ones against ghost heap cells:
//! `ghost g := E` updates the cell at the ghost address `g`, `next { C }`
//! runs its body to completion in a single step, and `init inv (G) { C }`
//! takes one step to a declaration of the ghost lock around `C` — from that
//! point on the configuration counts as initialized.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::assertion::eval_expr;
use crate::heap::{PermHeap, Stack};
use crate::syntax::ast::{Command, Expr, LockId};
use crate::value::{Addr, Value};

/// Identifies one step: the rule path from the outermost context to the
/// axiom applied (e.g. `Seq.Par1.Assign`), plus its observable choices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StepLabel {
    pub path: Vec<&'static str>,
    /// Address chosen by an allocation, if any.
    pub alloc: Option<Addr>,
    /// Values printed during this step (several inside `next`).
    pub prints: Vec<Value>,
    /// Lock acquired by this step, if any.
    pub lock: Option<LockId>,
}

impl StepLabel {
    fn rule(name: &'static str) -> StepLabel {
        StepLabel {
            path: vec![name],
            ..StepLabel::default()
        }
    }

    fn under(mut self, name: &'static str) -> StepLabel {
        self.path.insert(0, name);
        self
    }

    pub fn rule_path(&self) -> String {
        self.path.join(".")
    }
}

/// The result of one step.
#[derive(Clone, Debug, PartialEq)]
pub enum Next {
    /// The command has more work to do.
    Run(Command, Stack, PermHeap),
    /// The command terminated.
    Done(Stack, PermHeap),
    /// Memory fault, runtime type error, race, or lock re-entry.
    Abort,
}

/// Tunables of the step relation.
#[derive(Clone, Debug)]
pub struct StepOpts {
    /// When set, `new` branches over every free address below `addr_count`;
    /// otherwise it deterministically picks the least free ordinary address.
    pub full_alloc_nondet: bool,
    pub addr_count: u64,
    /// Bound on inner steps when running a `next` body to completion.
    pub next_step_bound: usize,
}

impl Default for StepOpts {
    fn default() -> StepOpts {
        StepOpts {
            full_alloc_nondet: false,
            addr_count: 4,
            next_step_bound: 64,
        }
    }
}

fn rc(c: &Arc<Command>) -> Command {
    (**c).clone()
}

/// Locks currently held (i.e. `within` blocks) anywhere in the command.
pub fn locked(c: &Command) -> BTreeSet<LockId> {
    let mut out = BTreeSet::new();
    c.visit(&mut |c| {
        if let Command::Within { lock, .. } = c {
            out.insert(lock.clone());
        }
    });
    out
}

/// Locks declared anywhere in the command. An `init` block's eventual ghost
/// lock is deliberately *not* counted: the ghost lock exists only once the
/// init step has fired.
pub fn dlocks(c: &Command) -> BTreeSet<LockId> {
    let mut out = BTreeSet::new();
    c.visit(&mut |c| {
        if let Command::LockDecl { lock, .. } = c {
            out.insert(lock.clone());
        }
    });
    out
}

/// A configuration is initialized once the ghost lock has been declared.
pub fn is_init(c: &Command) -> bool {
    dlocks(c).contains(&LockId::Ghost)
}

/// The heap addresses the next unprotected step of `c` may read and write.
/// Accesses under `with`, `within`, `next`, and `init` are lock-protected
/// and excluded; the written cell also counts as read. Used by the race
/// rule.
pub fn accesses(c: &Command, s: &Stack, h: &PermHeap) -> (BTreeSet<Addr>, BTreeSet<Addr>) {
    let mut reads = BTreeSet::new();
    let mut writes = BTreeSet::new();
    collect_accesses(c, s, h, &mut reads, &mut writes);
    reads.extend(writes.iter().cloned());
    (reads, writes)
}

fn ghost_reads_of(e: &Expr, reads: &mut BTreeSet<Addr>) {
    let mut names = BTreeSet::new();
    e.ghost_reads(&mut names);
    reads.extend(names.into_iter().map(Addr::Ghost));
}

fn addr_of(e: &Expr, s: &Stack, h: &PermHeap) -> Option<Addr> {
    match eval_expr(s, Some(h), e) {
        Ok(Value::Addr(a)) => Some(a),
        _ => None,
    }
}

fn collect_accesses(
    c: &Command,
    s: &Stack,
    h: &PermHeap,
    reads: &mut BTreeSet<Addr>,
    writes: &mut BTreeSet<Addr>,
) {
    match c {
        Command::Skip => {}
        Command::Assign(_, e) | Command::Alloc(_, e) => ghost_reads_of(e, reads),
        Command::Read(_, e) => {
            ghost_reads_of(e, reads);
            if let Some(a) = addr_of(e, s, h) {
                reads.insert(a);
            }
        }
        Command::Write(e, v) => {
            ghost_reads_of(e, reads);
            ghost_reads_of(v, reads);
            if let Some(a) = addr_of(e, s, h) {
                writes.insert(a);
            }
        }
        Command::Free(e) => {
            ghost_reads_of(e, reads);
            if let Some(a) = addr_of(e, s, h) {
                writes.insert(a);
            }
        }
        Command::Print(e) => {
            ghost_reads_of(e, reads);
            writes.insert(Addr::stdout());
        }
        Command::GhostAssign(g, e) => {
            ghost_reads_of(e, reads);
            writes.insert(Addr::Ghost(g.clone()));
        }
        Command::Seq { first, .. } => collect_accesses(first, s, h, reads, writes),
        Command::Ite(e, _, _) => ghost_reads_of(e, reads),
        Command::While { guard, .. } => ghost_reads_of(guard, reads),
        Command::Par { left, right, .. } => {
            collect_accesses(left, s, h, reads, writes);
            collect_accesses(right, s, h, reads, writes);
        }
        Command::LockDecl { body, .. } => collect_accesses(body, s, h, reads, writes),
        // lock-protected regions do not participate in race detection
        Command::With { .. }
        | Command::Within { .. }
        | Command::NextBlock(_)
        | Command::InitBlock { .. } => {}
    }
}

/// Syntactic atomicity: a (possibly empty) sequence of ghost assignments
/// containing at most one basic command. The shape admissible inside
/// `next`.
pub fn is_atomic(c: &Command) -> bool {
    fn count(c: &Command, base: &mut usize) -> bool {
        match c {
            Command::Skip | Command::GhostAssign(..) => true,
            Command::Assign(..)
            | Command::Read(..)
            | Command::Write(..)
            | Command::Alloc(..)
            | Command::Free(..)
            | Command::Print(..) => {
                *base += 1;
                true
            }
            Command::Seq { first, second, .. } => count(first, base) && count(second, base),
            _ => false,
        }
    }
    let mut base = 0;
    count(c, &mut base) && base <= 1
}

/// Removes ghost code: ghost assignments become `skip`, `next` and `init`
/// blocks are replaced by their (erased) bodies. Ghost *reads* inside
/// remaining expressions are left in place; programs where those occur
/// outside ghost code are flagged by the well-formedness pass.
pub fn erase_ghost(c: &Command) -> Command {
    match c {
        Command::GhostAssign(..) => Command::Skip,
        Command::NextBlock(body) | Command::InitBlock { body, .. } => erase_ghost(body),
        Command::Seq { first, second, mid } => Command::Seq {
            first: Arc::new(erase_ghost(first)),
            second: Arc::new(erase_ghost(second)),
            mid: mid.clone(),
        },
        Command::Ite(e, c1, c2) => Command::Ite(
            e.clone(),
            Arc::new(erase_ghost(c1)),
            Arc::new(erase_ghost(c2)),
        ),
        Command::While { guard, inv, body } => Command::While {
            guard: guard.clone(),
            inv: inv.clone(),
            body: Arc::new(erase_ghost(body)),
        },
        Command::Par {
            left,
            right,
            left_spec,
            right_spec,
        } => Command::Par {
            left: Arc::new(erase_ghost(left)),
            right: Arc::new(erase_ghost(right)),
            left_spec: left_spec.clone(),
            right_spec: right_spec.clone(),
        },
        Command::LockDecl { lock, inv, body } => Command::LockDecl {
            lock: lock.clone(),
            inv: inv.clone(),
            body: Arc::new(erase_ghost(body)),
        },
        Command::With { lock, guard, body } => Command::With {
            lock: lock.clone(),
            guard: guard.clone(),
            body: Arc::new(erase_ghost(body)),
        },
        Command::Within { lock, body } => Command::Within {
            lock: lock.clone(),
            body: Arc::new(erase_ghost(body)),
        },
        _ => c.clone(),
    }
}

/// All successors of `⟨c, s, h⟩`. `held` is the set of locks acquired by
/// enclosing `within` blocks (governs blocking and re-entrancy aborts).
pub fn step(
    c: &Command,
    s: &Stack,
    h: &PermHeap,
    held: &BTreeSet<LockId>,
    o: &StepOpts,
) -> Vec<(StepLabel, Next)> {
    match c {
        Command::Skip => vec![(StepLabel::rule("Skip"), Next::Done(s.clone(), h.clone()))],
        Command::Assign(x, e) => match eval_expr(s, Some(h), e) {
            Ok(v) => vec![(
                StepLabel::rule("Assign"),
                Next::Done(s.with(x, v), h.clone()),
            )],
            Err(_) => vec![(StepLabel::rule("AssignA"), Next::Abort)],
        },
        Command::Read(x, e) => match addr_of(e, s, h).and_then(|a| h.value(&a).cloned()) {
            Some(v) => vec![(
                StepLabel::rule("Read"),
                Next::Done(s.with(x, v), h.clone()),
            )],
            None => vec![(StepLabel::rule("ReadA"), Next::Abort)],
        },
        Command::Write(e, v) => match (addr_of(e, s, h), eval_expr(s, Some(h), v)) {
            (Some(a), Ok(val)) if h.contains(&a) => vec![(
                StepLabel::rule("Write"),
                Next::Done(s.clone(), h.update(&a, val)),
            )],
            _ => vec![(StepLabel::rule("WriteA"), Next::Abort)],
        },
        Command::Alloc(x, e) => match eval_expr(s, Some(h), e) {
            Err(_) => vec![(StepLabel::rule("AllocA"), Next::Abort)],
            Ok(v) => {
                let choices: Vec<u64> = if o.full_alloc_nondet {
                    (0..o.addr_count)
                        .filter(|n| !h.contains(&Addr::Ord(*n)))
                        .collect()
                } else {
                    vec![h.least_free_ordinary()]
                };
                choices
                    .into_iter()
                    .map(|n| {
                        let a = Addr::Ord(n);
                        let mut h2 = h.clone();
                        h2.insert(a.clone(), crate::value::Perm::full(), v.clone());
                        (
                            StepLabel {
                                alloc: Some(a.clone()),
                                ..StepLabel::rule("Alloc")
                            },
                            Next::Done(s.with(x, Value::Addr(a)), h2),
                        )
                    })
                    .collect()
            }
        },
        Command::Free(e) => match addr_of(e, s, h) {
            // ghost cells are not program-deallocatable
            Some(a @ Addr::Ord(_)) if h.contains(&a) => vec![(
                StepLabel::rule("Free"),
                Next::Done(s.clone(), h.delete(&a)),
            )],
            _ => vec![(StepLabel::rule("FreeA"), Next::Abort)],
        },
        Command::Print(e) => match (eval_expr(s, Some(h), e), h.value(&Addr::stdout())) {
            (Ok(v), Some(Value::Seq(out))) => {
                let mut out = out.clone();
                out.push(v.clone());
                vec![(
                    StepLabel {
                        prints: vec![v],
                        ..StepLabel::rule("Print")
                    },
                    Next::Done(s.clone(), h.update(&Addr::stdout(), Value::Seq(out))),
                )]
            }
            _ => vec![(StepLabel::rule("PrintA"), Next::Abort)],
        },
        Command::GhostAssign(g, e) => {
            let a = Addr::Ghost(g.clone());
            match (eval_expr(s, Some(h), e), h.contains(&a)) {
                (Ok(v), true) => vec![(
                    StepLabel::rule("GhostAssign"),
                    Next::Done(s.clone(), h.update(&a, v)),
                )],
                _ => vec![(StepLabel::rule("GhostAssignA"), Next::Abort)],
            }
        }
        Command::Seq { first, second, mid } => step(first, s, h, held, o)
            .into_iter()
            .map(|(l, n)| {
                let n = match n {
                    Next::Run(c1, s2, h2) => Next::Run(
                        Command::Seq {
                            first: Arc::new(c1),
                            second: second.clone(),
                            mid: mid.clone(),
                        },
                        s2,
                        h2,
                    ),
                    Next::Done(s2, h2) => Next::Run(rc(second), s2, h2),
                    Next::Abort => Next::Abort,
                };
                (l.under("Seq"), n)
            })
            .collect(),
        Command::Ite(e, c1, c2) => match eval_expr(s, Some(h), e) {
            Ok(Value::Bool(true)) => vec![(
                StepLabel::rule("Ite1"),
                Next::Run(rc(c1), s.clone(), h.clone()),
            )],
            Ok(Value::Bool(false)) => vec![(
                StepLabel::rule("Ite2"),
                Next::Run(rc(c2), s.clone(), h.clone()),
            )],
            _ => vec![(StepLabel::rule("IteA"), Next::Abort)],
        },
        Command::While { guard, body, .. } => {
            // one silent unfolding step to the guarded conditional
            let unfolded = Command::Ite(
                guard.clone(),
                Arc::new(Command::seq(rc(body), c.clone())),
                Arc::new(Command::Skip),
            );
            vec![(
                StepLabel::rule("While"),
                Next::Run(unfolded, s.clone(), h.clone()),
            )]
        }
        Command::Par {
            left,
            right,
            left_spec,
            right_spec,
        } => {
            let mut out = Vec::new();
            if left.is_skip() && right.is_skip() {
                return vec![(StepLabel::rule("ParS"), Next::Done(s.clone(), h.clone()))];
            }
            // race rule: conflicting unprotected accesses of the two branches
            let (r1, w1) = accesses(left, s, h);
            let (r2, w2) = accesses(right, s, h);
            if w1.intersection(&r2).next().is_some() || w2.intersection(&r1).next().is_some() {
                out.push((StepLabel::rule("Race"), Next::Abort));
            }
            let mut branch = |own: &Arc<Command>, other: &Arc<Command>, leftside: bool| {
                if own.is_skip() {
                    return;
                }
                let other_locked = locked(other);
                for (l, n) in step(own, s, h, held, o) {
                    // a lock acquisition is blocked while the other branch
                    // holds the same lock
                    if let Some(lk) = &l.lock {
                        if other_locked.contains(lk) {
                            continue;
                        }
                    }
                    let name = if leftside { "Par1" } else { "Par2" };
                    let rebuilt = match n {
                        Next::Abort => Next::Abort,
                        Next::Run(c1, s2, h2) => {
                            let (lft, rgt) = if leftside {
                                (Arc::new(c1), other.clone())
                            } else {
                                (other.clone(), Arc::new(c1))
                            };
                            Next::Run(
                                Command::Par {
                                    left: lft,
                                    right: rgt,
                                    left_spec: left_spec.clone(),
                                    right_spec: right_spec.clone(),
                                },
                                s2,
                                h2,
                            )
                        }
                        Next::Done(s2, h2) => {
                            let (lft, rgt) = if leftside {
                                (Arc::new(Command::Skip), other.clone())
                            } else {
                                (other.clone(), Arc::new(Command::Skip))
                            };
                            Next::Run(
                                Command::Par {
                                    left: lft,
                                    right: rgt,
                                    left_spec: left_spec.clone(),
                                    right_spec: right_spec.clone(),
                                },
                                s2,
                                h2,
                            )
                        }
                    };
                    out.push((l.under(name), rebuilt));
                }
            };
            branch(left, right, true);
            branch(right, left, false);
            out
        }
        Command::LockDecl { lock, inv, body } => {
            if body.is_skip() {
                return vec![(StepLabel::rule("LockS"), Next::Done(s.clone(), h.clone()))];
            }
            let wrap = |c1: Command| Command::LockDecl {
                lock: lock.clone(),
                inv: inv.clone(),
                body: Arc::new(c1),
            };
            step(body, s, h, held, o)
                .into_iter()
                .map(|(l, n)| {
                    let n = match n {
                        Next::Run(c1, s2, h2) => Next::Run(wrap(c1), s2, h2),
                        // a finished body still takes the closing LockS step
                        Next::Done(s2, h2) => Next::Run(wrap(Command::Skip), s2, h2),
                        Next::Abort => Next::Abort,
                    };
                    (l.under("Lock"), n)
                })
                .collect()
        }
        Command::With { lock, guard, body } => {
            if held.contains(lock) {
                // re-entrant acquisition aborts
                return vec![(StepLabel::rule("WithinL"), Next::Abort)];
            }
            match eval_expr(s, Some(h), guard) {
                Ok(Value::Bool(true)) => vec![(
                    StepLabel {
                        lock: Some(lock.clone()),
                        ..StepLabel::rule("With")
                    },
                    Next::Run(
                        Command::Within {
                            lock: lock.clone(),
                            body: body.clone(),
                        },
                        s.clone(),
                        h.clone(),
                    ),
                )],
                Ok(Value::Bool(false)) => vec![], // blocked until the guard holds
                _ => vec![(StepLabel::rule("WithA"), Next::Abort)],
            }
        }
        Command::Within { lock, body } => {
            if body.is_skip() {
                return vec![(
                    StepLabel {
                        lock: Some(lock.clone()),
                        ..StepLabel::rule("WithinS")
                    },
                    Next::Done(s.clone(), h.clone()),
                )];
            }
            let mut held2 = held.clone();
            held2.insert(lock.clone());
            let wrap = |c1: Command| Command::Within {
                lock: lock.clone(),
                body: Arc::new(c1),
            };
            step(body, s, h, &held2, o)
                .into_iter()
                .map(|(l, n)| {
                    let n = match n {
                        Next::Run(c1, s2, h2) => Next::Run(wrap(c1), s2, h2),
                        // the release is its own WithinS step
                        Next::Done(s2, h2) => Next::Run(wrap(Command::Skip), s2, h2),
                        Next::Abort => Next::Abort,
                    };
                    (l.under("Within"), n)
                })
                .collect()
        }
        Command::InitBlock { inv, body } => vec![(
            StepLabel::rule("Init"),
            Next::Run(
                Command::LockDecl {
                    lock: LockId::Ghost,
                    inv: inv.clone(),
                    body: body.clone(),
                },
                s.clone(),
                h.clone(),
            ),
        )],
        Command::NextBlock(body) => {
            // run the body to completion in one indivisible step
            let mut results: Vec<(StepLabel, Next)> = Vec::new();
            let mut frontier: Vec<(Command, Stack, PermHeap, Vec<Value>, Option<Addr>)> =
                vec![(rc(body), s.clone(), h.clone(), vec![], None)];
            let mut aborted = false;
            let mut budget = o.next_step_bound;
            while let Some((c1, s1, h1, prints, alloc)) = frontier.pop() {
                if budget == 0 {
                    aborted = true;
                    break;
                }
                budget -= 1;
                let succs = step(&c1, &s1, &h1, held, o);
                if succs.is_empty() {
                    // a blocked body can never resume: the step is atomic
                    aborted = true;
                    continue;
                }
                for (l, n) in succs {
                    let mut prints = prints.clone();
                    prints.extend(l.prints.clone());
                    let alloc = alloc.clone().or(l.alloc);
                    match n {
                        Next::Abort => aborted = true,
                        Next::Run(c2, s2, h2) => frontier.push((c2, s2, h2, prints, alloc)),
                        Next::Done(s2, h2) => results.push((
                            StepLabel {
                                prints,
                                alloc,
                                ..StepLabel::rule("Next")
                            },
                            Next::Done(s2, h2),
                        )),
                    }
                }
            }
            if aborted {
                results.push((StepLabel::rule("NextA"), Next::Abort));
            }
            results
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::parse_command;
    use crate::value::Perm;

    fn cmd(src: &str) -> Command {
        let ghosts: BTreeSet<String> = ["count".to_string()].into_iter().collect();
        parse_command(src, &ghosts).unwrap()
    }

    fn go(src: &str, s: Stack, h: PermHeap) -> Vec<(StepLabel, Next)> {
        step(&cmd(src), &s, &h, &BTreeSet::new(), &StepOpts::default())
    }

    fn run_to_end(src: &str, mut s: Stack, mut h: PermHeap) -> (Stack, PermHeap) {
        let mut c = cmd(src);
        for _ in 0..1000 {
            let mut succs = step(&c, &s, &h, &BTreeSet::new(), &StepOpts::default());
            assert!(!succs.is_empty(), "stuck at {c:?}");
            match succs.remove(0).1 {
                Next::Run(c2, s2, h2) => {
                    c = c2;
                    s = s2;
                    h = h2;
                }
                Next::Done(s2, h2) => return (s2, h2),
                Next::Abort => panic!("aborted"),
            }
        }
        panic!("did not terminate");
    }

    #[test]
    fn assign_read_write() {
        let (s, h) = run_to_end("new(x, 7); [x] := 9; y := [x];", Stack::new(), PermHeap::empty());
        assert_eq!(s.get("y"), Value::Int(9));
        assert_eq!(h.value(&Addr::Ord(0)), Some(&Value::Int(9)));
    }

    #[test]
    fn faults_abort() {
        for src in ["y := [x];", "[x] := 1;", "free(x);"] {
            let succs = go(src, Stack::new(), PermHeap::empty());
            assert_eq!(succs.len(), 1);
            assert!(matches!(succs[0].1, Next::Abort), "{src}");
            assert!(succs[0].0.path[0].ends_with('A'));
        }
        // freeing a ghost cell is a fault even when present
        let h = PermHeap::singleton(Addr::Ghost("count".into()), Perm::full(), Value::Int(0));
        let s = Stack::new().with("x", Value::Addr(Addr::Ghost("count".into())));
        let succs = go("free(x);", s, h);
        assert!(matches!(succs[0].1, Next::Abort));
    }

    #[test]
    fn alloc_is_canonical_by_default() {
        let h = PermHeap::singleton(Addr::Ord(0), Perm::full(), Value::Int(1));
        let succs = go("new(x, 2);", Stack::new(), h.clone());
        assert_eq!(succs.len(), 1);
        assert_eq!(succs[0].0.alloc, Some(Addr::Ord(1)));
        let mut o = StepOpts::default();
        o.full_alloc_nondet = true;
        let succs = step(&cmd("new(x, 2);"), &Stack::new(), &h, &BTreeSet::new(), &o);
        assert_eq!(succs.len(), 3); // addresses 1, 2, 3
    }

    #[test]
    fn while_unfolds_and_terminates() {
        let (s, _) = run_to_end(
            "x := 0; while x < 3 { x := x + 1; }",
            Stack::new(),
            PermHeap::empty(),
        );
        assert_eq!(s.get("x"), Value::Int(3));
    }

    #[test]
    fn par_interleaves_and_races() {
        let h = PermHeap::singleton(Addr::Ord(0), Perm::full(), Value::Int(0));
        let s = Stack::new().with("x", Value::Addr(Addr::Ord(0)));
        // disjoint stack work: two interleavings, no race
        let succs = go("par { a := 1; } { b := 2; }", s.clone(), h.clone());
        assert_eq!(succs.len(), 2);
        // write/write conflict on the same cell adds a race abort
        let succs = go("par { [x] := 1; } { [x] := 2; }", s.clone(), h.clone());
        assert!(succs
            .iter()
            .any(|(l, n)| l.path == ["Race"] && matches!(n, Next::Abort)));
        // lock-protected writes do not race
        let succs = go(
            "lock L inv (true) { par { with L when true { [x] := 1; } } { with L when true { [x] := 2; } } }",
            s,
            h,
        );
        assert!(!succs.iter().any(|(l, _)| l.path.contains(&"Race")));
    }

    #[test]
    fn with_blocks_and_reenters() {
        let s = Stack::new();
        let h = PermHeap::empty();
        // false guard: no successors
        assert!(go("with L when false { skip; }", s.clone(), h.clone()).is_empty());
        // mutual exclusion: while the right branch holds L, the left cannot acquire it
        let c = cmd("par { with L when true { skip; } } { skip; }");
        let (l, n) = &step(&c, &s, &h, &BTreeSet::new(), &StepOpts::default())[0];
        assert_eq!(l.lock, Some(LockId::User("L".into())));
        if let Next::Run(c2, ..) = n {
            assert!(locked(c2).contains(&LockId::User("L".into())));
        } else {
            panic!("expected Run");
        }
        // re-entry aborts
        let held: BTreeSet<LockId> = [LockId::User("L".into())].into_iter().collect();
        let succs = step(
            &cmd("with L when true { skip; }"),
            &s,
            &h,
            &held,
            &StepOpts::default(),
        );
        assert!(matches!(succs[0].1, Next::Abort));
    }

    #[test]
    fn init_declares_ghost_lock() {
        let c = cmd("init inv (true) { skip; }");
        assert!(!is_init(&c));
        let succs = step(&c, &Stack::new(), &PermHeap::empty(), &BTreeSet::new(), &StepOpts::default());
        let Next::Run(c2, ..) = &succs[0].1 else {
            panic!("expected Run")
        };
        assert!(is_init(c2));
        assert_eq!(succs[0].0.path, ["Init"]);
    }

    #[test]
    fn next_runs_atomically_and_collects_prints() {
        let mut h = PermHeap::empty();
        h.insert(Addr::stdout(), Perm::full(), Value::Seq(vec![]));
        h.insert(Addr::Ghost("count".into()), Perm::full(), Value::Int(4));
        let succs = go("next { print(1); ghost count := count + 1; }", Stack::new(), h);
        assert_eq!(succs.len(), 1);
        let (l, n) = &succs[0];
        assert_eq!(l.path, ["Next"]);
        assert_eq!(l.prints, vec![Value::Int(1)]);
        let Next::Done(_, h2) = n else { panic!("expected Done") };
        assert_eq!(h2.value(&Addr::Ghost("count".into())), Some(&Value::Int(5)));
        assert_eq!(
            h2.value(&Addr::stdout()),
            Some(&Value::Seq(vec![Value::Int(1)]))
        );
    }

    #[test]
    fn next_propagates_aborts() {
        // missing ghost cell: the inner assignment faults, so the next step aborts
        let succs = go("next { ghost count := count + 1; }", Stack::new(), PermHeap::empty());
        assert_eq!(succs.len(), 1);
        assert!(matches!(succs[0].1, Next::Abort));
    }

    #[test]
    fn atomicity_shapes() {
        assert!(is_atomic(&cmd("print(1); ghost count := count + 1;")));
        assert!(is_atomic(&cmd("skip;")));
        assert!(!is_atomic(&cmd("print(1); print(2);")));
        assert!(!is_atomic(&cmd("while true { skip; }")));
        assert!(!is_atomic(&cmd("par { skip; } { skip; }")));
    }

    #[test]
    fn erasure_removes_ghost_code() {
        let c = cmd("init inv (true) { next { print(1); ghost count := count + 1; }; x := 2; }");
        let e = erase_ghost(&c);
        let mut has_ghost = false;
        e.visit(&mut |c| {
            has_ghost |= matches!(
                c,
                Command::GhostAssign(..) | Command::NextBlock(_) | Command::InitBlock { .. }
            )
        });
        assert!(!has_ghost);
        // the printing base command survives erasure
        let mut prints = 0;
        e.visit(&mut |c| prints += matches!(c, Command::Print(_)) as usize);
        assert_eq!(prints, 1);
    }

    #[test]
    fn accesses_of_next_step() {
        let s = Stack::new().with("x", Value::Addr(Addr::Ord(1)));
        let h = PermHeap::singleton(Addr::Ord(1), Perm::full(), Value::Int(0));
        let (r, w) = accesses(&cmd("[x] := 1; y := [x];"), &s, &h);
        // only the first statement of a sequence is imminent
        assert_eq!(w, [Addr::Ord(1)].into_iter().collect());
        assert_eq!(r, [Addr::Ord(1)].into_iter().collect());
        let (r, _) = accesses(&cmd("y := count + 1;"), &s, &h);
        assert!(r.contains(&Addr::Ghost("count".into())));
        let (r, w) = accesses(&cmd("with L when true { [x] := 1; }"), &s, &h);
        assert!(r.is_empty() && w.is_empty());
    }
}
