//! Static well-formedness checks over parsed programs.
//!
//! These are advisory: programs with warnings still run, but some audits
//! (notably ghost erasure) are skipped when ghost state leaks into
//! non-ghost expressions.

use std::collections::BTreeSet;
use std::fmt;

use crate::syntax::ast::{Command, LockId, Program};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Warning {
    /// A non-ghost expression reads a ghost cell; the erased program would
    /// behave differently, so the erasure audit is skipped.
    GhostFlowsToProgram { ghost: String, context: String },
    /// `with L` appears outside any `lock L { ... }` declaration; it can
    /// never make progress.
    WithUndeclaredLock { lock: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::GhostFlowsToProgram { ghost, context } => write!(
                f,
                "ghost cell `{ghost}` is read by a non-ghost {context}; ghost erasure audit will be skipped"
            ),
            Warning::WithUndeclaredLock { lock } => {
                write!(f, "`with {lock}` has no enclosing `lock {lock}` declaration")
            }
        }
    }
}

fn ghost_reads_of(e: &crate::syntax::ast::Expr) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    e.ghost_reads(&mut s);
    s
}

fn warn_reads(e: &crate::syntax::ast::Expr, context: &str, out: &mut Vec<Warning>) {
    for g in ghost_reads_of(e) {
        out.push(Warning::GhostFlowsToProgram {
            ghost: g,
            context: context.to_string(),
        });
    }
}

fn check_command(c: &Command, locks: &mut Vec<LockId>, out: &mut Vec<Warning>) {
    match c {
        Command::Skip => {}
        Command::Assign(_, e) => warn_reads(e, "assignment", out),
        Command::Write(t, e) => {
            warn_reads(t, "heap write target", out);
            warn_reads(e, "heap write", out);
        }
        Command::Read(_, e) => warn_reads(e, "heap read address", out),
        Command::Alloc(_, e) => warn_reads(e, "allocation", out),
        Command::Free(e) => warn_reads(e, "free", out),
        Command::Print(e) => warn_reads(e, "print", out),
        Command::GhostAssign(_, _) => {} // ghost code may read ghost state
        Command::Seq { first, second, .. } => {
            check_command(first, locks, out);
            check_command(second, locks, out);
        }
        Command::Ite(g, t, e) => {
            warn_reads(g, "branch condition", out);
            check_command(t, locks, out);
            check_command(e, locks, out);
        }
        Command::While { guard, body, .. } => {
            warn_reads(guard, "loop condition", out);
            check_command(body, locks, out);
        }
        Command::Par { left, right, .. } => {
            check_command(left, locks, out);
            check_command(right, locks, out);
        }
        Command::LockDecl { lock, body, .. } => {
            locks.push(lock.clone());
            check_command(body, locks, out);
            locks.pop();
        }
        Command::With { lock, guard, body } => {
            warn_reads(guard, "with guard", out);
            if !locks.contains(lock) {
                out.push(Warning::WithUndeclaredLock {
                    lock: lock.to_string(),
                });
            }
            check_command(body, locks, out);
        }
        Command::Within { body, .. } => check_command(body, locks, out),
        Command::InitBlock { body, .. } | Command::NextBlock(body) => {
            check_command(body, locks, out)
        }
    }
}

/// Runs all advisory checks.
pub fn check_program(p: &Program) -> Vec<Warning> {
    let mut out = Vec::new();
    let mut locks = Vec::new();
    check_command(&p.body, &mut locks, &mut out);
    out
}

/// True when no ghost cell is read outside ghost assignments; the erasure
/// audit is only meaningful in that case.
pub fn ghost_free_flow(p: &Program) -> bool {
    check_program(p)
        .iter()
        .all(|w| !matches!(w, Warning::GhostFlowsToProgram { .. }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::parse_program;

    #[test]
    fn ghost_read_in_print_warns() {
        let p = parse_program("ghost count;\nprint(count)").unwrap();
        let ws = check_program(&p);
        assert!(matches!(ws[0], Warning::GhostFlowsToProgram { .. }));
        assert!(!ghost_free_flow(&p));
    }

    #[test]
    fn ghost_assign_does_not_warn() {
        let p = parse_program("ghost count;\nghost count := count + 1").unwrap();
        assert!(check_program(&p).is_empty());
    }

    #[test]
    fn with_needs_enclosing_lock() {
        let p = parse_program("with m when true { skip }").unwrap();
        let ws = check_program(&p);
        assert!(matches!(ws[0], Warning::WithUndeclaredLock { .. }));
    }
}
