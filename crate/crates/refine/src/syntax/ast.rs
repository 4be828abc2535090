//! Abstract syntax for programs, assertions, and transition-system specs.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::value::{Addr, Perm, STDOUT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
    Neg,
    Len,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    And,
    Or,
    Implies,
    /// `e : s` — append element `e` at the end of sequence `s`.
    Append,
    /// `s ++ t` — sequence concatenation.
    Concat,
    /// `s[i]` — sequence indexing.
    Index,
}

/// Expressions. These are pure: evaluation depends on the stack, except for
/// [`Expr::GhostRead`], which reads the contents of a ghost cell and only
/// appears in command position (assertions refer to ghost cells by address).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Seq(Vec<Expr>),
    Var(String),
    /// Address literal naming a ghost cell (assertion contexts).
    GhostAddr(String),
    /// Read of a ghost cell's contents (command contexts).
    GhostRead(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn eq(l: Expr, r: Expr) -> Expr {
        Expr::bin(BinOp::Eq, l, r)
    }

    /// Free stack variables (ghost addresses/reads are not variables).
    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Seq(es) => es.iter().for_each(|e| e.free_vars(out)),
            Expr::Unary(_, e) => e.free_vars(out),
            Expr::Binary(_, l, r) => {
                l.free_vars(out);
                r.free_vars(out);
            }
            _ => {}
        }
    }

    pub fn fv(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    /// Ghost cells read by this expression.
    pub fn ghost_reads(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::GhostRead(g) => {
                out.insert(g.clone());
            }
            Expr::Seq(es) => es.iter().for_each(|e| e.ghost_reads(out)),
            Expr::Unary(_, e) => e.ghost_reads(out),
            Expr::Binary(_, l, r) => {
                l.ghost_reads(out);
                r.ghost_reads(out);
            }
            _ => {}
        }
    }

    /// Capture-free substitution of a variable by an expression.
    pub fn subst(&self, x: &str, e: &Expr) -> Expr {
        match self {
            Expr::Var(y) if y == x => e.clone(),
            Expr::Seq(es) => Expr::Seq(es.iter().map(|f| f.subst(x, e)).collect()),
            Expr::Unary(op, f) => Expr::Unary(*op, Box::new(f.subst(x, e))),
            Expr::Binary(op, l, r) => {
                Expr::Binary(*op, Box::new(l.subst(x, e)), Box::new(r.subst(x, e)))
            }
            other => other.clone(),
        }
    }

    /// Substitution of ghost reads of `g` by an expression.
    pub fn subst_ghost_read(&self, g: &str, e: &Expr) -> Expr {
        match self {
            Expr::GhostRead(h) if h == g => e.clone(),
            Expr::Seq(es) => Expr::Seq(es.iter().map(|f| f.subst_ghost_read(g, e)).collect()),
            Expr::Unary(op, f) => Expr::Unary(*op, Box::new(f.subst_ghost_read(g, e))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.subst_ghost_read(g, e)),
                Box::new(r.subst_ghost_read(g, e)),
            ),
            other => other.clone(),
        }
    }
}

/// Optional type annotation on quantified variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Int,
    Bool,
    Seq,
    Addr,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Int => write!(f, "int"),
            Ty::Bool => write!(f, "bool"),
            Ty::Seq => write!(f, "seq"),
            Ty::Addr => write!(f, "addr"),
        }
    }
}

/// Separation-logic assertions. `or`, `==>`, wildcard points-to, and
/// `acc`/`alloc` are surface sugar expanded at parse time; the constructors
/// below are the kernel connectives.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Assertion {
    Expr(Expr),
    And(Box<Assertion>, Box<Assertion>),
    Not(Box<Assertion>),
    Forall(String, Option<Ty>, Box<Assertion>),
    Exists(String, Option<Ty>, Box<Assertion>),
    Emp,
    PointsTo(Expr, Perm, Expr),
    Sep(Box<Assertion>, Box<Assertion>),
    Wand(Box<Assertion>, Box<Assertion>),
    IterSep(Vec<Assertion>),
}

impl Assertion {
    pub fn tt() -> Assertion {
        Assertion::Expr(Expr::Bool(true))
    }

    pub fn ff() -> Assertion {
        Assertion::Expr(Expr::Bool(false))
    }

    pub fn and(l: Assertion, r: Assertion) -> Assertion {
        Assertion::And(Box::new(l), Box::new(r))
    }

    pub fn not(a: Assertion) -> Assertion {
        Assertion::Not(Box::new(a))
    }

    pub fn sep(l: Assertion, r: Assertion) -> Assertion {
        Assertion::Sep(Box::new(l), Box::new(r))
    }

    /// `P ∨ Q ⇝ ¬(¬P ∧ ¬Q)`.
    pub fn or(l: Assertion, r: Assertion) -> Assertion {
        Assertion::not(Assertion::and(Assertion::not(l), Assertion::not(r)))
    }

    /// `P ⇒ Q ⇝ ¬(P ∧ ¬Q)`.
    pub fn implies(l: Assertion, r: Assertion) -> Assertion {
        Assertion::not(Assertion::and(l, Assertion::not(r)))
    }

    /// `apt(E, ρ, E') ⇝ E ↦ρ E' ∗ true`.
    pub fn apt(e: Expr, p: Perm, v: Expr) -> Assertion {
        Assertion::sep(Assertion::PointsTo(e, p, v), Assertion::tt())
    }

    /// `acc(E, ρ) ⇝ ∃y. E ↦ρ y ∗ true`, with a fresh bound name.
    pub fn acc(e: Expr, p: Perm, fresh: &str) -> Assertion {
        Assertion::Exists(
            fresh.to_string(),
            None,
            Box::new(Assertion::apt(e, p, Expr::var(fresh))),
        )
    }

    /// `E ↦ρ _ ⇝ ∃y. E ↦ρ y` (exact cell, unknown contents).
    pub fn points_to_wild(e: Expr, p: Perm, fresh: &str) -> Assertion {
        Assertion::Exists(
            fresh.to_string(),
            None,
            Box::new(Assertion::PointsTo(e, p, Expr::var(fresh))),
        )
    }
}

/// Lock identifiers. The two ghost locks are not denotable in source
/// programs; they arise from the `init` rule and the proof system.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LockId {
    User(String),
    /// The ghost lock 𝒢 guarding the abstract state.
    Ghost,
    /// The token lock 𝓘 marking an initialized environment.
    InitToken,
}

impl fmt::Display for LockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LockId::User(n) => write!(f, "{n}"),
            LockId::Ghost => write!(f, "$G"),
            LockId::InitToken => write!(f, "$I"),
        }
    }
}

/// Pre/post annotation pair for `par` branches.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BranchSpec {
    pub requires: Assertion,
    pub ensures: Assertion,
}

/// Commands. `Seq` nodes optionally carry a midcondition (from `assert`
/// statements) used by proof elaboration; execution ignores annotations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Skip,
    Assign(String, Expr),
    /// `[E] := E'`
    Write(Expr, Expr),
    /// `x := [E]`
    Read(String, Expr),
    /// `new(x, E)`
    Alloc(String, Expr),
    /// `free(E)`
    Free(Expr),
    Seq {
        first: Arc<Command>,
        second: Arc<Command>,
        mid: Option<Assertion>,
    },
    Ite(Expr, Arc<Command>, Arc<Command>),
    While {
        guard: Expr,
        inv: Option<Assertion>,
        body: Arc<Command>,
    },
    Par {
        left: Arc<Command>,
        right: Arc<Command>,
        left_spec: Option<BranchSpec>,
        right_spec: Option<BranchSpec>,
    },
    LockDecl {
        lock: LockId,
        inv: Option<Assertion>,
        body: Arc<Command>,
    },
    With {
        lock: LockId,
        guard: Expr,
        body: Arc<Command>,
    },
    /// Runtime-only form: the body runs while holding the lock.
    Within {
        lock: LockId,
        body: Arc<Command>,
    },
    Print(Expr),
    InitBlock {
        /// Ghost-lock invariant annotation (the `G` of the Init proof rule).
        inv: Option<Assertion>,
        body: Arc<Command>,
    },
    NextBlock(Arc<Command>),
    GhostAssign(String, Expr),
}

impl Command {
    pub fn seq(first: Command, second: Command) -> Command {
        Command::Seq {
            first: Arc::new(first),
            second: Arc::new(second),
            mid: None,
        }
    }

    pub fn is_skip(&self) -> bool {
        matches!(self, Command::Skip)
    }

    /// Free stack variables: everything read or written through the stack.
    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Command::Skip => {}
            Command::Assign(x, e) | Command::Read(x, e) | Command::Alloc(x, e) => {
                out.insert(x.clone());
                e.free_vars(out);
            }
            Command::Write(e1, e2) => {
                e1.free_vars(out);
                e2.free_vars(out);
            }
            Command::Free(e) | Command::Print(e) | Command::GhostAssign(_, e) => e.free_vars(out),
            Command::Seq { first, second, .. } => {
                first.free_vars(out);
                second.free_vars(out);
            }
            Command::Ite(e, c1, c2) => {
                e.free_vars(out);
                c1.free_vars(out);
                c2.free_vars(out);
            }
            Command::While { guard, body, .. } => {
                guard.free_vars(out);
                body.free_vars(out);
            }
            Command::Par { left, right, .. } => {
                left.free_vars(out);
                right.free_vars(out);
            }
            Command::LockDecl { body, .. }
            | Command::Within { body, .. }
            | Command::NextBlock(body)
            | Command::InitBlock { body, .. } => body.free_vars(out),
            Command::With { guard, body, .. } => {
                guard.free_vars(out);
                body.free_vars(out);
            }
        }
    }

    pub fn fv(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.free_vars(&mut s);
        s
    }

    /// Stack variables this command may assign (`Mod` in the proof rules).
    pub fn mod_set(&self, out: &mut BTreeSet<String>) {
        match self {
            Command::Assign(x, _) | Command::Read(x, _) | Command::Alloc(x, _) => {
                out.insert(x.clone());
            }
            Command::Seq { first, second, .. } => {
                first.mod_set(out);
                second.mod_set(out);
            }
            Command::Ite(_, c1, c2) => {
                c1.mod_set(out);
                c2.mod_set(out);
            }
            Command::While { body, .. }
            | Command::LockDecl { body, .. }
            | Command::With { body, .. }
            | Command::Within { body, .. }
            | Command::NextBlock(body)
            | Command::InitBlock { body, .. } => body.mod_set(out),
            Command::Par { left, right, .. } => {
                left.mod_set(out);
                right.mod_set(out);
            }
            _ => {}
        }
    }

    pub fn mods(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.mod_set(&mut s);
        s
    }

    /// Applies `f` to every sub-command (including self), pre-order.
    pub fn visit(&self, f: &mut impl FnMut(&Command)) {
        f(self);
        match self {
            Command::Seq { first, second, .. } => {
                first.visit(f);
                second.visit(f);
            }
            Command::Ite(_, c1, c2) => {
                c1.visit(f);
                c2.visit(f);
            }
            Command::While { body, .. }
            | Command::LockDecl { body, .. }
            | Command::With { body, .. }
            | Command::Within { body, .. }
            | Command::NextBlock(body)
            | Command::InitBlock { body, .. } => body.visit(f),
            Command::Par { left, right, .. } => {
                left.visit(f);
                right.visit(f);
            }
            _ => {}
        }
    }
}

/// A parsed program: ghost declarations, optional pre/postcondition, body.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    /// Declared ghost variables (besides the predeclared `stdOut`).
    pub ghost_vars: Vec<String>,
    pub requires: Option<Assertion>,
    pub ensures: Option<Assertion>,
    pub body: Command,
}

impl Program {
    /// All ghost addresses this program may mention: declarations plus stdOut.
    pub fn ghost_addrs(&self) -> Vec<Addr> {
        let mut out = vec![Addr::stdout()];
        for g in &self.ghost_vars {
            if g != STDOUT {
                out.push(Addr::Ghost(g.clone()));
            }
        }
        out
    }
}

/// An abstract transition system: typed variables (the first one is the
/// observable), an initial-state predicate, and a transition predicate over
/// plain and primed variables.
#[derive(Clone, Debug, PartialEq)]
pub struct AtsSpec {
    pub vars: Vec<(String, Ty)>,
    pub init: Assertion,
    pub next: Assertion,
}

impl AtsSpec {
    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn observable(&self) -> &str {
        &self.vars[0].0
    }

    /// Ghost address backing each variable. The observable variable is
    /// identified with the reserved `stdOut` cell; the rest use their names.
    pub fn ghost_addrs(&self) -> Vec<Addr> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                if i == 0 {
                    Addr::stdout()
                } else {
                    Addr::Ghost(name.clone())
                }
            })
            .collect()
    }
}

/// What [`check_continuously_initialized`] found.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitShape {
    /// No `init` block anywhere (vacuously continuously initialized).
    NoInit,
    /// The program is `C1 ; init { C2 }` with no `init` inside `C1`.
    InitTail,
    /// Some other placement of `init`.
    Violation,
}

/// Checks that a command has the shape required for the trace-inclusion
/// theorem: a single trailing `init` block (or none at all).
pub fn check_continuously_initialized(c: &Command) -> InitShape {
    fn count_inits(c: &Command) -> usize {
        let mut n = 0;
        c.visit(&mut |d| {
            if matches!(d, Command::InitBlock { .. }) {
                n += 1;
            }
        });
        n
    }
    // Walk the right spine of the sequence structure.
    let mut cur = c;
    loop {
        match cur {
            Command::Seq { first, second, .. } => {
                if count_inits(first) > 0 {
                    return InitShape::Violation;
                }
                cur = second;
            }
            Command::InitBlock { body, .. } => {
                return if count_inits(body) == 0 {
                    InitShape::InitTail
                } else {
                    InitShape::Violation
                };
            }
            other => {
                return if count_inits(other) == 0 {
                    InitShape::NoInit
                } else {
                    InitShape::Violation
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn continuously_initialized_shapes() {
        let init = Command::InitBlock {
            inv: None,
            body: Arc::new(Command::Skip),
        };
        let ok = Command::seq(Command::Assign("x".into(), Expr::Int(0)), init.clone());
        assert_eq!(check_continuously_initialized(&ok), InitShape::InitTail);

        let no_init = Command::Assign("x".into(), Expr::Int(0));
        assert_eq!(check_continuously_initialized(&no_init), InitShape::NoInit);

        // init followed by more code is not a tail position
        let bad = Command::seq(init.clone(), Command::Assign("x".into(), Expr::Int(0)));
        assert_eq!(check_continuously_initialized(&bad), InitShape::Violation);

        // nested init inside a loop
        let looped = Command::While {
            guard: Expr::Bool(true),
            inv: None,
            body: Arc::new(init),
        };
        assert_eq!(check_continuously_initialized(&looped), InitShape::Violation);
    }

    #[test]
    fn mod_set_collects_assignment_targets() {
        let c = Command::seq(
            Command::Assign("x".into(), Expr::Int(1)),
            Command::seq(
                Command::Read("y".into(), Expr::var("x")),
                Command::GhostAssign("g".into(), Expr::Int(2)),
            ),
        );
        let mods = c.mods();
        assert!(mods.contains("x") && mods.contains("y"));
        assert!(!mods.contains("g"), "ghost targets are heap, not stack");
    }
}
