//! Validation of derivation trees against the proof rules: conclusion
//! shapes, premise counts, side conditions, and bounded entailments.

use std::collections::BTreeSet;
use std::fmt;

use crate::assertion::{
    assertion_fv, check_entailment, check_precise, subst_assertion, Domains, PreciseVerdict,
    Verdict,
};
use crate::ats::check_assumption1;
use crate::semantics::is_atomic;
use crate::syntax::ast::{Assertion, AtsSpec, BinOp, Command, Expr, LockId};
use crate::syntax::pretty::{assertion_to_string, command_to_string};
use crate::value::{Perm, STDOUT};

use super::env::LockEnv;

/// The rule labels a derivation node may carry: the inherited rules, the
/// three rules for the new commands, and a derived axiom for ghost-cell
/// assignment (which the inherited rules cannot reach because ghost reads
/// are heap-dependent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Skip,
    Assign,
    Write,
    Read,
    Alloc,
    Free,
    Seq,
    Cond,
    While,
    Par,
    Lock,
    With,
    Frame,
    Cons,
    Ex,
    Conj,
    Disj,
    Init,
    Next,
    Print,
    GhostAssign,
}

impl Rule {
    pub const ALL: [Rule; 21] = [
        Rule::Skip,
        Rule::Assign,
        Rule::Write,
        Rule::Read,
        Rule::Alloc,
        Rule::Free,
        Rule::Seq,
        Rule::Cond,
        Rule::While,
        Rule::Par,
        Rule::Lock,
        Rule::With,
        Rule::Frame,
        Rule::Cons,
        Rule::Ex,
        Rule::Conj,
        Rule::Disj,
        Rule::Init,
        Rule::Next,
        Rule::Print,
        Rule::GhostAssign,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Skip => "Skip",
            Rule::Assign => "Assign",
            Rule::Write => "Write",
            Rule::Read => "Read",
            Rule::Alloc => "Alloc",
            Rule::Free => "Free",
            Rule::Seq => "Seq",
            Rule::Cond => "Cond",
            Rule::While => "While",
            Rule::Par => "Par",
            Rule::Lock => "Lock",
            Rule::With => "With",
            Rule::Frame => "Frame",
            Rule::Cons => "Cons",
            Rule::Ex => "Ex",
            Rule::Conj => "Conj",
            Rule::Disj => "Disj",
            Rule::Init => "Init",
            Rule::Next => "Next",
            Rule::Print => "Print",
            Rule::GhostAssign => "GhostAssign",
        }
    }

    pub fn from_name(s: &str) -> Option<Rule> {
        Rule::ALL.iter().copied().find(|r| r.name() == s)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One node of a derivation tree: the judgment `Γ ⊢ {pre} command {post}`
/// concluded by `rule` from the child judgments. `witnesses` carries
/// rule-specific extras (fresh variable names, instantiation witnesses).
#[derive(Clone, Debug, PartialEq)]
pub struct DerivationNode {
    pub rule: Rule,
    pub env: LockEnv,
    pub pre: Assertion,
    pub command: Command,
    pub post: Assertion,
    pub witnesses: Vec<(String, String)>,
    pub children: Vec<DerivationNode>,
}

impl DerivationNode {
    pub fn witness(&self, key: &str) -> Option<&str> {
        self.witnesses
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Why a node was rejected. The string code of each variant is stable.
#[derive(Clone, Debug, PartialEq)]
pub enum Reason {
    RuleShapeMismatch(String),
    SideConditionViolation(String),
    EntailmentFailed(String),
    EntailmentInconclusive(String),
    AtomicityViolation(String),
    PrecisionViolation(String),
    GhostLockMisuse(String),
}

impl Reason {
    pub fn code(&self) -> &'static str {
        match self {
            Reason::RuleShapeMismatch(_) => "RuleShapeMismatch",
            Reason::SideConditionViolation(_) => "SideConditionViolation",
            Reason::EntailmentFailed(_) => "EntailmentFailed",
            Reason::EntailmentInconclusive(_) => "EntailmentInconclusive",
            Reason::AtomicityViolation(_) => "AtomicityViolation",
            Reason::PrecisionViolation(_) => "PrecisionViolation",
            Reason::GhostLockMisuse(_) => "GhostLockMisuse",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            Reason::RuleShapeMismatch(s)
            | Reason::SideConditionViolation(s)
            | Reason::EntailmentFailed(s)
            | Reason::EntailmentInconclusive(s)
            | Reason::AtomicityViolation(s)
            | Reason::PrecisionViolation(s)
            | Reason::GhostLockMisuse(s) => s,
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code(), self.detail())
    }
}

/// The checker's verdict: accepted, or rejected at one node (addressed by
/// its child-index path from the root) for one reason.
#[derive(Clone, Debug, PartialEq)]
pub enum CheckResult {
    Accepted,
    Rejected { path: Vec<usize>, reason: Reason },
}

impl CheckResult {
    pub fn is_accepted(&self) -> bool {
        matches!(self, CheckResult::Accepted)
    }
}

struct Checker<'a> {
    spec: Option<&'a AtsSpec>,
    d: &'a Domains,
}

type NodeResult = Result<(), Reason>;

/// Validates a derivation tree. `spec` supplies the abstract system for the
/// Init and Next rules (derivations that do not use them check without
/// one). Entailments and precision are discharged over the bounded domains;
/// an inconclusive bounded check rejects, keeping the accepted set sound
/// relative to the bounds.
pub fn check_derivation(
    root: &DerivationNode,
    spec: Option<&AtsSpec>,
    d: &Domains,
) -> CheckResult {
    let ck = Checker { spec, d };
    let mut path = Vec::new();
    match ck.check(root, &mut path) {
        Ok(()) => CheckResult::Accepted,
        Err((path, reason)) => CheckResult::Rejected { path, reason },
    }
}

impl<'a> Checker<'a> {
    fn check(
        &self,
        n: &DerivationNode,
        path: &mut Vec<usize>,
    ) -> Result<(), (Vec<usize>, Reason)> {
        self.check_node(n).map_err(|r| (path.clone(), r))?;
        for (i, c) in n.children.iter().enumerate() {
            path.push(i);
            self.check(c, path)?;
            path.pop();
        }
        Ok(())
    }

    fn check_node(&self, n: &DerivationNode) -> NodeResult {
        match n.rule {
            Rule::Skip => self.rule_skip(n),
            Rule::Assign => self.rule_assign(n),
            Rule::Write => self.rule_write(n),
            Rule::Read => self.rule_read(n),
            Rule::Alloc => self.rule_alloc(n),
            Rule::Free => self.rule_free(n),
            Rule::Seq => self.rule_seq(n),
            Rule::Cond => self.rule_cond(n),
            Rule::While => self.rule_while(n),
            Rule::Par => self.rule_par(n),
            Rule::Lock => self.rule_lock(n),
            Rule::With => self.rule_with(n),
            Rule::Frame => self.rule_frame(n),
            Rule::Cons => self.rule_cons(n),
            Rule::Ex => self.rule_ex(n),
            Rule::Conj => self.rule_conj(n),
            Rule::Disj => self.rule_disj(n),
            Rule::Init => self.rule_init(n),
            Rule::Next => self.rule_next(n),
            Rule::Print => self.rule_print(n),
            Rule::GhostAssign => self.rule_ghost_assign(n),
        }
    }

    // ----- small helpers ---------------------------------------------------

    fn arity(&self, n: &DerivationNode, want: usize) -> NodeResult {
        if n.children.len() != want {
            return Err(Reason::RuleShapeMismatch(format!(
                "rule {} takes {} premise(s), found {}",
                n.rule,
                want,
                n.children.len()
            )));
        }
        Ok(())
    }

    fn same_env(&self, n: &DerivationNode, c: &DerivationNode) -> NodeResult {
        if c.env != n.env {
            return Err(Reason::RuleShapeMismatch(format!(
                "rule {}: premise must use the conclusion's lock environment",
                n.rule
            )));
        }
        Ok(())
    }

    fn shape(&self, n: &DerivationNode, what: &str) -> Reason {
        Reason::RuleShapeMismatch(format!(
            "rule {} on `{}`: {}",
            n.rule,
            command_to_string(&n.command),
            what
        ))
    }

    fn entails(&self, p: &Assertion, q: &Assertion, at: &str) -> NodeResult {
        // `P ⊨ true` and `P ⊨ P` need no model enumeration
        if p == q || matches!(q, Assertion::Expr(Expr::Bool(true))) {
            return Ok(());
        }
        match check_entailment(p, q, self.d) {
            Verdict::Valid => Ok(()),
            Verdict::Counterexample { stack, heap } => Err(Reason::EntailmentFailed(format!(
                "{at}: `{}` does not entail `{}`; counterexample stack {} heap {}",
                assertion_to_string(p),
                assertion_to_string(q),
                stack.to_json(),
                heap.to_json(),
            ))),
            Verdict::Inconclusive { reason } => Err(Reason::EntailmentInconclusive(format!(
                "{at}: `{}` ⊨ `{}` undecided: {reason}",
                assertion_to_string(p),
                assertion_to_string(q),
            ))),
        }
    }

    /// The ρ of Assumption 1 for the ghost invariant `g`, required whenever
    /// `𝒢:G` enters the environment.
    fn assumption1(&self, g: &Assertion) -> Result<(Perm, &'a AtsSpec), Reason> {
        let spec = self.spec.ok_or_else(|| {
            Reason::RuleShapeMismatch(
                "rules Init/Next need an abstract system (none was provided)".into(),
            )
        })?;
        match check_assumption1(g, spec, self.d) {
            Ok(rho) => Ok((rho, spec)),
            Err(v) => Err(Reason::SideConditionViolation(format!(
                "ghost invariant `{}` does not grant a uniform positive \
                 permission on every abstract cell: {v:?}",
                assertion_to_string(g)
            ))),
        }
    }

    // ----- axioms ----------------------------------------------------------

    fn rule_skip(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        if !matches!(n.command, Command::Skip) {
            return Err(self.shape(n, "command must be skip"));
        }
        if n.pre != n.post {
            return Err(self.shape(n, "pre and postcondition must coincide"));
        }
        Ok(())
    }

    fn rule_assign(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Assign(x, e) = &n.command else {
            return Err(self.shape(n, "command must be an assignment"));
        };
        if n.pre != subst_assertion(&n.post, x, e) {
            return Err(self.shape(
                n,
                "precondition must be the postcondition with the assigned \
                 expression substituted for the variable",
            ));
        }
        if n.env.fv().contains(x) {
            return Err(Reason::SideConditionViolation(format!(
                "rule Assign: `{x}` occurs free in a lock invariant"
            )));
        }
        Ok(())
    }

    fn rule_write(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Write(e, e2) = &n.command else {
            return Err(self.shape(n, "command must be a heap write"));
        };
        if !matches!(
            &n.pre,
            Assertion::Exists(y, _, body)
                if **body == Assertion::PointsTo(e.clone(), Perm::full(), Expr::var(y))
        ) {
            return Err(self.shape(
                n,
                "precondition must be full ownership of the written cell \
                 (`exists y :: E |-> y`)",
            ));
        }
        if n.post != Assertion::PointsTo(e.clone(), Perm::full(), e2.clone()) {
            return Err(self.shape(n, "postcondition must be `E |-> E'`"));
        }
        Ok(())
    }

    fn rule_read(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Read(x, e) = &n.command else {
            return Err(self.shape(n, "command must be a heap read"));
        };
        let Assertion::PointsTo(pe, rho, pv) = &n.pre else {
            return Err(self.shape(n, "precondition must be a points-to on the read cell"));
        };
        if pe != e {
            return Err(self.shape(n, "precondition must mention the read address"));
        }
        let expect = Assertion::and(
            Assertion::PointsTo(pe.clone(), *rho, pv.clone()),
            Assertion::Expr(Expr::eq(Expr::var(x), pv.clone())),
        );
        if n.post != expect {
            return Err(self.shape(n, "postcondition must be `E |->ρ E' && x == E'`"));
        }
        let mut fv = e.fv();
        fv.extend(pv.fv());
        fv.extend(n.env.fv());
        if fv.contains(x) {
            return Err(Reason::SideConditionViolation(format!(
                "rule Read: `{x}` occurs free in the address, the contents, \
                 or a lock invariant"
            )));
        }
        Ok(())
    }

    fn rule_alloc(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Alloc(x, e) = &n.command else {
            return Err(self.shape(n, "command must be an allocation"));
        };
        if n.pre != Assertion::Emp {
            return Err(self.shape(n, "precondition must be emp"));
        }
        if n.post != Assertion::PointsTo(Expr::var(x), Perm::full(), e.clone()) {
            return Err(self.shape(n, "postcondition must be `x |-> E`"));
        }
        let mut fv = e.fv();
        fv.extend(n.env.fv());
        if fv.contains(x) {
            return Err(Reason::SideConditionViolation(format!(
                "rule Alloc: `{x}` occurs free in the initializer or a lock \
                 invariant"
            )));
        }
        Ok(())
    }

    fn rule_free(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Free(e) = &n.command else {
            return Err(self.shape(n, "command must be a free"));
        };
        if matches!(e, Expr::GhostAddr(_) | Expr::GhostRead(_)) {
            return Err(Reason::SideConditionViolation(
                "rule Free: ghost cells cannot be freed".into(),
            ));
        }
        if !matches!(
            &n.pre,
            Assertion::Exists(y, _, body)
                if **body == Assertion::PointsTo(e.clone(), Perm::full(), Expr::var(y))
        ) {
            return Err(self.shape(
                n,
                "precondition must be full ownership of the freed cell \
                 (`exists y :: E |-> y`)",
            ));
        }
        if n.post != Assertion::Emp {
            return Err(self.shape(n, "postcondition must be emp"));
        }
        Ok(())
    }

    // ----- structural rules ------------------------------------------------

    fn rule_seq(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 2)?;
        let Command::Seq { first, second, .. } = &n.command else {
            return Err(self.shape(n, "command must be a sequence"));
        };
        let (c1, c2) = (&n.children[0], &n.children[1]);
        self.same_env(n, c1)?;
        self.same_env(n, c2)?;
        if c1.command != **first || c2.command != **second {
            return Err(self.shape(n, "premises must cover the two components in order"));
        }
        if c1.pre != n.pre || c2.post != n.post || c1.post != c2.pre {
            return Err(self.shape(
                n,
                "premise pre/postconditions must chain through a common \
                 midcondition",
            ));
        }
        Ok(())
    }

    fn rule_cond(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 2)?;
        let Command::Ite(e, c1, c2) = &n.command else {
            return Err(self.shape(n, "command must be a conditional"));
        };
        let (k1, k2) = (&n.children[0], &n.children[1]);
        self.same_env(n, k1)?;
        self.same_env(n, k2)?;
        if k1.command != **c1 || k2.command != **c2 {
            return Err(self.shape(n, "premises must cover the two branches in order"));
        }
        let then_pre = Assertion::and(n.pre.clone(), Assertion::Expr(e.clone()));
        let else_pre = Assertion::and(
            n.pre.clone(),
            Assertion::not(Assertion::Expr(e.clone())),
        );
        if k1.pre != then_pre || k2.pre != else_pre {
            return Err(self.shape(
                n,
                "branch preconditions must be `P && E` and `P && !E`",
            ));
        }
        if k1.post != n.post || k2.post != n.post {
            return Err(self.shape(n, "both branches must conclude the postcondition"));
        }
        Ok(())
    }

    fn rule_while(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let Command::While { guard, body, .. } = &n.command else {
            return Err(self.shape(n, "command must be a loop"));
        };
        let k = &n.children[0];
        self.same_env(n, k)?;
        if k.command != **body {
            return Err(self.shape(n, "premise must cover the loop body"));
        }
        let inv = &n.pre;
        if k.pre != Assertion::and(inv.clone(), Assertion::Expr(guard.clone())) || k.post != *inv {
            return Err(self.shape(n, "premise must be `{I && E} body {I}`"));
        }
        let expect_post = Assertion::and(
            inv.clone(),
            Assertion::not(Assertion::Expr(guard.clone())),
        );
        if n.post != expect_post {
            return Err(self.shape(n, "postcondition must be `I && !E`"));
        }
        Ok(())
    }

    fn rule_par(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 2)?;
        let Command::Par { left, right, .. } = &n.command else {
            return Err(self.shape(n, "command must be a parallel composition"));
        };
        let (k1, k2) = (&n.children[0], &n.children[1]);
        self.same_env(n, k1)?;
        self.same_env(n, k2)?;
        if k1.command != **left || k2.command != **right {
            return Err(self.shape(n, "premises must cover the two branches in order"));
        }
        if n.pre != Assertion::sep(k1.pre.clone(), k2.pre.clone())
            || n.post != Assertion::sep(k1.post.clone(), k2.post.clone())
        {
            return Err(self.shape(
                n,
                "pre/postconditions must be the separating conjunctions of \
                 the branch pre/postconditions",
            ));
        }
        for (mine, other, which) in [(k1, k2, "left"), (k2, k1, "right")] {
            let mut fv = assertion_fv(&mine.pre);
            fv.extend(mine.command.fv());
            fv.extend(assertion_fv(&mine.post));
            let mods = other.command.mods();
            if let Some(x) = fv.intersection(&mods).next() {
                return Err(Reason::SideConditionViolation(format!(
                    "rule Par: `{x}` is free in the {which} branch's triple \
                     but modified by the other branch"
                )));
            }
        }
        Ok(())
    }

    fn rule_lock(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let Command::LockDecl { lock, inv, body } = &n.command else {
            return Err(self.shape(n, "command must be a lock declaration"));
        };
        if !matches!(lock, LockId::User(_)) {
            return Err(Reason::GhostLockMisuse(
                "rule Lock: the dedicated ghost locks cannot be declared".into(),
            ));
        }
        let k = &n.children[0];
        let Some((bound, r)) = k.env.bindings().last() else {
            return Err(self.shape(n, "premise environment must bind the declared lock"));
        };
        if bound != lock
            || LockEnv::from_bindings(k.env.bindings()[..k.env.bindings().len() - 1].to_vec())
                != n.env
        {
            return Err(self.shape(
                n,
                "premise environment must be the conclusion's extended with \
                 the declared lock (latest)",
            ));
        }
        let r = r.clone();
        if let Some(decl) = inv {
            if *decl != r {
                return Err(self.shape(
                    n,
                    "the invariant bound in the premise must match the \
                     declaration's annotation",
                ));
            }
        }
        if k.command != **body {
            return Err(self.shape(n, "premise must cover the declaration body"));
        }
        if n.pre != Assertion::sep(r.clone(), k.pre.clone())
            || n.post != Assertion::sep(r, k.post.clone())
        {
            return Err(self.shape(
                n,
                "pre/postconditions must be `R ** P` and `R ** Q` for the \
                 bound invariant R",
            ));
        }
        Ok(())
    }

    fn rule_with(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let Command::With { lock, guard, body } = &n.command else {
            return Err(self.shape(n, "command must be a with block"));
        };
        if !matches!(lock, LockId::User(_)) {
            return Err(Reason::GhostLockMisuse(
                "rule With: the dedicated ghost locks cannot be acquired \
                 directly"
                    .into(),
            ));
        }
        let r = n.env.lookup(lock);
        let k = &n.children[0];
        let child_env = n.env.without_latest(lock).unwrap_or_else(|| n.env.clone());
        if k.env != child_env {
            return Err(self.shape(
                n,
                "premise environment must drop the acquired lock's latest \
                 binding",
            ));
        }
        if k.command != **body {
            return Err(self.shape(n, "premise must cover the block body"));
        }
        let expect_pre = Assertion::and(
            Assertion::sep(n.pre.clone(), r.clone()),
            Assertion::Expr(guard.clone()),
        );
        if k.pre != expect_pre || k.post != Assertion::sep(n.post.clone(), r) {
            return Err(self.shape(
                n,
                "premise must be `{(P ** R) && E} body {Q ** R}` for the \
                 lock invariant R",
            ));
        }
        Ok(())
    }

    fn rule_frame(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let k = &n.children[0];
        self.same_env(n, k)?;
        if k.command != n.command {
            return Err(self.shape(n, "premise must cover the same command"));
        }
        let (Assertion::Sep(p, r1), Assertion::Sep(q, r2)) = (&n.pre, &n.post) else {
            return Err(self.shape(
                n,
                "pre/postconditions must be separating conjunctions with a \
                 common frame on the right",
            ));
        };
        if r1 != r2 || **p != k.pre || **q != k.post {
            return Err(self.shape(
                n,
                "premise pre/postconditions must match the unframed parts",
            ));
        }
        let fv = assertion_fv(r1);
        let mods = n.command.mods();
        if let Some(x) = fv.intersection(&mods).next() {
            return Err(Reason::SideConditionViolation(format!(
                "rule Frame: `{x}` is free in the frame but modified by the \
                 command"
            )));
        }
        Ok(())
    }

    fn rule_cons(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let k = &n.children[0];
        self.same_env(n, k)?;
        if k.command != n.command {
            return Err(self.shape(n, "premise must cover the same command"));
        }
        self.entails(&n.pre, &k.pre, "rule Cons (precondition)")?;
        self.entails(&k.post, &n.post, "rule Cons (postcondition)")?;
        Ok(())
    }

    fn rule_ex(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let k = &n.children[0];
        self.same_env(n, k)?;
        if k.command != n.command {
            return Err(self.shape(n, "premise must cover the same command"));
        }
        let Assertion::Exists(x, _, body) = &n.pre else {
            return Err(self.shape(n, "precondition must be an existential"));
        };
        // the premise may α-rename the bound variable via the `var` witness
        let (name, opened) = match n.witness("var") {
            Some(w) => (w.to_string(), subst_assertion(body, x, &Expr::var(w))),
            None => (x.clone(), (**body).clone()),
        };
        if k.pre != opened || k.post != n.post {
            return Err(self.shape(
                n,
                "premise must open the existential (same postcondition)",
            ));
        }
        if n.command.fv().contains(&name) {
            return Err(Reason::SideConditionViolation(format!(
                "rule Ex: `{name}` occurs free in the command"
            )));
        }
        Ok(())
    }

    fn rule_conj(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 2)?;
        let (k1, k2) = (&n.children[0], &n.children[1]);
        self.same_env(n, k1)?;
        self.same_env(n, k2)?;
        if k1.command != n.command || k2.command != n.command {
            return Err(self.shape(n, "premises must cover the same command"));
        }
        if n.pre != Assertion::and(k1.pre.clone(), k2.pre.clone())
            || n.post != Assertion::and(k1.post.clone(), k2.post.clone())
        {
            return Err(self.shape(
                n,
                "pre/postconditions must be the conjunctions of the premise \
                 pre/postconditions",
            ));
        }
        for (l, r) in n.env.effective() {
            match check_precise(r, self.d) {
                PreciseVerdict::Precise => {}
                PreciseVerdict::Imprecise { stack, h1, h2 } => {
                    return Err(Reason::PrecisionViolation(format!(
                        "rule Conj: invariant of lock {l} (`{}`) is not \
                         precise: under stack {} both {} and {} satisfy it \
                         inside one heap",
                        assertion_to_string(r),
                        stack.to_json(),
                        h1.to_json(),
                        h2.to_json(),
                    )));
                }
                PreciseVerdict::Inconclusive { reason } => {
                    return Err(Reason::EntailmentInconclusive(format!(
                        "rule Conj: precision of lock {l}'s invariant \
                         undecided: {reason}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn rule_disj(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 2)?;
        let (k1, k2) = (&n.children[0], &n.children[1]);
        self.same_env(n, k1)?;
        self.same_env(n, k2)?;
        if k1.command != n.command || k2.command != n.command {
            return Err(self.shape(n, "premises must cover the same command"));
        }
        if n.pre != Assertion::or(k1.pre.clone(), k2.pre.clone())
            || n.post != Assertion::or(k1.post.clone(), k2.post.clone())
        {
            return Err(self.shape(
                n,
                "pre/postconditions must be the disjunctions of the premise \
                 pre/postconditions",
            ));
        }
        Ok(())
    }

    // ----- rules for the new commands --------------------------------------

    fn rule_init(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let Command::InitBlock { inv, body } = &n.command else {
            return Err(self.shape(n, "command must be an init block"));
        };
        let k = &n.children[0];
        // premise environment: Γ, 𝒢:G, 𝓘:emp
        let bs = k.env.bindings();
        if bs.len() < 2
            || bs[bs.len() - 1] != (LockId::InitToken, Assertion::Emp)
            || bs[bs.len() - 2].0 != LockId::Ghost
            || LockEnv::from_bindings(bs[..bs.len() - 2].to_vec()) != n.env
        {
            return Err(self.shape(
                n,
                "premise environment must extend the conclusion's with \
                 `$G: G` and `$I: emp`",
            ));
        }
        let g = bs[bs.len() - 2].1.clone();
        if let Some(decl) = inv {
            if *decl != g {
                return Err(self.shape(
                    n,
                    "the ghost invariant bound in the premise must match the \
                     init block's annotation",
                ));
            }
        }
        if k.command != **body {
            return Err(self.shape(n, "premise must cover the block body"));
        }
        let (rho, spec) = self.assumption1(&g)?;
        // conclusion precondition: (∃ȳ. x̂↦ρȳ ∧ Init(ȳ) ∧ G) ∗ P
        let Assertion::Sep(lhs, p) = &n.pre else {
            return Err(self.shape(
                n,
                "precondition must be `(exists y.. :: cells && Init && G) ** P`",
            ));
        };
        if **p != k.pre {
            return Err(self.shape(
                n,
                "the precondition's right conjunct must be the premise's \
                 precondition",
            ));
        }
        let (names, inner) = peel_exists(lhs, spec.arity());
        let Some(names) = names else {
            return Err(self.shape(
                n,
                "precondition must quantify one variable per abstract \
                 variable",
            ));
        };
        let init_f = instantiate(&spec.init, spec, &names, None);
        let expect = Assertion::and(
            Assertion::and(cell_chain(spec, rho, &names), init_f),
            g.clone(),
        );
        if *inner != expect {
            return Err(self.shape(
                n,
                &format!(
                    "precondition body must be `{}`",
                    assertion_to_string(&expect)
                ),
            ));
        }
        if n.post != Assertion::sep(g, k.post.clone()) {
            return Err(self.shape(n, "postcondition must be `G ** Q`"));
        }
        Ok(())
    }

    fn rule_next(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 1)?;
        let Command::NextBlock(body) = &n.command else {
            return Err(self.shape(n, "command must be a next block"));
        };
        if !n.env.is_bound(&LockId::Ghost) {
            return Err(Reason::GhostLockMisuse(
                "rule Next: the environment does not bind the ghost lock \
                 (next outside an init block)"
                    .into(),
            ));
        }
        if !is_atomic(body) {
            return Err(Reason::AtomicityViolation(format!(
                "rule Next: `{}` is not atomic (one base command plus ghost \
                 assignments)",
                command_to_string(body)
            )));
        }
        let g = n.env.lookup(&LockId::Ghost);
        let k = &n.children[0];
        if Some(&k.env) != n.env.without_latest(&LockId::Ghost).as_ref() {
            return Err(self.shape(
                n,
                "premise environment must drop the ghost lock's latest \
                 binding",
            ));
        }
        if k.command != **body {
            return Err(self.shape(n, "premise must cover the block body"));
        }
        let (rho, spec) = self.assumption1(&g)?;
        // fresh observation names ō, from the `fresh` witness
        let os: Vec<String> = n
            .witness("fresh")
            .map(|w| w.split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default();
        if os.len() != spec.arity() || os.iter().any(|o| o.is_empty()) {
            return Err(self.shape(
                n,
                "the `fresh` witness must list one name per abstract variable",
            ));
        }
        let mut taken = assertion_fv(&n.pre);
        taken.extend(assertion_fv(&n.post));
        taken.extend(n.command.fv());
        taken.extend(n.env.fv());
        if let Some(o) = os.iter().find(|o| taken.contains(*o)) {
            return Err(Reason::SideConditionViolation(format!(
                "rule Next: observation name `{o}` is not fresh"
            )));
        }
        // premise precondition: (x̂↦ρō ∧ G) ∗ P
        let expect_pre = Assertion::sep(
            Assertion::and(cell_chain(spec, rho, &os), g.clone()),
            n.pre.clone(),
        );
        if k.pre != expect_pre {
            return Err(self.shape(
                n,
                &format!(
                    "premise precondition must be `{}`",
                    assertion_to_string(&expect_pre)
                ),
            ));
        }
        // premise postcondition: (∃ȳ. x̂↦ρȳ ∧ Next(ō,ȳ) ∧ G) ∗ Q
        let Assertion::Sep(lhs, q) = &k.post else {
            return Err(self.shape(
                n,
                "premise postcondition must be `(exists y.. :: cells && \
                 Next && G) ** Q`",
            ));
        };
        if **q != n.post {
            return Err(self.shape(
                n,
                "the premise postcondition's right conjunct must be the \
                 conclusion's postcondition",
            ));
        }
        let (names, inner) = peel_exists(lhs, spec.arity());
        let Some(names) = names else {
            return Err(self.shape(
                n,
                "premise postcondition must quantify one variable per \
                 abstract variable",
            ));
        };
        let next_f = instantiate(&spec.next, spec, &os, Some(&names));
        let expect = Assertion::and(
            Assertion::and(cell_chain(spec, rho, &names), next_f),
            g,
        );
        if *inner != expect {
            return Err(self.shape(
                n,
                &format!(
                    "premise postcondition body must be `{}`",
                    assertion_to_string(&expect)
                ),
            ));
        }
        Ok(())
    }

    fn rule_print(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::Print(e) = &n.command else {
            return Err(self.shape(n, "command must be a print"));
        };
        if !n.env.is_bound(&LockId::InitToken) {
            return Err(Reason::GhostLockMisuse(
                "rule Print: the environment does not carry the \
                 initialization token (print outside an init block)"
                    .into(),
            ));
        }
        let stdout = Expr::GhostAddr(STDOUT.to_string());
        let Assertion::PointsTo(pe, rho, pv) = &n.pre else {
            return Err(self.shape(n, "precondition must be `stdOut |-> E'`"));
        };
        if *pe != stdout || !rho.is_full() {
            return Err(self.shape(
                n,
                "precondition must own the full stdOut cell",
            ));
        }
        let expect = Assertion::PointsTo(
            stdout,
            Perm::full(),
            Expr::bin(BinOp::Append, e.clone(), pv.clone()),
        );
        if n.post != expect {
            return Err(self.shape(n, "postcondition must be `stdOut |-> (E : E')`"));
        }
        Ok(())
    }

    /// Derived axiom: `{x̂ ↦ E₀} ghost x̂ := E {x̂ ↦ E[x̂ := E₀]}`, where `E`
    /// may read only the assigned cell.
    fn rule_ghost_assign(&self, n: &DerivationNode) -> NodeResult {
        self.arity(n, 0)?;
        let Command::GhostAssign(g, e) = &n.command else {
            return Err(self.shape(n, "command must be a ghost assignment"));
        };
        let mut reads = BTreeSet::new();
        e.ghost_reads(&mut reads);
        reads.remove(g);
        if let Some(other) = reads.iter().next() {
            return Err(Reason::SideConditionViolation(format!(
                "rule GhostAssign: the right-hand side reads ghost cell \
                 `{other}`; only the assigned cell may be read"
            )));
        }
        let ghost = Expr::GhostAddr(g.clone());
        let Assertion::PointsTo(pe, rho, e0) = &n.pre else {
            return Err(self.shape(n, "precondition must be `ghost-cell |-> E0`"));
        };
        if *pe != ghost || !rho.is_full() {
            return Err(self.shape(
                n,
                "precondition must own the full assigned ghost cell",
            ));
        }
        let expect = Assertion::PointsTo(
            ghost.clone(),
            Perm::full(),
            e.subst_ghost_read(g, e0),
        );
        if n.post != expect {
            return Err(self.shape(
                n,
                "postcondition must update the cell with the right-hand \
                 side (old contents substituted for reads)",
            ));
        }
        Ok(())
    }
}

/// Peels exactly `k` leading existentials, returning the bound names (if
/// distinct) and the body.
fn peel_exists(a: &Assertion, k: usize) -> (Option<Vec<String>>, &Assertion) {
    let mut names = Vec::new();
    let mut cur = a;
    for _ in 0..k {
        match cur {
            Assertion::Exists(x, _, body) => {
                names.push(x.clone());
                cur = body;
            }
            _ => return (None, cur),
        }
    }
    let distinct: BTreeSet<&String> = names.iter().collect();
    if distinct.len() != names.len() {
        return (None, cur);
    }
    (Some(names), cur)
}

/// `x̂₁ ↦ρ v₁ ∗ … ∗ x̂ₖ ↦ρ vₖ` over the spec's ghost cells, each conjunct in
/// the `apt` (points-to-with-frame) form of the proof rules.
pub(crate) fn cell_chain(spec: &AtsSpec, rho: Perm, vals: &[String]) -> Assertion {
    let atoms: Vec<Assertion> = spec
        .vars
        .iter()
        .zip(vals)
        .enumerate()
        .map(|(i, ((name, _), v))| {
            let addr = if i == 0 {
                STDOUT.to_string()
            } else {
                name.clone()
            };
            Assertion::apt(Expr::GhostAddr(addr), rho, Expr::var(v))
        })
        .collect();
    let mut it = atoms.into_iter().rev();
    let last = it.next().expect("spec has at least one variable");
    it.fold(last, |acc, a| Assertion::sep(a, acc))
}

/// The spec formula with plain variables replaced by `plain` and (when
/// given) primed variables replaced by `primed_to`.
pub(crate) fn instantiate(
    f: &Assertion,
    spec: &AtsSpec,
    plain: &[String],
    primed_to: Option<&[String]>,
) -> Assertion {
    let mut out = f.clone();
    if let Some(ys) = primed_to {
        for ((name, _), y) in spec.vars.iter().zip(ys) {
            out = subst_assertion(&out, &crate::ats::primed(name), &Expr::var(y));
        }
    }
    for ((name, _), o) in spec.vars.iter().zip(plain) {
        out = subst_assertion(&out, name, &Expr::var(o));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_assertion, parse_ats, parse_command};

    fn d() -> Domains {
        Domains {
            int_min: 0,
            int_max: 2,
            addr_count: 2,
            max_seq_len: 2,
            max_heap_cells: 2,
            ghost_addrs: vec![crate::value::Addr::stdout()],
            budget: 5_000_000,
        }
    }

    fn ghosts() -> BTreeSet<String> {
        ["count".to_string(), "stdOut".to_string()].into()
    }

    fn asrt(s: &str) -> Assertion {
        parse_assertion(s, &ghosts()).unwrap()
    }

    fn cmd(s: &str) -> Command {
        parse_command(s, &ghosts()).unwrap()
    }

    fn node(
        rule: Rule,
        env: LockEnv,
        pre: &str,
        command: &str,
        post: &str,
        children: Vec<DerivationNode>,
    ) -> DerivationNode {
        DerivationNode {
            rule,
            env,
            pre: asrt(pre),
            command: cmd(command),
            post: asrt(post),
            witnesses: vec![],
            children,
        }
    }

    #[test]
    fn skip_axiom_accepts() {
        let n = node(Rule::Skip, LockEnv::empty(), "emp", "skip;", "emp", vec![]);
        assert!(check_derivation(&n, None, &d()).is_accepted());
    }

    #[test]
    fn assign_rejects_env_capture() {
        // {x == 1 [x:=1]} x := 1 {x == 1} is fine with an empty env...
        let ok = node(
            Rule::Assign,
            LockEnv::empty(),
            "1 == 1",
            "x := 1;",
            "x == 1",
            vec![],
        );
        assert!(check_derivation(&ok, None, &d()).is_accepted());
        // ...but not when a lock invariant mentions x
        let env = LockEnv::empty().bind(LockId::User("L".into()), asrt("x == 0"));
        let bad = DerivationNode { env, ..ok };
        let r = check_derivation(&bad, None, &d());
        let CheckResult::Rejected { reason, .. } = r else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "SideConditionViolation");
    }

    #[test]
    fn heap_axioms_check_shapes() {
        let w = node(
            Rule::Write,
            LockEnv::empty(),
            "exists v :: x |-> v",
            "[x] := 7;",
            "x |-> 7",
            vec![],
        );
        assert!(check_derivation(&w, None, &d()).is_accepted());
        let r = node(
            Rule::Read,
            LockEnv::empty(),
            "x |-(1/2)-> 3",
            "y := [x];",
            "x |-(1/2)-> 3 && y == 3",
            vec![],
        );
        assert!(check_derivation(&r, None, &d()).is_accepted());
        let a = node(
            Rule::Alloc,
            LockEnv::empty(),
            "emp",
            "new(x, 5);",
            "x |-> 5",
            vec![],
        );
        assert!(check_derivation(&a, None, &d()).is_accepted());
        let f = node(
            Rule::Free,
            LockEnv::empty(),
            "exists v :: x |-> v",
            "free(x);",
            "emp",
            vec![],
        );
        assert!(check_derivation(&f, None, &d()).is_accepted());
        // wrong postcondition shape
        let bad = node(
            Rule::Write,
            LockEnv::empty(),
            "exists v :: x |-> v",
            "[x] := 7;",
            "x |-> 8",
            vec![],
        );
        let CheckResult::Rejected { reason, .. } = check_derivation(&bad, None, &d()) else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "RuleShapeMismatch");
    }

    #[test]
    fn cons_discharges_entailments_and_rejects_bad_ones() {
        let child = node(Rule::Skip, LockEnv::empty(), "x == 1", "skip;", "x == 1", vec![]);
        let good = node(
            Rule::Cons,
            LockEnv::empty(),
            "x == 1 && emp",
            "skip;",
            "1 <= x",
            vec![child.clone()],
        );
        assert!(check_derivation(&good, None, &d()).is_accepted());
        let bad = node(
            Rule::Cons,
            LockEnv::empty(),
            "1 <= x",
            "skip;",
            "x == 1",
            vec![child],
        );
        let CheckResult::Rejected { reason, .. } = check_derivation(&bad, None, &d()) else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "EntailmentFailed");
    }

    #[test]
    fn conj_requires_precise_invariants() {
        let c1 = node(Rule::Skip, LockEnv::empty(), "emp", "skip;", "emp", vec![]);
        let env = LockEnv::empty().bind(LockId::User("L".into()), asrt("true"));
        let mk = |env: &LockEnv| DerivationNode {
            rule: Rule::Conj,
            env: env.clone(),
            pre: asrt("emp && emp"),
            command: cmd("skip;"),
            post: asrt("emp && emp"),
            witnesses: vec![],
            children: vec![
                DerivationNode { env: env.clone(), ..c1.clone() },
                DerivationNode { env: env.clone(), ..c1.clone() },
            ],
        };
        let CheckResult::Rejected { reason, .. } = check_derivation(&mk(&env), None, &d())
        else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "PrecisionViolation");
        let precise = LockEnv::empty().bind(LockId::User("L".into()), asrt("x |-> 0"));
        assert!(check_derivation(&mk(&precise), None, &d()).is_accepted());
    }

    #[test]
    fn print_needs_the_init_token() {
        let pre = "stdOut |-> [1]";
        let post = "stdOut |-> (2 : [1])";
        let bare = node(Rule::Print, LockEnv::empty(), pre, "print(2);", post, vec![]);
        let CheckResult::Rejected { reason, .. } = check_derivation(&bare, None, &d()) else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "GhostLockMisuse");
        let env = LockEnv::empty().bind(LockId::InitToken, Assertion::Emp);
        let ok = DerivationNode { env, ..bare };
        assert!(check_derivation(&ok, None, &d()).is_accepted());
    }

    #[test]
    fn ghost_assign_substitutes_old_contents() {
        let n = node(
            Rule::GhostAssign,
            LockEnv::empty(),
            "count |-> c",
            "ghost count := count + 1;",
            "count |-> (c + 1)",
            vec![],
        );
        assert!(check_derivation(&n, None, &d()).is_accepted());
    }

    #[test]
    fn next_enforces_atomicity() {
        let spec = parse_ats(
            "vars { stdOut: seq, count: int }\n\
             init { 0 <= count && stdOut == [] }\n\
             next { stdOut' == stdOut ++ [count] && count' == count + 1 }",
        )
        .unwrap();
        let env = LockEnv::empty().bind(LockId::Ghost, asrt("acc(count, 2/3) ** acc(stdOut, 1)"));
        let child = node(
            Rule::Skip,
            LockEnv::empty(),
            "emp",
            "skip;",
            "emp",
            vec![],
        );
        let mut n = DerivationNode {
            rule: Rule::Next,
            env,
            pre: asrt("emp"),
            command: cmd("next { while true { skip; } }"),
            post: asrt("emp"),
            witnesses: vec![("fresh".into(), "o1, o2".into())],
            children: vec![child],
        };
        let CheckResult::Rejected { reason, .. } = check_derivation(&n, Some(&spec), &d())
        else {
            panic!("expected rejection")
        };
        assert_eq!(reason.code(), "AtomicityViolation");
        // an atomic body fails later (on the premise shapes), not on atomicity
        n.command = cmd("next { print(1); }");
        let CheckResult::Rejected { reason, .. } = check_derivation(&n, Some(&spec), &d())
        else {
            panic!("expected rejection")
        };
        assert_ne!(reason.code(), "AtomicityViolation");
    }

    #[test]
    fn every_rule_label_is_constructible() {
        for r in Rule::ALL {
            assert_eq!(Rule::from_name(r.name()), Some(r));
        }
        assert_eq!(Rule::ALL.len(), 21);
    }
}
