//! Builds a candidate derivation from an annotated program: loop and lock
//! invariants, `par` branch specifications, and `assert` midconditions
//! drive the tree shape; Cons nodes are inserted at the joins. Acceptance
//! is still decided solely by the checker.

use thiserror::Error;

use crate::assertion::{assertion_fv, subst_assertion, Domains};
use crate::ats::check_assumption1;
use crate::syntax::ast::{Assertion, AtsSpec, Command, Expr, LockId, Program};
use crate::syntax::pretty::command_to_string;
use crate::value::{Perm, STDOUT};

use super::check::{cell_chain, instantiate, DerivationNode, Rule};
use super::env::LockEnv;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ElabError {
    #[error("missing annotation at `{at}`: {what}")]
    MissingAnnotation { at: String, what: String },
    #[error("init/next blocks need an abstract system")]
    NeedsSpec,
    #[error("the ghost invariant does not satisfy the uniform-permission assumption: {0}")]
    Assumption(String),
    #[error("cannot elaborate `{at}`: {what}")]
    Unsupported { at: String, what: String },
}

fn missing(c: &Command, what: &str) -> ElabError {
    ElabError::MissingAnnotation {
        at: command_to_string(c),
        what: what.to_string(),
    }
}

fn unsupported(c: &Command, what: &str) -> ElabError {
    ElabError::Unsupported {
        at: command_to_string(c),
        what: what.to_string(),
    }
}

/// Elaborates an annotated program into a candidate derivation of
/// `{requires} body {ensures}` under the empty lock environment.
pub fn elaborate_outline(
    p: &Program,
    spec: Option<&AtsSpec>,
    d: &Domains,
) -> Result<DerivationNode, ElabError> {
    let el = Elaborator { spec, d };
    let pre = p.requires.clone().unwrap_or(Assertion::Emp);
    let post = p.ensures.clone().unwrap_or_else(Assertion::tt);
    el.elab(&LockEnv::empty(), &pre, &p.body, &post)
}

struct Elaborator<'a> {
    spec: Option<&'a AtsSpec>,
    d: &'a Domains,
}

/// Whether an assertion is heap-independent (usable as a frame-carried pure
/// fact).
fn is_pure(a: &Assertion) -> bool {
    match a {
        Assertion::Expr(_) => true,
        Assertion::And(l, r) => is_pure(l) && is_pure(r),
        Assertion::Not(b) => is_pure(b),
        Assertion::Forall(_, _, b) | Assertion::Exists(_, _, b) => is_pure(b),
        _ => false,
    }
}

/// Splits an assertion into separating conjuncts and trailing pure facts.
/// `loose` records whether a pure fact appeared as a separating conjunct:
/// `P ∗ pure` leaves the rest of the heap unconstrained (it means
/// `P ∗ true ∧ pure`), unlike `P ∧ pure`.
fn split(a: &Assertion, spatial: &mut Vec<Assertion>, pure: &mut Vec<Assertion>, loose: &mut bool) {
    match a {
        Assertion::Sep(l, r) => {
            if is_pure(r) {
                split(l, spatial, pure, loose);
                pure.push((**r).clone());
                *loose = true;
            } else if is_pure(l) {
                pure.push((**l).clone());
                *loose = true;
                split(r, spatial, pure, loose);
            } else {
                split(l, spatial, pure, loose);
                split(r, spatial, pure, loose);
            }
        }
        Assertion::And(l, r) if is_pure(r) => {
            split(l, spatial, pure, loose);
            pure.push((**r).clone());
        }
        Assertion::And(l, r) if is_pure(l) => {
            pure.push((**l).clone());
            split(r, spatial, pure, loose);
        }
        Assertion::Emp => {}
        other => spatial.push(other.clone()),
    }
}

fn assemble(spatial: &[Assertion], pure: &[Assertion], loose: bool) -> Assertion {
    let mut parts = spatial.to_vec();
    if loose {
        parts.push(Assertion::tt());
    }
    let mut it = parts.into_iter().rev();
    let mut out = it.next().unwrap_or(Assertion::Emp);
    for a in it {
        out = Assertion::sep(a, out);
    }
    for p in pure {
        // `true` markers already carried by `loose`
        if !matches!(p, Assertion::Expr(Expr::Bool(true))) {
            out = Assertion::and(out, p.clone());
        }
    }
    out
}

impl<'a> Elaborator<'a> {
    fn node(
        &self,
        rule: Rule,
        env: &LockEnv,
        pre: Assertion,
        command: Command,
        post: Assertion,
        children: Vec<DerivationNode>,
    ) -> DerivationNode {
        DerivationNode {
            rule,
            env: env.clone(),
            pre,
            command,
            post,
            witnesses: vec![],
            children,
        }
    }

    /// Bridges a proved node to the requested pre/post with a Cons node
    /// when they differ (the checker discharges the entailments).
    fn cons_wrap(
        &self,
        env: &LockEnv,
        pre: &Assertion,
        n: DerivationNode,
        post: &Assertion,
    ) -> DerivationNode {
        if n.pre == *pre && n.post == *post {
            return n;
        }
        let command = n.command.clone();
        self.node(Rule::Cons, env, pre.clone(), command, post.clone(), vec![n])
    }

    fn elab(
        &self,
        env: &LockEnv,
        pre: &Assertion,
        c: &Command,
        post: &Assertion,
    ) -> Result<DerivationNode, ElabError> {
        // Heap leaves need a syntactic points-to conjunct in the
        // precondition.  When the precondition is existentially quantified
        // (typically a lock invariant opened by `with`), peel the binders
        // with rule Ex first; the postcondition is left untouched, exactly
        // as the checker's Ex rule expects.
        if let Assertion::Exists(x, _, body) = pre {
            if matches!(
                c,
                Command::Write(..)
                    | Command::Read(..)
                    | Command::Alloc(..)
                    | Command::Free(..)
                    | Command::Print(..)
                    | Command::GhostAssign(..)
            ) && !c.fv().contains(x)
            {
                let k = self.elab(env, body, c, post)?;
                return Ok(self.node(
                    Rule::Ex,
                    env,
                    pre.clone(),
                    c.clone(),
                    post.clone(),
                    vec![k],
                ));
            }
        }
        match c {
            Command::Skip => {
                let n = self.node(Rule::Skip, env, pre.clone(), c.clone(), pre.clone(), vec![]);
                Ok(self.cons_wrap(env, pre, n, post))
            }
            Command::Assign(x, e) => {
                let pre0 = subst_assertion(post, x, e);
                let n = self.node(Rule::Assign, env, pre0, c.clone(), post.clone(), vec![]);
                Ok(self.cons_wrap(env, pre, n, post))
            }
            Command::Write(..)
            | Command::Read(..)
            | Command::Alloc(..)
            | Command::Free(..)
            | Command::Print(..)
            | Command::GhostAssign(..) => {
                let (n, mid) = self.forward_leaf(env, pre, c)?;
                if mid == *post {
                    Ok(n)
                } else {
                    Ok(self.node(
                        Rule::Cons,
                        env,
                        pre.clone(),
                        c.clone(),
                        post.clone(),
                        vec![n],
                    ))
                }
            }
            Command::Seq { first, second, mid } => {
                let r = match mid {
                    Some(m) => m.clone(),
                    None => self
                        .try_backward(second, post)
                        .or_else(|| self.try_forward(env, pre, first))
                        .ok_or_else(|| {
                            missing(c, "a midcondition (add an `assert`)")
                        })?,
                };
                let k1 = self.elab(env, pre, first, &r)?;
                let k2 = self.elab(env, &r, second, post)?;
                Ok(self.node(
                    Rule::Seq,
                    env,
                    pre.clone(),
                    c.clone(),
                    post.clone(),
                    vec![k1, k2],
                ))
            }
            Command::Ite(e, c1, c2) => {
                let p1 = Assertion::and(pre.clone(), Assertion::Expr(e.clone()));
                let p2 = Assertion::and(pre.clone(), Assertion::not(Assertion::Expr(e.clone())));
                let k1 = self.elab(env, &p1, c1, post)?;
                let k2 = self.elab(env, &p2, c2, post)?;
                Ok(self.node(
                    Rule::Cond,
                    env,
                    pre.clone(),
                    c.clone(),
                    post.clone(),
                    vec![k1, k2],
                ))
            }
            Command::While { guard, inv, body } => {
                let i = inv
                    .clone()
                    .ok_or_else(|| missing(c, "a loop invariant (`inv (...)`)"))?;
                let k = self.elab(
                    env,
                    &Assertion::and(i.clone(), Assertion::Expr(guard.clone())),
                    body,
                    &i,
                )?;
                let exit = Assertion::and(i.clone(), Assertion::not(Assertion::Expr(guard.clone())));
                let w = self.node(Rule::While, env, i, c.clone(), exit, vec![k]);
                Ok(self.cons_wrap(env, pre, w, post))
            }
            Command::Par {
                left,
                right,
                left_spec,
                right_spec,
            } => {
                let ls = left_spec
                    .as_ref()
                    .ok_or_else(|| missing(c, "a left branch specification (requires/ensures)"))?;
                let rs = right_spec
                    .as_ref()
                    .ok_or_else(|| missing(c, "a right branch specification (requires/ensures)"))?;
                let k1 = self.elab(env, &ls.requires, left, &ls.ensures)?;
                let k2 = self.elab(env, &rs.requires, right, &rs.ensures)?;
                let p = Assertion::sep(ls.requires.clone(), rs.requires.clone());
                let q = Assertion::sep(ls.ensures.clone(), rs.ensures.clone());
                let par = self.node(Rule::Par, env, p, c.clone(), q, vec![k1, k2]);
                Ok(self.cons_wrap(env, pre, par, post))
            }
            Command::LockDecl { lock, inv, body } => {
                let r = inv
                    .clone()
                    .ok_or_else(|| missing(c, "a lock invariant (`inv (...)`)"))?;
                let child_env = env.bind(lock.clone(), r.clone());
                let p1 = self
                    .natural_pre(body)
                    .or_else(|| match pre {
                        Assertion::Sep(l, p) if **l == r => Some((**p).clone()),
                        _ => None,
                    })
                    .ok_or_else(|| {
                        missing(c, "an annotated body (the local part of the precondition)")
                    })?;
                let q1 = self.natural_post(body).ok_or_else(|| {
                    missing(c, "an annotated body (the local part of the postcondition)")
                })?;
                let k = self.elab(&child_env, &p1, body, &q1)?;
                let n = self.node(
                    Rule::Lock,
                    env,
                    Assertion::sep(r.clone(), p1),
                    c.clone(),
                    Assertion::sep(r, q1),
                    vec![k],
                );
                Ok(self.cons_wrap(env, pre, n, post))
            }
            Command::With { lock, guard, body } => {
                let r = env.lookup(lock);
                let child_env = env.without_latest(lock).unwrap_or_else(|| env.clone());
                let child_pre = Assertion::and(
                    Assertion::sep(pre.clone(), r.clone()),
                    Assertion::Expr(guard.clone()),
                );
                let child_post = Assertion::sep(post.clone(), r);
                let k = self.elab(&child_env, &child_pre, body, &child_post)?;
                Ok(self.node(
                    Rule::With,
                    env,
                    pre.clone(),
                    c.clone(),
                    post.clone(),
                    vec![k],
                ))
            }
            Command::InitBlock { inv, body } => {
                let g = inv
                    .clone()
                    .ok_or_else(|| missing(c, "a ghost invariant (`inv (...)`)"))?;
                let spec = self.spec.ok_or(ElabError::NeedsSpec)?;
                let rho = check_assumption1(&g, spec, self.d)
                    .map_err(|v| ElabError::Assumption(format!("{v:?}")))?;
                let child_env = env
                    .bind(LockId::Ghost, g.clone())
                    .bind(LockId::InitToken, Assertion::Emp);
                let p1 = self
                    .natural_pre(body)
                    .ok_or_else(|| missing(c, "an annotated body spine"))?;
                let q1 = self
                    .natural_post(body)
                    .ok_or_else(|| missing(c, "an annotated body spine"))?;
                let k = self.elab(&child_env, &p1, body, &q1)?;
                let ys = self.fresh_names(spec, "y", &[&p1, &g], c)?;
                let init_f = instantiate(&spec.init, spec, &ys, None);
                let mut lhs = Assertion::and(
                    Assertion::and(cell_chain(spec, rho, &ys), init_f),
                    g.clone(),
                );
                for y in ys.iter().rev() {
                    lhs = Assertion::Exists(y.clone(), None, Box::new(lhs));
                }
                let n = self.node(
                    Rule::Init,
                    env,
                    Assertion::sep(lhs, p1),
                    c.clone(),
                    Assertion::sep(g, q1),
                    vec![k],
                );
                Ok(self.cons_wrap(env, pre, n, post))
            }
            Command::NextBlock(body) => {
                let spec = self.spec.ok_or(ElabError::NeedsSpec)?;
                if !env.is_bound(&LockId::Ghost) {
                    return Err(unsupported(c, "next outside an init block"));
                }
                let g = env.lookup(&LockId::Ghost);
                let rho = check_assumption1(&g, spec, self.d)
                    .map_err(|v| ElabError::Assumption(format!("{v:?}")))?;
                let child_env = env
                    .without_latest(&LockId::Ghost)
                    .unwrap_or_else(|| env.clone());
                // observation names o1..ok; annotations inside the block may
                // refer to them, so a clash is an error rather than a rename
                let os: Vec<String> = (1..=spec.arity()).map(|i| format!("o{i}")).collect();
                let mut taken = assertion_fv(pre);
                taken.extend(assertion_fv(post));
                taken.extend(c.fv());
                taken.extend(env.fv());
                if let Some(o) = os.iter().find(|o| taken.contains(*o)) {
                    return Err(unsupported(
                        c,
                        &format!("the observation name `{o}` is already in use; rename it"),
                    ));
                }
                let child_pre = Assertion::sep(
                    Assertion::and(cell_chain(spec, rho, &os), g.clone()),
                    pre.clone(),
                );
                let ys = self.fresh_names(spec, "y", &[pre, post, &g], c)?;
                let next_f = instantiate(&spec.next, spec, &os, Some(&ys));
                let mut lhs = Assertion::and(
                    Assertion::and(cell_chain(spec, rho, &ys), next_f),
                    g,
                );
                for y in ys.iter().rev() {
                    lhs = Assertion::Exists(y.clone(), None, Box::new(lhs));
                }
                let child_post = Assertion::sep(lhs, post.clone());
                let k = self.elab(&child_env, &child_pre, body, &child_post)?;
                Ok(DerivationNode {
                    rule: Rule::Next,
                    env: env.clone(),
                    pre: pre.clone(),
                    command: c.clone(),
                    post: post.clone(),
                    witnesses: vec![("fresh".into(), os.join(", "))],
                    children: vec![k],
                })
            }
            Command::Within { .. } => Err(unsupported(c, "runtime-only form")),
        }
    }

    /// Forward step through a heap axiom: locates the touched cell among
    /// the separating conjuncts of `pre`, frames the rest, and returns a
    /// node proving `{pre} c {computed post}` together with that post.
    fn forward_leaf(
        &self,
        env: &LockEnv,
        pre: &Assertion,
        c: &Command,
    ) -> Result<(DerivationNode, Assertion), ElabError> {
        let mut spatial = Vec::new();
        let mut pure = Vec::new();
        let mut loose = false;
        split(pre, &mut spatial, &mut pure, &mut loose);
        let find_cell = |addr: &Expr, need_full: bool| -> Option<usize> {
            spatial.iter().position(|a| match a {
                Assertion::PointsTo(e, p, _) => e == addr && (!need_full || p.is_full()),
                _ => false,
            })
        };
        let mut fresh = String::from("v");
        {
            let mut taken = assertion_fv(pre);
            taken.extend(c.fv());
            while taken.contains(&fresh) {
                fresh.push('_');
            }
        }
        let wild = |e: &Expr| {
            Assertion::Exists(
                fresh.clone(),
                None,
                Box::new(Assertion::PointsTo(
                    e.clone(),
                    Perm::full(),
                    Expr::var(&fresh),
                )),
            )
        };
        let (idx, pre0, post0) = match c {
            Command::Write(e, e2) => {
                let i = find_cell(e, true)
                    .ok_or_else(|| missing(c, "full ownership of the written cell in scope"))?;
                (
                    Some(i),
                    wild(e),
                    Assertion::PointsTo(e.clone(), Perm::full(), e2.clone()),
                )
            }
            Command::Read(x, e) => {
                let i = find_cell(e, false)
                    .ok_or_else(|| missing(c, "a points-to for the read cell in scope"))?;
                let Assertion::PointsTo(_, rho, v) = &spatial[i] else {
                    unreachable!()
                };
                let p0 = Assertion::PointsTo(e.clone(), *rho, v.clone());
                let q0 = Assertion::and(
                    p0.clone(),
                    Assertion::Expr(Expr::eq(Expr::var(x), v.clone())),
                );
                (Some(i), p0, q0)
            }
            Command::Alloc(x, e) => (
                None,
                Assertion::Emp,
                Assertion::PointsTo(Expr::var(x), Perm::full(), e.clone()),
            ),
            Command::Free(e) => {
                let i = find_cell(e, true)
                    .ok_or_else(|| missing(c, "full ownership of the freed cell in scope"))?;
                (Some(i), wild(e), Assertion::Emp)
            }
            Command::Print(e) => {
                let stdout = Expr::GhostAddr(STDOUT.to_string());
                let i = find_cell(&stdout, true)
                    .ok_or_else(|| missing(c, "full ownership of stdOut in scope"))?;
                let Assertion::PointsTo(_, _, v) = &spatial[i] else {
                    unreachable!()
                };
                let p0 = Assertion::PointsTo(stdout.clone(), Perm::full(), v.clone());
                let q0 = Assertion::PointsTo(
                    stdout,
                    Perm::full(),
                    Expr::bin(crate::syntax::ast::BinOp::Append, e.clone(), v.clone()),
                );
                (Some(i), p0, q0)
            }
            Command::GhostAssign(g, e) => {
                let cell = Expr::GhostAddr(g.clone());
                let i = find_cell(&cell, true).ok_or_else(|| {
                    missing(c, "full ownership of the assigned ghost cell in scope")
                })?;
                let Assertion::PointsTo(_, _, v) = &spatial[i] else {
                    unreachable!()
                };
                let p0 = Assertion::PointsTo(cell.clone(), Perm::full(), v.clone());
                let q0 = Assertion::PointsTo(cell, Perm::full(), e.subst_ghost_read(g, v));
                (Some(i), p0, q0)
            }
            other => {
                return Err(unsupported(
                    other,
                    "not a heap axiom (internal elaboration step)",
                ))
            }
        };
        let mut rest = spatial.clone();
        if let Some(i) = idx {
            rest.remove(i);
        }
        let frame = assemble(&rest, &pure, loose);
        let axiom = self.node(
            match c {
                Command::Write(..) => Rule::Write,
                Command::Read(..) => Rule::Read,
                Command::Alloc(..) => Rule::Alloc,
                Command::Free(..) => Rule::Free,
                Command::Print(..) => Rule::Print,
                Command::GhostAssign(..) => Rule::GhostAssign,
                _ => unreachable!(),
            },
            env,
            pre0.clone(),
            c.clone(),
            post0.clone(),
            vec![],
        );
        let framed_pre = Assertion::sep(pre0, frame.clone());
        let framed_post = Assertion::sep(post0, frame.clone());
        let framed = self.node(
            Rule::Frame,
            env,
            framed_pre.clone(),
            c.clone(),
            framed_post.clone(),
            vec![axiom],
        );
        let n = self.cons_wrap(env, pre, framed, &framed_post);
        Ok((n, framed_post))
    }

    /// Syntactic strongest-postcondition for simple leading commands.
    fn try_forward(&self, env: &LockEnv, pre: &Assertion, c: &Command) -> Option<Assertion> {
        match c {
            Command::Skip => Some(pre.clone()),
            Command::Assign(x, e) => {
                let mut used = assertion_fv(pre);
                used.extend(e.fv());
                if used.contains(x) {
                    return None;
                }
                Some(Assertion::and(
                    pre.clone(),
                    Assertion::Expr(Expr::eq(Expr::var(x), e.clone())),
                ))
            }
            _ => self.forward_leaf(env, pre, c).ok().map(|(_, m)| m),
        }
    }

    /// Syntactic weakest-precondition through assignment-like commands.
    fn try_backward(&self, c: &Command, post: &Assertion) -> Option<Assertion> {
        match c {
            Command::Skip => Some(post.clone()),
            Command::Assign(x, e) => Some(subst_assertion(post, x, e)),
            Command::Seq {
                first,
                second,
                mid: None,
            } => self.try_backward(first, &self.try_backward(second, post)?),
            Command::Seq {
                first,
                mid: Some(m),
                ..
            } => self.try_backward(first, m),
            _ => None,
        }
    }

    /// The precondition an annotated command naturally proves.
    fn natural_pre(&self, c: &Command) -> Option<Assertion> {
        match c {
            Command::While { inv, .. } => inv.clone(),
            Command::Par {
                left_spec: Some(l),
                right_spec: Some(r),
                ..
            } => Some(Assertion::sep(l.requires.clone(), r.requires.clone())),
            Command::LockDecl {
                inv: Some(r), body, ..
            } => Some(Assertion::sep(r.clone(), self.natural_pre(body)?)),
            // a leading `assert` parses as `skip; [mid] rest` — use the mid
            Command::Seq {
                first,
                mid: Some(m),
                ..
            } if **first == Command::Skip => Some(m.clone()),
            Command::Seq { first, .. } => self.natural_pre(first),
            _ => None,
        }
    }

    /// The postcondition an annotated command naturally proves.
    fn natural_post(&self, c: &Command) -> Option<Assertion> {
        match c {
            Command::While { guard, inv, .. } => Some(Assertion::and(
                inv.clone()?,
                Assertion::not(Assertion::Expr(guard.clone())),
            )),
            Command::Par {
                left_spec: Some(l),
                right_spec: Some(r),
                ..
            } => Some(Assertion::sep(l.ensures.clone(), r.ensures.clone())),
            Command::LockDecl {
                inv: Some(r), body, ..
            } => Some(Assertion::sep(r.clone(), self.natural_post(body)?)),
            // a trailing `assert` parses as `first; [mid] skip` — use the mid
            Command::Seq {
                second,
                mid: Some(m),
                ..
            } if **second == Command::Skip => Some(m.clone()),
            Command::Seq { second, .. } => self.natural_post(second),
            _ => None,
        }
    }

    /// `base1..basek` names avoiding the free variables of the given
    /// assertions, one per abstract variable.
    fn fresh_names(
        &self,
        spec: &AtsSpec,
        base: &str,
        avoid: &[&Assertion],
        c: &Command,
    ) -> Result<Vec<String>, ElabError> {
        let mut taken = c.fv();
        for a in avoid {
            taken.extend(assertion_fv(a));
        }
        let mut out = Vec::new();
        for i in 1..=spec.arity() {
            let mut name = format!("{base}{i}");
            while taken.contains(&name) {
                name.push('_');
            }
            taken.insert(name.clone());
            out.push(name);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof::check::{check_derivation, CheckResult};
    use crate::syntax::parser::{parse_ats, parse_program};
    use crate::value::Addr;

    fn d() -> Domains {
        Domains {
            int_min: 0,
            int_max: 2,
            addr_count: 2,
            max_seq_len: 2,
            max_heap_cells: 3,
            ghost_addrs: vec![Addr::stdout(), Addr::Ghost("count".into())],
            budget: 400_000_000,
        }
    }

    #[test]
    fn while_without_invariant_is_missing_annotation() {
        let p = parse_program("while true { skip; }").unwrap();
        let e = elaborate_outline(&p, None, &d()).unwrap_err();
        assert!(matches!(e, ElabError::MissingAnnotation { .. }));
    }

    #[test]
    fn straight_line_heap_code_elaborates_and_checks() {
        let p = parse_program(
            "requires (emp);\n\
             ensures (x |-> 2);\n\
             new(x, 1);\n\
             [x] := 2;",
        )
        .unwrap();
        let tree = elaborate_outline(&p, None, &d()).unwrap();
        let r = check_derivation(&tree, None, &d());
        assert!(matches!(r, CheckResult::Accepted), "{r:?}");
    }

    #[test]
    fn assignment_chains_go_backward() {
        let p = parse_program(
            "requires (true);\n\
             ensures (y == 2);\n\
             x := 1;\n\
             y := x + 1;",
        )
        .unwrap();
        let tree = elaborate_outline(&p, None, &d()).unwrap();
        assert!(check_derivation(&tree, None, &d()).is_accepted());
    }

    #[test]
    fn annotated_print_loop_checks_end_to_end() {
        let spec = parse_ats(
            "vars { stdOut: seq, count: int }\n\
             init { 0 <= count && stdOut == [] }\n\
             next { stdOut' == stdOut ++ [count] && count' == count + 1 }",
        )
        .unwrap();
        let p = parse_program(
            "ghost count;\n\
             requires (stdOut |-> [] ** count |-> 0);\n\
             c := 0;\n\
             init inv (acc(count, 2/3) ** acc(stdOut, 1)) {\n\
               while true inv (count |-(1/3)-> c) {\n\
                 next {\n\
                   assert ((stdOut |-> o1 ** count |-> c ** true) && o2 == c);\n\
                   print(c);\n\
                   assert ((stdOut |-> (c : o1) ** count |-> c ** true) && o2 == c);\n\
                   ghost count := count + 1;\n\
                 };\n\
                 c := c + 1;\n\
               }\n\
             }",
        )
        .unwrap();
        let tree = elaborate_outline(&p, Some(&spec), &d()).unwrap();
        let r = check_derivation(&tree, Some(&spec), &d());
        assert!(matches!(r, CheckResult::Accepted), "{r:?}");
    }
}
