//! Lock environments: ordered bindings of lock invariants, where the latest
//! binding of a name wins and unbound locks carry `emp`.

use std::collections::BTreeSet;

use crate::assertion::assertion_fv;
use crate::syntax::ast::{Assertion, LockId};

/// An ordered list of lock-invariant bindings. Lookup returns the latest
/// binding; a lock that is not bound has the invariant `emp`. The two
/// dedicated ghost locks are representable here but cannot be declared in
/// source programs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LockEnv(Vec<(LockId, Assertion)>);

impl LockEnv {
    pub fn empty() -> LockEnv {
        LockEnv(Vec::new())
    }

    pub fn from_bindings(bs: Vec<(LockId, Assertion)>) -> LockEnv {
        LockEnv(bs)
    }

    pub fn bindings(&self) -> &[(LockId, Assertion)] {
        &self.0
    }

    /// The environment extended with one more binding (latest).
    pub fn bind(&self, lock: LockId, inv: Assertion) -> LockEnv {
        let mut bs = self.0.clone();
        bs.push((lock, inv));
        LockEnv(bs)
    }

    /// Whether the lock has an explicit binding.
    pub fn is_bound(&self, lock: &LockId) -> bool {
        self.0.iter().any(|(l, _)| l == lock)
    }

    /// The invariant of `lock`: latest binding wins, `emp` when unbound.
    pub fn lookup(&self, lock: &LockId) -> Assertion {
        self.0
            .iter()
            .rev()
            .find(|(l, _)| l == lock)
            .map(|(_, r)| r.clone())
            .unwrap_or(Assertion::Emp)
    }

    /// The environment with the latest binding of `lock` removed, or `None`
    /// when the lock is unbound.
    pub fn without_latest(&self, lock: &LockId) -> Option<LockEnv> {
        let idx = self.0.iter().rposition(|(l, _)| l == lock)?;
        let mut bs = self.0.clone();
        bs.remove(idx);
        Some(LockEnv(bs))
    }

    /// The effective bindings: one invariant per lock name (the latest).
    pub fn effective(&self) -> Vec<(&LockId, &Assertion)> {
        let mut seen: BTreeSet<&LockId> = BTreeSet::new();
        let mut out = Vec::new();
        for (l, r) in self.0.iter().rev() {
            if seen.insert(l) {
                out.push((l, r));
            }
        }
        out.reverse();
        out
    }

    /// `FV(Γ)`: the union of the free variables of every effective
    /// invariant.
    pub fn fv(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, r) in self.effective() {
            out.extend(assertion_fv(r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::ast::Expr;
    use crate::value::Perm;

    fn cell(x: &str) -> Assertion {
        Assertion::PointsTo(Expr::var(x), Perm::full(), Expr::Int(0))
    }

    #[test]
    fn latest_binding_wins_and_unbound_is_emp() {
        let l = LockId::User("L".into());
        let env = LockEnv::empty()
            .bind(l.clone(), cell("a"))
            .bind(l.clone(), cell("b"));
        assert_eq!(env.lookup(&l), cell("b"));
        assert_eq!(env.lookup(&LockId::User("M".into())), Assertion::Emp);
        let popped = env.without_latest(&l).unwrap();
        assert_eq!(popped.lookup(&l), cell("a"));
        assert!(LockEnv::empty().without_latest(&l).is_none());
    }

    #[test]
    fn fv_unions_effective_invariants() {
        let env = LockEnv::empty()
            .bind(LockId::User("L".into()), cell("a"))
            .bind(LockId::User("L".into()), cell("b"))
            .bind(LockId::Ghost, cell("g"));
        let fv = env.fv();
        assert!(fv.contains("b") && fv.contains("g"));
        // the shadowed binding of L does not contribute
        assert!(!fv.contains("a"));
    }
}
