//! Permission heaps and stacks.
//!
//! A permission heap is a finite map from addresses to pairs of a positive
//! fractional permission and a value. Heap addition `⊕` is the partial
//! commutative monoid operation: cells present on both sides must agree on
//! their value and the permissions must sum to at most 1; cells present on
//! one side are copied. A heap is *normal* when every cell carries the full
//! permission; operational configurations only ever use normal heaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::value::{Addr, Perm, Value};

/// A total variable store. Unassigned variables read as `0`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Stack {
    map: BTreeMap<String, Value>,
}

impl Stack {
    pub fn new() -> Stack {
        Stack::default()
    }

    pub fn get(&self, name: &str) -> Value {
        self.map.get(name).cloned().unwrap_or(Value::Int(0))
    }

    pub fn set(&mut self, name: &str, v: Value) {
        self.map.insert(name.to_string(), v);
    }

    pub fn with(&self, name: &str, v: Value) -> Stack {
        let mut s = self.clone();
        s.set(name, v);
        s
    }

    /// The explicitly assigned bindings.
    pub fn bindings(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.map.iter()
    }

    /// Restriction to a set of variables, dropping default-valued entries.
    /// Used when fingerprinting configurations so that dead variables do not
    /// distinguish otherwise identical states.
    pub fn restricted(&self, live: &BTreeSet<String>) -> Stack {
        Stack {
            map: self
                .map
                .iter()
                .filter(|(k, v)| live.contains(*k) && **v != Value::Int(0))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.map
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::to_value(v).unwrap()))
                .collect(),
        )
    }
}

impl fmt::Display for Stack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "}}")
    }
}

/// A heap cell: permission and value.
pub type Cell = (Perm, Value);

/// A finite partial heap with fractional permissions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PermHeap {
    cells: BTreeMap<Addr, Cell>,
}

impl PermHeap {
    pub fn empty() -> PermHeap {
        PermHeap::default()
    }

    pub fn singleton(a: Addr, p: Perm, v: Value) -> PermHeap {
        let mut h = PermHeap::empty();
        h.insert(a, p, v);
        h
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, a: &Addr) -> bool {
        self.cells.contains_key(a)
    }

    pub fn get(&self, a: &Addr) -> Option<&Cell> {
        self.cells.get(a)
    }

    pub fn value(&self, a: &Addr) -> Option<&Value> {
        self.cells.get(a).map(|(_, v)| v)
    }

    pub fn dom(&self) -> impl Iterator<Item = &Addr> {
        self.cells.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Addr, &Cell)> {
        self.cells.iter()
    }

    /// Inserts a cell, replacing any existing one. Panics on zero permission:
    /// stored permissions are strictly positive by invariant.
    pub fn insert(&mut self, a: Addr, p: Perm, v: Value) {
        assert!(p.is_positive(), "heap cells carry positive permissions");
        self.cells.insert(a, (p, v));
    }

    /// Heap addition `⊕`. `None` when undefined: a shared address with
    /// disagreeing values or a permission sum above 1.
    pub fn add(&self, other: &PermHeap) -> Option<PermHeap> {
        let mut out = self.clone();
        for (a, (p, v)) in &other.cells {
            match out.cells.get_mut(a) {
                None => {
                    out.cells.insert(a.clone(), (*p, v.clone()));
                }
                Some((q, w)) => {
                    if w != v {
                        return None;
                    }
                    *q = q.add(p)?;
                }
            }
        }
        Some(out)
    }

    /// Heap update `h[a ↦ v]`: sets the cell to value `v` with permission 1,
    /// whether or not it was present before.
    pub fn update(&self, a: &Addr, v: Value) -> PermHeap {
        let mut out = self.clone();
        out.cells.insert(a.clone(), (Perm::full(), v));
        out
    }

    /// Removes a cell entirely.
    pub fn delete(&self, a: &Addr) -> PermHeap {
        let mut out = self.clone();
        out.cells.remove(a);
        out
    }

    /// Reduces the permission of `a` by `p`, dropping the cell when the
    /// remainder is zero. `None` when the cell is absent, the value differs,
    /// or less than `p` is held.
    pub fn carve(&self, a: &Addr, p: Perm, v: &Value) -> Option<PermHeap> {
        let (q, w) = self.cells.get(a)?;
        if w != v {
            return None;
        }
        let rest = q.sub(&p)?;
        let mut out = self.clone();
        if rest.is_zero() {
            out.cells.remove(a);
        } else {
            out.cells.insert(a.clone(), (rest, w.clone()));
        }
        Some(out)
    }

    /// True when every cell carries the full permission.
    pub fn is_normal(&self) -> bool {
        self.cells.values().all(|(p, _)| p.is_full())
    }

    /// Raises every permission to 1, keeping domain and values.
    pub fn normal_completion(&self) -> PermHeap {
        PermHeap {
            cells: self
                .cells
                .iter()
                .map(|(a, (_, v))| (a.clone(), (Perm::full(), v.clone())))
                .collect(),
        }
    }

    /// Least upper bound in the sub-heap order: per-cell maximum permission,
    /// defined only when shared addresses agree on values.
    pub fn join(&self, other: &PermHeap) -> Option<PermHeap> {
        let mut out = self.clone();
        for (a, (p, v)) in &other.cells {
            match out.cells.get_mut(a) {
                None => {
                    out.cells.insert(a.clone(), (*p, v.clone()));
                }
                Some((q, w)) => {
                    if w != v {
                        return None;
                    }
                    *q = (*q).max(*p);
                }
            }
        }
        Some(out)
    }

    /// `other ⊆ self` in the sub-heap sense: every cell of `other` is present
    /// with the same value and at least as much permission.
    pub fn includes(&self, other: &PermHeap) -> bool {
        other.cells.iter().all(|(a, (p, v))| {
            self.cells
                .get(a)
                .map(|(q, w)| w == v && q.sub(p).is_some())
                .unwrap_or(false)
        })
    }

    /// `self − other`, defined when `other ⊆ self`.
    pub fn subtract(&self, other: &PermHeap) -> Option<PermHeap> {
        let mut out = self.clone();
        for (a, (p, v)) in &other.cells {
            out = out.carve(a, *p, v)?;
        }
        Some(out)
    }

    /// Least ordinary address not in the domain.
    pub fn least_free_ordinary(&self) -> u64 {
        let mut n = 0;
        while self.cells.contains_key(&Addr::Ord(n)) {
            n += 1;
        }
        n
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.cells
                .iter()
                .map(|(a, (p, v))| {
                    (
                        a.to_string(),
                        serde_json::json!({
                            "perm": format!("{}/{}", p.ratio().numer(), p.ratio().denom()),
                            "value": serde_json::to_value(v).unwrap(),
                        }),
                    )
                })
                .collect(),
        )
    }
}

impl fmt::Display for PermHeap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (a, (p, v))) in self.cells.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a} ↦ ({p}, {v})")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for PermHeap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

/// Projects the abstract state out of a heap: the values stored at the given
/// ghost addresses, in order. `None` when any of them is absent (a cell with
/// any positive permission counts as present).
pub fn get_state(h: &PermHeap, ghost_addrs: &[Addr]) -> Option<Vec<Value>> {
    ghost_addrs
        .iter()
        .map(|a| h.value(a).cloned())
        .collect::<Option<Vec<_>>>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: i64, d: i64) -> Perm {
        Perm::new(n, d).unwrap()
    }

    #[test]
    fn add_shared_cell_sums_permissions() {
        let a = Addr::Ord(0);
        let h1 = PermHeap::singleton(a.clone(), p(1, 2), Value::Int(7));
        let h2 = PermHeap::singleton(a.clone(), p(1, 2), Value::Int(7));
        let sum = h1.add(&h2).unwrap();
        assert_eq!(sum.get(&a), Some(&(Perm::full(), Value::Int(7))));
    }

    #[test]
    fn add_undefined_on_value_disagreement() {
        let a = Addr::Ord(0);
        let h1 = PermHeap::singleton(a.clone(), p(1, 2), Value::Int(7));
        let h2 = PermHeap::singleton(a, p(1, 4), Value::Int(8));
        assert_eq!(h1.add(&h2), None);
    }

    #[test]
    fn add_undefined_on_permission_overflow() {
        let a = Addr::Ord(0);
        let h1 = PermHeap::singleton(a.clone(), p(2, 3), Value::Int(7));
        let h2 = PermHeap::singleton(a, p(1, 2), Value::Int(7));
        assert_eq!(h1.add(&h2), None);
    }

    #[test]
    fn add_copies_disjoint_cells() {
        let h1 = PermHeap::singleton(Addr::Ord(0), p(1, 3), Value::Int(1));
        let h2 = PermHeap::singleton(Addr::Ord(1), Perm::full(), Value::Bool(true));
        let sum = h1.add(&h2).unwrap();
        assert_eq!(sum.len(), 2);
    }

    #[test]
    fn update_sets_full_permission() {
        let a = Addr::Ord(3);
        let h = PermHeap::singleton(a.clone(), p(1, 2), Value::Int(0));
        let h2 = h.update(&a, Value::Int(9));
        assert_eq!(h2.get(&a), Some(&(Perm::full(), Value::Int(9))));
    }

    #[test]
    fn normal_completion() {
        let mut h = PermHeap::empty();
        h.insert(Addr::Ord(0), p(1, 3), Value::Int(1));
        h.insert(Addr::Ghost("count".into()), Perm::full(), Value::Int(0));
        assert!(!h.is_normal());
        let n = h.normal_completion();
        assert!(n.is_normal());
        assert_eq!(n.len(), 2);
        assert_eq!(n.value(&Addr::Ord(0)), Some(&Value::Int(1)));
    }

    #[test]
    fn get_state_projects_ghost_cells_in_order() {
        let mut h = PermHeap::empty();
        h.insert(Addr::stdout(), Perm::full(), Value::Seq(vec![]));
        h.insert(Addr::Ghost("count".into()), p(1, 3), Value::Int(0));
        let addrs = [Addr::stdout(), Addr::Ghost("count".into())];
        assert_eq!(
            get_state(&h, &addrs),
            Some(vec![Value::Seq(vec![]), Value::Int(0)])
        );
        let h2 = h.delete(&Addr::Ghost("count".into()));
        assert_eq!(get_state(&h2, &addrs), None);
    }
}
