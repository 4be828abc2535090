//! Runtime values, addresses, and fractional permissions.
//!
//! Addresses come in two flavours: ordinary addresses (natural numbers,
//! allocatable with `new` and removable with `free`) and ghost addresses
//! (named cells that back specification state such as `stdOut`). Ghost
//! addresses can never be produced by allocation.

use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::Serialize;

/// Reserved name of the observable output cell.
pub const STDOUT: &str = "stdOut";

/// A heap address.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Addr {
    /// Ordinary allocatable address.
    Ord(u64),
    /// Reserved ghost address, identified by name.
    Ghost(String),
}

impl Addr {
    pub fn stdout() -> Addr {
        Addr::Ghost(STDOUT.to_string())
    }

    pub fn is_ghost(&self) -> bool {
        matches!(self, Addr::Ghost(_))
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Addr::Ord(n) => write!(f, "a{n}"),
            Addr::Ghost(name) => write!(f, "ghost:{name}"),
        }
    }
}

impl Serialize for Addr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A fractional permission in `[0, 1]`, kept as an exact rational.
///
/// Heaps only ever *store* positive permissions; the zero permission exists
/// as an arithmetic identity (e.g. when enumerating heap splits).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Perm(Rational64);

impl Perm {
    pub const fn raw(r: Rational64) -> Perm {
        Perm(r)
    }

    /// Builds `num/den`, requiring `0 <= num/den <= 1`.
    pub fn new(num: i64, den: i64) -> Option<Perm> {
        if den == 0 {
            return None;
        }
        let r = Rational64::new(num, den);
        if r < Rational64::zero() || r > Rational64::one() {
            None
        } else {
            Some(Perm(r))
        }
    }

    pub fn full() -> Perm {
        Perm(Rational64::one())
    }

    pub fn zero() -> Perm {
        Perm(Rational64::zero())
    }

    pub fn is_full(&self) -> bool {
        self.0.is_one()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0 > Rational64::zero()
    }

    /// Permission addition; `None` if the sum exceeds 1.
    pub fn add(&self, other: &Perm) -> Option<Perm> {
        let r = self.0 + other.0;
        if r > Rational64::one() {
            None
        } else {
            Some(Perm(r))
        }
    }

    /// Permission subtraction; `None` if the result would be negative.
    pub fn sub(&self, other: &Perm) -> Option<Perm> {
        let r = self.0 - other.0;
        if r < Rational64::zero() {
            None
        } else {
            Some(Perm(r))
        }
    }

    pub fn ratio(&self) -> Rational64 {
        self.0
    }
}

impl fmt::Display for Perm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Perm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&format_args!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

/// A runtime value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Seq(Vec<Value>),
    Addr(Addr),
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_addr(&self) -> Option<&Addr> {
        match self {
            Value::Addr(a) => Some(a),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Seq(vs) => {
                write!(f, "[")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Addr(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Int(n) => s.serialize_i64(*n),
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Seq(vs) => vs.serialize(s),
            Value::Addr(a) => a.serialize(s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perm_bounds() {
        assert!(Perm::new(1, 2).is_some());
        assert!(Perm::new(3, 2).is_none());
        assert!(Perm::new(-1, 2).is_none());
        assert!(Perm::new(1, 0).is_none());
        assert_eq!(Perm::new(2, 4), Perm::new(1, 2));
    }

    #[test]
    fn perm_add_caps_at_one() {
        let half = Perm::new(1, 2).unwrap();
        let third = Perm::new(1, 3).unwrap();
        assert_eq!(half.add(&half), Some(Perm::full()));
        assert_eq!(half.add(&Perm::full()), None);
        assert_eq!(
            third.add(&third).unwrap().add(&third),
            Some(Perm::full())
        );
    }

    #[test]
    fn perm_display() {
        assert_eq!(Perm::new(2, 3).unwrap().to_string(), "2/3");
        assert_eq!(Perm::full().to_string(), "1");
    }

    #[test]
    fn value_ordering_is_total() {
        let mut vs = vec![
            Value::Seq(vec![]),
            Value::Bool(false),
            Value::Int(3),
            Value::Addr(Addr::Ord(0)),
        ];
        vs.sort();
        vs.dedup();
        assert_eq!(vs.len(), 4);
    }
}
