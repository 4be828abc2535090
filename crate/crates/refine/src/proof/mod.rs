//! Derivation checking for the refinement program logic: lock environments,
//! a validator for derivation trees against the proof rules, a structured
//! on-disk derivation format, and an elaborator that builds candidate
//! derivations from annotated programs.

pub mod check;
pub mod elaborate;
pub mod env;
pub mod format;

pub use check::{check_derivation, CheckResult, DerivationNode, Reason, Rule};
pub use elaborate::{elaborate_outline, ElabError};
pub use env::LockEnv;
pub use format::{derivation_from_json, derivation_to_json, FormatError};
