//! Refinement workbench for concurrent heap programs against abstract
//! transition systems: bounded separation-logic assertion checking,
//! exhaustive bounded interleaving exploration with refinement and safety
//! audits, and a checker for separation-logic proof derivations.

pub mod assertion;
pub mod ats;
pub mod cli;
pub mod explorer;
pub mod heap;
pub mod proof;
pub mod semantics;
pub mod syntax;
pub mod value;

pub use cli::run_cli;
