//! Concrete and abstract syntax: AST, lexer, parsers, printers, and
//! static well-formedness checks.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod pretty;
pub mod wellformed;

pub use ast::*;
pub use lexer::{ParseError, ParseResult};
pub use parser::{parse_assertion, parse_ats, parse_command, parse_program};
pub use pretty::{
    assertion_to_string, ats_to_string, command_to_string, expr_to_string, program_to_string,
};
