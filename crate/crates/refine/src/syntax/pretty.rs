//! Printers producing concrete syntax that reparses to the same tree.
//!
//! Parser-canonical trees round-trip exactly: sequences are right-nested,
//! non-empty sequence literals are append chains, and negated integer
//! literals are folded. Programmatically built trees outside that fragment
//! still print readably but may normalize on reparse.

use std::fmt::Write as _;

use crate::syntax::ast::*;

// Expression precedence levels, mirroring the parser.
const P_IMPLIES: u8 = 1;
const P_OR: u8 = 2;
const P_AND: u8 = 3;
const P_CMP: u8 = 4;
const P_APPEND: u8 = 5;
const P_CONCAT: u8 = 6;
const P_ADD: u8 = 7;
const P_MUL: u8 = 8;
const P_UNARY: u8 = 9;
const P_INDEX: u8 = 10;
const P_ATOM: u8 = 11;

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(op, _, _) => match op {
            BinOp::Implies => P_IMPLIES,
            BinOp::Or => P_OR,
            BinOp::And => P_AND,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le => P_CMP,
            BinOp::Append => P_APPEND,
            BinOp::Concat => P_CONCAT,
            BinOp::Add | BinOp::Sub => P_ADD,
            BinOp::Mul => P_MUL,
            BinOp::Index => P_INDEX,
        },
        Expr::Unary(UnOp::Len, _) => P_ATOM,
        Expr::Unary(_, _) => P_UNARY,
        _ => P_ATOM,
    }
}

fn bin_sym(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Eq => "==",
        BinOp::Ne => "!=",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::And => "&&",
        BinOp::Or => "||",
        BinOp::Implies => "==>",
        BinOp::Append => ":",
        BinOp::Concat => "++",
        BinOp::Index => unreachable!("printed as postfix"),
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min_prec: u8) {
    let prec = expr_prec(e);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Expr::Seq(es) => {
            out.push('[');
            for (i, el) in es.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, el, 0);
            }
            out.push(']');
        }
        Expr::Var(x) | Expr::GhostAddr(x) | Expr::GhostRead(x) => out.push_str(x),
        Expr::Unary(UnOp::Len, inner) => {
            out.push('|');
            write_expr(out, inner, 0);
            out.push('|');
        }
        Expr::Unary(UnOp::Neg, inner) => {
            out.push('-');
            write_expr(out, inner, P_UNARY);
        }
        Expr::Unary(UnOp::Not, inner) => {
            out.push('!');
            write_expr(out, inner, P_UNARY);
        }
        Expr::Binary(BinOp::Index, base, idx) => {
            write_expr(out, base, P_INDEX);
            out.push('[');
            write_expr(out, idx, 0);
            out.push(']');
        }
        Expr::Binary(op, l, r) => {
            let right_assoc = matches!(op, BinOp::Implies | BinOp::Append);
            let non_assoc = matches!(op, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le);
            let (lp, rp) = if right_assoc {
                (prec + 1, prec)
            } else if non_assoc {
                (prec + 1, prec + 1)
            } else {
                (prec, prec + 1)
            };
            write_expr(out, l, lp);
            let _ = write!(out, " {} ", bin_sym(*op));
            write_expr(out, r, rp);
        }
    }
    if parens {
        out.push(')');
    }
}

// Assertion precedence: && < -* < ** < atoms.
const A_AND: u8 = 1;
const A_WAND: u8 = 2;
const A_SEP: u8 = 3;
const A_ATOM: u8 = 4;

fn assn_prec(a: &Assertion) -> u8 {
    match a {
        Assertion::And(..) => A_AND,
        Assertion::Wand(..) => A_WAND,
        Assertion::Sep(..) => A_SEP,
        _ => A_ATOM,
    }
}

pub fn assertion_to_string(a: &Assertion) -> String {
    let mut s = String::new();
    write_assn(&mut s, a, 0);
    s
}

fn write_assn(out: &mut String, a: &Assertion, min_prec: u8) {
    let prec = assn_prec(a);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match a {
        Assertion::Expr(e) => write_expr(out, e, P_APPEND),
        Assertion::And(l, r) => {
            write_assn(out, l, A_AND + 1);
            out.push_str(" && ");
            // && is parsed left-associatively; nesting on the right needs parens
            write_assn(out, r, A_AND + 1);
        }
        Assertion::Not(b) => {
            out.push_str("!(");
            write_assn(out, b, 0);
            out.push(')');
        }
        Assertion::Forall(x, ty, b) | Assertion::Exists(x, ty, b) => {
            let kw = if matches!(a, Assertion::Forall(..)) {
                "forall"
            } else {
                "exists"
            };
            out.push('(');
            let _ = write!(out, "{kw} {x}");
            if let Some(ty) = ty {
                let _ = write!(out, ": {ty}");
            }
            out.push_str(" :: ");
            write_assn(out, b, 0);
            out.push(')');
        }
        Assertion::Emp => out.push_str("emp"),
        Assertion::PointsTo(e, p, v) => {
            write_expr(out, e, P_APPEND);
            if p.is_full() {
                out.push_str(" |-> ");
            } else {
                let _ = write!(out, " |-({p})-> ");
            }
            write_expr(out, v, P_APPEND);
        }
        Assertion::Sep(l, r) => {
            write_assn(out, l, A_SEP);
            out.push_str(" ** ");
            write_assn(out, r, A_SEP + 1);
        }
        Assertion::Wand(l, r) => {
            write_assn(out, l, A_WAND + 1);
            out.push_str(" -* ");
            write_assn(out, r, A_WAND);
        }
        Assertion::IterSep(parts) => {
            out.push_str("bigstar { ");
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_assn(out, p, 0);
            }
            out.push_str(" }");
        }
    }
    if parens {
        out.push(')');
    }
}

pub fn command_to_string(c: &Command) -> String {
    let mut s = String::new();
    write_stmts(&mut s, c, 0);
    s
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Writes a command as a statement list (no surrounding braces).
fn write_stmts(out: &mut String, c: &Command, level: usize) {
    let mut stmts: Vec<String> = Vec::new();
    collect_stmts(c, level, &mut stmts);
    for (i, s) in stmts.iter().enumerate() {
        indent(out, level);
        out.push_str(s);
        if i + 1 < stmts.len() {
            out.push(';');
        }
        out.push('\n');
    }
}

fn collect_stmts(c: &Command, level: usize, out: &mut Vec<String>) {
    match c {
        Command::Seq { first, second, mid } => {
            if first.is_skip() && mid.is_some() {
                // leading assert
                out.push(format!("assert {}", assertion_to_string(mid.as_ref().unwrap())));
            } else {
                collect_stmts(first, level, out);
                if let Some(m) = mid {
                    out.push(format!("assert {}", assertion_to_string(m)));
                }
            }
            collect_stmts(second, level, out);
        }
        other => out.push(stmt_to_string(other, level)),
    }
}

fn block_to_string(c: &Command, level: usize) -> String {
    let mut s = String::from("{\n");
    write_stmts(&mut s, c, level + 1);
    indent(&mut s, level);
    s.push('}');
    s
}

fn stmt_to_string(c: &Command, level: usize) -> String {
    match c {
        Command::Skip => "skip".to_string(),
        Command::Assign(x, e) => format!("{x} := {}", expr_to_string(e)),
        Command::Write(t, e) => format!("[{}] := {}", expr_to_string(t), expr_to_string(e)),
        Command::Read(x, e) => format!("{x} := [{}]", expr_to_string(e)),
        Command::Alloc(x, e) => format!("new({x}, {})", expr_to_string(e)),
        Command::Free(e) => format!("free({})", expr_to_string(e)),
        Command::Print(e) => format!("print({})", expr_to_string(e)),
        Command::GhostAssign(g, e) => format!("ghost {g} := {}", expr_to_string(e)),
        Command::Seq { .. } => unreachable!("handled by collect_stmts"),
        Command::Ite(g, t, e) => {
            let mut s = format!("if {} {}", expr_to_string(g), block_to_string(t, level));
            if !e.is_skip() {
                s.push_str(&format!(" else {}", block_to_string(e, level)));
            }
            s
        }
        Command::While { guard, inv, body } => {
            let mut s = format!("while {}", expr_to_string(guard));
            if let Some(i) = inv {
                s.push_str(&format!(" inv {}", assertion_to_string(i)));
            }
            s.push(' ');
            s.push_str(&block_to_string(body, level));
            s
        }
        Command::Par {
            left,
            right,
            left_spec,
            right_spec,
        } => {
            let branch = |spec: &Option<BranchSpec>, body: &Command| {
                let mut s = String::new();
                if let Some(sp) = spec {
                    s.push_str(&format!(
                        "requires {} ensures {} ",
                        assertion_to_string(&sp.requires),
                        assertion_to_string(&sp.ensures)
                    ));
                }
                s.push_str(&block_to_string(body, level));
                s
            };
            format!(
                "par {} {}",
                branch(left_spec, left),
                branch(right_spec, right)
            )
        }
        Command::LockDecl { lock, inv, body } => {
            let mut s = format!("lock {lock}");
            if let Some(i) = inv {
                s.push_str(&format!(" inv {}", assertion_to_string(i)));
            }
            s.push(' ');
            s.push_str(&block_to_string(body, level));
            s
        }
        Command::With { lock, guard, body } => format!(
            "with {lock} when {} {}",
            expr_to_string(guard),
            block_to_string(body, level)
        ),
        Command::Within { lock, body } => {
            // runtime-only; printed for reports, not reparseable
            format!("within {lock} {}", block_to_string(body, level))
        }
        Command::InitBlock { inv, body } => {
            let mut s = String::from("init");
            if let Some(i) = inv {
                s.push_str(&format!(" inv {}", assertion_to_string(i)));
            }
            s.push(' ');
            s.push_str(&block_to_string(body, level));
            s
        }
        Command::NextBlock(body) => format!("next {}", block_to_string(body, level)),
    }
}

pub fn program_to_string(p: &Program) -> String {
    let mut s = String::new();
    for g in &p.ghost_vars {
        let _ = writeln!(s, "ghost {g};");
    }
    if let Some(r) = &p.requires {
        let _ = writeln!(s, "requires {};", assertion_to_string(r));
    }
    if let Some(e) = &p.ensures {
        let _ = writeln!(s, "ensures {};", assertion_to_string(e));
    }
    s.push('\n');
    write_stmts(&mut s, &p.body, 0);
    s
}

pub fn ats_to_string(spec: &AtsSpec) -> String {
    let mut s = String::from("vars { ");
    for (i, (name, ty)) in spec.vars.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{name}: {ty}");
    }
    s.push_str(" }\n");
    let _ = writeln!(s, "init {{ {} }}", assertion_to_string(&spec.init));
    let _ = writeln!(s, "next {{ {} }}", assertion_to_string(&spec.next));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parser::{parse_assertion, parse_command, parse_program};
    use std::collections::BTreeSet;

    fn roundtrip_assn(src: &str) {
        let ghosts: BTreeSet<String> = ["count".to_string()].into_iter().collect();
        let a = parse_assertion(src, &ghosts).unwrap();
        let printed = assertion_to_string(&a);
        let b = parse_assertion(&printed, &ghosts)
            .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
        assert_eq!(a, b, "round trip of `{src}` via `{printed}`");
    }

    #[test]
    fn assertion_round_trips() {
        roundtrip_assn("emp");
        roundtrip_assn("x == 1 && y < 2");
        roundtrip_assn("count |-(2/3)-> 5 ** stdOut |-> []");
        roundtrip_assn("count |-> _");
        roundtrip_assn("acc(count, 1/3)");
        roundtrip_assn("(exists y: int :: count |-> y && y < 3)");
        roundtrip_assn("(x |-> 1) -* (x |-> 1 ** emp)");
        roundtrip_assn("bigstar { x |-> 1, y |-> 2 }");
        roundtrip_assn("!(x == 1) && (forall v: bool :: v || !v)");
        roundtrip_assn("x == (1 : [])");
        roundtrip_assn("stdOut |-> (3 : s)");
    }

    #[test]
    fn command_round_trips() {
        let ghosts: BTreeSet<String> = ["count".to_string()].into_iter().collect();
        for src in [
            "x := 1;\nskip",
            "x := [y];\nfree(y)",
            "new(p, 0);\n[p] := p",
            "if x == 0 { x := 1 } else { x := 2 }",
            "while x < 3 inv x <= 3 { x := x + 1 }",
            "par requires emp ensures emp { x := 1 } { y := 2 }",
            "lock m inv acc(count, 1/3) { with m when true { ghost count := count + 1 } }",
            "init inv count |-(2/3)-> _ { next { print(2 * c) } }",
            "assert x == 0;\nx := 1;\nassert x == 1",
            "x := 1 : []",
        ] {
            let c = parse_command(src, &ghosts).unwrap();
            let printed = command_to_string(&c);
            let c2 = parse_command(&printed, &ghosts)
                .unwrap_or_else(|e| panic!("reparse of `{printed}` failed: {e}"));
            assert_eq!(c, c2, "round trip of `{src}` via `{printed}`");
        }
    }

    #[test]
    fn program_round_trips() {
        let src = "ghost count;\nrequires stdOut |-> [] ** count |-> _;\nensures true;\n\nghost count := 0;\ninit inv count |-(2/3)-> _ ** stdOut |-> _ { skip }\n";
        let p = parse_program(src).unwrap();
        let printed = program_to_string(&p);
        let p2 = parse_program(&printed).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn within_is_rejected_in_source() {
        let err = parse_command("within m { skip }", &BTreeSet::new()).unwrap_err();
        assert!(err.to_string().contains("within"));
    }
}
