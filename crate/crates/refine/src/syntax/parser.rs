//! Recursive-descent parsers for programs (`.rimp`), transition-system
//! specs (`.rats`), and standalone assertions/commands (derivation files).
//!
//! Notes on the concrete syntax:
//! - `**` is separating conjunction, `*` is multiplication, `-*` is the
//!   magic wand.
//! - `x := [E]` is a heap read when the bracket closes the statement;
//!   singleton sequence literals in command position are written `e : []`.
//! - `or`/`==>`/wildcard points-to/`acc`/`alloc` are sugar and are
//!   expanded while parsing.
//! - `within` is a runtime-only form and is rejected in source.

use std::collections::BTreeSet;

use std::sync::Arc;

use crate::syntax::ast::*;
use crate::syntax::lexer::{lex, ParseError, ParseResult, Span, Tok};
use crate::value::{Perm, STDOUT};

const KEYWORDS: &[&str] = &[
    "skip", "if", "else", "while", "inv", "par", "requires", "ensures", "lock", "with", "when",
    "init", "next", "print", "ghost", "assert", "free", "new", "emp", "true", "false", "forall",
    "exists", "int", "bool", "seq", "addr", "acc", "alloc", "bigstar", "within", "vars", "pre",
    "post",
];

/// Whether identifiers name ghost cells by content (commands) or by
/// address (assertions).
#[derive(Clone, Copy, PartialEq)]
enum GhostMode {
    Read,
    Addr,
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    ghosts: BTreeSet<String>,
    bound: Vec<String>,
    fresh: u32,
}

impl Parser {
    fn new(src: &str, ghosts: BTreeSet<String>) -> ParseResult<Parser> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            ghosts,
            bound: Vec::new(),
            fresh: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> ParseResult<()> {
        if self.peek() == &t {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(&t.to_string()))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        if self.peek() == &Tok::Eof {
            ParseError::UnexpectedEof {
                expected: expected.to_string(),
            }
        } else {
            ParseError::UnexpectedToken {
                expected: expected.to_string(),
                found: self.peek().clone(),
                span: self.span(),
            }
        }
    }

    fn invalid(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Invalid {
            msg: msg.into(),
            span: self.span(),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> ParseResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self) -> ParseResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                if KEYWORDS.contains(&s.as_str()) {
                    Err(self.invalid(format!("`{s}` is a keyword")))
                } else {
                    self.next();
                    Ok(s)
                }
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn fresh_name(&mut self) -> String {
        let n = format!("_w{}", self.fresh);
        self.fresh += 1;
        n
    }

    fn resolve(&self, name: &str, mode: GhostMode) -> Expr {
        if self.bound.iter().rev().any(|b| b == name) {
            Expr::Var(name.to_string())
        } else if self.ghosts.contains(name) {
            match mode {
                GhostMode::Read => Expr::GhostRead(name.to_string()),
                GhostMode::Addr => Expr::GhostAddr(name.to_string()),
            }
        } else {
            Expr::Var(name.to_string())
        }
    }

    // ----- expressions ---------------------------------------------------

    fn expr(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        self.expr_implies(mode)
    }

    fn expr_implies(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let lhs = self.expr_or(mode)?;
        if self.eat(&Tok::Implies) {
            let rhs = self.expr_implies(mode)?;
            Ok(Expr::bin(BinOp::Implies, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn expr_or(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut lhs = self.expr_and(mode)?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.expr_and(mode)?;
            lhs = Expr::bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_and(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut lhs = self.expr_cmp(mode)?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.expr_cmp(mode)?;
            lhs = Expr::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_cmp(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let lhs = self.expr_append(mode)?;
        let op = match self.peek() {
            Tok::EqEq => Some(BinOp::Eq),
            Tok::Ne => Some(BinOp::Ne),
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            Tok::Gt | Tok::Ge => Some(BinOp::Lt), // flipped below
            _ => None,
        };
        if let Some(op) = op {
            let flip = matches!(self.peek(), Tok::Gt | Tok::Ge);
            let ge = matches!(self.peek(), Tok::Ge);
            self.next();
            let rhs = self.expr_append(mode)?;
            Ok(if flip {
                // a > b  ⇝  b < a ; a >= b  ⇝  b <= a
                Expr::bin(if ge { BinOp::Le } else { BinOp::Lt }, rhs, lhs)
            } else {
                Expr::bin(op, lhs, rhs)
            })
        } else {
            Ok(lhs)
        }
    }

    fn expr_append(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        // `e : s` appends e at the end of s; right-associative.
        let lhs = self.expr_concat(mode)?;
        if self.eat(&Tok::Colon) {
            let rhs = self.expr_append(mode)?;
            Ok(Expr::bin(BinOp::Append, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn expr_concat(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut lhs = self.expr_add(mode)?;
        while self.eat(&Tok::Concat) {
            let rhs = self.expr_add(mode)?;
            lhs = Expr::bin(BinOp::Concat, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_add(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut lhs = self.expr_mul(mode)?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.expr_mul(mode)?;
                lhs = Expr::bin(BinOp::Add, lhs, rhs);
            } else if self.peek() == &Tok::Minus && self.peek2() != &Tok::Star {
                self.next();
                let rhs = self.expr_mul(mode)?;
                lhs = Expr::bin(BinOp::Sub, lhs, rhs);
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn expr_mul(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut lhs = self.expr_unary(mode)?;
        while self.eat(&Tok::Star) {
            let rhs = self.expr_unary(mode)?;
            lhs = Expr::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_unary(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        if self.eat(&Tok::Minus) {
            let e = self.expr_unary(mode)?;
            Ok(match e {
                Expr::Int(n) => Expr::Int(-n),
                e => Expr::Unary(UnOp::Neg, Box::new(e)),
            })
        } else if self.eat(&Tok::Bang) {
            let e = self.expr_unary(mode)?;
            Ok(Expr::Unary(UnOp::Not, Box::new(e)))
        } else {
            self.expr_postfix(mode)
        }
    }

    fn expr_postfix(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        let mut e = self.expr_primary(mode)?;
        while self.peek() == &Tok::LBracket {
            self.next();
            let idx = self.expr(mode)?;
            self.expect(Tok::RBracket)?;
            e = Expr::bin(BinOp::Index, e, idx);
        }
        Ok(e)
    }

    fn expr_primary(&mut self, mode: GhostMode) -> ParseResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.next();
                Ok(Expr::Int(n))
            }
            Tok::Ident(s) if s == "true" => {
                self.next();
                Ok(Expr::Bool(true))
            }
            Tok::Ident(s) if s == "false" => {
                self.next();
                Ok(Expr::Bool(false))
            }
            Tok::Ident(s) => {
                if KEYWORDS.contains(&s.as_str()) {
                    return Err(self.invalid(format!("`{s}` is a keyword")));
                }
                self.next();
                Ok(self.resolve(&s, mode))
            }
            Tok::LParen => {
                self.next();
                let e = self.expr(mode)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::LBracket => {
                self.next();
                // Sequence literal. Non-empty literals are canonicalized to
                // appends on the empty sequence so the printed form always
                // reparses to the same tree.
                let mut elems = Vec::new();
                if self.peek() != &Tok::RBracket {
                    loop {
                        elems.push(self.expr(mode)?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                let mut e = Expr::Seq(vec![]);
                for el in elems {
                    e = Expr::bin(BinOp::Append, el, e);
                }
                Ok(e)
            }
            Tok::Bar => {
                self.next();
                let e = self.expr(mode)?;
                self.expect(Tok::Bar)?;
                Ok(Expr::Unary(UnOp::Len, Box::new(e)))
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    // ----- assertions ----------------------------------------------------

    fn assertion(&mut self) -> ParseResult<Assertion> {
        self.assn_implies()
    }

    fn assn_implies(&mut self) -> ParseResult<Assertion> {
        let lhs = self.assn_or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.assn_implies()?;
            Ok(Assertion::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn assn_or(&mut self) -> ParseResult<Assertion> {
        let mut lhs = self.assn_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.assn_and()?;
            lhs = Assertion::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn assn_and(&mut self) -> ParseResult<Assertion> {
        let mut lhs = self.assn_wand()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.assn_wand()?;
            lhs = Assertion::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn assn_wand(&mut self) -> ParseResult<Assertion> {
        let lhs = self.assn_sep()?;
        if self.eat(&Tok::Wand) {
            let rhs = self.assn_wand()?;
            Ok(Assertion::Wand(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn assn_sep(&mut self) -> ParseResult<Assertion> {
        let mut lhs = self.assn_prim()?;
        while self.eat(&Tok::SepStar) {
            let rhs = self.assn_prim()?;
            lhs = Assertion::sep(lhs, rhs);
        }
        Ok(lhs)
    }

    fn ty(&mut self) -> ParseResult<Ty> {
        for (kw, ty) in [
            ("int", Ty::Int),
            ("bool", Ty::Bool),
            ("seq", Ty::Seq),
            ("addr", Ty::Addr),
        ] {
            if self.eat_kw(kw) {
                return Ok(ty);
            }
        }
        Err(self.unexpected("type (`int`, `bool`, `seq`, or `addr`)"))
    }

    fn perm(&mut self) -> ParseResult<Perm> {
        let span = self.span();
        let num = match self.next() {
            Tok::Int(n) => n,
            _ => {
                return Err(ParseError::Invalid {
                    msg: "expected permission fraction".into(),
                    span,
                })
            }
        };
        let den = if self.eat(&Tok::Slash) {
            match self.next() {
                Tok::Int(n) => n,
                _ => {
                    return Err(ParseError::Invalid {
                        msg: "expected permission denominator".into(),
                        span,
                    })
                }
            }
        } else {
            1
        };
        Perm::new(num, den)
            .filter(Perm::is_positive)
            .ok_or(ParseError::Invalid {
                msg: format!("invalid permission {num}/{den}: must be in (0, 1]"),
                span,
            })
    }

    fn quantifier(&mut self, forall: bool) -> ParseResult<Assertion> {
        let x = self.ident()?;
        let ty = if self.eat(&Tok::Colon) {
            Some(self.ty()?)
        } else {
            None
        };
        self.expect(Tok::ColonColon)?;
        self.bound.push(x.clone());
        let body = self.assertion();
        self.bound.pop();
        let body = Box::new(body?);
        Ok(if forall {
            Assertion::Forall(x, ty, body)
        } else {
            Assertion::Exists(x, ty, body)
        })
    }

    fn acc_like(&mut self) -> ParseResult<Assertion> {
        self.expect(Tok::LParen)?;
        let e = self.expr(GhostMode::Addr)?;
        let p = if self.eat(&Tok::Comma) {
            self.perm()?
        } else {
            Perm::full()
        };
        self.expect(Tok::RParen)?;
        let fresh = self.fresh_name();
        Ok(Assertion::acc(e, p, &fresh))
    }

    /// Can the token continue an expression after a closing paren?
    fn continues_expr(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Plus
                | Tok::Minus
                | Tok::Star
                | Tok::Concat
                | Tok::Colon
                | Tok::EqEq
                | Tok::Ne
                | Tok::Lt
                | Tok::Le
                | Tok::Gt
                | Tok::Ge
                | Tok::LBracket
        )
    }

    fn assn_prim(&mut self) -> ParseResult<Assertion> {
        if self.eat_kw("emp") {
            return Ok(Assertion::Emp);
        }
        if self.is_kw("forall") {
            self.next();
            return self.quantifier(true);
        }
        if self.is_kw("exists") {
            self.next();
            return self.quantifier(false);
        }
        if self.eat(&Tok::Bang) {
            let a = self.assn_prim()?;
            return Ok(Assertion::not(a));
        }
        if self.is_kw("acc") || self.is_kw("alloc") {
            self.next();
            return self.acc_like();
        }
        if self.eat_kw("bigstar") {
            self.expect(Tok::LBrace)?;
            let mut parts = Vec::new();
            if self.peek() != &Tok::RBrace {
                loop {
                    parts.push(self.assertion()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(Tok::RBrace)?;
            return Ok(Assertion::IterSep(parts));
        }
        if self.peek() == &Tok::LParen {
            // Could open a nested assertion or a parenthesized expression.
            let save = self.pos;
            self.next();
            let inner = self.assertion()?;
            self.expect(Tok::RParen)?;
            if let Assertion::Expr(_) = &inner {
                if self.continues_expr() || self.peek() == &Tok::Mapsto || self.peek() == &Tok::MapstoL
                {
                    // Reparse as an expression atom.
                    self.pos = save;
                    return self.expr_atom_assertion();
                }
            }
            return Ok(inner);
        }
        self.expr_atom_assertion()
    }

    /// An expression atom, possibly extended into a points-to assertion.
    /// Parses only up to comparison precedence: the boolean connectives
    /// belong to the assertion grammar so that spatial atoms can follow them.
    fn expr_atom_assertion(&mut self) -> ParseResult<Assertion> {
        let e = self.expr_cmp(GhostMode::Addr)?;
        let p = if self.eat(&Tok::Mapsto) {
            Some(Perm::full())
        } else if self.eat(&Tok::MapstoL) {
            let p = self.perm()?;
            self.expect(Tok::MapstoR)?;
            Some(p)
        } else {
            None
        };
        match p {
            None => Ok(Assertion::Expr(e)),
            Some(p) => {
                if self.eat(&Tok::Underscore) {
                    let fresh = self.fresh_name();
                    Ok(Assertion::points_to_wild(e, p, &fresh))
                } else {
                    let v = self.expr_append(GhostMode::Addr)?;
                    Ok(Assertion::PointsTo(e, p, v))
                }
            }
        }
    }

    // ----- commands ------------------------------------------------------

    fn block(&mut self) -> ParseResult<Command> {
        self.expect(Tok::LBrace)?;
        let c = self.stmt_list(&Tok::RBrace)?;
        self.expect(Tok::RBrace)?;
        Ok(c)
    }

    fn stmt_list(&mut self, end: &Tok) -> ParseResult<Command> {
        enum Item {
            Cmd(Command),
            Assert(Assertion),
        }
        let mut items = Vec::new();
        while self.peek() != end && self.peek() != &Tok::Eof {
            if self.eat_kw("assert") {
                items.push(Item::Assert(self.assertion()?));
            } else {
                items.push(Item::Cmd(self.stmt()?));
            }
            if !self.eat(&Tok::Semi) {
                break;
            }
        }
        // Fold into right-nested sequences, attaching `assert` annotations
        // as midconditions of the sequence node they follow. A leading or
        // trailing assert pairs with a `skip`.
        fn fold(items: Vec<Item>) -> Command {
            let mut it = items.into_iter().peekable();
            fold_iter(&mut it)
        }
        fn fold_iter(it: &mut std::iter::Peekable<std::vec::IntoIter<Item>>) -> Command {
            match it.next() {
                None => Command::Skip,
                Some(Item::Assert(m)) => Command::Seq {
                    first: Arc::new(Command::Skip),
                    second: Arc::new(fold_iter(it)),
                    mid: Some(m),
                },
                Some(Item::Cmd(c)) => {
                    if it.peek().is_none() {
                        return c;
                    }
                    let mid = match it.peek() {
                        Some(Item::Assert(_)) => match it.next() {
                            Some(Item::Assert(m)) => Some(m),
                            _ => unreachable!(),
                        },
                        _ => None,
                    };
                    Command::Seq {
                        first: Arc::new(c),
                        second: Arc::new(fold_iter(it)),
                        mid,
                    }
                }
            }
        }
        Ok(fold(items))
    }

    fn stmt(&mut self) -> ParseResult<Command> {
        if self.eat_kw("skip") {
            return Ok(Command::Skip);
        }
        if self.is_kw("within") {
            return Err(self.invalid("`within` is a runtime-internal form and cannot be written"));
        }
        if self.eat_kw("print") {
            self.expect(Tok::LParen)?;
            let e = self.expr(GhostMode::Read)?;
            self.expect(Tok::RParen)?;
            return Ok(Command::Print(e));
        }
        if self.eat_kw("free") {
            self.expect(Tok::LParen)?;
            let e = self.expr(GhostMode::Read)?;
            self.expect(Tok::RParen)?;
            return Ok(Command::Free(e));
        }
        if self.eat_kw("new") {
            self.expect(Tok::LParen)?;
            let x = self.ident()?;
            self.expect(Tok::Comma)?;
            let e = self.expr(GhostMode::Read)?;
            self.expect(Tok::RParen)?;
            return Ok(Command::Alloc(x, e));
        }
        if self.eat_kw("ghost") {
            let g = self.ident()?;
            if !self.ghosts.contains(&g) {
                return Err(self.invalid(format!("undeclared ghost variable `{g}`")));
            }
            self.expect(Tok::Assign)?;
            let e = self.expr(GhostMode::Read)?;
            return Ok(Command::GhostAssign(g, e));
        }
        if self.eat_kw("if") {
            let guard = self.expr(GhostMode::Read)?;
            let then = self.block()?;
            let els = if self.eat_kw("else") {
                self.block()?
            } else {
                Command::Skip
            };
            return Ok(Command::Ite(guard, Arc::new(then), Arc::new(els)));
        }
        if self.eat_kw("while") {
            let guard = self.expr(GhostMode::Read)?;
            let inv = if self.eat_kw("inv") {
                Some(self.assertion()?)
            } else {
                None
            };
            let body = self.block()?;
            return Ok(Command::While {
                guard,
                inv,
                body: Arc::new(body),
            });
        }
        if self.eat_kw("par") {
            let (left_spec, left) = self.par_branch()?;
            let (right_spec, right) = self.par_branch()?;
            return Ok(Command::Par {
                left: Arc::new(left),
                right: Arc::new(right),
                left_spec,
                right_spec,
            });
        }
        if self.eat_kw("lock") {
            let l = self.ident()?;
            let inv = if self.eat_kw("inv") {
                Some(self.assertion()?)
            } else {
                None
            };
            let body = self.block()?;
            return Ok(Command::LockDecl {
                lock: LockId::User(l),
                inv,
                body: Arc::new(body),
            });
        }
        if self.eat_kw("with") {
            let l = self.ident()?;
            self.expect_kw("when")?;
            let guard = self.expr(GhostMode::Read)?;
            let body = self.block()?;
            return Ok(Command::With {
                lock: LockId::User(l),
                guard,
                body: Arc::new(body),
            });
        }
        if self.eat_kw("init") {
            let inv = if self.eat_kw("inv") {
                Some(self.assertion()?)
            } else {
                None
            };
            let body = self.block()?;
            return Ok(Command::InitBlock {
                inv,
                body: Arc::new(body),
            });
        }
        if self.eat_kw("next") {
            let body = self.block()?;
            return Ok(Command::NextBlock(Arc::new(body)));
        }
        if self.peek() == &Tok::LBracket {
            // [E] := E'
            self.next();
            let target = self.expr(GhostMode::Read)?;
            self.expect(Tok::RBracket)?;
            self.expect(Tok::Assign)?;
            let rhs = self.expr(GhostMode::Read)?;
            return Ok(Command::Write(target, rhs));
        }
        // assignment / read / ghost assignment without keyword
        let x = self.ident()?;
        self.expect(Tok::Assign)?;
        if self.ghosts.contains(&x) {
            let e = self.expr(GhostMode::Read)?;
            return Ok(Command::GhostAssign(x, e));
        }
        if self.peek() == &Tok::LBracket {
            // Try a heap read `x := [E]` where the bracket closes the
            // statement; otherwise it is a sequence-literal expression.
            let save = self.pos;
            self.next();
            if self.peek() != &Tok::RBracket {
                if let Ok(e) = self.expr(GhostMode::Read) {
                    if self.peek() == &Tok::RBracket {
                        self.next();
                        if matches!(self.peek(), Tok::Semi | Tok::RBrace | Tok::Eof) {
                            return Ok(Command::Read(x, e));
                        }
                    }
                }
            }
            self.pos = save;
        }
        let e = self.expr(GhostMode::Read)?;
        Ok(Command::Assign(x, e))
    }

    fn par_branch(&mut self) -> ParseResult<(Option<BranchSpec>, Command)> {
        let spec = if self.eat_kw("requires") {
            let requires = self.assertion()?;
            self.expect_kw("ensures")?;
            let ensures = self.assertion()?;
            Some(BranchSpec { requires, ensures })
        } else {
            None
        };
        let body = self.block()?;
        Ok((spec, body))
    }

    // ----- top-level files -----------------------------------------------

    fn program(&mut self) -> ParseResult<Program> {
        let mut ghost_vars = Vec::new();
        let mut requires = None;
        let mut ensures = None;
        self.ghosts.insert(STDOUT.to_string());
        loop {
            if self.is_kw("ghost") && matches!(self.peek2(), Tok::Ident(_)) {
                // Distinguish the declaration `ghost g;` from the statement
                // `ghost g := E`.
                let save = self.pos;
                self.next();
                let name = self.ident()?;
                if self.eat(&Tok::Semi) {
                    if name == STDOUT {
                        return Err(self.invalid("`stdOut` is predeclared"));
                    }
                    if ghost_vars.contains(&name) {
                        return Err(self.invalid(format!("duplicate ghost variable `{name}`")));
                    }
                    ghost_vars.push(name.clone());
                    self.ghosts.insert(name);
                    continue;
                }
                self.pos = save;
                break;
            }
            if self.eat_kw("requires") {
                if requires.is_some() {
                    return Err(self.invalid("duplicate `requires` clause"));
                }
                requires = Some(self.assertion()?);
                self.expect(Tok::Semi)?;
                continue;
            }
            if self.eat_kw("ensures") {
                if ensures.is_some() {
                    return Err(self.invalid("duplicate `ensures` clause"));
                }
                ensures = Some(self.assertion()?);
                self.expect(Tok::Semi)?;
                continue;
            }
            break;
        }
        let body = self.stmt_list(&Tok::Eof)?;
        self.expect(Tok::Eof)?;
        Ok(Program {
            ghost_vars,
            requires,
            ensures,
            body,
        })
    }

    fn ats(&mut self) -> ParseResult<AtsSpec> {
        self.expect_kw("vars")?;
        self.expect(Tok::LBrace)?;
        let mut vars: Vec<(String, Ty)> = Vec::new();
        loop {
            let name = self.ident()?;
            if vars.iter().any(|(n, _)| n == &name) {
                return Err(self.invalid(format!("duplicate variable `{name}`")));
            }
            self.expect(Tok::Colon)?;
            let ty = self.ty()?;
            vars.push((name, ty));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        // In spec formulas every identifier is a logical variable.
        self.bound = vars.iter().map(|(n, _)| n.clone()).collect();
        let mut primed: Vec<String> = vars.iter().map(|(n, _)| format!("{n}'")).collect();

        self.expect_kw("init")?;
        self.expect(Tok::LBrace)?;
        let init = self.assertion()?;
        self.expect(Tok::RBrace)?;

        self.bound.append(&mut primed);
        self.expect_kw("next")?;
        self.expect(Tok::LBrace)?;
        let next = self.assertion()?;
        self.expect(Tok::RBrace)?;
        self.expect(Tok::Eof)?;

        let spec = AtsSpec { vars, init, next };
        validate_ats(&spec).map_err(|msg| self.invalid(msg))?;
        Ok(spec)
    }
}

fn is_fol(a: &Assertion) -> bool {
    match a {
        Assertion::Expr(_) => true,
        Assertion::And(l, r) => is_fol(l) && is_fol(r),
        Assertion::Not(b) => is_fol(b),
        Assertion::Forall(_, _, b) | Assertion::Exists(_, _, b) => is_fol(b),
        Assertion::Emp
        | Assertion::PointsTo(..)
        | Assertion::Sep(..)
        | Assertion::Wand(..)
        | Assertion::IterSep(_) => false,
    }
}

fn validate_ats(spec: &AtsSpec) -> Result<(), String> {
    if spec.vars.is_empty() {
        return Err("a spec needs at least one variable".into());
    }
    if !is_fol(&spec.init) || !is_fol(&spec.next) {
        return Err("spec formulas must be heap-free (no emp/|->/**/-*)".into());
    }
    let mut fvs = BTreeSet::new();
    collect_assertion_vars(&spec.init, &mut fvs);
    for v in &fvs {
        if v.ends_with('\'') {
            return Err(format!("primed variable `{v}` not allowed in init"));
        }
    }
    Ok(())
}

fn collect_assertion_vars(a: &Assertion, out: &mut BTreeSet<String>) {
    match a {
        Assertion::Expr(e) => e.free_vars(out),
        Assertion::And(l, r) | Assertion::Sep(l, r) | Assertion::Wand(l, r) => {
            collect_assertion_vars(l, out);
            collect_assertion_vars(r, out);
        }
        Assertion::Not(b) => collect_assertion_vars(b, out),
        Assertion::Forall(x, _, b) | Assertion::Exists(x, _, b) => {
            let mut inner = BTreeSet::new();
            collect_assertion_vars(b, &mut inner);
            inner.remove(x);
            out.extend(inner);
        }
        Assertion::Emp => {}
        Assertion::PointsTo(e, _, v) => {
            e.free_vars(out);
            v.free_vars(out);
        }
        Assertion::IterSep(parts) => parts.iter().for_each(|p| collect_assertion_vars(p, out)),
    }
}

/// Parses a `.rimp` program file.
pub fn parse_program(src: &str) -> ParseResult<Program> {
    Parser::new(src, BTreeSet::new())?.program()
}

/// Parses a `.rats` transition-system file.
pub fn parse_ats(src: &str) -> ParseResult<AtsSpec> {
    Parser::new(src, BTreeSet::new())?.ats()
}

/// Parses a standalone assertion, resolving the given names as ghost cells.
pub fn parse_assertion(src: &str, ghosts: &BTreeSet<String>) -> ParseResult<Assertion> {
    let mut ghosts = ghosts.clone();
    ghosts.insert(STDOUT.to_string());
    let mut p = Parser::new(src, ghosts)?;
    let a = p.assertion()?;
    p.expect(Tok::Eof)?;
    Ok(a)
}

/// Parses a standalone command (statement list), resolving ghost names.
pub fn parse_command(src: &str, ghosts: &BTreeSet<String>) -> ParseResult<Command> {
    let mut ghosts = ghosts.clone();
    ghosts.insert(STDOUT.to_string());
    let mut p = Parser::new(src, ghosts)?;
    let c = p.stmt_list(&Tok::Eof)?;
    p.expect(Tok::Eof)?;
    Ok(c)
}
