//! Hand-rolled lexer shared by the program, assertion, and spec parsers.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Colon,
    ColonColon,
    Underscore,
    // operators
    Assign,    // :=
    Mapsto,    // |->
    MapstoL,   // |-(
    MapstoR,   // )->
    SepStar,   // **
    Star,      // *
    Wand,      // -*
    Plus,
    Minus,
    Concat,    // ++
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    Implies,   // ==>
    Bar,       // |  (sequence length |E|)
    Slash,     // /  (permission fractions)
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Semi => write!(f, "`;`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::ColonColon => write!(f, "`::`"),
            Tok::Underscore => write!(f, "`_`"),
            Tok::Assign => write!(f, "`:=`"),
            Tok::Mapsto => write!(f, "`|->`"),
            Tok::MapstoL => write!(f, "`|-(`"),
            Tok::MapstoR => write!(f, "`)->`"),
            Tok::SepStar => write!(f, "`**`"),
            Tok::Star => write!(f, "`*`"),
            Tok::Wand => write!(f, "`-*`"),
            Tok::Plus => write!(f, "`+`"),
            Tok::Minus => write!(f, "`-`"),
            Tok::Concat => write!(f, "`++`"),
            Tok::EqEq => write!(f, "`==`"),
            Tok::Ne => write!(f, "`!=`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Le => write!(f, "`<=`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Ge => write!(f, "`>=`"),
            Tok::AndAnd => write!(f, "`&&`"),
            Tok::OrOr => write!(f, "`||`"),
            Tok::Bang => write!(f, "`!`"),
            Tok::Implies => write!(f, "`==>`"),
            Tok::Bar => write!(f, "`|`"),
            Tok::Slash => write!(f, "`/`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{span}: unexpected character `{ch}`")]
    UnexpectedChar { ch: char, span: Span },
    #[error("{span}: integer literal out of range")]
    IntOutOfRange { span: Span },
    #[error("{span}: expected {expected}, found {found}")]
    UnexpectedToken {
        expected: String,
        found: Tok,
        span: Span,
    },
    #[error("unexpected end of input (expected {expected})")]
    UnexpectedEof { expected: String },
    #[error("{span}: {msg}")]
    Invalid { msg: String, span: Span },
}

pub type ParseResult<T> = Result<T, ParseError>;

pub fn lex(src: &str) -> ParseResult<Vec<(Tok, Span)>> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if let Some(c) = c {
                if c == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let span = Span { line, col };
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '/' => {
                bump!();
                if chars.peek() == Some(&'/') {
                    while let Some(&d) = chars.peek() {
                        if d == '\n' {
                            break;
                        }
                        bump!();
                    }
                } else {
                    out.push((Tok::Slash, span));
                }
            }
            '0'..='9' => {
                let mut n: i64 = 0;
                while let Some(&d) = chars.peek() {
                    if let Some(v) = d.to_digit(10) {
                        n = n
                            .checked_mul(10)
                            .and_then(|n| n.checked_add(v as i64))
                            .ok_or(ParseError::IntOutOfRange { span })?;
                        bump!();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Int(n), span));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        s.push(d);
                        bump!();
                    } else {
                        break;
                    }
                }
                // primed identifiers (ATS next-state variables)
                while chars.peek() == Some(&'\'') {
                    s.push('\'');
                    bump!();
                }
                if s == "_" {
                    out.push((Tok::Underscore, span));
                } else {
                    out.push((Tok::Ident(s), span));
                }
            }
            _ => {
                bump!();
                let next = chars.peek().copied();
                let tok = match (c, next) {
                    ('(', _) => Tok::LParen,
                    (')', Some('-')) => {
                        // `)->` closes a fractional points-to
                        bump!();
                        if chars.peek() == Some(&'>') {
                            bump!();
                            Tok::MapstoR
                        } else {
                            return Err(ParseError::UnexpectedChar { ch: '-', span });
                        }
                    }
                    (')', _) => Tok::RParen,
                    ('{', _) => Tok::LBrace,
                    ('}', _) => Tok::RBrace,
                    ('[', _) => Tok::LBracket,
                    (']', _) => Tok::RBracket,
                    (';', _) => Tok::Semi,
                    (',', _) => Tok::Comma,
                    (':', Some('=')) => {
                        bump!();
                        Tok::Assign
                    }
                    (':', Some(':')) => {
                        bump!();
                        Tok::ColonColon
                    }
                    (':', _) => Tok::Colon,
                    ('*', Some('*')) => {
                        bump!();
                        Tok::SepStar
                    }
                    ('*', _) => Tok::Star,
                    ('-', Some('*')) => {
                        bump!();
                        Tok::Wand
                    }
                    ('-', _) => Tok::Minus,
                    ('+', Some('+')) => {
                        bump!();
                        Tok::Concat
                    }
                    ('+', _) => Tok::Plus,
                    ('=', Some('=')) => {
                        bump!();
                        if chars.peek() == Some(&'>') {
                            bump!();
                            Tok::Implies
                        } else {
                            Tok::EqEq
                        }
                    }
                    ('!', Some('=')) => {
                        bump!();
                        Tok::Ne
                    }
                    ('!', _) => Tok::Bang,
                    ('<', Some('=')) => {
                        bump!();
                        Tok::Le
                    }
                    ('<', _) => Tok::Lt,
                    ('>', Some('=')) => {
                        bump!();
                        Tok::Ge
                    }
                    ('>', _) => Tok::Gt,
                    ('&', Some('&')) => {
                        bump!();
                        Tok::AndAnd
                    }
                    ('|', Some('|')) => {
                        bump!();
                        Tok::OrOr
                    }
                    ('|', Some('-')) => {
                        bump!();
                        match chars.peek() {
                            Some('>') => {
                                bump!();
                                Tok::Mapsto
                            }
                            Some('(') => {
                                bump!();
                                Tok::MapstoL
                            }
                            _ => return Err(ParseError::UnexpectedChar { ch: '-', span }),
                        }
                    }
                    ('|', _) => Tok::Bar,
                    (ch, _) => return Err(ParseError::UnexpectedChar { ch, span }),
                };
                out.push((tok, span));
            }
        }
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|(t, _)| t).collect()
    }

    #[test]
    fn lex_points_to_forms() {
        assert_eq!(
            toks("x |-> 1"),
            vec![Tok::Ident("x".into()), Tok::Mapsto, Tok::Int(1), Tok::Eof]
        );
        assert_eq!(
            toks("x |-(1/2)-> y"),
            vec![
                Tok::Ident("x".into()),
                Tok::MapstoL,
                Tok::Int(1),
                Tok::Slash,
                Tok::Int(2),
                Tok::MapstoR,
                Tok::Ident("y".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn lex_operators() {
        assert_eq!(
            toks("a ** b -* c ==> d"),
            vec![
                Tok::Ident("a".into()),
                Tok::SepStar,
                Tok::Ident("b".into()),
                Tok::Wand,
                Tok::Ident("c".into()),
                Tok::Implies,
                Tok::Ident("d".into()),
                Tok::Eof
            ]
        );
    }

    #[test]
    fn lex_primed_idents() {
        assert_eq!(
            toks("count'"),
            vec![Tok::Ident("count'".into()), Tok::Eof]
        );
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(toks("x // hi\n y"), toks("x y"));
    }
}
