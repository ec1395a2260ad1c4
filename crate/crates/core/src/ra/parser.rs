//! Hand-written lexer and recursive-descent parser for the query language.
//!
//! ```text
//! query    := term (("union" | "minus") term)*
//! term     := unary ("join" ("[" pred "]")? unary)*
//! unary    := "project" "[" names "]" "(" query ")"
//!           | "select" "[" pred "]" "(" query ")"
//!           | "rename" "[" name "->" name ("," name "->" name)* "]" "(" query ")"
//!           | "groupby" "[" names? ";" agg ("," agg)* "]" "(" query ")"
//!           | "(" query ")" | name
//! agg      := FUNC "(" (name | "*") ")" "as" name
//! pred     := conj ("or" conj)*
//! conj     := neg ("and" neg)*
//! neg      := "not" neg | "(" pred ")" | "true" | "false" | operand relop operand
//! operand  := name | "@" name | "-"? number | 'string' | "true" | "false"
//! ```
//!
//! Keywords are case-insensitive; `--` starts a line comment.

use std::fmt;

use thiserror::Error;

use super::ast::{AggFunc, AggSpec, CmpOp, JoinKind, Operand, Predicate, Query};
use crate::value::{parse_rational, Rational, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Param(String),
    Int(i128),
    Rat(Rational),
    Str(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Semi,
    Arrow,
    Minus,
    Star,
    Op(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Param(s) => write!(f, "`@{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Rat(r) => write!(f, "`{r}`"),
            Tok::Str(s) => write!(f, "'{s}'"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Op(op) => write!(f, "`{}`", op.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, SyntaxError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| SyntaxError { line, column, message };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        let mut advance = |n: usize, i: &mut usize| {
            for _ in 0..n {
                if chars[*i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                *i += 1;
            }
        };
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        let next = chars.get(i + 1).copied();
        let tok = match c {
            '-' if next == Some('-') => {
                while i < chars.len() && chars[i] != '\n' {
                    advance(1, &mut i);
                }
                continue;
            }
            '-' if next == Some('>') => {
                advance(2, &mut i);
                Tok::Arrow
            }
            '→' => {
                advance(1, &mut i);
                Tok::Arrow
            }
            '-' => {
                advance(1, &mut i);
                Tok::Minus
            }
            '[' | ']' | '(' | ')' | ',' | ';' | '*' => {
                advance(1, &mut i);
                match c {
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    _ => Tok::Star,
                }
            }
            '=' => {
                advance(1, &mut i);
                Tok::Op(CmpOp::Eq)
            }
            '≠' => {
                advance(1, &mut i);
                Tok::Op(CmpOp::Ne)
            }
            '≤' => {
                advance(1, &mut i);
                Tok::Op(CmpOp::Le)
            }
            '≥' => {
                advance(1, &mut i);
                Tok::Op(CmpOp::Ge)
            }
            '!' if next == Some('=') => {
                advance(2, &mut i);
                Tok::Op(CmpOp::Ne)
            }
            '<' => match next {
                Some('=') => {
                    advance(2, &mut i);
                    Tok::Op(CmpOp::Le)
                }
                Some('>') => {
                    advance(2, &mut i);
                    Tok::Op(CmpOp::Ne)
                }
                _ => {
                    advance(1, &mut i);
                    Tok::Op(CmpOp::Lt)
                }
            },
            '>' => {
                if next == Some('=') {
                    advance(2, &mut i);
                    Tok::Op(CmpOp::Ge)
                } else {
                    advance(1, &mut i);
                    Tok::Op(CmpOp::Gt)
                }
            }
            '\'' => {
                advance(1, &mut i);
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(err(start_line, start_col, "unterminated string literal".into())),
                        Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                            s.push('\'');
                            advance(2, &mut i);
                        }
                        Some('\'') => {
                            advance(1, &mut i);
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i);
                        }
                    }
                }
                Tok::Str(s)
            }
            '@' => {
                advance(1, &mut i);
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i);
                }
                if start == i {
                    return Err(err(start_line, start_col, "expected a parameter name after `@`".into()));
                }
                Tok::Param(chars[start..i].iter().collect())
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    advance(1, &mut i);
                }
                let is_frac = |i: usize, sep: char| {
                    chars.get(i) == Some(&sep) && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                };
                let rational = if is_frac(i, '.') || is_frac(i, '/') {
                    advance(1, &mut i);
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        advance(1, &mut i);
                    }
                    true
                } else {
                    false
                };
                let text: String = chars[start..i].iter().collect();
                if rational {
                    Tok::Rat(
                        parse_rational(&text)
                            .ok_or_else(|| err(start_line, start_col, format!("bad number `{text}`")))?,
                    )
                } else {
                    Tok::Int(
                        text.parse()
                            .map_err(|_| err(start_line, start_col, format!("number `{text}` is too large")))?,
                    )
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    advance(1, &mut i);
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            other => return Err(err(start_line, start_col, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: start_line,
            column: start_col,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "project", "select", "rename", "join", "union", "minus", "groupby", "and", "or", "not", "true", "false", "as",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

/// Parses one query. Trailing input is an error.
pub fn parse(src: &str) -> Result<Query, SyntaxError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let q = p.query()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("`union`, `minus`, `join` or end of input"));
    }
    Ok(q)
}

/// Parses a standalone predicate, as used inside `select[...]`.
pub fn parse_predicate(src: &str) -> Result<Predicate, SyntaxError> {
    let mut p = Parser { toks: lex(src)?, pos: 0 };
    let pred = p.pred()?;
    if p.peek() != &Tok::Eof {
        return Err(p.unexpected("end of predicate"));
    }
    Ok(pred)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> SyntaxError {
        let s = &self.toks[self.pos];
        SyntaxError {
            line: s.line,
            column: s.column,
            message: format!("expected {wanted}, found {}", s.tok),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SyntaxError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&tok.to_string()))
        }
    }

    fn name(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn query(&mut self) -> Result<Query, SyntaxError> {
        let mut left = self.term()?;
        loop {
            if self.eat_kw("union") {
                let right = self.term()?;
                left = Query::Union(Box::new(left), Box::new(right));
            } else if self.eat_kw("minus") {
                let right = self.term()?;
                left = Query::Difference(Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn term(&mut self) -> Result<Query, SyntaxError> {
        let mut left = self.unary()?;
        while self.eat_kw("join") {
            let kind = if *self.peek() == Tok::LBracket {
                self.bump();
                let p = self.pred()?;
                self.expect(Tok::RBracket)?;
                JoinKind::Theta(p)
            } else {
                JoinKind::Natural
            };
            let right = self.unary()?;
            left = Query::Join {
                kind,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn body(&mut self) -> Result<Box<Query>, SyntaxError> {
        self.expect(Tok::LParen)?;
        let q = self.query()?;
        self.expect(Tok::RParen)?;
        Ok(Box::new(q))
    }

    fn names(&mut self, end: &Tok) -> Result<Vec<String>, SyntaxError> {
        let mut out = Vec::new();
        if self.peek() == end {
            return Ok(out);
        }
        loop {
            out.push(self.name()?);
            if *self.peek() != Tok::Comma {
                return Ok(out);
            }
            self.bump();
        }
    }

    fn unary(&mut self) -> Result<Query, SyntaxError> {
        if self.eat_kw("project") {
            self.expect(Tok::LBracket)?;
            let attrs = self.names(&Tok::RBracket)?;
            self.expect(Tok::RBracket)?;
            return Ok(Query::Project {
                attrs,
                input: self.body()?,
            });
        }
        if self.eat_kw("select") {
            self.expect(Tok::LBracket)?;
            let pred = self.pred()?;
            self.expect(Tok::RBracket)?;
            return Ok(Query::Select {
                pred,
                input: self.body()?,
            });
        }
        if self.eat_kw("rename") {
            self.expect(Tok::LBracket)?;
            let mut map = Vec::new();
            loop {
                let old = self.name()?;
                self.expect(Tok::Arrow)?;
                map.push((old, self.name()?));
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
            self.expect(Tok::RBracket)?;
            return Ok(Query::Rename {
                map,
                input: self.body()?,
            });
        }
        if self.eat_kw("groupby") {
            self.expect(Tok::LBracket)?;
            let group = self.names(&Tok::Semi)?;
            self.expect(Tok::Semi)?;
            let mut aggs = Vec::new();
            loop {
                aggs.push(self.agg()?);
                if *self.peek() != Tok::Comma {
                    break;
                }
                self.bump();
            }
            self.expect(Tok::RBracket)?;
            return Ok(Query::GroupAgg {
                group,
                aggs,
                input: self.body()?,
            });
        }
        if *self.peek() == Tok::LParen {
            return Ok(*self.body()?);
        }
        match self.peek() {
            Tok::Ident(s) if !is_keyword(s) => Ok(Query::Relation(self.name()?)),
            _ => Err(self.unexpected("a relation name, an operator or `(`")),
        }
    }

    fn agg(&mut self) -> Result<AggSpec, SyntaxError> {
        let func = match self.peek() {
            Tok::Ident(s) => AggFunc::from_name(s),
            _ => None,
        }
        .ok_or_else(|| self.unexpected("SUM, COUNT, AVG, MIN or MAX"))?;
        self.bump();
        self.expect(Tok::LParen)?;
        let attr = if *self.peek() == Tok::Star {
            if func != AggFunc::Count {
                return Err(self.unexpected("an attribute name"));
            }
            self.bump();
            None
        } else {
            Some(self.name()?)
        };
        self.expect(Tok::RParen)?;
        if !self.eat_kw("as") {
            return Err(self.unexpected("`as`"));
        }
        Ok(AggSpec {
            func,
            attr,
            output: self.name()?,
        })
    }

    fn pred(&mut self) -> Result<Predicate, SyntaxError> {
        let mut items = vec![self.conj()?];
        while self.eat_kw("or") {
            items.push(self.conj()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Predicate::Or(items)
        })
    }

    fn conj(&mut self) -> Result<Predicate, SyntaxError> {
        let mut items = vec![self.neg()?];
        while self.eat_kw("and") {
            items.push(self.neg()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Predicate::And(items)
        })
    }

    fn neg(&mut self) -> Result<Predicate, SyntaxError> {
        if self.eat_kw("not") {
            return Ok(Predicate::Not(Box::new(self.neg()?)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            let p = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(p);
        }
        let bool_lit = self.is_kw("true") || self.is_kw("false");
        if bool_lit && !matches!(self.peek_at(1), Tok::Op(_)) {
            return Ok(Predicate::Const(self.eat_kw("true") || !self.eat_kw("false")));
        }
        let left = self.operand()?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            _ => return Err(self.unexpected("a comparison operator")),
        };
        self.bump();
        let right = self.operand()?;
        Ok(Predicate::Cmp(left, op, right))
    }

    fn operand(&mut self) -> Result<Operand, SyntaxError> {
        let negative = if *self.peek() == Tok::Minus {
            self.bump();
            if !matches!(self.peek(), Tok::Int(_) | Tok::Rat(_)) {
                return Err(self.unexpected("a number after `-`"));
            }
            true
        } else {
            false
        };
        let out = match self.peek().clone() {
            Tok::Int(i) => Operand::Const(Value::Int(if negative { -i } else { i })),
            Tok::Rat(r) => Operand::Const(Value::Rat(if negative { -r } else { r })),
            Tok::Str(s) => Operand::Const(Value::text(&s)),
            Tok::Param(p) => Operand::Param(p),
            Tok::Ident(s) if s.eq_ignore_ascii_case("true") => Operand::Const(Value::Bool(true)),
            Tok::Ident(s) if s.eq_ignore_ascii_case("false") => Operand::Const(Value::Bool(false)),
            Tok::Ident(s) if !is_keyword(&s) => Operand::Attr(s),
            _ => return Err(self.unexpected("an attribute, constant or parameter")),
        };
        self.bump();
        Ok(out)
    }
}
