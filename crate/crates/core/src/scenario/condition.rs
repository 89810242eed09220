//! Boolean guard expressions attached to choices.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! or    := and ("or" and)*
//! and   := cmp ("and" cmp)*
//! cmp   := unary (("==" | "!=" | "<" | "<=" | ">" | ">=") unary)?
//! unary := "not" unary | atom
//! atom  := integer | "true" | "false" | "\"" string "\"" | ident | "(" or ")"
//! ```
//!
//! There is no arithmetic; effects carry arithmetic. Evaluation is total: an
//! expression that type-checks against a variable table always yields a boolean.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::{Value, VarType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn is_ordering(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn always_true() -> Self {
        Expr::Lit(Value::Bool(true))
    }

    /// Every variable name the expression mentions, in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a str>) {
            match e {
                Expr::Lit(_) => {}
                Expr::Var(name) => {
                    if !out.contains(&name.as_str()) {
                        out.push(name);
                    }
                }
                Expr::Not(inner) => walk(inner, out),
                Expr::And(a, b) | Expr::Or(a, b) | Expr::Cmp(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn type_check(&self, vars: &BTreeMap<String, VarType>) -> Result<(), ConditionError> {
        match self.type_of(vars)? {
            VarType::Bool => Ok(()),
            other => Err(ConditionError::TypeMismatch(format!(
                "condition must be boolean, found {other}"
            ))),
        }
    }

    fn type_of(&self, vars: &BTreeMap<String, VarType>) -> Result<VarType, ConditionError> {
        match self {
            Expr::Lit(v) => Ok(v.var_type()),
            Expr::Var(name) => vars
                .get(name)
                .copied()
                .ok_or_else(|| ConditionError::UndeclaredVariable(name.clone())),
            Expr::Not(inner) => match inner.type_of(vars)? {
                VarType::Bool => Ok(VarType::Bool),
                other => Err(ConditionError::TypeMismatch(format!(
                    "`not` needs a boolean operand, found {other}"
                ))),
            },
            Expr::And(a, b) | Expr::Or(a, b) => {
                let (ta, tb) = (a.type_of(vars)?, b.type_of(vars)?);
                if ta == VarType::Bool && tb == VarType::Bool {
                    Ok(VarType::Bool)
                } else {
                    Err(ConditionError::TypeMismatch(format!(
                        "boolean operator applied to {ta} and {tb}"
                    )))
                }
            }
            Expr::Cmp(op, a, b) => {
                let (ta, tb) = (a.type_of(vars)?, b.type_of(vars)?);
                if ta != tb {
                    return Err(ConditionError::TypeMismatch(format!(
                        "cannot compare {ta} {} {tb}",
                        op.symbol()
                    )));
                }
                if op.is_ordering() && ta != VarType::Int {
                    return Err(ConditionError::TypeMismatch(format!(
                        "ordering `{}` is only defined on integers, found {ta}",
                        op.symbol()
                    )));
                }
                Ok(VarType::Bool)
            }
        }
    }

    /// Evaluates against a variable map. Ill-typed or unbound subexpressions
    /// evaluate to false; a type-checked expression never hits that path.
    pub fn eval(&self, vars: &BTreeMap<String, Value>) -> bool {
        matches!(self.value(vars), Some(Value::Bool(true)))
    }

    fn value(&self, vars: &BTreeMap<String, Value>) -> Option<Value> {
        match self {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Var(name) => vars.get(name).cloned(),
            Expr::Not(inner) => match inner.value(vars)? {
                Value::Bool(b) => Some(Value::Bool(!b)),
                _ => None,
            },
            Expr::And(a, b) => Some(Value::Bool(a.eval(vars) && b.eval(vars))),
            Expr::Or(a, b) => Some(Value::Bool(a.eval(vars) || b.eval(vars))),
            Expr::Cmp(op, a, b) => {
                let (va, vb) = (a.value(vars)?, b.value(vars)?);
                let ord = match (&va, &vb) {
                    (Value::Int(x), Value::Int(y)) => x.cmp(y),
                    (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
                    (Value::Str(x), Value::Str(y)) => x.cmp(y),
                    _ => return None,
                };
                let result = match op {
                    CmpOp::Eq => ord.is_eq(),
                    CmpOp::Ne => ord.is_ne(),
                    CmpOp::Lt => ord.is_lt(),
                    CmpOp::Le => ord.is_le(),
                    CmpOp::Gt => ord.is_gt(),
                    CmpOp::Ge => ord.is_ge(),
                };
                Some(Value::Bool(result))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(Value::Int(i)) => write!(f, "{i}"),
            Expr::Lit(Value::Bool(b)) => write!(f, "{b}"),
            Expr::Lit(Value::Str(s)) => {
                write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
            }
            Expr::Var(name) => f.write_str(name),
            Expr::Not(inner) => write!(f, "(not {inner})"),
            Expr::And(a, b) => write!(f, "({a} and {b})"),
            Expr::Or(a, b) => write!(f, "({a} or {b})"),
            Expr::Cmp(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

/// A parsed guard that remembers its source text, so documents serialize back
/// exactly as authored.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    source: String,
    expr: Expr,
}

impl Condition {
    pub fn parse(source: &str) -> Result<Self, ConditionError> {
        Ok(Condition {
            source: source.to_string(),
            expr: parse_expr(source)?,
        })
    }

    pub fn always() -> Self {
        Condition {
            source: String::new(),
            expr: Expr::always_true(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl Serialize for Condition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let source = String::deserialize(deserializer)?;
        Condition::parse(&source).map_err(serde::de::Error::custom)
    }
}

/// Parses and type-checks a condition against a declared variable table.
/// Empty or whitespace-only text is the always-true condition.
pub fn parse_condition(
    text: &str,
    vars: &BTreeMap<String, VarType>,
) -> Result<Expr, ConditionError> {
    let expr = parse_expr(text)?;
    expr.type_check(vars)?;
    Ok(expr)
}

/// Syntax-only parse.
pub fn parse_expr(text: &str) -> Result<Expr, ConditionError> {
    let tokens = lex(text)?;
    if tokens.is_empty() {
        return Ok(Expr::always_true());
    }
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.or()?;
    if let Some((offset, tok)) = parser.tokens.get(parser.pos) {
        return Err(ConditionError::Syntax {
            offset: *offset,
            message: format!("unexpected {tok}"),
        });
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Str(String),
    Ident(String),
    True,
    False,
    And,
    Or,
    Not,
    Op(CmpOp),
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Int(i) => write!(f, "integer {i}"),
            Token::Str(s) => write!(f, "string {s:?}"),
            Token::Ident(s) => write!(f, "identifier `{s}`"),
            Token::True => f.write_str("`true`"),
            Token::False => f.write_str("`false`"),
            Token::And => f.write_str("`and`"),
            Token::Or => f.write_str("`or`"),
            Token::Not => f.write_str("`not`"),
            Token::Op(op) => write!(f, "`{}`", op.symbol()),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Token)>, ConditionError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let syntax = |offset: usize, message: &str| ConditionError::Syntax {
        offset,
        message: message.to_string(),
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
            }
            b'(' => {
                out.push((start, Token::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Token::RParen));
                i += 1;
            }
            b'=' | b'!' | b'<' | b'>' => {
                let next_eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, next_eq) {
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    (b'<', true) => CmpOp::Le,
                    (b'>', true) => CmpOp::Ge,
                    (b'<', false) => CmpOp::Lt,
                    (b'>', false) => CmpOp::Gt,
                    _ => return Err(syntax(start, "expected `==` or `!=`")),
                };
                i += if next_eq { 2 } else { 1 };
                out.push((start, Token::Op(op)));
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match text[i..].chars().next() {
                        None => return Err(syntax(start, "unterminated string")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            match text[i + 1..].chars().next() {
                                Some(ch @ ('"' | '\\')) => s.push(ch),
                                _ => return Err(syntax(i, "invalid escape")),
                            }
                            i += 2;
                        }
                        Some(ch) => {
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                out.push((start, Token::Str(s)));
            }
            b'-' | b'0'..=b'9' => {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lexeme = &text[start..i];
                let value = lexeme
                    .parse::<i64>()
                    .map_err(|_| syntax(start, "invalid integer literal"))?;
                out.push((start, Token::Int(value)));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let tok = match &text[start..i] {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    "true" => Token::True,
                    "false" => Token::False,
                    ident => Token::Ident(ident.to_string()),
                };
                out.push((start, tok));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(syntax(start, &format!("unexpected character {ch:?}")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn bump(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        tok
    }

    fn or(&mut self) -> Result<Expr, ConditionError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ConditionError> {
        let mut lhs = self.cmp()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            let rhs = self.cmp()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> Result<Expr, ConditionError> {
        let lhs = self.unary()?;
        if let Some(Token::Op(op)) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            if let Some(Token::Op(_)) = self.peek() {
                return Err(ConditionError::Syntax {
                    offset: self.offset(),
                    message: "comparisons do not chain; use parentheses".into(),
                });
            }
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ConditionError> {
        if self.peek() == Some(&Token::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ConditionError> {
        let offset = self.offset();
        match self.bump() {
            Some(Token::Int(i)) => Ok(Expr::Lit(Value::Int(i))),
            Some(Token::Str(s)) => Ok(Expr::Lit(Value::Str(s))),
            Some(Token::True) => Ok(Expr::Lit(Value::Bool(true))),
            Some(Token::False) => Ok(Expr::Lit(Value::Bool(false))),
            Some(Token::Ident(name)) => Ok(Expr::Var(name)),
            Some(Token::LParen) => {
                let inner = self.or()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(ConditionError::Syntax {
                        offset: self.tokens.get(self.pos - 1).map_or(self.end, |(o, _)| *o),
                        message: "expected `)`".into(),
                    }),
                }
            }
            Some(tok) => Err(ConditionError::Syntax {
                offset,
                message: format!("unexpected {tok}"),
            }),
            None => Err(ConditionError::Syntax {
                offset,
                message: "unexpected end of expression".into(),
            }),
        }
    }
}
