//! Guard and rate expressions.
//!
//! The language is deliberately small: numeric literals, parameter names,
//! token counts `#Place`, arithmetic, comparisons, boolean connectives and
//! `min`/`max`. Expressions are written against names; [`Expr::compile`]
//! resolves them against a net into a [`CompiledExpr`] that evaluates
//! directly on a dense marking.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    pub fn as_num(self) -> Result<f64, EvalError> {
        match self {
            Value::Num(v) => Ok(v),
            Value::Bool(_) => Err(EvalError::TypeMismatch { expected: Ty::Num }),
        }
    }

    pub fn as_bool(self) -> Result<bool, EvalError> {
        match self {
            Value::Bool(b) => Ok(b),
            Value::Num(_) => Err(EvalError::TypeMismatch { expected: Ty::Bool }),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ty {
    Num,
    Bool,
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ty::Num => "numeric",
            Ty::Bool => "boolean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Binding strength; larger binds tighter.
    fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }

    fn operand_ty(self) -> Ty {
        match self {
            BinOp::And | BinOp::Or => Ty::Bool,
            _ => Ty::Num,
        }
    }

    fn result_ty(self) -> Ty {
        match self {
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => Ty::Num,
            _ => Ty::Bool,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Bool(bool),
    Param(String),
    Tokens(String),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("unexpected character '{ch}' at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("malformed number '{text}'")]
    BadNumber { text: String },
    #[error("expected {expected} but found {found}")]
    Unexpected { expected: String, found: String },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("type mismatch: expected a {expected} value")]
    TypeMismatch { expected: Ty },
    #[error("unknown place {0}")]
    UnknownPlace(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
}

/// Name resolution for evaluating an uncompiled expression.
pub trait Scope {
    fn tokens(&self, place: &str) -> Option<u32>;
    fn param(&self, name: &str) -> Option<f64>;
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = lex(src)?;
        if tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let mut p = Parser { tokens, pos: 0 };
        let e = p.parse_or()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(ParseError::Unexpected { expected: "end of expression".into(), found: t.to_string() }),
        }
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(name.to_string())
    }

    pub fn tokens(place: &str) -> Expr {
        Expr::Tokens(place.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Static type, or the first sub-expression whose operand type is wrong.
    pub fn ty(&self) -> Result<Ty, EvalError> {
        match self {
            Expr::Num(_) | Expr::Param(_) | Expr::Tokens(_) => Ok(Ty::Num),
            Expr::Bool(_) => Ok(Ty::Bool),
            Expr::Neg(e) => expect_ty(e, Ty::Num).map(|_| Ty::Num),
            Expr::Not(e) => expect_ty(e, Ty::Bool).map(|_| Ty::Bool),
            Expr::Binary(op, l, r) => {
                expect_ty(l, op.operand_ty())?;
                expect_ty(r, op.operand_ty())?;
                Ok(op.result_ty())
            }
            Expr::Call(_, a, b) => {
                expect_ty(a, Ty::Num)?;
                expect_ty(b, Ty::Num)?;
                Ok(Ty::Num)
            }
        }
    }

    /// Every place and parameter name referenced, in first-occurrence order.
    pub fn references(&self) -> (Vec<&str>, Vec<&str>) {
        let mut places = Vec::new();
        let mut params = Vec::new();
        self.visit(&mut |e| match e {
            Expr::Tokens(p) if !places.contains(&p.as_str()) => places.push(p.as_str()),
            Expr::Param(p) if !params.contains(&p.as_str()) => params.push(p.as_str()),
            _ => {}
        });
        (places, params)
    }

    fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Neg(e) | Expr::Not(e) => e.visit(f),
            Expr::Binary(_, a, b) | Expr::Call(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    pub fn eval(&self, scope: &dyn Scope) -> Result<Value, EvalError> {
        match self {
            Expr::Num(v) => Ok(Value::Num(*v)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Param(name) => scope.param(name).map(Value::Num).ok_or_else(|| EvalError::UnknownParam(name.clone())),
            Expr::Tokens(place) => scope
                .tokens(place)
                .map(|n| Value::Num(f64::from(n)))
                .ok_or_else(|| EvalError::UnknownPlace(place.clone())),
            Expr::Neg(e) => Ok(Value::Num(-e.eval(scope)?.as_num()?)),
            Expr::Not(e) => Ok(Value::Bool(!e.eval(scope)?.as_bool()?)),
            Expr::Binary(op, l, r) => apply_binary(*op, || l.eval(scope), || r.eval(scope)),
            Expr::Call(func, a, b) => apply_call(*func, a.eval(scope)?.as_num()?, b.eval(scope)?.as_num()?),
        }
    }

    /// Resolves names: places become marking indices, parameters are
    /// inlined as constants.
    pub fn compile(
        &self,
        place_index: &dyn Fn(&str) -> Option<usize>,
        param_value: &dyn Fn(&str) -> Option<f64>,
    ) -> Result<CompiledExpr, EvalError> {
        Ok(match self {
            Expr::Num(v) => CompiledExpr::Const(Value::Num(*v)),
            Expr::Bool(b) => CompiledExpr::Const(Value::Bool(*b)),
            Expr::Param(name) => {
                CompiledExpr::Const(Value::Num(param_value(name).ok_or_else(|| EvalError::UnknownParam(name.clone()))?))
            }
            Expr::Tokens(place) => {
                CompiledExpr::Tokens(place_index(place).ok_or_else(|| EvalError::UnknownPlace(place.clone()))?)
            }
            Expr::Neg(e) => CompiledExpr::Neg(Box::new(e.compile(place_index, param_value)?)),
            Expr::Not(e) => CompiledExpr::Not(Box::new(e.compile(place_index, param_value)?)),
            Expr::Binary(op, l, r) => CompiledExpr::Binary(
                *op,
                Box::new(l.compile(place_index, param_value)?),
                Box::new(r.compile(place_index, param_value)?),
            ),
            Expr::Call(func, a, b) => CompiledExpr::Call(
                *func,
                Box::new(a.compile(place_index, param_value)?),
                Box::new(b.compile(place_index, param_value)?),
            ),
        })
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Param(p) => f.write_str(p),
            Expr::Tokens(p) => write!(f, "#{p}"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                e.fmt_prec(f, 7)
            }
            Expr::Not(e) => {
                let paren = min_prec > 3;
                if paren {
                    f.write_str("(")?;
                }
                f.write_str("not ")?;
                e.fmt_prec(f, 3)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Binary(op, l, r) => {
                let prec = op.precedence();
                let paren = prec < min_prec;
                if paren {
                    f.write_str("(")?;
                }
                // Comparisons do not chain, so both sides bind tighter.
                let lhs_min = if prec == 4 { prec + 1 } else { prec };
                l.fmt_prec(f, lhs_min)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, prec + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Expr::Call(func, a, b) => {
                f.write_str(match func {
                    Func::Min => "min(",
                    Func::Max => "max(",
                })?;
                a.fmt_prec(f, 0)?;
                f.write_str(", ")?;
                b.fmt_prec(f, 0)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

fn expect_ty(e: &Expr, want: Ty) -> Result<(), EvalError> {
    if e.ty()? == want {
        Ok(())
    } else {
        Err(EvalError::TypeMismatch { expected: want })
    }
}

fn apply_binary(
    op: BinOp,
    lhs: impl FnOnce() -> Result<Value, EvalError>,
    rhs: impl FnOnce() -> Result<Value, EvalError>,
) -> Result<Value, EvalError> {
    match op {
        BinOp::And => {
            if !lhs()?.as_bool()? {
                return Ok(Value::Bool(false));
            }
            Ok(Value::Bool(rhs()?.as_bool()?))
        }
        BinOp::Or => {
            if lhs()?.as_bool()? {
                return Ok(Value::Bool(true));
            }
            Ok(Value::Bool(rhs()?.as_bool()?))
        }
        _ => {
            let a = lhs()?.as_num()?;
            let b = rhs()?.as_num()?;
            Ok(match op {
                BinOp::Add => Value::Num(a + b),
                BinOp::Sub => Value::Num(a - b),
                BinOp::Mul => Value::Num(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    Value::Num(a / b)
                }
                BinOp::Eq => Value::Bool(a == b),
                BinOp::Ne => Value::Bool(a != b),
                BinOp::Lt => Value::Bool(a < b),
                BinOp::Le => Value::Bool(a <= b),
                BinOp::Gt => Value::Bool(a > b),
                BinOp::Ge => Value::Bool(a >= b),
                BinOp::And | BinOp::Or => unreachable!(),
            })
        }
    }
}

fn apply_call(func: Func, a: f64, b: f64) -> Result<Value, EvalError> {
    Ok(Value::Num(match func {
        Func::Min => a.min(b),
        Func::Max => a.max(b),
    }))
}

/// An expression with names resolved against a particular net.
#[derive(Debug, Clone, PartialEq)]
pub enum CompiledExpr {
    Const(Value),
    Tokens(usize),
    Neg(Box<CompiledExpr>),
    Not(Box<CompiledExpr>),
    Binary(BinOp, Box<CompiledExpr>, Box<CompiledExpr>),
    Call(Func, Box<CompiledExpr>, Box<CompiledExpr>),
}

impl CompiledExpr {
    pub fn eval(&self, tokens: &[u32]) -> Result<Value, EvalError> {
        match self {
            CompiledExpr::Const(v) => Ok(*v),
            CompiledExpr::Tokens(i) => Ok(Value::Num(f64::from(tokens[*i]))),
            CompiledExpr::Neg(e) => Ok(Value::Num(-e.eval(tokens)?.as_num()?)),
            CompiledExpr::Not(e) => Ok(Value::Bool(!e.eval(tokens)?.as_bool()?)),
            CompiledExpr::Binary(op, l, r) => apply_binary(*op, || l.eval(tokens), || r.eval(tokens)),
            CompiledExpr::Call(func, a, b) => apply_call(*func, a.eval(tokens)?.as_num()?, b.eval(tokens)?.as_num()?),
        }
    }

    pub fn eval_num(&self, tokens: &[u32]) -> Result<f64, EvalError> {
        self.eval(tokens)?.as_num()
    }

    pub fn eval_bool(&self, tokens: &[u32]) -> Result<bool, EvalError> {
        self.eval(tokens)?.as_bool()
    }
}

// ---- lexer / parser ----

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Place(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(v) => write!(f, "'{v}'"),
            Token::Ident(s) => write!(f, "'{s}'"),
            Token::Place(s) => write!(f, "'#{s}'"),
            Token::Op(s) => write!(f, "'{s}'"),
            Token::LParen => f.write_str("'('"),
            Token::RParen => f.write_str("')'"),
            Token::Comma => f.write_str("','"),
        }
    }
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Words with a fixed meaning inside expressions; not usable as names.
pub const RESERVED_WORDS: &[&str] = &["and", "or", "not", "min", "max", "true", "false"];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| ParseError::BadNumber { text: text.clone() })?;
            out.push(Token::Num(v));
            continue;
        }
        if is_ident_start(c) || c == '#' {
            let place = c == '#';
            let start = if place { i + 1 } else { i };
            i = start;
            if place && !chars.get(i).copied().is_some_and(is_ident_start) {
                return Err(ParseError::UnexpectedChar { ch: '#', pos: start - 1 });
            }
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            out.push(if place { Token::Place(name) } else { Token::Ident(name) });
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let op2 = ["==", "!=", "<=", ">="].into_iter().find(|op| *op == two);
        if let Some(op) = op2 {
            out.push(Token::Op(op));
            i += 2;
            continue;
        }
        let tok = match c {
            '+' => Token::Op("+"),
            '-' => Token::Op("-"),
            '*' => Token::Op("*"),
            '/' => Token::Op("/"),
            '<' => Token::Op("<"),
            '>' => Token::Op(">"),
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            _ => return Err(ParseError::UnexpectedChar { ch: c, pos: i }),
        };
        out.push(tok);
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_word(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Some(Token::Ident(w)) if w == word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(ParseError::Unexpected { expected: want.to_string(), found: describe(other.as_ref()) }),
        }
    }

    fn parse_or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.eat_word("or") {
            let rhs = self.parse_and()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_not()?;
        while self.eat_word("and") {
            let rhs = self.parse_not()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<Expr, ParseError> {
        if self.eat_word("not") {
            return Ok(Expr::Not(Box::new(self.parse_not()?)));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.parse_add()?;
        let op = match self.peek() {
            Some(Token::Op("==")) => BinOp::Eq,
            Some(Token::Op("!=")) => BinOp::Ne,
            Some(Token::Op("<")) => BinOp::Lt,
            Some(Token::Op("<=")) => BinOp::Le,
            Some(Token::Op(">")) => BinOp::Gt,
            Some(Token::Op(">=")) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.parse_add()?;
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn parse_add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_mul()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op("+")) => BinOp::Add,
                Some(Token::Op("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_mul()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Op("*")) => BinOp::Mul,
                Some(Token::Op("/")) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Some(Token::Op("-"))) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.parse_unary()?)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::Place(p)) => Ok(Expr::Tokens(p)),
            Some(Token::LParen) => {
                let e = self.parse_or()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(w)) => match w.as_str() {
                "true" => Ok(Expr::Bool(true)),
                "false" => Ok(Expr::Bool(false)),
                "min" | "max" => {
                    let func = if w == "min" { Func::Min } else { Func::Max };
                    self.expect(Token::LParen)?;
                    let a = self.parse_or()?;
                    self.expect(Token::Comma)?;
                    let b = self.parse_or()?;
                    self.expect(Token::RParen)?;
                    Ok(Expr::Call(func, Box::new(a), Box::new(b)))
                }
                "and" | "or" | "not" => {
                    Err(ParseError::Unexpected { expected: "an operand".into(), found: format!("'{w}'") })
                }
                _ => Ok(Expr::Param(w)),
            },
            other => Err(ParseError::Unexpected { expected: "an operand".into(), found: describe(other.as_ref()) }),
        }
    }
}

fn describe(t: Option<&Token>) -> String {
    t.map_or_else(|| "end of expression".to_string(), Token::to_string)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    struct Env {
        tokens: HashMap<&'static str, u32>,
        params: HashMap<&'static str, f64>,
    }

    impl Scope for Env {
        fn tokens(&self, place: &str) -> Option<u32> {
            self.tokens.get(place).copied()
        }
        fn param(&self, name: &str) -> Option<f64> {
            self.params.get(name).copied()
        }
    }

    fn env(tokens: &[(&'static str, u32)], params: &[(&'static str, f64)]) -> Env {
        Env { tokens: tokens.iter().copied().collect(), params: params.iter().copied().collect() }
    }

    fn eval(src: &str, e: &Env) -> Result<Value, EvalError> {
        Expr::parse(src).unwrap().eval(e)
    }

    #[test]
    fn token_count() {
        assert_eq!(eval("#Clock", &env(&[("Clock", 1)], &[])), Ok(Value::Num(1.0)));
    }

    #[test]
    fn param_times_tokens() {
        let e = env(&[("Up", 2)], &[("lambda", 0.5)]);
        assert_eq!(eval("lambda * #Up", &e), Ok(Value::Num(1.0)));
    }

    #[test]
    fn comparison_false() {
        assert_eq!(eval("#A >= 2", &env(&[("A", 1)], &[])), Ok(Value::Bool(false)));
    }

    #[test]
    fn precedence_and_functions() {
        let e = env(&[("A", 3), ("B", 0)], &[("k", 2.0)]);
        assert_eq!(eval("1 + 2 * 3 - 4 / 2", &e), Ok(Value::Num(5.0)));
        assert_eq!(eval("-(1 + 2) * k", &e), Ok(Value::Num(-6.0)));
        assert_eq!(eval("min(#A, k) + max(#B, 0.5)", &e), Ok(Value::Num(2.5)));
        assert_eq!(eval("#A > 2 and not #B >= 1 or false", &e), Ok(Value::Bool(true)));
        assert_eq!(eval("1.5e1 / 3", &e), Ok(Value::Num(5.0)));
    }

    #[test]
    fn division_by_zero() {
        let e = env(&[("B", 0)], &[]);
        assert_eq!(eval("1 / #B", &e), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn type_mismatch() {
        let e = env(&[("A", 1)], &[]);
        assert_eq!(eval("(#A > 0) + 1", &e), Err(EvalError::TypeMismatch { expected: Ty::Num }));
        assert_eq!(Expr::parse("#A and true").unwrap().ty(), Err(EvalError::TypeMismatch { expected: Ty::Bool }));
        assert_eq!(Expr::parse("#A == 1 or false").unwrap().ty(), Ok(Ty::Bool));
    }

    #[test]
    fn unknown_names() {
        let e = env(&[], &[]);
        assert_eq!(eval("#X", &e), Err(EvalError::UnknownPlace("X".into())));
        assert_eq!(eval("mu", &e), Err(EvalError::UnknownParam("mu".into())));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Expr::parse(""), Err(ParseError::Empty)));
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("# A").is_err());
        assert!(Expr::parse("min(1)").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn compiled_matches_named_evaluation() {
        let src = "max(#A * k, 1) / (#B + 1) + 2";
        let e = Expr::parse(src).unwrap();
        let c = e.compile(&|p| ["A", "B"].iter().position(|n| *n == p), &|n| (n == "k").then_some(0.5)).unwrap();
        for (a, b) in [(0u32, 0u32), (3, 1), (10, 4)] {
            let named = e.eval(&env(&[("A", a), ("B", b)], &[("k", 0.5)])).unwrap();
            assert_eq!(c.eval(&[a, b]).unwrap(), named);
        }
    }

    #[test]
    fn references_are_collected() {
        let e = Expr::parse("#A * mu + #B * mu > #A").unwrap();
        assert_eq!(e.references(), (vec!["A", "B"], vec!["mu"]));
    }

    #[test]
    fn display_reparses_to_same_tree() {
        for src in [
            "1 - (2 - 3)",
            "(1 + 2) * 3",
            "not (#A > 1 and #B < 2) or #C == 0",
            "-#A / (2 * mu)",
            "min(#A, max(1, 2e-3)) >= 0.25",
            "not not true",
            "(#A > 1) == (#B > 1) or false",
        ] {
            let e = Expr::parse(src).unwrap();
            let printed = e.to_string();
            assert_eq!(Expr::parse(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }
}
