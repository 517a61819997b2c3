//! Expression language: a small infix language over runtime values, with
//! evaluation against the local and global stores and a clock snapshot for
//! cross-unit duration predicates.

use std::fmt;

use crate::tree::{GlobalStore, LocalStore};
use crate::value::{ClockSnapshot, Duration, TimeUnit, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::And => "and",
            BinOp::Or => "or",
        })
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    /// `$name`, resolved in the global store.
    Global(String),
    /// Bare identifier, resolved in the local store.
    Local(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    /// Vector or map access: `base[index]`.
    Index(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn lit_int(i: i64) -> Expr {
        Expr::Lit(Value::Int(i))
    }

    pub fn lit_bool(b: bool) -> Expr {
        Expr::Lit(Value::Bool(b))
    }

    pub fn lit_duration(magnitude: f64, unit: TimeUnit) -> Expr {
        Expr::Lit(Value::Duration(
            Duration::new(magnitude, unit).expect("literal duration must be finite and >= 0"),
        ))
    }

    /// True when the expression contains no variable references.
    pub fn is_ground(&self) -> bool {
        match self {
            Expr::Lit(_) => true,
            Expr::Global(_) | Expr::Local(_) => false,
            Expr::Unary(_, e) => e.is_ground(),
            Expr::Binary(_, l, r) | Expr::Compare(_, l, r) | Expr::Index(l, r) => {
                l.is_ground() && r.is_ground()
            }
        }
    }
}

/// Soft evaluation failure. Callers decide whether it means an error state
/// (`if`, `await`, `repeat`) or keep-waiting (`suspend`).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("not evaluable: {reason}")]
pub struct NotEvaluable {
    pub reason: String,
}

fn stuck<T>(reason: impl Into<String>) -> Result<T, NotEvaluable> {
    Err(NotEvaluable { reason: reason.into() })
}

pub type EvalResult = Result<Value, NotEvaluable>;

/// Evaluate `e` with locals resolved from `local` and `$`-variables from
/// `global`. Duration comparisons use the instantaneous rates in `clocks`.
pub fn eval(
    e: &Expr,
    global: &GlobalStore,
    local: &LocalStore,
    clocks: &ClockSnapshot,
) -> EvalResult {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Global(name) => match global.get_var(name) {
            Some(v) => Ok(v.clone()),
            None => stuck(format!("unbound global ${name}")),
        },
        Expr::Local(name) => match local.get(name) {
            Some(v) => Ok(v.clone()),
            None => stuck(format!("unbound local {name}")),
        },
        Expr::Unary(op, operand) => {
            let v = eval(operand, global, local, clocks)?;
            apply_unary(*op, v)
        }
        Expr::Binary(BinOp::And, l, r) => match eval(l, global, local, clocks)? {
            Value::Bool(false) => Ok(Value::Bool(false)),
            Value::Bool(true) => expect_bool(eval(r, global, local, clocks)?),
            v => stuck(format!("and: expected bool, got {}", v.type_name())),
        },
        Expr::Binary(BinOp::Or, l, r) => match eval(l, global, local, clocks)? {
            Value::Bool(true) => Ok(Value::Bool(true)),
            Value::Bool(false) => expect_bool(eval(r, global, local, clocks)?),
            v => stuck(format!("or: expected bool, got {}", v.type_name())),
        },
        Expr::Binary(op, l, r) => {
            let lv = eval(l, global, local, clocks)?;
            let rv = eval(r, global, local, clocks)?;
            apply_arith(*op, lv, rv, clocks)
        }
        Expr::Compare(op, l, r) => {
            let lv = eval(l, global, local, clocks)?;
            let rv = eval(r, global, local, clocks)?;
            apply_compare(*op, lv, rv, clocks)
        }
        Expr::Index(base, index) => {
            let bv = eval(base, global, local, clocks)?;
            let iv = eval(index, global, local, clocks)?;
            apply_index(bv, iv)
        }
    }
}

/// As [`eval`], but the result must be a duration. Bare non-negative numbers
/// coerce to beats.
pub fn eval_duration(
    e: &Expr,
    global: &GlobalStore,
    local: &LocalStore,
    clocks: &ClockSnapshot,
) -> Result<Duration, NotEvaluable> {
    match eval(e, global, local, clocks)? {
        Value::Duration(d) => Ok(d),
        Value::Int(i) if i >= 0 => Ok(Duration::beats(i as f64).unwrap()),
        Value::Float(f) if f.is_finite() && f >= 0.0 => Ok(Duration::beats(f).unwrap()),
        v => stuck(format!("expected a duration, got {}", v.type_name())),
    }
}

fn expect_bool(v: Value) -> EvalResult {
    match v {
        Value::Bool(_) => Ok(v),
        other => stuck(format!("expected bool, got {}", other.type_name())),
    }
}

fn apply_unary(op: UnaryOp, v: Value) -> EvalResult {
    match (op, v) {
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Neg, Value::Int(i)) => match i.checked_neg() {
            Some(n) => Ok(Value::Int(n)),
            None => stuck("integer overflow in negation"),
        },
        (UnaryOp::Neg, Value::Float(f)) => Ok(Value::Float(-f)),
        (op, v) => stuck(format!(
            "{} does not apply to {}",
            match op {
                UnaryOp::Not => "not",
                UnaryOp::Neg => "negation",
            },
            v.type_name()
        )),
    }
}

fn apply_arith(op: BinOp, l: Value, r: Value, clocks: &ClockSnapshot) -> EvalResult {
    use Value::{Duration as Dur, Float, Int};
    match (op, l, r) {
        (BinOp::Add, Int(a), Int(b)) => match a.checked_add(b) {
            Some(n) => Ok(Int(n)),
            None => stuck("integer overflow"),
        },
        (BinOp::Sub, Int(a), Int(b)) => match a.checked_sub(b) {
            Some(n) => Ok(Int(n)),
            None => stuck("integer overflow"),
        },
        (BinOp::Mul, Int(a), Int(b)) => match a.checked_mul(b) {
            Some(n) => Ok(Int(n)),
            None => stuck("integer overflow"),
        },
        (BinOp::Div, Int(_), Int(0)) => stuck("division by zero"),
        (BinOp::Div, Int(a), Int(b)) => Ok(Int(a / b)),
        (op, Dur(a), Dur(b)) if matches!(op, BinOp::Add | BinOp::Sub) => {
            add_durations(op, a, b, clocks)
        }
        (BinOp::Mul, Dur(d), v) | (BinOp::Mul, v, Dur(d)) => scale_duration(d, v, false),
        (BinOp::Div, Dur(d), v) => scale_duration(d, v, true),
        (op, a, b) => {
            // Remaining numeric cases promote to float.
            match (a.as_number(), b.as_number()) {
                (Some(x), Some(y)) => match op {
                    BinOp::Add => Ok(Float(x + y)),
                    BinOp::Sub => Ok(Float(x - y)),
                    BinOp::Mul => Ok(Float(x * y)),
                    BinOp::Div => {
                        if y == 0.0 {
                            stuck("division by zero")
                        } else {
                            Ok(Float(x / y))
                        }
                    }
                    BinOp::And | BinOp::Or => unreachable!("handled in eval"),
                },
                _ => stuck(format!(
                    "{op} does not apply to {} and {}",
                    a.type_name(),
                    b.type_name()
                )),
            }
        }
    }
}

fn add_durations(op: BinOp, a: Duration, b: Duration, clocks: &ClockSnapshot) -> EvalResult {
    let (mag, unit) = if a.unit() == b.unit() {
        let m = match op {
            BinOp::Add => a.magnitude() + b.magnitude(),
            _ => a.magnitude() - b.magnitude(),
        };
        (m, a.unit().clone())
    } else {
        // Cross-unit arithmetic happens in wall seconds at the current rate.
        let (x, y) = match (clocks.to_seconds(&a), clocks.to_seconds(&b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return stuck("duration in an unregistered unit"),
        };
        let m = match op {
            BinOp::Add => x + y,
            _ => x - y,
        };
        (m, TimeUnit::seconds())
    };
    match Duration::new(mag, unit) {
        Some(d) => Ok(Value::Duration(d)),
        None => stuck("duration arithmetic produced a negative span"),
    }
}

fn scale_duration(d: Duration, factor: Value, divide: bool) -> EvalResult {
    let f = match factor.as_number() {
        Some(f) => f,
        None => {
            return stuck(format!(
                "duration scaling expects a number, got {}",
                factor.type_name()
            ))
        }
    };
    if divide && f == 0.0 {
        return stuck("division by zero");
    }
    let mag = if divide { d.magnitude() / f } else { d.magnitude() * f };
    match Duration::new(mag, d.unit().clone()) {
        Some(d) => Ok(Value::Duration(d)),
        None => stuck("duration scaling produced a negative span"),
    }
}

fn apply_compare(op: CmpOp, l: Value, r: Value, clocks: &ClockSnapshot) -> EvalResult {
    use std::cmp::Ordering;
    let ord: Option<Ordering> = match (&l, &r) {
        (Value::Duration(a), Value::Duration(b)) => match clocks.compare(a, b) {
            Some(o) => Some(o),
            None => return stuck("duration in an unregistered unit"),
        },
        (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
        _ => match (l.as_number(), r.as_number()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ => None,
        },
    };
    match op {
        CmpOp::Eq | CmpOp::Ne => {
            let eq = match ord {
                Some(o) => o == Ordering::Equal,
                None => l.expr_eq(&r),
            };
            Ok(Value::Bool(if op == CmpOp::Eq { eq } else { !eq }))
        }
        _ => match ord {
            Some(o) => Ok(Value::Bool(match op {
                CmpOp::Lt => o == Ordering::Less,
                CmpOp::Le => o != Ordering::Greater,
                CmpOp::Gt => o == Ordering::Greater,
                CmpOp::Ge => o != Ordering::Less,
                CmpOp::Eq | CmpOp::Ne => unreachable!(),
            })),
            None => stuck(format!(
                "{op} does not apply to {} and {}",
                l.type_name(),
                r.type_name()
            )),
        },
    }
}

fn apply_index(base: Value, index: Value) -> EvalResult {
    match (base, index) {
        (Value::Vector(items), Value::Int(i)) => {
            if i < 0 || i as usize >= items.len() {
                stuck(format!("vector index {i} out of bounds (len {})", items.len()))
            } else {
                Ok(items[i as usize].clone())
            }
        }
        (Value::Map(entries), Value::Str(k)) => match entries.get(&k) {
            Some(v) => Ok(v.clone()),
            None => stuck(format!("missing map key {k:?}")),
        },
        (b, i) => stuck(format!(
            "cannot index {} with {}",
            b.type_name(),
            i.type_name()
        )),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Global(name) => write!(f, "${name}"),
            Expr::Local(name) => f.write_str(name),
            Expr::Unary(UnaryOp::Not, e) => write!(f, "(not {e})"),
            Expr::Unary(UnaryOp::Neg, e) => write!(f, "(-{e})"),
            Expr::Binary(op, l, r) => write!(f, "({l} {op} {r})"),
            Expr::Compare(op, l, r) => write!(f, "({l} {op} {r})"),
            Expr::Index(base, idx) => write!(f, "{base}[{idx}]"),
        }
    }
}

/// Render with outer parentheses, as instruction operands are written.
pub fn display_operand(e: &Expr) -> String {
    match e {
        Expr::Binary(..) | Expr::Compare(..) | Expr::Unary(..) => format!("{e}"),
        _ => format!("({e})"),
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{msg} at byte {pos}")]
pub struct ExprParseError {
    pub pos: usize,
    pub msg: String,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Global(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer { src, pos: 0 }
    }

    fn error(&self, msg: impl Into<String>) -> ExprParseError {
        ExprParseError { pos: self.pos, msg: msg.into() }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<Option<(usize, Tok)>, ExprParseError> {
        self.skip_ws();
        let start = self.pos;
        let mut chars = self.rest().chars();
        let c = match chars.next() {
            Some(c) => c,
            None => return Ok(None),
        };
        let tok = match c {
            '(' => {
                self.pos += 1;
                Tok::LParen
            }
            ')' => {
                self.pos += 1;
                Tok::RParen
            }
            '[' => {
                self.pos += 1;
                Tok::LBracket
            }
            ']' => {
                self.pos += 1;
                Tok::RBracket
            }
            ',' => {
                self.pos += 1;
                Tok::Comma
            }
            '+' => {
                self.pos += 1;
                Tok::Plus
            }
            '-' => {
                self.pos += 1;
                Tok::Minus
            }
            '*' => {
                self.pos += 1;
                Tok::Star
            }
            '/' => {
                self.pos += 1;
                Tok::Slash
            }
            '=' => {
                self.pos += 1;
                Tok::Eq
            }
            '!' => {
                if self.rest().starts_with("!=") {
                    self.pos += 2;
                    Tok::Ne
                } else {
                    return Err(self.error("expected != after !"));
                }
            }
            '<' => {
                if self.rest().starts_with("<=") {
                    self.pos += 2;
                    Tok::Le
                } else {
                    self.pos += 1;
                    Tok::Lt
                }
            }
            '>' => {
                if self.rest().starts_with(">=") {
                    self.pos += 2;
                    Tok::Ge
                } else {
                    self.pos += 1;
                    Tok::Gt
                }
            }
            '"' => {
                self.pos += 1;
                let mut s = String::new();
                loop {
                    let mut it = self.rest().chars();
                    match it.next() {
                        None => return Err(self.error("unterminated string")),
                        Some('"') => {
                            self.pos += 1;
                            break;
                        }
                        Some('\\') => {
                            self.pos += 1;
                            match self.rest().chars().next() {
                                Some('"') => {
                                    s.push('"');
                                    self.pos += 1;
                                }
                                Some('\\') => {
                                    s.push('\\');
                                    self.pos += 1;
                                }
                                _ => return Err(self.error("unknown escape")),
                            }
                        }
                        Some(ch) => {
                            s.push(ch);
                            self.pos += ch.len_utf8();
                        }
                    }
                }
                Tok::Str(s)
            }
            '$' => {
                self.pos += 1;
                let name = self.take_ident()?;
                Tok::Global(name)
            }
            c if c.is_ascii_digit() => self.take_number()?,
            c if c.is_alphabetic() || c == '_' => Tok::Ident(self.take_ident()?),
            other => return Err(self.error(format!("unexpected character {other:?}"))),
        };
        Ok(Some((start, tok)))
    }

    fn take_ident(&mut self) -> Result<String, ExprParseError> {
        let rest = self.rest();
        let end = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += end;
        Ok(rest[..end].to_string())
    }

    fn take_number(&mut self) -> Result<Tok, ExprParseError> {
        let rest = self.rest();
        let mut end = 0;
        let bytes = rest.as_bytes();
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        let mut is_float = false;
        if end < bytes.len() && bytes[end] == b'.' {
            is_float = true;
            end += 1;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut e = end + 1;
            if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                e += 1;
            }
            if e < bytes.len() && bytes[e].is_ascii_digit() {
                is_float = true;
                end = e;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
        }
        let text = &rest[..end];
        self.pos += end;
        if is_float {
            match text.parse::<f64>() {
                Ok(f) => Ok(Tok::Float(f)),
                Err(_) => Err(self.error(format!("bad float literal {text}"))),
            }
        } else {
            match text.parse::<i64>() {
                Ok(i) => Ok(Tok::Int(i)),
                Err(_) => Err(self.error(format!("integer literal out of range: {text}"))),
            }
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Option<(usize, Tok)>>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Parser<'a> {
        Parser { lexer: Lexer::new(src), peeked: None }
    }

    fn peek(&mut self) -> Result<Option<&(usize, Tok)>, ExprParseError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().unwrap().as_ref())
    }

    fn advance(&mut self) -> Result<Option<(usize, Tok)>, ExprParseError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lexer.next(),
        }
    }

    fn error_at(&self, pos: usize, msg: impl Into<String>) -> ExprParseError {
        ExprParseError { pos, msg: msg.into() }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ExprParseError> {
        match self.advance()? {
            Some((_, tok)) if tok == want => Ok(()),
            Some((pos, tok)) => Err(self.error_at(pos, format!("expected {what}, got {tok:?}"))),
            None => Err(self.error_at(self.lexer.pos, format!("expected {what}, got end of input"))),
        }
    }

    fn parse_or(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.parse_and()?;
        while let Some((_, Tok::Ident(name))) = self.peek()? {
            if name != "or" {
                break;
            }
            self.advance()?;
            let rhs = self.parse_and()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.parse_cmp()?;
        while let Some((_, Tok::Ident(name))) = self.peek()? {
            if name != "and" {
                break;
            }
            self.advance()?;
            let rhs = self.parse_cmp()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_cmp(&mut self) -> Result<Expr, ExprParseError> {
        let lhs = self.parse_additive()?;
        let op = match self.peek()? {
            Some((_, Tok::Eq)) => CmpOp::Eq,
            Some((_, Tok::Ne)) => CmpOp::Ne,
            Some((_, Tok::Lt)) => CmpOp::Lt,
            Some((_, Tok::Le)) => CmpOp::Le,
            Some((_, Tok::Gt)) => CmpOp::Gt,
            Some((_, Tok::Ge)) => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.advance()?;
        let rhs = self.parse_additive()?;
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn parse_additive(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.parse_multiplicative()?;
        loop {
            let op = match self.peek()? {
                Some((_, Tok::Plus)) => BinOp::Add,
                Some((_, Tok::Minus)) => BinOp::Sub,
                _ => break,
            };
            self.advance()?;
            let rhs = self.parse_multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self) -> Result<Expr, ExprParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek()? {
                Some((_, Tok::Star)) => BinOp::Mul,
                Some((_, Tok::Slash)) => BinOp::Div,
                _ => break,
            };
            self.advance()?;
            let rhs = self.parse_unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Expr, ExprParseError> {
        match self.peek()? {
            Some((_, Tok::Minus)) => {
                self.advance()?;
                let e = self.parse_unary()?;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(e)))
            }
            Some((_, Tok::Ident(name))) if name == "not" => {
                self.advance()?;
                let e = self.parse_unary()?;
                Ok(Expr::Unary(UnaryOp::Not, Box::new(e)))
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<Expr, ExprParseError> {
        let mut e = self.parse_primary()?;
        while let Some((_, Tok::LBracket)) = self.peek()? {
            self.advance()?;
            let idx = self.parse_or()?;
            self.expect(Tok::RBracket, "]")?;
            e = Expr::Index(Box::new(e), Box::new(idx));
        }
        Ok(e)
    }

    fn parse_primary(&mut self) -> Result<Expr, ExprParseError> {
        match self.advance()? {
            Some((_, Tok::LParen)) => {
                let e = self.parse_or()?;
                self.expect(Tok::RParen, ")")?;
                Ok(e)
            }
            Some((_, Tok::LBracket)) => {
                let mut items = Vec::new();
                if let Some((_, Tok::RBracket)) = self.peek()? {
                    self.advance()?;
                } else {
                    loop {
                        items.push(self.parse_or()?);
                        match self.advance()? {
                            Some((_, Tok::Comma)) => continue,
                            Some((_, Tok::RBracket)) => break,
                            Some((pos, tok)) => {
                                return Err(
                                    self.error_at(pos, format!("expected , or ], got {tok:?}"))
                                )
                            }
                            None => {
                                return Err(
                                    self.error_at(self.lexer.pos, "unterminated vector literal")
                                )
                            }
                        }
                    }
                }
                // Ground vector literals fold to a value; anything else stays
                // symbolic and is rebuilt at evaluation time.
                if items.iter().all(|e| matches!(e, Expr::Lit(_))) {
                    let values = items
                        .into_iter()
                        .map(|e| match e {
                            Expr::Lit(v) => v,
                            _ => unreachable!(),
                        })
                        .collect();
                    Ok(Expr::Lit(Value::Vector(values)))
                } else {
                    Err(self.error_at(
                        self.lexer.pos,
                        "vector literals must contain only literals",
                    ))
                }
            }
            Some((_, Tok::Int(i))) => self.finish_number(Value::Int(i), i as f64),
            Some((_, Tok::Float(f))) => self.finish_number(Value::Float(f), f),
            Some((_, Tok::Str(s))) => Ok(Expr::Lit(Value::Str(s))),
            Some((_, Tok::Global(name))) => Ok(Expr::Global(name)),
            Some((pos, Tok::Ident(name))) => match name.as_str() {
                "true" => Ok(Expr::Lit(Value::Bool(true))),
                "false" => Ok(Expr::Lit(Value::Bool(false))),
                "undefined" => Ok(Expr::Lit(Value::Undefined)),
                "and" | "or" | "not" => {
                    Err(self.error_at(pos, format!("keyword {name} is not a value")))
                }
                _ => Ok(Expr::Local(name)),
            },
            Some((pos, tok)) => Err(self.error_at(pos, format!("unexpected token {tok:?}"))),
            None => Err(self.error_at(self.lexer.pos, "unexpected end of expression")),
        }
    }

    /// A number followed by an identifier is a duration literal in that unit.
    fn finish_number(&mut self, v: Value, magnitude: f64) -> Result<Expr, ExprParseError> {
        if let Some((pos, Tok::Ident(name))) = self.peek()? {
            let (pos, name) = (*pos, name.clone());
            if !matches!(name.as_str(), "and" | "or" | "not") {
                self.advance()?;
                return match Duration::new(magnitude, TimeUnit::named(&name)) {
                    Some(d) => Ok(Expr::Lit(Value::Duration(d))),
                    None => Err(self.error_at(pos, "duration magnitude must be >= 0")),
                };
            }
        }
        Ok(Expr::Lit(v))
    }
}

/// Parse a complete expression; trailing input is an error.
pub fn parse_expr(src: &str) -> Result<Expr, ExprParseError> {
    let mut p = Parser::new(src);
    let e = p.parse_or()?;
    match p.advance()? {
        None => Ok(e),
        Some((pos, tok)) => Err(ExprParseError {
            pos,
            msg: format!("trailing input after expression: {tok:?}"),
        }),
    }
}
