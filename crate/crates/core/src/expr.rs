//! Tiny arithmetic expression language used for model coefficients, wave
//! profiles and stream functions.
//!
//! Grammar: `+ - * / ^` with the usual precedence (`^` binds tighter than
//! unary minus, which binds tighter than `*` and `/`), right-associative
//! `^`, parentheses, the functions `sin cos exp sqrt abs tanh`, the constant
//! `pi`, and free variables named by identifiers (`u1`, `x2`, `r1`, ...).
//! There is deliberately no symbolic differentiation and no user-defined
//! functions; derivatives are always taken numerically downstream.

use crate::error::{Error, Result};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            "tanh" => Some(Func::Tanh),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Name/value pairs for evaluation. Lookups are linear scans; binding sets
/// here are tiny (a handful of state components).
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pairs: Vec<(String, f64)>,
}

impl Bindings {
    pub fn new() -> Self {
        Bindings { pairs: Vec::new() }
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        if let Some(p) = self.pairs.iter_mut().find(|p| p.0 == name) {
            p.1 = value;
        } else {
            self.pairs.push((name.to_string(), value));
        }
        self
    }

    /// Binds `prefix1..prefixN` to the entries of `values`.
    pub fn numbered(prefix: &str, values: &[f64]) -> Self {
        let mut b = Bindings::new();
        b.set_numbered(prefix, values);
        b
    }

    pub fn set_numbered(&mut self, prefix: &str, values: &[f64]) -> &mut Self {
        for (i, v) in values.iter().enumerate() {
            self.set(&format!("{}{}", prefix, i + 1), *v);
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.pairs.iter().find(|p| p.0 == name).map(|p| p.1)
    }
}

impl<const N: usize> From<[(&str, f64); N]> for Bindings {
    fn from(pairs: [(&str, f64); N]) -> Self {
        let mut b = Bindings::new();
        for (k, v) in pairs {
            b.set(k, v);
        }
        b
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            (Tok::End, _) => Ok(e),
            (t, off) => Err(Error::Syntax {
                offset: off,
                msg: format!("unexpected {} after expression", t.describe()),
            }),
        }
    }

    /// Evaluates the expression. Division by zero and non-real intermediate
    /// results (NaN or infinity) are domain errors, never silent NaN/Inf, so
    /// iterative solvers downstream fail loudly.
    pub fn eval(&self, bindings: &Bindings) -> Result<f64> {
        let v = self.eval_inner(bindings)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::domain(format!("non-finite result in '{}'", self)))
        }
    }

    fn eval_inner(&self, b: &Bindings) -> Result<f64> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Var(name) => b.get(name).ok_or_else(|| Error::UnboundVariable {
                name: name.clone(),
            }),
            Expr::Neg(e) => Ok(-e.eval_inner(b)?),
            Expr::Bin(op, l, r) => {
                let a = l.eval_inner(b)?;
                let c = r.eval_inner(b)?;
                let v = match op {
                    BinOp::Add => a + c,
                    BinOp::Sub => a - c,
                    BinOp::Mul => a * c,
                    BinOp::Div => {
                        if c == 0.0 {
                            return Err(Error::domain(format!(
                                "division by zero in '{}'",
                                self
                            )));
                        }
                        a / c
                    }
                    BinOp::Pow => a.powf(c),
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::domain(format!("non-finite value in '{}'", self)))
                }
            }
            Expr::Call(f, arg) => {
                let v = f.apply(arg.eval_inner(b)?);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::domain(format!(
                        "{} out of domain in '{}'",
                        f.name(),
                        self
                    )))
                }
            }
        }
    }

    /// Free variables in deterministic (sorted) order.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(n) => {
                out.insert(n.clone());
            }
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Call(_, a) => a.collect_vars(out),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    /// Prints with minimal parentheses; `Expr::parse` of the output yields an
    /// expression that evaluates bit-identically.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn sub(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "(")?;
                go(f, e)?;
                write!(f, ")")
            } else {
                go(f, e)
            }
        }
        fn go(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
            match e {
                Expr::Num(v) => {
                    if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                        // keep literals positive so reprints never glue "--"
                        write!(f, "(0 - {})", -*v)
                    } else {
                        write!(f, "{}", v)
                    }
                }
                Expr::Var(n) => write!(f, "{}", n),
                Expr::Neg(inner) => {
                    write!(f, "-")?;
                    sub(f, inner, 3)
                }
                Expr::Bin(op, l, r) => {
                    let (prec, sym) = match op {
                        BinOp::Add => (1, "+"),
                        BinOp::Sub => (1, "-"),
                        BinOp::Mul => (2, "*"),
                        BinOp::Div => (2, "/"),
                        BinOp::Pow => (4, "^"),
                    };
                    match op {
                        // left-assoc: rhs needs strictly higher precedence
                        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => {
                            sub(f, l, prec)?;
                            write!(f, " {} ", sym)?;
                            sub(f, r, prec + 1)
                        }
                        // right-assoc
                        BinOp::Pow => {
                            sub(f, l, prec + 1)?;
                            write!(f, "{}", sym)?;
                            sub(f, r, prec)
                        }
                    }
                }
                Expr::Call(func, a) => {
                    write!(f, "{}(", func.name())?;
                    go(f, a)?;
                    write!(f, ")")
                }
            }
        }
        go(f, self)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {}", v),
            Tok::Ident(s) => format!("identifier '{}'", s),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            b'-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            b'*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            b'/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            b'^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            b'(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent part: e or E, optional sign, at least one digit
                if i < bytes.len()
                    && (bytes[i] == b'e' || bytes[i] == b'E')
                    && i + 1 < bytes.len()
                    && (bytes[i + 1].is_ascii_digit()
                        || ((bytes[i + 1] == b'+' || bytes[i + 1] == b'-')
                            && i + 2 < bytes.len()
                            && bytes[i + 2].is_ascii_digit()))
                {
                    i += 2;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| Error::Syntax {
                    offset: start,
                    msg: format!("malformed number '{}'", text),
                })?;
                out.push((Tok::Num(v), start));
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            _ => {
                return Err(Error::Syntax {
                    offset: i,
                    msg: format!("unexpected character '{}'", src[i..].chars().next().unwrap()),
                })
            }
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> (Tok, usize) {
        self.tokens[self.pos].clone()
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek().0 {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek().0 {
                Tok::Star => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary minus sits below '^': -x^2 is -(x^2)
    fn factor(&mut self) -> Result<Expr> {
        if let (Tok::Minus, _) = self.peek() {
            self.bump();
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let (Tok::Caret, _) = self.peek() {
            self.bump();
            // right-associative; exponent may carry its own unary minus
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let (tok, off) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if let (Tok::LParen, _) = self.peek() {
                    let func = Func::from_name(&name).ok_or(Error::UnknownFunction {
                        name: name.clone(),
                        offset: off,
                    })?;
                    self.bump(); // '('
                    let arg = self.expr()?;
                    match self.bump() {
                        (Tok::RParen, _) => Ok(Expr::Call(func, Box::new(arg))),
                        (t, o) => Err(Error::Syntax {
                            offset: o,
                            msg: format!("expected ')', found {}", t.describe()),
                        }),
                    }
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                let e = self.expr()?;
                match self.bump() {
                    (Tok::RParen, _) => Ok(e),
                    (t, o) => Err(Error::Syntax {
                        offset: o,
                        msg: format!("expected ')', found {}", t.describe()),
                    }),
                }
            }
            t => Err(Error::Syntax {
                offset: off,
                msg: format!("expected operand, found {}", t.describe()),
            }),
        }
    }
}
