//! The model expression language.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals, the
//! constant `pi`, variables, and the functions `sin cos exp sqrt`.
//! `^` binds tighter than unary minus and is right-associative.

use std::f64::consts::PI;

use crate::dual::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    /// Only produced by differentiation of non-constant powers.
    Ln,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Sqrt => x.sqrt(),
            Func::Ln => x.ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval<S: Scalar>(&self, vars: &[S]) -> S {
        match self {
            Expr::Num(v) => S::from_f64(*v),
            Expr::Var(i) => vars[*i],
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Pow(a, b) => {
                let base = a.eval(vars);
                match **b {
                    Expr::Num(p) if p.fract() == 0.0 && p.abs() <= 64.0 => base.powi(p as i32),
                    Expr::Num(p) => base.powc(p),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(vars)),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.max_var().max(b.max_var())
            }
        }
    }

    pub fn depends_on(&self, k: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == k,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(k),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(k) || b.depends_on(k)
            }
        }
    }

    /// Replaces every variable by the expression `f(index)`.
    pub fn substitute(&self, f: &dyn Fn(usize) -> Expr) -> Expr {
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => f(*i),
            Expr::Neg(a) => neg(a.substitute(f)),
            Expr::Add(a, b) => add(a.substitute(f), b.substitute(f)),
            Expr::Sub(a, b) => sub(a.substitute(f), b.substitute(f)),
            Expr::Mul(a, b) => mul(a.substitute(f), b.substitute(f)),
            Expr::Div(a, b) => div(a.substitute(f), b.substitute(f)),
            Expr::Pow(a, b) => pow(a.substitute(f), b.substitute(f)),
            Expr::Call(g, a) => call(*g, a.substitute(f)),
        }
    }

    /// Symbolic partial derivative with respect to variable `k`.
    pub fn derivative(&self, k: usize) -> Expr {
        if !self.depends_on(k) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == k { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(k)),
            Expr::Add(a, b) => add(a.derivative(k), b.derivative(k)),
            Expr::Sub(a, b) => sub(a.derivative(k), b.derivative(k)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(k), (**b).clone()),
                mul((**a).clone(), b.derivative(k)),
            ),
            Expr::Div(a, b) => sub(
                div(a.derivative(k), (**b).clone()),
                div(mul((**a).clone(), b.derivative(k)), mul((**b).clone(), (**b).clone())),
            ),
            Expr::Pow(a, b) => match b.as_num() {
                Some(p) => mul(
                    mul(Expr::Num(p), pow((**a).clone(), Expr::Num(p - 1.0))),
                    a.derivative(k),
                ),
                None => mul(
                    self.clone(),
                    add(
                        mul(b.derivative(k), call(Func::Ln, (**a).clone())),
                        div(mul((**b).clone(), a.derivative(k)), (**a).clone()),
                    ),
                ),
            },
            Expr::Call(f, a) => {
                let inner = a.derivative(k);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Exp => call(Func::Exp, a),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, a)),
                    Func::Ln => div(Expr::Num(1.0), a),
                };
                mul(outer, inner)
            }
        }
    }
}

// Constructors with constant folding of the trivial cases.

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_num(), b.as_num()) {
        (Some(x), _) if x == 0.0 => Expr::Num(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    match b.as_num() {
        Some(p) if p == 0.0 => Expr::Num(1.0),
        Some(p) if p == 1.0 => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

/// Sum of terms, folding zeros.
pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms.into_iter().fold(Expr::Num(0.0), add)
}

// ---------------------------------------------------------------- parser

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(char::is_ascii_digit)) {
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
            let v: f64 = text.parse().map_err(|_| parse_err(col, format!("malformed number '{text}'")))?;
            out.push((Tok::Num(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => return Err(parse_err(col, format!("unexpected character '{c}'"))),
            };
            out.push((tok, col));
            i += 1;
        }
    }
    Ok(out)
}

fn parse_err(column: usize, message: String) -> Error {
    Error::Parse { line: 1, column, message }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(_, c)| *c)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { Expr::Add(Box::new(lhs), Box::new(rhs)) } else { Expr::Sub(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op @ ('*' | '/'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { Expr::Mul(Box::new(lhs), Box::new(rhs)) } else { Expr::Div(Box::new(lhs), Box::new(rhs)) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let col = self.col();
        let Some((tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(parse_err(col, "unexpected end of expression".into()));
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == Some(&Tok::LParen) {
                    let f = Func::from_name(&name)
                        .ok_or_else(|| parse_err(col, format!("unknown function '{name}'")))?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    Ok(Expr::Var(i))
                } else if name == "pi" {
                    Ok(Expr::Num(PI))
                } else {
                    Err(parse_err(col, format!("unknown variable '{name}'")))
                }
            }
            Tok::RParen => Err(parse_err(col, "unexpected ')'".into())),
            Tok::Op(c) => Err(parse_err(col, format!("unexpected operator '{c}'"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(parse_err(self.col(), "expected ')'".into()))
        }
    }
}

/// Parses `src` with the given variable names. Errors carry a 1-based
/// column into `src` and line 1.
pub fn parse(src: &str, vars: &[&str]) -> Result<Expr> {
    let toks = lex(src)?;
    let end_col = src.chars().count() + 1;
    let mut p = Parser { toks, pos: 0, end_col, vars };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(parse_err(p.col(), "unexpected trailing input".into()));
    }
    Ok(e)
}
