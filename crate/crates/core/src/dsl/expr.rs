//! Arithmetic expressions over named coordinates.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := unary ('^' factor)?
//! unary  := '-' unary | atom
//! atom   := number | var | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds tighter than `^`, so `-x^2` is `(-x)^2`. The exponent of
//! `^` must be constant. `abs` is differentiated as `sign`, with `sign(0) = 0`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Sign,
}

impl UnaryOp {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "log" => Self::Log,
            "sqrt" => Self::Sqrt,
            "tanh" => Self::Tanh,
            "abs" => Self::Abs,
            "sign" => Self::Sign,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Self::Neg => "-",
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sqrt => "sqrt",
            Self::Tanh => "tanh",
            Self::Abs => "abs",
            Self::Sign => "sign",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    /// Variable name and its index in the declared variable list.
    Var(String, usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// A parsed expression together with the variable list it was resolved against.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    pub root: Expr,
    pub vars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(u8),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            let start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i < b.len() && b[i] == b'.' {
                i += 1;
                while i < b.len() && b[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && b[j].is_ascii_digit() {
                    while j < b.len() && b[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("malformed number '{s}'"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    return Err(Error::Parse {
                        offset: i,
                        message: "unexpected character".into(),
                    })
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    vars: &'a [String],
    depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.1)
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            offset,
            message: message.into(),
        })
    }

    fn starts_operand(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Num(_) | Tok::Ident(_) | Tok::LParen | Tok::Op(b'-'))
        )
    }

    fn operand_after(&mut self, op: u8, at: usize) -> Result<()> {
        if self.starts_operand() {
            Ok(())
        } else {
            self.err(at, format!("expected operand after '{}'", op as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err(self.offset(), "expression nested too deeply");
        }
        let mut lhs = self.term()?;
        while let Some(Tok::Op(op @ (b'+' | b'-'))) = self.peek().cloned() {
            let at = self.offset();
            self.pos += 1;
            self.operand_after(op, at)?;
            let rhs = self.term()?;
            let kind = if op == b'+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(kind, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(Tok::Op(op @ (b'*' | b'/'))) = self.peek().cloned() {
            let at = self.offset();
            self.pos += 1;
            self.operand_after(op, at)?;
            let rhs = self.factor()?;
            let kind = if op == b'*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(kind, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if let Some(Tok::Op(b'^')) = self.peek() {
            let at = self.offset();
            self.pos += 1;
            self.operand_after(b'^', at)?;
            let exp_at = self.offset();
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return self.err(exp_at, "expression nested too deeply");
            }
            let exponent = self.factor()?;
            self.depth -= 1;
            if contains_var(&exponent) {
                return self.err(exp_at, "exponent must be constant");
            }
            let c = eval_const(&exponent).map_err(|_| Error::Parse {
                offset: exp_at,
                message: "exponent does not evaluate to a finite constant".into(),
            })?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(Expr::Number(c))));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Op(b'-')) = self.peek() {
            let at = self.offset();
            self.pos += 1;
            self.operand_after(b'-', at)?;
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return self.err(at, "expression nested too deeply");
            }
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            None => self.err(at, "unexpected end of input"),
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Number(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.close(at)?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if let Some(op) = UnaryOp::from_name(&name) {
                    if self.peek() != Some(&Tok::LParen) {
                        return self.err(self.offset(), format!("expected '(' after '{name}'"));
                    }
                    let open = self.offset();
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.close(open)?;
                    return Ok(Expr::Unary(op, Box::new(arg)));
                }
                if let Some(idx) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::Var(name, idx));
                }
                if name == "pi" {
                    return Ok(Expr::Number(std::f64::consts::PI));
                }
                self.err(at, format!("unknown identifier '{name}'"))
            }
            Some(Tok::RParen) => self.err(at, "unexpected ')'"),
            Some(Tok::Op(op)) => self.err(at, format!("unexpected '{}'", op as char)),
        }
    }

    fn close(&mut self, open: usize) -> Result<()> {
        match self.peek() {
            Some(Tok::RParen) => {
                self.pos += 1;
                Ok(())
            }
            None => self.err(open, "unbalanced '('"),
            Some(_) => self.err(self.offset(), "expected ')'"),
        }
    }
}

fn contains_var(e: &Expr) -> bool {
    match e {
        Expr::Number(_) => false,
        Expr::Var(..) => true,
        Expr::Unary(_, a) => contains_var(a),
        Expr::Binary(_, a, b) => contains_var(a) || contains_var(b),
    }
}

fn eval_const(e: &Expr) -> Result<f64> {
    let v = eval_node(e, &[])?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Eval("non-finite constant".into()))
    }
}

/// Parses `text`, resolving identifiers against `vars`.
pub fn parse_expr(text: &str, vars: &[&str]) -> Result<ExprAst> {
    let vars: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(Error::Parse {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        vars: &vars,
        depth: 0,
    };
    let root = p.expr()?;
    if p.pos < p.toks.len() {
        let at = p.offset();
        return match p.peek() {
            Some(Tok::RParen) => p.err(at, "unbalanced ')'"),
            _ => p.err(at, "unexpected token"),
        };
    }
    Ok(ExprAst { root, vars })
}

fn domain(what: &str, point: &[f64]) -> Error {
    Error::Domain {
        what: what.into(),
        point: point.to_vec(),
    }
}

fn eval_node(e: &Expr, vals: &[f64]) -> Result<f64> {
    Ok(match e {
        Expr::Number(v) => *v,
        Expr::Var(name, i) => *vals
            .get(*i)
            .ok_or_else(|| Error::Eval(format!("unbound variable '{name}'")))?,
        Expr::Unary(op, a) => {
            let x = eval_node(a, vals)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => {
                    if x <= 0.0 {
                        return Err(domain("log of non-positive argument", vals));
                    }
                    x.ln()
                }
                UnaryOp::Sqrt => {
                    if x < 0.0 {
                        return Err(domain("sqrt of negative argument", vals));
                    }
                    x.sqrt()
                }
                UnaryOp::Tanh => x.tanh(),
                UnaryOp::Abs => x.abs(),
                UnaryOp::Sign => {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
            }
        }
        Expr::Binary(op, a, b) => {
            let x = eval_node(a, vals)?;
            let y = eval_node(b, vals)?;
            match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => x / y,
                BinaryOp::Pow => pow(x, y),
            }
        }
    })
}

fn pow(x: f64, c: f64) -> f64 {
    if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
        x.powi(c as i32)
    } else {
        x.powf(c)
    }
}

impl ExprAst {
    /// Evaluates with values given positionally in declared-variable order.
    pub fn eval(&self, vals: &[f64]) -> Result<f64> {
        eval_node(&self.root, vals)
    }

    /// Symbolic derivative with respect to the variable at `index`.
    pub fn diff_index(&self, index: usize) -> ExprAst {
        ExprAst {
            root: diff_node(&self.root, index),
            vars: self.vars.clone(),
        }
    }

    pub fn is_constant(&self) -> bool {
        !contains_var(&self.root)
    }
}

/// Evaluates with named bindings.
pub fn eval_expr(ast: &ExprAst, bindings: &HashMap<String, f64>) -> Result<f64> {
    let mut vals = Vec::with_capacity(ast.vars.len());
    for name in &ast.vars {
        match bindings.get(name) {
            Some(v) => vals.push(*v),
            None if contains_named(&ast.root, name) => {
                return Err(Error::Eval(format!("unbound variable '{name}'")))
            }
            None => vals.push(f64::NAN),
        }
    }
    eval_node(&ast.root, &vals)
}

fn contains_named(e: &Expr, name: &str) -> bool {
    match e {
        Expr::Number(_) => false,
        Expr::Var(n, _) => n == name,
        Expr::Unary(_, a) => contains_named(a, name),
        Expr::Binary(_, a, b) => contains_named(a, name) || contains_named(b, name),
    }
}

/// Symbolic derivative with respect to `var`; unknown names differentiate to 0.
pub fn diff_expr(ast: &ExprAst, var: &str) -> ExprAst {
    match ast.vars.iter().position(|v| v == var) {
        Some(i) => ast.diff_index(i),
        None => ExprAst {
            root: Expr::Number(0.0),
            vars: ast.vars.clone(),
        },
    }
}

fn num(v: f64) -> Expr {
    Expr::Number(v)
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Number(x) if *x == v)
}

fn fold(v: f64, otherwise: Expr) -> Expr {
    if v.is_finite() {
        num(v)
    } else {
        otherwise
    }
}

fn mk_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Number(x) = a {
        if let Ok(v) = eval_node(&Expr::Unary(op, Box::new(num(x))), &[]) {
            if v.is_finite() {
                return num(v);
            }
        }
    }
    if op == UnaryOp::Neg {
        if let Expr::Unary(UnaryOp::Neg, inner) = a {
            return *inner;
        }
    }
    Expr::Unary(op, Box::new(a))
}

fn mk_neg(a: Expr) -> Expr {
    mk_unary(UnaryOp::Neg, a)
}

fn mk_bin(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    Expr::Binary(op, Box::new(a), Box::new(b))
}

fn mk_add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Number(x), Expr::Number(y)) => fold(x + y, mk_bin(BinaryOp::Add, a.clone(), b.clone())),
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        _ => mk_bin(BinaryOp::Add, a, b),
    }
}

fn mk_sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Number(x), Expr::Number(y)) => fold(x - y, mk_bin(BinaryOp::Sub, a.clone(), b.clone())),
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => mk_neg(b),
        _ => mk_bin(BinaryOp::Sub, a, b),
    }
}

fn mk_mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Number(x), Expr::Number(y)) => fold(x * y, mk_bin(BinaryOp::Mul, a.clone(), b.clone())),
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        _ if is_num(&a, -1.0) => mk_neg(b),
        _ if is_num(&b, -1.0) => mk_neg(a),
        _ => mk_bin(BinaryOp::Mul, a, b),
    }
}

fn mk_div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Number(x), Expr::Number(y)) => fold(x / y, mk_bin(BinaryOp::Div, a.clone(), b.clone())),
        _ if is_num(&a, 0.0) => num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => mk_bin(BinaryOp::Div, a, b),
    }
}

fn mk_pow(a: Expr, c: f64) -> Expr {
    if c == 0.0 {
        return num(1.0);
    }
    if c == 1.0 {
        return a;
    }
    if let Expr::Number(x) = a {
        return fold(pow(x, c), mk_bin(BinaryOp::Pow, num(x), num(c)));
    }
    mk_bin(BinaryOp::Pow, a, num(c))
}

fn diff_node(e: &Expr, k: usize) -> Expr {
    match e {
        Expr::Number(_) => num(0.0),
        Expr::Var(_, i) => num(if *i == k { 1.0 } else { 0.0 }),
        Expr::Unary(op, a) => {
            let da = diff_node(a, k);
            if is_num(&da, 0.0) {
                return num(0.0);
            }
            let u = (**a).clone();
            let outer = match op {
                UnaryOp::Neg => return mk_neg(da),
                UnaryOp::Sin => mk_unary(UnaryOp::Cos, u),
                UnaryOp::Cos => mk_neg(mk_unary(UnaryOp::Sin, u)),
                UnaryOp::Exp => mk_unary(UnaryOp::Exp, u),
                UnaryOp::Log => return mk_div(da, u),
                UnaryOp::Sqrt => return mk_div(da, mk_mul(num(2.0), mk_unary(UnaryOp::Sqrt, u))),
                UnaryOp::Tanh => mk_sub(num(1.0), mk_pow(mk_unary(UnaryOp::Tanh, u), 2.0)),
                UnaryOp::Abs => mk_unary(UnaryOp::Sign, u),
                UnaryOp::Sign => return num(0.0),
            };
            mk_mul(outer, da)
        }
        Expr::Binary(op, a, b) => {
            let (u, w) = ((**a).clone(), (**b).clone());
            match op {
                BinaryOp::Add => mk_add(diff_node(a, k), diff_node(b, k)),
                BinaryOp::Sub => mk_sub(diff_node(a, k), diff_node(b, k)),
                BinaryOp::Mul => mk_add(mk_mul(diff_node(a, k), w), mk_mul(u, diff_node(b, k))),
                BinaryOp::Div => {
                    let da = diff_node(a, k);
                    let db = diff_node(b, k);
                    if is_num(&db, 0.0) {
                        return mk_div(da, w);
                    }
                    mk_div(mk_sub(mk_mul(da, w.clone()), mk_mul(u, db)), mk_pow(w, 2.0))
                }
                BinaryOp::Pow => {
                    let c = match w {
                        Expr::Number(c) => c,
                        _ => eval_const(&w).unwrap_or(f64::NAN),
                    };
                    let da = diff_node(a, k);
                    mk_mul(mk_mul(num(c), mk_pow(u, c - 1.0)), da)
                }
            }
        }
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Number(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 4,
        Expr::Number(_) | Expr::Var(..) => 5,
        Expr::Unary(UnaryOp::Neg, _) => 4,
        Expr::Unary(..) => 5,
        Expr::Binary(BinaryOp::Add | BinaryOp::Sub, ..) => 1,
        Expr::Binary(BinaryOp::Mul | BinaryOp::Div, ..) => 2,
        Expr::Binary(BinaryOp::Pow, ..) => 3,
    }
}

fn fmt_number(v: f64) -> String {
    let s = format!("{v}");
    if s.len() > 24 {
        format!("{v:e}")
    } else {
        s
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "(")?;
        write_node(f, e)?;
        write!(f, ")")
    } else {
        write_node(f, e)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e {
        Expr::Number(v) => write!(f, "{}", fmt_number(*v)),
        Expr::Var(name, _) => write!(f, "{name}"),
        Expr::Unary(UnaryOp::Neg, a) => {
            write!(f, "-")?;
            write_wrapped(f, a, prec(a) < 4)
        }
        Expr::Unary(op, a) => {
            write!(f, "{}(", op.name())?;
            write_node(f, a)?;
            write!(f, ")")
        }
        Expr::Binary(op, a, b) => match op {
            BinaryOp::Add | BinaryOp::Sub => {
                write_node(f, a)?;
                write!(f, "{}", if *op == BinaryOp::Add { " + " } else { " - " })?;
                write_wrapped(f, b, prec(b) <= 1)
            }
            BinaryOp::Mul | BinaryOp::Div => {
                write_wrapped(f, a, prec(a) < 2)?;
                write!(f, "{}", if *op == BinaryOp::Mul { "*" } else { "/" })?;
                write_wrapped(f, b, prec(b) <= 2)
            }
            BinaryOp::Pow => {
                write_wrapped(f, a, prec(a) <= 3)?;
                write!(f, "^")?;
                write_wrapped(f, b, prec(b) < 3)
            }
        },
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const XV: [&str; 4] = ["x0", "x1", "v0", "v1"];

    fn var(name: &str) -> Expr {
        Expr::Var(name.into(), XV.iter().position(|v| *v == name).unwrap())
    }

    #[test]
    fn parses_difference_of_squares() {
        let ast = parse_expr("v0^2 - v1^2", &XV).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Sub,
            Box::new(Expr::Binary(BinaryOp::Pow, Box::new(var("v0")), Box::new(num(2.0)))),
            Box::new(Expr::Binary(BinaryOp::Pow, Box::new(var("v1")), Box::new(num(2.0)))),
        );
        assert_eq!(ast.root, expected);
    }

    #[test]
    fn parses_nested_calls() {
        let ast = parse_expr("sin(x0)*exp(-x1)", &XV).unwrap();
        let expected = Expr::Binary(
            BinaryOp::Mul,
            Box::new(Expr::Unary(UnaryOp::Sin, Box::new(var("x0")))),
            Box::new(Expr::Unary(
                UnaryOp::Exp,
                Box::new(Expr::Unary(UnaryOp::Neg, Box::new(var("x1")))),
            )),
        );
        assert_eq!(ast.root, expected);
    }

    #[test]
    fn reports_offsets() {
        let offset = |s: &str| match parse_expr(s, &XV) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected parse error for {s:?}, got {other:?}"),
        };
        assert_eq!(offset("2 +* 3"), 2);
        assert_eq!(offset(""), 0);
        assert_eq!(offset("   "), 0);
        assert_eq!(offset("y + 1"), 0);
        assert_eq!(offset("(x0 + 1"), 0);
        assert_eq!(offset("x0 + 1)"), 6);
        assert_eq!(offset("x0 ^ x1"), 5);
        assert_eq!(offset("sin x0"), 4);
    }

    #[test]
    fn evaluates() {
        let ast = parse_expr("v0^2 - v1^2", &XV).unwrap();
        assert_eq!(ast.eval(&[0.0, 0.0, 1.0, 0.5]).unwrap(), 0.75);
        let t = parse_expr("tanh(0)", &[]).unwrap();
        assert_eq!(t.eval(&[]).unwrap(), 0.0);
        let s = parse_expr("sqrt(x0)", &XV).unwrap();
        assert!(matches!(s.eval(&[-1.0, 0.0, 0.0, 0.0]), Err(Error::Domain { .. })));
        let l = parse_expr("log(x0)", &XV).unwrap();
        assert!(matches!(l.eval(&[0.0; 4]), Err(Error::Domain { .. })));
    }

    #[test]
    fn named_bindings() {
        let ast = parse_expr("v0^2 - v1^2", &XV).unwrap();
        let mut b = HashMap::new();
        b.insert("v0".to_string(), 1.0);
        assert!(matches!(eval_expr(&ast, &b), Err(Error::Eval(_))));
        b.insert("v1".to_string(), 0.5);
        assert_eq!(eval_expr(&ast, &b).unwrap(), 0.75);
    }

    #[test]
    fn unary_minus_binds_tighter_than_power() {
        let ast = parse_expr("-x0^2", &XV).unwrap();
        assert_eq!(ast.eval(&[3.0, 0.0, 0.0, 0.0]).unwrap(), 9.0);
        let printed = ast.to_string();
        let back = parse_expr(&printed, &XV).unwrap();
        assert_eq!(back.eval(&[3.0, 0.0, 0.0, 0.0]).unwrap(), 9.0);
        let neg = parse_expr("-(x0^2)", &XV).unwrap();
        assert_eq!(neg.eval(&[3.0, 0.0, 0.0, 0.0]).unwrap(), -9.0);
        assert_eq!(neg.to_string(), "-(x0^2)");
    }

    #[test]
    fn power_is_right_associative() {
        let ast = parse_expr("2^3^2", &[]).unwrap();
        assert_eq!(ast.eval(&[]).unwrap(), 512.0);
    }

    #[test]
    fn derivatives_print_folded() {
        let ast = parse_expr("v0^2 - v1^2", &XV).unwrap();
        assert_eq!(diff_expr(&ast, "v0").to_string(), "2*v0");
        let ast = parse_expr("sin(x0)*v0", &XV).unwrap();
        assert_eq!(diff_expr(&ast, "x0").to_string(), "cos(x0)*v0");
        assert_eq!(diff_expr(&ast, "x1").to_string(), "0");
    }

    #[test]
    fn abs_derivative_is_sign() {
        let ast = parse_expr("abs(x0)", &XV).unwrap();
        let d = diff_expr(&ast, "x0");
        assert_eq!(d.eval(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(d.eval(&[-2.0, 0.0, 0.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn pi_constant() {
        let ast = parse_expr("cos(pi)", &[]).unwrap();
        assert!((ast.eval(&[]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let s = "(".repeat(5000) + "1" + &")".repeat(5000);
        assert!(parse_expr(&s, &[]).is_err());
        let s = "-".repeat(5000) + "1";
        assert!(parse_expr(&s, &[]).is_err());
    }
}
