//! Scalar expressions over the coordinates `x1..xn` and named parameters.
//!
//! An [`Expr`] is an immutable tree. The pipeline is
//! [`parse`] → [`differentiate`] → [`simplify`] → [`Program::compile`], and the
//! compiled [`Program`] is what the integrator evaluates in its inner loop.
//! [`evaluate`] walks the tree directly and is kept as the reference path.

mod diff;
mod eval;
mod parse;
mod simplify;

use std::collections::BTreeMap;
use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};

pub use diff::differentiate;
pub use eval::{evaluate, EvalError, Program};
pub use parse::{parse, ParseError, ParseErrorKind};
pub use simplify::simplify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// The closed set of elementary functions the grammar accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub const ALL: [Func; 5] = [Func::Sqrt, Func::Exp, Func::Ln, Func::Sin, Func::Cos];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Coordinate indices are 1-based, as written in source text.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Param(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Integer power with a literal exponent.
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        Expr::Const(value)
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    /// The coordinate `x{index}` (1-based).
    pub fn coord(index: usize) -> Expr {
        assert!(index >= 1, "coordinates are 1-based");
        Expr::Coord(index)
    }

    pub fn param(name: impl Into<String>) -> Expr {
        Expr::Param(name.into())
    }

    pub fn powi(self, exponent: i32) -> Expr {
        Expr::Pow(Box::new(self), exponent)
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Box::new(arg))
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(c) if *c == 1.0)
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Expr::Const(c) if *c >= 0.0 || c.is_nan())
            || matches!(self, Expr::Coord(_) | Expr::Param(_))
    }

    /// Largest coordinate index referenced, or 0 for coordinate-free trees.
    pub fn max_coord(&self) -> usize {
        let mut max = 0;
        self.visit(&mut |e| {
            if let Expr::Coord(i) = e {
                max = max.max(*i);
            }
        });
        max
    }

    /// Parameter names referenced anywhere in the tree.
    pub fn params(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Param(p) = e {
                if !names.contains(p) {
                    names.push(p.clone());
                }
            }
        });
        names
    }

    pub fn depends_on(&self, coordinate: usize) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Coord(i) if *i == coordinate));
        found
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Coord(_) | Expr::Param(_) => {}
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Replace every bound parameter by its value.
    pub fn substitute(&self, bindings: &ParameterBinding) -> Expr {
        match self {
            Expr::Param(p) => match bindings.get(p) {
                Some(v) => Expr::Const(v),
                None => self.clone(),
            },
            Expr::Const(_) | Expr::Coord(_) => self.clone(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(bindings))),
            Expr::Pow(a, k) => Expr::Pow(Box::new(a.substitute(bindings)), *k),
            Expr::Call(f, a) => Expr::Call(*f, Box::new(a.substitute(bindings))),
            Expr::Binary(op, a, b) => {
                Expr::binary(*op, a.substitute(bindings), b.substitute(bindings))
            }
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Binary(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Expr::Neg(a) => write!(f, "-{a}"),
            Expr::Pow(a, k) => write!(f, "{a}^{k}"),
            Expr::Const(c) => write!(f, "{c}"),
            other => write!(f, "{other}"),
        }
    }
}

/// Canonical text: every non-atomic node is wrapped in parentheses, so the
/// output re-parses to the same tree regardless of precedence.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Coord(i) => write!(f, "x{i}"),
            Expr::Param(p) => f.write_str(p),
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_inner(f)?;
                f.write_str(")")
            }
            Expr::Neg(_) | Expr::Binary(..) | Expr::Pow(..) => {
                f.write_str("(")?;
                self.fmt_inner(f)?;
                f.write_str(")")
            }
        }
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::binary($op, self, Expr::Const(rhs))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, Expr::Const(self), rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinOp::Add);
impl_binop!(Sub, sub, BinOp::Sub);
impl_binop!(Mul, mul, BinOp::Mul);
impl_binop!(Div, div, BinOp::Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// Values for the named parameters (e.g. the coupling `g`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterBinding(BTreeMap<String, f64>);

impl ParameterBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for ParameterBinding {
    fn from_iter<I: IntoIterator<Item = (S, f64)>>(iter: I) -> Self {
        ParameterBinding(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parenthesizes_every_compound_node() {
        let e = Expr::coord(2) * Expr::coord(3);
        assert_eq!(e.to_string(), "(x2 * x3)");
        let e = -(Expr::coord(1).powi(-2)) + Expr::call(Func::Sqrt, Expr::coord(1) + 1.0);
        assert_eq!(e.to_string(), "((-(x1^-2)) + sqrt(x1 + 1))");
        assert_eq!(Expr::Const(-2.5).to_string(), "(-2.5)");
        assert_eq!(Expr::Const(-0.0).powi(-1).to_string(), "((-0)^-1)");
    }

    #[test]
    fn substitute_binds_parameters() {
        let e = Expr::param("g") / Expr::coord(1);
        let b = ParameterBinding::new().with("g", 2.0);
        assert_eq!(e.substitute(&b), Expr::Const(2.0) / Expr::coord(1));
        assert_eq!(e.params(), vec!["g".to_string()]);
        assert_eq!(e.max_coord(), 1);
    }
}
