use thiserror::Error;

use super::{BinOp, Expr, Func, ParameterBinding};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("{func} argument {arg} outside its domain")]
    Domain { func: &'static str, arg: f64 },
    #[error("unbound parameter '{0}'")]
    UnboundParameter(String),
    #[error("state has {got} coordinates, expression needs {needed}")]
    StateLength { got: usize, needed: usize },
}

fn apply_func(func: Func, a: f64) -> Result<f64, EvalError> {
    match func {
        Func::Sqrt if a < 0.0 => Err(EvalError::Domain {
            func: "sqrt",
            arg: a,
        }),
        Func::Ln if a <= 0.0 => Err(EvalError::Domain { func: "ln", arg: a }),
        Func::Sqrt => Ok(a.sqrt()),
        Func::Ln => Ok(a.ln()),
        Func::Exp => Ok(a.exp()),
        Func::Sin => Ok(a.sin()),
        Func::Cos => Ok(a.cos()),
    }
}

fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, EvalError> {
    Ok(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b == 0.0 => return Err(EvalError::DivisionByZero),
        BinOp::Div => a / b,
    })
}

fn apply_pow(a: f64, k: i32) -> Result<f64, EvalError> {
    if k < 0 && a == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok(a.powi(k))
}

/// Tree-walking evaluation. `state[i - 1]` is the value of `xi`.
pub fn evaluate(e: &Expr, state: &[f64], bindings: &ParameterBinding) -> Result<f64, EvalError> {
    match e {
        Expr::Const(c) => Ok(*c),
        Expr::Coord(i) => state.get(i - 1).copied().ok_or(EvalError::StateLength {
            got: state.len(),
            needed: *i,
        }),
        Expr::Param(p) => bindings
            .get(p)
            .ok_or_else(|| EvalError::UnboundParameter(p.clone())),
        Expr::Neg(a) => Ok(-evaluate(a, state, bindings)?),
        Expr::Binary(op, a, b) => apply_binary(
            *op,
            evaluate(a, state, bindings)?,
            evaluate(b, state, bindings)?,
        ),
        Expr::Pow(a, k) => apply_pow(evaluate(a, state, bindings)?, *k),
        Expr::Call(f, a) => apply_func(*f, evaluate(a, state, bindings)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Coord(usize),
    Neg,
    Binary(BinOp),
    Pow(i32),
    Call(Func),
}

/// An expression flattened to postfix with parameters substituted.
///
/// Evaluates to the same IEEE result as [`evaluate`]: the operation order is
/// the tree's post-order.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    ops: Vec<Op>,
    stack_depth: usize,
    needs: usize,
}

impl Program {
    pub fn compile(e: &Expr, bindings: &ParameterBinding) -> Result<Program, EvalError> {
        let mut ops = Vec::with_capacity(e.size());
        let stack_depth = emit(e, bindings, &mut ops)?;
        Ok(Program {
            ops,
            stack_depth,
            needs: e.max_coord(),
        })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn eval(&self, state: &[f64]) -> Result<f64, EvalError> {
        if state.len() < self.needs {
            return Err(EvalError::StateLength {
                got: state.len(),
                needed: self.needs,
            });
        }
        let mut stack: Vec<f64> = Vec::with_capacity(self.stack_depth);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Coord(i) => stack.push(state[i]),
                Op::Neg => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = -*a;
                }
                Op::Binary(bop) => {
                    let b = stack.pop().expect("stack underflow");
                    let a = stack.last_mut().expect("stack underflow");
                    *a = apply_binary(bop, *a, b)?;
                }
                Op::Pow(k) => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = apply_pow(*a, k)?;
                }
                Op::Call(f) => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = apply_func(f, *a)?;
                }
            }
        }
        Ok(stack.pop().expect("empty program"))
    }
}

/// Returns the stack depth needed for the subtree.
fn emit(e: &Expr, bindings: &ParameterBinding, ops: &mut Vec<Op>) -> Result<usize, EvalError> {
    Ok(match e {
        Expr::Const(c) => {
            ops.push(Op::Const(*c));
            1
        }
        Expr::Coord(i) => {
            ops.push(Op::Coord(i - 1));
            1
        }
        Expr::Param(p) => {
            let v = bindings
                .get(p)
                .ok_or_else(|| EvalError::UnboundParameter(p.clone()))?;
            ops.push(Op::Const(v));
            1
        }
        Expr::Neg(a) => {
            let d = emit(a, bindings, ops)?;
            ops.push(Op::Neg);
            d
        }
        Expr::Pow(a, k) => {
            let d = emit(a, bindings, ops)?;
            ops.push(Op::Pow(*k));
            d
        }
        Expr::Call(f, a) => {
            let d = emit(a, bindings, ops)?;
            ops.push(Op::Call(*f));
            d
        }
        Expr::Binary(op, a, b) => {
            let da = emit(a, bindings, ops)?;
            let db = emit(b, bindings, ops)?;
            ops.push(Op::Binary(*op));
            da.max(db + 1)
        }
    })
}
