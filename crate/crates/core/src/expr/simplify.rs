use super::{BinOp, Expr, Func};

/// Identity elimination, constant folding and sign normalization.
///
/// Every rewrite is exact in IEEE arithmetic (sign moves, `x + 0`, `x * 1`,
/// folding of the very operation the evaluator would perform), so the result
/// evaluates bit-for-bit like the input wherever the input is finite. Folds
/// that would raise an evaluation error (`1/0`, `sqrt(-1)`) are left alone.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Coord(_) | Expr::Param(_) => e.clone(),
        Expr::Neg(a) => neg(simplify(a)),
        Expr::Binary(op, a, b) => binary(*op, simplify(a), simplify(b)),
        Expr::Pow(a, k) => pow(simplify(a), *k),
        Expr::Call(f, a) => call(*f, simplify(a)),
    }
}

fn konst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn split_neg(e: Expr) -> (bool, Expr) {
    match e {
        Expr::Neg(inner) => (true, *inner),
        other => (false, other),
    }
}

fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    match op {
        BinOp::Add => add(a, b),
        BinOp::Sub => sub(a, b),
        BinOp::Mul => mul(a, b),
        BinOp::Div => div(a, b),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (konst(&a), konst(&b)) {
        return Expr::Const(x + y);
    }
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    match (a, b) {
        (a, Expr::Neg(b)) => sub(a, *b),
        (a, Expr::Const(c)) if c < 0.0 => sub(a, Expr::Const(-c)),
        (Expr::Neg(a), b) => sub(b, *a),
        (a, b) => Expr::binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (konst(&a), konst(&b)) {
        return Expr::Const(x - y);
    }
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return neg(b);
    }
    match (a, b) {
        (a, Expr::Neg(b)) => add(a, *b),
        (a, Expr::Const(c)) if c < 0.0 => add(a, Expr::Const(-c)),
        (a, b) => Expr::binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (konst(&a), konst(&b)) {
        return Expr::Const(x * y);
    }
    if a.is_zero() || b.is_zero() {
        return Expr::zero();
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    if konst(&a) == Some(-1.0) {
        return neg(b);
    }
    if konst(&b) == Some(-1.0) {
        return neg(a);
    }
    let (na, a) = split_neg(a);
    let (nb, b) = split_neg(b);
    let (na, a) = match a {
        Expr::Const(c) if c < 0.0 => (!na, Expr::Const(-c)),
        other => (na, other),
    };
    let (nb, b) = match b {
        Expr::Const(c) if c < 0.0 => (!nb, Expr::Const(-c)),
        other => (nb, other),
    };
    if na || nb {
        let m = mul(a, b);
        return if na != nb { neg(m) } else { m };
    }
    Expr::binary(BinOp::Mul, a, b)
}

fn div(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (konst(&a), konst(&b)) {
        if y != 0.0 {
            return Expr::Const(x / y);
        }
    }
    if b.is_one() {
        return a;
    }
    if a.is_zero() && !b.is_zero() {
        return Expr::zero();
    }
    let (na, a) = split_neg(a);
    let (nb, b) = split_neg(b);
    if na || nb {
        let q = div(a, b);
        return if na != nb { neg(q) } else { q };
    }
    Expr::binary(BinOp::Div, a, b)
}

fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => return Expr::one(),
        1 => return a,
        _ => {}
    }
    if let Some(c) = konst(&a) {
        if c != 0.0 || k > 0 {
            return Expr::Const(c.powi(k));
        }
    }
    match a {
        Expr::Neg(inner) if k % 2 == 0 => pow(*inner, k),
        Expr::Neg(inner) => neg(pow(*inner, k)),
        other => Expr::Pow(Box::new(other), k),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    if let Some(c) = konst(&a) {
        let folded = match f {
            Func::Sqrt if c >= 0.0 => Some(c.sqrt()),
            Func::Ln if c > 0.0 => Some(c.ln()),
            Func::Exp => Some(c.exp()),
            Func::Sin => Some(c.sin()),
            Func::Cos => Some(c.cos()),
            _ => None,
        };
        if let Some(v) = folded.filter(|v| v.is_finite()) {
            return Expr::Const(v);
        }
    }
    Expr::call(f, a)
}
