use super::{BinOp, Expr, Func};

/// Exact partial derivative with respect to `x{coordinate}`.
///
/// The result is not simplified; run [`super::simplify`] afterwards.
pub fn differentiate(e: &Expr, coordinate: usize) -> Expr {
    match e {
        Expr::Const(_) | Expr::Param(_) => Expr::zero(),
        Expr::Coord(i) => Expr::Const(if *i == coordinate { 1.0 } else { 0.0 }),
        Expr::Neg(a) => -differentiate(a, coordinate),
        Expr::Binary(op, a, b) => {
            let da = differentiate(a, coordinate);
            let db = differentiate(b, coordinate);
            let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
            match op {
                BinOp::Add => da + db,
                BinOp::Sub => da - db,
                BinOp::Mul => da * b + a * db,
                BinOp::Div => (da * b.clone() - a * db) / b.powi(2),
            }
        }
        Expr::Pow(a, k) => {
            if *k == 0 {
                return Expr::zero();
            }
            let da = differentiate(a, coordinate);
            Expr::Const(f64::from(*k)) * a.as_ref().clone().powi(k - 1) * da
        }
        Expr::Call(f, a) => {
            let da = differentiate(a, coordinate);
            let a = a.as_ref().clone();
            match f {
                Func::Sqrt => da / (2.0 * Expr::call(Func::Sqrt, a)),
                Func::Exp => Expr::call(Func::Exp, a) * da,
                Func::Ln => da / a,
                Func::Sin => Expr::call(Func::Cos, a) * da,
                Func::Cos => -Expr::call(Func::Sin, a) * da,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate, parse, simplify, ParameterBinding};
    use super::*;

    fn central(e: &Expr, x: &[f64], i: usize, h: f64, b: &ParameterBinding) -> f64 {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i - 1] += h;
        xm[i - 1] -= h;
        (evaluate(e, &xp, b).unwrap() - evaluate(e, &xm, b).unwrap()) / (2.0 * h)
    }

    #[test]
    fn power_rule_on_quotient() {
        let g = ParameterBinding::new().with("g", 1.0);
        let e = parse("g/x1", 3, &["g"]).unwrap();
        let d = simplify(&differentiate(&e, 1));
        let expected = parse("-g/x1^2", 3, &["g"]).unwrap();
        for x1 in [0.5, 1.0, 3.0, -2.0] {
            let x = [x1, 1.0, 1.0];
            let got = evaluate(&d, &x, &g).unwrap();
            let want = evaluate(&expected, &x, &g).unwrap();
            assert!((got - want).abs() <= 1e-15 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn independent_variable_gives_zero() {
        let e = parse("x2*x3", 3, &[]).unwrap();
        assert_eq!(simplify(&differentiate(&e, 1)), Expr::zero());
    }

    #[test]
    fn coincidence_denominator_matches_central_difference() {
        // 1/((x1-x2)(x1-x3)) at (1,2,3): d/dx1 = -(2x1 - x2 - x3)/((x1-x2)(x1-x3))^2 = 3/4.
        let e = parse("1/((x1-x2)*(x1-x3))", 3, &[]).unwrap();
        let b = ParameterBinding::new();
        let x = [1.0, 2.0, 3.0];
        let fd = central(&e, &x, 1, 1e-5, &b);
        let exact = evaluate(&differentiate(&e, 1), &x, &b).unwrap();
        assert!((fd - exact).abs() <= 1e-8 * exact.abs(), "{fd} vs {exact}");
        assert!((exact - 0.75).abs() < 1e-15);
    }

    #[test]
    fn function_rules() {
        let b = ParameterBinding::new();
        let x = [0.7, 1.3, 2.1];
        for src in [
            "sqrt(x1*x2)",
            "exp(x1 - x3)",
            "ln(x2 + x1^2)",
            "sin(x1*x3)",
            "cos(x1/x2)",
            "x1^-3",
            "x1^0",
        ] {
            let e = parse(src, 3, &[]).unwrap();
            for i in 1..=3 {
                let d = evaluate(&differentiate(&e, i), &x, &b).unwrap();
                let fd = central(&e, &x, i, 1e-5, &b);
                assert!(
                    (d - fd).abs() <= 1e-8 * (1.0 + d.abs()),
                    "{src} d/dx{i}: {d} vs {fd}"
                );
            }
        }
    }
}
