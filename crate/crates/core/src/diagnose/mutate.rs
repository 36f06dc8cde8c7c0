use crate::expr::{BinOp, Expr};
use crate::field::{FieldError, VectorField};

/// Split `e` into its top-level additive terms with their signs:
/// `a - b + c` gives `[(+, a), (-, b), (+, c)]`.
pub fn top_level_terms(e: &Expr) -> Vec<(bool, Expr)> {
    fn walk(e: &Expr, positive: bool, out: &mut Vec<(bool, Expr)>) {
        match e {
            Expr::Binary(BinOp::Add, a, b) => {
                walk(a, positive, out);
                walk(b, positive, out);
            }
            Expr::Binary(BinOp::Sub, a, b) => {
                walk(a, positive, out);
                walk(b, !positive, out);
            }
            Expr::Neg(a) => walk(a, !positive, out),
            other => out.push((positive, other.clone())),
        }
    }
    let mut out = Vec::new();
    walk(e, true, &mut out);
    out
}

/// `e` with the sign of its `k`-th top-level term (0-based) flipped, or
/// `None` if there are not that many terms.
pub fn flip_term(e: &Expr, k: usize) -> Option<Expr> {
    let mut terms = top_level_terms(e);
    let t = terms.get_mut(k)?;
    t.0 = !t.0;
    let mut it = terms.into_iter();
    let (s0, t0) = it.next()?;
    let first = if s0 { t0 } else { -t0 };
    Some(it.fold(first, |acc, (s, t)| if s { acc + t } else { acc - t }))
}

/// Copy of a symbolic field with term `term` of component `component`
/// (both 0-based) sign-flipped. `None` for numeric-cofactor fields or an
/// out-of-range index.
pub fn mutate_component(v: &VectorField, component: usize, term: usize) -> Option<VectorField> {
    let mut comps = v.components()?.to_vec();
    let flipped = flip_term(comps.get(component)?, term)?;
    comps[component] = flipped;
    let out: Result<VectorField, FieldError> =
        VectorField::from_components(comps, v.bindings().clone(), v.provenance());
    out.ok().map(|f| f.with_poles(v.poles()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, ParameterBinding};

    #[test]
    fn terms_and_flip() {
        let e = parse("x1 - x2*x3 + 2 - -x1", 3, &[]).unwrap();
        let terms = top_level_terms(&e);
        assert_eq!(terms.len(), 4);
        assert_eq!(
            terms.iter().map(|t| t.0).collect::<Vec<_>>(),
            vec![true, false, true, true]
        );
        let f = flip_term(&e, 1).unwrap();
        let b = ParameterBinding::new();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(
            evaluate(&f, &x, &b).unwrap(),
            evaluate(&e, &x, &b).unwrap() + 12.0
        );
        assert!(flip_term(&e, 4).is_none());
    }

    #[test]
    fn single_term_flip_negates() {
        let e = parse("x1*x2", 2, &[]).unwrap();
        assert_eq!(flip_term(&e, 0).unwrap().to_string(), "(-(x1 * x2))");
    }
}
