use eulertop::diagnose::{field_identity_suite, SampleDomain};
use eulertop::expr::{Expr, Func, ParameterBinding};
use eulertop::field::{build_deformed_3d, build_deformed_nd, builtin, synthesize, DeformationSpec};
use proptest::prelude::*;

fn leaf(n: usize) -> impl Strategy<Value = Expr> {
    prop_oneof![
        (1..=n).prop_map(Expr::coord),
        Just(Expr::param("g")),
        (1u32..8).prop_map(|k| Expr::constant(k as f64 * 0.5)),
    ]
}

/// Deformation functions built from polynomials and smooth bounded
/// functions, so that the synthesized field is defined everywhere.
fn deformation(n: usize) -> impl Strategy<Value = Expr> {
    leaf(n).prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (1.0 + b.powi(2))),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.prop_map(|a| Expr::call(Func::Exp, Expr::call(Func::Cos, a))),
        ]
    })
}

fn spec(n: usize) -> impl Strategy<Value = DeformationSpec> {
    prop::collection::vec(deformation(n), n - 1).prop_map(move |alphas| {
        DeformationSpec::new(n, alphas, ParameterBinding::new().with("g", 0.3)).unwrap()
    })
}

fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let size = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if diff == 0.0 {
        0.0
    } else {
        diff / size
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthesized_fields_are_orthogonal_and_divergence_free(s in spec(3), seed in any::<u64>()) {
        let v = synthesize(&s).unwrap();
        let pts = SampleDomain::cube(3, 1.5).sample(200, seed).unwrap();
        let r = field_identity_suite(&v, &s, &pts).unwrap();
        prop_assert!(r.worst_orthogonality_scaled() <= 1e-12, "{:?}", r);
        prop_assert!(r.max_divergence.unwrap() <= 1e-10, "{:?}", r);
    }

    #[test]
    fn four_dimensional_fields_are_orthogonal(s in spec(4), seed in any::<u64>()) {
        let v = synthesize(&s).unwrap();
        let pts = SampleDomain::cube(4, 1.5).sample(100, seed).unwrap();
        let r = field_identity_suite(&v, &s, &pts).unwrap();
        prop_assert!(r.worst_orthogonality_scaled() <= 1e-12, "{:?}", r);
        prop_assert!(r.max_divergence.unwrap() <= 1e-10, "{:?}", r);
    }

    #[test]
    fn three_dimensional_routes_agree(s in spec(3), x in prop::array::uniform3(-1.5f64..1.5)) {
        let a = build_deformed_3d(&s).unwrap().eval(&x).unwrap();
        let b = build_deformed_nd(&s).unwrap().eval(&x).unwrap();
        prop_assert!(vec_rel(&a, &b) <= 1e-12, "{:?} vs {:?}", a, b);
    }

    #[test]
    fn undeformed_fields_are_permutation_equivariant(n in 3usize..=6, x in prop::collection::vec(-2.0f64..2.0, 6), swap in (0usize..6, 0usize..6)) {
        let x = &x[..n];
        let (i, j) = (swap.0 % n, swap.1 % n);
        let name = if n == 3 { "euler3" } else { "euler_nd" };
        let v = synthesize(&builtin(name, n, 0.0).unwrap().spec).unwrap();
        let mut px = x.to_vec();
        px.swap(i, j);
        let mut pv = v.eval(x).unwrap();
        pv.swap(i, j);
        let vp = v.eval(&px).unwrap();
        prop_assert!(vec_rel(&vp, &pv) <= 1e-14, "{:?} vs {:?}", vp, pv);
    }

    #[test]
    fn zero_coupling_recovers_euler(x in prop::array::uniform3(-2.0f64..2.0)) {
        let euler = [x[1] * x[2], x[0] * x[2], x[0] * x[1]];
        for name in ["cube_root_deform", "quartic_deform"] {
            let v = synthesize(&builtin(name, 3, 0.0).unwrap().spec).unwrap();
            let got = v.eval(&x).unwrap();
            prop_assert!(vec_rel(&got, &euler) <= 1e-14, "{}: {:?}", name, got);
        }
    }

    #[test]
    fn zero_coupling_recovers_euler_nd(x in prop::collection::vec(-2.0f64..2.0, 4)) {
        let nd = synthesize(&builtin("euler_nd", 4, 0.0).unwrap().spec).unwrap().eval(&x).unwrap();
        let v = synthesize(&builtin("cube_root_deform", 4, 0.0).unwrap().spec).unwrap();
        prop_assert!(vec_rel(&v.eval(&x).unwrap(), &nd) <= 1e-14);
    }
}
