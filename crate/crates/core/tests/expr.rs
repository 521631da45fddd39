use ensemble_core::expr::{parse, taylor_coeffs, Expr};
use proptest::prelude::*;

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-4i32..=4).prop_map(|n| Expr::Num(n as f64 / 2.0)),
        Just(Expr::X),
        Just(Expr::Theta),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), 0i32..=3).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
            inner.clone().prop_map(|e| Expr::Call(ensemble_core::expr::Func::Sin, Box::new(e))),
            inner.prop_map(|e| Expr::Call(ensemble_core::expr::Func::Exp, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn display_parse_round_trip(e in arb_expr()) {
        let back = parse(&e.to_string()).unwrap();
        for &(x, th) in &[(0.3, 0.7), (-0.2, 1.1)] {
            let a = e.eval(x, th).unwrap();
            let b = back.eval(x, th).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{e}: {a} vs {b}");
        }
    }

    #[test]
    fn jet_agrees_with_evaluation_near_zero(e in arb_expr(), th in -1.0f64..1.0) {
        let jet = taylor_coeffs(&e, th, 14).unwrap();
        let x = 1e-3;
        let direct = e.eval(x, th).unwrap();
        let scale = 1.0 + jet.coeffs.iter().map(|c| c.abs()).sum::<f64>();
        prop_assume!(scale < 1e6);
        prop_assert!((jet.eval(x) - direct).abs() <= 1e-10 * scale, "{e}");
    }
}

#[test]
fn jet_matches_known_series() {
    // sin(θ x)·exp(x): coefficients by Cauchy product of the two known series
    let e = parse("sin(theta*x)*exp(x)").unwrap();
    let th = 0.8;
    let m = 10;
    let jet = taylor_coeffs(&e, th, m).unwrap();
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let sin_c = |k: usize| {
        if k % 2 == 0 {
            0.0
        } else {
            let s = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            s * th.powi(k as i32) / fact(k)
        }
    };
    for k in 0..=m {
        let want: f64 = (0..=k).map(|i| sin_c(i) / fact(k - i)).sum();
        assert!((jet.coeffs[k] - want).abs() < 1e-14, "order {k}");
    }
}

#[test]
fn derivative_check_by_richardson() {
    let e = parse("log(2 + theta*x) - cos(x)^2/(1 + x^2)").unwrap();
    let th = 1.3;
    let jet = taylor_coeffs(&e, th, 4).unwrap();
    let d = |h: f64| (e.eval(h, th).unwrap() - e.eval(-h, th).unwrap()) / (2.0 * h);
    let rich = (4.0 * d(1e-3) - d(2e-3)) / 3.0;
    assert!((jet.coeffs[1] - rich).abs() < 1e-10);
}

#[test]
fn error_offsets() {
    assert!(parse("x +* 2").is_err());
    assert!(parse("sinh(x)").is_err());
    assert!(taylor_coeffs(&parse("log(x)").unwrap(), 0.0, 3).is_err());
}
