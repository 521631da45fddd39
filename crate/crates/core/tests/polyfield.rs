use ensemble_core::polyfield::{
    ad_pullback_series, ad_series_terms, iterated_brackets, lie_bracket, parse_field, parse_poly, rat, Poly,
    PolyField,
};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_poly(dim: usize) -> impl Strategy<Value = Poly> {
    let term = (prop::collection::vec(0u32..=3, dim), -5i64..=5, 1i64..=3).prop_filter_map(
        "degree <= 3",
        |(exps, n, d)| {
            if exps.iter().sum::<u32>() <= 3 {
                Some((exps, BigRational::new(n.into(), d.into())))
            } else {
                None
            }
        },
    );
    prop::collection::vec(term, 0..4).prop_map(move |terms| Poly::from_terms(dim, terms).unwrap())
}

fn arb_field(dim: usize) -> impl Strategy<Value = PolyField> {
    prop::collection::vec(arb_poly(dim), dim).prop_map(|c| PolyField::new(c).unwrap())
}

fn arb_triple() -> impl Strategy<Value = (PolyField, PolyField, PolyField)> {
    (1usize..=4).prop_flat_map(|d| (arb_field(d), arb_field(d), arb_field(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bracket_is_antisymmetric((x, y, _z) in arb_triple()) {
        let s = lie_bracket(&x, &y).unwrap().add(&lie_bracket(&y, &x).unwrap()).unwrap();
        prop_assert!(s.is_zero());
    }

    #[test]
    fn jacobi_identity((x, y, z) in arb_triple()) {
        let a = lie_bracket(&x, &lie_bracket(&y, &z).unwrap()).unwrap();
        let b = lie_bracket(&y, &lie_bracket(&z, &x).unwrap()).unwrap();
        let c = lie_bracket(&z, &lie_bracket(&x, &y).unwrap()).unwrap();
        prop_assert!(a.add(&b).unwrap().add(&c).unwrap().is_zero());
    }

    #[test]
    fn bracket_matches_finite_differences((x, y, _z) in arb_triple(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: Vec<f64> = (0..x.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let br = lie_bracket(&x, &y).unwrap().eval(&p).unwrap();
        let fd = fd_bracket(&x, &y, &p, 1e-5);
        for (a, b) in br.iter().zip(&fd) {
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn text_round_trip(f in (1usize..=4).prop_flat_map(arb_field)) {
        let comps: Vec<String> = f.components().iter().map(|p| p.to_string()).collect();
        prop_assert_eq!(parse_field(&comps, None).unwrap(), f);
    }

    #[test]
    fn pullback_series_terminates((f, _g, _z) in arb_triple(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = (0..f.dim()).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
        let g = PolyField::constant_f64(&g).unwrap();
        let n = ad_series_terms(&f, &g).unwrap().len();
        let bound = f.max_degree().map_or(0, |d| d as usize + 1);
        prop_assert!(n <= bound);
    }
}

/// `(DY·X − DX·Y)(p)` with central differences.
fn fd_bracket(x: &PolyField, y: &PolyField, p: &[f64], h: f64) -> Vec<f64> {
    let n = p.len();
    let xv = x.eval(p).unwrap();
    let yv = y.eval(p).unwrap();
    let dir = |f: &PolyField, v: &[f64]| -> Vec<f64> {
        let plus: Vec<f64> = p.iter().zip(v).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = p.iter().zip(v).map(|(a, b)| a - h * b).collect();
        let fp = f.eval(&plus).unwrap();
        let fm = f.eval(&minus).unwrap();
        (0..n).map(|i| (fp[i] - fm[i]) / (2.0 * h)).collect()
    };
    let dy_x = dir(y, &xv);
    let dx_y = dir(x, &yv);
    (0..n).map(|i| dy_x[i] - dx_y[i]).collect()
}

#[test]
fn horner_evaluation_examples() {
    assert_eq!(Poly::one(1).eval(&[3.7]).unwrap(), 1.0);
    assert_eq!(parse_poly("x1^2", 1, None).unwrap().eval(&[2.0]).unwrap(), 4.0);
    let p = parse_poly("6*x1^2 - 6*x1 + 1", 1, None).unwrap();
    assert_eq!(p.eval(&[0.5]).unwrap(), -0.5);
    assert!(p.eval(&[0.5, 1.0]).is_err());
}

#[test]
fn bracket_examples() {
    let x = parse_field(&["1", "0"], None).unwrap();
    let y = parse_field(&["0", "x1"], None).unwrap();
    assert_eq!(lie_bracket(&x, &y).unwrap(), parse_field(&["0", "1"], None).unwrap());
    assert!(lie_bracket(&x, &x).unwrap().is_zero());
    assert!(lie_bracket(&x, &PolyField::zero(3)).is_err());
}

#[test]
fn euler_bracket_with_constant_field() {
    // [E_J, e1] = -DE_J·e1 under [X,Y] = DY·X - DX·Y
    let e = parse_field(&["x2*x3", "-2*x1*x3", "x1*x2"], None).unwrap();
    let e1 = PolyField::constant_f64(&[1.0, 0.0, 0.0]).unwrap();
    let br = lie_bracket(&e, &e1).unwrap();
    assert_eq!(br, parse_field(&["0", "2*x3", "-x2"], None).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let fd = fd_bracket(&e, &e1, &p, 1e-5);
        for (a, b) in br.eval(&p).unwrap().iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn divergence_examples() {
    let id = parse_field(&["x1", "x2", "x3"], None).unwrap();
    assert_eq!(id.divergence(), Poly::constant(3, rat(3)));
    let f = parse_field(&["x2^2", "x1^2"], None).unwrap();
    assert!(f.divergence().is_zero());
}

#[test]
fn pullback_examples() {
    let f = parse_field(&["0", "x1^2"], None).unwrap();
    let g = parse_field(&["1", "0"], None).unwrap();
    let shifted = ad_pullback_series(&f, &g, &rat(1)).unwrap();
    assert_eq!(shifted, parse_field(&["0", "x1^2 + 2*x1 + 1"], None).unwrap());
    assert_eq!(ad_pullback_series(&f, &g, &rat(0)).unwrap(), f);
    let c = parse_field(&["3", "-1"], None).unwrap();
    assert_eq!(ad_pullback_series(&c, &g, &rat(7)).unwrap(), c);
    assert!(ad_pullback_series(&f, &f, &rat(1)).is_err());
}

#[test]
fn iterated_bracket_examples() {
    let x = parse_field(&["1", "0", "0"], None).unwrap();
    let single = iterated_brackets(std::slice::from_ref(&x), 4).unwrap();
    assert_eq!(single.len(), 1);

    let y = parse_field(&["0", "1", "x1"], None).unwrap();
    let h = iterated_brackets(&[x.clone(), y.clone()], 2).unwrap();
    let dz = parse_field(&["0", "0", "1"], None).unwrap();
    assert!(h.iter().any(|(l, f)| l.to_string() == "[f1,f2]" && *f == dz));

    let y2 = parse_field(&["0", "1", "x1^2"], None).unwrap();
    let fields: Vec<PolyField> = iterated_brackets(&[x.clone(), y2.clone()], 3)
        .unwrap()
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    for want in [
        y2,
        parse_field(&["0", "0", "2*x1"], None).unwrap(),
        parse_field(&["0", "0", "2"], None).unwrap(),
    ] {
        assert!(fields.contains(&want), "missing {want}");
    }
    assert!(iterated_brackets(&[x], 0).is_err());
}

#[test]
fn iterated_bracket_order_is_deterministic() {
    let x = parse_field(&["x2", "x3^2", "1"], None).unwrap();
    let y = parse_field(&["1", "x1*x2", "0"], None).unwrap();
    let a = iterated_brackets(&[x.clone(), y.clone()], 4).unwrap();
    let b = iterated_brackets(&[x, y], 4).unwrap();
    assert_eq!(a, b);
}
