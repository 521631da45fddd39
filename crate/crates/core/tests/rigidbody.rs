use ensemble_core::polyfield::{parse_field, rat_to_f64};
use ensemble_core::rigidbody::{
    bracket_chain, bracket_chain_exact, build_rn, det_rn_exact, drift_invariants_check, euler_field,
    exact_verdict, product_bracket_rank, rigid_bracket_rank, InertiaSpec, TorqueAxis, Verdict, RANK_TOL,
};
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_j(rng: &mut impl Rng) -> InertiaSpec {
    loop {
        let j = [0.5, 0.5, 0.5].map(|lo: f64| rng.gen_range(lo..3.0));
        if let Ok(s) = InertiaSpec::with_gap(j, 1e-3) {
            return s;
        }
    }
}

fn random_l(rng: &mut impl Rng) -> TorqueAxis {
    TorqueAxis::new([0; 3].map(|_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Laplace expansion over rationals; independent of the elimination used in
/// the library.
fn laplace_det(m: &[Vec<BigRational>]) -> BigRational {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = BigRational::zero();
    for c in 0..n {
        if m[0][c].is_zero() {
            continue;
        }
        let minor: Vec<Vec<BigRational>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|&(k, _)| k != c).map(|(_, x)| x.clone()).collect())
            .collect();
        let term = &m[0][c] * laplace_det(&minor);
        if c % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

#[test]
fn single_body_determinant() {
    let j = InertiaSpec::new([1.0, 2.0, 3.0]).unwrap();
    let l = TorqueAxis::new([1.0, 2.0, 3.0]).unwrap();
    let rep = build_rn(&[j], &l).unwrap();
    assert!((rep.det + 4224.0).abs() <= 1e-9 * 4224.0, "{}", rep.det);
    assert_eq!(rep.verdict, Verdict::Generating);

    // independent oracle: columns L, ΛL, Λ²L by hand, Laplace expansion
    let m = ensemble_core::rigidbody::rn_matrix_exact(&[j], &l).unwrap();
    assert_eq!(laplace_det(&m), BigRational::from_integer((-4224).into()));
    assert_eq!(det_rn_exact(&[j], &l).unwrap(), laplace_det(&m));
}

#[test]
fn two_body_exact_determinant_matches_laplace() {
    let js = [
        InertiaSpec::new([1.0, 2.0, 3.0]).unwrap(),
        InertiaSpec::new([1.5, 0.75, 2.5]).unwrap(),
    ];
    let l = TorqueAxis::new([0.5, -1.0, 0.25]).unwrap();
    let m = ensemble_core::rigidbody::rn_matrix_exact(&js, &l).unwrap();
    let exact = laplace_det(&m);
    assert_eq!(det_rn_exact(&js, &l).unwrap(), exact);
    let float = build_rn(&js, &l).unwrap().det;
    let e = rat_to_f64(&exact);
    assert!((float - e).abs() <= 1e-9 * e.abs());
}

#[test]
fn principal_axes_are_singular() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let j = random_j(&mut rng);
        for axis in 0..3 {
            let mut l = [0.0; 3];
            l[axis] = rng.gen_range(0.5..2.0);
            let l = TorqueAxis::new(l).unwrap();
            assert_eq!(build_rn(&[j], &l).unwrap().verdict, Verdict::Singular);
            assert!(det_rn_exact(&[j], &l).unwrap().is_zero());
        }
    }
}

#[test]
fn first_bracket_is_twice_the_euler_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let j = random_j(&mut rng);
        let l = random_l(&mut rng);
        let lv = l.values();
        let jv = j.values();
        let jl = [jv[0] * lv[0], jv[1] * lv[1], jv[2] * lv[2]];
        let want = cross(lv, jl).map(|x| 2.0 * x);
        let got = bracket_chain(&j, &l, 1)[1];
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() <= 1e-12 * (1.0 + want[i].abs()));
        }
    }
}

#[test]
fn homogeneity_of_the_chain_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let half = BigRational::new(1.into(), 2.into());
    for _ in 0..20 {
        let j = random_j(&mut rng);
        let l = random_l(&mut rng);
        let base = bracket_chain_exact(&j, &l, 8).unwrap();
        let scaled = bracket_chain_exact(&j.scaled(0.5).unwrap(), &l, 8).unwrap();
        let mut factor = BigRational::one();
        for (b, s) in base.iter().zip(&scaled) {
            for i in 0..3 {
                assert_eq!(&b[i] * &factor, s[i]);
            }
            factor = &factor * &half;
        }
    }
}

#[test]
fn determinant_scales_with_column_powers() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for n in 1..=3usize {
        let js: Vec<InertiaSpec> = (0..n).map(|_| random_j(&mut rng)).collect();
        let l = random_l(&mut rng);
        let scaled: Vec<InertiaSpec> = js.iter().map(|j| j.scaled(0.5).unwrap()).collect();
        let power = (3 * n * (3 * n - 1) / 2) as i32;
        let d0 = build_rn(&js, &l).unwrap().det;
        let d1 = build_rn(&scaled, &l).unwrap().det;
        assert!((d1 - 0.5f64.powi(power) * d0).abs() <= 1e-9 * d1.abs(), "N={n}");
        let e0 = det_rn_exact(&js, &l).unwrap();
        let e1 = det_rn_exact(&scaled, &l).unwrap();
        let f = BigRational::new(1.into(), num_bigint::BigInt::from(2).pow(power as u32));
        assert_eq!(e1, e0 * f);
    }
}

#[test]
fn euler_field_is_divergence_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        assert!(euler_field(&random_j(&mut rng)).unwrap().divergence().is_zero());
    }
}

#[test]
fn drift_preserves_norm() {
    let j = InertiaSpec::new([1.0, 2.0, 3.0]).unwrap();
    let rep = drift_invariants_check(&j, [1.0, 1.0, 1.0], 10.0, 1e-3).unwrap();
    assert!(rep.div_ok);
    assert!(rep.norm_drift < 1e-9, "{}", rep.norm_drift);
    assert!(rep.energy_drift < 1e-9, "{}", rep.energy_drift);
}

#[test]
fn degenerate_inertia_is_rejected() {
    assert!(InertiaSpec::new([1.0, 1.0, 2.0]).is_err());
    assert!(InertiaSpec::new([1.0, -1.0, 2.0]).is_err());
    assert!(InertiaSpec::new([1.0, 2.0, f64::NAN]).is_err());
}

#[test]
fn product_rank_of_the_toy_ensemble() {
    // X = ∂x, Y^θ = ∂y + θx∂z: only X, Y^θ and θ∂z survive, so rank 3 of 6
    let sys = |th: &str| {
        vec![
            parse_field(&["1", "0", "0"], None).unwrap(),
            parse_field(&["0", "1", &format!("{th}*x1")], None).unwrap(),
        ]
    };
    let ens = vec![sys("1"), sys("2")];
    let pts = vec![vec![0.0; 3]; 2];
    let rep = product_bracket_rank(&ens, &pts, 4, RANK_TOL).unwrap();
    assert_eq!((rep.rank, rep.rows, rep.full), (3, 6, false));

    // with a θ-dependent quadratic term the second level separates nodes
    let sys2 = |th: &str| {
        vec![
            parse_field(&["1", "0", "0"], None).unwrap(),
            parse_field(&["0", "1", &format!("x1 + {th}*x1^2")], None).unwrap(),
        ]
    };
    let rep = product_bracket_rank(&[sys2("1"), sys2("2")], &pts, 3, RANK_TOL).unwrap();
    assert_eq!(rep.rank, 4);
}

#[test]
fn generating_bodies_have_full_bracket_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..5 {
        let j = random_j(&mut rng);
        let l = random_l(&mut rng);
        if exact_verdict(&[j], &l).unwrap() == Verdict::Generating {
            assert!(rigid_bracket_rank(&[j], &l, 5).unwrap().full);
        }
    }
    let l = TorqueAxis::new([1.0, 0.0, 0.0]).unwrap();
    let j = InertiaSpec::new([1.0, 2.0, 3.0]).unwrap();
    assert!(!rigid_bracket_rank(&[j], &l, 5).unwrap().full);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdict_is_invariant_under_body_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let js = vec![random_j(&mut rng), random_j(&mut rng)];
        let l = random_l(&mut rng);
        let rev: Vec<InertiaSpec> = js.iter().rev().copied().collect();
        let a = det_rn_exact(&js, &l).unwrap();
        let b = det_rn_exact(&rev, &l).unwrap();
        // swapping two row blocks of three rows each flips the sign 9 times
        prop_assert_eq!(a, -b);
    }

    #[test]
    fn single_body_determinant_is_homogeneous_in_torque(seed in any::<u64>()) {
        // columns L, ΛL, Λ²L with Λ linear in L have degrees 1, 2, 3
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = random_j(&mut rng);
        let l = random_l(&mut rng);
        let l2 = TorqueAxis::new(l.values().map(|x| 2.0 * x)).unwrap();
        let a = det_rn_exact(&[j], &l).unwrap();
        let b = det_rn_exact(&[j], &l2).unwrap();
        prop_assert_eq!(b, a * BigRational::from_integer(64.into()));
    }
}
