//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary. A red criterion is printed as FAIL with the
//! measured numbers; the process exits non-zero on red only when
//! `ACCEPTANCE_STRICT=1`, so the rest of `cargo test` still runs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ensemble_core::expr::parse;
use ensemble_core::lieext::{
    convergence_study, extended_steer, flow_decomposition_check, steer_gronwall_check, ConvergenceOptions,
    ExtendedControls,
};
use ensemble_core::moments::{
    basis_columns, gamma_diagonal_closed_form, gamma_moment, legendre, project_target, taylor_table, verify_model,
    ModelScenario,
};
use ensemble_core::odesim::{make_grid, GridKind, ThetaGrid};
use ensemble_core::polyfield::{lie_bracket, parse_field, rat_from_f64, ratio};
use ensemble_core::rigidbody::{
    bracket_chain, build_rn, det_rn_exact, drift_invariants_check, euler_field, genericity_mc, GenericityOptions,
    InertiaSpec, TorqueAxis, Verdict,
};
use ensemble_core::{ControlSignal, Poly, PolyField};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdicts {
    red: Vec<usize>,
}

impl Verdicts {
    fn report(&mut self, id: usize, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {tag}  {title}: {detail}");
        if !pass {
            self.red.push(id);
        }
    }
}

fn random_poly(rng: &mut impl Rng, dim: usize) -> Poly {
    let terms: Vec<(Vec<u32>, BigRational)> = (0..rng.gen_range(0..5))
        .map(|_| {
            let mut e = vec![0u32; dim];
            let deg = rng.gen_range(0..=3u32);
            for _ in 0..deg {
                e[rng.gen_range(0..dim)] += 1;
            }
            (e, ratio(rng.gen_range(-5..=5), rng.gen_range(1..=4)))
        })
        .collect();
    Poly::from_terms(dim, terms).unwrap()
}

fn random_field(rng: &mut impl Rng, dim: usize) -> PolyField {
    PolyField::new((0..dim).map(|_| random_poly(rng, dim)).collect()).unwrap()
}

fn random_j(rng: &mut impl Rng) -> InertiaSpec {
    loop {
        let j: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.5..3.0));
        if let Ok(s) = InertiaSpec::with_gap(j, 1e-3) {
            return s;
        }
    }
}

fn random_l(rng: &mut impl Rng) -> TorqueAxis {
    TorqueAxis::new(std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).unwrap()
}

fn bracket_algebra(v: &mut Verdicts) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for _ in 0..100 {
        let dim = rng.gen_range(1..=4);
        let (x, y, z) = (random_field(&mut rng, dim), random_field(&mut rng, dim), random_field(&mut rng, dim));
        let br = |a: &PolyField, b: &PolyField| lie_bracket(a, b).unwrap();
        let anti = br(&x, &y).add(&br(&y, &x)).unwrap().is_zero();
        let j = br(&x, &br(&y, &z))
            .add(&br(&y, &br(&z, &x)))
            .unwrap()
            .add(&br(&z, &br(&x, &y)))
            .unwrap();
        if !(anti && j.is_zero()) {
            bad += 1;
        }
    }
    let t = start.elapsed().as_secs_f64();
    v.report(
        1,
        "bracket antisymmetry and Jacobi, exact",
        bad == 0 && t < 5.0,
        format!("{} of 100 triples violate, {t:.2} s (< 5 s)", bad),
    );
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn rigid_single(v: &mut Verdicts) {
    let j = InertiaSpec::new([1.0, 2.0, 3.0]).unwrap();
    let l = TorqueAxis::new([1.0, 2.0, 3.0]).unwrap();
    let det = build_rn(&[j], &l).unwrap().det;
    let exact = ensemble_core::polyfield::rat_to_f64(&det_rn_exact(&[j], &l).unwrap());
    let rel = (det - exact).abs() / exact.abs();
    let det_ok = exact == -4224.0 && rel <= 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut axes_ok = true;
    for _ in 0..20 {
        let j = random_j(&mut rng);
        for axis in 0..3 {
            let mut lv = [0.0; 3];
            lv[axis] = rng.gen_range(0.5..2.0);
            let l = TorqueAxis::new(lv).unwrap();
            axes_ok &= build_rn(&[j], &l).unwrap().verdict == Verdict::Singular;
            axes_ok &= det_rn_exact(&[j], &l).unwrap().is_zero();
        }
    }
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let j = random_j(&mut rng);
        let l = random_l(&mut rng);
        let (jv, lv) = (j.values(), l.values());
        let want = cross(lv, [jv[0] * lv[0], jv[1] * lv[1], jv[2] * lv[2]]).map(|x| 2.0 * x);
        let got = bracket_chain(&j, &l, 1)[1];
        for i in 0..3 {
            worst = worst.max((got[i] - want[i]).abs() / (1.0 + want[i].abs()));
        }
    }
    v.report(
        2,
        "single body determinant, principal axes, first bracket",
        det_ok && axes_ok && worst <= 1e-12,
        format!("det {det} (rel err {rel:e}), axes singular: {axes_ok}, V1 vs 2LxJL max rel err {worst:e}"),
    );
}

fn genericity(v: &mut Verdicts) {
    let start = Instant::now();
    let opts = GenericityOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, samples, need) in [(1, 1000, 0.99), (2, 500, 0.97), (3, 200, 0.95)] {
        let rep = genericity_mc(n, samples, 2024, &opts).unwrap();
        pass &= rep.fraction_generating >= need && rep.exact_agreements == rep.exact_checked && rep.exact_checked == 10;
        parts.push(format!(
            "N={n}: {:.3} (need {need}), exact {}/{}",
            rep.fraction_generating, rep.exact_agreements, rep.exact_checked
        ));
    }
    let t = start.elapsed().as_secs_f64();
    pass &= t < 60.0;
    // not part of the verdict: how many N = 3 samples have a non-zero exact determinant
    let rep = genericity_mc(3, 200, 2024, &opts).unwrap();
    let nonzero = rep
        .records
        .iter()
        .filter(|s| {
            let js: Vec<InertiaSpec> = s.js.iter().map(|j| InertiaSpec::new(*j).unwrap()).collect();
            !det_rn_exact(&js, &TorqueAxis::new(s.l).unwrap()).unwrap().is_zero()
        })
        .count();
    v.report(
        3,
        "genericity of generating bodies",
        pass,
        format!("{}; {t:.1} s; supplementary: N=3 exact det non-zero in {nonzero}/200", parts.join("; ")),
    );
}

fn homogeneity(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for n in 1..=3usize {
        for _ in 0..5 {
            let js: Vec<InertiaSpec> = (0..n).map(|_| random_j(&mut rng)).collect();
            let l = random_l(&mut rng);
            let scaled: Vec<InertiaSpec> = js.iter().map(|j| j.scaled(0.5).unwrap()).collect();
            let power = (3 * n * (3 * n - 1) / 2) as i32;
            let d0 = build_rn(&js, &l).unwrap().det;
            let d1 = build_rn(&scaled, &l).unwrap().det;
            worst = worst.max((d1 - 0.5f64.powi(power) * d0).abs() / d1.abs());
        }
    }
    v.report(
        4,
        "determinant homogeneity at eps = 0.5, N <= 3",
        worst <= 1e-9,
        format!("max rel err {worst:e} (<= 1e-9)"),
    );
}

fn drift(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let div_ok = (0..50).all(|_| euler_field(&random_j(&mut rng)).unwrap().divergence().is_zero());
    let j = InertiaSpec::new([1.0, 2.0, 3.0]).unwrap();
    let rep = drift_invariants_check(&j, [1.0, 1.0, 1.0], 10.0, 1e-3).unwrap();
    v.report(
        5,
        "divergence-free drift, norm conservation",
        div_ok && rep.norm_drift < 1e-9,
        format!("50 divergences zero: {div_ok}; |K|^2 drift {:e} (< 1e-9)", rep.norm_drift),
    );
}

fn gamma(v: &mut Verdicts) {
    let start = Instant::now();
    let eighth = ratio(1, 8);
    let mut ok = true;
    for m in 1..=30usize {
        for r in 1..=12usize {
            let g = gamma_moment(m, r);
            ok &= g.abs() < eighth;
            if m < r {
                ok &= g.is_zero();
            }
            if m == r {
                ok &= !g.is_zero() && g == gamma_diagonal_closed_form(r);
            }
        }
    }
    ok &= gamma_moment(1, 1) == ratio(1, 30);
    let polys: Vec<Poly> = (0..=24).map(legendre).collect();
    for j in 0..=24usize {
        for k in j..=24 {
            let ip = (&polys[j] * &polys[k]).integrate_unit_interval().unwrap();
            ok &= if j == k { ip == ratio(1, 2 * j as i64 + 1) } else { ip.is_zero() };
        }
    }
    let t = start.elapsed().as_secs_f64();
    v.report(
        6,
        "moment matrix structure and Legendre orthogonality",
        ok && t < 10.0,
        format!("structure exact: {ok}; {t:.2} s (< 10 s)"),
    );
}

fn gauss(n: usize) -> ThetaGrid {
    make_grid(GridKind::Gauss, (0.0, 1.0), n).unwrap()
}

fn model_synthesis(v: &mut Verdicts) {
    let start = Instant::now();
    let grid = gauss(64);
    let f = parse("exp(theta*x) - 1").unwrap();
    let target = parse("sin(3.141592653589793*theta)").unwrap();
    let mut terminal_ok = true;
    let mut ode_ok = true;
    let mut xy_ok = true;
    let mut parts = Vec::new();
    for eps1 in [0.1, 0.05, 0.02] {
        let sc = ModelScenario::new(f.clone(), target.clone(), grid.clone(), eps1, 2.0, std::f64::consts::E.powi(2));
        let rep = verify_model(&sc).unwrap();
        terminal_ok &= rep.ok && rep.terminal_error < 2.0 * eps1;
        let gap = rep.ode_max_gap.unwrap_or(f64::INFINITY);
        let xy = rep.ode_xy_terminal.unwrap_or(f64::INFINITY);
        ode_ok &= gap <= 1e-6;
        xy_ok &= xy <= 1e-10;
        parts.push(format!(
            "eps1={eps1}: R={} eps={:.1e} terminal {:.2e} ode gap {gap:.1e} |x(1)|,|y(1)| {xy:.1e}",
            rep.r, rep.eps, rep.terminal_error
        ));
    }
    let jets = taylor_table(&f, &grid, 10).unwrap();
    let zhat: Vec<f64> = grid.nodes().iter().map(|t| (PI * t).sin()).collect();
    let a = basis_columns(&jets, 8);
    let res: Vec<f64> = [2, 4, 6, 8].iter().map(|&r| project_target(&a, &zhat, &grid, r).unwrap().residual).collect();
    let mono = res.windows(2).all(|w| w[1] <= 1.05 * w[0]);
    let res_txt: Vec<String> = res.iter().map(|r| format!("{r:.3e}")).collect();
    let t = start.elapsed().as_secs_f64();
    let pass = terminal_ok && mono && ode_ok && xy_ok && t < 120.0;
    v.report(
        7,
        "model synthesis end to end",
        pass,
        format!(
            "terminal < 2 eps1: {terminal_ok}; residual monotone {mono} [{}]; ODE within 1e-6: {ode_ok}; \
             x(1), y(1) within 1e-10: {xy_ok}; {t:.1} s; {}",
            res_txt.join(", "),
            parts.join("; ")
        ),
    );
}

fn necessity(v: &mut Verdicts) {
    // dist(θ², span{θ}) in L²[0,1]: projection coefficient 3/4, squared distance 1/5 - 3/16
    let d = (1.0f64 / 5.0 - 3.0 / 16.0).sqrt();
    let sc = ModelScenario::new(parse("theta*x").unwrap(), parse("theta^2").unwrap(), gauss(64), 0.05, 2.0, 2.0);
    let rep = verify_model(&sc).unwrap();
    let err = (rep.projection_residual - d).abs();
    v.report(
        8,
        "necessity: residual equals the true distance",
        !rep.ok && err < 1e-6,
        format!("residual {} vs {d} (err {err:e} < 1e-6), synthesis refused: {}", rep.projection_residual, !rep.ok),
    );
}

fn cos_2pi() -> ControlSignal {
    ControlSignal::sinusoid(1.0, 1.0 / (2.0 * PI), PI / 2.0, ControlSignal::constant(1.0)).unwrap()
}

fn flow(v: &mut Verdicts) {
    let f = parse_field(&["x2", "0"], None).unwrap();
    let g = PolyField::constant_f64(&[0.0, 1.0]).unwrap();
    let gap = |h: f64| flow_decomposition_check(&f, &g, &cos_2pi(), &[0.0, 0.0], 1.0, h).unwrap().gap;
    let (g1, g4) = (gap(1e-4), gap(2.5e-5));
    let shrink = g1 / g4;
    // not part of the verdict: a case whose step error is above rounding
    let fq = parse_field(&["x2^2", "x1"], None).unwrap();
    let gq = |h: f64| flow_decomposition_check(&fq, &g, &cos_2pi(), &[0.1, 0.2], 0.7, h).unwrap().gap;
    let sq = gq(0.1) / gq(0.025);
    v.report(
        9,
        "flow factorization gap and its shrink under step halving",
        g1 < 1e-6 && shrink >= 8.0,
        format!(
            "gap(1e-4) {g1:e} (< 1e-6), gap(2.5e-5) {g4:e}, shrink {shrink:.2} (>= 8); \
             supplementary: quadratic drift, h 0.1 -> 0.025 shrinks {sq:.1}x"
        ),
    );
}

fn toy_ensemble(grid: &ThetaGrid) -> Vec<(PolyField, PolyField)> {
    grid.nodes()
        .iter()
        .map(|&th| {
            let t = rat_from_f64(th).unwrap();
            (
                parse_field(&["1", "0", "0"], Some(&t)).unwrap(),
                parse_field(&["0", "1", "theta*x1"], Some(&t)).unwrap(),
            )
        })
        .collect()
}

fn oscillation(v: &mut Verdicts) {
    let start = Instant::now();
    let grid = gauss(16);
    let ext = ExtendedControls {
        u_e: ControlSignal::constant(1.0),
        v_e: ControlSignal::zero(),
        w_e: ControlSignal::constant(1.0),
    };
    let rep = convergence_study(&toy_ensemble(&grid), &grid, &ext, &[0.0; 3], 1.0, &[4, 8, 16, 32], &ConvergenceOptions::default())
        .unwrap();
    let dec = rep.rows.windows(2).all(|w| w[1].e_n < w[0].e_n);
    let slope_ok = (0.7..=1.3).contains(&rep.slope);
    let u_ok = rep.rows.iter().all(|r| r.big_u_at_t.abs() <= 8.0 * f64::EPSILON / (r.eps * r.eps));
    let t = start.elapsed().as_secs_f64();
    let e: Vec<String> = rep.rows.iter().map(|r| format!("{:.4}", r.e_n)).collect();
    let u_max = rep.rows.iter().map(|r| r.big_u_at_t.abs()).fold(0.0, f64::max);
    v.report(
        10,
        "fast-oscillation convergence",
        dec && slope_ok && u_ok && t < 60.0,
        format!(
            "e_n [{}] decreasing {dec}; slope {:.3} in [0.7, 1.3]; max |U(T)| {u_max:e}; {t:.2} s",
            e.join(", "),
            rep.slope
        ),
    );
}

fn steering(v: &mut Verdicts) {
    let x = parse_field(&["1", "0", "0"], None).unwrap();
    let y = parse_field(&["0", "1", "x1"], None).unwrap();
    let target = parse_field(&["1", "1", "1"], None).unwrap();
    let heis = extended_steer(&[vec![x, y]], &ThetaGrid::single(1.0), &target, &[0.0; 3], 1.0, 2, 21).unwrap();

    let grid = gauss(16);
    let ens: Vec<Vec<PolyField>> = toy_ensemble(&grid).into_iter().map(|(a, b)| vec![a, b]).collect();
    let y_toy = parse_field(&["1", "x1", "0"], None).unwrap();
    let eps = 1e-4;
    let rep = extended_steer(&ens, &grid, &y_toy, &[0.0; 3], 1.0, 3, 101).unwrap();
    let gw = steer_gronwall_check(&ens, &grid, 3, &rep, &[0.0; 3], 1.0, 1e-3).unwrap();
    let pass = heis.max_residual < 1e-10 && rep.max_residual < eps && gw.holds;
    v.report(
        11,
        "extended steering surrogate and Gronwall bound",
        pass,
        format!(
            "Heisenberg residual {:e} (< 1e-10); toy residual {:e} (< eps = {eps:e}); e(T) {:e} <= bound {:e} (L = {:.3})",
            heis.max_residual, rep.max_residual, gw.e_t, gw.bound, gw.lipschitz
        ),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let bytes = std::fs::read(&p).unwrap();
        let bytes = if name == "manifest.json" {
            let mut m: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            m.as_object_mut().unwrap().remove("wall_time_s");
            serde_json::to_vec(&m).unwrap()
        } else {
            bytes
        };
        out.insert(name, bytes);
    }
    out
}

fn determinism(v: &mut Verdicts) {
    let configs: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<String> = std::fs::read_dir(&configs)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().trim_end_matches(".toml").to_string())
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for kind in &names {
        let runs: Vec<PathBuf> = ["a", "b"].iter().map(|s| tmp.path().join(format!("{kind}-{s}"))).collect();
        for dir in &runs {
            Command::new(env!("CARGO_BIN_EXE_ensemble"))
                .args([kind.as_str(), "--config"])
                .arg(configs.join(format!("{kind}.toml")))
                .arg("--out-dir")
                .arg(dir)
                .output()
                .unwrap();
        }
        if !runs[0].join("manifest.json").exists() || snapshot(&runs[0]) != snapshot(&runs[1]) {
            differing.push(kind.clone());
        }
    }
    v.report(
        12,
        "byte-identical reruns of every shipped scenario",
        differing.is_empty() && !names.is_empty(),
        format!("{} scenarios, differing: {differing:?}", names.len()),
    );
}

fn main() {
    let mut v = Verdicts { red: Vec::new() };
    bracket_algebra(&mut v);
    rigid_single(&mut v);
    genericity(&mut v);
    homogeneity(&mut v);
    drift(&mut v);
    gamma(&mut v);
    model_synthesis(&mut v);
    necessity(&mut v);
    flow(&mut v);
    oscillation(&mut v);
    steering(&mut v);
    determinism(&mut v);
    println!("acceptance: {} of 12 pass; red: {:?}", 12 - v.red.len(), v.red);
    if !v.red.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|s| s == "1") {
        std::process::exit(1);
    }
}
