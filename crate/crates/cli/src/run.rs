//! One runner per scenario kind. Each returns its artifacts and the list of
//! scientific checks; a failed check means exit code 2.

use ensemble_core::lieext::{
    convergence_study, extended_steer, flow_decomposition_check, reduce_controls, steer_gronwall_check,
    ConvergenceOptions, ConvergenceReport, ExtendedControls, FlowCheck, GronwallCheck, SteerReport,
};
use ensemble_core::moments::{verify_model, ModelScenario, SynthesisReport};
use ensemble_core::polyfield::rat_to_f64;
use ensemble_core::rigidbody::{
    bracket_chain, build_rn, det_rn_exact, drift_invariants_check, genericity_mc, product_bracket_rank,
    rigid_bracket_rank, scaling_diagnostic, DriftReport, GenericityOptions, GenericityReport, InertiaSpec,
    RNReport, RankReport, ScalingReport, Verdict,
};
use ensemble_core::{ControlSignal, ThetaGrid};
use serde::Serialize;

use crate::config::{
    field_fixed, field_on_grid, inertia, parse_expr, torque_axis, ConvergeSection, FlowSection, GenericSection,
    GridSpec, ModelSection, RankSection, ReduceSection, RigidSection, ScenarioConfig, SteerSection,
};
use crate::error::CliError;
use crate::output::{num, Artifacts};

/// Tolerance of the floating-point homogeneity check.
const HOMOGENEITY_RTOL: f64 = 1e-9;
/// `|U_ε(T)|` may carry this many ulps of the phase `T/ε²`.
const HORIZON_ULPS: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }

    fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value < bound, format!("{value:e} < {bound:e}"))
    }

    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check::new(name, value <= bound, format!("{value:e} <= {bound:e}"))
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Runs a validated scenario.
pub fn run(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    use crate::config::Kind::*;
    let grid = || cfg.grid.as_ref().expect("validated");
    match cfg.kind {
        RigidCheck => rigid_check(cfg.rigid.as_ref().expect("validated")),
        RigidGeneric => rigid_generic(cfg.generic.as_ref().expect("validated"), cfg.seed),
        ModelSynthesize => model_synthesize(cfg.model.as_ref().expect("validated"), grid()),
        LieextReduce => lieext_reduce(cfg.reduce.as_ref().expect("validated"), cfg.grid.as_ref()),
        LieextConverge => lieext_converge(cfg.converge.as_ref().expect("validated"), grid()),
        FlowVerify => flow_verify(cfg.flow.as_ref().expect("validated")),
        RankCheck => rank_check(cfg.rank.as_ref().expect("validated")),
    }
}

#[derive(Serialize)]
struct Homogeneity {
    eps: f64,
    power: u32,
    det_scaled: f64,
    expected: f64,
    rel_err: f64,
    exact_match: Option<bool>,
}

#[derive(Serialize)]
struct RigidCheckReport<'a> {
    inertia: &'a [[f64; 3]],
    torque: [f64; 3],
    rn: RNReport,
    det_exact: Option<String>,
    det_exact_f64: Option<f64>,
    exact_verdict: Option<Verdict>,
    homogeneity: Homogeneity,
    scaling: Option<ScalingReport>,
    drift: Option<Vec<DriftReport>>,
    checks: &'a [Check],
}

fn rigid_check(r: &RigidSection) -> Result<Outcome, CliError> {
    let js = inertia("rigid.inertia", &r.inertia, r.min_gap)?;
    let l = torque_axis("rigid.torque", r.torque)?;
    let n = js.len();
    let rn = build_rn(&js, &l)?;
    let mut checks = Vec::new();

    let exact = if r.exact { Some(det_rn_exact(&js, &l)?) } else { None };
    let exact_verdict = exact.as_ref().map(|d| Verdict::classify(rat_to_f64(d), rn.scale));

    let power = (3 * n * (3 * n - 1) / 2) as u32;
    let scaled: Vec<InertiaSpec> = js.iter().map(|j| j.scaled(r.homogeneity_eps)).collect::<Result<_, _>>()?;
    let det_scaled = build_rn(&scaled, &l)?.det;
    let expected = r.homogeneity_eps.powi(power as i32) * rn.det;
    let rel_err = if det_scaled == expected { 0.0 } else { (det_scaled - expected).abs() / expected.abs().max(det_scaled.abs()) };
    // εJ is only exact in floating point for powers of two
    let dyadic = r.homogeneity_eps.log2().fract() == 0.0;
    let exact_match = match &exact {
        Some(d) if dyadic => {
            let ds = det_rn_exact(&scaled, &l)?;
            let f = ensemble_core::polyfield::rat_from_f64(r.homogeneity_eps.powi(power as i32))?;
            Some(ds == d * f)
        }
        _ => None,
    };
    if rn.verdict == Verdict::Generating {
        checks.push(Check::at_most("homogeneity relative error", rel_err, HOMOGENEITY_RTOL));
    }
    if let Some(m) = exact_match {
        checks.push(Check::new("homogeneity exact", m, format!("det scales by eps^{power}")));
    }
    if let Some(ev) = exact_verdict {
        checks.push(Check::new(
            "float and exact verdicts agree",
            ev == rn.verdict,
            format!("{:?} vs {:?}", rn.verdict, ev),
        ));
    }
    if let Some(e) = &r.expect {
        checks.push(Check::new(
            "expected verdict",
            rn.verdict == e.verdict,
            format!("got {:?}, asserted {:?}", rn.verdict, e.verdict),
        ));
    }

    let scaling = match r.scaling_eps {
        Some(eps) => Some(scaling_diagnostic(&js, &l, eps)?),
        None => None,
    };
    let drift = match &r.drift {
        Some(d) => {
            let reps = js
                .iter()
                .map(|j| drift_invariants_check(j, d.k0, d.t_end, d.h))
                .collect::<Result<Vec<_>, _>>()?;
            for (k, rep) in reps.iter().enumerate() {
                checks.push(Check::new(format!("body {k}: divergence-free"), rep.div_ok, "symbolic divergence"));
                checks.push(Check::below(format!("body {k}: norm drift"), rep.norm_drift, d.tol));
                checks.push(Check::below(format!("body {k}: energy drift"), rep.energy_drift, d.tol));
            }
            Some(reps)
        }
        None => None,
    };

    let mut artifacts = Artifacts::default();
    let chain_rows: Vec<Vec<String>> = js
        .iter()
        .enumerate()
        .flat_map(|(b, j)| {
            bracket_chain(j, &l, 3 * n - 1)
                .into_iter()
                .enumerate()
                .map(move |(m, v)| vec![b.to_string(), m.to_string(), num(v[0]), num(v[1]), num(v[2])])
        })
        .collect();
    artifacts.csv("bracket_chain.csv", &["body", "m", "v1", "v2", "v3"], chain_rows)?;
    artifacts.json(
        "rigid_check.json",
        &RigidCheckReport {
            inertia: &r.inertia,
            torque: r.torque,
            rn,
            det_exact: exact.as_ref().map(|d| d.to_string()),
            det_exact_f64: exact.as_ref().map(rat_to_f64),
            exact_verdict,
            homogeneity: Homogeneity {
                eps: r.homogeneity_eps,
                power,
                det_scaled,
                expected,
                rel_err,
                exact_match,
            },
            scaling,
            drift,
            checks: &checks,
        },
    )?;
    Ok(Outcome { artifacts, checks })
}

#[derive(Serialize)]
struct GenericSummary {
    n: usize,
    samples: usize,
    seed: u64,
    fraction_generating: f64,
    min_abs_scaled_det: f64,
    median_abs_scaled_det: f64,
    exact_checked: usize,
    exact_agreements: usize,
}

#[derive(Serialize)]
struct GenericReport<'a> {
    options: &'a GenericityOptions,
    runs: Vec<GenericSummary>,
    checks: &'a [Check],
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn rigid_generic(g: &GenericSection, seed: u64) -> Result<Outcome, CliError> {
    let opts = GenericityOptions {
        j_box: (g.j_box[0], g.j_box[1]),
        min_gap: g.min_gap,
        fixed_l: g.fixed_torque,
        fixed_js: None,
        exact_checks: g.exact_checks,
    };
    let reports: Vec<GenericityReport> = g
        .n_values
        .iter()
        .zip(&g.samples)
        .map(|(&n, &s)| genericity_mc(n, s, seed, &opts))
        .collect::<Result<_, _>>()?;
    let mut checks = Vec::new();
    for (k, rep) in reports.iter().enumerate() {
        if let Some(f) = &g.min_fraction {
            checks.push(Check::new(
                format!("N={}: fraction generating", rep.n),
                rep.fraction_generating >= f[k],
                format!("{} >= {}", rep.fraction_generating, f[k]),
            ));
        }
        checks.push(Check::new(
            format!("N={}: exact verdicts agree", rep.n),
            rep.exact_agreements == rep.exact_checked,
            format!("{}/{}", rep.exact_agreements, rep.exact_checked),
        ));
    }
    let mut rows = Vec::new();
    for rep in &reports {
        for s in &rep.records {
            for (b, j) in s.js.iter().enumerate() {
                rows.push(vec![
                    rep.n.to_string(),
                    s.index.to_string(),
                    b.to_string(),
                    num(j[0]),
                    num(j[1]),
                    num(j[2]),
                    num(s.l[0]),
                    num(s.l[1]),
                    num(s.l[2]),
                    num(s.det),
                    num(s.scaled_det),
                    format!("{:?}", s.verdict).to_lowercase(),
                ]);
            }
        }
    }
    let runs = reports
        .iter()
        .map(|r| GenericSummary {
            n: r.n,
            samples: r.samples,
            seed: r.seed,
            fraction_generating: r.fraction_generating,
            min_abs_scaled_det: r.min_abs_scaled_det,
            median_abs_scaled_det: median(r.records.iter().map(|s| s.scaled_det.abs()).collect()),
            exact_checked: r.exact_checked,
            exact_agreements: r.exact_agreements,
        })
        .collect();
    let mut artifacts = Artifacts::default();
    artifacts.json(
        "genericity.json",
        &GenericReport {
            options: &opts,
            runs,
            checks: &checks,
        },
    )?;
    artifacts.csv(
        "genericity_samples.csv",
        &["n", "index", "body", "j1", "j2", "j3", "l1", "l2", "l3", "det", "scaled_det", "verdict"],
        rows,
    )?;
    Ok(Outcome { artifacts, checks })
}

#[derive(Serialize)]
struct SynthesisFile<'a> {
    grid: &'a GridSpec,
    runs: &'a [SynthesisReport],
    checks: &'a [Check],
}

fn model_synthesize(m: &ModelSection, gs: &GridSpec) -> Result<Outcome, CliError> {
    let grid = gs.build()?;
    let f = parse_expr("model.f_theta", &m.f_theta)?;
    let target = parse_expr("model.target", &m.target)?;
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    for &eps1 in &m.eps1 {
        let mut sc = ModelScenario::new(f.clone(), target.clone(), grid.clone(), eps1, m.rho, m.mu_f);
        sc.r_fixed = m.r_fixed;
        if let Some(e) = m.eps_min {
            sc.eps_min = e;
        }
        sc.ode_step = m.ode_step;
        sc.sup_samples = m.sup_samples;
        let rep = verify_model(&sc)?;
        let detail = match (&rep.failed_stage, &rep.message) {
            (Some(stage), msg) => {
                let stage = serde_json::to_value(stage).map_err(|e| CliError::Io(e.to_string()))?;
                format!("failed at stage {}: {}", stage.as_str().unwrap_or("?"), msg.as_deref().unwrap_or(""))
            }
            (None, _) => format!("terminal error {:e} < {:e}", rep.terminal_error, rep.bound_2eps1),
        };
        checks.push(Check::new(format!("eps1={eps1}: synthesis"), rep.ok, detail));
        reports.push(rep);
    }
    let mut rows = Vec::new();
    for rep in &reports {
        if rep.achieved.len() != grid.len() {
            continue;
        }
        for (i, (&th, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
            rows.push(vec![num(rep.eps1), num(th), num(w), num(rep.target[i]), num(rep.achieved[i])]);
        }
    }
    let mut artifacts = Artifacts::default();
    artifacts.json(
        "synthesis.json",
        &SynthesisFile {
            grid: gs,
            runs: &reports,
            checks: &checks,
        },
    )?;
    artifacts.csv("synthesis_nodes.csv", &["eps1", "theta", "weight", "target", "achieved"], rows)?;
    Ok(Outcome { artifacts, checks })
}

/// Largest `|s(t)|` over the sample times.
fn sampled_sup(s: &ControlSignal, times: &[f64]) -> f64 {
    times.iter().map(|&t| s.eval(t).abs()).fold(0.0, f64::max)
}

#[derive(Serialize)]
struct SteerFile<'a> {
    eps: f64,
    depth: usize,
    report: &'a SteerReport,
    gronwall: &'a GronwallCheck,
}

#[derive(Serialize)]
struct ReduceFile<'a> {
    t_end: f64,
    n: usize,
    eps: f64,
    phase: f64,
    big_u_at_t: f64,
    big_u_tol: f64,
    u_eps: &'a ControlSignal,
    v_eps: &'a ControlSignal,
    big_u: &'a ControlSignal,
    v_hat: &'a ControlSignal,
    steer_max_residual: Option<f64>,
    checks: &'a [Check],
}

fn steer(s: &SteerSection, grid: &ThetaGrid, t_end: f64) -> Result<(SteerReport, GronwallCheck), CliError> {
    let per_field = s
        .fields
        .iter()
        .enumerate()
        .map(|(k, f)| field_on_grid(&format!("reduce.steer.fields[{k}]"), f, grid))
        .collect::<Result<Vec<_>, _>>()?;
    let ensemble: Vec<Vec<_>> = (0..grid.len())
        .map(|node| per_field.iter().map(|f| f[node].clone()).collect())
        .collect();
    let y = field_fixed("reduce.steer.target", &s.target)?;
    let rep = extended_steer(&ensemble, grid, &y, &s.x_start, t_end, s.depth, s.samples)?;
    let gw = steer_gronwall_check(&ensemble, grid, s.depth, &rep, &s.x_start, t_end, s.gronwall_step)?;
    Ok((rep, gw))
}

fn lieext_reduce(r: &ReduceSection, gs: Option<&GridSpec>) -> Result<Outcome, CliError> {
    let plan = reduce_controls(&r.u_e, &r.v_e, &r.w_e, r.t_end, r.n)?;
    let times: Vec<f64> = (0..r.samples)
        .map(|k| if k + 1 == r.samples { r.t_end } else { r.t_end * k as f64 / (r.samples - 1) as f64 })
        .collect();
    let phase = r.t_end / (plan.eps * plan.eps);
    let big_u_at_t = plan.big_u.eval(r.t_end);
    let big_u_tol = HORIZON_ULPS * f64::EPSILON * phase * (1.0 + sampled_sup(&r.w_e, &times));
    let mut checks = vec![Check::at_most("U_eps(T) vanishes", big_u_at_t.abs(), big_u_tol)];

    let mut artifacts = Artifacts::default();
    let steered = match (&r.steer, gs) {
        (Some(s), Some(gs)) => {
            let grid = gs.build()?;
            let (rep, gw) = steer(s, &grid, r.t_end)?;
            checks.push(Check::below("steering residual", rep.max_residual, s.eps));
            checks.push(Check::new(
                "Gronwall bound",
                gw.holds,
                format!("{:e} <= {:e}", gw.e_t, gw.bound),
            ));
            let rows: Vec<Vec<String>> = rep
                .samples
                .iter()
                .map(|p| vec![num(p.t), num(p.residual), p.rank.to_string()])
                .collect();
            artifacts.csv("steer_samples.csv", &["t", "residual", "rank"], rows)?;
            artifacts.json(
                "steer.json",
                &SteerFile {
                    eps: s.eps,
                    depth: s.depth,
                    report: &rep,
                    gronwall: &gw,
                },
            )?;
            Some(rep.max_residual)
        }
        _ => None,
    };

    let rows: Vec<Vec<String>> = times
        .iter()
        .map(|&t| {
            vec![
                num(t),
                num(plan.u_eps.eval(t)),
                num(plan.v_eps.eval(t)),
                num(plan.big_u.eval(t)),
                num(plan.v_hat.eval(t)),
            ]
        })
        .collect();
    artifacts.csv("reduce_signals.csv", &["t", "u_eps", "v_eps", "big_u", "v_hat"], rows)?;
    artifacts.json(
        "reduce.json",
        &ReduceFile {
            t_end: r.t_end,
            n: r.n,
            eps: plan.eps,
            phase,
            big_u_at_t,
            big_u_tol,
            u_eps: &plan.u_eps,
            v_eps: &plan.v_eps,
            big_u: &plan.big_u,
            v_hat: &plan.v_hat,
            steer_max_residual: steered,
            checks: &checks,
        },
    )?;
    Ok(Outcome { artifacts, checks })
}

#[derive(Serialize)]
struct ConvergeFile<'a> {
    grid: &'a GridSpec,
    report: &'a ConvergenceReport,
    checks: &'a [Check],
}

fn lieext_converge(c: &ConvergeSection, gs: &GridSpec) -> Result<Outcome, CliError> {
    let grid = gs.build()?;
    let xs = field_on_grid("converge.x_field", &c.x_field, &grid)?;
    let ys = field_on_grid("converge.y_field", &c.y_field, &grid)?;
    let systems: Vec<_> = xs.into_iter().zip(ys).collect();
    let ext = ExtendedControls {
        u_e: c.u_e.clone(),
        v_e: c.v_e.clone(),
        w_e: c.w_e.clone(),
    };
    let opts = ConvergenceOptions {
        steps_per_eps2: c.steps_per_eps2,
        h_ref: c.h_ref,
    };
    let rep = convergence_study(&systems, &grid, &ext, &c.x0, c.t_end, &c.n_list, &opts)?;
    let mut checks = Vec::new();
    if c.require_decreasing {
        let dec = rep.rows.windows(2).all(|w| w[1].e_n < w[0].e_n);
        let seq: Vec<String> = rep.rows.iter().map(|r| format!("{:e}", r.e_n)).collect();
        checks.push(Check::new("e_n strictly decreasing", dec, seq.join(" > ")));
    }
    if let Some([lo, hi]) = c.slope_range {
        checks.push(Check::new(
            "log-log slope",
            (lo..=hi).contains(&rep.slope),
            format!("{} in [{lo}, {hi}]", rep.slope),
        ));
    }
    let w_end = 1.0 + c.w_e.eval(c.t_end).abs();
    for row in &rep.rows {
        let phase = c.t_end / (row.eps * row.eps);
        checks.push(Check::at_most(
            format!("n={}: U_eps(T) vanishes", row.n),
            row.big_u_at_t.abs(),
            HORIZON_ULPS * f64::EPSILON * phase * w_end,
        ));
    }
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), num(r.eps), num(r.h), num(r.e_n), num(r.big_u_at_t)])
        .collect();
    let mut artifacts = Artifacts::default();
    artifacts.csv("convergence.csv", &["n", "eps_n", "h", "e_n", "big_u_at_t"], rows)?;
    artifacts.json(
        "convergence.json",
        &ConvergeFile {
            grid: gs,
            report: &rep,
            checks: &checks,
        },
    )?;
    Ok(Outcome { artifacts, checks })
}

#[derive(Serialize)]
struct FlowRun {
    h: f64,
    #[serde(flatten)]
    check: FlowCheck,
}

#[derive(Serialize)]
struct FlowFile<'a> {
    t_end: f64,
    runs: &'a [FlowRun],
    shrink: Option<f64>,
    checks: &'a [Check],
}

fn flow_verify(fl: &FlowSection) -> Result<Outcome, CliError> {
    let f = field_fixed("flow.f", &fl.f)?;
    let g = field_fixed("flow.g", &fl.g)?;
    let runs: Vec<FlowRun> = fl
        .steps
        .iter()
        .map(|&h| {
            Ok(FlowRun {
                h,
                check: flow_decomposition_check(&f, &g, &fl.u, &fl.x0, fl.t_end, h)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let mut checks = Vec::new();
    if let Some(max) = fl.max_gap {
        for run in &runs {
            checks.push(Check::below(format!("h={}: gap", run.h), run.check.gap, max));
        }
    }
    let shrink = (runs.len() >= 2).then(|| runs[0].check.gap / runs[runs.len() - 1].check.gap);
    if let (Some(min), Some(s)) = (fl.min_shrink, shrink) {
        checks.push(Check::new("gap shrink", s >= min, format!("{s} >= {min}")));
    }
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| vec![num(r.h), num(r.check.gap), r.check.series_terms.to_string()])
        .collect();
    let mut artifacts = Artifacts::default();
    artifacts.csv("flow.csv", &["h", "gap", "series_terms"], rows)?;
    artifacts.json(
        "flow.json",
        &FlowFile {
            t_end: fl.t_end,
            runs: &runs,
            shrink,
            checks: &checks,
        },
    )?;
    Ok(Outcome { artifacts, checks })
}

#[derive(Serialize)]
struct RankFile<'a> {
    source: &'static str,
    depth: usize,
    rel_tol: f64,
    report: &'a RankReport,
    checks: &'a [Check],
}

fn rank_check(r: &RankSection) -> Result<Outcome, CliError> {
    let (source, rep) = match (&r.product, &r.rigid) {
        (Some(p), _) => {
            let ens = p
                .fields
                .iter()
                .enumerate()
                .map(|(node, sys)| {
                    sys.iter()
                        .enumerate()
                        .map(|(j, comps)| field_fixed(&format!("rank.product.fields[{node}][{j}]"), comps))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            ("product", product_bracket_rank(&ens, &p.points, r.depth, r.rel_tol)?)
        }
        (None, Some(rr)) => {
            let js = inertia("rank.rigid.inertia", &rr.inertia, ensemble_core::rigidbody::DEFAULT_GAP)?;
            let l = torque_axis("rank.rigid.torque", rr.torque)?;
            ("rigid", rigid_bracket_rank(&js, &l, r.depth)?)
        }
        (None, None) => unreachable!("validated"),
    };
    let mut checks = Vec::new();
    if let Some(want) = r.expect_full {
        checks.push(Check::new(
            "full rank",
            rep.full == want,
            format!("rank {} of {}, asserted full = {want}", rep.rank, rep.rows),
        ));
    }
    let mut artifacts = Artifacts::default();
    artifacts.json(
        "rank.json",
        &RankFile {
            source,
            depth: r.depth,
            rel_tol: if source == "rigid" { ensemble_core::rigidbody::RANK_TOL } else { r.rel_tol },
            report: &rep,
            checks: &checks,
        },
    )?;
    Ok(Outcome { artifacts, checks })
}
