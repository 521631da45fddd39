//! Lie extensions realized by fast oscillations.
//!
//! A 3-input extended system `X u_e + Y v_e + [X,Y] w_e` is approximated by
//! the 2-input system `X u_ε + Y v_ε` with
//! `u_ε = u_e + ε U̇_ε`, `U_ε = 2 sin(t/ε²) w_e`, `v_ε = v_e + ε⁻¹ sin(t/ε²)`.
//! Choosing `ε_n = (T/(πn))^{1/2}` makes `U_ε(T) = 0`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::odesim::{self, FnControls, IntegrateOptions, NodeSystem, ThetaGrid, VectorField};
use crate::polyfield::{ad_series_terms, iterated_brackets, lie_bracket, BracketLabel, CompiledField, PolyField};
use crate::signal::ControlSignal;

/// Default steps per `ε²` for oscillatory runs.
pub const STEPS_PER_EPS2: f64 = 40.0;
/// Coarsest admissible step is `ε² / MIN_STEPS_PER_EPS2`.
pub const MIN_STEPS_PER_EPS2: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionPlan {
    pub t_end: f64,
    pub n: usize,
    pub eps: f64,
    /// `U_ε = 2 sin(t/ε²) w_e`.
    pub big_u: ControlSignal,
    /// `v̂_ε = sin(t/ε²)`.
    pub v_hat: ControlSignal,
    pub u_eps: ControlSignal,
    pub v_eps: ControlSignal,
}

/// `ε_n = (T/(πn))^{1/2}`.
pub fn eps_n(t_end: f64, n: usize) -> f64 {
    (t_end / (std::f64::consts::PI * n as f64)).sqrt()
}

pub fn reduce_controls(
    u_e: &ControlSignal,
    v_e: &ControlSignal,
    w_e: &ControlSignal,
    t_end: f64,
    n: usize,
) -> Result<ReductionPlan> {
    if n < 1 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let eps = eps_n(t_end, n);
    let eps2 = eps * eps;
    let big_u = ControlSignal::sinusoid(2.0, eps2, 0.0, w_e.clone())?;
    let du = big_u.derivative().map_err(|_| {
        Error::Unsupported("w_e must be differentiable in closed form (not sampled)".into())
    })?;
    let v_hat = ControlSignal::sinusoid(1.0, eps2, 0.0, ControlSignal::constant(1.0))?;
    Ok(ReductionPlan {
        t_end,
        n,
        eps,
        u_eps: ControlSignal::sum(vec![u_e.clone(), du.scaled(eps)]),
        v_eps: ControlSignal::sum(vec![v_e.clone(), v_hat.scaled(1.0 / eps)]),
        big_u,
        v_hat,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowCheck {
    pub lhs_endpoint: Vec<f64>,
    pub rhs_endpoint: Vec<f64>,
    pub gap: f64,
    /// Number of terms of the pulled-back series.
    pub series_terms: usize,
}

/// Compares the flow of `ẋ = f(x) + g u(t)` with the factorization: flow of
/// the pulled-back field `Σ_j U(τ)^j ad_g^j f / j!` followed by the
/// translation `x ↦ x + U(T) g`, where `U(t) = ∫_0^t u`.
pub fn flow_decomposition_check(
    f: &PolyField,
    g: &PolyField,
    u: &ControlSignal,
    x0: &[f64],
    t_end: f64,
    h: f64,
) -> Result<FlowCheck> {
    Error::check_dim(f.dim(), x0.len())?;
    let terms = ad_series_terms(f, g)?;
    let lhs_sys = odesim::compile_systems(&[vec![f.clone(), g.clone()]]);
    let lhs_controls = vec![ControlSignal::constant(1.0), u.clone()];
    let lhs = odesim::integrate_ensemble(&lhs_sys, &lhs_controls, x0, t_end, h, IntegrateOptions { thin: usize::MAX })?
        .final_states()
        .remove(0);

    let big_u = u.primitive()?;
    let k = terms.len().max(1);
    let rhs_sys = if terms.is_empty() {
        odesim::compile_systems(&[vec![PolyField::zero(f.dim())]])
    } else {
        odesim::compile_systems(&[terms.clone()])
    };
    let controls = FnControls::new(k, |t: f64, out: &mut [f64]| {
        let s = big_u.eval(t);
        let mut p = 1.0;
        for o in out.iter_mut() {
            *o = p;
            p *= s;
        }
    });
    let mut rhs = odesim::integrate_ensemble(&rhs_sys, &controls, x0, t_end, h, IntegrateOptions { thin: usize::MAX })?
        .final_states()
        .remove(0);
    let shift = big_u.eval(t_end);
    let gv = g.eval(&vec![0.0; g.dim()])?;
    for (r, gi) in rhs.iter_mut().zip(&gv) {
        *r += shift * gi;
    }
    let gap = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(FlowCheck {
        lhs_endpoint: lhs,
        rhs_endpoint: rhs,
        gap,
        series_terms: terms.len(),
    })
}

/// Labels present on at least one node, ordered by length then indices,
/// with the per-node compiled fields (`None` where the bracket vanishes).
/// A label whose field equals `±` the field of an earlier label on every
/// node is dropped (e.g. `[f2,f1]` after `[f1,f2]`).
struct BracketTable {
    labels: Vec<BracketLabel>,
    fields: Vec<Vec<Option<Arc<CompiledField>>>>,
}

fn bracket_table(ensemble: &[Vec<PolyField>], depth: usize) -> Result<BracketTable> {
    let mut per_node: Vec<BTreeMap<(usize, BracketLabel), PolyField>> = Vec::new();
    for sys in ensemble {
        per_node.push(
            iterated_brackets(sys, depth)?
                .into_iter()
                .map(|(label, field)| ((label.len(), label), field))
                .collect(),
        );
    }
    let mut keys: Vec<(usize, BracketLabel)> = per_node.iter().flat_map(|m| m.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let zero = PolyField::zero(ensemble.first().and_then(|s| s.first()).map_or(0, |f| f.dim()));
    let minus_one = BigRational::from_integer((-1).into());
    let field_of = |node: &BTreeMap<(usize, BracketLabel), PolyField>, k: &(usize, BracketLabel)| {
        node.get(k).cloned().unwrap_or_else(|| zero.clone())
    };
    let mut kept: Vec<(usize, BracketLabel)> = Vec::new();
    for k in keys {
        let redundant = kept.iter().any(|j| {
            let same = per_node.iter().all(|node| field_of(node, &k) == field_of(node, j));
            let opposite = per_node
                .iter()
                .all(|node| field_of(node, &k) == field_of(node, j).scale(&minus_one));
            same || opposite
        });
        if !redundant {
            kept.push(k);
        }
    }
    let fields = per_node
        .iter()
        .map(|m| {
            kept.iter()
                .map(|k| m.get(k).map(|f| Arc::new(f.compile())))
                .collect()
        })
        .collect();
    Ok(BracketTable {
        labels: kept.into_iter().map(|(_, l)| l).collect(),
        fields,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteerSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub residual: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteerReport {
    pub labels: Vec<String>,
    pub v_alpha: Vec<(String, ControlSignal)>,
    /// Worst `L¹(Θ)` residual over sample points and interval midpoints.
    pub max_residual: f64,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    /// Smallest numerical rank of the bracket matrix along the path.
    pub min_rank: usize,
    pub samples: Vec<SteerSample>,
    pub midpoint_residuals: Vec<f64>,
    pub path_end: Vec<f64>,
}

/// Substeps of the reference path per half sample interval.
const PATH_SUBSTEPS: usize = 16;
const LSTSQ_RTOL: f64 = 1e-12;

/// Pointwise least-squares realization of a target field `Y` by bracket
/// controls `v_α(t)` along the `Y`-trajectory from `x_start`.
pub fn extended_steer(
    ensemble: &[Vec<PolyField>],
    grid: &ThetaGrid,
    y: &PolyField,
    x_start: &[f64],
    t_end: f64,
    depth: usize,
    samples: usize,
) -> Result<SteerReport> {
    Error::check_dim(grid.len(), ensemble.len())?;
    Error::check_dim(y.dim(), x_start.len())?;
    if samples < 2 {
        return Err(Error::invalid("need at least two sample points"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    for sys in ensemble {
        for f in sys {
            Error::check_dim(y.dim(), f.dim())?;
        }
    }
    let dim = y.dim();
    let table = bracket_table(ensemble, depth)?;
    let ny = y.compile();

    let intervals = samples - 1;
    let h = t_end / (2 * intervals * PATH_SUBSTEPS) as f64;
    let path = odesim::integrate_ensemble(
        &odesim::compile_systems(&[vec![y.clone()]]),
        &vec![ControlSignal::constant(1.0)],
        x_start,
        t_end,
        h,
        IntegrateOptions { thin: PATH_SUBSTEPS },
    )?;
    if path.times.len() != 2 * intervals + 1 {
        return Err(Error::invalid("reference path sampling mismatch"));
    }

    let w = grid.weights();
    let eval_cols = |x: &[f64]| -> Vec<Vec<Vec<f64>>> {
        table
            .fields
            .iter()
            .map(|node| {
                node.iter()
                    .map(|f| match f {
                        Some(f) => f.eval(x),
                        None => vec![0.0; dim],
                    })
                    .collect()
            })
            .collect()
    };
    let residual = |x: &[f64], v: &[f64]| -> f64 {
        let target = ny.eval(x);
        let cols = eval_cols(x);
        cols.iter()
            .zip(w)
            .map(|(node, wi)| {
                let mut r = target.clone();
                for (c, va) in node.iter().zip(v) {
                    for d in 0..dim {
                        r[d] -= va * c[d];
                    }
                }
                wi * r.iter().map(|a| a * a).sum::<f64>().sqrt()
            })
            .sum()
    };

    let nl = table.labels.len();
    let rows = grid.len() * dim;
    let mut values = vec![Vec::with_capacity(samples); nl];
    let mut sample_reports = Vec::with_capacity(samples);
    let mut times = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = path.times[2 * k];
        let x = path.state(2 * k, 0).to_vec();
        let cols = eval_cols(&x);
        let target = ny.eval(&x);
        let a = DMatrix::from_fn(rows, nl, |r, c| cols[r / dim][c][r % dim]);
        let b = DVector::from_fn(rows, |r, _| target[r % dim]);
        let rw: Vec<f64> = (0..rows).map(|r| w[r / dim]).collect();
        let v = linalg::weighted_lstsq_svd(&a, &b, &rw, LSTSQ_RTOL)?;
        let vv: Vec<f64> = v.iter().copied().collect();
        for (col, val) in values.iter_mut().zip(&vv) {
            col.push(*val);
        }
        sample_reports.push(SteerSample {
            t,
            residual: residual(&x, &vv),
            rank: linalg::numerical_rank(&a, LSTSQ_RTOL),
            x,
        });
        times.push(t);
    }

    let mut midpoint_residuals = Vec::with_capacity(intervals);
    for k in 0..intervals {
        let x = path.state(2 * k + 1, 0);
        let v: Vec<f64> = values.iter().map(|col| 0.5 * (col[k] + col[k + 1])).collect();
        midpoint_residuals.push(residual(x, &v));
    }

    let mut max_residual = 0.0;
    let mut worst_t = 0.0;
    let mut worst_x = x_start.to_vec();
    for s in &sample_reports {
        if s.residual > max_residual {
            max_residual = s.residual;
            worst_t = s.t;
            worst_x = s.x.clone();
        }
    }
    for (k, &r) in midpoint_residuals.iter().enumerate() {
        if r > max_residual {
            max_residual = r;
            worst_t = path.times[2 * k + 1];
            worst_x = path.state(2 * k + 1, 0).to_vec();
        }
    }

    let labels: Vec<String> = table.labels.iter().map(|l| l.to_string()).collect();
    let v_alpha = labels
        .iter()
        .zip(values)
        .map(|(l, vals)| Ok((l.clone(), ControlSignal::sampled(times.clone(), vals)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteerReport {
        labels,
        v_alpha,
        max_residual,
        worst_t,
        worst_x,
        min_rank: sample_reports.iter().map(|s| s.rank).min().unwrap_or(0),
        samples: sample_reports,
        midpoint_residuals,
        path_end: path.state(2 * intervals, 0).to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GronwallCheck {
    /// `L¹(Θ)` distance at `T` between the steered ensemble and the path.
    pub e_t: f64,
    pub lipschitz: f64,
    pub residual: f64,
    /// `(ε/L)(e^{LT} - 1)`, or `εT` when `L = 0`.
    pub bound: f64,
    pub holds: bool,
}

/// Drives every node with the extended controls of `rep` and compares the
/// terminal spread with the Gronwall bound built from the worst residual
/// and a Lipschitz constant measured along both trajectories.
pub fn steer_gronwall_check(
    ensemble: &[Vec<PolyField>],
    grid: &ThetaGrid,
    depth: usize,
    rep: &SteerReport,
    x_start: &[f64],
    t_end: f64,
    h: f64,
) -> Result<GronwallCheck> {
    let table = bracket_table(ensemble, depth)?;
    if table.labels.len() != rep.v_alpha.len() {
        return Err(Error::invalid("steering report does not match the ensemble"));
    }
    let dim = x_start.len();
    let systems: Vec<NodeSystem> = table
        .fields
        .iter()
        .map(|node| {
            node.iter()
                .map(|f| match f {
                    Some(f) => f.clone() as Arc<dyn VectorField>,
                    None => Arc::new(PolyField::zero(dim).compile()) as Arc<dyn VectorField>,
                })
                .collect()
        })
        .collect();
    let controls: Vec<ControlSignal> = rep.v_alpha.iter().map(|(_, s)| s.clone()).collect();
    let rec = odesim::integrate_ensemble(&systems, &controls, x_start, t_end, h, IntegrateOptions::default())?;
    let end = rec.final_states();
    let target = vec![rep.path_end.clone(); grid.len()];
    let e_t = odesim::lp_distance(&end, &target, grid, 1)?;

    let mut lipschitz = 0.0f64;
    let sample_points: Vec<(f64, Vec<f64>)> = rep.samples.iter().map(|s| (s.t, s.x.clone())).collect();
    for (node, fields) in table.fields.iter().enumerate() {
        let mut pts: Vec<(f64, Vec<f64>)> = (0..rec.times.len())
            .map(|k| (rec.times[k], rec.state(k, node).to_vec()))
            .collect();
        pts.extend(sample_points.iter().cloned());
        for (t, x) in pts {
            let mut jac = DMatrix::<f64>::zeros(dim, dim);
            for (f, c) in fields.iter().zip(&controls) {
                if let Some(f) = f {
                    let v = c.eval(t);
                    let j = f.jacobian(&x);
                    for r in 0..dim {
                        for s in 0..dim {
                            jac[(r, s)] += v * j[r][s];
                        }
                    }
                }
            }
            let norm = jac.singular_values().iter().cloned().fold(0.0, f64::max);
            lipschitz = lipschitz.max(norm);
        }
    }
    let eps = rep.max_residual;
    let bound = if lipschitz * t_end < 1e-12 {
        eps * t_end
    } else {
        eps / lipschitz * (lipschitz * t_end).exp_m1()
    };
    Ok(GronwallCheck {
        e_t,
        lipschitz,
        residual: eps,
        bound,
        holds: e_t <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtendedControls {
    pub u_e: ControlSignal,
    pub v_e: ControlSignal,
    pub w_e: ControlSignal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceOptions {
    /// Oscillatory step is `ε² / steps_per_eps2`.
    pub steps_per_eps2: f64,
    /// Step of the smooth reference integration.
    pub h_ref: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            steps_per_eps2: STEPS_PER_EPS2,
            h_ref: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub eps: f64,
    pub h: f64,
    pub e_n: f64,
    /// `U_ε(T)`, zero up to rounding.
    pub big_u_at_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log e_n` against `log ε_n`.
    pub slope: f64,
    pub reference_end: Vec<Vec<f64>>,
    /// `L¹(Θ)` change of the reference endpoint when its step is halved.
    pub reference_step_gap: f64,
}

/// Least-squares slope of `log y` against `log x` (NaN if fewer than two
/// positive pairs).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Terminal error of the oscillatory 2-input realization against the
/// 3-input extended system, for each `n`.
pub fn convergence_study(
    systems: &[(PolyField, PolyField)],
    grid: &ThetaGrid,
    ext: &ExtendedControls,
    x0: &[f64],
    t_end: f64,
    n_list: &[usize],
    opts: &ConvergenceOptions,
) -> Result<ConvergenceReport> {
    Error::check_dim(grid.len(), systems.len())?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_list must be non-empty and strictly increasing"));
    }
    if !(opts.h_ref > 0.0) {
        return Err(Error::invalid("reference step must be positive"));
    }
    for &n in n_list {
        let eps = eps_n(t_end, n);
        let h = eps * eps / opts.steps_per_eps2;
        let required = eps * eps / MIN_STEPS_PER_EPS2;
        if !(h <= required) {
            return Err(Error::StepTooCoarse { h, required });
        }
    }

    let extended: Vec<Vec<PolyField>> = systems
        .iter()
        .map(|(x, y)| Ok(vec![x.clone(), y.clone(), lie_bracket(x, y)?]))
        .collect::<Result<_>>()?;
    let ext_sys = odesim::compile_systems(&extended);
    let ext_controls = vec![ext.u_e.clone(), ext.v_e.clone(), ext.w_e.clone()];
    let thin = IntegrateOptions { thin: usize::MAX };
    let reference = odesim::integrate_ensemble(&ext_sys, &ext_controls, x0, t_end, opts.h_ref, thin)?.final_states();
    let reference_half =
        odesim::integrate_ensemble(&ext_sys, &ext_controls, x0, t_end, opts.h_ref / 2.0, thin)?.final_states();
    let reference_step_gap = odesim::lp_distance(&reference, &reference_half, grid, 1)?;

    let reduced: Vec<Vec<PolyField>> = systems.iter().map(|(x, y)| vec![x.clone(), y.clone()]).collect();
    let red_sys = odesim::compile_systems(&reduced);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let plan = reduce_controls(&ext.u_e, &ext.v_e, &ext.w_e, t_end, n)?;
        let h = plan.eps * plan.eps / opts.steps_per_eps2;
        let end = odesim::integrate_ensemble(&red_sys, &vec![plan.u_eps.clone(), plan.v_eps.clone()], x0, t_end, h, thin)?
            .final_states();
        rows.push(ConvergenceRow {
            n,
            eps: plan.eps,
            h,
            e_n: odesim::lp_distance(&end, &reference, grid, 1)?,
            big_u_at_t: plan.big_u.eval(t_end),
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.e_n).collect();
    Ok(ConvergenceReport {
        slope: loglog_slope(&eps, &errs),
        rows,
        reference_end: reference,
        reference_step_gap,
    })
}
