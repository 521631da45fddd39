//! Moment-method synthesis for the model ensemble
//! `ẋ = u, ẏ = v, ż^θ = f^θ(x) v` started at the origin.
//!
//! With `x = εU`, `U(t) = t² - t`, and `v = Σ_r y_r ε^{-r} P_{2r}` the
//! terminal value is `z^θ(1) = Σ_r y_r Σ_{m≥r} a_m(θ) ε^{m-r} γ_mr`, where
//! `a_m` are the Taylor coefficients of `f^θ` at 0 and
//! `γ_mr = ∫_0^1 U^m P_{2r}`. Matching `Σ_r a_r γ_rr y_r` to the target
//! is a weighted least-squares problem over the `θ` grid.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, Expr, TaylorJet};
use crate::odesim::{self, FnField, IntegrateOptions, NodeSystem, ThetaGrid, VectorField};
use crate::polyfield::{rat, rat_to_f64, Poly};
use crate::quad;
use crate::signal::{shifted_legendre_values, ControlSignal};

/// Largest number of modes the synthesizer will use.
pub const R_MAX: usize = 12;
/// Relative Tikhonov weight applied when the equilibrated Gram matrix is
/// worse conditioned than [`GRAM_COND_LIMIT`].
pub const GRAM_LAMBDA: f64 = 1e-12;
pub const GRAM_COND_LIMIT: f64 = 1e12;

/// Shifted Legendre polynomial `P_k(t) = (1/k!) d^k/dt^k (t² - t)^k`.
pub fn legendre(k: usize) -> Poly {
    let mut p = Poly::univariate(&[0, -1, 1]).pow(k as u32);
    let mut fact = BigRational::one();
    for i in 1..=k {
        p = p.derivative(0);
        fact *= rat(i as i64);
    }
    p.scale(&(BigRational::one() / fact))
}

/// `U(t) = t² - t`.
pub fn u_poly() -> Poly {
    Poly::univariate(&[0, -1, 1])
}

/// `γ_mr = ∫_0^1 (t² - t)^m P_{2r}(t) dt`, exactly.
pub fn gamma_moment(m: usize, r: usize) -> BigRational {
    gamma_with(&u_poly().pow(m as u32), &legendre(2 * r))
}

fn gamma_with(um: &Poly, p2r: &Poly) -> BigRational {
    (um * p2r)
        .integrate_unit_interval()
        .expect("univariate polynomial")
}

/// Rows `m = 1..=M`, columns `r = 1..=R`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaMatrix {
    pub m: usize,
    pub r: usize,
    entries: Vec<Vec<BigRational>>,
}

impl GammaMatrix {
    pub fn new(m: usize, r: usize) -> Self {
        let legendre_even: Vec<Poly> = (1..=r).map(|k| legendre(2 * k)).collect();
        let u = u_poly();
        let mut um = Poly::one(1);
        let mut entries = Vec::with_capacity(m);
        for _ in 1..=m {
            um = &um * &u;
            entries.push(legendre_even.iter().map(|p| gamma_with(&um, p)).collect());
        }
        GammaMatrix { m, r, entries }
    }

    /// `γ_mr` with 1-based indices.
    pub fn get(&self, m: usize, r: usize) -> &BigRational {
        &self.entries[m - 1][r - 1]
    }

    /// `γ^ε_mr = ε^{m-r} γ_mr`, the moments of `εU` against `ε^{-r}P_{2r}`.
    pub fn scaled(&self, eps: &BigRational) -> Vec<Vec<BigRational>> {
        (1..=self.m)
            .map(|m| {
                (1..=self.r)
                    .map(|r| {
                        let p = m as i32 - r as i32;
                        let s = if p >= 0 {
                            num_traits::pow(eps.clone(), p as usize)
                        } else {
                            BigRational::one() / num_traits::pow(eps.clone(), (-p) as usize)
                        };
                        self.get(m, r) * s
                    })
                    .collect()
            })
            .collect()
    }
}

/// `γ_rr = ((2r)!)² / (4r+1)!`.
pub fn gamma_diagonal_closed_form(r: usize) -> BigRational {
    let fact = |n: usize| (1..=n as i64).fold(BigRational::one(), |acc, k| acc * rat(k));
    let f2r = fact(2 * r);
    &f2r * &f2r / fact(4 * r + 1)
}

/// Taylor jets of `f^θ` at `x = 0` on every node.
pub fn taylor_table(f: &Expr, grid: &ThetaGrid, order: usize) -> Result<Vec<TaylorJet>> {
    grid.nodes()
        .par_iter()
        .map(|&th| expr::taylor_coeffs(f, th, order))
        .collect()
}

/// Target values `ẑ(θ_i)`; the target may only depend on `theta`.
pub fn target_values(target: &Expr, grid: &ThetaGrid) -> Result<Vec<f64>> {
    if target.depends_on_x() {
        return Err(Error::invalid("target must depend on theta only"));
    }
    expr::eval_grid(target, grid, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub c: Vec<f64>,
    pub residual: f64,
    /// Condition number of the column-equilibrated Gram matrix.
    pub gram_cond: f64,
    pub regularized: bool,
}

/// Weighted least squares of `zhat` onto the columns `a[·][0..R]`.
///
/// `a[i][k]` is the value of the `k`-th basis function on node `i`.
/// Columns are equilibrated before the condition check; identically
/// zero columns get coefficient 0.
pub fn project_target(a: &[Vec<f64>], zhat: &[f64], grid: &ThetaGrid, r: usize) -> Result<Projection> {
    let n = grid.len();
    Error::check_dim(n, a.len())?;
    Error::check_dim(n, zhat.len())?;
    if r == 0 {
        return Err(Error::invalid("need at least one basis function"));
    }
    if a.iter().any(|row| row.len() < r) {
        return Err(Error::invalid(format!("basis table has fewer than {r} columns")));
    }
    let w = grid.weights();
    let norms: Vec<f64> = (0..r)
        .map(|k| (0..n).map(|i| w[i] * a[i][k] * a[i][k]).sum::<f64>().sqrt())
        .collect();
    let active: Vec<usize> = (0..r).filter(|&k| norms[k] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateBasis("all basis functions vanish on the grid".into()));
    }
    let q = active.len();
    let col = |k: usize, i: usize| a[i][active[k]] / norms[active[k]];
    let mut gram = DMatrix::zeros(q, q);
    let mut rhs = DVector::zeros(q);
    for j in 0..q {
        for k in 0..=j {
            let g: f64 = (0..n).map(|i| w[i] * col(j, i) * col(k, i)).sum();
            gram[(j, k)] = g;
            gram[(k, j)] = g;
        }
        rhs[j] = (0..n).map(|i| w[i] * col(j, i) * zhat[i]).sum();
    }
    let eig = gram.clone().symmetric_eigenvalues();
    let emax = eig.iter().cloned().fold(f64::MIN, f64::max);
    let emin = eig.iter().cloned().fold(f64::MAX, f64::min);
    let gram_cond = if emin > 0.0 { emax / emin } else { f64::INFINITY };
    let regularized = gram_cond > GRAM_COND_LIMIT;
    if regularized {
        let lam = GRAM_LAMBDA * gram.trace() / q as f64;
        for j in 0..q {
            gram[(j, j)] += lam;
        }
    }
    let sol = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::DegenerateBasis("Gram matrix is singular".into()))?,
    };
    let mut c = vec![0.0; r];
    for (k, &idx) in active.iter().enumerate() {
        c[idx] = sol[k] / norms[idx];
    }
    let residual = (0..n)
        .map(|i| {
            let fit: f64 = (0..r).map(|k| c[k] * a[i][k]).sum();
            w[i] * (zhat[i] - fit).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(Projection {
        c,
        residual,
        gram_cond,
        regularized,
    })
}

/// The `R` columns `a_1..a_R` of a Taylor table.
pub fn basis_columns(jets: &[TaylorJet], r: usize) -> Vec<Vec<f64>> {
    jets.iter().map(|j| j.coeffs[1..=r].to_vec()).collect()
}

/// Largest `ε = 2^{-j} ≤ ρ/2` with `ε π μ_f / (2(ρ - ε)) < ε₁ ρ^R / b_y`.
pub fn choose_epsilon(eps1: f64, r: usize, rho: f64, mu_f: f64, b_y: f64) -> Result<f64> {
    choose_epsilon_bounded(eps1, r, rho, mu_f, b_y, f64::MIN_POSITIVE)
}

/// As [`choose_epsilon`], giving up below `eps_min`.
pub fn choose_epsilon_bounded(eps1: f64, r: usize, rho: f64, mu_f: f64, b_y: f64, eps_min: f64) -> Result<f64> {
    for (name, v) in [("eps1", eps1), ("rho", rho), ("b_y", b_y)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if !(mu_f >= 0.0) {
        return Err(Error::invalid("mu_f must be non-negative"));
    }
    let rhs = eps1 * rho.powi(r as i32) / b_y;
    let holds = |e: f64| e * std::f64::consts::PI * mu_f / (2.0 * (rho - e)) < rhs;
    let cap = rho / 2.0;
    let mut e = 2f64.powi(cap.log2().floor() as i32);
    while e > cap {
        e /= 2.0;
    }
    while e >= eps_min && e > 0.0 {
        if holds(e) {
            return Ok(e);
        }
        e /= 2.0;
    }
    Err(Error::Infeasible(format!(
        "no dyadic eps >= {eps_min:e} satisfies the perturbation inequality (rhs = {rhs:e})"
    )))
}

/// `u = d/dt (εU) = ε(2t - 1)` and `v = Σ_r y_r ε^{-r} P_{2r}`, the latter
/// kept in the Legendre basis.
pub fn synthesize_controls(y: &[f64], eps: f64) -> Result<(ControlSignal, ControlSignal)> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    let u = ControlSignal::polynomial(vec![-eps, 2.0 * eps]);
    let mut coeffs = vec![0.0; 2 * y.len() + 1];
    for (k, &yr) in y.iter().enumerate() {
        coeffs[2 * k + 2] = yr * eps.powi(-(k as i32 + 1));
    }
    Ok((u, ControlSignal::legendre(coeffs, 1.0)?))
}

/// Controls for horizon `T`: `u_T(t) = u(t/T)/T`, `v_T(t) = v(t/T)/T`
/// reach the same terminal state at `t = T`.
pub fn rescale_horizon(signal: &ControlSignal, t_end: f64) -> Result<ControlSignal> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    match signal {
        ControlSignal::Polynomial { coeffs } => Ok(ControlSignal::polynomial(
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c / t_end.powi(k as i32 + 1))
                .collect(),
        )),
        ControlSignal::Legendre { coeffs, t_end: t0 } => {
            ControlSignal::legendre(coeffs.iter().map(|c| c / t_end).collect(), t0 * t_end)
        }
        _ => Err(Error::Unsupported("only polynomial and Legendre controls are rescaled".into())),
    }
}

const QUAD_ABS_TOL: f64 = 1e-15;
const QUAD_REL_TOL: f64 = 1e-13;

/// `z^θ(1) = ∫_0^1 f^θ(U(t)) v(t) dt` by adaptive quadrature, with
/// `U(t) = ∫_0^t u`. Direct: no cancellation control, so only reliable
/// for moderate control gains.
///
/// The absolute tolerance is raised to the rounding floor of the
/// integrand, about `ε_mach · Σ|v_k| · max|f(U)|` (Legendre values are
/// bounded by 1; monomials on `[0, 1]` too).
pub fn evaluate_terminal(f: &Expr, grid: &ThetaGrid, u: &ControlSignal, v: &ControlSignal) -> Result<Vec<f64>> {
    let big_u = u.primitive()?;
    let v_l1 = match v {
        ControlSignal::Polynomial { coeffs } | ControlSignal::Legendre { coeffs, .. } => {
            coeffs.iter().map(|c| c.abs()).sum()
        }
        _ => (0..=64).map(|k| v.eval(k as f64 / 64.0).abs()).fold(0.0, f64::max),
    };
    grid.nodes()
        .par_iter()
        .map(|&th| {
            let f_max = (0..=32)
                .filter_map(|k| f.eval(big_u.eval(k as f64 / 32.0), th).ok())
                .map(f64::abs)
                .fold(0.0, f64::max);
            let abs_tol = QUAD_ABS_TOL.max(64.0 * f64::EPSILON * v_l1 * f_max);
            let err = std::sync::Mutex::new(None);
            let val = quad::integrate(
                |t| match f.eval(big_u.eval(t), th) {
                    Ok(fx) => fx * v.eval(t),
                    Err(e) => {
                        *err.lock().unwrap() = Some(e);
                        f64::NAN
                    }
                },
                0.0,
                1.0,
                abs_tol,
                QUAD_REL_TOL,
            );
            if let Some(e) = err.into_inner().unwrap() {
                return Err(e);
            }
            val
        })
        .collect()
}

/// `h_r(x) = Σ_{m≥r} a_m x^{m-r}` from the Taylor jet.
fn tail_series(jet: &TaylorJet, r: usize, x: f64) -> f64 {
    jet.coeffs[r..].iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

/// `z^θ(1)` for the moment controls, in the cancellation-free form
/// `Σ_r y_r ∫_0^1 U^r h_r(εU) P_{2r} dt`.
///
/// The terms `m < r` are dropped because `γ_mr = 0` exactly; the jets must
/// be long enough for `ε/4` to lie well inside their convergence disc.
pub fn evaluate_terminal_moments(jets: &[TaylorJet], y: &[f64], eps: f64) -> Result<Vec<f64>> {
    let r_count = y.len();
    if jets.iter().any(|j| j.coeffs.len() <= r_count) {
        return Err(Error::invalid("Taylor jets shorter than the number of modes"));
    }
    jets.par_iter()
        .map(|jet| {
            let mut z = 0.0;
            for (k, &yr) in y.iter().enumerate() {
                if yr == 0.0 {
                    continue;
                }
                let r = k + 1;
                let q = quad::integrate(
                    |t| {
                        let u = t * t - t;
                        let p = shifted_legendre_values(2 * r, t)[2 * r];
                        u.powi(r as i32) * tail_series(jet, r, eps * u) * p
                    },
                    0.0,
                    1.0,
                    QUAD_ABS_TOL,
                    QUAD_REL_TOL,
                )?;
                z += yr * q;
            }
            Ok(z)
        })
        .collect()
}

/// Terminal states `(x, y, z^θ)` of the model ODE under `(u, v)`.
pub fn integrate_model(f: &Expr, grid: &ThetaGrid, u: &ControlSignal, v: &ControlSignal, h: f64) -> Result<Vec<Vec<f64>>> {
    let x_field: Arc<dyn VectorField> = Arc::new(FnField::new(3, |_x: &[f64], out: &mut [f64]| {
        out.copy_from_slice(&[1.0, 0.0, 0.0]);
    }));
    let systems: Vec<NodeSystem> = grid
        .nodes()
        .iter()
        .map(|&th| {
            let f = f.clone();
            let y_field: Arc<dyn VectorField> = Arc::new(FnField::new(3, move |x: &[f64], out: &mut [f64]| {
                out[0] = 0.0;
                out[1] = 1.0;
                out[2] = f.eval(x[0], th).unwrap_or(f64::NAN);
            }));
            vec![x_field.clone(), y_field]
        })
        .collect();
    let rec = odesim::integrate_ensemble(
        &systems,
        &vec![u.clone(), v.clone()],
        &[0.0; 3],
        1.0,
        h,
        IntegrateOptions { thin: usize::MAX },
    )?;
    Ok(rec.final_states())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelScenario {
    pub f_theta: Expr,
    pub target: Expr,
    pub grid: ThetaGrid,
    pub eps1: f64,
    pub rho: f64,
    pub mu_f: f64,
    /// Fixes the number of modes instead of searching `1..=R_MAX`.
    pub r_fixed: Option<usize>,
    /// Smallest `ε` tried by the dyadic search.
    pub eps_min: f64,
    /// RK4 step of the ODE cross-check.
    pub ode_step: f64,
    /// Samples per axis of the `|f| ≤ μ_f` sanity check.
    pub sup_samples: usize,
}

impl ModelScenario {
    pub fn new(f_theta: Expr, target: Expr, grid: ThetaGrid, eps1: f64, rho: f64, mu_f: f64) -> Self {
        ModelScenario {
            f_theta,
            target,
            grid,
            eps1,
            rho,
            mu_f,
            r_fixed: None,
            eps_min: 1e-300,
            ode_step: 1e-4,
            sup_samples: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TaylorCoeffs,
    SupCheck,
    ProjectTarget,
    ChooseEpsilon,
    EvaluateTerminal,
    FinalBound,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub ok: bool,
    pub failed_stage: Option<Stage>,
    pub message: Option<String>,
    pub r: usize,
    pub eps1: f64,
    pub eps: f64,
    pub c: Vec<f64>,
    pub y: Vec<f64>,
    pub gamma_diag: Vec<f64>,
    pub b_y: f64,
    pub mu_f_sampled: f64,
    pub projection_residual: f64,
    pub projection_residuals: Vec<f64>,
    pub perturbation_bound: f64,
    pub terminal_error: f64,
    pub bound_2eps1: f64,
    /// Largest `|z_ode - z|` over nodes; `None` if the ODE run failed.
    pub ode_max_gap: Option<f64>,
    /// Largest of `|x(1)|`, `|y(1)|` in the ODE run.
    pub ode_xy_terminal: Option<f64>,
    /// Largest gap of direct quadrature of `f(U)v` against `z`.
    pub direct_quadrature_gap: Option<f64>,
    pub target: Vec<f64>,
    pub achieved: Vec<f64>,
    pub controls: Option<(ControlSignal, ControlSignal)>,
}

impl SynthesisReport {
    fn empty(eps1: f64) -> Self {
        SynthesisReport {
            ok: false,
            failed_stage: None,
            message: None,
            r: 0,
            eps1,
            eps: f64::NAN,
            c: vec![],
            y: vec![],
            gamma_diag: vec![],
            b_y: f64::NAN,
            mu_f_sampled: f64::NAN,
            projection_residual: f64::NAN,
            projection_residuals: vec![],
            perturbation_bound: f64::NAN,
            terminal_error: f64::NAN,
            bound_2eps1: 2.0 * eps1,
            ode_max_gap: None,
            ode_xy_terminal: None,
            direct_quadrature_gap: None,
            target: vec![],
            achieved: vec![],
            controls: None,
        }
    }

    fn fail(mut self, stage: Stage, msg: impl Into<String>) -> Self {
        self.ok = false;
        self.failed_stage = Some(stage);
        self.message = Some(msg.into());
        self
    }
}

/// Extra Taylor terms kept beyond `R` for the terminal evaluation.
const JET_EXTRA: usize = 30;

/// Runs the full pipeline. Operational errors (bad input) are returned as
/// `Err`; scientific failures are reported with the failing stage.
pub fn verify_model(sc: &ModelScenario) -> Result<SynthesisReport> {
    let mut rep = SynthesisReport::empty(sc.eps1);
    if !(sc.eps1 > 0.0 && sc.rho > 0.0 && sc.mu_f >= 0.0) {
        return Err(Error::invalid("eps1 and rho must be positive, mu_f non-negative"));
    }
    let r_max = sc.r_fixed.unwrap_or(R_MAX);
    if r_max == 0 || r_max > R_MAX {
        return Err(Error::invalid(format!("R must lie in 1..={R_MAX}")));
    }
    let zhat = target_values(&sc.target, &sc.grid)?;
    rep.target = zhat.clone();
    let jets = match taylor_table(&sc.f_theta, &sc.grid, r_max + JET_EXTRA) {
        Ok(j) => j,
        Err(e) => return Ok(rep.fail(Stage::TaylorCoeffs, e.to_string())),
    };

    rep.mu_f_sampled = expr::sampled_sup(&sc.f_theta, &sc.grid, sc.rho, sc.sup_samples)?;
    if rep.mu_f_sampled > sc.mu_f {
        let msg = format!("sampled sup |f| = {} exceeds mu_f = {}", rep.mu_f_sampled, sc.mu_f);
        return Ok(rep.fail(Stage::SupCheck, msg));
    }

    let table = basis_columns(&jets, r_max);
    let candidates: Vec<usize> = match sc.r_fixed {
        Some(r) => vec![r],
        None => (1..=R_MAX).collect(),
    };
    let mut chosen = None;
    for &r in &candidates {
        let p = match project_target(&table, &zhat, &sc.grid, r) {
            Ok(p) => p,
            Err(Error::DegenerateBasis(m)) => return Ok(rep.fail(Stage::ProjectTarget, m)),
            Err(e) => return Err(e),
        };
        rep.projection_residuals.push(p.residual);
        let good = p.residual < sc.eps1;
        chosen = Some((r, p));
        if good {
            break;
        }
    }
    let (r, proj) = chosen.expect("at least one candidate");
    rep.r = r;
    rep.c = proj.c.clone();
    rep.projection_residual = proj.residual;
    if proj.residual >= sc.eps1 {
        return Ok(rep.fail(
            Stage::ProjectTarget,
            format!(
                "projection residual {} >= eps1 = {} with R = {r}",
                proj.residual, sc.eps1
            ),
        ));
    }

    let gamma_diag: Vec<f64> = (1..=r).map(|k| rat_to_f64(&gamma_diagonal_closed_form(k))).collect();
    let y: Vec<f64> = proj.c.iter().zip(&gamma_diag).map(|(c, g)| c / g).collect();
    let b_y: f64 = y.iter().map(|v| v.abs()).sum();
    rep.gamma_diag = gamma_diag;
    rep.y = y.clone();
    rep.b_y = b_y;

    let eps = if b_y == 0.0 {
        sc.rho / 2.0
    } else {
        match choose_epsilon_bounded(sc.eps1, r, sc.rho, sc.mu_f, b_y, sc.eps_min) {
            Ok(e) => e,
            Err(Error::Infeasible(m)) => return Ok(rep.fail(Stage::ChooseEpsilon, m)),
            Err(e) => return Err(e),
        }
    };
    rep.eps = eps;
    let (a, b) = sc.grid.interval();
    rep.perturbation_bound =
        eps * std::f64::consts::PI * sc.mu_f * b_y / (4.0 * sc.rho.powi(r as i32) * (sc.rho - eps)) * (b - a).sqrt();

    let (u, v) = synthesize_controls(&y, eps)?;
    rep.controls = Some((u.clone(), v.clone()));

    let z = match evaluate_terminal_moments(&jets, &y, eps) {
        Ok(z) => z,
        Err(e) => return Ok(rep.fail(Stage::EvaluateTerminal, e.to_string())),
    };
    rep.achieved = z.clone();
    let diff: Vec<Vec<f64>> = z.iter().zip(&zhat).map(|(a, b)| vec![a - b]).collect();
    let zero = vec![vec![0.0]; z.len()];
    rep.terminal_error = odesim::lp_distance(&diff, &zero, &sc.grid, 2)?;

    if let Ok(states) = integrate_model(&sc.f_theta, &sc.grid, &u, &v, sc.ode_step) {
        rep.ode_max_gap = Some(
            states
                .iter()
                .zip(&z)
                .map(|(s, zi)| (s[2] - zi).abs())
                .fold(0.0, f64::max),
        );
        rep.ode_xy_terminal = Some(
            states
                .iter()
                .map(|s| s[0].abs().max(s[1].abs()))
                .fold(0.0, f64::max),
        );
    }
    if let Ok(direct) = evaluate_terminal(&sc.f_theta, &sc.grid, &u, &v) {
        rep.direct_quadrature_gap = Some(
            direct
                .iter()
                .zip(&z)
                .map(|(d, zi)| (d - zi).abs())
                .fold(0.0, f64::max),
        );
    }

    if rep.terminal_error >= rep.bound_2eps1 {
        let msg = format!("terminal error {} >= 2*eps1 = {}", rep.terminal_error, rep.bound_2eps1);
        return Ok(rep.fail(Stage::FinalBound, msg));
    }
    rep.ok = true;
    Ok(rep)
}

/// Exact check that `∫_0^1 v = 0` for the moment basis.
pub fn legendre_even_integrals_vanish(r: usize) -> bool {
    (1..=r).all(|k| {
        legendre(2 * k)
            .integrate_unit_interval()
            .map(|q| q.is_zero())
            .unwrap_or(false)
    })
}
