//! Rigid-body ensembles driven by one torque axis.
//!
//! A body with inverse inertia `J = diag(J1, J2, J3)` (principal axes) has
//! momentum drift `K ↦ K × JK`. With a torque along `L` the brackets of
//! the drift with the constant field `L` produce the constant chain
//! `V^m = Λ^m L`, `Λ = D_J · L̂`. An ensemble of `N` bodies is tested
//! through the `3N × 3N` matrix whose row block `θ` is `(V^0 | … | V^{3N-1})`
//! for body `θ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::odesim::{self, IntegrateOptions};
use crate::polyfield::{iterated_brackets, rat_from_f64, rat_to_f64, BracketLabel, Poly, PolyField};
use crate::signal::ControlSignal;

pub const DEFAULT_GAP: f64 = 1e-9;
/// Scaled-determinant threshold above which the ensemble is generating.
pub const TAU: f64 = 1e-8;
/// Scaled-determinant threshold at or below which the matrix is singular.
pub const TAU0: f64 = 1e-12;

/// Principal values of an inverse inertia tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InertiaSpec {
    j: [f64; 3],
}

impl InertiaSpec {
    pub fn new(j: [f64; 3]) -> Result<Self> {
        Self::with_gap(j, DEFAULT_GAP)
    }

    /// Rejects non-positive values and pairs whose relative gap
    /// `|Ji - Jk| / max(Ji, Jk)` is below `gap`.
    pub fn with_gap(j: [f64; 3], gap: f64) -> Result<Self> {
        if j.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("principal values must be positive, got {j:?}")));
        }
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let rel = (j[a] - j[b]).abs() / j[a].max(j[b]);
            if rel < gap {
                return Err(Error::invalid(format!(
                    "principal values J{} = {} and J{} = {} are not distinct (relative gap {rel:e} < {gap:e})",
                    a + 1,
                    j[a],
                    b + 1,
                    j[b]
                )));
            }
        }
        Ok(InertiaSpec { j })
    }

    pub fn values(&self) -> [f64; 3] {
        self.j
    }

    /// `εJ`; the relative gaps are unchanged.
    pub fn scaled(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid("scale must be positive"));
        }
        Ok(InertiaSpec {
            j: self.j.map(|v| v * eps),
        })
    }

    /// Diagonal of `D_J = diag(J3 - J2, J1 - J3, J2 - J1)`.
    pub fn gaps(&self) -> [f64; 3] {
        let [j1, j2, j3] = self.j;
        [j3 - j2, j1 - j3, j2 - j1]
    }

    fn exact(&self) -> Result<[BigRational; 3]> {
        Ok([rat_from_f64(self.j[0])?, rat_from_f64(self.j[1])?, rat_from_f64(self.j[2])?])
    }
}

/// Torque direction `L`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueAxis {
    l: [f64; 3],
}

impl TorqueAxis {
    pub fn new(l: [f64; 3]) -> Result<Self> {
        if l.iter().any(|v| !v.is_finite()) || l.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("torque axis must be a finite nonzero vector"));
        }
        Ok(TorqueAxis { l })
    }

    pub fn values(&self) -> [f64; 3] {
        self.l
    }

    fn exact(&self) -> Result<[BigRational; 3]> {
        Ok([rat_from_f64(self.l[0])?, rat_from_f64(self.l[1])?, rat_from_f64(self.l[2])?])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Generating,
    Singular,
    Borderline,
}

impl Verdict {
    pub fn classify(det: f64, scale: f64) -> Verdict {
        let d = det.abs();
        if d > TAU * scale {
            Verdict::Generating
        } else if d <= TAU0 * scale {
            Verdict::Singular
        } else {
            Verdict::Borderline
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RNReport {
    pub n: usize,
    pub det: f64,
    pub scale: f64,
    pub scaled_det: f64,
    pub cond: f64,
    pub verdict: Verdict,
}

/// `K ↦ K × JK = ((J3-J2)K2K3, (J1-J3)K1K3, (J2-J1)K1K2)`.
pub fn euler_field(j: &InertiaSpec) -> Result<PolyField> {
    let [j1, j2, j3] = j.exact()?;
    let k = |i| Poly::var(3, i);
    let c = |q: BigRational| Poly::constant(3, q);
    PolyField::new(vec![
        &c(&j3 - &j2) * &(&k(1) * &k(2)),
        &c(&j1 - &j3) * &(&k(0) * &k(2)),
        &c(&j2 - &j1) * &(&k(0) * &k(1)),
    ])
}

/// The constant field `b_L = L`.
pub fn torque_field(l: &TorqueAxis) -> Result<PolyField> {
    PolyField::constant_f64(&l.values())
}

fn l_hat<T: Clone + Zero>(l: &[T; 3]) -> [[T; 3]; 3] {
    let z = T::zero();
    [
        [z.clone(), l[2].clone(), l[1].clone()],
        [l[2].clone(), z.clone(), l[0].clone()],
        [l[1].clone(), l[0].clone(), z],
    ]
}

/// `Λ = D_J · L̂` in principal axes.
pub fn lambda_matrix(j: &InertiaSpec, l: &TorqueAxis) -> Matrix3<f64> {
    let d = j.gaps();
    let h = l_hat(&l.values());
    Matrix3::from_fn(|r, c| d[r] * h[r][c])
}

pub fn lambda_matrix_exact(j: &InertiaSpec, l: &TorqueAxis) -> Result<[[BigRational; 3]; 3]> {
    let [j1, j2, j3] = j.exact()?;
    let d = [&j3 - &j2, &j1 - &j3, &j2 - &j1];
    let h = l_hat(&l.exact()?);
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| &d[r] * &h[r][c])))
}

/// `V^0, …, V^{m_max}` with `V^{m+1} = Λ V^m`, `V^0 = L`.
pub fn bracket_chain(j: &InertiaSpec, l: &TorqueAxis, m_max: usize) -> Vec<Vector3<f64>> {
    let lam = lambda_matrix(j, l);
    let mut out = Vec::with_capacity(m_max + 1);
    let mut v = Vector3::from(l.values());
    out.push(v);
    for _ in 0..m_max {
        v = lam * v;
        out.push(v);
    }
    out
}

pub fn bracket_chain_exact(j: &InertiaSpec, l: &TorqueAxis, m_max: usize) -> Result<Vec<[BigRational; 3]>> {
    let lam = lambda_matrix_exact(j, l)?;
    let mut v = l.exact()?;
    let mut out = Vec::with_capacity(m_max + 1);
    out.push(v.clone());
    for _ in 0..m_max {
        v = std::array::from_fn(|r| {
            lam[r]
                .iter()
                .zip(&v)
                .fold(BigRational::zero(), |acc, (a, b)| acc + a * b)
        });
        out.push(v.clone());
    }
    Ok(out)
}

/// The `3N × 3N` ensemble matrix.
pub fn rn_matrix(js: &[InertiaSpec], l: &TorqueAxis) -> Result<DMatrix<f64>> {
    if js.is_empty() {
        return Err(Error::invalid("ensemble needs at least one body"));
    }
    let n = js.len();
    let mut m = DMatrix::zeros(3 * n, 3 * n);
    for (b, j) in js.iter().enumerate() {
        for (k, v) in bracket_chain(j, l, 3 * n - 1).iter().enumerate() {
            for r in 0..3 {
                m[(3 * b + r, k)] = v[r];
            }
        }
    }
    Ok(m)
}

pub fn rn_matrix_exact(js: &[InertiaSpec], l: &TorqueAxis) -> Result<Vec<Vec<BigRational>>> {
    if js.is_empty() {
        return Err(Error::invalid("ensemble needs at least one body"));
    }
    let n = js.len();
    let mut m = vec![vec![BigRational::zero(); 3 * n]; 3 * n];
    for (b, j) in js.iter().enumerate() {
        for (k, v) in bracket_chain_exact(j, l, 3 * n - 1)?.into_iter().enumerate() {
            for (r, x) in v.into_iter().enumerate() {
                m[3 * b + r][k] = x;
            }
        }
    }
    Ok(m)
}

pub fn build_rn(js: &[InertiaSpec], l: &TorqueAxis) -> Result<RNReport> {
    let m = rn_matrix(js, l)?;
    let det = linalg::det(&m);
    let scale: f64 = linalg::column_norms(&m).iter().product();
    let scaled_det = if scale > 0.0 { det / scale } else { 0.0 };
    Ok(RNReport {
        n: js.len(),
        det,
        scale,
        scaled_det,
        cond: linalg::condition_number(&m),
        verdict: Verdict::classify(det, scale),
    })
}

/// Exact determinant of the ensemble matrix (inputs read as exact binary
/// fractions).
pub fn det_rn_exact(js: &[InertiaSpec], l: &TorqueAxis) -> Result<BigRational> {
    linalg::det_exact(&rn_matrix_exact(js, l)?)
}

/// Verdict from the exact determinant and the float column scale.
pub fn exact_verdict(js: &[InertiaSpec], l: &TorqueAxis) -> Result<Verdict> {
    let det = det_rn_exact(js, l)?;
    let m = rn_matrix(js, l)?;
    let scale: f64 = linalg::column_norms(&m).iter().product();
    Ok(Verdict::classify(rat_to_f64(&det), scale))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenericityOptions {
    /// Box for the principal values.
    pub j_box: (f64, f64),
    /// Minimal absolute gap between principal values of one body.
    pub min_gap: f64,
    /// Fixes `L` instead of sampling it on the sphere.
    pub fixed_l: Option<[f64; 3]>,
    /// Fixes the bodies and samples only `L`.
    pub fixed_js: Option<Vec<[f64; 3]>>,
    /// Number of leading samples re-checked with exact determinants.
    pub exact_checks: usize,
}

impl Default for GenericityOptions {
    fn default() -> Self {
        GenericityOptions {
            j_box: (0.5, 3.0),
            min_gap: 1e-3,
            fixed_l: None,
            fixed_js: None,
            exact_checks: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericitySample {
    pub index: usize,
    pub js: Vec<[f64; 3]>,
    pub l: [f64; 3],
    pub det: f64,
    pub scaled_det: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenericityReport {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub fraction_generating: f64,
    pub min_abs_scaled_det: f64,
    pub exact_checked: usize,
    pub exact_agreements: usize,
    pub records: Vec<GenericitySample>,
}

fn sample_spec(rng: &mut ChaCha20Rng, opts: &GenericityOptions) -> Result<InertiaSpec> {
    let (lo, hi) = opts.j_box;
    loop {
        let j: [f64; 3] = std::array::from_fn(|_| rng.gen_range(lo..hi));
        let gap = (j[0] - j[1]).abs().min((j[0] - j[2]).abs()).min((j[1] - j[2]).abs());
        if gap >= opts.min_gap {
            return InertiaSpec::new(j);
        }
    }
}

fn sample_sphere(rng: &mut ChaCha20Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|x| x / n);
        }
    }
}

/// Monte-Carlo probe of the generating set; sample `i` draws from its own
/// ChaCha stream `(seed, i)`, so the report depends only on the seed.
pub fn genericity_mc(n: usize, samples: usize, seed: u64, opts: &GenericityOptions) -> Result<GenericityReport> {
    if n < 1 || samples < 1 {
        return Err(Error::invalid("need n >= 1 and samples >= 1"));
    }
    let (lo, hi) = opts.j_box;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("inertia box must satisfy 0 < lo < hi"));
    }
    let fixed_js = match &opts.fixed_js {
        Some(v) => {
            Error::check_dim(n, v.len())?;
            Some(v.iter().map(|&j| InertiaSpec::new(j)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let fixed_l = opts.fixed_l.map(TorqueAxis::new).transpose()?;

    let records: Vec<Result<(GenericitySample, Option<bool>)>> = (0..samples)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let js = match &fixed_js {
                Some(v) => v.clone(),
                None => (0..n).map(|_| sample_spec(&mut rng, opts)).collect::<Result<Vec<_>>>()?,
            };
            let l = match fixed_l {
                Some(l) => l,
                None => TorqueAxis::new(sample_sphere(&mut rng))?,
            };
            let rep = build_rn(&js, &l)?;
            let agree = if index < opts.exact_checks {
                Some(exact_verdict(&js, &l)? == rep.verdict)
            } else {
                None
            };
            Ok((
                GenericitySample {
                    index,
                    js: js.iter().map(|j| j.values()).collect(),
                    l: l.values(),
                    det: rep.det,
                    scaled_det: rep.scaled_det,
                    verdict: rep.verdict,
                },
                agree,
            ))
        })
        .collect();

    let mut out = Vec::with_capacity(samples);
    let mut checked = 0;
    let mut agreements = 0;
    for r in records {
        let (s, agree) = r?;
        if let Some(a) = agree {
            checked += 1;
            agreements += a as usize;
        }
        out.push(s);
    }
    let generating = out.iter().filter(|s| s.verdict == Verdict::Generating).count();
    let min_abs = out.iter().map(|s| s.scaled_det.abs()).fold(f64::INFINITY, f64::min);
    Ok(GenericityReport {
        n,
        samples,
        seed,
        fraction_generating: generating as f64 / samples as f64,
        min_abs_scaled_det: min_abs,
        exact_checked: checked,
        exact_agreements: agreements,
        records: out,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingReport {
    /// `det R_N(εJ^1, …, εJ^{N-1}, J^N; L)`.
    pub det_eps: f64,
    /// Sign of the same determinant computed exactly.
    pub det_eps_exact_sign: i8,
    /// Power `0 + 1 + … + (3N-4)` picked up by the first `N-1` bodies.
    pub leading_power: u32,
    /// `det_eps / ε^{leading_power}`; tends to `det_limit_block` as `ε → 0`.
    pub normalized: f64,
    /// `det R_{N-1}(J^1..J^{N-1}) · det R̃` with `R̃` the last 3×3 corner.
    pub det_limit_block: f64,
}

/// Scales all but the last body by `eps` and compares with the limiting
/// block-triangular product.
pub fn scaling_diagnostic(js: &[InertiaSpec], l: &TorqueAxis, eps: f64) -> Result<ScalingReport> {
    let n = js.len();
    if n < 2 {
        return Err(Error::invalid("scaling diagnostic needs N >= 2"));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1], got {eps}")));
    }
    let mut scaled: Vec<InertiaSpec> = js[..n - 1].iter().map(|j| j.scaled(eps)).collect::<Result<_>>()?;
    scaled.push(js[n - 1]);
    let det_eps = linalg::det(&rn_matrix(&scaled, l)?);
    let exact = det_rn_exact(&scaled, l)?;
    let det_eps_exact_sign = if exact.is_zero() {
        0
    } else if exact.is_positive() {
        1
    } else {
        -1
    };
    let head = linalg::det(&rn_matrix(&js[..n - 1], l)?);
    let full = rn_matrix(js, l)?;
    let corner = full.view((3 * n - 3, 3 * n - 3), (3, 3)).into_owned();
    let det_limit_block = head * linalg::det(&corner);
    let leading_power = ((3 * n - 3) * (3 * n - 4) / 2) as u32;
    Ok(ScalingReport {
        det_eps,
        det_eps_exact_sign,
        leading_power,
        normalized: det_eps / eps.powi(leading_power as i32),
        det_limit_block,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub div_ok: bool,
}

/// Integrates the free Euler drift and measures the change of `‖K‖²` and of
/// the energy `<K, JK>`; also checks the divergence symbolically.
pub fn drift_invariants_check(j: &InertiaSpec, k0: [f64; 3], t_end: f64, h: f64) -> Result<DriftReport> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let field = euler_field(j)?;
    let div_ok = field.divergence().is_zero();
    let systems = odesim::compile_systems(&[vec![field]]);
    let rec = odesim::integrate_ensemble(
        &systems,
        &vec![ControlSignal::constant(1.0)],
        &k0,
        t_end,
        h,
        IntegrateOptions::default(),
    )?;
    let jv = j.values();
    let norm2 = |k: &[f64]| k.iter().map(|x| x * x).sum::<f64>();
    let energy = |k: &[f64]| k.iter().zip(&jv).map(|(x, w)| w * x * x).sum::<f64>();
    let (n0, e0) = (norm2(&k0), energy(&k0));
    let mut norm_drift = 0.0f64;
    let mut energy_drift = 0.0f64;
    for step in 0..rec.times.len() {
        let k = rec.state(step, 0);
        norm_drift = norm_drift.max((norm2(k) - n0).abs());
        energy_drift = energy_drift.max((energy(k) - e0).abs());
    }
    Ok(DriftReport {
        norm_drift,
        energy_drift,
        div_ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub full: bool,
    pub rows: usize,
    pub brackets: usize,
}

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Rank of the bracket evaluations of a product system.
///
/// Brackets act diagonally, so label `α` contributes the stacked vector
/// `(X^1_α(p^1), …, X^N_α(p^N))`. Labels that vanish identically on one
/// system contribute zeros there.
pub fn product_bracket_rank(
    ensemble: &[Vec<PolyField>],
    points: &[Vec<f64>],
    depth: usize,
    rel_tol: f64,
) -> Result<RankReport> {
    if ensemble.is_empty() {
        return Err(Error::invalid("ensemble needs at least one system"));
    }
    Error::check_dim(ensemble.len(), points.len())?;
    let dim = ensemble[0]
        .first()
        .ok_or_else(|| Error::invalid("system without fields"))?
        .dim();
    let arity = ensemble[0].len();
    for (sys, p) in ensemble.iter().zip(points) {
        Error::check_dim(arity, sys.len())?;
        Error::check_dim(dim, p.len())?;
        for f in sys {
            Error::check_dim(dim, f.dim())?;
        }
    }
    let mut columns: BTreeMap<(usize, BracketLabel), Vec<f64>> = BTreeMap::new();
    let rows = dim * ensemble.len();
    for (node, (sys, p)) in ensemble.iter().zip(points).enumerate() {
        for (label, field) in iterated_brackets(sys, depth)? {
            let v = field.eval(p)?;
            let col = columns
                .entry((label.len(), label))
                .or_insert_with(|| vec![0.0; rows]);
            col[node * dim..(node + 1) * dim].copy_from_slice(&v);
        }
    }
    let cols: Vec<&Vec<f64>> = columns.values().collect();
    let m = DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]);
    let rank = linalg::numerical_rank(&m, rel_tol);
    Ok(RankReport {
        rank,
        full: rank == rows,
        rows,
        brackets: cols.len(),
    })
}

/// Rank check of the rigid ensemble `{K × J^θ K, L}` at `K = 0` on every body.
pub fn rigid_bracket_rank(js: &[InertiaSpec], l: &TorqueAxis, depth: usize) -> Result<RankReport> {
    let b = torque_field(l)?;
    let ensemble = js
        .iter()
        .map(|j| Ok(vec![euler_field(j)?, b.clone()]))
        .collect::<Result<Vec<_>>>()?;
    let points = vec![vec![0.0; 3]; js.len()];
    product_bracket_rank(&ensemble, &points, depth, RANK_TOL)
}
