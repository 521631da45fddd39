//! Ensemble integration over a discretized parameter set.
//!
//! Every node of a [`ThetaGrid`] carries its own control-affine system
//! `ẋ = Σ_j f_j(x) u_j(t)`; all nodes share the controls and the initial
//! state and are integrated independently with classical fixed-step RK4.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polyfield::{CompiledField, PolyField};
use crate::signal::ControlSignal;

/// Quadrature discretization of the parameter interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Gauss,
    Uniform,
}

impl ThetaGrid {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, interval: (f64, f64)) -> Result<Self> {
        let (a, b) = interval;
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::invalid("grid needs equally many (>= 1) nodes and weights"));
        }
        if !(b >= a) {
            return Err(Error::invalid("grid interval must satisfy a <= b"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid nodes must be strictly increasing"));
        }
        if nodes.iter().any(|&t| t < a || t > b) {
            return Err(Error::invalid("grid node outside the interval"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("grid weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - (b - a)).abs() > 1e-12 * (1.0 + (b - a)) {
            return Err(Error::invalid(format!(
                "grid weights sum to {total}, interval length is {}",
                b - a
            )));
        }
        Ok(ThetaGrid {
            nodes,
            weights,
            interval,
        })
    }

    /// One node, unit weight; a single system viewed as an ensemble.
    pub fn single(theta: f64) -> Self {
        ThetaGrid {
            nodes: vec![theta],
            weights: vec![1.0],
            interval: (theta - 0.5, theta + 0.5),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i g(θ_i)` in node order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Same grid with nodes reordered by `perm` (weights follow their
    /// nodes); the result is not a valid sorted grid, only used for
    /// node-independence checks.
    pub fn permuted(&self, perm: &[usize]) -> ThetaGrid {
        ThetaGrid {
            nodes: perm.iter().map(|&i| self.nodes[i]).collect(),
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
            interval: self.interval,
        }
    }
}

/// Gauss–Legendre or uniform-trapezoid grid with `n` nodes on `interval`.
pub fn make_grid(kind: GridKind, interval: (f64, f64), n: usize) -> Result<ThetaGrid> {
    if n < 1 {
        return Err(Error::invalid("grid needs at least one node"));
    }
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::invalid("grid interval must satisfy a < b"));
    }
    let (nodes, weights) = match kind {
        GridKind::Gauss => {
            let (x, w) = gauss_legendre(n);
            let half = (b - a) / 2.0;
            let mid = (a + b) / 2.0;
            (
                x.iter().map(|&t| mid + half * t).collect(),
                w.iter().map(|&v| half * v).collect(),
            )
        }
        GridKind::Uniform => {
            if n == 1 {
                (vec![(a + b) / 2.0], vec![b - a])
            } else {
                let h = (b - a) / (n - 1) as f64;
                let nodes = (0..n)
                    .map(|i| if i == n - 1 { b } else { a + h * i as f64 })
                    .collect();
                let weights = (0..n)
                    .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
                    .collect();
                (nodes, weights)
            }
        }
    };
    ThetaGrid::new(nodes, weights, interval)
}

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on
/// `[-1, 1]`, by Newton iteration on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// A vector field evaluable in floating point.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);
}

impl VectorField for CompiledField {
    fn dim(&self) -> usize {
        CompiledField::dim(self)
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        CompiledField::eval_into(self, x, out)
    }
}

/// Vector field given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

/// Time-dependent control vector `u(t)` shared by all nodes.
pub trait Controls: Sync {
    fn arity(&self) -> usize;
    fn eval_into(&self, t: f64, out: &mut [f64]);
}

impl Controls for [ControlSignal] {
    fn arity(&self) -> usize {
        self.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(self) {
            *o = s.eval(t);
        }
    }
}

impl Controls for Vec<ControlSignal> {
    fn arity(&self) -> usize {
        self.len()
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        self.as_slice().eval_into(t, out)
    }
}

/// Controls given by a closure.
pub struct FnControls<F> {
    arity: usize,
    f: F,
}

impl<F: Fn(f64, &mut [f64]) + Sync> FnControls<F> {
    pub fn new(arity: usize, f: F) -> Self {
        FnControls { arity, f }
    }
}

impl<F: Fn(f64, &mut [f64]) + Sync> Controls for FnControls<F> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.f)(t, out)
    }
}

pub type NodeSystem = Vec<Arc<dyn VectorField>>;

/// Compiles per-node polynomial field tuples.
pub fn compile_systems(systems: &[Vec<PolyField>]) -> Vec<NodeSystem> {
    systems
        .iter()
        .map(|tuple| {
            tuple
                .iter()
                .map(|f| Arc::new(f.compile()) as Arc<dyn VectorField>)
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegrateOptions {
    /// Keep every `thin`-th step (the final state is always kept).
    pub thin: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { thin: 1 }
    }
}

/// States on a common time axis: `states[(k * nodes + i) * dim + d]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub nodes: usize,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn state(&self, k: usize, node: usize) -> &[f64] {
        let off = (k * self.nodes + node) * self.dim;
        &self.states[off..off + self.dim]
    }

    pub fn final_states(&self) -> Vec<Vec<f64>> {
        let k = self.times.len() - 1;
        (0..self.nodes).map(|i| self.state(k, i).to_vec()).collect()
    }

    /// CSV with header `t,theta,x1,…,x_dim`, rows in (time, node) order.
    pub fn write_csv<W: Write>(&self, mut w: W, grid: &ThetaGrid) -> std::io::Result<()> {
        let mut header = String::from("t,theta");
        for d in 0..self.dim {
            header.push_str(&format!(",x{}", d + 1));
        }
        writeln!(w, "{header}")?;
        for (k, t) in self.times.iter().enumerate() {
            for (i, th) in grid.nodes().iter().enumerate().take(self.nodes) {
                write!(w, "{t},{th}")?;
                for v in self.state(k, i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Fixed-step RK4 integration of `ẋ = Σ_j f_j^θ(x) u_j(t)` on every node.
///
/// The last step is shortened so the run ends exactly at `t_end`.
pub fn integrate_ensemble<C: Controls + ?Sized>(
    systems: &[NodeSystem],
    controls: &C,
    x0: &[f64],
    t_end: f64,
    h: f64,
    opts: IntegrateOptions,
) -> Result<TrajectoryRecord> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid("step size must be positive"));
    }
    if !(t_end >= 0.0) {
        return Err(Error::invalid("horizon must be non-negative"));
    }
    if systems.is_empty() {
        return Err(Error::invalid("ensemble has no nodes"));
    }
    let dim = x0.len();
    for sys in systems {
        Error::check_dim(controls.arity(), sys.len())?;
        for f in sys {
            Error::check_dim(dim, f.dim())?;
        }
    }
    let full = (t_end / h * (1.0 + 1e-12)).floor() as usize;
    let mut grid_t: Vec<f64> = (0..=full).map(|k| (k as f64 * h).min(t_end)).collect();
    if t_end - grid_t[full] > 1e-12 * t_end.max(1.0) {
        grid_t.push(t_end);
    } else {
        grid_t[full] = t_end;
    }
    let thin = opts.thin.max(1);
    let last = grid_t.len() - 1;
    let keep: Vec<usize> = (0..=last).filter(|&k| k % thin == 0 || k == last).collect();

    let per_node: Vec<Result<Vec<f64>>> = systems
        .par_iter()
        .enumerate()
        .map(|(node, sys)| integrate_node(sys, controls, x0, &grid_t, &keep, node))
        .collect();

    let mut columns = Vec::with_capacity(systems.len());
    for r in per_node {
        columns.push(r?);
    }
    let nodes = systems.len();
    let mut states = Vec::with_capacity(keep.len() * nodes * dim);
    for k in 0..keep.len() {
        for col in &columns {
            states.extend_from_slice(&col[k * dim..(k + 1) * dim]);
        }
    }
    Ok(TrajectoryRecord {
        times: keep.iter().map(|&k| grid_t[k]).collect(),
        nodes,
        dim,
        states,
    })
}

fn integrate_node<C: Controls + ?Sized>(
    sys: &NodeSystem,
    controls: &C,
    x0: &[f64],
    grid_t: &[f64],
    keep: &[usize],
    node: usize,
) -> Result<Vec<f64>> {
    let dim = x0.len();
    let r = sys.len();
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(keep.len() * dim);
    let mut u = vec![0.0; r];
    let mut tmp = vec![0.0; dim];
    let mut fv = vec![0.0; dim];
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];

    let rhs = |t: f64, x: &[f64], u: &mut [f64], fv: &mut [f64], out: &mut [f64]| {
        controls.eval_into(t, u);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (f, &uj) in sys.iter().zip(u.iter()) {
            if uj == 0.0 {
                continue;
            }
            f.eval_into(x, fv);
            for (o, v) in out.iter_mut().zip(fv.iter()) {
                *o += uj * v;
            }
        }
    };

    let mut next_keep = 0;
    if keep.first() == Some(&0) {
        out.extend_from_slice(&x);
        next_keep = 1;
    }
    for k in 0..grid_t.len() - 1 {
        let t = grid_t[k];
        let h = grid_t[k + 1] - t;
        rhs(t, &x, &mut u, &mut fv, &mut k1);
        for d in 0..dim {
            tmp[d] = x[d] + 0.5 * h * k1[d];
        }
        rhs(t + 0.5 * h, &tmp, &mut u, &mut fv, &mut k2);
        for d in 0..dim {
            tmp[d] = x[d] + 0.5 * h * k2[d];
        }
        rhs(t + 0.5 * h, &tmp, &mut u, &mut fv, &mut k3);
        for d in 0..dim {
            tmp[d] = x[d] + h * k3[d];
        }
        rhs(t + h, &tmp, &mut u, &mut fv, &mut k4);
        for d in 0..dim {
            x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t: grid_t[k + 1],
                node,
            });
        }
        if next_keep < keep.len() && keep[next_keep] == k + 1 {
            out.extend_from_slice(&x);
            next_keep += 1;
        }
    }
    Ok(out)
}

/// `(Σ_i w_i ‖Δ_i‖^p)^{1/p}` with the Euclidean norm per node.
pub fn lp_distance(states: &[Vec<f64>], target: &[Vec<f64>], grid: &ThetaGrid, p: u32) -> Result<f64> {
    if p != 1 && p != 2 {
        return Err(Error::invalid("p must be 1 or 2"));
    }
    Error::check_dim(grid.len(), states.len())?;
    Error::check_dim(grid.len(), target.len())?;
    let mut acc = 0.0;
    for ((s, t), w) in states.iter().zip(target).zip(grid.weights()) {
        Error::check_dim(s.len(), t.len())?;
        let n2: f64 = s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * if p == 1 { n2.sqrt() } else { n2 };
    }
    Ok(if p == 1 { acc } else { acc.sqrt() })
}
