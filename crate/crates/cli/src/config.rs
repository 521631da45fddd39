//! Scenario files: one TOML document per run, `kind` selecting the section
//! that must be present. Defaults are filled at load time so the echo
//! written next to the outputs is the complete configuration.

use std::fmt;
use std::path::Path;

use ensemble_core::odesim::{make_grid, GridKind, ThetaGrid};
use ensemble_core::rigidbody::{InertiaSpec, TorqueAxis};
use ensemble_core::ControlSignal;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    RigidCheck,
    RigidGeneric,
    ModelSynthesize,
    LieextReduce,
    LieextConverge,
    FlowVerify,
    RankCheck,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::RigidCheck => "rigid-check",
            Kind::RigidGeneric => "rigid-generic",
            Kind::ModelSynthesize => "model-synthesize",
            Kind::LieextReduce => "lieext-reduce",
            Kind::LieextConverge => "lieext-converge",
            Kind::FlowVerify => "flow-verify",
            Kind::RankCheck => "rank-check",
        }
    }

    fn section(self) -> &'static str {
        match self {
            Kind::RigidCheck => "rigid",
            Kind::RigidGeneric => "generic",
            Kind::ModelSynthesize => "model",
            Kind::LieextReduce => "reduce",
            Kind::LieextConverge => "converge",
            Kind::FlowVerify => "flow",
            Kind::RankCheck => "rank",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid: Option<RigidSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generic: Option<GenericSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduce: Option<ReduceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<RankSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_kind")]
    pub kind: GridKind,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    pub nodes: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<ThetaGrid, CliError> {
        make_grid(self.kind, (self.interval[0], self.interval[1]), self.nodes).map_err(|e| CliError::field("grid", e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    /// Asserted verdict: `generating` or `singular`.
    pub verdict: ensemble_core::rigidbody::Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub k0: [f64; 3],
    #[serde(default = "ten")]
    pub t_end: f64,
    #[serde(default = "milli")]
    pub h: f64,
    #[serde(default = "nano")]
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidSection {
    /// Principal values, one triple per body.
    pub inertia: Vec<[f64; 3]>,
    pub torque: [f64; 3],
    /// Relative separation required between principal values.
    #[serde(default = "default_rel_gap")]
    pub min_gap: f64,
    /// Recompute the determinant over the rationals.
    #[serde(default = "yes")]
    pub exact: bool,
    /// All bodies are scaled by this factor for the homogeneity check.
    #[serde(default = "half")]
    pub homogeneity_eps: f64,
    /// Scales all but the last body (needs at least two bodies).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSection {
    pub n_values: Vec<usize>,
    pub samples: Vec<usize>,
    /// Smallest acceptable fraction of generating samples, per `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_fraction: Option<Vec<f64>>,
    #[serde(default = "default_j_box")]
    pub j_box: [f64; 2],
    #[serde(default = "default_abs_gap")]
    pub min_gap: f64,
    #[serde(default = "default_exact_checks")]
    pub exact_checks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_torque: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub f_theta: String,
    pub target: String,
    pub eps1: Vec<f64>,
    pub rho: f64,
    pub mu_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_fixed: Option<usize>,
    /// Floor of the dyadic search for `ε`; unbounded (down to underflow)
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    #[serde(default = "default_ode_step")]
    pub ode_step: f64,
    #[serde(default = "default_sup_samples")]
    pub sup_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteerSection {
    /// Control fields of each system, components in `x1, x2, …` and `theta`.
    pub fields: Vec<Vec<String>>,
    /// Target field `Y`, independent of `theta`.
    pub target: Vec<String>,
    pub x_start: Vec<f64>,
    pub depth: usize,
    /// Residual budget the surrogate must meet.
    pub eps: f64,
    #[serde(default = "default_steer_samples")]
    pub samples: usize,
    #[serde(default = "milli")]
    pub gronwall_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceSection {
    pub u_e: ControlSignal,
    pub v_e: ControlSignal,
    pub w_e: ControlSignal,
    pub t_end: f64,
    pub n: usize,
    /// Rows of the sampled-signal CSV.
    #[serde(default = "default_signal_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steer: Option<SteerSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub x_field: Vec<String>,
    pub y_field: Vec<String>,
    pub u_e: ControlSignal,
    pub v_e: ControlSignal,
    pub w_e: ControlSignal,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub n_list: Vec<usize>,
    #[serde(default = "default_steps_per_eps2")]
    pub steps_per_eps2: f64,
    #[serde(default = "milli")]
    pub h_ref: f64,
    #[serde(default)]
    pub require_decreasing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_range: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub f: Vec<String>,
    pub g: Vec<String>,
    pub u: ControlSignal,
    pub x0: Vec<f64>,
    pub t_end: f64,
    pub steps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_gap: Option<f64>,
    /// Required ratio of the gap at the first step to the gap at the last.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_shrink: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSystem {
    /// `fields[node][j]` lists the components of field `j` of system `node`.
    pub fields: Vec<Vec<Vec<String>>>,
    /// Evaluation point per system.
    pub points: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidRank {
    pub inertia: Vec<[f64; 3]>,
    pub torque: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankSection {
    pub depth: usize,
    #[serde(default = "default_rank_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_full: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductSystem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rigid: Option<RigidRank>,
}

fn default_grid_kind() -> GridKind {
    GridKind::Gauss
}
fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}
fn yes() -> bool {
    true
}
fn half() -> f64 {
    0.5
}
fn ten() -> f64 {
    10.0
}
fn milli() -> f64 {
    1e-3
}
fn nano() -> f64 {
    1e-9
}
fn default_rel_gap() -> f64 {
    ensemble_core::rigidbody::DEFAULT_GAP
}
fn default_j_box() -> [f64; 2] {
    [0.5, 3.0]
}
fn default_abs_gap() -> f64 {
    1e-3
}
fn default_exact_checks() -> usize {
    10
}
fn default_ode_step() -> f64 {
    1e-4
}
fn default_sup_samples() -> usize {
    64
}
fn default_steer_samples() -> usize {
    101
}
fn default_signal_samples() -> usize {
    1001
}
fn default_steps_per_eps2() -> f64 {
    ensemble_core::lieext::STEPS_PER_EPS2
}
fn default_rank_tol() -> f64 {
    ensemble_core::rigidbody::RANK_TOL
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Parse(describe_toml_error(text, &e)))?;
    cfg.validate()?;
    Ok(cfg)
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim();
    match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            format!("line {line}, column {col}: {msg}")
        }
        None => msg.to_string(),
    }
}

/// Pretty TOML of the config with every default spelled out.
pub fn echo(cfg: &ScenarioConfig) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::Io(format!("config echo: {e}")))
}

fn positive(path: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::invalid(path, format!("must be a positive finite number, got {x}")))
    }
}

fn finite_all(path: &str, xs: &[f64]) -> Result<(), CliError> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(k) => Err(CliError::invalid(&format!("{path}[{k}]"), "must be finite")),
        None => Ok(()),
    }
}

fn signal(path: &str, s: &ControlSignal) -> Result<(), CliError> {
    s.validate().map_err(|e| CliError::field(path, e))
}

pub(crate) fn inertia(path: &str, js: &[[f64; 3]], gap: f64) -> Result<Vec<InertiaSpec>, CliError> {
    if js.is_empty() {
        return Err(CliError::invalid(path, "needs at least one body"));
    }
    js.iter()
        .enumerate()
        .map(|(k, j)| InertiaSpec::with_gap(*j, gap).map_err(|e| CliError::field(&format!("{path}[{k}]"), e)))
        .collect()
}

pub(crate) fn torque_axis(path: &str, l: [f64; 3]) -> Result<TorqueAxis, CliError> {
    TorqueAxis::new(l).map_err(|e| CliError::field(path, e))
}

pub(crate) fn parse_expr(path: &str, src: &str) -> Result<ensemble_core::Expr, CliError> {
    ensemble_core::expr::parse(src).map_err(|e| CliError::field(path, e))
}

fn field(path: &str, comps: &[String], theta: Option<f64>) -> Result<ensemble_core::PolyField, CliError> {
    let th = match theta {
        Some(t) => Some(ensemble_core::polyfield::rat_from_f64(t).map_err(|e| CliError::field(path, e))?),
        None => None,
    };
    ensemble_core::polyfield::parse_field(comps, th.as_ref()).map_err(|e| CliError::field(path, e))
}

/// Parses `comps` once per grid node, substituting the node for `theta`.
pub fn field_on_grid(path: &str, comps: &[String], grid: &ThetaGrid) -> Result<Vec<ensemble_core::PolyField>, CliError> {
    grid.nodes().iter().map(|&th| field(path, comps, Some(th))).collect()
}

pub fn field_fixed(path: &str, comps: &[String]) -> Result<ensemble_core::PolyField, CliError> {
    field(path, comps, None)
}

fn strictly_increasing(path: &str, n: &[usize]) -> Result<(), CliError> {
    if n.is_empty() {
        return Err(CliError::invalid(path, "must not be empty"));
    }
    if n[0] == 0 || n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::invalid(path, "must be positive and strictly increasing"));
    }
    Ok(())
}

impl ScenarioConfig {
    /// Checks everything that can be checked without running the scenario.
    pub fn validate(&self) -> Result<(), CliError> {
        let present = [
            ("rigid", self.rigid.is_some()),
            ("generic", self.generic.is_some()),
            ("model", self.model.is_some()),
            ("reduce", self.reduce.is_some()),
            ("converge", self.converge.is_some()),
            ("flow", self.flow.is_some()),
            ("rank", self.rank.is_some()),
        ];
        let own = self.kind.section();
        for (name, there) in present {
            if name == own && !there {
                return Err(CliError::invalid(name, format!("section is required for kind {}", self.kind)));
            }
            if name != own && there {
                return Err(CliError::invalid(name, format!("section is not used by kind {}", self.kind)));
            }
        }
        let needs_grid = match self.kind {
            Kind::ModelSynthesize | Kind::LieextConverge => true,
            Kind::LieextReduce => self.reduce.as_ref().is_some_and(|r| r.steer.is_some()),
            _ => false,
        };
        match (&self.grid, needs_grid) {
            (None, true) => return Err(CliError::invalid("grid", format!("section is required for kind {}", self.kind))),
            (Some(_), false) => return Err(CliError::invalid("grid", format!("section is not used by kind {}", self.kind))),
            (Some(g), true) => {
                g.build()?;
            }
            (None, false) => {}
        }
        match self.kind {
            Kind::RigidCheck => self.rigid.as_ref().unwrap().validate(),
            Kind::RigidGeneric => self.generic.as_ref().unwrap().validate(),
            Kind::ModelSynthesize => self.model.as_ref().unwrap().validate(),
            Kind::LieextReduce => self.reduce.as_ref().unwrap().validate(),
            Kind::LieextConverge => self.converge.as_ref().unwrap().validate(),
            Kind::FlowVerify => self.flow.as_ref().unwrap().validate(),
            Kind::RankCheck => self.rank.as_ref().unwrap().validate(),
        }
    }
}

impl RigidSection {
    fn validate(&self) -> Result<(), CliError> {
        positive("rigid.min_gap", self.min_gap)?;
        inertia("rigid.inertia", &self.inertia, self.min_gap)?;
        torque_axis("rigid.torque", self.torque)?;
        if !(self.homogeneity_eps > 0.0 && self.homogeneity_eps <= 1.0) {
            return Err(CliError::invalid("rigid.homogeneity_eps", "must lie in (0, 1]"));
        }
        if let Some(eps) = self.scaling_eps {
            if self.inertia.len() < 2 {
                return Err(CliError::invalid("rigid.scaling_eps", "needs at least two bodies"));
            }
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(CliError::invalid("rigid.scaling_eps", "must lie in (0, 1]"));
            }
        }
        if let Some(d) = &self.drift {
            finite_all("rigid.drift.k0", &d.k0)?;
            positive("rigid.drift.t_end", d.t_end)?;
            positive("rigid.drift.h", d.h)?;
            positive("rigid.drift.tol", d.tol)?;
        }
        if let Some(e) = &self.expect {
            if e.verdict == ensemble_core::rigidbody::Verdict::Borderline {
                return Err(CliError::invalid("rigid.expect.verdict", "must be generating or singular"));
            }
        }
        Ok(())
    }
}

impl GenericSection {
    fn validate(&self) -> Result<(), CliError> {
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(CliError::invalid("generic.n_values", "must list body counts >= 1"));
        }
        if self.samples.len() != self.n_values.len() {
            return Err(CliError::invalid("generic.samples", "needs one entry per n_values entry"));
        }
        if let Some(k) = self.samples.iter().position(|&s| s == 0) {
            return Err(CliError::invalid(&format!("generic.samples[{k}]"), "must be >= 1"));
        }
        if let Some(f) = &self.min_fraction {
            if f.len() != self.n_values.len() {
                return Err(CliError::invalid("generic.min_fraction", "needs one entry per n_values entry"));
            }
            if let Some(k) = f.iter().position(|x| !(0.0..=1.0).contains(x)) {
                return Err(CliError::invalid(&format!("generic.min_fraction[{k}]"), "must lie in [0, 1]"));
            }
        }
        let [lo, hi] = self.j_box;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(CliError::invalid("generic.j_box", "needs 0 < lo < hi"));
        }
        if !(self.min_gap >= 0.0 && 3.0 * self.min_gap < hi - lo) {
            return Err(CliError::invalid("generic.min_gap", "must be non-negative and leave room in j_box"));
        }
        if let Some(l) = self.fixed_torque {
            torque_axis("generic.fixed_torque", l)?;
        }
        Ok(())
    }
}

impl ModelSection {
    fn validate(&self) -> Result<(), CliError> {
        parse_expr("model.f_theta", &self.f_theta)?;
        parse_expr("model.target", &self.target)?;
        if self.eps1.is_empty() {
            return Err(CliError::invalid("model.eps1", "must not be empty"));
        }
        for (k, &e) in self.eps1.iter().enumerate() {
            positive(&format!("model.eps1[{k}]"), e)?;
        }
        positive("model.rho", self.rho)?;
        if !(self.mu_f.is_finite() && self.mu_f >= 0.0) {
            return Err(CliError::invalid("model.mu_f", "must be finite and non-negative"));
        }
        if let Some(r) = self.r_fixed {
            if r == 0 || r > ensemble_core::moments::R_MAX {
                return Err(CliError::invalid(
                    "model.r_fixed",
                    format!("must lie in 1..={}", ensemble_core::moments::R_MAX),
                ));
            }
        }
        if let Some(e) = self.eps_min {
            positive("model.eps_min", e)?;
        }
        positive("model.ode_step", self.ode_step)?;
        if self.sup_samples < 2 {
            return Err(CliError::invalid("model.sup_samples", "must be >= 2"));
        }
        Ok(())
    }
}

impl SteerSection {
    fn validate(&self) -> Result<(), CliError> {
        if self.fields.is_empty() {
            return Err(CliError::invalid("reduce.steer.fields", "needs at least one field"));
        }
        let dim = self.target.len();
        if dim == 0 {
            return Err(CliError::invalid("reduce.steer.target", "must not be empty"));
        }
        for (k, f) in self.fields.iter().enumerate() {
            let p = format!("reduce.steer.fields[{k}]");
            if f.len() != dim {
                return Err(CliError::invalid(&p, format!("has {} components, target has {dim}", f.len())));
            }
            field(&p, f, Some(0.0))?;
        }
        field("reduce.steer.target", &self.target, None)?;
        if self.x_start.len() != dim {
            return Err(CliError::invalid("reduce.steer.x_start", format!("needs {dim} entries")));
        }
        finite_all("reduce.steer.x_start", &self.x_start)?;
        if self.depth == 0 {
            return Err(CliError::invalid("reduce.steer.depth", "must be >= 1"));
        }
        positive("reduce.steer.eps", self.eps)?;
        if self.samples < 2 {
            return Err(CliError::invalid("reduce.steer.samples", "must be >= 2"));
        }
        positive("reduce.steer.gronwall_step", self.gronwall_step)
    }
}

impl ReduceSection {
    fn validate(&self) -> Result<(), CliError> {
        signal("reduce.u_e", &self.u_e)?;
        signal("reduce.v_e", &self.v_e)?;
        signal("reduce.w_e", &self.w_e)?;
        if matches!(self.w_e, ControlSignal::Sampled { .. }) {
            return Err(CliError::invalid("reduce.w_e", "must be differentiable in closed form (not sampled)"));
        }
        positive("reduce.t_end", self.t_end)?;
        if self.n == 0 {
            return Err(CliError::invalid("reduce.n", "must be >= 1"));
        }
        if self.samples < 2 {
            return Err(CliError::invalid("reduce.samples", "must be >= 2"));
        }
        if let Some(s) = &self.steer {
            s.validate()?;
        }
        Ok(())
    }
}

impl ConvergeSection {
    fn validate(&self) -> Result<(), CliError> {
        let dim = self.x_field.len();
        if dim == 0 {
            return Err(CliError::invalid("converge.x_field", "must not be empty"));
        }
        if self.y_field.len() != dim {
            return Err(CliError::invalid("converge.y_field", format!("needs {dim} components")));
        }
        field("converge.x_field", &self.x_field, Some(0.0))?;
        field("converge.y_field", &self.y_field, Some(0.0))?;
        signal("converge.u_e", &self.u_e)?;
        signal("converge.v_e", &self.v_e)?;
        signal("converge.w_e", &self.w_e)?;
        if matches!(self.w_e, ControlSignal::Sampled { .. }) {
            return Err(CliError::invalid("converge.w_e", "must be differentiable in closed form (not sampled)"));
        }
        if self.x0.len() != dim {
            return Err(CliError::invalid("converge.x0", format!("needs {dim} entries")));
        }
        finite_all("converge.x0", &self.x0)?;
        positive("converge.t_end", self.t_end)?;
        strictly_increasing("converge.n_list", &self.n_list)?;
        if !(self.steps_per_eps2 >= ensemble_core::lieext::MIN_STEPS_PER_EPS2) {
            return Err(CliError::invalid(
                "converge.steps_per_eps2",
                format!("must be >= {}", ensemble_core::lieext::MIN_STEPS_PER_EPS2),
            ));
        }
        positive("converge.h_ref", self.h_ref)?;
        if let Some([lo, hi]) = self.slope_range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CliError::invalid("converge.slope_range", "needs finite lo <= hi"));
            }
        }
        Ok(())
    }
}

impl FlowSection {
    fn validate(&self) -> Result<(), CliError> {
        let dim = self.f.len();
        if dim == 0 {
            return Err(CliError::invalid("flow.f", "must not be empty"));
        }
        if self.g.len() != dim {
            return Err(CliError::invalid("flow.g", format!("needs {dim} components")));
        }
        field("flow.f", &self.f, None)?;
        field("flow.g", &self.g, None)?;
        signal("flow.u", &self.u)?;
        if self.x0.len() != dim {
            return Err(CliError::invalid("flow.x0", format!("needs {dim} entries")));
        }
        finite_all("flow.x0", &self.x0)?;
        positive("flow.t_end", self.t_end)?;
        if self.steps.is_empty() {
            return Err(CliError::invalid("flow.steps", "must not be empty"));
        }
        for (k, &h) in self.steps.iter().enumerate() {
            positive(&format!("flow.steps[{k}]"), h)?;
        }
        if let Some(g) = self.max_gap {
            positive("flow.max_gap", g)?;
        }
        if let Some(s) = self.min_shrink {
            positive("flow.min_shrink", s)?;
            if self.steps.len() < 2 {
                return Err(CliError::invalid("flow.min_shrink", "needs at least two steps"));
            }
        }
        Ok(())
    }
}

impl RankSection {
    fn validate(&self) -> Result<(), CliError> {
        if self.depth == 0 {
            return Err(CliError::invalid("rank.depth", "must be >= 1"));
        }
        positive("rank.rel_tol", self.rel_tol)?;
        match (&self.product, &self.rigid) {
            (Some(p), None) => {
                if p.fields.is_empty() {
                    return Err(CliError::invalid("rank.product.fields", "needs at least one system"));
                }
                if p.points.len() != p.fields.len() {
                    return Err(CliError::invalid("rank.product.points", "needs one point per system"));
                }
                for (node, sys) in p.fields.iter().enumerate() {
                    for (j, comps) in sys.iter().enumerate() {
                        field(&format!("rank.product.fields[{node}][{j}]"), comps, None)?;
                    }
                    finite_all(&format!("rank.product.points[{node}]"), &p.points[node])?;
                }
                Ok(())
            }
            (None, Some(r)) => {
                inertia("rank.rigid.inertia", &r.inertia, ensemble_core::rigidbody::DEFAULT_GAP)?;
                torque_axis("rank.rigid.torque", r.torque).map(|_| ())
            }
            _ => Err(CliError::invalid("rank", "needs exactly one of [rank.product] or [rank.rigid]")),
        }
    }
}
