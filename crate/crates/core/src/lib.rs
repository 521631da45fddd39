//! Constructive machinery for controllability of ensembles of control systems.
//!
//! Modules, bottom-up: [`polyfield`] holds exact polynomial vector fields
//! and their Lie brackets; [`expr`] is a small expression language with
//! Taylor-mode differentiation; [`signal`] has closed-form control signals;
//! [`odesim`] integrates ensembles with fixed-step RK4 and measures
//! `L_p(Θ)` distances. On top sit [`rigidbody`] (the ensemble determinant
//! test), [`moments`] (moment-method synthesis) and [`lieext`]
//! (fast-oscillation reduction and extended steering).

pub mod error;
pub mod expr;
pub mod lieext;
pub mod linalg;
pub mod moments;
pub mod odesim;
pub mod polyfield;
pub mod quad;
pub mod rigidbody;
pub mod signal;

pub use error::{Error, Result};
pub use expr::{Expr, TaylorJet};
pub use odesim::{GridKind, ThetaGrid, TrajectoryRecord};
pub use polyfield::{BracketLabel, Poly, PolyField};
pub use signal::ControlSignal;
