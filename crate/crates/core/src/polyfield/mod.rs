//! Exact algebra of polynomial vector fields.
//!
//! Coefficients are arbitrary-precision rationals; floats appear only at
//! evaluation boundaries. Brackets follow `[X, Y] = DY·X − DX·Y`.

mod field;
mod horner;
mod poly;
mod text;

pub use field::{
    ad_pullback_series, ad_pullback_series_f64, ad_series_terms, iterated_brackets, lie_bracket,
    BracketLabel, CompiledField, PolyField,
};
pub use horner::HornerPoly;
pub use poly::{rat, rat_from_f64, rat_to_f64, ratio, Monomial, Poly};
pub use text::{parse_field, parse_poly};
