use std::fmt;

use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;

use super::horner::HornerPoly;
use super::poly::{rat_from_f64, Poly};
use crate::error::{Error, Result};

/// Polynomial vector field on `R^dim`: one [`Poly`] in `dim` variables per
/// coordinate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyField {
    components: Vec<Poly>,
}

impl PolyField {
    pub fn new(components: Vec<Poly>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::invalid("vector field needs at least one component"));
        }
        for c in &components {
            Error::check_dim(dim, c.num_vars())?;
        }
        Ok(PolyField { components })
    }

    pub fn zero(dim: usize) -> Self {
        PolyField {
            components: vec![Poly::zero(dim); dim],
        }
    }

    /// Constant field with the given float components (converted exactly).
    pub fn constant_f64(v: &[f64]) -> Result<Self> {
        let dim = v.len();
        let comps = v
            .iter()
            .map(|&x| rat_from_f64(x).map(|q| Poly::constant(dim, q)))
            .collect::<Result<Vec<_>>>()?;
        PolyField::new(comps)
    }

    /// Coordinate field `∂/∂x_{i+1}`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut comps = vec![Poly::zero(dim); dim];
        comps[i] = Poly::one(dim);
        PolyField { components: comps }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    pub fn is_constant(&self) -> bool {
        self.components.iter().all(Poly::is_constant)
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.components.iter().filter_map(Poly::degree).max()
    }

    pub fn scale(&self, c: &BigRational) -> PolyField {
        PolyField {
            components: self.components.iter().map(|p| p.scale(c)).collect(),
        }
    }

    pub fn add(&self, other: &PolyField) -> Result<PolyField> {
        Error::check_dim(self.dim(), other.dim())?;
        Ok(PolyField {
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &PolyField) -> Result<PolyField> {
        self.add(&other.scale(&-BigRational::one()))
    }

    /// Directional derivative `DZ·X` of every component of `self` along `x`.
    pub fn derivative_along(&self, x: &PolyField) -> Result<PolyField> {
        Error::check_dim(self.dim(), x.dim())?;
        let n = self.dim();
        let components = self
            .components
            .iter()
            .map(|zi| {
                (0..n).fold(Poly::zero(n), |acc, j| {
                    if x.components[j].is_zero() {
                        acc
                    } else {
                        &acc + &(&zi.derivative(j) * &x.components[j])
                    }
                })
            })
            .collect();
        Ok(PolyField { components })
    }

    pub fn divergence(&self) -> Poly {
        let n = self.dim();
        (0..n).fold(Poly::zero(n), |acc, i| &acc + &self.components[i].derivative(i))
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.dim(), x.len())?;
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    /// Float evaluator with precompiled Jacobian.
    pub fn compile(&self) -> CompiledField {
        let n = self.dim();
        CompiledField {
            components: self.components.iter().map(HornerPoly::new).collect(),
            jacobian: self
                .components
                .iter()
                .map(|p| (0..n).map(|j| HornerPoly::new(&p.derivative(j))).collect())
                .collect(),
        }
    }
}

impl fmt::Display for PolyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// `[X, Y] = DY·X − DX·Y`.
pub fn lie_bracket(x: &PolyField, y: &PolyField) -> Result<PolyField> {
    Error::check_dim(x.dim(), y.dim())?;
    y.derivative_along(x)?.sub(&x.derivative_along(y)?)
}

/// Terms `ad_g^j f / j!` of the pullback series, `j = 0, 1, …`, stopping
/// at the first zero term. For constant `g` each application of `ad_g`
/// lowers the total degree, so at most `deg f + 1` terms are produced.
pub fn ad_series_terms(f: &PolyField, g: &PolyField) -> Result<Vec<PolyField>> {
    Error::check_dim(f.dim(), g.dim())?;
    if !g.is_constant() {
        return Err(Error::Unsupported(
            "pullback series requires a constant field g".into(),
        ));
    }
    let mut out = Vec::new();
    let mut term = f.clone();
    let mut j = 0i64;
    while !term.is_zero() {
        out.push(term.clone());
        j += 1;
        term = lie_bracket(g, &term)?.scale(&BigRational::new(1.into(), j.into()));
    }
    Ok(out)
}

/// `Σ_j (s·ad_g)^j f / j!` for constant `g`; exact.
pub fn ad_pullback_series(f: &PolyField, g: &PolyField, s: &BigRational) -> Result<PolyField> {
    let terms = ad_series_terms(f, g)?;
    let mut acc = PolyField::zero(f.dim());
    let mut sp = BigRational::one();
    for t in &terms {
        acc = acc.add(&t.scale(&sp))?;
        sp *= s;
    }
    Ok(acc)
}

pub fn ad_pullback_series_f64(f: &PolyField, g: &PolyField, s: f64) -> Result<PolyField> {
    ad_pullback_series(f, g, &rat_from_f64(s)?)
}

/// Label of a right-nested bracket `[f_{a1},[f_{a2},[…,f_{aN}]…]]`, stored
/// as the 0-based field indices `(a1, …, aN)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BracketLabel(pub Vec<usize>);

impl BracketLabel {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for BracketLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.len();
        for (i, a) in self.0.iter().enumerate() {
            if i + 1 < n {
                write!(f, "[f{},", a + 1)?;
            } else {
                write!(f, "f{}", a + 1)?;
            }
        }
        for _ in 1..n {
            f.write_str("]")?;
        }
        Ok(())
    }
}

/// All nonzero right-nested brackets of length `≤ depth`, ordered by length
/// and then by label.
pub fn iterated_brackets(
    fields: &[PolyField],
    depth: usize,
) -> Result<Vec<(BracketLabel, PolyField)>> {
    if depth < 1 {
        return Err(Error::invalid("bracket depth must be at least 1"));
    }
    let first = fields
        .first()
        .ok_or_else(|| Error::invalid("need at least one field"))?;
    for f in fields {
        Error::check_dim(first.dim(), f.dim())?;
    }
    let mut level: Vec<(BracketLabel, PolyField)> = fields
        .iter()
        .enumerate()
        .filter(|(_, f)| !f.is_zero())
        .map(|(i, f)| (BracketLabel(vec![i]), f.clone()))
        .collect();
    let mut out = level.clone();
    for _ in 1..depth {
        let jobs: Vec<(usize, usize)> = (0..fields.len())
            .flat_map(|a| (0..level.len()).map(move |b| (a, b)))
            .collect();
        let next: Vec<Option<(BracketLabel, PolyField)>> = jobs
            .par_iter()
            .map(|&(a, b)| {
                let (label, inner) = &level[b];
                let br = lie_bracket(&fields[a], inner)?;
                if br.is_zero() {
                    return Ok(None);
                }
                let mut l = Vec::with_capacity(label.len() + 1);
                l.push(a);
                l.extend_from_slice(&label.0);
                Ok(Some((BracketLabel(l), br)))
            })
            .collect::<Result<_>>()?;
        level = next.into_iter().flatten().collect();
        if level.is_empty() {
            break;
        }
        out.extend(level.iter().cloned());
    }
    Ok(out)
}

/// Float evaluator for a [`PolyField`] together with its Jacobian.
#[derive(Clone, Debug)]
pub struct CompiledField {
    components: Vec<HornerPoly>,
    jacobian: Vec<Vec<HornerPoly>>,
}

impl CompiledField {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.components) {
            *o = p.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    /// Row-major Jacobian at `x`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.jacobian
            .iter()
            .map(|row| row.iter().map(|p| p.eval(x)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyfield::poly::{rat, ratio};

    fn field(dim: usize, comps: Vec<Poly>) -> PolyField {
        assert_eq!(comps.len(), dim);
        PolyField::new(comps).unwrap()
    }

    #[test]
    fn self_bracket_vanishes() {
        let x = Poly::var(2, 0);
        let f = field(2, vec![&x * &x, Poly::var(2, 1)]);
        assert!(lie_bracket(&f, &f).unwrap().is_zero());
    }

    #[test]
    fn coordinate_linear_bracket() {
        let x = PolyField::coordinate(2, 0);
        let y = field(2, vec![Poly::zero(2), Poly::var(2, 0)]);
        assert_eq!(lie_bracket(&x, &y).unwrap(), PolyField::coordinate(2, 1));
    }

    #[test]
    fn bracket_dimension_mismatch() {
        let a = PolyField::coordinate(2, 0);
        let b = PolyField::coordinate(3, 0);
        assert!(matches!(
            lie_bracket(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn divergence_examples() {
        let id = field(3, (0..3).map(|i| Poly::var(3, i)).collect());
        assert_eq!(id.divergence(), Poly::constant(3, rat(3)));
        let sq = field(
            2,
            vec![Poly::var(2, 1).pow(2), Poly::var(2, 0).pow(2)],
        );
        assert!(sq.divergence().is_zero());
    }

    #[test]
    fn pullback_shift() {
        // x1^2 ∂/∂x2 pulled back along ∂/∂x1 by s = 1 is (x1 + 1)^2 ∂/∂x2
        let f = field(2, vec![Poly::zero(2), Poly::var(2, 0).pow(2)]);
        let g = PolyField::coordinate(2, 0);
        let out = ad_pullback_series(&f, &g, &rat(1)).unwrap();
        let x1p1 = &Poly::var(2, 0) + &Poly::one(2);
        assert_eq!(out, field(2, vec![Poly::zero(2), x1p1.pow(2)]));
        assert_eq!(ad_series_terms(&f, &g).unwrap().len(), 3);
    }

    #[test]
    fn pullback_identity_cases() {
        let f = field(2, vec![Poly::var(2, 1), Poly::var(2, 0).pow(3)]);
        let g = PolyField::constant_f64(&[0.5, -1.0]).unwrap();
        assert_eq!(ad_pullback_series(&f, &g, &rat(0)).unwrap(), f);
        let c = PolyField::constant_f64(&[2.0, 3.0]).unwrap();
        assert_eq!(ad_pullback_series(&c, &g, &ratio(7, 3)).unwrap(), c);
    }

    #[test]
    fn pullback_rejects_nonconstant_g() {
        let f = PolyField::coordinate(2, 0);
        let g = field(2, vec![Poly::var(2, 1), Poly::zero(2)]);
        assert!(matches!(
            ad_pullback_series(&f, &g, &rat(1)),
            Err(Error::Unsupported(_))
        ));
    }

    fn heisenberg(power: u32) -> Vec<PolyField> {
        let x = Poly::var(3, 0);
        vec![
            PolyField::coordinate(3, 0),
            field(3, vec![Poly::zero(3), Poly::one(3), x.pow(power)]),
        ]
    }

    #[test]
    fn brackets_single_field() {
        let fs = vec![PolyField::coordinate(3, 1)];
        let out = iterated_brackets(&fs, 4).unwrap();
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn brackets_heisenberg() {
        let out = iterated_brackets(&heisenberg(1), 2).unwrap();
        let dz = PolyField::coordinate(3, 2);
        let found = out
            .iter()
            .find(|(l, _)| l.0 == vec![0, 1])
            .expect("[f1,f2] present");
        assert_eq!(found.1, dz);
        assert_eq!(found.0.to_string(), "[f1,f2]");
    }

    #[test]
    fn brackets_quadratic_heisenberg() {
        let out = iterated_brackets(&heisenberg(2), 3).unwrap();
        let x = Poly::var(3, 0);
        let two_x_dz = field(3, vec![Poly::zero(3), Poly::zero(3), x.scale(&rat(2))]);
        let two_dz = PolyField::coordinate(3, 2).scale(&rat(2));
        let fields: Vec<&PolyField> = out.iter().map(|(_, f)| f).collect();
        assert!(fields.contains(&&heisenberg(2)[1]));
        assert!(fields.contains(&&two_x_dz));
        assert!(fields.contains(&&two_dz));
        assert!(out.iter().all(|(_, f)| !f.is_zero()));
    }

    #[test]
    fn brackets_reject_zero_depth() {
        assert!(iterated_brackets(&heisenberg(1), 0).is_err());
    }

    #[test]
    fn compiled_jacobian() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let f = field(2, vec![&x * &y, x.pow(2)]);
        let c = f.compile();
        assert_eq!(c.eval(&[2.0, 3.0]), vec![6.0, 4.0]);
        assert_eq!(c.jacobian(&[2.0, 3.0]), vec![vec![3.0, 2.0], vec![4.0, 0.0]]);
    }
}
