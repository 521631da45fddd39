use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exponent multi-index, ordered graded-lexicographically: total degree
/// first, then lexicographic with `x1` most significant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exps: Vec<u32>) -> Self {
        Monomial(exps)
    }

    pub fn one(num_vars: usize) -> Self {
        Monomial(vec![0; num_vars])
    }

    pub fn exps(&self) -> &[u32] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Multivariate polynomial with exact rational coefficients.
///
/// Zero coefficients are never stored, so structural equality is
/// mathematical equality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    num_vars: usize,
    terms: BTreeMap<Monomial, BigRational>,
}

pub fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact rational value of a finite float (every finite `f64` is dyadic).
pub fn rat_from_f64(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::invalid(format!("non-finite value {x}")))
}

pub fn rat_to_f64(q: &BigRational) -> f64 {
    match q.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => {
            // numerator/denominator overflow f64 individually; scale them down
            let (n, d) = (q.numer(), q.denom());
            let shift = n.bits().max(d.bits()).saturating_sub(1000);
            let n = (n >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (d >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

impl Poly {
    pub fn zero(num_vars: usize) -> Self {
        Poly {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: BigRational) -> Self {
        let mut p = Poly::zero(num_vars);
        p.add_term(Monomial::one(num_vars), c);
        p
    }

    pub fn one(num_vars: usize) -> Self {
        Poly::constant(num_vars, BigRational::one())
    }

    /// The coordinate function `x_{i+1}` (0-based index `i`).
    pub fn var(num_vars: usize, i: usize) -> Self {
        assert!(i < num_vars, "variable index {i} out of range");
        let mut exps = vec![0; num_vars];
        exps[i] = 1;
        let mut p = Poly::zero(num_vars);
        p.add_term(Monomial(exps), BigRational::one());
        p
    }

    pub fn from_terms<I>(num_vars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, BigRational)>,
    {
        let mut p = Poly::zero(num_vars);
        for (exps, c) in terms {
            Error::check_dim(num_vars, exps.len())?;
            p.add_term(Monomial(exps), c);
        }
        Ok(p)
    }

    /// Univariate polynomial from ascending integer coefficients.
    pub fn univariate(coeffs: &[i64]) -> Self {
        let mut p = Poly::zero(1);
        for (k, &c) in coeffs.iter().enumerate() {
            p.add_term(Monomial(vec![k as u32]), rat(c));
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get() + c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Monomial::degree)
    }

    pub fn is_constant(&self) -> bool {
        self.degree().map_or(true, |d| d == 0)
    }

    pub fn constant_term(&self) -> BigRational {
        self.terms
            .get(&Monomial::one(self.num_vars))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn coeff(&self, exps: &[u32]) -> BigRational {
        self.terms
            .get(&Monomial(exps.to_vec()))
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.num_vars);
        }
        Poly {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero(self.num_vars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[var] -= 1;
            out.add_term(Monomial(exps), c * rat(e as i64));
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut acc = Poly::one(self.num_vars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Exact `∫₀¹ p(t) dt` of a univariate polynomial.
    pub fn integrate_unit_interval(&self) -> Result<BigRational> {
        Error::check_dim(1, self.num_vars)?;
        Ok(self
            .terms
            .iter()
            .map(|(m, c)| c / rat(m.0[0] as i64 + 1))
            .fold(BigRational::zero(), |a, b| a + b))
    }

    /// Antiderivative in a univariate polynomial, vanishing at 0.
    pub fn antiderivative(&self) -> Result<Poly> {
        Error::check_dim(1, self.num_vars)?;
        let mut out = Poly::zero(1);
        for (m, c) in &self.terms {
            out.add_term(Monomial(vec![m.0[0] + 1]), c / rat(m.0[0] as i64 + 1));
        }
        Ok(out)
    }

    /// Ascending float coefficients of a univariate polynomial.
    pub fn univariate_coeffs_f64(&self) -> Result<Vec<f64>> {
        Error::check_dim(1, self.num_vars)?;
        let deg = self.degree().unwrap_or(0) as usize;
        let mut out = vec![0.0; deg + 1];
        for (m, c) in &self.terms {
            out[m.0[0] as usize] = rat_to_f64(c);
        }
        Ok(out)
    }

    /// Exact evaluation at a rational point.
    pub fn eval_exact(&self, x: &[BigRational]) -> Result<BigRational> {
        Error::check_dim(self.num_vars, x.len())?;
        let mut acc = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &e) in x.iter().zip(&m.0) {
                if e > 0 {
                    t *= num_traits::pow(xi.clone(), e as usize);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Float evaluation by nested Horner factoring.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Error::check_dim(self.num_vars, x.len())?;
        Ok(super::horner::HornerPoly::new(self).eval(x))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rat_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }

    fn combine(&self, other: &Poly, negate: bool) -> Poly {
        assert_eq!(self.num_vars, other.num_vars, "polynomial arity mismatch");
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), if negate { -c.clone() } else { c.clone() });
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        self.combine(rhs, false)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        self.combine(rhs, true)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.num_vars, rhs.num_vars, "polynomial arity mismatch");
        let mut out = Poly::zero(self.num_vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl $tr for Poly {
            type Output = Poly;
            fn $f(self, rhs: Poly) -> Poly {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// Canonical text: terms in descending graded-lex order, e.g.
/// `6*x1^2 - 6*x1 + 1`.
impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else {
                f.write_str(if neg { " - " } else { " + " })?;
            }
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(j, &e)| {
                    if e == 1 {
                        format!("x{}", j + 1)
                    } else {
                        format!("x{}^{}", j + 1, e)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                f.write_str(&vars.join("*"))?;
            } else {
                write!(f, "{abs}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}
