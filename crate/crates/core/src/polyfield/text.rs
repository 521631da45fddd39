//! Reader for the canonical polynomial text (`3/2*x1^2*x2 - x3 + 1`).
//!
//! Besides the `x1..xn` coordinates the reader accepts the symbol `theta`,
//! substituted by an exact value, so that θ-dependent ensembles can be
//! written once and instantiated per grid node.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::field::PolyField;
use super::poly::Poly;
use crate::error::{Error, Result};

pub fn parse_poly(src: &str, num_vars: usize, theta: Option<&BigRational>) -> Result<Poly> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        num_vars,
        theta,
    };
    let out = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(out)
}

/// Parses one polynomial per component; `dim = components.len()`.
pub fn parse_field<S: AsRef<str>>(components: &[S], theta: Option<&BigRational>) -> Result<PolyField> {
    let dim = components.len();
    let polys = components
        .iter()
        .map(|c| parse_poly(c.as_ref(), dim, theta))
        .collect::<Result<Vec<_>>>()?;
    PolyField::new(polys)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    num_vars: usize,
    theta: Option<&'a BigRational>,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        while let Some(c) = self.peek() {
            match c {
                b'+' => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.unary()?;
        while let Some(c) = self.peek() {
            match c {
                b'*' => {
                    self.pos += 1;
                    acc = &acc * &self.unary()?;
                }
                b'/' => {
                    self.pos += 1;
                    let at = self.pos;
                    let d = self.unary()?;
                    if !d.is_constant() || d.is_zero() {
                        self.pos = at;
                        return Err(self.err("division only by a nonzero constant"));
                    }
                    acc = acc.scale(&(BigRational::one() / d.constant_term()));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Poly> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(-&self.unary()?);
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected non-negative integer exponent"));
            }
            let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent too large"))?;
            return Ok(base.pow(k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let q = self.number()?;
                Ok(Poly::constant(self.num_vars, q))
            }
            Some(b'x') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                let idx: usize = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .parse()
                    .map_err(|_| self.err("expected variable index after 'x'"))?;
                if idx == 0 || idx > self.num_vars {
                    return Err(self.err("variable index out of range"));
                }
                Ok(Poly::var(self.num_vars, idx - 1))
            }
            Some(b't') if self.src[self.pos..].starts_with(b"theta") => {
                self.pos += 5;
                match self.theta {
                    Some(v) => Ok(Poly::constant(self.num_vars, v.clone())),
                    None => Err(self.err("'theta' used without a parameter value")),
                }
            }
            _ => Err(self.err("expected number, variable or '('")),
        }
    }

    /// Exact decimal literal, e.g. `2.5e-3` → 1/400.
    fn number(&mut self) -> Result<BigRational> {
        let start = self.pos;
        let mut digits = String::new();
        let mut frac = 0i64;
        let mut seen_dot = false;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            if c.is_ascii_digit() {
                digits.push(c as char);
                if seen_dot {
                    frac += 1;
                }
            } else if c == b'.' && !seen_dot {
                seen_dot = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits.is_empty() {
            self.pos = start;
            return Err(self.err("malformed number"));
        }
        let mut exp = 0i64;
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            self.pos += 1;
            let es = self.pos;
            if self.pos < self.src.len() && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            exp = std::str::from_utf8(&self.src[es..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("malformed exponent"))?;
        }
        let mant: BigInt = digits.parse().map_err(|_| self.err("malformed number"))?;
        let shift = exp - frac;
        let ten = BigInt::from(10);
        let q = if shift >= 0 {
            BigRational::from_integer(mant * num_traits::pow(ten, shift as usize))
        } else {
            BigRational::new(mant, num_traits::pow(ten, (-shift) as usize))
        };
        if q.is_zero() {
            return Ok(BigRational::zero());
        }
        Ok(q)
    }
}
