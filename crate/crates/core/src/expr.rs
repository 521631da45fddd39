//! Expressions in one state variable `x` and one parameter `theta`.
//!
//! Grammar (standard precedence, `^` binds tightest and takes an integer):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' ['-'] digits)?
//! atom  := number | 'x' | 'theta' | func '(' expr ')' | '(' expr ')'
//! func  := 'sin' | 'cos' | 'exp' | 'log'
//! ```
//!
//! [`taylor_coeffs`] propagates truncated power series through the tree, so
//! the Taylor coefficients in `x` at 0 come out of exact recurrences rather
//! than finite differences.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::odesim::ThetaGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Theta,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// Taylor coefficients `(a_0, …, a_M)` of `x ↦ e(x, θ)` at `x = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaylorJet {
    pub order: usize,
    pub coeffs: Vec<f64>,
}

impl TaylorJet {
    /// Value of the truncated series at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        parse(src)
    }

    pub fn eval(&self, x: f64, theta: f64) -> Result<f64> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Theta => theta,
            Expr::Neg(a) => -a.eval(x, theta)?,
            Expr::Add(a, b) => a.eval(x, theta)? + b.eval(x, theta)?,
            Expr::Sub(a, b) => a.eval(x, theta)? - b.eval(x, theta)?,
            Expr::Mul(a, b) => a.eval(x, theta)? * b.eval(x, theta)?,
            Expr::Div(a, b) => {
                let d = b.eval(x, theta)?;
                if d == 0.0 {
                    return Err(Error::Domain(format!("division by zero at x = {x}")));
                }
                a.eval(x, theta)? / d
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x, theta)?;
                if base == 0.0 && *k < 0 {
                    return Err(Error::Domain("negative power of zero".into()));
                }
                base.powi(*k)
            }
            Expr::Call(f, a) => {
                let v = a.eval(x, theta)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(Error::Domain(format!("log of non-positive value {v}")));
                        }
                        v.ln()
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite value at x = {x}, theta = {theta}"
            )));
        }
        Ok(v)
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::X => true,
            Expr::Num(_) | Expr::Theta => false,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on_x(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_x() || b.depends_on_x()
            }
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            // a negative literal prints with a leading minus
            Expr::Num(c) if c.is_sign_negative() => 3,
            _ => 5,
        }
    }
}

/// Minimal-parenthesis rendering that re-parses to the same tree, up to
/// negative literals coming back as `Neg(Num)`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn side(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.prec() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::X => f.write_str("x"),
            Expr::Theta => f.write_str("theta"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                side(f, a, 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (op, p) = match self {
                    Expr::Add(..) => (" + ", 1),
                    Expr::Sub(..) => (" - ", 1),
                    Expr::Mul(..) => ("*", 2),
                    _ => ("/", 2),
                };
                side(f, a, p)?;
                f.write_str(op)?;
                // left-associative: an equal-precedence right operand needs parens
                side(f, b, p + 1)
            }
            Expr::Pow(a, k) => {
                side(f, a, 5)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("expected operator or end of input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, hint: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: hint.to_string(),
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

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = Expr::Mul(Box::new(acc), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    acc = Expr::Div(Box::new(acc), Box::new(self.unary()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            if self.src.get(self.pos) == Some(&b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = start;
                return Err(self.err("expected integer exponent"));
            }
            let k: i32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let c = match self.peek() {
            Some(c) => c,
            None => return Err(self.err("unexpected end of input; expected operand")),
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let func = match word {
                "x" => return Ok(Expr::X),
                "theta" => return Ok(Expr::Theta),
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "exp" => Func::Exp,
                "log" => Func::Log,
                _ => {
                    self.pos = start;
                    return Err(self.err("unknown identifier; expected x, theta, sin, cos, exp or log"));
                }
            };
            if self.peek() != Some(b'(') {
                return Err(self.err("expected '(' after function name"));
            }
            self.pos += 1;
            let arg = self.expr()?;
            if self.peek() != Some(b')') {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        Err(self.err("expected number, x, theta, function or '('"))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let ds = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if ds == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::Num).map_err(|_| Error::Syntax {
            offset: start,
            message: "malformed number".into(),
        })
    }
}

/// Truncated power series `Σ_{k≤M} c_k x^k`.
#[derive(Clone, Debug)]
struct Series(Vec<f64>);

impl Series {
    fn constant(c: f64, m: usize) -> Self {
        let mut v = vec![0.0; m + 1];
        v[0] = c;
        Series(v)
    }

    fn mul(&self, o: &Series) -> Series {
        let m = self.0.len();
        let mut out = vec![0.0; m];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = (0..=k).map(|j| self.0[j] * o.0[k - j]).sum();
        }
        Series(out)
    }

    fn div(&self, o: &Series) -> Result<Series> {
        let b0 = o.0[0];
        if b0 == 0.0 {
            return Err(Error::Domain(
                "division by a series vanishing at x = 0".into(),
            ));
        }
        let m = self.0.len();
        let mut c = vec![0.0; m];
        for k in 0..m {
            let s: f64 = (1..=k).map(|j| o.0[j] * c[k - j]).sum();
            c[k] = (self.0[k] - s) / b0;
        }
        Ok(Series(c))
    }

    fn powi(&self, k: i32) -> Result<Series> {
        let m = self.0.len() - 1;
        let mut acc = Series::constant(1.0, m);
        let mut base = self.clone();
        let mut n = k.unsigned_abs();
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul(&base);
            }
        }
        if k < 0 {
            Series::constant(1.0, m).div(&acc)
        } else {
            Ok(acc)
        }
    }

    fn exp(&self) -> Series {
        let m = self.0.len();
        let mut e = vec![0.0; m];
        e[0] = self.0[0].exp();
        for k in 1..m {
            let s: f64 = (1..=k).map(|j| j as f64 * self.0[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Series(e)
    }

    fn log(&self) -> Result<Series> {
        let a0 = self.0[0];
        if a0 <= 0.0 {
            return Err(Error::Domain(format!(
                "log series undefined: argument is {a0} at x = 0"
            )));
        }
        let m = self.0.len();
        let mut l = vec![0.0; m];
        l[0] = a0.ln();
        for k in 1..m {
            let s: f64 = (1..k).map(|j| j as f64 * l[j] * self.0[k - j]).sum();
            l[k] = (self.0[k] - s / k as f64) / a0;
        }
        Ok(Series(l))
    }

    fn sin_cos(&self) -> (Series, Series) {
        let m = self.0.len();
        let mut s = vec![0.0; m];
        let mut c = vec![0.0; m];
        s[0] = self.0[0].sin();
        c[0] = self.0[0].cos();
        for k in 1..m {
            let mut ss = 0.0;
            let mut cc = 0.0;
            for j in 1..=k {
                let w = j as f64 * self.0[j];
                ss += w * c[k - j];
                cc += w * s[k - j];
            }
            s[k] = ss / k as f64;
            c[k] = -cc / k as f64;
        }
        (Series(s), Series(c))
    }
}

fn series(e: &Expr, theta: f64, m: usize) -> Result<Series> {
    let zip = |a: Series, b: Series, f: fn(f64, f64) -> f64| {
        Series(a.0.iter().zip(&b.0).map(|(x, y)| f(*x, *y)).collect())
    };
    Ok(match e {
        Expr::Num(c) => Series::constant(*c, m),
        Expr::Theta => Series::constant(theta, m),
        Expr::X => {
            let mut s = Series::constant(0.0, m);
            if m >= 1 {
                s.0[1] = 1.0;
            }
            s
        }
        Expr::Neg(a) => Series(series(a, theta, m)?.0.iter().map(|v| -v).collect()),
        Expr::Add(a, b) => zip(series(a, theta, m)?, series(b, theta, m)?, |x, y| x + y),
        Expr::Sub(a, b) => zip(series(a, theta, m)?, series(b, theta, m)?, |x, y| x - y),
        Expr::Mul(a, b) => series(a, theta, m)?.mul(&series(b, theta, m)?),
        Expr::Div(a, b) => series(a, theta, m)?.div(&series(b, theta, m)?)?,
        Expr::Pow(a, k) => series(a, theta, m)?.powi(*k)?,
        Expr::Call(f, a) => {
            let s = series(a, theta, m)?;
            match f {
                Func::Exp => s.exp(),
                Func::Log => s.log()?,
                Func::Sin => s.sin_cos().0,
                Func::Cos => s.sin_cos().1,
            }
        }
    })
}

/// Coefficients of the degree-`order` Taylor polynomial of `x ↦ e(x, θ)`
/// at `x = 0`.
pub fn taylor_coeffs(e: &Expr, theta: f64, order: usize) -> Result<TaylorJet> {
    let s = series(e, theta, order)?;
    if let Some(bad) = s.0.iter().position(|c| !c.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite Taylor coefficient of order {bad}"
        )));
    }
    Ok(TaylorJet {
        order,
        coeffs: s.0,
    })
}

/// Pointwise evaluation over the grid nodes (θ = node value).
pub fn eval_grid(e: &Expr, grid: &ThetaGrid, x: f64) -> Result<Vec<f64>> {
    grid.nodes()
        .iter()
        .enumerate()
        .map(|(i, &th)| {
            e.eval(x, th).map_err(|err| match err {
                Error::Domain(msg) => Error::Domain(format!("node {i}: {msg}")),
                other => other,
            })
        })
        .collect()
}

/// Largest `|e(x, θ)|` sampled on `[−ρ/2, ρ/2] × grid`; used to sanity
/// check a user-supplied sup bound.
pub fn sampled_sup(e: &Expr, grid: &ThetaGrid, rho: f64, samples: usize) -> Result<f64> {
    let samples = samples.max(2);
    let mut sup: f64 = 0.0;
    for &th in grid.nodes() {
        for k in 0..samples {
            let x = -rho / 2.0 + rho * k as f64 / (samples - 1) as f64;
            sup = sup.max(e.eval(x, th)?.abs());
        }
    }
    Ok(sup)
}
