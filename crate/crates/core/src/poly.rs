//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Variables are keyed by any ordered type: `usize` indices for solver
//! systems, `String` names for exported sentences.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::matrix::Scalar;
use crate::rational::{self, Rational};

pub type Var = usize;

/// Product of variable powers; sorted by variable, exponents positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial<V = Var>(Vec<(V, u32)>);

impl<V: Ord + Clone> Monomial<V> {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: V) -> Self {
        Monomial(vec![(v, 1)])
    }

    pub fn from_factors(factors: impl IntoIterator<Item = (V, u32)>) -> Self {
        let mut map: BTreeMap<V, u32> = BTreeMap::new();
        for (v, e) in factors {
            if e > 0 {
                *map.entry(v).or_insert(0) += e;
            }
        }
        Monomial(map.into_iter().collect())
    }

    pub fn factors(&self) -> &[(V, u32)] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponent(&self, v: &V) -> u32 {
        self.0.iter().find(|(w, _)| w == v).map_or(0, |(_, e)| *e)
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_factors(self.0.iter().chain(other.0.iter()).cloned())
    }

    /// `∂/∂v` as (multiplier, monomial), or `None` when `v` is absent.
    pub fn derivative(&self, v: &V) -> Option<(u32, Self)> {
        let e = self.exponent(v);
        if e == 0 {
            return None;
        }
        let rest = self
            .0
            .iter()
            .map(|(w, k)| if w == v { (w.clone(), k - 1) } else { (w.clone(), *k) })
            .filter(|(_, k)| *k > 0)
            .collect();
        Some((e, Monomial(rest)))
    }

    pub fn map_vars<W: Ord + Clone>(&self, f: impl Fn(&V) -> W) -> Monomial<W> {
        Monomial::from_factors(self.0.iter().map(|(v, e)| (f(v), *e)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly<V = Var> {
    terms: BTreeMap<Monomial<V>, Rational>,
}

impl<V: Ord + Clone> Default for Poly<V> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<V: Ord + Clone> Poly<V> {
    pub fn zero() -> Self {
        Self { terms: BTreeMap::new() }
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(v: V) -> Self {
        Self::term(Rational::one(), Monomial::var(v))
    }

    pub fn term(c: Rational, m: Monomial<V>) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn add_term(&mut self, m: Monomial<V>, c: Rational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial<V>, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(Monomial::is_one)
    }

    pub fn constant_term(&self) -> Rational {
        self.terms.get(&Monomial::one()).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn coefficient(&self, m: &Monomial<V>) -> Rational {
        self.terms.get(m).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Largest exponent of any single variable.
    pub fn max_var_degree(&self) -> u32 {
        self.terms.keys().flat_map(|m| m.0.iter().map(|(_, e)| *e)).max().unwrap_or(0)
    }

    pub fn vars(&self) -> Vec<V> {
        let mut vs: Vec<V> = self.terms.keys().flat_map(|m| m.0.iter().map(|(v, _)| v.clone())).collect();
        vs.sort();
        vs.dedup();
        vs
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(m, k)| (m.clone(), k * c)).collect() }
    }

    pub fn derivative(&self, v: &V) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.terms {
            if let Some((e, rest)) = m.derivative(v) {
                out.add_term(rest, c * rational::int(e as i64));
            }
        }
        out
    }

    pub fn map_vars<W: Ord + Clone>(&self, f: impl Fn(&V) -> W) -> Poly<W> {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.map_vars(&f), c.clone());
        }
        out
    }

    /// Evaluation in any scalar type through a variable lookup.
    pub fn eval_with<T: Scalar>(&self, value: impl Fn(&V) -> T) -> T {
        let mut acc = T::zero();
        for (m, c) in &self.terms {
            let mut t = T::from_rational(c);
            for (v, e) in &m.0 {
                let x = value(v);
                for _ in 0..*e {
                    t = t * x.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// If `self = c·other` for a nonzero rational `c`, returns `c`.
    pub fn proportional_to(&self, other: &Self) -> Option<Rational> {
        if self.terms.len() != other.terms.len() || other.is_zero() {
            return None;
        }
        let (m0, c0) = other.terms.iter().next()?;
        let ratio = self.terms.get(m0)? / c0;
        other
            .terms
            .iter()
            .all(|(m, c)| self.terms.get(m) == Some(&(c * &ratio)))
            .then_some(ratio)
    }
}

impl Poly<Var> {
    pub fn eval<T: Scalar>(&self, point: &[T]) -> T {
        self.eval_with(|&v| point[v].clone())
    }

    /// Renders with the given variable names.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        DisplayWith { poly: self, names }
    }
}

struct DisplayWith<'a> {
    poly: &'a Poly<Var>,
    names: &'a [String],
}

impl fmt::Display for DisplayWith<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let named = self.poly.map_vars(|&v| {
            self.names.get(v).cloned().unwrap_or_else(|| format!("x{}", v + 1))
        });
        write!(f, "{named}")
    }
}

impl<V: Ord + Clone + fmt::Display> fmt::Display for Poly<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        // Highest degree first, then monomial order.
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then_with(|| lex_desc(a.0, b.0)));
        for (k, (m, c)) in terms.into_iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            match (k, neg) {
                (0, true) => f.write_str("-")?,
                (0, false) => {}
                (_, true) => f.write_str(" - ")?,
                (_, false) => f.write_str(" + ")?,
            }
            let factors: Vec<String> = m
                .0
                .iter()
                .map(|(v, e)| if *e == 1 { v.to_string() } else { format!("{v}^{e}") })
                .collect();
            if m.is_one() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{mag}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Lexicographic order with larger exponents of earlier variables first.
fn lex_desc<V: Ord>(a: &Monomial<V>, b: &Monomial<V>) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    for (fa, fb) in a.0.iter().zip(b.0.iter()) {
        match fa.0.cmp(&fb.0) {
            Ordering::Less => return Ordering::Less,
            Ordering::Greater => return Ordering::Greater,
            Ordering::Equal => match fb.1.cmp(&fa.1) {
                Ordering::Equal => {}
                o => return o,
            },
        }
    }
    b.0.len().cmp(&a.0.len()).reverse()
}

impl<V: Ord + Clone> Add for &Poly<V> {
    type Output = Poly<V>;
    fn add(self, rhs: &Poly<V>) -> Poly<V> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }
}

impl<V: Ord + Clone> Sub for &Poly<V> {
    type Output = Poly<V>;
    fn sub(self, rhs: &Poly<V>) -> Poly<V> {
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.clone(), -c.clone());
        }
        out
    }
}

impl<V: Ord + Clone> Mul for &Poly<V> {
    type Output = Poly<V>;
    fn mul(self, rhs: &Poly<V>) -> Poly<V> {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }
}

impl<V: Ord + Clone> Neg for &Poly<V> {
    type Output = Poly<V>;
    fn neg(self) -> Poly<V> {
        self.scale(&-Rational::one())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $method:ident) => {
        impl<V: Ord + Clone> $tr for Poly<V> {
            type Output = Poly<V>;
            fn $method(self, rhs: Poly<V>) -> Poly<V> {
                (&self).$method(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

/// A polynomial equation system `p_k(x) = 0` over named variables, plus
/// disequalities `q(x) ≠ 0` that roots must satisfy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySystem {
    pub var_names: Vec<String>,
    pub equations: Vec<Poly>,
    pub disequalities: Vec<Poly>,
}

impl PolySystem {
    pub fn new(var_names: Vec<String>, equations: Vec<Poly>) -> Self {
        Self { var_names, equations, disequalities: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn residuals<T: Scalar>(&self, point: &[T]) -> Vec<T> {
        self.equations.iter().map(|p| p.eval(point)).collect()
    }

    pub fn max_residual<T: Scalar>(&self, point: &[T]) -> T {
        self.residuals(point)
            .into_iter()
            .map(|r| r.abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("polynomial syntax error at byte {position}: {message}")]
pub struct PolyParseError {
    pub position: usize,
    pub message: String,
}

/// Minimal infix reader: `+ - * / ^`, parentheses, integer and decimal
/// literals, and identifiers. Unknown identifiers are appended to `names`.
pub fn parse_poly(text: &str, names: &mut Vec<String>) -> Result<Poly, PolyParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, names };
    let poly = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(poly)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a mut Vec<String>,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PolyParseError {
        PolyParseError { position: self.pos, message: message.to_string() }
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

    fn expr(&mut self) -> Result<Poly, PolyParseError> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == b'+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly, PolyParseError> {
        let mut acc = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let at = self.pos;
            let rhs = self.factor()?;
            if op == b'*' {
                acc = &acc * &rhs;
            } else if rhs.is_constant() && !rhs.is_zero() {
                acc = acc.scale(&(Rational::one() / rhs.constant_term()));
            } else {
                return Err(PolyParseError { position: at, message: "division by a non-constant".into() });
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Poly, PolyParseError> {
        if let Some(b'-') = self.peek() {
            self.pos += 1;
            return Ok(-&self.factor()?);
        }
        let base = self.atom()?;
        if let Some(b'^') = self.peek() {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| self.error("expected an exponent"))?;
            let mut out = Poly::constant(Rational::one());
            for _ in 0..e {
                out = &out * &base;
            }
            return Ok(out);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly, PolyParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let lit = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                rational::parse_rational(lit)
                    .map(Poly::constant)
                    .map_err(|_| PolyParseError { position: start, message: format!("bad number `{lit}`") })
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("").to_string();
                let idx = match self.names.iter().position(|n| *n == name) {
                    Some(i) => i,
                    None => {
                        self.names.push(name);
                        self.names.len() - 1
                    }
                };
                Ok(Poly::var(idx))
            }
            _ => Err(self.error("expected a number, variable, or `(`")),
        }
    }
}
