//! Quadratic constraint systems in Tseitin normal form, the planting
//! transform, and a solver-backed enumeration oracle.

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{NumberMode, Scalar};
use crate::poly::{Monomial, Poly, PolySystem};
use crate::rational::{self, Rational};
use crate::solver::{self, Root, SolveConfig, SolveStatus};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum QuadError {
    #[error("variable x{0} is out of range 1..={1}")]
    OutOfRange(usize, usize),
    #[error("affine constraint has {0} coefficients, expected {1}")]
    AffineLength(usize, usize),
    #[error("assignment has {0} values, expected {1}")]
    Dimension(usize, usize),
    #[error("malformed constraint system: {0}")]
    Malformed(String),
}

/// One constraint `p = 0` over 1-based variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// `x_a·x_b − x_c`
    Mul { a: usize, b: usize, c: usize },
    /// `x_a + x_b − x_c`
    Add { a: usize, b: usize, c: usize },
    /// `x_a − x_b`
    Eq { a: usize, b: usize },
    /// `x_a − 1`
    One { a: usize },
    /// `x_a`
    Zero { a: usize },
    /// `Σ α_ℓ x_ℓ − β`
    Affine { coeffs: Vec<Rational>, rhs: Rational },
}

impl Constraint {
    pub fn is_mul(&self) -> bool {
        matches!(self, Constraint::Mul { .. })
    }

    /// The constraint polynomial over 0-based variables.
    pub fn poly(&self) -> Poly {
        let x = |v: usize| Poly::var(v - 1);
        match self {
            Constraint::Mul { a, b, c } => &(&x(*a) * &x(*b)) - &x(*c),
            Constraint::Add { a, b, c } => &(&x(*a) + &x(*b)) - &x(*c),
            Constraint::Eq { a, b } => &x(*a) - &x(*b),
            Constraint::One { a } => &x(*a) - &Poly::constant(Rational::one()),
            Constraint::Zero { a } => x(*a),
            Constraint::Affine { coeffs, rhs } => {
                let mut p = Poly::constant(-rhs.clone());
                for (k, c) in coeffs.iter().enumerate() {
                    p.add_term(Monomial::var(k), c.clone());
                }
                p
            }
        }
    }

    /// Linear forms as `(α, β)` over `n` variables; `None` for `Mul`.
    pub fn as_affine(&self, n: usize) -> Option<(Vec<Rational>, Rational)> {
        if let Constraint::Affine { coeffs, rhs } = self {
            return Some((coeffs.clone(), rhs.clone()));
        }
        if self.is_mul() {
            return None;
        }
        let p = self.poly();
        let mut alpha = vec![Rational::zero(); n];
        for (m, c) in p.terms() {
            if let [(v, 1)] = m.factors() {
                alpha[*v] = c.clone();
            }
        }
        Some((alpha, -p.constant_term()))
    }

    fn indices(&self) -> Vec<usize> {
        match self {
            Constraint::Mul { a, b, c } | Constraint::Add { a, b, c } => vec![*a, *b, *c],
            Constraint::Eq { a, b } => vec![*a, *b],
            Constraint::One { a } | Constraint::Zero { a } => vec![*a],
            Constraint::Affine { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ConstraintDoc {
    Mul { a: usize, b: usize, c: usize },
    Add { a: usize, b: usize, c: usize },
    Eq { a: usize, b: usize },
    One { a: usize },
    Zero { a: usize },
    Affine { coeffs: Vec<String>, rhs: String },
}

/// Wire form of a [`ConstraintSystem`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDoc {
    n: usize,
    constraints: Vec<ConstraintDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSystem {
    pub n: usize,
    pub constraints: Vec<Constraint>,
    /// Optional display names, `names[k]` for `x_{k+1}`.
    pub names: Vec<String>,
}

impl ConstraintSystem {
    pub fn new(n: usize, constraints: Vec<Constraint>) -> Result<Self, QuadError> {
        let cs = Self { n, constraints, names: Vec::new() };
        cs.validate()?;
        Ok(cs)
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        for c in &self.constraints {
            for v in c.indices() {
                if v == 0 || v > self.n {
                    return Err(QuadError::OutOfRange(v, self.n));
                }
            }
            if let Constraint::Affine { coeffs, .. } = c {
                if coeffs.len() != self.n {
                    return Err(QuadError::AffineLength(coeffs.len(), self.n));
                }
            }
        }
        if !self.names.is_empty() && self.names.len() != self.n {
            return Err(QuadError::Malformed(format!("{} names for {} variables", self.names.len(), self.n)));
        }
        Ok(())
    }

    pub fn var_names(&self) -> Vec<String> {
        if self.names.is_empty() {
            (1..=self.n).map(|k| format!("x{k}")).collect()
        } else {
            self.names.clone()
        }
    }

    /// Number of constraints that are not multiplications.
    pub fn affine_count(&self) -> usize {
        self.constraints.iter().filter(|c| !c.is_mul()).count()
    }

    pub fn to_poly_system(&self) -> PolySystem {
        PolySystem::new(self.var_names(), self.constraints.iter().map(Constraint::poly).collect())
    }

    pub fn to_json(&self) -> SystemDoc {
        SystemDoc {
            n: self.n,
            constraints: self
                .constraints
                .iter()
                .map(|c| match c {
                    Constraint::Mul { a, b, c } => ConstraintDoc::Mul { a: *a, b: *b, c: *c },
                    Constraint::Add { a, b, c } => ConstraintDoc::Add { a: *a, b: *b, c: *c },
                    Constraint::Eq { a, b } => ConstraintDoc::Eq { a: *a, b: *b },
                    Constraint::One { a } => ConstraintDoc::One { a: *a },
                    Constraint::Zero { a } => ConstraintDoc::Zero { a: *a },
                    Constraint::Affine { coeffs, rhs } => ConstraintDoc::Affine {
                        coeffs: coeffs.iter().map(rational::format_rational).collect(),
                        rhs: rational::format_rational(rhs),
                    },
                })
                .collect(),
            names: self.names.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, QuadError> {
        let doc: SystemDoc = serde_json::from_str(text).map_err(|e| QuadError::Malformed(e.to_string()))?;
        let num = |s: &str| rational::parse_rational(s).map_err(|e| QuadError::Malformed(e.to_string()));
        let mut constraints = Vec::new();
        for c in doc.constraints {
            constraints.push(match c {
                ConstraintDoc::Mul { a, b, c } => Constraint::Mul { a, b, c },
                ConstraintDoc::Add { a, b, c } => Constraint::Add { a, b, c },
                ConstraintDoc::Eq { a, b } => Constraint::Eq { a, b },
                ConstraintDoc::One { a } => Constraint::One { a },
                ConstraintDoc::Zero { a } => Constraint::Zero { a },
                ConstraintDoc::Affine { coeffs, rhs } => Constraint::Affine {
                    coeffs: coeffs.iter().map(|s| num(s)).collect::<Result<_, _>>()?,
                    rhs: num(&rhs)?,
                },
            });
        }
        let cs = Self { n: doc.n, constraints, names: doc.names };
        cs.validate()?;
        Ok(cs)
    }
}

/// Completes an assignment of the first `prefix.len()` variables by running
/// the `Mul` constraints that define the remaining ones, in order.
pub fn extend_assignment<T: Scalar>(cs: &ConstraintSystem, prefix: &[T]) -> Vec<T> {
    let mut a: Vec<T> = prefix.to_vec();
    a.resize(cs.n, T::zero());
    for c in &cs.constraints {
        if let Constraint::Mul { a: x, b: y, c: z } = c {
            if *z > prefix.len() {
                a[z - 1] = a[x - 1].clone() * a[y - 1].clone();
            }
        }
    }
    a
}

/// Per-constraint residuals at `a`.
pub fn evaluate<T: Scalar>(cs: &ConstraintSystem, a: &[T]) -> Result<Vec<T>, QuadError> {
    if a.len() != cs.n {
        return Err(QuadError::Dimension(a.len(), cs.n));
    }
    Ok(cs.constraints.iter().map(|c| c.poly().eval(a)).collect())
}

/// All residuals exactly zero (rational) or within `tol` (float).
pub fn is_satisfied<T: Scalar>(cs: &ConstraintSystem, a: &[T], tol: f64) -> bool {
    evaluate(cs, a).is_ok_and(|r| {
        r.iter().all(|v| match T::MODE {
            NumberMode::Rational => v.is_zero(),
            NumberMode::Float => v.to_f64().abs() <= tol,
        })
    })
}

/// Result of flattening: the first `originals` variables are the input
/// variables in order; the rest are auxiliaries fixed by them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub system: ConstraintSystem,
    pub originals: usize,
}

impl Normalized {
    /// Restriction of a normalized assignment to the input variables.
    pub fn back_map<T: Clone>(&self, a: &[T]) -> Vec<T> {
        a[..self.originals].to_vec()
    }
}

/// Tseitin flattening: every monomial of degree ≥ 2 becomes a chain of
/// `Mul` constraints (shared through a cache), and the remaining linear
/// relation is emitted in the most specific normal form that fits.
pub fn normalize(raw: &[Poly], names: &[String]) -> Normalized {
    let originals = names.len().max(raw.iter().flat_map(Poly::vars).map(|v| v + 1).max().unwrap_or(0));
    let mut var_names: Vec<String> = (0..originals)
        .map(|k| names.get(k).cloned().unwrap_or_else(|| format!("x{}", k + 1)))
        .collect();
    let mut cache: BTreeMap<Monomial, usize> = BTreeMap::new();
    let mut muls = Vec::new();
    let mut linear: Vec<(BTreeMap<usize, Rational>, Rational)> = Vec::new();

    for p in raw {
        let mut lin: BTreeMap<usize, Rational> = BTreeMap::new();
        for (m, c) in p.terms() {
            if m.is_one() {
                continue;
            }
            let v = monomial_var(m, &mut cache, &mut muls, &mut var_names);
            *lin.entry(v).or_insert_with(Rational::zero) += c;
        }
        lin.retain(|_, c| !c.is_zero());
        if lin.is_empty() && p.constant_term().is_zero() {
            continue;
        }
        linear.push((lin, p.constant_term()));
    }

    let n = var_names.len();
    let mut constraints = muls;
    for (lin, d) in linear {
        constraints.push(classify(&lin, &d, n));
    }
    let system = ConstraintSystem { n, constraints, names: var_names };
    Normalized { system, originals }
}

/// 0-based variable holding the value of `m`, creating aux variables for
/// products as needed.
fn monomial_var(
    m: &Monomial,
    cache: &mut BTreeMap<Monomial, usize>,
    muls: &mut Vec<Constraint>,
    names: &mut Vec<String>,
) -> usize {
    if let [(v, 1)] = m.factors() {
        return *v;
    }
    if let Some(&v) = cache.get(m) {
        return v;
    }
    // Peel the last factor: m = rest · x_last.
    let mut factors = m.factors().to_vec();
    let last = factors.last_mut().expect("degree ≥ 2");
    let lv = last.0;
    last.1 -= 1;
    let rest = Monomial::from_factors(factors);
    let rv = monomial_var(&rest, cache, muls, names);
    names.push(format!("t{}", names.len() + 1));
    let out = names.len() - 1;
    muls.push(Constraint::Mul { a: rv + 1, b: lv + 1, c: out + 1 });
    cache.insert(m.clone(), out);
    out
}

fn classify(lin: &BTreeMap<usize, Rational>, d: &Rational, n: usize) -> Constraint {
    let terms: Vec<(usize, &Rational)> = lin.iter().map(|(v, c)| (*v + 1, c)).collect();
    let one = Rational::one();
    match terms.as_slice() {
        [(a, _)] if d.is_zero() => return Constraint::Zero { a: *a },
        [(a, c)] if -d / *c == one => return Constraint::One { a: *a },
        [(a, ca), (b, cb)] if d.is_zero() && (*ca + *cb).is_zero() => {
            return Constraint::Eq { a: *a, b: *b };
        }
        [_, _, _] if d.is_zero() => {
            // a + b − c up to an overall factor: two coefficients agree, the
            // third is their negation.
            for k in 0..3 {
                let (c, cc) = terms[k];
                let others: Vec<&(usize, &Rational)> = terms.iter().filter(|t| t.0 != c).collect();
                if others[0].1 == others[1].1 && (others[0].1 + cc).is_zero() {
                    return Constraint::Add { a: others[0].0, b: others[1].0, c };
                }
            }
        }
        _ => {}
    }
    let mut coeffs = vec![Rational::zero(); n];
    for (v, c) in lin {
        coeffs[*v] = c.clone();
    }
    Constraint::Affine { coeffs, rhs: -d.clone() }
}

/// Adds a fresh variable `y` (placed first, originals shift by one) with
/// `y(y − 1) = 0`, `y·x_i = 0` and `(y − 1)·p_j = 0`, then re-normalizes.
/// The result has the extra solution `y = 1, x = 0`, and `(0, ξ)` for every
/// solution `ξ` of `cs`.
pub fn plant_solution(cs: &ConstraintSystem) -> ConstraintSystem {
    let y = Poly::var(0);
    let y1 = &y - &Poly::constant(Rational::one());
    let shift = |p: &Poly| p.map_vars(|v| v + 1);
    let mut raw = vec![&y * &y1];
    for i in 0..cs.n {
        raw.push(&y * &Poly::var(i + 1));
    }
    for c in &cs.constraints {
        raw.push(&y1 * &shift(&c.poly()));
    }
    let mut names = vec!["y".to_string()];
    names.extend(cs.var_names());
    normalize(&raw, &names).system
}

#[derive(Debug, Clone, PartialEq)]
pub enum BruteResult {
    Solutions(Vec<Root>),
    Overflow(SolveStatus),
}

impl BruteResult {
    pub fn count(&self) -> Option<usize> {
        match self {
            BruteResult::Solutions(s) => Some(s.len()),
            BruteResult::Overflow(_) => None,
        }
    }
}

/// All isolated real solutions in the configured box, via the verified
/// solver; anything short of a complete search is an overflow.
pub fn brute_solutions(cs: &ConstraintSystem, cfg: &SolveConfig) -> BruteResult {
    let report = solver::solve(&cs.to_poly_system(), cfg);
    match report.status {
        SolveStatus::Complete => BruteResult::Solutions(report.roots),
        other => BruteResult::Overflow(other),
    }
}
