//! The parametrization map `(Λ, Ω) ↦ Σ` and the polynomial systems whose
//! solutions are its fibers.

use std::collections::BTreeMap;

use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::MixedGraph;
use crate::matrix::{self, Matrix, MatrixError, Scalar};
use crate::poly::{Monomial, Poly, PolySystem};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("{0} is not {1}x{1}")]
    Shape(&'static str, usize),
    #[error("lambda has a nonzero entry at ({0}, {1}) outside the directed edges")]
    LambdaPattern(usize, usize),
    #[error("omega has a nonzero entry at ({0}, {1}) outside the bidirected edges")]
    OmegaPattern(usize, usize),
    #[error("omega is not positive definite")]
    OmegaNotPd,
    #[error("sigma is not positive definite")]
    SigmaNotPd,
    #[error("I - Lambda is singular")]
    Singular,
    #[error("({0}, {1}) is not a directed edge")]
    NotAnEdge(usize, usize),
    #[error("malformed fiber document: {0}")]
    Malformed(String),
}

/// `(Λ, Ω)` with `Λ ∈ ℝ^D` and `Ω ∈ PD(B)`; matrices are 0-indexed, so
/// node `k` lives in row/column `k − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPoint<T> {
    pub lambda: Matrix<T>,
    pub omega: Matrix<T>,
}

impl<T: Scalar> ParamPoint<T> {
    pub fn new(g: &MixedGraph, lambda: Matrix<T>, omega: Matrix<T>) -> Result<Self, ScmError> {
        let p = Self { lambda, omega };
        p.validate(g)?;
        Ok(p)
    }

    pub fn validate(&self, g: &MixedGraph) -> Result<(), ScmError> {
        check_lambda(g, &self.lambda)?;
        let n = g.n();
        if self.omega.rows() != n || self.omega.cols() != n {
            return Err(ScmError::Shape("omega", n));
        }
        self.omega.check_symmetric()?;
        for i in 0..n {
            for j in 0..n {
                if i != j && !self.omega.get(i, j).is_zero() && !g.has_bidirected(i + 1, j + 1) {
                    return Err(ScmError::OmegaPattern(i + 1, j + 1));
                }
            }
        }
        if !matrix::is_positive_definite(&self.omega) {
            return Err(ScmError::OmegaNotPd);
        }
        if g.is_cyclic_mode() {
            inverse_of_i_minus(g, &self.lambda)?;
        }
        Ok(())
    }
}

/// Observed covariance: symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix<T>(Matrix<T>);

impl<T: Scalar> CovMatrix<T> {
    pub fn new(sigma: Matrix<T>) -> Result<Self, ScmError> {
        sigma.check_symmetric()?;
        if !matrix::is_positive_definite(&sigma) {
            return Err(ScmError::SigmaNotPd);
        }
        Ok(Self(sigma))
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn n(&self) -> usize {
        self.0.rows()
    }

    /// `σ_{i,j}` with 1-based node indices.
    pub fn entry(&self, i: usize, j: usize) -> &T {
        self.0.get(i - 1, j - 1)
    }

    pub fn to_rational(&self) -> CovMatrix<Rational> {
        CovMatrix(self.0.to_rational())
    }

    pub fn to_f64(&self) -> CovMatrix<f64> {
        CovMatrix(self.0.to_f64())
    }
}

pub fn check_lambda<T: Scalar>(g: &MixedGraph, lambda: &Matrix<T>) -> Result<(), ScmError> {
    let n = g.n();
    if lambda.rows() != n || lambda.cols() != n {
        return Err(ScmError::Shape("lambda", n));
    }
    for i in 0..n {
        for j in 0..n {
            if !lambda.get(i, j).is_zero() && !g.has_directed(i + 1, j + 1) {
                return Err(ScmError::LambdaPattern(i + 1, j + 1));
            }
        }
    }
    Ok(())
}

pub fn i_minus<T: Scalar>(lambda: &Matrix<T>) -> Matrix<T> {
    let n = lambda.rows();
    Matrix::from_fn(n, n, |i, j| {
        let d = if i == j { T::one() } else { T::zero() };
        d - lambda.get(i, j).clone()
    })
}

fn inverse_of_i_minus<T: Scalar>(g: &MixedGraph, lambda: &Matrix<T>) -> Result<Matrix<T>, ScmError> {
    let m = i_minus(lambda);
    let inv = if g.is_cyclic_mode() {
        matrix::general_inverse(&m)
    } else {
        matrix::unit_upper_inverse(&m)
    };
    inv.map_err(|e| match e {
        MatrixError::Singular => ScmError::Singular,
        other => ScmError::Matrix(other),
    })
}

/// `Σ = (I − Λ)^{-T} Ω (I − Λ)^{-1}`.
pub fn phi<T: Scalar>(g: &MixedGraph, p: &ParamPoint<T>) -> Result<CovMatrix<T>, ScmError> {
    p.validate(g)?;
    let inv = inverse_of_i_minus(g, &p.lambda)?;
    let sigma = matrix::congruence(&p.omega, &inv)?;
    Ok(CovMatrix(sigma))
}

/// The unique `Ω` with `φ(Λ, Ω) = Σ`, namely `(I − Λ)ᵀ Σ (I − Λ)`; its zero
/// pattern is not checked.
pub fn recover_omega<T: Scalar>(
    g: &MixedGraph,
    sigma: &CovMatrix<T>,
    lambda: &Matrix<T>,
) -> Result<Matrix<T>, ScmError> {
    check_lambda(g, lambda)?;
    if g.is_cyclic_mode() {
        inverse_of_i_minus(g, lambda)?;
    }
    Ok(matrix::congruence(sigma.matrix(), &i_minus(lambda))?)
}

/// Fiber equations: one per missing bidirected pair, over one variable per
/// directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSystem {
    pub graph: MixedGraph,
    pub sigma: Matrix<Rational>,
    /// `edges[k]` is the directed edge of variable `k`.
    pub edges: Vec<(usize, usize)>,
    /// `pairs[k]` is the missing pair of equation `k`.
    pub pairs: Vec<(usize, usize)>,
    pub system: PolySystem,
}

impl FiberSystem {
    pub fn var_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.iter().position(|&e| e == (i, j))
    }

    pub fn num_vars(&self) -> usize {
        self.edges.len()
    }

    pub fn equations(&self) -> &[Poly] {
        &self.system.equations
    }

    /// Solver point from a pattern-compliant `Λ`.
    pub fn point<T: Scalar>(&self, lambda: &Matrix<T>) -> Vec<T> {
        self.edges.iter().map(|&(i, j)| lambda.get(i - 1, j - 1).clone()).collect()
    }

    /// `Λ` from a solver point.
    pub fn lambda<T: Scalar>(&self, point: &[T]) -> Matrix<T> {
        let n = self.graph.n();
        let mut l = Matrix::zeros(n, n);
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            l.set(i - 1, j - 1, point[k].clone());
        }
        l
    }

    pub fn to_json(&self) -> FiberJson {
        let key = |k: usize| format!("{},{}", self.edges[k].0, self.edges[k].1);
        FiberJson {
            n: self.graph.n(),
            vars: (0..self.edges.len()).map(key).collect(),
            pairs: self.pairs.iter().map(|&(i, j)| [i, j]).collect(),
            equations: self
                .system
                .equations
                .iter()
                .map(|p| {
                    p.terms()
                        .map(|(m, c)| TermJson {
                            coef: rational::format_rational(c),
                            vars: m.factors().iter().map(|&(v, e)| (key(v), e)).collect(),
                        })
                        .collect()
                })
                .collect(),
            disequalities: self
                .system
                .disequalities
                .iter()
                .map(|p| {
                    p.terms()
                        .map(|(m, c)| TermJson {
                            coef: rational::format_rational(c),
                            vars: m.factors().iter().map(|&(v, e)| (key(v), e)).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermJson {
    pub coef: String,
    pub vars: Vec<(String, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberJson {
    pub n: usize,
    pub vars: Vec<String>,
    pub pairs: Vec<[usize; 2]>,
    pub equations: Vec<Vec<TermJson>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disequalities: Vec<Vec<TermJson>>,
}

impl FiberJson {
    /// Reads the document back as a plain solver system.
    pub fn to_system(&self) -> Result<PolySystem, ScmError> {
        let index: BTreeMap<&str, usize> = self.vars.iter().enumerate().map(|(k, v)| (v.as_str(), k)).collect();
        let read = |terms: &Vec<TermJson>| -> Result<Poly, ScmError> {
            let mut p = Poly::zero();
            for t in terms {
                let c = rational::parse_rational(&t.coef).map_err(|e| ScmError::Malformed(e.to_string()))?;
                let mut factors = Vec::new();
                for (name, e) in &t.vars {
                    let v = index
                        .get(name.as_str())
                        .ok_or_else(|| ScmError::Malformed(format!("unknown variable `{name}`")))?;
                    factors.push((*v, *e));
                }
                p.add_term(Monomial::from_factors(factors), c);
            }
            Ok(p)
        };
        let equations = self.equations.iter().map(read).collect::<Result<_, _>>()?;
        let disequalities = self.disequalities.iter().map(read).collect::<Result<_, _>>()?;
        let var_names = self.vars.iter().map(|v| format!("l_{}", v.replace(',', "_"))).collect();
        Ok(PolySystem { var_names, equations, disequalities })
    }
}

pub fn edge_var_name(i: usize, j: usize) -> String {
    format!("l_{i}_{j}")
}

/// Expands `[(I − Λ)ᵀ Σ (I − Λ)]_{u,v}` for every missing pair `{u, v}`:
/// `σ_uv − Σ_{a→u} λ_au σ_av − Σ_{b→v} σ_ub λ_bv + Σ λ_au σ_ab λ_bv`.
pub fn fiber_system<T: Scalar>(g: &MixedGraph, sigma: &CovMatrix<T>) -> FiberSystem {
    fiber_system_from_entries(g, sigma.matrix().to_rational())
}

/// Same expansion for an arbitrary square matrix; only the entries are read,
/// so certificates can inspect a `Σ` that fails validation.
pub fn fiber_system_from_entries(g: &MixedGraph, s: Matrix<Rational>) -> FiberSystem {
    let edges = g.edge_list();
    let var = |i: usize, j: usize| edges.iter().position(|&e| e == (i, j)).expect("edge");
    let sig = |i: usize, j: usize| s.get(i - 1, j - 1).clone();
    let pairs: Vec<(usize, usize)> = g.missing_pairs().iter().copied().collect();
    let mut equations = Vec::with_capacity(pairs.len());
    for &(u, v) in &pairs {
        let pu = g.parents(u).expect("node in range");
        let pv = g.parents(v).expect("node in range");
        let mut p = Poly::constant(sig(u, v));
        for &a in &pu {
            p.add_term(Monomial::var(var(a, u)), -sig(a, v));
        }
        for &b in &pv {
            p.add_term(Monomial::var(var(b, v)), -sig(u, b));
        }
        for &a in &pu {
            for &b in &pv {
                p.add_term(Monomial::from_factors([(var(a, u), 1), (var(b, v), 1)]), sig(a, b));
            }
        }
        equations.push(p);
    }
    let var_names = edges.iter().map(|&(i, j)| edge_var_name(i, j)).collect();
    let mut system = PolySystem::new(var_names, equations);
    if g.is_cyclic_mode() {
        system.disequalities.push(det_i_minus_lambda(g, &edges));
    }
    FiberSystem { graph: g.clone(), sigma: s, edges, pairs, system }
}

/// Membership of `Σ` in the image of `φ` is solvability of the fiber system.
pub fn feasibility_system<T: Scalar>(g: &MixedGraph, sigma: &CovMatrix<T>) -> FiberSystem {
    fiber_system(g, sigma)
}

/// `det(I − Λ)` as a polynomial in the edge variables, by Laplace expansion
/// over column subsets.
fn det_i_minus_lambda(g: &MixedGraph, edges: &[(usize, usize)]) -> Poly {
    let n = g.n();
    let entry = |i: usize, j: usize| -> Poly {
        let mut p = Poly::zero();
        if i == j {
            p.add_term(Monomial::one(), Rational::one());
        }
        if let Some(k) = edges.iter().position(|&e| e == (i + 1, j + 1)) {
            p.add_term(Monomial::var(k), -Rational::one());
        }
        p
    };
    // memo[mask] = minor of rows n−|mask|.. over the columns in mask.
    let mut memo: BTreeMap<u64, Poly> = BTreeMap::new();
    memo.insert(0, Poly::constant(Rational::one()));
    fn minor(
        mask: u64,
        n: usize,
        entry: &dyn Fn(usize, usize) -> Poly,
        memo: &mut BTreeMap<u64, Poly>,
    ) -> Poly {
        if let Some(p) = memo.get(&mask) {
            return p.clone();
        }
        let row = n - mask.count_ones() as usize;
        let mut acc = Poly::zero();
        let mut sign = 1i64;
        for col in 0..n {
            if mask & (1 << col) == 0 {
                continue;
            }
            let e = entry(row, col);
            if !e.is_zero() {
                let sub = minor(mask & !(1 << col), n, entry, memo);
                let term = &e * &sub;
                acc = if sign > 0 { &acc + &term } else { &acc - &term };
            }
            sign = -sign;
        }
        memo.insert(mask, acc.clone());
        acc
    }
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    minor(full, n, &entry, &mut memo)
}

/// Largest absolute equation value at `lambda`; exact in rational mode.
pub fn residual<T: Scalar>(fs: &FiberSystem, lambda: &Matrix<T>) -> T {
    fs.system.max_residual(&fs.point(lambda))
}

/// Distinct values of `λ_{i,j}` across fiber points, merged within `tol`.
pub fn edge_project(
    g: &MixedGraph,
    solutions: &[Matrix<f64>],
    edge: (usize, usize),
    tol: f64,
) -> Result<Vec<f64>, ScmError> {
    let (i, j) = edge;
    if !g.has_directed(i, j) {
        return Err(ScmError::NotAnEdge(i, j));
    }
    let mut values: Vec<f64> = solutions.iter().map(|l| *l.get(i - 1, j - 1)).collect();
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if out.last().is_none_or(|&w| (v - w).abs() > tol) {
            out.push(v);
        }
    }
    Ok(out)
}
