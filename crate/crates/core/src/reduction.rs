//! Compiler from quadratic constraint systems to SCM instances whose fiber
//! is in bijection with the solution set.
//!
//! Node layout: variable nodes `1..=n` feed the root `r = n + 1`; each
//! linear constraint adds one node `i`, each multiplication adds
//! `i′, i, j′, j` with edges `i′ → i` and `j′ → j`. Every pair of nodes is
//! bidirected except the gadget pairs listed in [`Gadget::missing_pairs`].
//! `Σ` has `ℓ` (the node count) on the diagonal and entries in `[−1, 1]`
//! elsewhere, so it is strictly diagonally dominant.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{GraphJson, MixedGraph, ParseOptions};
use crate::matrix::{self, AnyMatrix, Matrix, MatrixJson, Scalar};
use crate::poly::Poly;
use crate::quad::{self, Constraint, ConstraintSystem, SystemDoc};
use crate::rational::{self, Rational};
use crate::scm::{self, CovMatrix, FiberSystem, ParamPoint};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReductionError {
    #[error("sigma entry ({0}, {1}) written twice")]
    DoubleWrite(usize, usize),
    #[error("assignment does not satisfy the source system")]
    NotASolution,
    #[error("fiber residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("witness check failed: {0}")]
    Witness(String),
    #[error(transparent)]
    Quad(#[from] quad::QuadError),
    #[error(transparent)]
    Scm(#[from] scm::ScmError),
    #[error("malformed bundle: {0}")]
    Bundle(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Gadget {
    /// `Σ α_ℓ x_ℓ = β` stored at node `node`.
    Affine {
        constraint: usize,
        node: usize,
        /// Factor applied to `(α, β)` to bring entries into `[−1, 1]`.
        #[serde(with = "rational_string")]
        scale: Rational,
    },
    /// `x_product = x_other · x_copied`: `λ_{i′,i}` copies `x_copied`,
    /// `λ_{j′,j}` copies `λ_{i′,i}`, and the `(r, j)` pair multiplies.
    Mul {
        constraint: usize,
        i_prime: usize,
        i: usize,
        j_prime: usize,
        j: usize,
        product: usize,
        other: usize,
        copied: usize,
        /// Sign `s` with `λ_{i′,i} = s·x_copied` on the fiber, found by the
        /// symbolic self-check.
        copy_orientation: i8,
    },
}

impl Gadget {
    pub fn missing_pairs(&self, root: usize) -> Vec<(usize, usize)> {
        match *self {
            Gadget::Affine { node, .. } => vec![(root, node)],
            Gadget::Mul { i, j, .. } => vec![(root, i), (i, j), (root, j)],
        }
    }
}

mod rational_string {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::rational::{self, Rational};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational::format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        rational::parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionLayout {
    pub graph: MixedGraph,
    pub root: usize,
    /// Variable `x_ℓ` is read off edge `(var_nodes[ℓ−1], root)`.
    pub var_nodes: Vec<usize>,
    pub gadgets: Vec<Gadget>,
    pub node_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedInstance {
    pub layout: ReductionLayout,
    pub sigma: Matrix<Rational>,
    pub source: ConstraintSystem,
}

/// `1 + n + k + 4(m − k)` for `k` linear constraints out of `m`.
pub fn expected_node_count(cs: &ConstraintSystem) -> usize {
    let k = cs.affine_count();
    1 + cs.n + k + 4 * (cs.constraints.len() - k)
}

struct SigmaBuilder {
    entries: BTreeMap<(usize, usize), Rational>,
}

impl SigmaBuilder {
    /// Writes `σ_{u,v} = σ_{v,u}` (1-based), refusing a second write.
    fn set(&mut self, u: usize, v: usize, value: Rational) -> Result<(), ReductionError> {
        let key = (u.min(v), u.max(v));
        if self.entries.insert(key, value).is_some() {
            return Err(ReductionError::DoubleWrite(key.0, key.1));
        }
        Ok(())
    }
}

pub fn compile(cs: &ConstraintSystem) -> Result<ReducedInstance, ReductionError> {
    cs.validate()?;
    let n = cs.n;
    let root = n + 1;
    let ell = expected_node_count(cs);
    let mut next = root + 1;
    let mut directed: Vec<(usize, usize)> = (1..=n).map(|v| (v, root)).collect();
    let mut sigma = SigmaBuilder { entries: BTreeMap::new() };
    let mut gadgets = Vec::with_capacity(cs.constraints.len());

    for (idx, c) in cs.constraints.iter().enumerate() {
        match c {
            Constraint::Mul { a, b, c } => {
                let (ip, i, jp, j) = (next, next + 1, next + 2, next + 3);
                next += 4;
                directed.push((ip, i));
                directed.push((jp, j));
                let (p, q, s) = (*c, *a, *b);
                // Copy: (r, i) reads λ_{i′,i} − x_s.
                sigma.set(root, i, Rational::zero())?;
                sigma.set(root, ip, -Rational::one())?;
                for l in 1..=n {
                    sigma.set(l, ip, Rational::zero())?;
                    sigma.set(l, i, if l == s { Rational::one() } else { Rational::zero() })?;
                }
                // Chain: (i, j) reads λ_{j′,j} − λ_{i′,i}.
                sigma.set(i, j, Rational::zero())?;
                sigma.set(ip, jp, Rational::zero())?;
                sigma.set(ip, j, Rational::one())?;
                sigma.set(i, jp, -Rational::one())?;
                // Product: (r, j) reads x_q·λ_{j′,j} − x_p.
                sigma.set(root, j, Rational::zero())?;
                sigma.set(root, jp, Rational::zero())?;
                for l in 1..=n {
                    sigma.set(l, j, if l == p { Rational::one() } else { Rational::zero() })?;
                    sigma.set(l, jp, if l == q { Rational::one() } else { Rational::zero() })?;
                }
                gadgets.push(Gadget::Mul {
                    constraint: idx,
                    i_prime: ip,
                    i,
                    j_prime: jp,
                    j,
                    product: p,
                    other: q,
                    copied: s,
                    copy_orientation: 1,
                });
            }
            other => {
                let (alpha, beta) = other.as_affine(n).expect("linear constraint");
                let big = alpha.iter().chain(std::iter::once(&beta)).map(|x| x.abs()).max().unwrap_or_else(Rational::zero);
                let scale = if big > Rational::one() { big.recip() } else { Rational::one() };
                let i = next;
                next += 1;
                sigma.set(root, i, &beta * &scale)?;
                for (l, a) in alpha.iter().enumerate() {
                    sigma.set(l + 1, i, a * &scale)?;
                }
                gadgets.push(Gadget::Affine { constraint: idx, node: i, scale });
            }
        }
    }
    debug_assert_eq!(next - 1, ell);

    let missing: Vec<(usize, usize)> = gadgets.iter().flat_map(|g| g.missing_pairs(root)).collect();
    let mut bidirected = Vec::new();
    for u in 1..=ell {
        for v in u + 1..=ell {
            if !missing.contains(&(u, v)) {
                bidirected.push((u, v));
            }
        }
    }
    let graph = MixedGraph::new(ell, directed, bidirected, false).map_err(|e| ReductionError::Bundle(e.to_string()))?;
    let lval = rational::int(ell as i64);
    let sigma_m = Matrix::from_fn(ell, ell, |a, b| {
        if a == b {
            lval.clone()
        } else {
            sigma.entries.get(&(a.min(b) + 1, a.max(b) + 1)).cloned().unwrap_or_else(Rational::zero)
        }
    });
    let mut ri = ReducedInstance {
        layout: ReductionLayout { graph, root, var_nodes: (1..=n).collect(), gadgets, node_count: ell },
        sigma: sigma_m,
        source: cs.clone(),
    };
    // Fix copy orientations from the actual fiber equations.
    let fs = ri.fiber();
    let checks = gadget_checks(&ri.layout, &fs);
    for (g, chk) in ri.layout.gadgets.iter_mut().zip(&checks) {
        if let (Gadget::Mul { copy_orientation, .. }, Some(sign)) = (g, chk.orientation) {
            *copy_orientation = sign;
        }
    }
    Ok(ri)
}

impl ReducedInstance {
    pub fn cov(&self) -> CovMatrix<Rational> {
        CovMatrix::new(self.sigma.clone()).expect("compiled sigma is positive definite")
    }

    pub fn fiber(&self) -> FiberSystem {
        scm::fiber_system_from_entries(&self.layout.graph, self.sigma.clone())
    }

    pub fn var_edge(&self, l: usize) -> (usize, usize) {
        (self.layout.var_nodes[l - 1], self.layout.root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GadgetCheck {
    pub constraint: usize,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    orientation: Option<i8>,
}

/// Compares each missing-pair equation with the gadget's intended relation,
/// up to a nonzero constant factor.
pub fn gadget_checks(layout: &ReductionLayout, fs: &FiberSystem) -> Vec<GadgetCheck> {
    let r = layout.root;
    let eq_of = |u: usize, v: usize| -> Option<&Poly> {
        fs.pairs.iter().position(|&p| p == (u.min(v), u.max(v))).map(|k| &fs.system.equations[k])
    };
    let var = |i: usize, j: usize| -> Poly { fs.var_index(i, j).map_or_else(Poly::zero, Poly::var) };
    let x = |l: usize| var(layout.var_nodes[l - 1], r);
    let n = layout.var_nodes.len();
    let mut out = Vec::new();
    for g in &layout.gadgets {
        match g {
            Gadget::Affine { constraint, node, .. } => {
                let c = constraint_from_fs(fs, r, *node, n);
                let passed = eq_of(r, *node).is_some_and(|e| {
                    // β − Σ α_ℓ x_ℓ with (α, β) read back from Σ itself.
                    let mut want = Poly::constant(c.1.clone());
                    for (l, a) in c.0.iter().enumerate() {
                        want = &want - &x(l + 1).scale(a);
                    }
                    same_up_to_factor(e, &want)
                });
                out.push(GadgetCheck {
                    constraint: *constraint,
                    passed,
                    detail: format!("affine node {node}"),
                    orientation: None,
                });
            }
            Gadget::Mul { constraint, i_prime, i, j_prime, j, product, other, copied, .. } => {
                let copy = eq_of(r, *i);
                let copy_plus = &var(*i_prime, *i) - &x(*copied);
                let copy_minus = &var(*i_prime, *i) + &x(*copied);
                let orientation = match copy {
                    Some(e) if same_up_to_factor(e, &copy_plus) => Some(1),
                    Some(e) if same_up_to_factor(e, &copy_minus) => Some(-1),
                    _ => None,
                };
                let s = Rational::from_integer(orientation.unwrap_or(1).into());
                let chain_ok = eq_of(*i, *j).is_some_and(|e| same_up_to_factor(e, &(&var(*j_prime, *j) - &var(*i_prime, *i))));
                // With λ_{j′,j} = s·x_copied, the product pair must read x_p − s·x_q·λ_{j′,j}.
                let prod_want = &x(*product) - &(&x(*other) * &var(*j_prime, *j)).scale(&s);
                let prod_ok = eq_of(r, *j).is_some_and(|e| same_up_to_factor(e, &prod_want));
                let passed = orientation.is_some() && chain_ok && prod_ok;
                out.push(GadgetCheck {
                    constraint: *constraint,
                    passed,
                    detail: format!(
                        "mul nodes ({i_prime},{i},{j_prime},{j}): copy={} chain={} product={}",
                        orientation.map_or("fail".to_string(), |o| format!("{o:+}")),
                        chain_ok,
                        prod_ok
                    ),
                    orientation,
                });
            }
        }
    }
    out
}

/// `(α, β)` as stored in `Σ` for an affine node; compared against the source
/// in [`verify`].
fn constraint_from_fs(fs: &FiberSystem, r: usize, node: usize, n: usize) -> (Vec<Rational>, Rational) {
    let s = &fs.sigma;
    let alpha = (1..=n).map(|l| s.get(l - 1, node - 1).clone()).collect();
    (alpha, s.get(r - 1, node - 1).clone())
}

fn same_up_to_factor(a: &Poly, b: &Poly) -> bool {
    a.proportional_to(b).is_some()
}

/// The fiber point of a satisfying assignment: `λ_{ℓ,r} = a_ℓ` and
/// `λ_{i′,i} = λ_{j′,j} = s·a_copied` per multiplication gadget.
pub fn embed_witness(ri: &ReducedInstance, a: &[Rational]) -> Result<ParamPoint<Rational>, ReductionError> {
    if !quad::is_satisfied(&ri.source, a, 0.0) {
        return Err(ReductionError::NotASolution);
    }
    let ell = ri.layout.node_count;
    let mut lambda = Matrix::<Rational>::zeros(ell, ell);
    for (l, v) in a.iter().enumerate() {
        let (i, j) = ri.var_edge(l + 1);
        lambda.set(i - 1, j - 1, v.clone());
    }
    for g in &ri.layout.gadgets {
        if let Gadget::Mul { i_prime, i, j_prime, j, copied, copy_orientation, .. } = g {
            let v = &a[copied - 1] * Rational::from_integer((*copy_orientation).into());
            lambda.set(i_prime - 1, i - 1, v.clone());
            lambda.set(j_prime - 1, j - 1, v);
        }
    }
    let sigma = ri.cov();
    let omega = scm::recover_omega(&ri.layout.graph, &sigma, &lambda)?;
    let p = ParamPoint::new(&ri.layout.graph, lambda, omega).map_err(|e| ReductionError::Witness(e.to_string()))?;
    if scm::phi(&ri.layout.graph, &p)?.matrix() != &ri.sigma {
        return Err(ReductionError::Witness("phi(witness) differs from sigma".into()));
    }
    Ok(p)
}

/// `a_ℓ := λ_{ℓ,r}` for a fiber point within `tol` of solving the system.
pub fn pull_back<T: Scalar>(ri: &ReducedInstance, lambda: &Matrix<T>, tol: f64) -> Result<Vec<T>, ReductionError> {
    let fs = ri.fiber();
    let res = scm::residual(&fs, lambda).to_f64();
    if res > tol {
        return Err(ReductionError::Residual(res));
    }
    Ok((1..=ri.source.n)
        .map(|l| {
            let (i, j) = ri.var_edge(l);
            lambda.get(i - 1, j - 1).clone()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_sha256: String,
    pub root: usize,
    pub node_count: usize,
    pub num_vars: usize,
    pub num_constraints: usize,
    pub num_linear: usize,
    pub gadgets: Vec<Gadget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub graph: GraphJson,
    pub sigma: MatrixJson,
    pub source: SystemDoc,
    pub provenance: Provenance,
}

pub fn source_hash(cs: &ConstraintSystem) -> String {
    let text = serde_json::to_string(&cs.to_json()).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn bundle(ri: &ReducedInstance) -> Bundle {
    Bundle {
        graph: ri.layout.graph.to_json(),
        sigma: AnyMatrix::Rational(ri.sigma.clone()).to_json(),
        source: ri.source.to_json(),
        provenance: Provenance {
            source_sha256: source_hash(&ri.source),
            root: ri.layout.root,
            node_count: ri.layout.node_count,
            num_vars: ri.source.n,
            num_constraints: ri.source.constraints.len(),
            num_linear: ri.source.affine_count(),
            gadgets: ri.layout.gadgets.clone(),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Certificate {
    pub passed: bool,
    pub checks: Vec<Check>,
}

/// Re-runs every proof obligation on a bundle: node count, `Σ` shape and
/// dominance, Cholesky, agreement with a fresh compilation, gadget
/// equations, and optionally the embedding of a witness.
pub fn verify(b: &Bundle, witness: Option<&[Rational]>) -> Certificate {
    let mut checks = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        checks.push(Check { name: name.to_string(), passed, detail });
    };
    let source = match serde_json::to_string(&b.source)
        .map_err(|e| e.to_string())
        .and_then(|t| ConstraintSystem::from_json(&t).map_err(|e| e.to_string()))
    {
        Ok(cs) => cs,
        Err(e) => {
            push("source", false, e);
            return finish(checks);
        }
    };
    let hash = source_hash(&source);
    push("source_hash", hash == b.provenance.source_sha256, hash);
    let graph = match crate::graph::from_json(&b.graph, ParseOptions::default()) {
        Ok(p) if p.labels.iter().enumerate().all(|(k, l)| *l == (k + 1).to_string()) => p.graph,
        Ok(_) => {
            push("graph", false, "graph is not in topological order".into());
            return finish(checks);
        }
        Err(e) => {
            push("graph", false, e.to_string());
            return finish(checks);
        }
    };
    let sigma = match AnyMatrix::from_json(&b.sigma) {
        Ok(m) => m.to_rational(),
        Err(e) => {
            push("sigma", false, e.to_string());
            return finish(checks);
        }
    };
    let ell = expected_node_count(&source);
    push(
        "node_count",
        graph.n() == ell && b.provenance.node_count == ell && sigma.rows() == ell,
        format!("1 + n + k + 4(m - k) = {ell}, graph has {}", graph.n()),
    );
    if sigma.rows() != graph.n() || !sigma.is_square() {
        return finish(checks);
    }
    let lval = rational::int(ell as i64);
    let diag_ok = (0..sigma.rows()).all(|i| sigma.get(i, i) == &lval);
    push("diagonal", diag_ok, format!("all diagonal entries equal {ell}"));
    let off_ok = (0..sigma.rows()).all(|i| (0..sigma.cols()).all(|j| i == j || sigma.get(i, j).abs() <= Rational::one()));
    push("off_diagonal_bounded", off_ok, "off-diagonal entries lie in [-1, 1]".into());
    let symmetric = sigma.is_symmetric();
    push("symmetric", symmetric, String::new());
    let dominant = matrix::is_strictly_diagonally_dominant(&sigma).unwrap_or(false);
    push("strictly_diagonally_dominant", dominant, String::new());
    let pd = symmetric && matrix::is_positive_definite(&sigma);
    push("cholesky", pd, "exact LDL^T with positive pivots".into());

    match compile(&source) {
        Ok(fresh) => {
            let same_graph = fresh.layout.graph == graph;
            let same_sigma = fresh.sigma == sigma;
            let same_gadgets = fresh.layout.gadgets == b.provenance.gadgets;
            push(
                "recompile",
                same_graph && same_sigma && same_gadgets,
                format!("graph={same_graph} sigma={same_sigma} gadgets={same_gadgets}"),
            );
            let layout = ReductionLayout { graph: graph.clone(), ..fresh.layout.clone() };
            let fs = scm::fiber_system_from_entries(&graph, sigma.clone());
            let gc = gadget_checks(&layout, &fs);
            let mut all = true;
            for (g, c) in layout.gadgets.iter().zip(&gc) {
                let mut ok = c.passed;
                // Linear gadgets must also encode the source constraint.
                if let Gadget::Affine { constraint, node, scale } = g {
                    let (alpha, beta) = source.constraints[*constraint].as_affine(source.n).expect("linear");
                    let (sa, sb) = constraint_from_fs(&fs, layout.root, *node, source.n);
                    ok &= sa.iter().zip(&alpha).all(|(x, y)| x == &(y * scale)) && sb == &beta * scale;
                }
                all &= ok;
            }
            let failed: Vec<String> = gc.iter().filter(|c| !c.passed).map(|c| c.detail.clone()).collect();
            push("gadget_equations", all, if failed.is_empty() { format!("{} gadgets", gc.len()) } else { failed.join("; ") });
            if let Some(a) = witness {
                let ri = ReducedInstance { layout, sigma: sigma.clone(), source: source.clone() };
                match embed_witness(&ri, a) {
                    Ok(p) => {
                        let res = scm::residual(&fs, &p.lambda);
                        push("witness_embedding", res.is_zero(), format!("fiber residual {}", rational::format_rational(&res)));
                    }
                    Err(e) => push("witness_embedding", false, e.to_string()),
                }
            }
        }
        Err(e) => push("recompile", false, e.to_string()),
    }
    finish(checks)
}

fn finish(checks: Vec<Check>) -> Certificate {
    Certificate { passed: checks.iter().all(|c| c.passed), checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::int;

    fn x2_eq_1() -> ConstraintSystem {
        ConstraintSystem::new(2, vec![Constraint::Mul { a: 1, b: 1, c: 2 }, Constraint::One { a: 2 }]).unwrap()
    }

    #[test]
    fn node_count_formula() {
        let cs = ConstraintSystem::new(
            2,
            vec![Constraint::Affine { coeffs: vec![int(1), int(1)], rhs: int(1) }, Constraint::Mul { a: 1, b: 2, c: 1 }],
        )
        .unwrap();
        let ri = compile(&cs).unwrap();
        assert_eq!(ri.layout.node_count, 8);
        assert_eq!(ri.layout.graph.n(), 8);
        assert_eq!(ri.layout.graph.parents(3).unwrap(), vec![1, 2]);
    }

    #[test]
    fn sigma_certificate() {
        let ri = compile(&x2_eq_1()).unwrap();
        assert!(matrix::is_strictly_diagonally_dominant(&ri.sigma).unwrap());
        assert!(matrix::is_positive_definite(&ri.sigma));
        assert!((0..ri.sigma.rows()).all(|i| ri.sigma.get(i, i) == &int(ri.layout.node_count as i64)));
    }

    #[test]
    fn bottom_layer_has_outdegree_one() {
        let ri = compile(&quad::plant_solution(&x2_eq_1())).unwrap();
        let g = &ri.layout.graph;
        let mut outdeg = vec![0; g.n() + 1];
        for &(i, _) in g.directed() {
            outdeg[i] += 1;
        }
        let heads: Vec<usize> = g.directed().iter().map(|&(_, j)| j).collect();
        for v in 1..=g.n() {
            if !heads.contains(&v) {
                assert!(outdeg[v] <= 1, "node {v}");
            }
        }
    }

    #[test]
    fn gadget_self_checks_pass() {
        let ri = compile(&quad::plant_solution(&x2_eq_1())).unwrap();
        let checks = gadget_checks(&ri.layout, &ri.fiber());
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        for g in &ri.layout.gadgets {
            if let Gadget::Mul { copy_orientation, .. } = g {
                assert_eq!(*copy_orientation, 1);
            }
        }
    }

    #[test]
    fn witness_round_trip() {
        let cs = x2_eq_1();
        let ri = compile(&cs).unwrap();
        for a in [[int(1), int(1)], [int(-1), int(1)]] {
            let p = embed_witness(&ri, &a).unwrap();
            assert!(scm::residual(&ri.fiber(), &p.lambda).is_zero());
            assert_eq!(pull_back(&ri, &p.lambda, 0.0).unwrap(), a.to_vec());
        }
        assert_eq!(embed_witness(&ri, &[int(2), int(4)]), Err(ReductionError::NotASolution));
    }

    #[test]
    fn zero_witness_gives_sigma_as_omega() {
        let cs = ConstraintSystem::new(1, vec![Constraint::Affine { coeffs: vec![int(1)], rhs: int(0) }]).unwrap();
        let ri = compile(&cs).unwrap();
        let p = embed_witness(&ri, &[int(0)]).unwrap();
        assert!(p.lambda.entries().iter().all(Zero::is_zero));
        assert_eq!(p.omega, ri.sigma);
    }

    #[test]
    fn fresh_bundle_verifies_and_corruption_is_caught() {
        let ri = compile(&x2_eq_1()).unwrap();
        let b = bundle(&ri);
        let cert = verify(&b, Some(&[int(-1), int(1)]));
        assert!(cert.passed, "{cert:?}");
        let mut bad = b.clone();
        let root = bad.provenance.root;
        // Flip the copy entry σ_{r,i′} of the multiplication gadget.
        let Gadget::Mul { i_prime, .. } = bad.provenance.gadgets[0] else { panic!() };
        bad.sigma.entries[root - 1][i_prime - 1] = serde_json::json!("1");
        bad.sigma.entries[i_prime - 1][root - 1] = serde_json::json!("1");
        let cert = verify(&bad, None);
        assert!(!cert.passed);
        let failed: Vec<&str> = cert.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failed.contains(&"gadget_equations") && failed.contains(&"recompile"), "{failed:?}");
    }

    #[test]
    fn double_writes_are_rejected() {
        let mut b = SigmaBuilder { entries: BTreeMap::new() };
        b.set(1, 2, int(0)).unwrap();
        assert_eq!(b.set(2, 1, int(1)), Err(ReductionError::DoubleWrite(1, 2)));
    }
}
