//! Identifiability deciders on top of the fiber solver: numerical, generic
//! (by sampling), per-edge, and feasibility of `Σ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::MixedGraph;
use crate::matrix::Matrix;
use crate::rational::{self, Rational};
use crate::scm::{self, CovMatrix, FiberSystem, ParamPoint};
use crate::solver::{self, dense, SolveConfig, SolveReport, SolveStatus};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum IdentifyError {
    #[error("({0}, {1}) is not a directed edge")]
    NotAnEdge(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "count")]
pub enum Multiplicity {
    Finite(usize),
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    Budget,
    /// Nothing found in the box, but something might exist outside it.
    Box,
    Numerical,
    /// The fiber came out empty although `Σ` was promised feasible.
    PromiseViolated,
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VerdictKind {
    Unique,
    Multiple { multiplicity: Multiplicity },
    Infeasible,
    Unknown { reason: UnknownReason },
}

impl VerdictKind {
    pub fn is_unique(&self) -> bool {
        matches!(self, VerdictKind::Unique)
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, VerdictKind::Unknown { .. })
    }

    pub fn multiple(count: usize) -> Self {
        VerdictKind::Multiple { multiplicity: Multiplicity::Finite(count) }
    }

    pub fn continuum() -> Self {
        VerdictKind::Multiple { multiplicity: Multiplicity::Continuum }
    }

    pub fn unknown(reason: UnknownReason) -> Self {
        VerdictKind::Unknown { reason }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    /// Fiber points as `Λ` matrices (midpoints of the verified boxes).
    #[serde(serialize_with = "ser_matrices")]
    pub fiber: Vec<Matrix<f64>>,
    pub report: SolveReport,
    /// Values of the queried edge, for edge verdicts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_values: Option<Vec<f64>>,
}

fn ser_matrices<S: serde::Serializer>(ms: &[Matrix<f64>], s: S) -> Result<S::Ok, S::Error> {
    ms.iter().map(|m| m.to_json()).collect::<Vec<_>>().serialize(s)
}

impl Verdict {
    /// Exact `Λ` of each root whose enclosure contains a rational zero.
    pub fn exact_lambdas(&self, fs: &FiberSystem) -> Vec<Option<Matrix<Rational>>> {
        self.report.roots.iter().map(|r| r.exact.as_ref().map(|x| fs.lambda(x))).collect()
    }
}

fn classify(report: &SolveReport) -> VerdictKind {
    match report.status {
        SolveStatus::ContinuumSuspected => VerdictKind::continuum(),
        SolveStatus::BudgetExhausted => VerdictKind::unknown(UnknownReason::Budget),
        SolveStatus::SingularUnresolved => VerdictKind::unknown(UnknownReason::Numerical),
        SolveStatus::Complete => match report.roots.len() {
            0 => VerdictKind::unknown(UnknownReason::PromiseViolated),
            1 => VerdictKind::Unique,
            k => VerdictKind::multiple(k),
        },
    }
}

fn fiber_points(fs: &FiberSystem, report: &SolveReport) -> Vec<Matrix<f64>> {
    report.roots.iter().map(|r| fs.lambda(&r.midpoint)).collect()
}

/// Counts fiber points of `Σ` in the box. `Σ` is assumed feasible; an empty
/// fiber is reported as `Unknown(promise_violated)`.
pub fn check_numeric(g: &MixedGraph, sigma: &CovMatrix<Rational>, cfg: &SolveConfig) -> Verdict {
    let fs = scm::fiber_system(g, sigma);
    numeric_on(&fs, cfg)
}

fn numeric_on(fs: &FiberSystem, cfg: &SolveConfig) -> Verdict {
    let report = solver::solve(&fs.system, cfg);
    Verdict { kind: classify(&report), fiber: fiber_points(fs, &report), report, edge_values: None }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityWitness {
    #[serde(serialize_with = "ser_matrix")]
    pub lambda: Matrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub omega: Matrix<f64>,
    /// False when the point comes from a continuum probe rather than a
    /// verified root box.
    pub verified: bool,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    m.to_json().serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Feasibility {
    Feasible { witness: FeasibilityWitness },
    /// No fiber point in the box, nor in the enlarged probe box.
    Infeasible { bounds: Vec<(f64, f64)>, probe_bounds: Vec<(f64, f64)> },
    Unknown { reason: UnknownReason },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub result: Feasibility,
    pub report: SolveReport,
}

/// Factor by which the box is enlarged before declaring `Infeasible`.
pub const PROBE_FACTOR: f64 = 100.0;

/// `max |σ_ij| / min σ_ii`, a rough bound on coefficient ratios the fiber
/// can produce.
fn sigma_spread(sigma: &CovMatrix<Rational>) -> f64 {
    let s = sigma.matrix().to_f64();
    let n = s.rows();
    let min_diag = (0..n).map(|i| *s.get(i, i)).fold(f64::INFINITY, f64::min);
    if n == 0 || !(min_diag > 0.0) {
        return 1.0;
    }
    (s.max_abs() / min_diag).max(1.0)
}

/// Decides `Σ ∈ im φ_G` by solving the fiber system. An empty box is only
/// reported as `Infeasible` if a box enlarged by `PROBE_FACTOR` times the
/// spread of `Σ` is empty too.
pub fn check_feasible(g: &MixedGraph, sigma: &CovMatrix<Rational>, cfg: &SolveConfig) -> FeasibilityReport {
    let fs = scm::feasibility_system(g, sigma);
    let report = solver::solve(&fs.system, cfg);
    let witness = |point: &[f64], verified: bool| -> Option<FeasibilityWitness> {
        let lambda = fs.lambda(point);
        let omega = scm::recover_omega(g, &sigma.to_f64(), &lambda).ok()?;
        Some(FeasibilityWitness { lambda, omega, verified })
    };
    if let Some(w) = report.roots.first().and_then(|r| witness(&r.midpoint, true)) {
        return FeasibilityReport { result: Feasibility::Feasible { witness: w }, report };
    }
    if let Some(w) = report.continuum.first().and_then(|c| witness(&c.point, false)) {
        return FeasibilityReport { result: Feasibility::Feasible { witness: w }, report };
    }
    let result = match report.status {
        SolveStatus::Complete => {
            let wide = cfg.scaled(PROBE_FACTOR * sigma_spread(sigma));
            let probe = solver::solve(&fs.system, &wide);
            if probe.is_complete() && probe.roots.is_empty() {
                Feasibility::Infeasible { bounds: report.bounds.clone(), probe_bounds: probe.bounds }
            } else {
                Feasibility::Unknown { reason: UnknownReason::Box }
            }
        }
        SolveStatus::BudgetExhausted => Feasibility::Unknown { reason: UnknownReason::Budget },
        SolveStatus::SingularUnresolved | SolveStatus::ContinuumSuspected => {
            Feasibility::Unknown { reason: UnknownReason::Numerical }
        }
    };
    FeasibilityReport { result, report }
}

fn edge_var(fs: &FiberSystem, edge: (usize, usize)) -> Result<usize, IdentifyError> {
    fs.var_index(edge.0, edge.1).ok_or(IdentifyError::NotAnEdge(edge.0, edge.1))
}

/// Identifiability of the single coefficient `λ_{i,j}` over the fiber.
pub fn check_edge_numeric(
    g: &MixedGraph,
    sigma: &CovMatrix<Rational>,
    edge: (usize, usize),
    cfg: &SolveConfig,
) -> Result<Verdict, IdentifyError> {
    let fs = scm::fiber_system(g, sigma);
    let k = edge_var(&fs, edge)?;
    Ok(edge_on(&fs, k, cfg))
}

fn edge_on(fs: &FiberSystem, k: usize, cfg: &SolveConfig) -> Verdict {
    let report = solver::solve(&fs.system, cfg);
    let mut values: Vec<f64> = report.roots.iter().map(|r| r.midpoint[k]).collect();
    let kind = match report.status {
        SolveStatus::Complete => VerdictKind::Unique,
        SolveStatus::ContinuumSuspected => {
            // The edge is fixed along the continuum only if no null direction
            // and no undecided cluster moves it.
            let pinned = !report.free_vars().contains(&k)
                && report.unresolved.iter().all(|c| c.upper[k] - c.lower[k] <= cfg.dedup_tol);
            if pinned {
                values.extend(report.continuum.iter().map(|w| w.point[k]));
                values.extend(report.unresolved.iter().map(|c| 0.5 * (c.lower[k] + c.upper[k])));
                VerdictKind::Unique
            } else {
                VerdictKind::unknown(UnknownReason::Continuum)
            }
        }
        _ => classify(&report),
    };
    let distinct = dedup_values(values, cfg.dedup_tol);
    let kind = match kind {
        VerdictKind::Unique => match distinct.len() {
            0 => VerdictKind::unknown(UnknownReason::PromiseViolated),
            1 => VerdictKind::Unique,
            c => VerdictKind::multiple(c),
        },
        other => other,
    };
    Verdict { kind, fiber: fiber_points(fs, &report), report, edge_values: Some(distinct) }
}

fn dedup_values(mut values: Vec<f64>, tol: f64) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if out.last().is_none_or(|&l| (v - l).abs() > tol * (1.0 + l.abs())) {
            out.push(v);
        }
    }
    out
}

/// Sampling grid for generic points: `±k/d` with `k ∈ 1..=5`, `d ∈ 1..=3`.
pub fn grid_value(rng: &mut impl Rng) -> Rational {
    let k = rng.gen_range(1..=5i64);
    let d = rng.gen_range(1..=3i64);
    let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
    rational::ratio(sign * k, d)
}

/// Pattern-compliant rational parameters from `seed`. `Ω` is made positive
/// definite by `ω_ii = 1 + Σ_j |ω_ij|`. Cyclic graphs resample until
/// `I − Λ` is invertible.
pub fn sample_point(g: &MixedGraph, seed: u64) -> ParamPoint<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.n();
    loop {
        let mut lambda = Matrix::<Rational>::zeros(n, n);
        for &(i, j) in g.directed() {
            lambda.set(i - 1, j - 1, grid_value(&mut rng));
        }
        let mut omega = Matrix::<Rational>::zeros(n, n);
        for &(i, j) in g.bidirected() {
            let w = grid_value(&mut rng);
            omega.set(i - 1, j - 1, w.clone());
            omega.set(j - 1, i - 1, w);
        }
        for i in 0..n {
            let off: Rational = (0..n).filter(|&j| j != i).map(|j| rational::abs(omega.get(i, j))).sum();
            omega.set(i, i, off + rational::int(1));
        }
        if g.is_cyclic_mode() {
            let det = scm::i_minus(&lambda).determinant().expect("square");
            if det == rational::int(0) {
                continue;
            }
        }
        return ParamPoint::new(g, lambda, omega).expect("sampled point is pattern compliant");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenericKind {
    GenericallyIdentifiable,
    NotGenericallyIdentifiable,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub seed: u64,
    pub verdict: VerdictKind,
    pub jacobian_rank: usize,
    /// For edge queries: whether `e_k` lies in the row space of the Jacobian.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_in_row_space: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub samples: usize,
    pub completed: usize,
    pub unique: usize,
    pub multiple: usize,
    /// Completed samples whose verdict matches the aggregate.
    pub agreeing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericVerdict {
    pub kind: GenericKind,
    /// Always "sampled": the verdict holds at the sampled points only.
    pub method: &'static str,
    pub num_params: usize,
    pub samples: Vec<Sample>,
    pub agreement: Agreement,
}

impl GenericVerdict {
    pub fn unanimous(&self) -> bool {
        self.agreement.completed == self.agreement.samples && self.agreement.agreeing == self.agreement.completed
    }
}

/// Generic identifiability by sampling one parameter point per seed in
/// `cfg.seeds`, counting the fiber there and taking the Jacobian rank.
pub fn check_generic(g: &MixedGraph, cfg: &SolveConfig) -> GenericVerdict {
    generic(g, None, cfg)
}

pub fn check_edge_generic(
    g: &MixedGraph,
    edge: (usize, usize),
    cfg: &SolveConfig,
) -> Result<GenericVerdict, IdentifyError> {
    if !g.has_directed(edge.0, edge.1) {
        return Err(IdentifyError::NotAnEdge(edge.0, edge.1));
    }
    Ok(generic(g, Some(edge), cfg))
}

fn generic(g: &MixedGraph, edge: Option<(usize, usize)>, cfg: &SolveConfig) -> GenericVerdict {
    let num_params = g.directed().len();
    let samples: Vec<Sample> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = sample_point(g, seed);
            let sigma = scm::phi(g, &p).expect("sampled point has invertible I - Lambda");
            let fs = scm::fiber_system(g, &sigma);
            let at = fs.point(&p.lambda.to_f64());
            let jac = Matrix::<f64>::from_fn(fs.system.equations.len(), num_params, |i, j| {
                fs.system.equations[i].derivative(&j).eval(&at)
            });
            let jacobian_rank = rank(&jac, cfg.rank_tol);
            let (verdict, edge_in_row_space) = match edge {
                None => (numeric_on(&fs, cfg).kind, None),
                Some((i, j)) => {
                    let k = fs.var_index(i, j).expect("edge checked");
                    let stacked = Matrix::from_fn(jac.rows() + 1, num_params, |r, c| {
                        if r < jac.rows() {
                            *jac.get(r, c)
                        } else if c == k {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    let in_row_space = rank(&stacked, cfg.rank_tol) == jacobian_rank;
                    let kind = match edge_on(&fs, k, cfg).kind {
                        // A null vector with weight on λ_{i,j} moves the edge
                        // along the continuum at this generic point.
                        VerdictKind::Unknown { reason: UnknownReason::Continuum } if !in_row_space => {
                            VerdictKind::continuum()
                        }
                        other => other,
                    };
                    (kind, Some(in_row_space))
                }
            };
            Sample { seed, verdict, jacobian_rank, edge_in_row_space }
        })
        .collect();
    aggregate(num_params, samples)
}

fn rank(m: &Matrix<f64>, tol: f64) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        0
    } else {
        dense::numeric_rank(m, tol)
    }
}

fn aggregate(num_params: usize, samples: Vec<Sample>) -> GenericVerdict {
    let completed: Vec<&Sample> = samples.iter().filter(|s| !s.verdict.is_unknown()).collect();
    let locally_ok = |s: &Sample| s.edge_in_row_space.unwrap_or(s.jacobian_rank == num_params);
    let unique = completed.iter().filter(|s| s.verdict.is_unique() && locally_ok(s)).count();
    let multiples: Vec<Multiplicity> = completed
        .iter()
        .filter_map(|s| match s.verdict {
            VerdictKind::Multiple { multiplicity } => Some(multiplicity),
            _ => None,
        })
        .collect();
    let majority_structure = multiples
        .iter()
        .map(|m| multiples.iter().filter(|x| *x == m).count())
        .max()
        .unwrap_or(0);
    let (kind, agreeing) = if !completed.is_empty() && unique == completed.len() && 2 * completed.len() > samples.len() {
        (GenericKind::GenericallyIdentifiable, unique)
    } else if 2 * majority_structure > completed.len() && majority_structure > 0 {
        (GenericKind::NotGenericallyIdentifiable, majority_structure)
    } else {
        (GenericKind::Inconclusive, 0)
    };
    GenericVerdict {
        kind,
        method: "sampled",
        num_params,
        agreement: Agreement {
            samples: samples.len(),
            completed: completed.len(),
            unique,
            multiple: multiples.len(),
            agreeing,
        },
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_graph, ParseOptions};
    use crate::rational::{int, ratio};

    fn graph(text: &str) -> MixedGraph {
        parse_graph(text, ParseOptions::default()).unwrap().graph
    }

    fn iv() -> MixedGraph {
        graph("1 -> 2; 2 -> 3; 2 <-> 3")
    }

    #[test]
    fn iv_recovers_ratio() {
        let g = iv();
        let p = sample_point(&g, 7);
        let sigma = scm::phi(&g, &p).unwrap();
        let v = check_numeric(&g, &sigma, &SolveConfig::default());
        assert_eq!(v.kind, VerdictKind::Unique);
        let fs = scm::fiber_system(&g, &sigma);
        let l = v.exact_lambdas(&fs)[0].clone().unwrap();
        assert_eq!(l.get(1, 2), &(sigma.entry(1, 3) / sigma.entry(1, 2)));
        assert_eq!(l, p.lambda);
    }

    #[test]
    fn bow_is_a_continuum() {
        let g = graph("1 -> 2; 1 <-> 2");
        let sigma = scm::phi(&g, &sample_point(&g, 1)).unwrap();
        let v = check_numeric(&g, &sigma, &SolveConfig::default());
        assert_eq!(v.kind, VerdictKind::continuum());
        let e = check_edge_numeric(&g, &sigma, (1, 2), &SolveConfig::default()).unwrap();
        assert_eq!(e.kind, VerdictKind::unknown(UnknownReason::Continuum));
        assert!(matches!(check_feasible(&g, &sigma, &SolveConfig::default()).result, Feasibility::Feasible { .. }));
    }

    #[test]
    fn independent_pair_is_infeasible_with_correlation() {
        let g = MixedGraph::new(2, vec![], vec![], false).unwrap();
        let sigma = CovMatrix::new(Matrix::from_rows(vec![vec![int(1), ratio(1, 2)], vec![ratio(1, 2), int(1)]]).unwrap()).unwrap();
        let f = check_feasible(&g, &sigma, &SolveConfig::default());
        assert!(matches!(f.result, Feasibility::Infeasible { .. }), "{:?}", f.result);
        assert!(f.report.is_complete());
        assert_eq!(
            check_numeric(&g, &sigma, &SolveConfig::default()).kind,
            VerdictKind::unknown(UnknownReason::PromiseViolated)
        );
    }

    #[test]
    fn outside_the_box_is_unknown() {
        let g = graph("1 -> 2");
        let lambda = Matrix::from_fn(2, 2, |i, j| if (i, j) == (0, 1) { int(5000) } else { int(0) });
        let p = ParamPoint::new(&g, lambda, Matrix::identity(2)).unwrap();
        let sigma = scm::phi(&g, &p).unwrap();
        let f = check_feasible(&g, &sigma, &SolveConfig::default());
        assert_eq!(f.result, Feasibility::Unknown { reason: UnknownReason::Box });
    }

    #[test]
    fn generic_suite() {
        let cfg = SolveConfig::default();
        let v = check_generic(&iv(), &cfg);
        assert_eq!(v.kind, GenericKind::GenericallyIdentifiable);
        assert!(v.unanimous());
        assert!(v.samples.iter().all(|s| s.jacobian_rank == 2));
        assert_eq!(check_generic(&graph("1 -> 2; 1 <-> 2"), &cfg).kind, GenericKind::NotGenericallyIdentifiable);
        assert_eq!(check_generic(&graph("1 -> 2"), &cfg).kind, GenericKind::GenericallyIdentifiable);
        assert_eq!(check_edge_generic(&iv(), (2, 3), &cfg).unwrap().kind, GenericKind::GenericallyIdentifiable);
        assert_eq!(
            check_edge_generic(&graph("1 -> 2; 1 <-> 2"), (1, 2), &cfg).unwrap().kind,
            GenericKind::NotGenericallyIdentifiable
        );
        assert_eq!(check_edge_generic(&iv(), (1, 3), &cfg), Err(IdentifyError::NotAnEdge(1, 3)));
    }

    #[test]
    fn samples_are_seeded() {
        let g = graph("1 -> 2; 2 -> 3; 1 <-> 3");
        assert_eq!(sample_point(&g, 3), sample_point(&g, 3));
        let p = sample_point(&g, 3);
        assert!(crate::matrix::is_positive_definite(&p.omega));
    }

    #[test]
    fn aggregation_needs_a_strict_majority() {
        let s = |verdict| Sample { seed: 0, verdict, jacobian_rank: 1, edge_in_row_space: None };
        let v = aggregate(
            1,
            vec![s(VerdictKind::multiple(2)), s(VerdictKind::multiple(3)), s(VerdictKind::Unique)],
        );
        assert_eq!(v.kind, GenericKind::Inconclusive);
        let v = aggregate(1, vec![s(VerdictKind::continuum()), s(VerdictKind::continuum()), s(VerdictKind::Unique)]);
        assert_eq!(v.kind, GenericKind::NotGenericallyIdentifiable);
        let v = aggregate(1, vec![s(VerdictKind::Unique), s(VerdictKind::unknown(UnknownReason::Budget))]);
        assert_eq!(v.kind, GenericKind::Inconclusive);
    }
}
