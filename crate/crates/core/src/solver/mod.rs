//! Verified real-root isolation for small polynomial systems.
//!
//! Branch-and-prune over an axis-aligned box: each box is narrowed by
//! term-wise constraint propagation, tested with the Krawczyk operator, and
//! probed with a Gauss–Newton step that either certifies a nearby root by
//! epsilon-inflation or, when the Jacobian drops rank at a solution and the
//! solution set extends along a null direction, reports a continuum.

pub mod dense;
pub mod interval;

use std::collections::BTreeMap;
use std::sync::Once;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::matrix::{Matrix, Scalar};
use crate::poly::{Poly, PolySystem};
use crate::rational::{self, Rational};
use dense::Dense;
use interval::{box_contains, box_subset, max_width, midpoint, widest, Interval};

pub use dense::numeric_rank;

/// Off-center split point; avoids landing on the small rationals that
/// reduction instances like to have as roots.
const SPLIT_AT: f64 = 0.481_731_6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Bounds applied to every variable without an override.
    pub box_bounds: (f64, f64),
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub var_bounds: BTreeMap<usize, (f64, f64)>,
    pub split_budget: u64,
    pub residual_tol: f64,
    pub dedup_tol: f64,
    pub rank_tol: f64,
    pub seeds: Vec<u64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            box_bounds: (-10.0, 10.0),
            var_bounds: BTreeMap::new(),
            split_budget: 1_000_000,
            residual_tol: 1e-9,
            dedup_tol: 1e-6,
            rank_tol: 1e-8,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl SolveConfig {
    pub fn with_radius(radius: f64) -> Self {
        Self { box_bounds: (-radius, radius), ..Self::default() }
    }

    pub fn bounds_for(&self, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|k| self.var_bounds.get(&k).copied().unwrap_or(self.box_bounds)).collect()
    }

    /// The same configuration with every bound scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |(lo, hi): (f64, f64)| (lo * factor, hi * factor);
        Self {
            box_bounds: s(self.box_bounds),
            var_bounds: self.var_bounds.iter().map(|(&k, &b)| (k, s(b))).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let tols = [self.residual_tol, self.dedup_tol, self.rank_tol];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err("tolerances must be positive".into());
        }
        for (lo, hi) in std::iter::once(self.box_bounds).chain(self.var_bounds.values().copied()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("invalid bounds [{lo}, {hi}]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Complete,
    /// Undecided boxes shrank to a tiny cluster that could not be certified,
    /// typically a singular isolated root.
    SingularUnresolved,
    BudgetExhausted,
    ContinuumSuspected,
}

impl SolveStatus {
    fn severity(self) -> u8 {
        match self {
            SolveStatus::Complete => 0,
            SolveStatus::SingularUnresolved => 1,
            SolveStatus::BudgetExhausted => 2,
            SolveStatus::ContinuumSuspected => 3,
        }
    }

    fn worst(self, other: Self) -> Self {
        if other.severity() > self.severity() { other } else { self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Root {
    pub midpoint: Vec<f64>,
    pub radius: Vec<f64>,
    pub residual: f64,
    /// Existence is proven: square system, or an exact rational zero.
    pub certified: bool,
    /// Simplest rational point of the enclosure, when it is an exact zero.
    #[serde(serialize_with = "ser_opt_rationals")]
    pub exact: Option<Vec<Rational>>,
}

impl Root {
    pub fn lower(&self, k: usize) -> f64 {
        self.midpoint[k] - self.radius[k]
    }

    pub fn upper(&self, k: usize) -> f64 {
        self.midpoint[k] + self.radius[k]
    }

    /// Exact value when known, else the midpoint converted exactly.
    pub fn rational_point(&self) -> Vec<Rational> {
        self.exact
            .clone()
            .unwrap_or_else(|| self.midpoint.iter().map(|&x| rational::from_f64(x)).collect())
    }
}

fn ser_opt_rationals<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
    v.as_ref()
        .map(|xs| xs.iter().map(rational::format_rational).collect::<Vec<_>>())
        .serialize(s)
}

/// Evidence of a positive-dimensional solution component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumWitness {
    pub point: Vec<f64>,
    /// A second solution reached from `point + δ·v` for a null vector `v`.
    pub moved_to: Vec<f64>,
    pub jacobian_rank: usize,
    /// Variables with nonzero weight in some null vector.
    pub free_vars: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub boxes: usize,
}

impl Cluster {
    pub fn diameter(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub boxes: u64,
    pub krawczyk_successes: u64,
    pub chunks: usize,
    pub filtered_roots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub var_names: Vec<String>,
    pub bounds: Vec<(f64, f64)>,
    pub status: SolveStatus,
    pub roots: Vec<Root>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub continuum: Vec<ContinuumWitness>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unresolved: Vec<Cluster>,
    pub stats: SolveStats,
}

impl SolveReport {
    pub fn is_complete(&self) -> bool {
        self.status == SolveStatus::Complete
    }

    /// Variables that move along some detected continuum.
    pub fn free_vars(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.continuum.iter().flat_map(|w| w.free_vars.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Exact symbolic partial derivatives evaluated at `point`.
pub fn jacobian<T: Scalar>(system: &PolySystem, point: &[T]) -> Matrix<T> {
    let n = system.num_vars();
    Matrix::from_fn(system.equations.len(), n, |i, j| system.equations[i].derivative(&j).eval(point))
}

static POOL: Once = Once::new();

/// Caps the global worker pool from `SCMID_THREADS`, once per process.
pub fn configure_threads() {
    POOL.call_once(|| {
        if let Some(k) = std::env::var("SCMID_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
        }
    });
}

pub fn solve(system: &PolySystem, cfg: &SolveConfig) -> SolveReport {
    configure_threads();
    let n = system.num_vars();
    let bounds = cfg.bounds_for(n);
    let compiled = Compiled::new(system);
    let mut report = SolveReport {
        var_names: system.var_names.clone(),
        bounds: bounds.clone(),
        status: SolveStatus::Complete,
        roots: Vec::new(),
        continuum: Vec::new(),
        unresolved: Vec::new(),
        stats: SolveStats::default(),
    };
    if n == 0 {
        // Constant system: one (empty) root iff every equation is zero.
        if system.equations.iter().all(Poly::is_zero) {
            report.roots.push(Root {
                midpoint: Vec::new(),
                radius: Vec::new(),
                residual: 0.0,
                certified: true,
                exact: Some(Vec::new()),
            });
        }
        return report;
    }
    let global: Vec<Interval> = bounds.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect();
    let chunks = initial_chunks(&global, n.min(3));
    let per_chunk = (cfg.split_budget / chunks.len() as u64).max(1);
    let results: Vec<ChunkResult> = chunks
        .par_iter()
        .map(|chunk| Worker::new(&compiled, cfg, &global, chunk.clone(), per_chunk).run())
        .collect();

    report.stats.chunks = results.len();
    let mut leftovers = Vec::new();
    for r in results {
        report.stats.boxes += r.boxes;
        report.stats.krawczyk_successes += r.krawczyk_successes;
        report.stats.filtered_roots += r.filtered;
        if r.exhausted {
            report.status = report.status.worst(SolveStatus::BudgetExhausted);
        }
        if let Some(w) = r.continuum {
            report.status = report.status.worst(SolveStatus::ContinuumSuspected);
            report.continuum.push(w);
        }
        for root in r.roots {
            if !report.roots.iter().any(|q| close(&q.midpoint, &root.midpoint, cfg.dedup_tol)) {
                report.roots.push(root);
            }
        }
        leftovers.extend(r.leftovers);
    }
    report.roots.sort_by(|a, b| {
        a.midpoint.iter().zip(&b.midpoint).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    report.unresolved = cluster(&leftovers, cfg.dedup_tol);
    // Leftover clusters overlapping a certified root are that root's shadow.
    report.unresolved.retain(|c| !report.roots.iter().any(|r| cluster_touches(c, r, cfg.dedup_tol)));
    for c in &report.unresolved {
        let s = if c.diameter() > cfg.dedup_tol {
            SolveStatus::ContinuumSuspected
        } else {
            SolveStatus::SingularUnresolved
        };
        report.status = report.status.worst(s);
    }
    report
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn cluster_touches(c: &Cluster, r: &Root, tol: f64) -> bool {
    (0..c.lower.len()).all(|k| c.lower[k] - tol <= r.upper(k) && r.lower(k) <= c.upper[k] + tol)
}

fn initial_chunks(global: &[Interval], splits: usize) -> Vec<Vec<Interval>> {
    let mut chunks = vec![global.to_vec()];
    for k in 0..splits {
        chunks = chunks
            .into_iter()
            .flat_map(|b| {
                let (l, r) = b[k].split_at(SPLIT_AT);
                let mut bl = b.clone();
                let mut br = b;
                bl[k] = l;
                br[k] = r;
                [bl, br]
            })
            .collect();
    }
    chunks
}

/// Single-linkage grouping of boxes whose gaps are at most `tol`.
fn cluster(boxes: &[Vec<Interval>], tol: f64) -> Vec<Cluster> {
    let mut parent: Vec<usize> = (0..boxes.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let near = boxes[i]
                .iter()
                .zip(&boxes[j])
                .all(|(a, b)| a.lo - tol <= b.hi && b.lo - tol <= a.hi);
            if near {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Cluster> = BTreeMap::new();
    for (i, b) in boxes.iter().enumerate() {
        let root = find(&mut parent, i);
        let c = groups.entry(root).or_insert_with(|| Cluster {
            lower: b.iter().map(|x| x.lo).collect(),
            upper: b.iter().map(|x| x.hi).collect(),
            boxes: 0,
        });
        for (k, x) in b.iter().enumerate() {
            c.lower[k] = c.lower[k].min(x.lo);
            c.upper[k] = c.upper[k].max(x.hi);
        }
        c.boxes += 1;
    }
    groups.into_values().collect()
}

struct Term {
    coef: f64,
    coef_iv: Interval,
    vars: Vec<(usize, u32)>,
}

struct CPoly {
    terms: Vec<Term>,
}

impl CPoly {
    fn new(p: &Poly) -> Self {
        let terms = p
            .terms()
            .map(|(m, c)| Term {
                coef: rational::to_f64(c),
                coef_iv: Interval::from_rational(c),
                vars: m.factors().to_vec(),
            })
            .collect();
        Self { terms }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.vars.iter().fold(t.coef, |acc, &(v, e)| acc * x[v].powi(e as i32)))
            .sum()
    }

    fn term_iv(t: &Term, b: &[Interval]) -> Interval {
        t.vars.iter().fold(t.coef_iv, |acc, &(v, e)| acc * b[v].powi(e))
    }

    fn eval_iv(&self, b: &[Interval]) -> Interval {
        self.terms.iter().fold(Interval::point(0.0), |acc, t| acc + Self::term_iv(t, b))
    }
}

struct Compiled {
    n: usize,
    eqs: Vec<CPoly>,
    /// Per equation: the nonzero partial derivatives.
    jac: Vec<Vec<(usize, CPoly)>>,
    diseqs: Vec<CPoly>,
    exact: Vec<Poly>,
    coef_scale: Vec<f64>,
}

impl Compiled {
    fn new(system: &PolySystem) -> Self {
        let eqs: Vec<CPoly> = system.equations.iter().map(CPoly::new).collect();
        let jac = system
            .equations
            .iter()
            .map(|p| {
                p.vars()
                    .into_iter()
                    .map(|v| (v, CPoly::new(&p.derivative(&v))))
                    .filter(|(_, d)| !d.terms.is_empty())
                    .collect()
            })
            .collect();
        let coef_scale = eqs
            .iter()
            .map(|e| e.terms.iter().map(|t| t.coef.abs()).fold(1.0, f64::max))
            .collect();
        Self {
            n: system.num_vars(),
            eqs,
            jac,
            diseqs: system.disequalities.iter().map(CPoly::new).collect(),
            exact: system.equations.clone(),
            coef_scale,
        }
    }

    fn m(&self) -> usize {
        self.eqs.len()
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.eqs.iter().map(|e| e.eval(x)).collect()
    }

    /// Max residual, each equation scaled by its largest coefficient.
    fn scaled_residual(&self, x: &[f64]) -> f64 {
        self.eqs
            .iter()
            .zip(&self.coef_scale)
            .map(|(e, s)| e.eval(x).abs() / s)
            .fold(0.0, f64::max)
    }

    fn max_residual(&self, x: &[f64]) -> f64 {
        self.residual(x).iter().fold(0.0, |a, r| a.max(r.abs()))
    }

    fn jacobian(&self, x: &[f64]) -> Dense {
        let mut j = Dense::zeros(self.m(), self.n);
        for (i, row) in self.jac.iter().enumerate() {
            for (v, d) in row {
                *j.at_mut(i, *v) = d.eval(x);
            }
        }
        j
    }

    fn jacobian_iv(&self, b: &[Interval]) -> Vec<Vec<(usize, Interval)>> {
        self.jac.iter().map(|row| row.iter().map(|(v, d)| (*v, d.eval_iv(b))).collect()).collect()
    }

    /// Term-wise projection: for `t_k = c·v^e·R`, `v^e ∈ −(Σ_{l≠k} t_l)/(c·R)`.
    /// Returns false when some equation has no zero in the box.
    fn contract(&self, b: &mut [Interval]) -> bool {
        for _pass in 0..6 {
            let before: f64 = b.iter().map(Interval::width).sum();
            for eq in &self.eqs {
                let nt = eq.terms.len();
                if nt == 0 {
                    continue;
                }
                for k in 0..nt {
                    let t = &eq.terms[k];
                    if t.vars.is_empty() {
                        continue;
                    }
                    let mut others = Interval::point(0.0);
                    for (l, u) in eq.terms.iter().enumerate() {
                        if l != k {
                            others = others + CPoly::term_iv(u, b);
                        }
                    }
                    for (idx, &(v, e)) in t.vars.iter().enumerate() {
                        let mut rest = t.coef_iv;
                        for (jdx, &(w, f)) in t.vars.iter().enumerate() {
                            if jdx != idx {
                                rest = rest * b[w].powi(f);
                            }
                        }
                        let Some(target) = (-others).div(&rest) else { continue };
                        match target.root_within(e, &b[v]) {
                            Some(nv) => b[v] = nv,
                            None => return false,
                        }
                    }
                }
                if !eq.eval_iv(b).contains_zero() {
                    return false;
                }
            }
            let after: f64 = b.iter().map(Interval::width).sum();
            if after > 0.9 * before {
                break;
            }
        }
        true
    }

    fn excludes_zero(&self, b: &[Interval]) -> bool {
        self.eqs.iter().any(|e| !e.eval_iv(b).contains_zero())
    }

    fn newton(&self, x0: &[f64]) -> Option<Vec<f64>> {
        let mut x = x0.to_vec();
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let f = self.residual(&x);
            let r = f.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
            if !r.is_finite() {
                return None;
            }
            if r == 0.0 {
                break;
            }
            let j = self.jacobian(&x);
            let dx = dense::lstsq(&j, &f, 1e-12);
            let step = dx.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi -= d;
            }
            let scale = 1.0 + x.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
            if step <= 1e-15 * scale || (r >= last && r < 1e-13) {
                break;
            }
            last = r;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }

    fn krawczyk(&self, b: &[Interval], rank_tol: f64) -> Krawczyk {
        let n = self.n;
        let m = midpoint(b);
        let jm = self.jacobian(&m);
        let sv = dense::singular_values(&jm);
        if dense::rank_from_singular_values(&sv, rank_tol) < n {
            return Krawczyk::Fail(b.to_vec());
        }
        let y = dense::pseudo_inverse(&jm, 1e-12);
        let point: Vec<Interval> = m.iter().map(|&v| Interval::point(v)).collect();
        let fm: Vec<Interval> = self.eqs.iter().map(|e| e.eval_iv(&point)).collect();
        let jx = self.jacobian_iv(b);
        // C = I − Y·J(X), accumulated row by row.
        let mut k_box = Vec::with_capacity(n);
        for i in 0..n {
            let mut yf = Interval::point(0.0);
            let mut c_row = vec![Interval::point(0.0); n];
            c_row[i] = Interval::point(1.0);
            for (kk, row) in jx.iter().enumerate() {
                let yik = y.at(i, kk);
                if yik == 0.0 {
                    continue;
                }
                let yi = Interval::point(yik);
                yf = yf + yi * fm[kk];
                for &(v, d) in row {
                    c_row[v] = c_row[v] - yi * d;
                }
            }
            let mut ki = Interval::point(m[i]) - yf;
            for j in 0..n {
                ki = ki + c_row[j] * (b[j] - Interval::point(m[j]));
            }
            k_box.push(ki);
        }
        let mut inner = true;
        let mut cut = Vec::with_capacity(n);
        for (ki, bi) in k_box.iter().zip(b) {
            match ki.intersect(bi) {
                None => return Krawczyk::NoRoot,
                Some(c) => cut.push(c),
            }
            inner &= ki.interior_of(bi);
        }
        if inner { Krawczyk::Unique(k_box) } else { Krawczyk::Fail(cut) }
    }

    /// Iterates the operator inside a verified box to a tight enclosure.
    fn tighten(&self, mut b: Vec<Interval>, rank_tol: f64) -> Vec<Interval> {
        for _ in 0..8 {
            match self.krawczyk(&b, rank_tol) {
                Krawczyk::Unique(k) | Krawczyk::Fail(k) => {
                    let next: Option<Vec<Interval>> = k.iter().zip(&b).map(|(x, y)| x.intersect(y)).collect();
                    let Some(next) = next else { break };
                    let shrink = max_width(&next) < 0.5 * max_width(&b);
                    b = next;
                    if !shrink {
                        break;
                    }
                }
                Krawczyk::NoRoot => break,
            }
        }
        b
    }
}

enum Krawczyk {
    NoRoot,
    /// `K(X) ⊂ int X`: at most one zero in `X`, enclosed by the payload.
    Unique(Vec<Interval>),
    /// Undecided; payload is `K(X) ∩ X`.
    Fail(Vec<Interval>),
}

struct ChunkResult {
    roots: Vec<Root>,
    leftovers: Vec<Vec<Interval>>,
    continuum: Option<ContinuumWitness>,
    exhausted: bool,
    boxes: u64,
    krawczyk_successes: u64,
    filtered: usize,
}

enum Probe {
    Nothing,
    Region(Vec<Interval>),
    Continuum(ContinuumWitness),
}

struct Worker<'a> {
    sys: &'a Compiled,
    cfg: &'a SolveConfig,
    global: &'a [Interval],
    chunk: Vec<Interval>,
    budget: u64,
    regions: Vec<Vec<Interval>>,
    out: ChunkResult,
}

impl<'a> Worker<'a> {
    fn new(sys: &'a Compiled, cfg: &'a SolveConfig, global: &'a [Interval], chunk: Vec<Interval>, budget: u64) -> Self {
        Self {
            sys,
            cfg,
            global,
            chunk,
            budget,
            regions: Vec::new(),
            out: ChunkResult {
                roots: Vec::new(),
                leftovers: Vec::new(),
                continuum: None,
                exhausted: false,
                boxes: 0,
                krawczyk_successes: 0,
                filtered: 0,
            },
        }
    }

    fn run(mut self) -> ChunkResult {
        let mut stack = vec![self.chunk.clone()];
        while let Some(mut b) = stack.pop() {
            if self.out.boxes >= self.budget {
                self.out.exhausted = true;
                break;
            }
            self.out.boxes += 1;
            if !self.sys.contract(&mut b) {
                continue;
            }
            if self.regions.iter().any(|r| box_subset(&b, r)) {
                continue;
            }
            match self.sys.krawczyk(&b, self.cfg.rank_tol) {
                Krawczyk::NoRoot => continue,
                Krawczyk::Unique(_) => {
                    self.out.krawczyk_successes += 1;
                    self.verified(b.clone());
                    self.regions.push(b);
                    continue;
                }
                Krawczyk::Fail(cut) => b = cut,
            }
            match self.probe(&b) {
                Probe::Continuum(w) => {
                    self.out.continuum = Some(w);
                    break;
                }
                Probe::Region(r) if box_subset(&b, &r) => continue,
                _ => {}
            }
            let k = widest(&b);
            let tiny = 1e-10 * (1.0 + b[k].mag());
            if b[k].width() <= tiny {
                self.out.leftovers.push(b);
                continue;
            }
            let (l, r) = b[k].split_at(SPLIT_AT);
            let mut br = b.clone();
            b[k] = l;
            br[k] = r;
            stack.push(br);
            stack.push(b);
        }
        self.out
    }

    fn probe(&mut self, b: &[Interval]) -> Probe {
        let sys = self.sys;
        let Some(x) = sys.newton(&midpoint(b)) else { return Probe::Nothing };
        if sys.scaled_residual(&x) > self.cfg.residual_tol {
            return Probe::Nothing;
        }
        // Contraction can leave a box far thinner than Newton's accuracy.
        let near: Vec<Interval> = b.iter().map(|i| i.inflate(1e-9 * (1.0 + i.mag()), 1.0)).collect();
        if !box_contains(&near, &x) {
            return Probe::Nothing;
        }
        let jx = sys.jacobian(&x);
        let sv = dense::singular_values(&jx);
        let rank = dense::rank_from_singular_values(&sv, self.cfg.rank_tol);
        if rank == sys.n {
            let scale = 1.0 + x.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
            for rho in [max_width(b), max_width(b) / 16.0, 1e-6 * scale, 1e-9 * scale] {
                let cand: Vec<Interval> = x.iter().map(|&v| Interval::new(v - rho, v + rho).inflate(0.0, 0.0)).collect();
                match sys.krawczyk(&cand, self.cfg.rank_tol) {
                    Krawczyk::Unique(_) => {
                        self.out.krawczyk_successes += 1;
                        self.verified(cand.clone());
                        self.regions.push(cand.clone());
                        return Probe::Region(cand);
                    }
                    Krawczyk::NoRoot => return Probe::Nothing,
                    Krawczyk::Fail(_) => {}
                }
            }
            return Probe::Nothing;
        }
        if !box_contains(self.global, &x) {
            return Probe::Nothing;
        }
        self.tangent_test(&x, &jx, rank).map_or(Probe::Nothing, Probe::Continuum)
    }

    /// A continuum is claimed when stepping along a null direction and
    /// re-projecting lands on a different solution of the same rank.
    fn tangent_test(&self, x: &[f64], jx: &Dense, rank: usize) -> Option<ContinuumWitness> {
        let sys = self.sys;
        let null = dense::null_space(jx, rank);
        let scale = 1.0 + x.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        let delta = 1e-3 * scale;
        for v in &null {
            for sign in [1.0, -1.0] {
                let start: Vec<f64> = x.iter().zip(v).map(|(a, d)| a + sign * delta * d).collect();
                let Some(y) = sys.newton(&start) else { continue };
                if sys.scaled_residual(&y) > self.cfg.residual_tol {
                    continue;
                }
                let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let jy = sys.jacobian(&y);
                let ry = dense::rank_from_singular_values(&dense::singular_values(&jy), self.cfg.rank_tol);
                if dist >= 0.5 * delta && ry == rank {
                    let free_vars = (0..sys.n).filter(|&k| null.iter().any(|u| u[k].abs() > 1e-6)).collect();
                    return Some(ContinuumWitness {
                        point: x.to_vec(),
                        moved_to: y,
                        jacobian_rank: rank,
                        free_vars,
                    });
                }
            }
        }
        None
    }

    /// Records the zero inside a box where the operator proved uniqueness.
    fn verified(&mut self, b: Vec<Interval>) {
        let sys = self.sys;
        let enc = sys.tighten(b, self.cfg.rank_tol);
        if sys.excludes_zero(&enc) {
            return;
        }
        let mid = midpoint(&enc);
        if !box_contains(&self.chunk, &mid) {
            return;
        }
        let residual = sys.max_residual(&mid);
        for q in &sys.diseqs {
            let scale = q.terms.iter().map(|t| t.coef.abs()).fold(1.0, f64::max);
            if q.eval(&mid).abs() <= self.cfg.residual_tol * scale {
                self.out.filtered += 1;
                return;
            }
        }
        if self.out.roots.iter().any(|r| close(&r.midpoint, &mid, self.cfg.dedup_tol)) {
            return;
        }
        let exact = exact_point(&sys.exact, &enc);
        let certified = sys.m() == sys.n || exact.is_some();
        self.out.roots.push(Root {
            radius: enc.iter().map(Interval::rad).collect(),
            midpoint: mid,
            residual,
            certified,
            exact,
        });
    }
}

/// The simplest rational point of `enc`, if it zeroes every equation exactly.
fn exact_point(eqs: &[Poly], enc: &[Interval]) -> Option<Vec<Rational>> {
    let p: Vec<Rational> = enc
        .iter()
        .map(|x| rational::simplest_in(&rational::from_f64(x.lo), &rational::from_f64(x.hi)))
        .collect();
    eqs.iter().all(|e| e.eval(&p).is_zero()).then_some(p)
}

/// Residual of the system at an exact rational point.
pub fn exact_residual(system: &PolySystem, point: &[Rational]) -> Rational {
    system.max_residual(point)
}
