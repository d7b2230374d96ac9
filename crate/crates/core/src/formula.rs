//! Quantified real-arithmetic sentences for positive definiteness,
//! feasibility and identifiability, rendered as SMT-LIB 2 or plain text.
//!
//! Nothing here is solved internally; the sentences are meant for external
//! quantifier elimination or nonlinear real arithmetic back ends.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_traits::{One, Signed};
use thiserror::Error;

use crate::graph::MixedGraph;
use crate::poly::Poly;
use crate::rational::{self, Rational};
use crate::scm::CovMatrix;

pub type Expr = Poly<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    fn smt(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ne => "distinct",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    fn text(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ne => "≠",
            Rel::Lt => "<",
            Rel::Le => "≤",
            Rel::Gt => ">",
            Rel::Ge => "≥",
        }
    }

    fn from_smt(s: &str) -> Option<Self> {
        Some(match s {
            "=" => Rel::Eq,
            "distinct" => Rel::Ne,
            "<" => Rel::Lt,
            "<=" => Rel::Le,
            ">" => Rel::Gt,
            ">=" => Rel::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantifier {
    Exists,
    Forall,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Cmp(Rel, Expr, Expr),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Quant(Quantifier, Vec<String>, Box<Formula>),
    /// Application of a defined or declared predicate.
    Call(String, Vec<Expr>),
}

impl Formula {
    pub fn and(mut parts: Vec<Formula>) -> Formula {
        parts.retain(|f| *f != Formula::True);
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().expect("one part"),
            _ => Formula::And(parts),
        }
    }

    pub fn or(mut parts: Vec<Formula>) -> Formula {
        parts.retain(|f| *f != Formula::False);
        match parts.len() {
            0 => Formula::False,
            1 => parts.pop().expect("one part"),
            _ => Formula::Or(parts),
        }
    }

    pub fn quant(q: Quantifier, vars: Vec<String>, body: Formula) -> Formula {
        if vars.is_empty() { body } else { Formula::Quant(q, vars, Box::new(body)) }
    }

    pub fn eq(a: Expr, b: Expr) -> Formula {
        Formula::Cmp(Rel::Eq, a, b)
    }

    fn collect_vars(&self, bound: &mut Vec<String>, free: &mut BTreeSet<String>, scope: &[String]) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Cmp(_, a, b) => {
                for v in a.vars().into_iter().chain(b.vars()) {
                    if !scope.contains(&v) {
                        free.insert(v);
                    }
                }
            }
            Formula::Call(_, args) => {
                for v in args.iter().flat_map(|a| a.vars()) {
                    if !scope.contains(&v) {
                        free.insert(v);
                    }
                }
            }
            Formula::Not(f) => f.collect_vars(bound, free, scope),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(bound, free, scope)),
            Formula::Implies(a, b) => {
                a.collect_vars(bound, free, scope);
                b.collect_vars(bound, free, scope);
            }
            Formula::Quant(_, vars, body) => {
                bound.extend(vars.iter().cloned());
                let mut inner = scope.to_vec();
                inner.extend(vars.iter().cloned());
                body.collect_vars(bound, free, &inner);
            }
        }
    }

    /// Variables bound by quantifiers anywhere in the formula.
    pub fn bound_vars(&self) -> Vec<String> {
        let mut bound = Vec::new();
        self.collect_vars(&mut bound, &mut BTreeSet::new(), &[]);
        bound
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut free = BTreeSet::new();
        self.collect_vars(&mut Vec::new(), &mut free, &[]);
        free
    }

    fn calls(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Call(name, _) => {
                out.insert(name.clone());
            }
            Formula::Not(f) | Formula::Quant(_, _, f) => f.calls(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.calls(out)),
            Formula::Implies(a, b) => {
                a.calls(out);
                b.calls(out);
            }
            _ => {}
        }
    }
}

/// `name(params) := body`, emitted as an SMT-LIB `define-fun`.
#[derive(Debug, Clone, PartialEq)]
pub struct Definition {
    pub name: String,
    pub params: Vec<String>,
    pub body: Formula,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantifiedSentence {
    /// What the sentence states, in words.
    pub provenance: String,
    /// Parameters left symbolic (declared constants).
    pub free: Vec<String>,
    pub definitions: Vec<Definition>,
    /// Uninterpreted `dim_ge_*` predicates; see [`DIM_SCHEMA`].
    pub dims: Vec<String>,
    pub body: Formula,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("unbound variable {0}")]
    Unbound(String),
    #[error("undefined predicate {0}")]
    Undefined(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Documentation attached to every `dim_ge_*` predicate.
pub const DIM_SCHEMA: &str = "dim_ge_X(d) holds iff the semi-algebraic set X has dimension >= d, \
i.e. some d-element coordinate subset I has a projection of X onto the coordinates in I \
with nonempty interior. No executable semantics is given here.";

impl QuantifiedSentence {
    /// Leading quantifier blocks of the body.
    pub fn prefix(&self) -> Vec<(Quantifier, Vec<String>)> {
        let mut out: Vec<(Quantifier, Vec<String>)> = Vec::new();
        let mut f = &self.body;
        while let Formula::Quant(q, vars, body) = f {
            match out.last_mut() {
                Some((last, vs)) if last == q => vs.extend(vars.iter().cloned()),
                _ => out.push((*q, vars.clone())),
            }
            f = body;
        }
        out
    }

    /// The quantifier-free part under the prefix.
    pub fn matrix(&self) -> &Formula {
        let mut f = &self.body;
        while let Formula::Quant(_, _, body) = f {
            f = body;
        }
        f
    }

    pub fn num_bound_vars(&self) -> usize {
        self.body.bound_vars().len()
    }

    pub fn is_existential(&self) -> bool {
        let p = self.prefix();
        p.iter().all(|(q, _)| *q == Quantifier::Exists) && self.matrix().bound_vars().is_empty()
    }

    pub fn validate(&self) -> Result<(), FormulaError> {
        let mut known: BTreeSet<String> = self.dims.iter().cloned().collect();
        for d in &self.definitions {
            let free = d.body.free_vars();
            if let Some(v) = free.iter().find(|v| !d.params.contains(v) && !self.free.contains(v)) {
                return Err(FormulaError::Unbound(v.clone()));
            }
            let mut calls = BTreeSet::new();
            d.body.calls(&mut calls);
            if let Some(c) = calls.iter().find(|c| !known.contains(*c)) {
                return Err(FormulaError::Undefined(c.clone()));
            }
            known.insert(d.name.clone());
        }
        if let Some(v) = self.body.free_vars().iter().find(|v| !self.free.contains(v)) {
            return Err(FormulaError::Unbound(v.clone()));
        }
        let mut calls = BTreeSet::new();
        self.body.calls(&mut calls);
        if let Some(c) = calls.iter().find(|c| !known.contains(*c)) {
            return Err(FormulaError::Undefined(c.clone()));
        }
        Ok(())
    }

    /// `∀x φ` becomes `∃x ¬φ`, with `¬(a ⇒ b)` written as `a ∧ ¬b`.
    pub fn negated(&self) -> QuantifiedSentence {
        let vars: Vec<String> = self.prefix().into_iter().flat_map(|(_, v)| v).collect();
        let body = match self.matrix() {
            Formula::Implies(a, b) => Formula::and(vec![(**a).clone(), Formula::Not(b.clone())]),
            m => Formula::Not(Box::new(m.clone())),
        };
        QuantifiedSentence {
            provenance: format!("negation of: {}", self.provenance),
            free: self.free.clone(),
            definitions: self.definitions.clone(),
            dims: self.dims.clone(),
            body: Formula::quant(Quantifier::Exists, vars, body),
        }
    }

    pub fn to_smtlib(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "(set-info :source |{}|)", self.provenance);
        let logic = if self.dims.is_empty() { "NRA" } else { "ALL" };
        let _ = writeln!(out, "(set-logic {logic})");
        if !self.is_existential() {
            out.push_str("; Quantifier alternation or universal quantifiers: needs a back end with\n");
            out.push_str("; quantifier support for nonlinear real arithmetic.\n");
        }
        for v in &self.free {
            let _ = writeln!(out, "(declare-const {v} Real)");
        }
        for d in &self.dims {
            for line in wrap(DIM_SCHEMA, 76) {
                let _ = writeln!(out, "; {line}");
            }
            let _ = writeln!(out, "(declare-fun {d} (Real) Bool)");
        }
        for d in &self.definitions {
            let params: Vec<String> = d.params.iter().map(|p| format!("({p} Real)")).collect();
            let _ = writeln!(out, "(define-fun {} ({}) Bool", d.name, params.join(" "));
            smt_formula(&d.body, 1, &mut out);
            out.push_str(")\n");
        }
        out.push_str("(assert\n");
        smt_formula(&self.body, 1, &mut out);
        out.push_str(")\n(check-sat)\n");
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.provenance);
        if !self.free.is_empty() {
            let _ = writeln!(out, "parameters: {}", self.free.join(", "));
        }
        for d in &self.dims {
            let _ = writeln!(out, "{d}(d): uninterpreted; {DIM_SCHEMA}");
        }
        for d in &self.definitions {
            let _ = writeln!(out, "{}({}) :=", d.name, d.params.join(", "));
            text_formula(&d.body, 1, &mut out);
        }
        out.push_str("sentence:\n");
        text_formula(&self.body, 1, &mut out);
        out
    }
}

fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = vec![String::new()];
    for word in text.split_whitespace() {
        let cur = lines.last_mut().expect("nonempty");
        if !cur.is_empty() && cur.len() + 1 + word.len() > width {
            lines.push(word.to_string());
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(word);
        }
    }
    lines
}

fn smt_numeral(c: &Rational) -> String {
    let mag = c.abs();
    let body = if mag.is_integer() {
        format!("{}.0", mag.numer())
    } else {
        format!("(/ {}.0 {}.0)", mag.numer(), mag.denom())
    };
    if c.is_negative() { format!("(- {body})") } else { body }
}

pub fn smt_expr(p: &Expr) -> String {
    let terms: Vec<String> = p
        .terms()
        .map(|(m, c)| {
            let mut factors: Vec<String> = Vec::new();
            for (v, e) in m.factors() {
                for _ in 0..*e {
                    factors.push(v.clone());
                }
            }
            if factors.is_empty() {
                return smt_numeral(c);
            }
            let prod = if factors.len() == 1 { factors[0].clone() } else { format!("(* {})", factors.join(" ")) };
            if c.is_one() {
                prod
            } else if (-c).is_one() {
                format!("(- {prod})")
            } else {
                format!("(* {} {})", smt_numeral(c), factors.join(" "))
            }
        })
        .collect();
    match terms.len() {
        0 => "0.0".to_string(),
        1 => terms[0].clone(),
        _ => format!("(+ {})", terms.join(" ")),
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn smt_formula(f: &Formula, level: usize, out: &mut String) {
    indent(level, out);
    match f {
        Formula::True => out.push_str("true\n"),
        Formula::False => out.push_str("false\n"),
        Formula::Cmp(rel, a, b) => {
            let _ = writeln!(out, "({} {} {})", rel.smt(), smt_expr(a), smt_expr(b));
        }
        Formula::Call(name, args) => {
            let args: Vec<String> = args.iter().map(smt_expr).collect();
            let _ = writeln!(out, "({name} {})", args.join(" "));
        }
        Formula::Not(g) => {
            out.push_str("(not\n");
            smt_formula(g, level + 1, out);
            indent(level, out);
            out.push_str(")\n");
        }
        Formula::And(fs) | Formula::Or(fs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "(and\n" } else { "(or\n" });
            for g in fs {
                smt_formula(g, level + 1, out);
            }
            indent(level, out);
            out.push_str(")\n");
        }
        Formula::Implies(a, b) => {
            out.push_str("(=>\n");
            smt_formula(a, level + 1, out);
            smt_formula(b, level + 1, out);
            indent(level, out);
            out.push_str(")\n");
        }
        Formula::Quant(q, vars, body) => {
            let kw = if *q == Quantifier::Exists { "exists" } else { "forall" };
            let decls: Vec<String> = vars.iter().map(|v| format!("({v} Real)")).collect();
            let _ = writeln!(out, "({kw} ({})", decls.join(" "));
            smt_formula(body, level + 1, out);
            indent(level, out);
            out.push_str(")\n");
        }
    }
}

fn text_formula(f: &Formula, level: usize, out: &mut String) {
    indent(level, out);
    match f {
        Formula::True => out.push_str("true\n"),
        Formula::False => out.push_str("false\n"),
        Formula::Cmp(rel, a, b) => {
            let _ = writeln!(out, "{a} {} {b}", rel.text());
        }
        Formula::Call(name, args) => {
            let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(out, "{name}({})", args.join(", "));
        }
        Formula::Not(g) => {
            out.push_str("¬\n");
            text_formula(g, level + 1, out);
        }
        Formula::And(fs) | Formula::Or(fs) => {
            out.push_str(if matches!(f, Formula::And(_)) { "∧\n" } else { "∨\n" });
            for g in fs {
                text_formula(g, level + 1, out);
            }
        }
        Formula::Implies(a, b) => {
            out.push_str("⇒\n");
            text_formula(a, level + 1, out);
            text_formula(b, level + 1, out);
        }
        Formula::Quant(q, vars, body) => {
            let sym = if *q == Quantifier::Exists { "∃" } else { "∀" };
            let _ = writeln!(out, "{sym} {}:", vars.join(", "));
            text_formula(body, level + 1, out);
        }
    }
}

// ---------------------------------------------------------------------------
// Builders

fn var(name: &str) -> Expr {
    Poly::var(name.to_string())
}

fn konst(c: Rational) -> Expr {
    Poly::constant(c)
}

fn name(prefix: &str, i: usize, j: usize) -> String {
    format!("{prefix}_{i}_{j}")
}

type ExprMatrix = Vec<Vec<Expr>>;

/// Symmetric matrix with a variable at `(i, j)` iff `keep(i, j)` (1-based,
/// `i ≤ j`), zero elsewhere; returns the matrix and its variables.
fn symmetric_vars(n: usize, prefix: &str, keep: impl Fn(usize, usize) -> bool) -> (ExprMatrix, Vec<String>) {
    let mut vars = Vec::new();
    let mut m = vec![vec![Poly::zero(); n]; n];
    for i in 1..=n {
        for j in i..=n {
            if keep(i, j) {
                let v = name(prefix, i, j);
                m[i - 1][j - 1] = var(&v);
                m[j - 1][i - 1] = var(&v);
                vars.push(v);
            }
        }
    }
    (m, vars)
}

fn lambda_vars(g: &MixedGraph, prefix: &str) -> (ExprMatrix, Vec<String>) {
    let n = g.n();
    let mut m = vec![vec![Poly::zero(); n]; n];
    let mut vars = Vec::new();
    for &(i, j) in g.directed() {
        let v = name(prefix, i, j);
        m[i - 1][j - 1] = var(&v);
        vars.push(v);
    }
    (m, vars)
}

fn omega_vars(g: &MixedGraph, prefix: &str) -> (ExprMatrix, Vec<String>) {
    symmetric_vars(g.n(), prefix, |i, j| i == j || g.has_bidirected(i, j))
}

/// `(I − Λ)ᵀ S (I − Λ)`.
fn congruence(s: &ExprMatrix, lambda: &ExprMatrix) -> ExprMatrix {
    let n = s.len();
    let iml: ExprMatrix = (0..n)
        .map(|a| {
            (0..n)
                .map(|i| {
                    let id = if a == i { konst(Rational::one()) } else { Poly::zero() };
                    &id - &lambda[a][i]
                })
                .collect()
        })
        .collect();
    let mut out = vec![vec![Poly::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Poly::zero();
            for a in 0..n {
                if iml[a][i].is_zero() {
                    continue;
                }
                for b in 0..n {
                    if iml[b][j].is_zero() || s[a][b].is_zero() {
                        continue;
                    }
                    acc = &acc + &(&(&iml[a][i] * &s[a][b]) * &iml[b][j]);
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// One equation per matrix entry.
fn matrix_eq(lhs: &ExprMatrix, rhs: &ExprMatrix) -> Vec<Formula> {
    let n = lhs.len();
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(Formula::eq(lhs[i][j].clone(), rhs[i][j].clone()));
        }
    }
    out
}

/// `A = L·Lᵀ ∧ ⋀_i (L_ii > 0 ∧ ⋀_{j>i} L_ij = 0)` plus `A_ij = 0` for
/// off-diagonal pairs outside `B` (skipped where `A_ij` is already the
/// constant zero). Returns the auxiliary variables and the conjuncts.
fn cholesky_constraints(
    a: &ExprMatrix,
    prefix: &str,
    in_b: impl Fn(usize, usize) -> bool,
) -> (Vec<String>, Vec<Formula>) {
    let n = a.len();
    let mut aux = Vec::with_capacity(n * n);
    for i in 1..=n {
        for j in 1..=n {
            aux.push(name(prefix, i, j));
        }
    }
    let l = |i: usize, j: usize| var(&name(prefix, i, j));
    let mut out = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            let mut llt = Poly::zero();
            for k in 1..=n {
                llt = &llt + &(&l(i, k) * &l(j, k));
            }
            out.push(Formula::eq(a[i - 1][j - 1].clone(), llt));
        }
    }
    for i in 1..=n {
        out.push(Formula::Cmp(Rel::Gt, l(i, i), Poly::zero()));
        for j in i + 1..=n {
            out.push(Formula::eq(l(i, j), Poly::zero()));
        }
    }
    for i in 1..=n {
        for j in 1..=n {
            if i != j && !in_b(i.min(j), i.max(j)) && !a[i - 1][j - 1].is_zero() {
                out.push(Formula::eq(a[i - 1][j - 1].clone(), Poly::zero()));
            }
        }
    }
    (aux, out)
}

/// `∃M: (I − Λ)·M = I`, for cyclic graphs.
fn invertibility(lambda: &ExprMatrix, prefix: &str) -> (Vec<String>, Vec<Formula>) {
    let n = lambda.len();
    let mut aux = Vec::new();
    let mut out = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            aux.push(name(prefix, i, j));
        }
    }
    for i in 1..=n {
        for j in 1..=n {
            let mut acc = Poly::zero();
            for k in 1..=n {
                let id = if i == k { konst(Rational::one()) } else { Poly::zero() };
                let e = &id - &lambda[i - 1][k - 1];
                acc = &acc + &(&e * &var(&name(prefix, k, j)));
            }
            let rhs = if i == j { konst(Rational::one()) } else { Poly::zero() };
            out.push(Formula::eq(acc, rhs));
        }
    }
    (aux, out)
}

fn bidirected_set(n: usize, b: &[(usize, usize)]) -> impl Fn(usize, usize) -> bool + '_ {
    move |i, j| i != j && i <= n && j <= n && b.iter().any(|&(u, v)| (u.min(v), u.max(v)) == (i, j))
}

/// Membership of the symbolic matrix `A = (a_i_j)` in `PD(B)`: the Cholesky
/// form `∃L` when `existential`, else `∀x (x ≠ 0 ⇒ xᵀAx > 0)`; both with
/// `A_ij = 0` for off-diagonal pairs outside `B`.
pub fn emit_pd_membership(n: usize, b: &[(usize, usize)], existential: bool) -> QuantifiedSentence {
    let mut free = Vec::with_capacity(n * n);
    let mut a = vec![vec![Poly::zero(); n]; n];
    for i in 1..=n {
        for j in 1..=n {
            let v = name("a", i, j);
            a[i - 1][j - 1] = var(&v);
            free.push(v);
        }
    }
    let in_b = bidirected_set(n, b);
    let body = if existential {
        let (aux, conj) = cholesky_constraints(&a, "l", &in_b);
        Formula::quant(Quantifier::Exists, aux, Formula::and(conj))
    } else {
        let xs: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
        let nonzero = Formula::or(xs.iter().map(|x| Formula::Cmp(Rel::Ne, var(x), Poly::zero())).collect());
        let mut quad = Poly::zero();
        for i in 1..=n {
            for j in 1..=n {
                quad = &quad + &(&(&a[i - 1][j - 1] * &var(&xs[i - 1])) * &var(&xs[j - 1]));
            }
        }
        let pos = Formula::Implies(Box::new(nonzero), Box::new(Formula::Cmp(Rel::Gt, quad, Poly::zero())));
        let mut parts = vec![Formula::quant(Quantifier::Forall, xs, pos)];
        for i in 1..=n {
            for j in 1..=n {
                if i != j && !in_b(i.min(j), i.max(j)) {
                    parts.push(Formula::eq(a[i - 1][j - 1].clone(), Poly::zero()));
                }
            }
        }
        Formula::and(parts)
    };
    let form = if existential { "Cholesky form A = L*L^T, L lower triangular with positive diagonal" } else { "quadratic form x^T A x > 0 for all x != 0" };
    QuantifiedSentence {
        provenance: format!("A in PD(B) for n = {n}, B = {}; {form}", pairs_text(b)),
        free,
        definitions: Vec::new(),
        dims: Vec::new(),
        body,
    }
}

fn pairs_text(b: &[(usize, usize)]) -> String {
    let items: Vec<String> = b.iter().map(|(i, j)| format!("{i}<->{j}")).collect();
    format!("{{{}}}", items.join(", "))
}

fn sigma_consts(sigma: &CovMatrix<Rational>) -> ExprMatrix {
    let n = sigma.n();
    (0..n).map(|i| (0..n).map(|j| konst(sigma.matrix().get(i, j).clone())).collect()).collect()
}

/// Fiber constraints for one copy `(Λ, Ω)` with prefix suffix `k`:
/// `Ω = (I − Λ)ᵀ Σ (I − Λ)`, `Ω ∈ PD(B)` via Cholesky, and invertibility of
/// `I − Λ` in cyclic mode.
struct FiberCopy {
    lambda: ExprMatrix,
    lambda_vars: Vec<String>,
    omega_vars: Vec<String>,
    aux: Vec<String>,
    constraints: Vec<Formula>,
}

fn fiber_copy(g: &MixedGraph, s: &ExprMatrix, tag: &str) -> FiberCopy {
    let (lambda, lambda_vars) = lambda_vars(g, &format!("l{tag}"));
    let (omega, omega_vars) = omega_vars(g, &format!("w{tag}"));
    let (mut aux, mut constraints) = cholesky_constraints(&omega, &format!("c{tag}"), |i, j| g.has_bidirected(i, j));
    constraints.extend(matrix_eq(&omega, &congruence(s, &lambda)));
    if g.is_cyclic_mode() {
        let (m, inv) = invertibility(&lambda, &format!("m{tag}"));
        aux.extend(m);
        constraints.extend(inv);
    }
    FiberCopy { lambda, lambda_vars, omega_vars, aux, constraints }
}

/// `∀Λ₁,Λ₂,Ω₁,Ω₂: φ(Λ₁,Ω₁) = φ(Λ₂,Ω₂) = Σ ⇒ Λ₁ = Λ₂ ∧ Ω₁ = Ω₂`, with
/// `φ(Λ,Ω) = Σ` written as `Ω = (I − Λ)ᵀ Σ (I − Λ)`.
pub fn emit_numeric_identifiability(g: &MixedGraph, sigma: &CovMatrix<Rational>) -> QuantifiedSentence {
    let s = sigma_consts(sigma);
    let c1 = fiber_copy(g, &s, "1");
    let c2 = fiber_copy(g, &s, "2");
    let mut vars = Vec::new();
    for c in [&c1, &c2] {
        vars.extend(c.lambda_vars.iter().cloned());
    }
    for c in [&c1, &c2] {
        vars.extend(c.omega_vars.iter().cloned());
    }
    for c in [&c1, &c2] {
        vars.extend(c.aux.iter().cloned());
    }
    let mut same = Vec::new();
    for &(i, j) in g.directed() {
        same.push(Formula::eq(c1.lambda[i - 1][j - 1].clone(), c2.lambda[i - 1][j - 1].clone()));
    }
    for (a, b) in c1.omega_vars.iter().zip(&c2.omega_vars) {
        same.push(Formula::eq(var(a), var(b)));
    }
    let antecedent = Formula::and(c1.constraints.into_iter().chain(c2.constraints).collect());
    let body = Formula::quant(
        Quantifier::Forall,
        vars,
        Formula::Implies(Box::new(antecedent), Box::new(Formula::and(same))),
    );
    QuantifiedSentence {
        provenance: format!("numerical identifiability: all fiber elements of the given Sigma coincide; graph {}", g.to_dsl().trim()),
        free: Vec::new(),
        definitions: Vec::new(),
        dims: Vec::new(),
        body,
    }
}

/// `∃Λ, Ω ∈ PD(B): (I − Λ)ᵀ Σ (I − Λ) = Ω`.
pub fn emit_feasibility(g: &MixedGraph, sigma: &CovMatrix<Rational>) -> QuantifiedSentence {
    let s = sigma_consts(sigma);
    let c = fiber_copy(g, &s, "");
    let mut vars = c.lambda_vars.clone();
    vars.extend(c.omega_vars.iter().cloned());
    vars.extend(c.aux.iter().cloned());
    QuantifiedSentence {
        provenance: format!("feasibility: Sigma lies in the image of the parametrization; graph {}", g.to_dsl().trim()),
        free: Vec::new(),
        definitions: Vec::new(),
        dims: Vec::new(),
        body: Formula::quant(Quantifier::Exists, vars, Formula::and(c.constraints)),
    }
}

pub const IN_RD: &str = "in_R_D";
pub const IN_PDB: &str = "in_PD_B";
pub const IN_SG: &str = "in_S_G";

fn dim_name(set: &str) -> String {
    format!("dim_ge_{}", set.trim_start_matches("in_"))
}

/// The disjunction over `(d₁, d₂) ∈ [0, n²]²` of
/// `dim ℝ^D ≥ d₁ ∧ dim PD(B) ≥ d₂ ∧ ¬(dim S_G ≥ d₁ + d₂)`, with the sets
/// given as defined predicates and `dim_ge_*` left uninterpreted.
pub fn emit_generic_identifiability(g: &MixedGraph) -> QuantifiedSentence {
    let n = g.n();
    let (lambda, lvars) = lambda_vars(g, "l");
    let (omega, wvars) = omega_vars(g, "w");

    // Λ ∈ ℝ^D: always true for acyclic graphs.
    let rd_body = if g.is_cyclic_mode() {
        let (m, inv) = invertibility(&lambda, "m");
        Formula::quant(Quantifier::Exists, m, Formula::and(inv))
    } else {
        Formula::True
    };
    let (chol_aux, chol) = cholesky_constraints(&omega, "c", |i, j| g.has_bidirected(i, j));
    let pdb_body = Formula::quant(Quantifier::Exists, chol_aux, Formula::and(chol));

    // (Λ, Ω) ∈ S_G: a second fiber element (Λ', Ω') exists for some Σ.
    let mut s = vec![vec![Poly::zero(); n]; n];
    let mut svars = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            let v = name("s", i, j);
            s[i - 1][j - 1] = var(&v);
            svars.push(v);
        }
    }
    let (lambda2, lvars2) = lambda_vars(g, "lp");
    let (omega2, wvars2) = omega_vars(g, "wp");
    let mut inner = vec![
        Formula::Call(IN_RD.into(), lvars2.iter().map(|v| var(v)).collect()),
        Formula::Call(IN_PDB.into(), wvars2.iter().map(|v| var(v)).collect()),
    ];
    inner.extend(matrix_eq(&congruence(&s, &lambda), &omega));
    inner.extend(matrix_eq(&congruence(&s, &lambda2), &omega2));
    let mut differ = Vec::new();
    for (a, b) in lvars.iter().zip(&lvars2).chain(wvars.iter().zip(&wvars2)) {
        differ.push(Formula::Cmp(Rel::Ne, var(a), var(b)));
    }
    inner.push(Formula::or(differ));
    let mut ex = svars;
    ex.extend(lvars2);
    ex.extend(wvars2);
    let sg_body = Formula::and(vec![
        Formula::Call(IN_RD.into(), lvars.iter().map(|v| var(v)).collect()),
        Formula::Call(IN_PDB.into(), wvars.iter().map(|v| var(v)).collect()),
        Formula::quant(Quantifier::Exists, ex, Formula::and(inner)),
    ]);
    let mut sg_params = lvars.clone();
    sg_params.extend(wvars.iter().cloned());

    let bound = n * n;
    let dim = |set: &str, d: usize| Formula::Call(dim_name(set), vec![konst(rational::int(d as i64))]);
    let mut disjuncts = Vec::with_capacity((bound + 1) * (bound + 1));
    for d1 in 0..=bound {
        for d2 in 0..=bound {
            disjuncts.push(Formula::And(vec![
                dim(IN_RD, d1),
                dim(IN_PDB, d2),
                Formula::Not(Box::new(dim(IN_SG, d1 + d2))),
            ]));
        }
    }
    QuantifiedSentence {
        provenance: format!(
            "generic identifiability: dim(R^D x PD(B)) > dim S_G as a disjunction over d1, d2 in [0, {bound}]; graph {}",
            g.to_dsl().trim()
        ),
        free: Vec::new(),
        definitions: vec![
            Definition { name: IN_RD.into(), params: lvars, body: rd_body },
            Definition { name: IN_PDB.into(), params: wvars, body: pdb_body },
            Definition { name: IN_SG.into(), params: sg_params, body: sg_body },
        ],
        dims: vec![dim_name(IN_RD), dim_name(IN_PDB), dim_name(IN_SG)],
        body: Formula::Or(disjuncts),
    }
}

// ---------------------------------------------------------------------------
// SMT-LIB reader for the subset emitted above.

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Result<Vec<Sexp>, FormulaError> {
    let chars: Vec<char> = text.chars().collect();
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let list = stack.pop().ok_or_else(|| FormulaError::Parse("unbalanced ')'".into()))?;
                stack.last_mut().ok_or_else(|| FormulaError::Parse("unbalanced ')'".into()))?.push(Sexp::List(list));
                i += 1;
            }
            '|' => {
                let start = i + 1;
                i = start;
                while i < chars.len() && chars[i] != '|' {
                    i += 1;
                }
                if i == chars.len() {
                    return Err(FormulaError::Parse("unterminated |symbol|".into()));
                }
                let s: String = chars[start..i].iter().collect();
                stack.last_mut().expect("stack").push(Sexp::Atom(format!("|{s}|")));
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !matches!(chars[i], '(' | ')' | ';') {
                    i += 1;
                }
                stack.last_mut().expect("stack").push(Sexp::Atom(chars[start..i].iter().collect()));
            }
        }
        if stack.is_empty() {
            return Err(FormulaError::Parse("unbalanced ')'".into()));
        }
    }
    if stack.len() != 1 {
        return Err(FormulaError::Parse("unbalanced '('".into()));
    }
    Ok(stack.pop().expect("top level"))
}

fn perr(msg: impl Into<String>) -> FormulaError {
    FormulaError::Parse(msg.into())
}

fn parse_expr(s: &Sexp) -> Result<Expr, FormulaError> {
    match s {
        Sexp::Atom(a) => {
            if a.starts_with(|c: char| c.is_ascii_digit()) {
                rational::parse_rational(a).map(konst).map_err(|e| perr(e.to_string()))
            } else {
                Ok(var(a))
            }
        }
        Sexp::List(items) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return Err(perr("expected an operator")),
            };
            let vals: Vec<Expr> = args.iter().map(parse_expr).collect::<Result<_, _>>()?;
            match (head, vals.len()) {
                ("+", _) => Ok(vals.iter().fold(Poly::zero(), |acc, v| &acc + v)),
                ("*", _) => Ok(vals.iter().fold(konst(Rational::one()), |acc, v| &acc * v)),
                ("-", 1) => Ok(-&vals[0]),
                ("-", k) if k > 1 => Ok(vals[1..].iter().fold(vals[0].clone(), |acc, v| &acc - v)),
                ("/", 2) if vals[1].is_constant() && !vals[1].is_zero() => {
                    Ok(vals[0].scale(&vals[1].constant_term().recip()))
                }
                _ => Err(perr(format!("unsupported term ({head} ...)"))),
            }
        }
    }
}

fn parse_vars(s: &Sexp) -> Result<Vec<String>, FormulaError> {
    let Sexp::List(items) = s else { return Err(perr("expected a binder list")) };
    items
        .iter()
        .map(|d| match d {
            Sexp::List(pair) => match pair.as_slice() {
                [Sexp::Atom(v), Sexp::Atom(t)] if t == "Real" => Ok(v.clone()),
                _ => Err(perr("expected (name Real)")),
            },
            _ => Err(perr("expected (name Real)")),
        })
        .collect()
}

fn parse_formula(s: &Sexp) -> Result<Formula, FormulaError> {
    match s {
        Sexp::Atom(a) if a == "true" => Ok(Formula::True),
        Sexp::Atom(a) if a == "false" => Ok(Formula::False),
        Sexp::Atom(a) => Err(perr(format!("unexpected atom {a}"))),
        Sexp::List(items) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return Err(perr("expected a connective")),
            };
            let sub = || args.iter().map(parse_formula).collect::<Result<Vec<_>, _>>();
            match head {
                "and" => Ok(Formula::And(sub()?)),
                "or" => Ok(Formula::Or(sub()?)),
                "not" if args.len() == 1 => Ok(Formula::Not(Box::new(parse_formula(&args[0])?))),
                "=>" if args.len() == 2 => {
                    Ok(Formula::Implies(Box::new(parse_formula(&args[0])?), Box::new(parse_formula(&args[1])?)))
                }
                "exists" | "forall" if args.len() == 2 => {
                    let q = if head == "exists" { Quantifier::Exists } else { Quantifier::Forall };
                    Ok(Formula::Quant(q, parse_vars(&args[0])?, Box::new(parse_formula(&args[1])?)))
                }
                _ => {
                    if let (Some(rel), 2) = (Rel::from_smt(head), args.len()) {
                        return Ok(Formula::Cmp(rel, parse_expr(&args[0])?, parse_expr(&args[1])?));
                    }
                    let args = args.iter().map(parse_expr).collect::<Result<Vec<_>, _>>()?;
                    Ok(Formula::Call(head.to_string(), args))
                }
            }
        }
    }
}

/// Reads a document produced by [`QuantifiedSentence::to_smtlib`].
pub fn parse_smtlib(text: &str) -> Result<QuantifiedSentence, FormulaError> {
    let mut sentence = QuantifiedSentence {
        provenance: String::new(),
        free: Vec::new(),
        definitions: Vec::new(),
        dims: Vec::new(),
        body: Formula::True,
    };
    let mut asserted = false;
    for cmd in tokenize(text)? {
        let Sexp::List(items) = cmd else { return Err(perr("expected a command")) };
        let Some(Sexp::Atom(head)) = items.first() else { return Err(perr("empty command")) };
        match (head.as_str(), &items[1..]) {
            ("set-info", [Sexp::Atom(k), Sexp::Atom(v)]) if k == ":source" => {
                sentence.provenance = v.trim_matches('|').to_string();
            }
            ("set-info", _) | ("set-logic", _) | ("check-sat", _) => {}
            ("declare-const", [Sexp::Atom(v), _]) => sentence.free.push(v.clone()),
            ("declare-fun", [Sexp::Atom(v), _, _]) => sentence.dims.push(v.clone()),
            ("define-fun", [Sexp::Atom(name), params, _, body]) => sentence.definitions.push(Definition {
                name: name.clone(),
                params: parse_vars(params)?,
                body: parse_formula(body)?,
            }),
            ("assert", [body]) if !asserted => {
                sentence.body = parse_formula(body)?;
                asserted = true;
            }
            (h, _) => return Err(perr(format!("unsupported command {h}"))),
        }
    }
    if !asserted {
        return Err(perr("no assertion"));
    }
    sentence.validate()?;
    Ok(sentence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_graph, ParseOptions};
    use crate::identify::sample_point;
    use crate::rational::{int, ratio};
    use crate::scm;

    fn graph(text: &str) -> MixedGraph {
        parse_graph(text, ParseOptions::default()).unwrap().graph
    }

    fn conjuncts(s: &QuantifiedSentence) -> Vec<String> {
        match s.matrix() {
            Formula::And(fs) => fs.iter().map(compact).collect(),
            f => vec![compact(f)],
        }
    }

    fn compact(f: &Formula) -> String {
        let mut out = String::new();
        text_formula(f, 0, &mut out);
        out.trim().to_string()
    }

    #[test]
    fn pd_n1_existential() {
        let s = emit_pd_membership(1, &[], true);
        assert_eq!(s.prefix(), vec![(Quantifier::Exists, vec!["l_1_1".to_string()])]);
        assert_eq!(conjuncts(&s), vec!["a_1_1 = l_1_1^2", "l_1_1 > 0"]);
        s.validate().unwrap();
    }

    #[test]
    fn pd_n1_universal() {
        let s = emit_pd_membership(1, &[], false);
        assert_eq!(s.prefix(), vec![(Quantifier::Forall, vec!["x_1".to_string()])]);
        let Formula::Implies(a, b) = s.matrix() else { panic!() };
        assert_eq!(compact(a), "x_1 ≠ 0");
        assert_eq!(compact(b), "a_1_1*x_1^2 > 0");
    }

    #[test]
    fn pd_pattern_constraint() {
        let s = emit_pd_membership(2, &[], true);
        let c = conjuncts(&s);
        assert!(c.contains(&"a_1_2 = 0".to_string()) && c.contains(&"a_2_1 = 0".to_string()), "{c:?}");
        let s = emit_pd_membership(2, &[(1, 2)], true);
        assert!(!conjuncts(&s).contains(&"a_1_2 = 0".to_string()));
    }

    #[test]
    fn numeric_variable_count() {
        for text in ["1 -> 2; 2 -> 3; 2 <-> 3", "1 -> 2; 1 <-> 2", "1 -> 2"] {
            let g = graph(text);
            let sigma = scm::phi(&g, &sample_point(&g, 1)).unwrap();
            let s = emit_numeric_identifiability(&g, &sigma);
            let n = g.n();
            let d = g.directed().len();
            let bd = g.bidirected().len() + n;
            assert_eq!(s.num_bound_vars(), 2 * d + 2 * bd + 2 * n * n, "{text}");
            s.validate().unwrap();
            assert_eq!(s.prefix().len(), 1);
        }
    }

    #[test]
    fn feasibility_is_existential() {
        let g = MixedGraph::new(2, vec![], vec![], false).unwrap();
        let sigma = CovMatrix::new(crate::matrix::Matrix::from_rows(vec![vec![int(1), ratio(1, 2)], vec![ratio(1, 2), int(1)]]).unwrap()).unwrap();
        let s = emit_feasibility(&g, &sigma);
        assert!(s.is_existential());
        // Ω has no off-diagonal variable, so the (1,2) entry equation is 0 = 1/2.
        assert!(conjuncts(&s).contains(&"0 = 1/2".to_string()));
    }

    #[test]
    fn round_trips() {
        let g = graph("1 -> 2; 2 -> 3; 2 <-> 3");
        let sigma = scm::phi(&g, &sample_point(&g, 2)).unwrap();
        let cyc = parse_graph("cyclic: true\n1 -> 2; 2 -> 1", ParseOptions::default()).unwrap().graph;
        let sentences = vec![
            emit_pd_membership(2, &[(1, 2)], true),
            emit_pd_membership(3, &[], false),
            emit_numeric_identifiability(&g, &sigma),
            emit_numeric_identifiability(&g, &sigma).negated(),
            emit_feasibility(&g, &sigma),
            emit_generic_identifiability(&g),
            emit_generic_identifiability(&cyc),
        ];
        for s in sentences {
            let text = s.to_smtlib();
            let back = parse_smtlib(&text).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.to_smtlib(), text);
        }
    }

    #[test]
    fn generic_sentence_shape() {
        let s = emit_generic_identifiability(&graph("1 -> 2"));
        let Formula::Or(d) = &s.body else { panic!() };
        assert_eq!(d.len(), 25);
        s.validate().unwrap();
        let trivial = emit_generic_identifiability(&MixedGraph::new(1, vec![], vec![], false).unwrap());
        assert_eq!(trivial.definitions[0].body, Formula::True);
    }

    #[test]
    fn unbound_variables_are_rejected() {
        let mut s = emit_pd_membership(1, &[], true);
        s.free.clear();
        assert_eq!(s.validate(), Err(FormulaError::Unbound("a_1_1".into())));
        assert!(parse_smtlib("(assert (= x 1.0))").is_err());
    }

    #[test]
    fn numerals() {
        assert_eq!(smt_numeral(&ratio(-3, 4)), "(- (/ 3.0 4.0))");
        assert_eq!(smt_expr(&(&var("x") * &konst(int(-2)))), "(* (- 2.0) x)");
        assert_eq!(smt_expr(&Poly::zero()), "0.0");
    }
}
