//! `scmid`: identifiability checks, fiber export, reductions and formula
//! export for linear structural causal models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use scmid::formula::{self, QuantifiedSentence};
use scmid::graph::{parse_graph, ParseOptions, ParsedGraph};
use scmid::identify::{self, Feasibility, GenericKind, Multiplicity, VerdictKind};
use scmid::matrix::AnyMatrix;
use scmid::poly::parse_poly;
use scmid::quad::{self, ConstraintSystem};
use scmid::rational::{self, Rational};
use scmid::reduction;
use scmid::scm::{self, CovMatrix, ParamPoint};
use scmid::solver::{self, SolveConfig};
use scmid::Matrix;

const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "scmid", version, about = "Identifiability of linear structural causal models")]
struct Cli {
    #[command(flatten)]
    opts: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Search box [-R, R] for every coefficient.
    #[arg(long = "box", global = true, value_name = "R")]
    radius: Option<f64>,
    /// Maximum number of box splits.
    #[arg(long, global = true, value_name = "N")]
    budget: Option<u64>,
    /// Seeds for generic sampling, comma separated.
    #[arg(long, global = true, value_delimiter = ',', value_name = "A,B,C")]
    seeds: Option<Vec<u64>>,
    /// Number of generic samples (seeds 1..=k unless --seeds is given).
    #[arg(long, global = true, value_name = "K")]
    samples: Option<usize>,
    /// Arithmetic for Σ: exact rationals, or entries rounded to doubles.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Rational)]
    mode: Mode,
    /// Accept directed cycles.
    #[arg(long, global = true)]
    cyclic: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (or directory for `reduce`).
    #[arg(short = 'o', long = "output", global = true, value_name = "PATH")]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormulaKind {
    Pd,
    Numeric,
    Feasible,
    Generic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Σ = φ(Λ, Ω) from given parameters, or from a sampled generic point.
    Simulate {
        graph: PathBuf,
        /// JSON matrix for Λ.
        #[arg(long, requires = "omega")]
        lambda: Option<PathBuf>,
        /// JSON matrix for Ω.
        #[arg(long, requires = "lambda")]
        omega: Option<PathBuf>,
        /// Sample (Λ, Ω) from this seed instead.
        #[arg(long, conflicts_with = "lambda")]
        seed: Option<u64>,
    },
    /// Export the polynomial system whose solutions are the fiber of Σ.
    Fiber { graph: PathBuf, sigma: PathBuf },
    /// Decide whether Σ lies in the image of φ.
    Feasible { graph: PathBuf, sigma: PathBuf },
    /// Count the fiber of Σ.
    CheckNumeric { graph: PathBuf, sigma: PathBuf },
    /// Generic identifiability by sampling.
    CheckGeneric { graph: PathBuf },
    /// Identifiability of one edge coefficient; numeric with Σ, else generic.
    CheckEdge {
        graph: PathBuf,
        sigma: Option<PathBuf>,
        /// Edge as `i,j` (node labels).
        #[arg(long, value_name = "I,J")]
        edge: String,
    },
    /// Normalize a polynomial system, optionally plant a solution, compile
    /// it to an SCM instance and verify the result.
    Reduce {
        input: PathBuf,
        #[arg(long)]
        plant: bool,
    },
    /// Re-run every check on a reduction bundle.
    VerifyReduction {
        bundle: PathBuf,
        /// JSON list of rationals: a satisfying assignment of the source system.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// Emit a quantified sentence as SMT-LIB, or as plain text with `--format text`.
    ExportFormula {
        #[arg(long, value_enum)]
        kind: FormulaKind,
        graph: PathBuf,
        sigma: Option<PathBuf>,
        /// Universal instead of Cholesky form, for `--kind pd`.
        #[arg(long)]
        universal: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fiber { .. } => "fiber",
            Command::Feasible { .. } => "feasible",
            Command::CheckNumeric { .. } => "check-numeric",
            Command::CheckGeneric { .. } => "check-generic",
            Command::CheckEdge { .. } => "check-edge",
            Command::Reduce { .. } => "reduce",
            Command::VerifyReduction { .. } => "verify-reduction",
            Command::ExportFormula { .. } => "export-formula",
        }
    }
}

struct Outcome {
    code: u8,
    report: Value,
    text: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    solver::configure_threads();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn solve_config(o: &Common) -> Result<SolveConfig> {
    let mut cfg = SolveConfig::default();
    if let Some(r) = o.radius {
        cfg.box_bounds = (-r, r);
    }
    if let Some(b) = o.budget {
        cfg.split_budget = b;
    }
    match (&o.seeds, o.samples) {
        (Some(s), Some(k)) if s.len() != k => bail!("--samples {k} disagrees with {} seeds", s.len()),
        (Some(s), _) => cfg.seeds = s.clone(),
        (None, Some(k)) => cfg.seeds = (1..=k as u64).collect(),
        (None, None) => {}
    }
    cfg.validate().map_err(|e| anyhow!(e))?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8> {
    let o = &cli.opts;
    let cfg = solve_config(o)?;
    let outcome = match &cli.command {
        Command::Simulate { graph, lambda, omega, seed } => simulate(o, graph, lambda.as_deref(), omega.as_deref(), *seed)?,
        Command::Fiber { graph, sigma } => fiber(o, graph, sigma)?,
        Command::Feasible { graph, sigma } => feasible(o, &cfg, graph, sigma)?,
        Command::CheckNumeric { graph, sigma } => check_numeric(o, &cfg, graph, sigma)?,
        Command::CheckGeneric { graph } => check_generic(o, &cfg, graph)?,
        Command::CheckEdge { graph, sigma, edge } => check_edge(o, &cfg, graph, sigma.as_deref(), edge)?,
        Command::Reduce { input, plant } => return reduce(o, input, *plant),
        Command::VerifyReduction { bundle, witness } => verify_reduction(bundle, witness.as_deref())?,
        Command::ExportFormula { kind, graph, sigma, universal } => {
            return export_formula(o, *kind, graph, sigma.as_deref(), *universal)
        }
    };
    let config = json!({
        "solver": cfg,
        "mode": match o.mode { Mode::Rational => "rational", Mode::Float => "float" },
        "cyclic": o.cyclic,
    });
    let full = json!({ "command": cli.command.name(), "config": config, "result": outcome.report });
    let body = match o.format {
        Format::Json => serde_json::to_string_pretty(&full)? + "\n",
        Format::Text => outcome.text,
    };
    emit(o.output.as_deref(), &body)?;
    Ok(outcome.code)
}

fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_graph(o: &Common, path: &Path) -> Result<ParsedGraph> {
    parse_graph(&read(path)?, ParseOptions { allow_cycles: o.cyclic }).with_context(|| format!("parsing {}", path.display()))
}

fn load_matrix(path: &Path) -> Result<AnyMatrix> {
    AnyMatrix::parse(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_sigma(o: &Common, path: &Path, n: usize) -> Result<CovMatrix<Rational>> {
    let m = load_matrix(path)?;
    let m = match o.mode {
        Mode::Rational => m.to_rational(),
        Mode::Float => m.to_f64().to_rational(),
    };
    if m.rows() != n || m.cols() != n {
        bail!("Σ is {}x{} but the graph has {n} nodes", m.rows(), m.cols());
    }
    CovMatrix::new(m).with_context(|| format!("{} is not a covariance matrix", path.display()))
}

fn matrix_out(o: &Common, m: &Matrix<Rational>) -> Value {
    let any = match o.mode {
        Mode::Rational => AnyMatrix::Rational(m.clone()),
        Mode::Float => AnyMatrix::Float(m.to_f64()),
    };
    serde_json::to_value(any.to_json()).expect("serializable")
}

fn simulate(o: &Common, graph: &Path, lambda: Option<&Path>, omega: Option<&Path>, seed: Option<u64>) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let g = &pg.graph;
    let p = match (lambda, omega) {
        (Some(l), Some(w)) => ParamPoint::new(g, load_matrix(l)?.to_rational(), load_matrix(w)?.to_rational())?,
        _ => identify::sample_point(g, seed.unwrap_or(1)),
    };
    let sigma = scm::phi(g, &p)?;
    let report = json!({
        "labels": pg.labels,
        "lambda": matrix_out(o, &p.lambda),
        "omega": matrix_out(o, &p.omega),
        "sigma": matrix_out(o, sigma.matrix()),
    });
    let text = format!("sigma =\n{}\n", sigma.matrix());
    Ok(Outcome { code: 0, report, text })
}

fn fiber(o: &Common, graph: &Path, sigma: &Path) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let sigma = load_sigma(o, sigma, pg.graph.n())?;
    let fs = scm::fiber_system(&pg.graph, &sigma);
    let mut text = String::new();
    for (pair, eq) in fs.pairs.iter().zip(fs.equations()) {
        text.push_str(&format!("({},{}): {} = 0\n", pair.0, pair.1, eq.display_with(&fs.system.var_names)));
    }
    for d in &fs.system.disequalities {
        text.push_str(&format!("{} != 0\n", d.display_with(&fs.system.var_names)));
    }
    Ok(Outcome { code: 0, report: serde_json::to_value(fs.to_json())?, text })
}

fn verdict_code(kind: &VerdictKind) -> u8 {
    match kind {
        VerdictKind::Unique => 0,
        VerdictKind::Multiple { .. } => 1,
        VerdictKind::Unknown { .. } => 2,
        VerdictKind::Infeasible => 3,
    }
}

fn verdict_text(kind: &VerdictKind) -> String {
    match kind {
        VerdictKind::Unique => "unique".into(),
        VerdictKind::Multiple { multiplicity: Multiplicity::Finite(k) } => format!("multiple ({k})"),
        VerdictKind::Multiple { multiplicity: Multiplicity::Continuum } => "multiple (continuum)".into(),
        VerdictKind::Infeasible => "infeasible".into(),
        VerdictKind::Unknown { reason } => format!("unknown ({})", serde_json::to_value(reason).unwrap_or_default().as_str().unwrap_or("?")),
    }
}

fn feasible(o: &Common, cfg: &SolveConfig, graph: &Path, sigma: &Path) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let sigma = load_sigma(o, sigma, pg.graph.n())?;
    let r = identify::check_feasible(&pg.graph, &sigma, cfg);
    let (code, text) = match &r.result {
        Feasibility::Feasible { .. } => (0, "feasible\n".to_string()),
        Feasibility::Infeasible { .. } => (3, "infeasible\n".to_string()),
        Feasibility::Unknown { reason } => (2, format!("unknown ({reason:?})\n").to_lowercase()),
    };
    Ok(Outcome { code, report: serde_json::to_value(&r)?, text })
}

fn check_numeric(o: &Common, cfg: &SolveConfig, graph: &Path, sigma: &Path) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let sigma = load_sigma(o, sigma, pg.graph.n())?;
    let v = identify::check_numeric(&pg.graph, &sigma, cfg);
    let fs = scm::fiber_system(&pg.graph, &sigma);
    let mut text = format!("{}\n", verdict_text(&v.kind));
    for (l, exact) in v.fiber.iter().zip(v.exact_lambdas(&fs)) {
        match exact {
            Some(e) => text.push_str(&format!("lambda (exact) =\n{e}\n")),
            None => text.push_str(&format!("lambda =\n{l}\n")),
        }
    }
    Ok(Outcome { code: verdict_code(&v.kind), report: serde_json::to_value(&v)?, text })
}

fn generic_code(kind: GenericKind) -> u8 {
    match kind {
        GenericKind::GenericallyIdentifiable => 0,
        GenericKind::NotGenericallyIdentifiable => 1,
        GenericKind::Inconclusive => 2,
    }
}

fn generic_text(v: &identify::GenericVerdict) -> String {
    let mut text = format!(
        "{} (sampled, {}/{} samples agree)\n",
        serde_json::to_value(v.kind).unwrap_or_default().as_str().unwrap_or("?"),
        v.agreement.agreeing,
        v.agreement.samples
    );
    for s in &v.samples {
        text.push_str(&format!("  seed {}: {}, jacobian rank {}\n", s.seed, verdict_text(&s.verdict), s.jacobian_rank));
    }
    text
}

fn check_generic(o: &Common, cfg: &SolveConfig, graph: &Path) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let v = identify::check_generic(&pg.graph, cfg);
    Ok(Outcome { code: generic_code(v.kind), report: serde_json::to_value(&v)?, text: generic_text(&v) })
}

fn parse_edge(pg: &ParsedGraph, edge: &str) -> Result<(usize, usize)> {
    let (a, b) = edge.split_once(',').ok_or_else(|| anyhow!("edge must be written as i,j"))?;
    let node = |label: &str| {
        pg.labels
            .iter()
            .position(|l| l == label.trim())
            .map(|k| k + 1)
            .ok_or_else(|| anyhow!("unknown node {label}"))
    };
    Ok((node(a)?, node(b)?))
}

fn check_edge(o: &Common, cfg: &SolveConfig, graph: &Path, sigma: Option<&Path>, edge: &str) -> Result<Outcome> {
    let pg = load_graph(o, graph)?;
    let e = parse_edge(&pg, edge)?;
    match sigma {
        Some(s) => {
            let sigma = load_sigma(o, s, pg.graph.n())?;
            let v = identify::check_edge_numeric(&pg.graph, &sigma, e, cfg)?;
            let text = format!("{}\n", verdict_text(&v.kind));
            Ok(Outcome { code: verdict_code(&v.kind), report: serde_json::to_value(&v)?, text })
        }
        None => {
            let v = identify::check_edge_generic(&pg.graph, e, cfg)?;
            Ok(Outcome { code: generic_code(v.kind), report: serde_json::to_value(&v)?, text: generic_text(&v) })
        }
    }
}

/// A constraint-system JSON document, or one polynomial equation per line
/// (`p` or `p = q`; `#` starts a comment).
fn load_system(path: &Path) -> Result<ConstraintSystem> {
    let text = read(path)?;
    if text.trim_start().starts_with('{') {
        return ConstraintSystem::from_json(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let mut names = Vec::new();
    let mut raw = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: scmid::poly::PolyParseError| anyhow!("line {}: {e}", k + 1);
        let p = match line.split_once('=') {
            Some((l, r)) => parse_poly(l, &mut names).map_err(at)? - parse_poly(r, &mut names).map_err(at)?,
            None => parse_poly(line, &mut names).map_err(at)?,
        };
        raw.push(p);
    }
    Ok(quad::normalize(&raw, &names).system)
}

fn reduce(o: &Common, input: &Path, plant: bool) -> Result<u8> {
    let mut cs = load_system(input)?;
    if plant {
        cs = quad::plant_solution(&cs);
    }
    let ri = reduction::compile(&cs)?;
    let bundle = reduction::bundle(&ri);
    let cert = reduction::verify(&bundle, None);
    let code = if cert.passed { 0 } else { 1 };
    let bundle_json = serde_json::to_string_pretty(&bundle)? + "\n";
    let cert_json = serde_json::to_string_pretty(&cert)? + "\n";
    let text = certificate_text(&cert, &ri);
    match &o.output {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("bundle.json"), &bundle_json)?;
            fs::write(dir.join("certificate.json"), &cert_json)?;
            match o.format {
                Format::Json => print!("{cert_json}"),
                Format::Text => print!("{text}"),
            }
        }
        None => match o.format {
            Format::Json => print!("{bundle_json}"),
            Format::Text => print!("{text}"),
        },
    }
    Ok(code)
}

fn certificate_text(cert: &reduction::Certificate, ri: &reduction::ReducedInstance) -> String {
    let mut text = format!("nodes: {}, root: {}\n", ri.layout.node_count, ri.layout.root);
    for c in &cert.checks {
        text.push_str(&check_line(c));
    }
    text
}

fn check_line(c: &reduction::Check) -> String {
    let status = if c.passed { "ok  " } else { "FAIL" };
    if c.detail.is_empty() {
        format!("{status} {}\n", c.name)
    } else {
        format!("{status} {}: {}\n", c.name, c.detail)
    }
}

fn verify_reduction(bundle: &Path, witness: Option<&Path>) -> Result<Outcome> {
    let b: reduction::Bundle = serde_json::from_str(&read(bundle)?).with_context(|| format!("parsing {}", bundle.display()))?;
    let w: Option<Vec<Rational>> = match witness {
        Some(p) => {
            let items: Vec<Value> = serde_json::from_str(&read(p)?).context("witness must be a JSON list")?;
            Some(
                items
                    .iter()
                    .map(|v| {
                        let s = match v {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        rational::parse_rational(&s).map_err(|e| anyhow!("{e}"))
                    })
                    .collect::<Result<_>>()?,
            )
        }
        None => None,
    };
    let cert = reduction::verify(&b, w.as_deref());
    let mut text = String::new();
    for c in &cert.checks {
        text.push_str(&check_line(c));
    }
    Ok(Outcome { code: if cert.passed { 0 } else { 1 }, report: serde_json::to_value(&cert)?, text })
}

fn export_formula(o: &Common, kind: FormulaKind, graph: &Path, sigma: Option<&Path>, universal: bool) -> Result<u8> {
    let pg = load_graph(o, graph)?;
    let g = &pg.graph;
    let need_sigma = || -> Result<CovMatrix<Rational>> {
        let p = sigma.ok_or_else(|| anyhow!("this formula kind needs a Σ file"))?;
        load_sigma(o, p, g.n())
    };
    let s: QuantifiedSentence = match kind {
        FormulaKind::Pd => {
            let b: Vec<(usize, usize)> = g.bidirected().iter().copied().collect();
            formula::emit_pd_membership(g.n(), &b, !universal)
        }
        FormulaKind::Numeric => formula::emit_numeric_identifiability(g, &need_sigma()?),
        FormulaKind::Feasible => formula::emit_feasibility(g, &need_sigma()?),
        FormulaKind::Generic => formula::emit_generic_identifiability(g),
    };
    let body = match o.format {
        Format::Json => s.to_smtlib(),
        Format::Text => s.to_text(),
    };
    emit(o.output.as_deref(), &body)?;
    Ok(0)
}
