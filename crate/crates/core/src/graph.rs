//! Mixed graphs `G = (V, D, B)`: parsing, validation, and serialization.
//!
//! Nodes are `1..=n`. Acyclic graphs are always stored topologically sorted,
//! so every directed edge `(i, j)` has `i < j` and `I − Λ` is unit upper
//! triangular. Inputs with arbitrary labels are relabeled on parse and the
//! permutation is returned alongside the graph.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("self-loop on node {0}")]
    SelfLoop(String),
    #[error("directed cycle through node {0} (pass the cyclic flag to allow cycles)")]
    DirectedCycle(String),
    #[error("node {node} out of range 1..={n}")]
    OutOfRange { node: String, n: usize },
    #[error("directed edge {0}->{1} violates the topological order")]
    Unsorted(usize, usize),
    #[error("malformed graph document: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MixedGraph {
    n: usize,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
    cyclic: bool,
}

/// The complement of `B` among unordered node pairs, lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPairList {
    pub pairs: Vec<(usize, usize)>,
}

impl MissingPairList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter()
    }
}

/// A parsed graph together with the original label of each node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedGraph {
    pub graph: MixedGraph,
    /// `labels[k - 1]` is the input label of internal node `k`.
    pub labels: Vec<String>,
}

impl MixedGraph {
    /// Validates and builds a graph on nodes `1..=n`.
    ///
    /// Acyclic graphs must already be sorted (`i < j` for every `i → j`);
    /// use [`MixedGraph::sorted`] or the parsers to relabel arbitrary input.
    pub fn new(
        n: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
        cyclic: bool,
    ) -> Result<Self, GraphError> {
        let mut d = BTreeSet::new();
        let mut b = BTreeSet::new();
        let check = |v: usize| {
            if v == 0 || v > n {
                Err(GraphError::OutOfRange { node: v.to_string(), n })
            } else {
                Ok(())
            }
        };
        for (i, j) in directed {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(GraphError::SelfLoop(i.to_string()));
            }
            if !cyclic && i > j {
                return Err(GraphError::Unsorted(i, j));
            }
            d.insert((i, j));
        }
        for (i, j) in bidirected {
            check(i)?;
            check(j)?;
            if i == j {
                return Err(GraphError::SelfLoop(i.to_string()));
            }
            b.insert((i.min(j), i.max(j)));
        }
        Ok(Self { n, directed: d, bidirected: b, cyclic })
    }

    /// Builds an acyclic graph from unsorted edges, returning the graph and
    /// `order`, where `order[k - 1]` is the input node placed at position `k`.
    pub fn sorted(
        n: usize,
        directed: &[(usize, usize)],
        bidirected: &[(usize, usize)],
    ) -> Result<(Self, Vec<usize>), GraphError> {
        for &(i, j) in directed.iter().chain(bidirected) {
            for v in [i, j] {
                if v == 0 || v > n {
                    return Err(GraphError::OutOfRange { node: v.to_string(), n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i.to_string()));
            }
        }
        let order = topological_order(n, directed)
            .map_err(|v| GraphError::DirectedCycle(v.to_string()))?;
        let mut position = vec![0; n + 1];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k + 1;
        }
        let g = Self::new(
            n,
            directed.iter().map(|&(i, j)| (position[i], position[j])),
            bidirected.iter().map(|&(i, j)| (position[i], position[j])),
            false,
        )?;
        Ok((g, order))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn directed(&self) -> &BTreeSet<(usize, usize)> {
        &self.directed
    }

    pub fn bidirected(&self) -> &BTreeSet<(usize, usize)> {
        &self.bidirected
    }

    pub fn is_cyclic_mode(&self) -> bool {
        self.cyclic
    }

    pub fn has_directed(&self, i: usize, j: usize) -> bool {
        self.directed.contains(&(i, j))
    }

    pub fn has_bidirected(&self, i: usize, j: usize) -> bool {
        self.bidirected.contains(&(i.min(j), i.max(j)))
    }

    /// Directed edges in lexicographic order; the variable order of fiber systems.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.directed.iter().copied().collect()
    }

    pub fn parents(&self, j: usize) -> Result<Vec<usize>, GraphError> {
        if j == 0 || j > self.n {
            return Err(GraphError::OutOfRange { node: j.to_string(), n: self.n });
        }
        Ok(self.directed.iter().filter(|&&(_, c)| c == j).map(|&(p, _)| p).collect())
    }

    pub fn missing_pairs(&self) -> MissingPairList {
        let mut pairs = Vec::new();
        for i in 1..=self.n {
            for j in (i + 1)..=self.n {
                if !self.bidirected.contains(&(i, j)) {
                    pairs.push((i, j));
                }
            }
        }
        MissingPairList { pairs }
    }

    /// Whether the directed part contains a cycle (only possible in cyclic mode).
    pub fn has_directed_cycle(&self) -> bool {
        let edges: Vec<_> = self.directed.iter().copied().collect();
        topological_order(self.n, &edges).is_err()
    }

    /// Canonical DSL text; `parse_graph` of it reproduces `self`.
    pub fn to_dsl(&self) -> String {
        let mut out = format!("nodes: {}\n", self.n);
        if self.cyclic {
            out.push_str("cyclic: true\n");
        }
        for (i, j) in &self.directed {
            out.push_str(&format!("{i} -> {j}\n"));
        }
        for (i, j) in &self.bidirected {
            out.push_str(&format!("{i} <-> {j}\n"));
        }
        out
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            n: self.n,
            directed: self.directed.iter().map(|&(i, j)| [i, j]).collect(),
            bidirected: self.bidirected.iter().map(|&(i, j)| [i, j]).collect(),
            cyclic: self.cyclic,
        }
    }
}

impl fmt::Display for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}

/// Kahn's algorithm, always taking the smallest ready node, so an already
/// sorted graph keeps its numbering. `Err` carries a node on a cycle.
fn topological_order(n: usize, directed: &[(usize, usize)]) -> Result<Vec<usize>, usize> {
    let mut indegree = vec![0usize; n + 1];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for &(i, j) in directed {
        if !children[i].contains(&j) {
            children[i].push(j);
            indegree[j] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (1..=n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < n {
        let stuck = (1..=n).find(|&v| indegree[v] > 0).unwrap_or(1);
        return Err(stuck);
    }
    Ok(order)
}

/// JSON mirror: `{"n":int,"directed":[[i,j],...],"bidirected":[[i,j],...],"cyclic":bool}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    #[serde(default)]
    pub directed: Vec<[usize; 2]>,
    #[serde(default)]
    pub bidirected: Vec<[usize; 2]>,
    #[serde(default)]
    pub cyclic: bool,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Accept directed cycles even without a `cyclic: true` header.
    pub allow_cycles: bool,
}

/// Parses either the graph DSL or the JSON mirror.
pub fn parse_graph(text: &str, options: ParseOptions) -> Result<ParsedGraph, GraphError> {
    if text.trim_start().starts_with('{') {
        let doc: GraphJson =
            serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        from_json(&doc, options)
    } else {
        parse_dsl(text, options)
    }
}

pub fn from_json(doc: &GraphJson, options: ParseOptions) -> Result<ParsedGraph, GraphError> {
    let directed: Vec<_> = doc.directed.iter().map(|e| (e[0], e[1])).collect();
    let bidirected: Vec<_> = doc.bidirected.iter().map(|e| (e[0], e[1])).collect();
    let labels: Vec<String> = (1..=doc.n).map(|v| v.to_string()).collect();
    build(doc.n, &directed, &bidirected, doc.cyclic || options.allow_cycles, labels)
}

fn build(
    n: usize,
    directed: &[(usize, usize)],
    bidirected: &[(usize, usize)],
    cyclic: bool,
    labels: Vec<String>,
) -> Result<ParsedGraph, GraphError> {
    let name = |v: usize| labels.get(v.wrapping_sub(1)).cloned().unwrap_or_else(|| v.to_string());
    for &(i, j) in directed.iter().chain(bidirected) {
        for v in [i, j] {
            if v == 0 || v > n {
                return Err(GraphError::OutOfRange { node: v.to_string(), n });
            }
        }
        if i == j {
            return Err(GraphError::SelfLoop(name(i)));
        }
    }
    if cyclic {
        let graph = MixedGraph::new(n, directed.iter().copied(), bidirected.iter().copied(), true)?;
        return Ok(ParsedGraph { graph, labels });
    }
    let (graph, order) = MixedGraph::sorted(n, directed, bidirected).map_err(|e| match e {
        GraphError::DirectedCycle(v) => GraphError::DirectedCycle(name(v.parse().unwrap_or(0))),
        other => other,
    })?;
    let labels = order.iter().map(|&v| name(v)).collect();
    Ok(ParsedGraph { graph, labels })
}

enum Statement {
    Edge { from: String, to: String, bidirected: bool },
}

fn parse_dsl(text: &str, options: ParseOptions) -> Result<ParsedGraph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut cyclic = options.allow_cycles;
    let mut statements: Vec<(usize, usize, Statement)> = Vec::new();

    for (line_no, raw_line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw_line.split('#').next().unwrap_or("");
        let mut offset = 0;
        for stmt in line.split(';') {
            let column = offset + 1 + (stmt.len() - stmt.trim_start().len());
            offset += stmt.len() + 1;
            let stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            let syntax = |message: String| GraphError::Syntax { line: line_no, column, message };
            if let Some((key, value)) = stmt.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "nodes" => {
                        declared = Some(value.parse().map_err(|_| {
                            syntax(format!("expected a node count, found `{value}`"))
                        })?);
                    }
                    "cyclic" => {
                        cyclic |= match value {
                            "true" => true,
                            "false" => false,
                            _ => return Err(syntax(format!("expected true/false, found `{value}`"))),
                        };
                    }
                    other => return Err(syntax(format!("unknown header `{other}`"))),
                }
                continue;
            }
            let (from, to, bidirected) = if let Some((a, b)) = stmt.split_once("<->") {
                (a, b, true)
            } else if let Some((a, b)) = stmt.split_once("->") {
                (a, b, false)
            } else {
                return Err(syntax(format!("expected `a -> b` or `a <-> b`, found `{stmt}`")));
            };
            let (from, to) = (from.trim(), to.trim());
            for label in [from, to] {
                if label.is_empty()
                    || !label.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
                {
                    return Err(syntax(format!("invalid node label `{label}`")));
                }
            }
            statements.push((
                line_no,
                column,
                Statement::Edge { from: from.to_string(), to: to.to_string(), bidirected },
            ));
        }
    }

    // Node universe: `1..=n` when declared, otherwise every label seen, with
    // integer labels in numeric order ahead of named ones in first-seen order.
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut labels: Vec<String> = Vec::new();
    match declared {
        Some(n) => {
            for v in 1..=n {
                index.insert(v.to_string(), v);
                labels.push(v.to_string());
            }
            for (_, _, Statement::Edge { from, to, .. }) in &statements {
                for label in [from, to] {
                    if !index.contains_key(label) {
                        return Err(GraphError::OutOfRange { node: label.clone(), n });
                    }
                }
            }
        }
        None => {
            let mut numeric: BTreeSet<u64> = BTreeSet::new();
            let mut named: Vec<String> = Vec::new();
            for (_, _, Statement::Edge { from, to, .. }) in &statements {
                for label in [from, to] {
                    match label.parse::<u64>() {
                        Ok(v) => {
                            numeric.insert(v);
                        }
                        Err(_) => {
                            if !named.contains(label) {
                                named.push(label.clone());
                            }
                        }
                    }
                }
            }
            for label in numeric.iter().map(u64::to_string).chain(named) {
                labels.push(label.clone());
                index.insert(label, labels.len());
            }
        }
    }

    let mut directed = Vec::new();
    let mut bidirected = Vec::new();
    for (_, _, Statement::Edge { from, to, bidirected: bi }) in &statements {
        let e = (index[from], index[to]);
        if *bi {
            bidirected.push(e);
        } else {
            directed.push(e);
        }
    }
    build(labels.len(), &directed, &bidirected, cyclic, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dsl(text: &str) -> Result<ParsedGraph, GraphError> {
        parse_graph(text, ParseOptions::default())
    }

    pub(crate) fn iv() -> MixedGraph {
        MixedGraph::new(3, [(1, 2), (2, 3)], [(2, 3)], false).unwrap()
    }

    #[test]
    fn parses_iv_example() {
        let p = dsl("1 -> 2; 2 -> 3; 2 <-> 3").unwrap();
        assert_eq!(p.graph, iv());
        assert_eq!(p.labels, ["1", "2", "3"]);
    }

    #[test]
    fn empty_graph_with_declared_nodes() {
        let p = dsl("nodes: 1\n").unwrap();
        assert_eq!(p.graph.n(), 1);
        assert!(p.graph.directed().is_empty() && p.graph.bidirected().is_empty());
        assert_eq!(dsl("").unwrap().graph.n(), 0);
    }

    #[test]
    fn rejects_cycles_without_flag() {
        assert!(matches!(dsl("1 -> 2; 2 -> 1"), Err(GraphError::DirectedCycle(_))));
        let p = dsl("cyclic: true\n1 -> 2; 2 -> 1").unwrap();
        assert!(p.graph.is_cyclic_mode() && p.graph.has_directed_cycle());
        let p = parse_graph("1 -> 2; 2 -> 1", ParseOptions { allow_cycles: true }).unwrap();
        assert!(p.graph.has_directed(2, 1));
    }

    #[test]
    fn reports_errors_with_positions() {
        assert_eq!(dsl("1 -> 1"), Err(GraphError::SelfLoop("1".into())));
        assert!(matches!(dsl("nodes: 2\n1 -> 3"), Err(GraphError::OutOfRange { .. })));
        match dsl("1 -> 2\n2 => 3") {
            Err(GraphError::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 1)),
            other => panic!("{other:?}"),
        }
        match dsl("1 -> 2;  bogus: 1") {
            Err(GraphError::Syntax { line, column, .. }) => assert_eq!((line, column), (1, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relabels_to_topological_order() {
        let p = dsl("y -> x; z -> y; x <-> z").unwrap();
        assert_eq!(p.labels, ["z", "y", "x"]);
        assert_eq!(p.graph.edge_list(), vec![(1, 2), (2, 3)]);
        assert!(p.graph.has_bidirected(1, 3));
        let p = dsl("3 -> 1; 2 -> 3").unwrap();
        assert_eq!(p.labels, ["2", "3", "1"]);
        assert!(p.graph.directed().iter().all(|&(i, j)| i < j));
    }

    #[test]
    fn parents_and_missing_pairs() {
        let g = iv();
        assert_eq!(g.parents(3).unwrap(), vec![2]);
        assert!(g.parents(1).unwrap().is_empty());
        assert!(g.parents(4).is_err());
        assert_eq!(g.missing_pairs().pairs, vec![(1, 2), (1, 3)]);
        let bow = MixedGraph::new(2, [(1, 2)], [(1, 2)], false).unwrap();
        assert!(bow.missing_pairs().is_empty());
        let empty = MixedGraph::new(3, [], [], false).unwrap();
        assert_eq!(empty.missing_pairs().pairs, vec![(1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn json_mirror() {
        let text = r#"{"n":3,"directed":[[2,3],[1,2]],"bidirected":[[3,2]],"cyclic":false}"#;
        let p = parse_graph(text, ParseOptions::default()).unwrap();
        assert_eq!(p.graph, iv());
        let back = serde_json::to_string(&p.graph.to_json()).unwrap();
        assert_eq!(parse_graph(&back, ParseOptions::default()).unwrap().graph, iv());
        assert!(parse_graph(r#"{"n":2,"directed":[[1,5]]}"#, ParseOptions::default()).is_err());
    }

    #[test]
    fn canonical_dsl_round_trip() {
        let g = MixedGraph::new(4, [(1, 3), (2, 4)], [(1, 4), (2, 3)], false).unwrap();
        assert_eq!(dsl(&g.to_dsl()).unwrap().graph, g);
        let c = MixedGraph::new(2, [(2, 1), (1, 2)], [], true).unwrap();
        assert_eq!(dsl(&c.to_dsl()).unwrap().graph, c);
    }
}
