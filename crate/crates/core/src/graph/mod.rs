//! Mixed graphs with endpoint marks.
//!
//! A [`MixedGraph`] stores at most one edge per unordered node pair. Each edge
//! carries a mark at both endpoints, so the same type represents DAGs
//! (`tail -> arrow` only), maximal ancestral graphs (tails and arrowheads) and
//! partially oriented structures (circles).

pub(crate) mod mag;
pub(crate) mod separation;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mag::{
    discriminating_paths, enumerate_mags, is_ancestral, is_maximal, latent_project,
    markov_equivalent, unshielded_colliders, MAX_ENUMERATION_NODES,
};
pub use separation::{
    ancestors, ancestors_of_set, descendants, m_separated, m_separated_sets, manipulate,
    SeparationQuery,
};

/// Endpoint mark of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mark {
    Tail,
    Arrow,
    Circle,
}

/// A mixed graph over named nodes.
#[derive(Clone, PartialEq, Eq)]
pub struct MixedGraph {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    // marks[a][b] is the mark at `a` on the edge a *-* b.
    marks: Vec<Vec<Option<Mark>>>,
}

impl MixedGraph {
    /// Creates an edgeless graph. Node names must be unique and non-empty.
    pub fn new<S: AsRef<str>>(nodes: &[S]) -> Result<Self> {
        let mut g = MixedGraph {
            nodes: Vec::with_capacity(nodes.len()),
            index: HashMap::with_capacity(nodes.len()),
            marks: Vec::new(),
        };
        for n in nodes {
            g.add_node(n.as_ref())?;
        }
        Ok(g)
    }

    /// Creates a DAG from `(parent, child)` pairs. Fails on directed cycles.
    pub fn dag<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let mut g = Self::new(nodes)?;
        for (a, b) in edges {
            g.add_directed(a.as_ref(), b.as_ref())?;
        }
        if !g.is_dag() {
            return Err(Error::Graph("directed cycle".into()));
        }
        Ok(g)
    }

    pub fn add_node(&mut self, name: &str) -> Result<usize> {
        let name = name.trim();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Graph(format!("invalid node name `{name}`")));
        }
        if self.index.contains_key(name) {
            return Err(Error::Graph(format!("duplicate node `{name}`")));
        }
        let id = self.nodes.len();
        self.nodes.push(name.to_string());
        self.index.insert(name.to_string(), id);
        for row in &mut self.marks {
            row.push(None);
        }
        self.marks.push(vec![None; id + 1]);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn name(&self, id: usize) -> &str {
        &self.nodes[id]
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn ids<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    /// Adds `a *-* b` with the given marks at `a` and `b`.
    pub fn add_edge(&mut self, a: &str, b: &str, at_a: Mark, at_b: Mark) -> Result<()> {
        let (ia, ib) = (self.id(a)?, self.id(b)?);
        self.add_edge_idx(ia, ib, at_a, at_b)
    }

    pub fn add_edge_idx(&mut self, a: usize, b: usize, at_a: Mark, at_b: Mark) -> Result<()> {
        if a == b {
            return Err(Error::Graph(format!("self-loop at `{}`", self.nodes[a])));
        }
        if self.marks[a][b].is_some() {
            return Err(Error::Graph(format!(
                "nodes `{}` and `{}` are already adjacent",
                self.nodes[a], self.nodes[b]
            )));
        }
        self.marks[a][b] = Some(at_a);
        self.marks[b][a] = Some(at_b);
        Ok(())
    }

    /// Adds `a -> b`.
    pub fn add_directed(&mut self, a: &str, b: &str) -> Result<()> {
        self.add_edge(a, b, Mark::Tail, Mark::Arrow)
    }

    /// Adds `a <-> b`.
    pub fn add_bidirected(&mut self, a: &str, b: &str) -> Result<()> {
        self.add_edge(a, b, Mark::Arrow, Mark::Arrow)
    }

    pub fn remove_edge_idx(&mut self, a: usize, b: usize) {
        self.marks[a][b] = None;
        self.marks[b][a] = None;
    }

    /// Mark at `a` on the edge between `a` and `b`, if adjacent.
    #[inline]
    pub fn mark(&self, a: usize, b: usize) -> Option<Mark> {
        self.marks[a][b]
    }

    /// `(mark at a, mark at b)` for the edge between `a` and `b`.
    pub fn edge(&self, a: &str, b: &str) -> Result<Option<(Mark, Mark)>> {
        let (ia, ib) = (self.id(a)?, self.id(b)?);
        Ok(self.edge_idx(ia, ib))
    }

    #[inline]
    pub fn edge_idx(&self, a: usize, b: usize) -> Option<(Mark, Mark)> {
        Some((self.marks[a][b]?, self.marks[b][a]?))
    }

    #[inline]
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.marks[a][b].is_some()
    }

    pub fn adjacent_names(&self, a: &str, b: &str) -> Result<bool> {
        Ok(self.adjacent(self.id(a)?, self.id(b)?))
    }

    /// True when the edge is `a -> b`.
    #[inline]
    pub fn is_directed(&self, a: usize, b: usize) -> bool {
        self.marks[a][b] == Some(Mark::Tail) && self.marks[b][a] == Some(Mark::Arrow)
    }

    #[inline]
    pub fn is_bidirected(&self, a: usize, b: usize) -> bool {
        self.marks[a][b] == Some(Mark::Arrow) && self.marks[b][a] == Some(Mark::Arrow)
    }

    pub fn neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.marks[a]
            .iter()
            .enumerate()
            .filter_map(|(b, m)| m.map(|_| b))
    }

    pub fn parents(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors(v).filter(move |&p| self.is_directed(p, v))
    }

    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors(v).filter(move |&c| self.is_directed(v, c))
    }

    /// All edges as `(a, b, mark_at_a, mark_at_b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, Mark, Mark)> {
        let mut out = Vec::new();
        for a in 0..self.len() {
            for b in (a + 1)..self.len() {
                if let Some((ma, mb)) = self.edge_idx(a, b) {
                    out.push((a, b, ma, mb));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges().len()
    }

    /// Unordered adjacency pairs `(a, b)` with `a < b`.
    pub fn skeleton(&self) -> BTreeSet<(usize, usize)> {
        self.edges().into_iter().map(|(a, b, _, _)| (a, b)).collect()
    }

    fn has_directed_cycle(&self) -> bool {
        // Kahn's algorithm over the directed part.
        let n = self.len();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.parents(v).count()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for c in self.children(v) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen != n
    }

    /// Every edge is `tail -> arrow` and there is no directed cycle.
    pub fn is_dag(&self) -> bool {
        self.edges()
            .iter()
            .all(|&(_, _, ma, mb)| matches!((ma, mb), (Mark::Tail, Mark::Arrow) | (Mark::Arrow, Mark::Tail)))
            && !self.has_directed_cycle()
    }

    /// Directed or bidirected edges only, ancestral and maximal.
    pub fn is_mag(&self) -> bool {
        self.edges().iter().all(|&(_, _, ma, mb)| {
            matches!(
                (ma, mb),
                (Mark::Tail, Mark::Arrow) | (Mark::Arrow, Mark::Tail) | (Mark::Arrow, Mark::Arrow)
            )
        }) && is_ancestral(self)
            && is_maximal(self)
    }

    /// Topological order of a DAG.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.len();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.parents(v).count()).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for c in self.children(v).collect::<Vec<_>>() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Graph("directed cycle".into()));
        }
        Ok(order)
    }

    /// Subgraph induced by `keep`, preserving marks and the order of `keep`.
    pub fn induced<S: AsRef<str>>(&self, keep: &[S]) -> Result<MixedGraph> {
        let ids = self.ids(keep)?;
        let mut g = MixedGraph::new(keep)?;
        for (i, &a) in ids.iter().enumerate() {
            for (j, &b) in ids.iter().enumerate().skip(i + 1) {
                if let Some((ma, mb)) = self.edge_idx(a, b) {
                    g.add_edge_idx(i, j, ma, mb)?;
                }
            }
        }
        Ok(g)
    }

    /// The same graph with nodes renamed position-wise.
    pub fn relabel<S: AsRef<str>>(&self, names: &[S]) -> Result<MixedGraph> {
        if names.len() != self.len() {
            return Err(Error::Input("relabel: wrong number of names".into()));
        }
        let mut g = self.clone();
        g.nodes = names.iter().map(|s| s.as_ref().to_string()).collect();
        g.index = g
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        if g.index.len() != g.nodes.len() {
            return Err(Error::Graph("duplicate node in relabel".into()));
        }
        Ok(g)
    }

    /// Renders one edge in the text format, e.g. `M <-> O`.
    pub fn edge_string(&self, a: usize, b: usize) -> Option<String> {
        let (ma, mb) = self.edge_idx(a, b)?;
        Some(format!("{} {} {}", self.nodes[a], connector(ma, mb), self.nodes[b]))
    }

    /// Edge lines in the text format, canonical order.
    pub fn edge_lines(&self) -> Vec<String> {
        self.edges()
            .into_iter()
            .map(|(a, b, _, _)| self.edge_string(a, b).expect("edge exists"))
            .collect()
    }
}

fn connector(at_a: Mark, at_b: Mark) -> String {
    let left = match at_a {
        Mark::Tail => "",
        Mark::Arrow => "<",
        Mark::Circle => "o",
    };
    let right = match at_b {
        Mark::Tail => "",
        Mark::Arrow => ">",
        Mark::Circle => "o",
    };
    if left.is_empty() && right.is_empty() {
        "--".to_string()
    } else {
        format!("{left}-{right}")
    }
}

fn parse_connector(tok: &str) -> Option<(Mark, Mark)> {
    let mut chars: Vec<char> = tok.chars().collect();
    if chars.is_empty() {
        return None;
    }
    let left = match chars[0] {
        '<' => {
            chars.remove(0);
            Mark::Arrow
        }
        'o' => {
            chars.remove(0);
            Mark::Circle
        }
        _ => Mark::Tail,
    };
    let right = match chars.last() {
        Some('>') => {
            chars.pop();
            Mark::Arrow
        }
        Some('o') => {
            chars.pop();
            Mark::Circle
        }
        _ => Mark::Tail,
    };
    if chars.is_empty() || chars.iter().any(|&c| c != '-') {
        return None;
    }
    Some((left, right))
}

/// Line-oriented text format.
///
/// ```text
/// nodes R X M1 M2 Y
/// R -> M1
/// M <-> O
/// M o-o O
/// ```
///
/// The optional `nodes` line fixes node order and declares isolated nodes;
/// otherwise nodes appear in order of first mention. `#` starts a comment.
impl FromStr for MixedGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut g = MixedGraph::new::<&str>(&[])?;
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::GraphParse {
                line: lineno + 1,
                msg,
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "nodes" {
                for t in &toks[1..] {
                    if !g.contains(t) {
                        g.add_node(t).map_err(|e| err(e.to_string()))?;
                    }
                }
                continue;
            }
            match toks.as_slice() {
                [single] => {
                    if !g.contains(single) {
                        g.add_node(single).map_err(|e| err(e.to_string()))?;
                    }
                }
                [a, conn, b] => {
                    let (ma, mb) = parse_connector(conn)
                        .ok_or_else(|| err(format!("bad edge connector `{conn}`")))?;
                    for n in [a, b] {
                        if !g.contains(n) {
                            g.add_node(n).map_err(|e| err(e.to_string()))?;
                        }
                    }
                    g.add_edge(a, b, ma, mb).map_err(|e| err(e.to_string()))?;
                }
                _ => return Err(err(format!("expected `a <mark><mark> b`, got `{line}`"))),
            }
        }
        Ok(g)
    }
}

impl fmt::Display for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes {}", self.nodes.join(" "))?;
        for line in self.edge_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MixedGraph {{ {} }}", self.edge_lines().join(", "))
    }
}

impl Serialize for MixedGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.edge_lines().serialize(s)
    }
}
