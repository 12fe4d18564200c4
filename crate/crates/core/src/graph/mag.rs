//! Maximal ancestral graph utilities: validity checks, Markov equivalence,
//! latent projection of DAGs and exhaustive enumeration on small node sets.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use super::separation::{ancestor_mask, m_separated_idx};
use super::{Mark, MixedGraph};
use crate::error::{Error, Result};

/// Largest node set [`enumerate_mags`] accepts.
pub const MAX_ENUMERATION_NODES: usize = 5;

/// No directed cycle and no `a <-> b` with `a` an ancestor of `b`.
pub fn is_ancestral(g: &MixedGraph) -> bool {
    let n = g.len();
    for a in 0..n {
        let an_a = ancestor_mask(g, &[a]);
        for b in g.neighbors(a) {
            // a -> b (or a <-> b) while b is an ancestor of a
            if g.mark(b, a) == Some(Mark::Arrow) && an_a[b] {
                return false;
            }
        }
    }
    true
}

/// Every non-adjacent pair is m-separated by some subset of the other nodes.
pub fn is_maximal(g: &MixedGraph) -> bool {
    let n = g.len();
    for a in 0..n {
        for b in (a + 1)..n {
            if !g.adjacent(a, b) && !separable(g, a, b, &(0..n).collect::<Vec<_>>()) {
                return false;
            }
        }
    }
    true
}

/// Can `a` and `b` be m-separated by a subset of `pool \ {a, b}`?
fn separable(g: &MixedGraph, a: usize, b: usize, pool: &[usize]) -> bool {
    let rest: Vec<usize> = pool.iter().copied().filter(|&v| v != a && v != b).collect();
    // An({a,b}) restricted to the pool separates non-adjacent pairs in
    // maximal ancestral graphs; try it before the exhaustive search.
    let an = ancestor_mask(g, &[a, b]);
    let guess: Vec<usize> = rest.iter().copied().filter(|&v| an[v]).collect();
    if m_separated_idx(g, &[a], &[b], &guess) {
        return true;
    }
    let k = rest.len();
    for bits in 0u64..(1u64 << k) {
        let z: Vec<usize> = (0..k).filter(|i| bits >> i & 1 == 1).map(|i| rest[i]).collect();
        if m_separated_idx(g, &[a], &[b], &z) {
            return true;
        }
    }
    false
}

pub(crate) fn unshielded_colliders_idx(g: &MixedGraph) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for b in 0..g.len() {
        let into: Vec<usize> = g
            .neighbors(b)
            .filter(|&a| g.mark(b, a) == Some(Mark::Arrow))
            .collect();
        for (i, &a) in into.iter().enumerate() {
            for &c in &into[i + 1..] {
                if !g.adjacent(a, c) {
                    out.push((a.min(c), b, a.max(c)));
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// All `(a, b, c)` with arrowheads at `b` on both edges and `a`, `c`
/// non-adjacent. Each triple appears once, with `a` before `c` in node order.
pub fn unshielded_colliders(g: &MixedGraph) -> BTreeSet<(String, String, String)> {
    unshielded_colliders_idx(g)
        .into_iter()
        .map(|(a, b, c)| (g.name(a).into(), g.name(b).into(), g.name(c).into()))
        .collect()
}

pub(crate) fn discriminating_paths_idx(g: &MixedGraph, v: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for y in g.neighbors(v) {
        for w in g.neighbors(v) {
            if w == y || g.mark(w, v) != Some(Mark::Arrow) || !g.is_directed(w, y) {
                continue;
            }
            let mut path = vec![w, v, y];
            extend_discriminating(g, &mut path, &mut out);
        }
    }
    out
}

// `path[0]` is a collider candidate whose far-side arrowhead still has to be
// confirmed by the next node.
fn extend_discriminating(g: &MixedGraph, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let front = path[0];
    let y = *path.last().expect("path ends at y");
    if path.len() > g.len() {
        return;
    }
    for x in g.neighbors(front).collect::<Vec<_>>() {
        if path.contains(&x) || g.mark(front, x) != Some(Mark::Arrow) {
            continue;
        }
        if !g.adjacent(x, y) {
            let mut p = Vec::with_capacity(path.len() + 1);
            p.push(x);
            p.extend_from_slice(path);
            out.push(p);
        } else if g.is_directed(x, y) && g.mark(x, front) == Some(Mark::Arrow) {
            path.insert(0, x);
            extend_discriminating(g, path, out);
            path.remove(0);
        }
    }
}

/// Discriminating paths `<X, W1..WK, V, Y>` for `v`: `X` and `Y` non-adjacent,
/// `V` adjacent to `Y`, every `Wk` a collider on the path and a parent of `Y`.
pub fn discriminating_paths(g: &MixedGraph, v: &str) -> Result<Vec<Vec<String>>> {
    let id = g.id(v)?;
    Ok(discriminating_paths_idx(g, id)
        .into_iter()
        .map(|p| p.into_iter().map(|i| g.name(i).to_string()).collect())
        .collect())
}

fn collider_at(g: &MixedGraph, prev: usize, v: usize, next: usize) -> bool {
    g.mark(v, prev) == Some(Mark::Arrow) && g.mark(v, next) == Some(Mark::Arrow)
}

/// Markov equivalence of two MAGs over the same node set: same adjacencies,
/// same unshielded colliders, and agreement on the collider status of `V` for
/// every path that is discriminating for `V` in both graphs.
pub fn markov_equivalent(g1: &MixedGraph, g2: &MixedGraph) -> Result<bool> {
    let a: BTreeSet<&String> = g1.nodes().iter().collect();
    let b: BTreeSet<&String> = g2.nodes().iter().collect();
    if a != b {
        return Err(Error::Input(
            "markov_equivalent: graphs have different node sets".into(),
        ));
    }
    let g2 = if g1.nodes() == g2.nodes() {
        g2.clone()
    } else {
        g2.induced(g1.nodes())?
    };
    Ok(markov_equivalent_aligned(g1, &g2))
}

pub(crate) fn markov_equivalent_aligned(g1: &MixedGraph, g2: &MixedGraph) -> bool {
    if g1.skeleton() != g2.skeleton() {
        return false;
    }
    if unshielded_colliders_idx(g1) != unshielded_colliders_idx(g2) {
        return false;
    }
    for v in 0..g1.len() {
        let shared = discriminating_paths_idx(g2, v);
        for path in discriminating_paths_idx(g1, v) {
            if !shared.contains(&path) {
                continue;
            }
            let k = path.len();
            let (prev, next) = (path[k - 3], path[k - 1]);
            if collider_at(g1, prev, v, next) != collider_at(g2, prev, v, next) {
                return false;
            }
        }
    }
    true
}

/// Projects a DAG onto `observed`: two observed nodes are adjacent iff no
/// subset of the other observed nodes separates them; the mark at `a` is an
/// arrowhead iff `a` is not an ancestor of `b` in the DAG.
pub fn latent_project<S: AsRef<str>>(dag: &MixedGraph, observed: &[S]) -> Result<MixedGraph> {
    if !dag.is_dag() {
        return Err(Error::Graph("latent_project expects a DAG".into()));
    }
    let ids = dag.ids(observed)?;
    let mut out = MixedGraph::new(observed)?;
    if ids.len() < 2 {
        return Ok(out);
    }
    let an: Vec<Vec<bool>> = ids.iter().map(|&v| ancestor_mask(dag, &[v])).collect();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            if separable(dag, ids[i], ids[j], &ids) {
                continue;
            }
            // an[j][ids[i]]: observed i is an ancestor of observed j
            let at_i = if an[j][ids[i]] { Mark::Tail } else { Mark::Arrow };
            let at_j = if an[i][ids[j]] { Mark::Tail } else { Mark::Arrow };
            out.add_edge_idx(i, j, at_i, at_j)?;
        }
    }
    Ok(out)
}

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

#[allow(clippy::declare_interior_mutable_const)]
const EMPTY_CACHE: OnceLock<Vec<MixedGraph>> = OnceLock::new();
static ENUMERATED: [OnceLock<Vec<MixedGraph>>; MAX_ENUMERATION_NODES + 1] =
    [EMPTY_CACHE; MAX_ENUMERATION_NODES + 1];

/// All MAGs on `n` positional nodes (`v0..`), cached per size.
pub(crate) fn enumerate_mags_idx(n: usize) -> Result<&'static [MixedGraph]> {
    if n > MAX_ENUMERATION_NODES {
        return Err(Error::Input(format!(
            "MAG enumeration is limited to {MAX_ENUMERATION_NODES} nodes, got {n}"
        )));
    }
    Ok(ENUMERATED[n].get_or_init(|| {
        let mut g = MixedGraph::new(&index_labels(n)).expect("distinct labels");
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let mut out = Vec::new();
        backtrack(&mut g, &pairs, 0, &mut out);
        out
    }))
}

const EDGE_CHOICES: [Option<(Mark, Mark)>; 4] = [
    None,
    Some((Mark::Tail, Mark::Arrow)),
    Some((Mark::Arrow, Mark::Tail)),
    Some((Mark::Arrow, Mark::Arrow)),
];

fn backtrack(g: &mut MixedGraph, pairs: &[(usize, usize)], k: usize, out: &mut Vec<MixedGraph>) {
    if k == pairs.len() {
        if is_maximal(g) {
            out.push(g.clone());
        }
        return;
    }
    let (a, b) = pairs[k];
    for choice in EDGE_CHOICES {
        if let Some((ma, mb)) = choice {
            g.add_edge_idx(a, b, ma, mb).expect("fresh pair");
            // Adding edges never removes ancestry, so a violation is final.
            if is_ancestral(g) {
                backtrack(g, pairs, k + 1, out);
            }
            g.remove_edge_idx(a, b);
        } else {
            backtrack(g, pairs, k + 1, out);
        }
    }
}

/// Every distinct MAG over `nodes` (at most [`MAX_ENUMERATION_NODES`]).
pub fn enumerate_mags<S: AsRef<str>>(nodes: &[S]) -> Result<Vec<MixedGraph>> {
    let names: Vec<&str> = nodes.iter().map(|s| s.as_ref()).collect();
    let distinct: BTreeSet<&str> = names.iter().copied().collect();
    if distinct.len() != names.len() {
        return Err(Error::Input("enumerate_mags: duplicate node".into()));
    }
    enumerate_mags_idx(names.len())?
        .iter()
        .map(|g| g.relabel(&names))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> MixedGraph {
        s.parse().unwrap()
    }

    fn sec41() -> MixedGraph {
        MixedGraph::dag(
            &["R", "X", "M1", "M2", "Y"],
            &[
                ("R", "M1"),
                ("X", "M1"),
                ("M1", "M2"),
                ("R", "M2"),
                ("X", "M2"),
                ("M1", "Y"),
                ("M2", "Y"),
                ("X", "Y"),
                ("R", "Y"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn collider_examples() {
        let g = parse("A -> B\nC -> B");
        let uc = unshielded_colliders(&g);
        assert_eq!(uc.len(), 1);
        assert!(uc.contains(&("A".into(), "B".into(), "C".into())));
        let shielded = parse("A -> B\nC -> B\nA -> C");
        assert!(unshielded_colliders(&shielded).is_empty());
        let bi = parse("A <-> B\nC -> B");
        assert_eq!(unshielded_colliders(&bi).len(), 1);
    }

    #[test]
    fn discriminating_path_examples() {
        let g = parse("C -> M\nM <-> O\nO <-> Y\nM -> Y");
        let paths = discriminating_paths(&g, "O").unwrap();
        assert!(paths.contains(&vec!["C".into(), "M".into(), "O".into(), "Y".into()]));
        let h = parse("C -> M\nM -> O\nO -> Y");
        assert!(discriminating_paths(&h, "O").unwrap().is_empty());
        let lone = parse("nodes A B\nA -> B");
        assert!(discriminating_paths(&lone, "A").unwrap().is_empty());
    }

    #[test]
    fn equivalence_examples() {
        let chain = parse("A -> B\nB -> C");
        let fork = parse("A <- B\nB -> C");
        assert!(markov_equivalent(&chain, &fork).unwrap());
        let coll = parse("A -> B\nC -> B");
        assert!(!markov_equivalent(&coll, &chain).unwrap());
        let g1 = parse("C -> M\nM <-> O\nO <-> Y\nM -> Y");
        let g2 = parse("C -> M\nM <- O\nO -> Y\nM -> Y");
        assert!(!markov_equivalent(&g1, &g2).unwrap());
        let other = parse("A -> B\nB -> D");
        assert!(markov_equivalent(&chain, &other).is_err());
    }

    #[test]
    fn projection_examples() {
        let dag = MixedGraph::dag(&["M", "U", "Y"], &[("U", "M"), ("U", "Y")]).unwrap();
        let p = latent_project(&dag, &["M", "Y"]).unwrap();
        assert_eq!(p.edge_lines(), vec!["M <-> Y"]);

        let p = latent_project(&sec41(), &["X", "M1", "Y"]).unwrap();
        assert_eq!(p.edge_lines(), vec!["X -> M1", "X -> Y", "M1 -> Y"]);
        let p = latent_project(&sec41(), &["M2", "M1", "Y"]).unwrap();
        assert_eq!(p.edge_lines(), vec!["M2 <- M1", "M2 -> Y", "M1 -> Y"]);
        assert!(p.is_mag());

        let single = latent_project(&sec41(), &["X"]).unwrap();
        assert_eq!(single.edge_count(), 0);
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_mags(&["A"]).unwrap().len(), 1);
        assert_eq!(enumerate_mags(&["A", "B"]).unwrap().len(), 4);
        assert!(enumerate_mags(&["a", "b", "c", "d", "e", "f"]).is_err());
        for g in enumerate_mags(&["A", "B", "C"]).unwrap() {
            assert!(g.is_mag());
        }
    }
}
