//! m-separation, ancestry and graph surgery.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Mark, MixedGraph};
use crate::error::{Error, Result};

/// Is `x` separated from `y` given `z`?
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeparationQuery {
    pub x: String,
    pub y: String,
    pub z: Vec<String>,
}

impl SeparationQuery {
    pub fn new<S: AsRef<str>>(x: &str, y: &str, z: &[S]) -> Result<Self> {
        if x == y {
            return Err(Error::Input(format!("separation query with x = y = `{x}`")));
        }
        let z: Vec<String> = z.iter().map(|s| s.as_ref().to_string()).collect();
        if z.iter().any(|v| v == x || v == y) {
            return Err(Error::Input(
                "conditioning set must exclude the queried nodes".into(),
            ));
        }
        Ok(SeparationQuery {
            x: x.to_string(),
            y: y.to_string(),
            z,
        })
    }
}

/// Reflexive-transitive closure of `seeds` along `tail -> arrow` edges,
/// walking backwards.
pub(crate) fn ancestor_mask(g: &MixedGraph, seeds: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; g.len()];
    let mut stack: Vec<usize> = seeds.to_vec();
    while let Some(v) = stack.pop() {
        if mask[v] {
            continue;
        }
        mask[v] = true;
        stack.extend(g.parents(v).filter(|&p| !mask[p]));
    }
    mask
}

pub(crate) fn descendant_mask(g: &MixedGraph, seeds: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; g.len()];
    let mut stack: Vec<usize> = seeds.to_vec();
    while let Some(v) = stack.pop() {
        if mask[v] {
            continue;
        }
        mask[v] = true;
        stack.extend(g.children(v).filter(|&c| !mask[c]));
    }
    mask
}

fn mask_to_names(g: &MixedGraph, mask: &[bool]) -> BTreeSet<String> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| g.name(i).to_string())
        .collect()
}

/// `An(v)`, including `v` itself. Bidirected edges carry no ancestry.
pub fn ancestors(g: &MixedGraph, v: &str) -> Result<BTreeSet<String>> {
    let id = g.id(v)?;
    Ok(mask_to_names(g, &ancestor_mask(g, &[id])))
}

pub fn ancestors_of_set<S: AsRef<str>>(g: &MixedGraph, vs: &[S]) -> Result<BTreeSet<String>> {
    let ids = g.ids(vs)?;
    Ok(mask_to_names(g, &ancestor_mask(g, &ids)))
}

/// `De(v)`, including `v` itself.
pub fn descendants(g: &MixedGraph, v: &str) -> Result<BTreeSet<String>> {
    let id = g.id(v)?;
    Ok(mask_to_names(g, &descendant_mask(g, &[id])))
}

/// Reachability search for an m-connecting walk from `xs` to `ys` given `z`.
///
/// A node is a collider on the walk when both incident marks at it are
/// arrowheads; colliders must be in `An(z)`, non-colliders outside `z`.
pub(crate) fn m_connected_idx(g: &MixedGraph, xs: &[usize], ys: &[usize], z: &[usize]) -> bool {
    let n = g.len();
    let mut in_z = vec![false; n];
    for &v in z {
        in_z[v] = true;
    }
    let an_z = ancestor_mask(g, z);
    let mut is_target = vec![false; n];
    for &y in ys {
        is_target[y] = true;
    }
    // visited[v][k]: reached v, k = 1 if the arriving edge has an arrowhead at v.
    let mut visited = vec![[false; 2]; n];
    let mut stack: Vec<(usize, bool)> = Vec::new();
    for &x in xs {
        if in_z[x] {
            continue;
        }
        for w in g.neighbors(x) {
            stack.push((w, g.mark(w, x) == Some(Mark::Arrow)));
        }
    }
    while let Some((v, arrow_in)) = stack.pop() {
        if visited[v][arrow_in as usize] {
            continue;
        }
        visited[v][arrow_in as usize] = true;
        if is_target[v] && !in_z[v] {
            return true;
        }
        for w in g.neighbors(v) {
            let arrow_out = g.mark(v, w) == Some(Mark::Arrow);
            let collider = arrow_in && arrow_out;
            let pass = if collider { an_z[v] } else { !in_z[v] };
            if pass {
                let next_arrow = g.mark(w, v) == Some(Mark::Arrow);
                if !visited[w][next_arrow as usize] {
                    stack.push((w, next_arrow));
                }
            }
        }
    }
    false
}

pub(crate) fn m_separated_idx(g: &MixedGraph, xs: &[usize], ys: &[usize], z: &[usize]) -> bool {
    !m_connected_idx(g, xs, ys, z)
}

/// True iff every path between `q.x` and `q.y` is blocked by `q.z`.
pub fn m_separated(g: &MixedGraph, q: &SeparationQuery) -> Result<bool> {
    let x = g.id(&q.x)?;
    let y = g.id(&q.y)?;
    let z = g.ids(&q.z)?;
    Ok(m_separated_idx(g, &[x], &[y], &z))
}

/// Set version: every path between any member of `xs` and any member of `ys`
/// is blocked by `z`. The three sets must be disjoint.
pub fn m_separated_sets<S: AsRef<str>>(g: &MixedGraph, xs: &[S], ys: &[S], z: &[S]) -> Result<bool> {
    let xs = g.ids(xs)?;
    let ys = g.ids(ys)?;
    let z = g.ids(z)?;
    let mut seen = BTreeSet::new();
    for v in xs.iter().chain(&ys).chain(&z) {
        if !seen.insert(*v) {
            return Err(Error::Input(format!(
                "separation sets overlap at `{}`",
                g.name(*v)
            )));
        }
    }
    Ok(m_separated_idx(g, &xs, &ys, &z))
}

/// Deletes edges with an arrowhead at a node in `remove_into` and edges with a
/// tail at a node in `remove_out_of`.
pub fn manipulate<S: AsRef<str>>(
    g: &MixedGraph,
    remove_into: &[S],
    remove_out_of: &[S],
) -> Result<MixedGraph> {
    let into = g.ids(remove_into)?;
    let out_of = g.ids(remove_out_of)?;
    let mut h = g.clone();
    for (a, b, ma, mb) in g.edges() {
        let cut = (mb == Mark::Arrow && into.contains(&b))
            || (ma == Mark::Arrow && into.contains(&a))
            || (ma == Mark::Tail && out_of.contains(&a))
            || (mb == Mark::Tail && out_of.contains(&b));
        if cut {
            h.remove_edge_idx(a, b);
        }
    }
    Ok(h)
}
