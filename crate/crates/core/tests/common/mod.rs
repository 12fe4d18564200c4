//! Test-only reference implementations, written independently of the library
//! algorithms they check.

#![allow(dead_code)]

use disparity_core::{Mark, MixedGraph};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("N{i}")).collect()
}

/// Random DAG whose topological order is the node order.
pub fn random_dag(rng: &mut ChaCha8Rng, nodes: &[String], p_edge: f64) -> MixedGraph {
    let mut g = MixedGraph::new(nodes).unwrap();
    for b in 0..nodes.len() {
        for a in 0..b {
            if rng.random_bool(p_edge) {
                g.add_directed(&nodes[a], &nodes[b]).unwrap();
            }
        }
    }
    g
}

/// Ancestor test by repeated relaxation over directed edges.
pub fn is_ancestor(g: &MixedGraph, a: usize, b: usize) -> bool {
    let n = g.len();
    let mut reach = vec![false; n];
    reach[b] = true;
    loop {
        let mut changed = false;
        for u in 0..n {
            for v in 0..n {
                if reach[v] && !reach[u] && g.is_directed(u, v) {
                    reach[u] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    reach[a]
}

fn simple_paths(g: &MixedGraph, x: usize, y: usize) -> Vec<Vec<usize>> {
    fn go(g: &MixedGraph, path: &mut Vec<usize>, y: usize, out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == y {
            out.push(path.clone());
            return;
        }
        for w in 0..g.len() {
            if g.adjacent(v, w) && !path.contains(&w) {
                path.push(w);
                go(g, path, y, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(g, &mut vec![x], y, &mut out);
    out
}

/// m-separation by enumerating every simple path and applying the blocking
/// rules node by node.
pub fn path_separated(g: &MixedGraph, x: usize, y: usize, z: &[usize]) -> bool {
    for path in simple_paths(g, x, y) {
        let mut open = true;
        for k in 1..path.len() - 1 {
            let (p, v, nx) = (path[k - 1], path[k], path[k + 1]);
            let collider =
                g.mark(v, p) == Some(Mark::Arrow) && g.mark(v, nx) == Some(Mark::Arrow);
            let ok = if collider {
                z.iter().any(|&s| is_ancestor(g, v, s))
            } else {
                !z.contains(&v)
            };
            if !ok {
                open = false;
                break;
            }
        }
        if open {
            return false;
        }
    }
    true
}

/// Every `(x, y, z)` query with `x < y` and `z` a subset of the other nodes.
pub fn all_queries(n: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for x in 0..n {
        for y in (x + 1)..n {
            let rest: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
            for bits in 0u32..(1 << rest.len()) {
                let z = (0..rest.len())
                    .filter(|i| bits >> i & 1 == 1)
                    .map(|i| rest[i])
                    .collect();
                out.push((x, y, z));
            }
        }
    }
    out
}

/// The full separation relation, as a bit vector over [`all_queries`].
pub fn separation_relation(g: &MixedGraph) -> Vec<bool> {
    all_queries(g.len())
        .into_iter()
        .map(|(x, y, z)| path_separated(g, x, y, &z))
        .collect()
}

/// Ancestral and maximal, checked with the path oracle.
pub fn brute_is_mag(g: &MixedGraph) -> bool {
    let n = g.len();
    for a in 0..n {
        for b in 0..n {
            if a == b || !g.adjacent(a, b) {
                continue;
            }
            match (g.mark(a, b).unwrap(), g.mark(b, a).unwrap()) {
                (Mark::Tail, Mark::Arrow) => {
                    if is_ancestor(g, b, a) {
                        return false;
                    }
                }
                (Mark::Arrow, Mark::Arrow) => {
                    if is_ancestor(g, a, b) {
                        return false;
                    }
                }
                (Mark::Arrow, Mark::Tail) => {}
                _ => return false,
            }
        }
    }
    for x in 0..n {
        for y in (x + 1)..n {
            if g.adjacent(x, y) {
                continue;
            }
            let separable = all_queries(n)
                .into_iter()
                .filter(|(a, b, _)| *a == x && *b == y)
                .any(|(_, _, z)| path_separated(g, x, y, &z));
            if !separable {
                return false;
            }
        }
    }
    true
}

/// All mark assignments over `n` nodes, unfiltered.
pub fn all_mark_assignments(n: usize) -> Vec<MixedGraph> {
    let nodes = names(n);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .collect();
    let mut out = Vec::new();
    for code in 0..4usize.pow(pairs.len() as u32) {
        let mut g = MixedGraph::new(&nodes).unwrap();
        let mut c = code;
        for &(a, b) in &pairs {
            let choice = c % 4;
            c /= 4;
            let marks = match choice {
                0 => None,
                1 => Some((Mark::Tail, Mark::Arrow)),
                2 => Some((Mark::Arrow, Mark::Tail)),
                _ => Some((Mark::Arrow, Mark::Arrow)),
            };
            if let Some((ma, mb)) = marks {
                g.add_edge_idx(a, b, ma, mb).unwrap();
            }
        }
        out.push(g);
    }
    out
}

pub fn shuffled<T: Clone>(rng: &mut ChaCha8Rng, xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.shuffle(rng);
    v
}
