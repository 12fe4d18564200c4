//! Local MAG learning over three or four variables and classification of
//! `(O, M, Y)` triples into the six shapes that matter for admissibility.
//!
//! Equivalence classes are explicit member lists: every MAG on the variable
//! set whose separation relation reproduces the CI decisions exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::ci::CiTest;
use crate::error::{Error, Result};
use crate::graph::mag::enumerate_mags_idx;
use crate::graph::separation::m_separated_idx;
use crate::graph::{Mark, MixedGraph};

/// The six `(O, M, Y)` MAG shapes with `M -> Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TripleType {
    /// `M <- O -> Y`
    #[serde(rename = "i")]
    I,
    /// `M <- O <-> Y`
    #[serde(rename = "ii")]
    Ii,
    /// `M <-> O -> Y`
    #[serde(rename = "iii")]
    Iii,
    /// `M -> O -> Y`
    #[serde(rename = "iv")]
    Iv,
    /// `M -> O <-> Y`
    #[serde(rename = "v")]
    V,
    /// `M <-> O <-> Y`
    #[serde(rename = "vi")]
    Vi,
}

impl TripleType {
    pub const ALL: [TripleType; 6] = [
        TripleType::I,
        TripleType::Ii,
        TripleType::Iii,
        TripleType::Iv,
        TripleType::V,
        TripleType::Vi,
    ];

    /// `(mark at M, mark at O)` on the `M *-* O` edge and `(mark at O, mark
    /// at Y)` on the `O *-* Y` edge.
    pub fn marks(self) -> ((Mark, Mark), (Mark, Mark)) {
        use Mark::{Arrow as A, Tail as T};
        match self {
            TripleType::I => ((A, T), (T, A)),
            TripleType::Ii => ((A, T), (A, A)),
            TripleType::Iii => ((A, A), (T, A)),
            TripleType::Iv => ((T, A), (T, A)),
            TripleType::V => ((T, A), (A, A)),
            TripleType::Vi => ((A, A), (A, A)),
        }
    }

    /// Shapes whose `O` is safe to adjust for.
    pub fn is_big(self) -> bool {
        matches!(self, TripleType::I | TripleType::Ii | TripleType::Iii)
    }

    pub fn label(self) -> &'static str {
        match self {
            TripleType::I => "i",
            TripleType::Ii => "ii",
            TripleType::Iii => "iii",
            TripleType::Iv => "iv",
            TripleType::V => "v",
            TripleType::Vi => "vi",
        }
    }
}

impl fmt::Display for TripleType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// The shape of `g` restricted to `(o, m, y)`, if it is one of the six.
pub fn triple_type(g: &MixedGraph, o: &str, m: &str, y: &str) -> Result<Option<TripleType>> {
    let (o, m, y) = (g.id(o)?, g.id(m)?, g.id(y)?);
    if !g.is_directed(m, y) {
        return Ok(None);
    }
    let (Some(mo), Some(oy)) = (g.edge_idx(m, o), g.edge_idx(o, y)) else {
        return Ok(None);
    };
    Ok(TripleType::ALL.into_iter().find(|t| t.marks() == (mo, oy)))
}

/// Background knowledge: sinks cause nothing, roots are caused by nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Background {
    pub sinks: Vec<String>,
    pub roots: Vec<String>,
}

impl Background {
    pub fn new<S: AsRef<str>>(sinks: &[S], roots: &[S]) -> Self {
        Background {
            sinks: sinks.iter().map(|s| s.as_ref().to_string()).collect(),
            roots: roots.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    fn admits(&self, g: &MixedGraph) -> bool {
        for (a, b, ma, mb) in g.edges() {
            for (v, mv) in [(a, ma), (b, mb)] {
                let name = g.name(v);
                if mv == Mark::Tail && self.sinks.iter().any(|s| s == name) {
                    return false;
                }
                if mv == Mark::Arrow && self.roots.iter().any(|s| s == name) {
                    return false;
                }
            }
        }
        true
    }
}

/// Pair-and-conditioning-set queries over `k` positional variables.
fn local_queries(k: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            let rest: Vec<usize> = (0..k).filter(|&v| v != a && v != b).collect();
            for bits in 0u32..(1 << rest.len()) {
                let z = (0..rest.len())
                    .filter(|i| bits >> i & 1 == 1)
                    .map(|i| rest[i])
                    .collect();
                out.push((a, b, z));
            }
        }
    }
    out
}

#[allow(clippy::declare_interior_mutable_const)]
const NO_RELATIONS: OnceLock<Vec<Vec<bool>>> = OnceLock::new();
static RELATIONS: [OnceLock<Vec<Vec<bool>>>; 5] = [NO_RELATIONS; 5];

/// Separation bit vectors of every enumerated MAG on `k` nodes.
fn relations(k: usize) -> Result<&'static [Vec<bool>]> {
    let mags = enumerate_mags_idx(k)?;
    Ok(RELATIONS[k].get_or_init(|| {
        let queries = local_queries(k);
        mags.iter()
            .map(|g| {
                queries
                    .iter()
                    .map(|(a, b, z)| m_separated_idx(g, &[*a], &[*b], z))
                    .collect()
            })
            .collect()
    }))
}

/// Learns the equivalence class over `vars` (two to four variables) at level
/// `alpha`, restricted to members consistent with `background`.
pub fn learn_local_class<S: AsRef<str>>(
    ci: &dyn CiTest,
    vars: &[S],
    alpha: f64,
    background: &Background,
) -> Result<Vec<MixedGraph>> {
    let names: Vec<String> = vars.iter().map(|s| s.as_ref().to_string()).collect();
    let k = names.len();
    if !(2..=4).contains(&k) {
        return Err(Error::Input(format!(
            "local learning takes 2 to 4 variables, got {k}"
        )));
    }
    let queries = local_queries(k);
    let mut observed = Vec::with_capacity(queries.len());
    for (a, b, z) in &queries {
        let zn: Vec<String> = z.iter().map(|&v| names[v].clone()).collect();
        observed.push(ci.test(&names[*a], &names[*b], &zn)?.independent_at(alpha));
    }
    let mags = enumerate_mags_idx(k)?;
    let mut members = Vec::new();
    for (g, rel) in mags.iter().zip(relations(k)?) {
        if *rel == observed {
            let g = g.relabel(&names)?;
            if background.admits(&g) {
                members.push(g);
            }
        }
    }
    if members.is_empty() {
        let decisions: Vec<String> = queries
            .iter()
            .zip(&observed)
            .map(|((a, b, z), ind)| {
                let zn: Vec<&str> = z.iter().map(|&v| names[v].as_str()).collect();
                format!(
                    "{} {} {} | {{{}}}",
                    names[*a],
                    if *ind { "_||_" } else { "~||~" },
                    names[*b],
                    zn.join(", ")
                )
            })
            .collect();
        return Err(Error::Inconsistent {
            vars: names,
            decisions: decisions.join("; "),
        });
    }
    Ok(members)
}

/// What a learned class says about one `(O, M, Y)` triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleClass {
    pub possible_types: BTreeSet<TripleType>,
    /// Every member has `M *-> Y`.
    pub my_edge_present: bool,
    /// Every member has `O` adjacent to `M` and `O *-> Y`.
    pub o_pattern: bool,
    /// Every member has `M <-> Y`.
    pub my_bidirected_forced: bool,
}

impl TripleClass {
    /// Membership in the candidate set: `M *-* O *-> Y` with `M *-> Y`.
    pub fn in_b_tilde(&self) -> bool {
        self.my_edge_present && self.o_pattern && !self.possible_types.is_empty()
    }
}

pub fn classify_triple(class: &[MixedGraph], o: &str, m: &str, y: &str) -> Result<TripleClass> {
    let mut possible_types = BTreeSet::new();
    let mut my_edge_present = !class.is_empty();
    let mut o_pattern = !class.is_empty();
    let mut my_bidirected_forced = !class.is_empty();
    for g in class {
        let (io, im, iy) = (g.id(o)?, g.id(m)?, g.id(y)?);
        my_edge_present &= g.mark(iy, im) == Some(Mark::Arrow);
        o_pattern &= g.adjacent(io, im) && g.mark(iy, io) == Some(Mark::Arrow);
        my_bidirected_forced &= g.is_bidirected(im, iy);
        if let Some(t) = triple_type(g, o, m, y)? {
            possible_types.insert(t);
        }
    }
    Ok(TripleClass {
        possible_types,
        my_edge_present,
        o_pattern,
        my_bidirected_forced,
    })
}

/// Does some member of `class` agree with shape `t` on every edge among
/// `{o, m, y}` that is present in that member?
fn compatible(t: TripleType, class: &[MixedGraph], o: &str, m: &str, y: &str) -> bool {
    let ((at_m, at_o1), (at_o2, at_y)) = t.marks();
    class.iter().any(|g| {
        let id = |v: &str| g.id(v).ok();
        let agree = |a: Option<usize>, b: Option<usize>, ma: Mark, mb: Mark| match (a, b) {
            (Some(a), Some(b)) => match g.edge_idx(a, b) {
                Some(e) => e == (ma, mb),
                None => true,
            },
            _ => true,
        };
        agree(id(m), id(o), at_m, at_o1)
            && agree(id(o), id(y), at_o2, at_y)
            && agree(id(m), id(y), Mark::Tail, Mark::Arrow)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LargeCheck {
    pub big_member: bool,
    /// 1 or 2 when a condition fired.
    pub condition: Option<u8>,
    /// Contexts that made the condition fire.
    pub contexts: Vec<String>,
    /// Shapes still possible after the context evidence.
    pub surviving: BTreeSet<TripleType>,
    pub justification: String,
}

/// Tries to prove `O` safe via context variables.
///
/// Condition 1: some context `c` has class `c -> O *-* M` with `c`, `M`
/// non-adjacent. Condition 2: some `c` has `c -> M *-* O` with `c`, `O`
/// non-adjacent, and some context `c'` is adjacent to `M` but not to `Y` in
/// every member of the class over `(c', M, O, Y)`. In both cases the triple's
/// possible shapes are filtered by the extra classes and `O` is accepted only
/// when every survivor is one of i, ii, iii.
#[allow(clippy::too_many_arguments)]
pub fn check_lemma_large<S: AsRef<str>>(
    ci: &dyn CiTest,
    o: &str,
    m: &str,
    y: &str,
    contexts: &[S],
    alpha: f64,
    background: &Background,
) -> Result<LargeCheck> {
    let contexts: Vec<&str> = contexts
        .iter()
        .map(|c| c.as_ref())
        .filter(|c| ![o, m, y].contains(c))
        .collect();
    let mut out = LargeCheck {
        big_member: false,
        condition: None,
        contexts: Vec::new(),
        surviving: BTreeSet::new(),
        justification: "no context available".into(),
    };
    if contexts.is_empty() {
        return Ok(out);
    }
    let triple = learn_local_class(ci, &[o, m, y], alpha, background)?;
    let types = classify_triple(&triple, o, m, y)?.possible_types;
    out.surviving = types.clone();
    out.justification = "no context satisfies either condition".into();
    let all = |class: &[MixedGraph], f: &dyn Fn(&MixedGraph) -> bool| class.iter().all(f);
    for &c in &contexts {
        let cls3 = learn_local_class(ci, &[c, m, o], alpha, background)?;
        let cond1 = all(&cls3, &|g: &MixedGraph| {
            let (ic, im, io) = (g.id(c).unwrap(), g.id(m).unwrap(), g.id(o).unwrap());
            g.is_directed(ic, io) && !g.adjacent(ic, im) && g.adjacent(io, im)
        });
        if cond1 {
            let surv: BTreeSet<TripleType> = types
                .iter()
                .copied()
                .filter(|&t| compatible(t, &cls3, o, m, y))
                .collect();
            if !surv.is_empty() && surv.iter().all(|t| t.is_big()) {
                out.big_member = true;
                out.condition = Some(1);
                out.contexts = vec![c.to_string()];
                out.justification = format!(
                    "condition 1 with context {c}: {o} is a non-collider on {c} -> {o} - {m}"
                );
                out.surviving = surv;
                return Ok(out);
            }
            out.surviving = surv;
        }
        let cond2a = all(&cls3, &|g: &MixedGraph| {
            let (ic, im, io) = (g.id(c).unwrap(), g.id(m).unwrap(), g.id(o).unwrap());
            g.is_directed(ic, im) && !g.adjacent(ic, io) && g.adjacent(io, im)
        });
        if !cond2a {
            continue;
        }
        for &c2 in &contexts {
            let cls4 = learn_local_class(ci, &[c2, m, o, y], alpha, background)?;
            let cond2b = all(&cls4, &|g: &MixedGraph| {
                let (ic, im, iy) = (g.id(c2).unwrap(), g.id(m).unwrap(), g.id(y).unwrap());
                g.adjacent(ic, im) && !g.adjacent(ic, iy)
            });
            if !cond2b {
                continue;
            }
            let surv: BTreeSet<TripleType> = types
                .iter()
                .copied()
                .filter(|&t| compatible(t, &cls3, o, m, y) && compatible(t, &cls4, o, m, y))
                .collect();
            if !surv.is_empty() && surv.iter().all(|t| t.is_big()) {
                out.big_member = true;
                out.condition = Some(2);
                out.contexts = vec![c.to_string(), c2.to_string()];
                out.justification = format!(
                    "condition 2 with contexts {c}, {c2}: {m} is a collider on {c} -> {m} - {o} \
                     and the discriminating path <{c2}, {m}, {o}, {y}> leaves {o} a non-collider"
                );
                out.surviving = surv;
                return Ok(out);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::OracleCi;
    use crate::graph::{latent_project, markov_equivalent};

    fn running_example() -> MixedGraph {
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
    fn chain_class() {
        let ci = OracleCi::new(MixedGraph::dag(&["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap())
            .unwrap();
        let class = learn_local_class(&ci, &["A", "B", "C"], 0.05, &Background::default()).unwrap();
        let lines: Vec<Vec<String>> = class.iter().map(|g| g.edge_lines()).collect();
        for want in [
            vec!["A -> B", "B -> C"],
            vec!["A <- B", "B <- C"],
            vec!["A <- B", "B -> C"],
        ] {
            assert!(lines.contains(&want.iter().map(|s| s.to_string()).collect()), "{lines:?}");
        }
        assert!(!lines.iter().any(|l| l == &vec!["A -> B", "B <- C"]));
    }

    #[test]
    fn running_example_triples() {
        let ci = OracleCi::new(running_example()).unwrap();
        let bg = Background::new(&["Y"], &["R", "X"]);
        let class = learn_local_class(&ci, &["X", "M1", "Y"], 0.05, &bg).unwrap();
        let truth = latent_project(&running_example(), &["X", "M1", "Y"]).unwrap();
        assert!(class.contains(&truth));
        for g in &class {
            assert!(markov_equivalent(g, &truth).unwrap());
        }
        let tc = classify_triple(&class, "X", "M1", "Y").unwrap();
        assert!(tc.possible_types.contains(&TripleType::I));
        assert!(tc.in_b_tilde());

        let class = learn_local_class(&ci, &["M2", "M1", "Y"], 0.05, &bg).unwrap();
        let tc = classify_triple(&class, "M2", "M1", "Y").unwrap();
        assert!(tc.possible_types.contains(&TripleType::Iv));
        assert!(tc.in_b_tilde());
    }

    #[test]
    fn latent_confounder_member() {
        let dag = MixedGraph::dag(&["M", "U", "Y", "Z"], &[("U", "M"), ("U", "Y")]).unwrap();
        let ci = OracleCi::new(dag).unwrap();
        let class = learn_local_class(&ci, &["M", "Y", "Z"], 0.05, &Background::default()).unwrap();
        assert!(class.iter().any(|g| g.edge_lines() == vec!["M <-> Y"]));
    }

    #[test]
    fn independent_covariate_not_a_candidate() {
        let dag = MixedGraph::dag(&["O", "M", "Y"], &[("M", "Y")]).unwrap();
        let ci = OracleCi::new(dag).unwrap();
        let class = learn_local_class(&ci, &["O", "M", "Y"], 0.05, &Background::new(&["Y"], &[])).unwrap();
        assert!(!classify_triple(&class, "O", "M", "Y").unwrap().in_b_tilde());
    }

    #[test]
    fn inconsistent_decisions_are_reported() {
        struct Liar;
        impl CiTest for Liar {
            fn test(&self, x: &str, y: &str, _z: &[String]) -> Result<crate::CiDecision> {
                // A and B independent only given C, B and C always
                // independent, A and C always dependent: no MAG has this.
                let ind = matches!((x, y), ("B", "C") | ("C", "B"));
                Ok(crate::CiDecision {
                    independent: ind,
                    statistic: 0.0,
                    p_value: if ind { 1.0 } else { 0.0 },
                    test_name: "fixed".into(),
                    conditioning_set: _z.to_vec(),
                    degenerate: false,
                })
            }
            fn alpha(&self) -> f64 {
                0.05
            }
            fn evidence(&self) -> Vec<crate::ci::CiRecord> {
                Vec::new()
            }
        }
        let bg = Background::new(&["A"], &["A"]);
        let err = learn_local_class(&Liar, &["A", "B", "C"], 0.05, &bg).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { .. }), "{err}");
    }

    #[test]
    fn no_contexts_means_no_big_membership() {
        let ci = OracleCi::new(running_example()).unwrap();
        let bg = Background::new(&["Y"], &["R"]);
        let r = check_lemma_large(&ci, "X", "M1", "Y", &[] as &[&str], 0.05, &bg).unwrap();
        assert!(!r.big_member);
        assert_eq!(r.justification, "no context available");
    }

    #[test]
    fn condition_one_fires_on_context_into_covariate() {
        // C -> O -> M, O -> Y, M -> Y, C not adjacent to M.
        let dag = MixedGraph::dag(
            &["C", "O", "M", "Y"],
            &[("C", "O"), ("O", "M"), ("O", "Y"), ("M", "Y")],
        )
        .unwrap();
        let ci = OracleCi::new(dag).unwrap();
        let bg = Background::new(&["Y"], &["C"]);
        let r = check_lemma_large(&ci, "O", "M", "Y", &["C"], 0.05, &bg).unwrap();
        assert!(r.big_member, "{r:?}");
        assert_eq!(r.condition, Some(1));
    }
}
