//! Ground-truth admissible sets read off a DAG by projecting each
//! `(O, M, Y)` triple and matching its shape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ScmSpec;
use crate::error::{Error, Result};
use crate::graph::{descendants, latent_project, m_separated_sets, MixedGraph};
use crate::local_mag::{triple_type, TripleType};
use crate::mechanism::ordered_subsets;

/// Largest back-door candidate pool searched exhaustively.
const MAX_BACKDOOR_POOL: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissibleTruth {
    pub mediator: String,
    /// Shape `M <- O -> Y`.
    pub b_small: Vec<String>,
    /// Shapes i, ii, iii.
    pub b_big: Vec<String>,
    /// Any of the six shapes.
    pub b_tilde: Vec<String>,
    pub types: BTreeMap<String, TripleType>,
    /// Some observed set satisfies the back-door criterion for `M -> Y`
    /// given the exposure.
    pub identifiable: bool,
}

pub fn dag_admissible_sets<S: AsRef<str>>(
    dag: &MixedGraph,
    observed: &[S],
    exposure: &str,
    outcome: &str,
    m: &str,
) -> Result<AdmissibleTruth> {
    if !dag.is_dag() {
        return Err(Error::Graph("admissible-set truth needs a DAG".into()));
    }
    let observed: Vec<&str> = observed.iter().map(|s| s.as_ref()).collect();
    for v in [exposure, outcome, m] {
        if !observed.contains(&v) {
            return Err(Error::Input(format!("`{v}` must be observed")));
        }
    }
    let others: Vec<&str> = observed
        .iter()
        .copied()
        .filter(|v| ![exposure, outcome, m].contains(v))
        .collect();
    let mut out = AdmissibleTruth {
        mediator: m.to_string(),
        b_small: Vec::new(),
        b_big: Vec::new(),
        b_tilde: Vec::new(),
        types: BTreeMap::new(),
        identifiable: false,
    };
    for &o in &others {
        let proj = latent_project(dag, &[o, m, outcome, exposure])?;
        if let Some(t) = triple_type(&proj, o, m, outcome)? {
            out.types.insert(o.to_string(), t);
            out.b_tilde.push(o.to_string());
            if t.is_big() {
                out.b_big.push(o.to_string());
            }
            if t == TripleType::I {
                out.b_small.push(o.to_string());
            }
        }
    }
    out.identifiable = backdoor_exists(dag, &others, exposure, outcome, m)?;
    Ok(out)
}

fn backdoor_exists(dag: &MixedGraph, others: &[&str], exposure: &str, outcome: &str, m: &str) -> Result<bool> {
    let de = descendants(dag, m)?;
    let pool: Vec<&str> = others.iter().copied().filter(|v| !de.contains(*v)).collect();
    if pool.len() > MAX_BACKDOOR_POOL {
        return Err(Error::Unsupported(format!(
            "back-door search over {} candidates (limit {MAX_BACKDOOR_POOL})",
            pool.len()
        )));
    }
    let mut cut = dag.clone();
    let mi = cut.id(m)?;
    let kids: Vec<usize> = cut.children(mi).collect();
    for c in kids {
        cut.remove_edge_idx(mi, c);
    }
    for s in ordered_subsets(&pool) {
        let mut z: Vec<&str> = s;
        z.push(exposure);
        if m_separated_sets(&cut, &[m], &[outcome], &z)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Ground-truth sets for mediator `m` of an SCM.
pub fn true_admissible_sets(spec: &ScmSpec, m: &str) -> Result<AdmissibleTruth> {
    dag_admissible_sets(&spec.graph()?, &spec.observed(), &spec.exposure, spec.outcome()?, m)
}
