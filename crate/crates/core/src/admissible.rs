//! Mediator detection, candidate sets and admissible-set assembly.
//!
//! Everything is driven by a [`CiTest`] and a [`MechanismTest`], so the same
//! code runs on data and on a ground-truth graph.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{CiDecision, CiRecord, CiTest};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;
use crate::local_mag::{
    check_lemma_large, classify_triple, learn_local_class, Background, LargeCheck, TripleClass,
};
use crate::mechanism::{detect_small_membership, MechanismTest, SmallMembership};

/// Variable roles of a discovery problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub exposure: String,
    pub outcome: String,
    pub contexts: Vec<String>,
    /// Every other observed variable, in column order.
    pub covariates: Vec<String>,
}

impl Problem {
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let roles = data.roles()?;
        Ok(Problem {
            exposure: roles.exposure.clone(),
            outcome: roles.outcome.clone(),
            contexts: roles.contexts.clone(),
            covariates: data.covariates()?,
        })
    }

    pub fn new<S: AsRef<str>>(observed: &[S], exposure: &str, outcome: &str, contexts: &[S]) -> Result<Self> {
        let observed: Vec<String> = observed.iter().map(|s| s.as_ref().to_string()).collect();
        for v in [exposure, outcome] {
            if !observed.iter().any(|o| o == v) {
                return Err(Error::UnknownColumn(v.to_string()));
            }
        }
        if exposure == outcome {
            return Err(Error::Input("exposure and outcome must differ".into()));
        }
        let contexts: Vec<String> = contexts.iter().map(|s| s.as_ref().to_string()).collect();
        for c in &contexts {
            if !observed.contains(c) {
                return Err(Error::UnknownColumn(c.clone()));
            }
            if c == outcome {
                return Err(Error::Input(format!("context `{c}` is the outcome")));
            }
        }
        Ok(Problem {
            exposure: exposure.to_string(),
            outcome: outcome.to_string(),
            contexts,
            covariates: observed
                .into_iter()
                .filter(|v| v != exposure && v != outcome)
                .collect(),
        })
    }

    /// Roles read off a graph's node order.
    pub fn from_graph<S: AsRef<str>>(g: &MixedGraph, exposure: &str, outcome: &str, contexts: &[S]) -> Result<Self> {
        let contexts: Vec<&str> = contexts.iter().map(|s| s.as_ref()).collect();
        Problem::new(&g.nodes().iter().map(String::as_str).collect::<Vec<_>>(), exposure, outcome, &contexts)
    }

    /// The outcome is a sink and every context is a root.
    pub fn background(&self) -> Background {
        Background {
            sinks: vec![self.outcome.clone()],
            roots: self.contexts.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    BigByLemmaLarge,
    SmallByLemmaSmall,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDecision {
    pub candidate: String,
    pub status: Status,
    pub justification: String,
    pub witness: Option<Vec<String>>,
    pub large: Vec<LargeCheck>,
    pub small: Option<SmallMembership>,
}

/// Triple class of one covariate against a mediator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleEvidence {
    pub covariate: String,
    pub mediator: String,
    pub class: Vec<String>,
    pub summary: TripleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleReport {
    pub mediator: Vec<String>,
    pub b_tilde: Vec<String>,
    pub decisions: Vec<CandidateDecision>,
    pub b_m: Vec<String>,
    pub identifiable: bool,
    pub triples: Vec<TripleEvidence>,
    pub warnings: Vec<String>,
}

/// Discovery engine over one problem.
pub struct Discovery<'a> {
    pub problem: Problem,
    ci: &'a dyn CiTest,
    mech: &'a dyn MechanismTest,
    alpha: f64,
}

/// CI tests with a fixed set added to every conditioning set.
struct Given<'a> {
    inner: &'a dyn CiTest,
    extra: Vec<String>,
}

impl CiTest for Given<'_> {
    fn test(&self, x: &str, y: &str, z: &[String]) -> Result<CiDecision> {
        let mut all = z.to_vec();
        all.extend(self.extra.iter().filter(|e| !z.contains(e)).cloned());
        self.inner.test(x, y, &all)
    }

    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    fn evidence(&self) -> Vec<CiRecord> {
        self.inner.evidence()
    }
}

type LearnOutcome = (Option<Vec<MixedGraph>>, Option<String>);

impl<'a> Discovery<'a> {
    pub fn new(problem: Problem, ci: &'a dyn CiTest, mech: &'a dyn MechanismTest, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::Input(format!("alpha must lie in (0, 0.5], got {alpha}")));
        }
        Ok(Discovery {
            problem,
            ci,
            mech,
            alpha,
        })
    }

    pub fn ci(&self) -> &dyn CiTest {
        self.ci
    }

    pub fn mechanism(&self) -> &dyn MechanismTest {
        self.mech
    }

    fn dependent(&self, x: &str, y: &str, z: &[&str]) -> Result<bool> {
        let z: Vec<String> = z.iter().map(|s| s.to_string()).collect();
        Ok(!self.ci.test(x, y, &z)?.independent_at(self.alpha))
    }

    /// Covariates dependent on the exposure and on the outcome, marginally
    /// and given the other. Contexts are never mediators.
    pub fn detect_mediators(&self) -> Result<Vec<String>> {
        let p = &self.problem;
        let (r, y) = (p.exposure.as_str(), p.outcome.as_str());
        let mut out = Vec::new();
        for o in &p.covariates {
            if p.contexts.contains(o) {
                continue;
            }
            if self.dependent(o, r, &[])?
                && self.dependent(o, r, &[y])?
                && self.dependent(o, y, &[])?
                && self.dependent(o, y, &[r])?
            {
                out.push(o.clone());
            }
        }
        Ok(out)
    }

    /// Learns a local class at `alpha`, retrying once at `alpha / 2`. A
    /// second inconsistency yields `None` and a warning.
    fn learn(&self, vars: &[&str]) -> Result<LearnOutcome> {
        let bg = self.problem.background();
        let ci = Given {
            inner: self.ci,
            extra: vec![self.problem.exposure.clone()],
        };
        match learn_local_class(&ci, vars, self.alpha, &bg) {
            Ok(c) => Ok((Some(c), None)),
            Err(Error::Inconsistent { .. }) => match learn_local_class(&ci, vars, self.alpha / 2.0, &bg) {
                Ok(c) => Ok((
                    Some(c),
                    Some(format!(
                        "CI decisions over {vars:?} inconsistent at alpha = {}; used alpha / 2",
                        self.alpha
                    )),
                )),
                Err(Error::Inconsistent { decisions, .. }) => Ok((
                    None,
                    Some(format!(
                        "CI decisions over {vars:?} inconsistent at alpha and alpha / 2; \
                         variable `{}` excluded ({decisions})",
                        vars[0]
                    )),
                )),
                Err(e) => Err(e),
            },
            Err(e) => Err(e),
        }
    }

    fn triple(&self, o: &str, m: &str) -> Result<(Option<TripleEvidence>, Option<String>)> {
        let y = self.problem.outcome.as_str();
        let (class, warn) = self.learn(&[o, m, y])?;
        let ev = match class {
            Some(class) => Some(TripleEvidence {
                covariate: o.to_string(),
                mediator: m.to_string(),
                summary: classify_triple(&class, o, m, y)?,
                class: class.iter().map(|g| g.edge_lines().join("; ")).collect(),
            }),
            None => None,
        };
        Ok((ev, warn))
    }

    fn block(&self, ms: &[String]) -> Result<()> {
        if ms.is_empty() {
            return Err(Error::Input("empty mediator block".into()));
        }
        for m in ms {
            if *m == self.problem.outcome || *m == self.problem.exposure {
                return Err(Error::Input(format!(
                    "mediator block cannot contain the exposure or outcome (`{m}`)"
                )));
            }
            if !self.problem.covariates.contains(m) {
                return Err(Error::UnknownColumn(m.clone()));
            }
        }
        Ok(())
    }

    /// Covariates `O` with `M *-* O *-> Y` and `M *-> Y` in their triple
    /// class, for every mediator of the block jointly.
    pub fn build_candidates(&self, ms: &[String]) -> Result<Vec<String>> {
        Ok(self.candidates(ms)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn candidates(&self, ms: &[String]) -> Result<(Vec<String>, Vec<TripleEvidence>, Vec<String>)> {
        self.block(ms)?;
        let pairs: Vec<(String, String)> = self
            .problem
            .covariates
            .iter()
            .filter(|o| !ms.contains(o))
            .flat_map(|o| ms.iter().map(move |m| (o.clone(), m.clone())))
            .collect();
        let results: Vec<(Option<TripleEvidence>, Option<String>)> = pairs
            .par_iter()
            .map(|(o, m)| self.triple(o, m))
            .collect::<Result<_>>()?;
        let mut triples = Vec::new();
        let mut warnings = Vec::new();
        let mut hits: BTreeMap<String, bool> = BTreeMap::new();
        for ((o, _), (ev, warn)) in pairs.iter().zip(results) {
            warnings.extend(warn);
            let hit = ev.as_ref().is_some_and(|e| e.summary.in_b_tilde());
            *hits.entry(o.clone()).or_insert(false) |= hit;
            triples.extend(ev);
        }
        let b_tilde = self
            .problem
            .covariates
            .iter()
            .filter(|o| hits.get(*o).copied().unwrap_or(false))
            .cloned()
            .collect();
        Ok((b_tilde, triples, warnings))
    }

    /// Admissible set for a single mediator.
    pub fn assemble_admissible(&self, m: &str) -> Result<AdmissibleReport> {
        self.assemble_admissible_joint(&[m.to_string()])
    }

    /// Admissible set for a mediator block. Candidates exclude the block;
    /// the mechanism tests use the block as a joint target.
    pub fn assemble_admissible_joint(&self, ms: &[String]) -> Result<AdmissibleReport> {
        let (b_tilde, triples, mut warnings) = self.candidates(ms)?;
        let y = self.problem.outcome.as_str();
        let identifiable = !ms.iter().all(|m| {
            let own: Vec<&TripleEvidence> = triples.iter().filter(|t| &t.mediator == m).collect();
            !own.is_empty() && own.iter().all(|t| t.summary.my_bidirected_forced)
        });
        let decide = |o: &String| -> Result<CandidateDecision> {
            let mut large = Vec::new();
            let relevant: Vec<&String> = ms
                .iter()
                .filter(|m| {
                    triples
                        .iter()
                        .any(|t| &t.covariate == o && &t.mediator == *m && t.summary.in_b_tilde())
                })
                .collect();
            for m in &relevant {
                let bg = self.problem.background();
                match check_lemma_large(self.ci, o, m, y, &self.problem.contexts, self.alpha, &bg) {
                    Ok(c) => large.push(c),
                    Err(Error::Inconsistent { decisions, .. }) => large.push(LargeCheck {
                        big_member: false,
                        condition: None,
                        contexts: Vec::new(),
                        surviving: Default::default(),
                        justification: format!("context classes inconsistent: {decisions}"),
                    }),
                    Err(e) => return Err(e),
                }
            }
            if !large.is_empty() && large.iter().all(|c| c.big_member) {
                let justification = large
                    .iter()
                    .map(|c| c.justification.clone())
                    .collect::<Vec<_>>()
                    .join("; ");
                return Ok(CandidateDecision {
                    candidate: o.clone(),
                    status: Status::BigByLemmaLarge,
                    justification,
                    witness: None,
                    large,
                    small: None,
                });
            }
            let others: Vec<String> = b_tilde.iter().filter(|c| *c != o).cloned().collect();
            let small = detect_small_membership(self.mech, o, ms, y, &others)?;
            let (status, justification) = if small.member {
                (
                    Status::SmallByLemmaSmall,
                    format!(
                        "mechanism tests pass with S = {{{}}}",
                        small.witness.as_deref().unwrap_or_default().join(", ")
                    ),
                )
            } else {
                (
                    Status::Excluded,
                    format!("no subset of {} candidates passes the mechanism tests", others.len()),
                )
            };
            Ok(CandidateDecision {
                candidate: o.clone(),
                status,
                justification,
                witness: small.witness.clone(),
                large,
                small: Some(small),
            })
        };
        let decisions: Vec<CandidateDecision> = b_tilde.par_iter().map(decide).collect::<Result<_>>()?;
        let b_m = decisions
            .iter()
            .filter(|d| d.status != Status::Excluded)
            .map(|d| d.candidate.clone())
            .collect();
        if !identifiable {
            warnings.push(format!(
                "every triple class forces {} <-> {y}",
                ms.join(", ")
            ));
        }
        Ok(AdmissibleReport {
            mediator: ms.to_vec(),
            b_tilde,
            decisions,
            b_m,
            identifiable,
            triples,
            warnings,
        })
    }
}
