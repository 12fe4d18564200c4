//! End-to-end discovery and decomposition runs and their JSON report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admissible::{AdmissibleReport, Discovery, Problem};
use crate::ci::{CiMethod, CiRecord, CiTest, DataCi, OracleCi, DEFAULT_PERMUTATIONS};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimate::{estimate_effect, EffectEstimate, EstimatorConfig, MIN_GROUP_ROWS};
use crate::graph::MixedGraph;
use crate::mechanism::{DataMechanism, DeltaOptions, DeltaResult, MechanismTest, OracleMechanism};
use crate::rng::{substream, CI};

/// Source of independence and mechanism-change decisions.
#[derive(Debug, Clone)]
pub enum CiChoice {
    FisherZ,
    HsicResidual { perms: usize, max_rows: usize },
    /// Decisions read off a ground-truth DAG; `label` names its source.
    Oracle { graph: MixedGraph, label: String },
}

impl CiChoice {
    pub fn hsic_residual() -> Self {
        CiChoice::HsicResidual {
            perms: DEFAULT_PERMUTATIONS,
            max_rows: 1000,
        }
    }

    pub fn label(&self) -> String {
        match self {
            CiChoice::FisherZ => "fisher_z".into(),
            CiChoice::HsicResidual { .. } => "hsic_residual".into(),
            CiChoice::Oracle { label, .. } => format!("oracle:{label}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub exposure: String,
    pub outcome: String,
    pub contexts: Vec<String>,
    pub alpha: f64,
    pub ci: CiChoice,
    pub delta: DeltaOptions,
    pub estimator: EstimatorConfig,
    /// Mediator blocks analysed jointly, in addition to single mediators.
    pub joint: Vec<Vec<String>>,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(exposure: &str, outcome: &str, contexts: &[&str]) -> Self {
        PipelineConfig {
            exposure: exposure.to_string(),
            outcome: outcome.to_string(),
            contexts: contexts.iter().map(|s| s.to_string()).collect(),
            alpha: 0.05,
            ci: CiChoice::FisherZ,
            delta: DeltaOptions::default(),
            estimator: EstimatorConfig::default(),
            joint: Vec::new(),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.exposure == self.outcome {
            return Err(Error::Input("exposure and outcome must differ".into()));
        }
        if self.contexts.contains(&self.outcome) {
            return Err(Error::Input("contexts must exclude the outcome".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::Input(format!("alpha must lie in (0, 0.5], got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refusal {
    pub mediators: Vec<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub exposure: String,
    pub outcome: String,
    pub contexts: Vec<String>,
    pub alpha: f64,
    pub ci_test: String,
    pub seed: u64,
    pub n_rows: usize,
    pub n0: usize,
    pub n1: usize,
    pub joint: Vec<Vec<String>>,
    pub delta_options: DeltaOptions,
    pub estimator: Option<EstimatorConfig>,
    pub refusals: Vec<Refusal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub ci: Vec<CiRecord>,
    pub mechanism: Vec<DeltaResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: Meta,
    pub mediators: Vec<String>,
    pub admissible: Vec<AdmissibleReport>,
    pub effects: Vec<EffectEstimate>,
    pub evidence: Evidence,
}

impl Report {
    /// Admissible report of a mediator block, in any order.
    pub fn admissible_for(&self, block: &[&str]) -> Option<&AdmissibleReport> {
        let mut want: Vec<&str> = block.to_vec();
        want.sort_unstable();
        self.admissible.iter().find(|a| {
            let mut have: Vec<&str> = a.mediator.iter().map(String::as_str).collect();
            have.sort_unstable();
            have == want
        })
    }

    pub fn effect_for(&self, block: &[&str]) -> Option<&EffectEstimate> {
        let mut want: Vec<&str> = block.to_vec();
        want.sort_unstable();
        self.effects.iter().find(|e| {
            let mut have: Vec<&str> = e.mediators.iter().map(String::as_str).collect();
            have.sort_unstable();
            have == want
        })
    }

    pub fn is_refused(&self) -> bool {
        !self.meta.refusals.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Input(format!("report serialization: {e}")))
    }

    /// Plot-ready rows `mediator,delta,zeta,ci_low,ci_high`.
    pub fn plot_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Input(format!("plot csv: {e}"));
        w.write_record(["mediator", "delta", "zeta", "ci_low", "ci_high"]).map_err(io)?;
        for e in &self.effects {
            w.write_record([
                e.mediators.join("+"),
                e.delta_hat.to_string(),
                e.zeta_hat.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Input(format!("plot csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Input(e.to_string()))
    }
}

fn roles_applied(data: &Dataset, cfg: &PipelineConfig) -> Result<Dataset> {
    data.clone().with_roles(&cfg.exposure, &cfg.outcome, &cfg.contexts)
}

fn blocks(cfg: &PipelineConfig, data: &Dataset) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for b in &cfg.joint {
        if b.len() < 2 {
            return Err(Error::Input(format!("joint block {b:?} needs at least two mediators")));
        }
        for m in b {
            if !data.has_column(m) {
                return Err(Error::UnknownColumn(m.clone()));
            }
            if *m == cfg.outcome || *m == cfg.exposure {
                return Err(Error::Input(format!(
                    "joint block {b:?} contains the exposure or outcome"
                )));
            }
        }
        out.push(b.clone());
    }
    Ok(out)
}

struct Engines<'a> {
    ci: Box<dyn CiTest + 'a>,
    mech: Box<dyn MechanismTest + 'a>,
}

fn delta_options(cfg: &PipelineConfig) -> DeltaOptions {
    DeltaOptions {
        alpha: cfg.alpha,
        seed: substream(substream(cfg.seed, CI), "delta"),
        ..cfg.delta
    }
}

fn engines<'a>(data: &'a Dataset, cfg: &PipelineConfig) -> Result<Engines<'a>> {
    let ci_seed = substream(cfg.seed, CI);
    Ok(match &cfg.ci {
        CiChoice::FisherZ => Engines {
            ci: Box::new(DataCi::new(data, CiMethod::FisherZ, cfg.alpha, ci_seed)),
            mech: Box::new(DataMechanism::new(data, delta_options(cfg))),
        },
        CiChoice::HsicResidual { perms, max_rows } => Engines {
            ci: Box::new(DataCi::new(
                data,
                CiMethod::HsicResidual {
                    perms: *perms,
                    max_rows: *max_rows,
                },
                cfg.alpha,
                ci_seed,
            )),
            mech: Box::new(DataMechanism::new(data, delta_options(cfg))),
        },
        CiChoice::Oracle { graph, .. } => {
            for name in data.names() {
                graph.id(name)?;
            }
            Engines {
                ci: Box::new(OracleCi::new(graph.clone())?),
                mech: Box::new(OracleMechanism::new(graph, &cfg.exposure)?),
            }
        }
    })
}

fn meta(command: &str, data: &Dataset, cfg: &PipelineConfig) -> Result<Meta> {
    let (g0, g1) = data.groups()?;
    Ok(Meta {
        tool: "disparity".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        exposure: cfg.exposure.clone(),
        outcome: cfg.outcome.clone(),
        contexts: cfg.contexts.clone(),
        alpha: cfg.alpha,
        ci_test: cfg.ci.label(),
        seed: cfg.seed,
        n_rows: data.n_rows(),
        n0: g0.len(),
        n1: g1.len(),
        joint: cfg.joint.clone(),
        delta_options: delta_options(cfg),
        estimator: None,
        refusals: Vec::new(),
    })
}

/// Mediators, candidate sets and admissible sets for every mediator and
/// every requested joint block.
pub fn discover(data: &Dataset, cfg: &PipelineConfig) -> Result<Report> {
    cfg.validate()?;
    let data = roles_applied(data, cfg)?;
    let joint = blocks(cfg, &data)?;
    let eng = engines(&data, cfg)?;
    let problem = Problem::from_dataset(&data)?;
    let disc = Discovery::new(problem, eng.ci.as_ref(), eng.mech.as_ref(), cfg.alpha)?;
    let mediators = disc.detect_mediators()?;
    let mut targets: Vec<Vec<String>> = mediators.iter().map(|m| vec![m.clone()]).collect();
    targets.extend(joint);
    let admissible: Vec<AdmissibleReport> = targets
        .par_iter()
        .map(|t| disc.assemble_admissible_joint(t))
        .collect::<Result<_>>()?;
    let mut meta = meta("discover", &data, cfg)?;
    meta.refusals = admissible
        .iter()
        .filter(|a| !a.identifiable)
        .map(|a| Refusal {
            mediators: a.mediator.clone(),
            message: Error::NotIdentifiable {
                mediator: a.mediator.join("+"),
            }
            .to_string(),
        })
        .collect();
    Ok(Report {
        meta,
        mediators,
        admissible,
        effects: Vec::new(),
        evidence: Evidence {
            ci: eng.ci.evidence(),
            mechanism: eng.mech.evidence(),
        },
    })
}

/// Discovery followed by an effect estimate per identifiable block.
pub fn decompose(data: &Dataset, cfg: &PipelineConfig) -> Result<Report> {
    cfg.validate()?;
    let data = roles_applied(data, cfg)?;
    let (g0, g1) = data.groups()?;
    if g0.len().min(g1.len()) < MIN_GROUP_ROWS {
        return Err(Error::SampleSize(format!(
            "exposure groups have {} and {} rows, need at least {MIN_GROUP_ROWS} each",
            g0.len(),
            g1.len()
        )));
    }
    let mut report = discover(&data, cfg)?;
    let est_cfg = EstimatorConfig {
        seed: cfg.seed,
        ..cfg.estimator.clone()
    };
    let effects: Vec<EffectEstimate> = report
        .admissible
        .par_iter()
        .filter(|a| a.identifiable)
        .map(|a| estimate_effect(&data, &a.mediator, &a.b_m, &est_cfg))
        .collect::<Result<_>>()?;
    report.meta.command = "decompose".into();
    report.meta.estimator = Some(est_cfg);
    report.effects = effects;
    Ok(report)
}
