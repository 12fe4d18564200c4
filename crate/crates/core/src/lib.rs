//! Disparity decomposition with automatic admissible-set discovery.

pub mod admissible;
pub mod ci;
pub mod data;
pub mod error;
pub mod estimate;
pub mod graph;
pub mod linalg;
pub mod local_mag;
pub mod mechanism;
pub mod pipeline;
pub mod rng;
pub mod scm;

pub use ci::{CiDecision, CiTest};
pub use data::{ColumnKind, Dataset, Roles};
pub use error::{Error, Result};
pub use graph::{Mark, MixedGraph, SeparationQuery};
pub use admissible::{AdmissibleReport, Discovery, Problem, Status};
pub use estimate::{EffectEstimate, EstimatorConfig, ModelKind, Mode};
pub use local_mag::TripleType;
pub use mechanism::{DeltaOptions, MechanismTest};
pub use pipeline::{decompose, discover, CiChoice, PipelineConfig, Report};
pub use scm::ScmSpec;
