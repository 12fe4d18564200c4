//! Fixtures shared by the benchmarks and the end-to-end checks.

use std::path::{Path, PathBuf};

use disparity_core::pipeline::PipelineConfig;
use disparity_core::scm::RUNNING_EXAMPLE;
use disparity_core::{Dataset, MixedGraph, Result, ScmSpec};

/// Path of a file under the repository root.
pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn running_example_spec() -> ScmSpec {
    RUNNING_EXAMPLE.parse().expect("bundled model parses")
}

/// Running-example sample with roles `R`, `Y` and context `R`.
pub fn running_example(n: usize, seed: u64) -> Result<Dataset> {
    running_example_spec().sample(n, seed)?.with_roles("R", "Y", &["R"])
}

/// True graph of the running example.
pub fn running_example_graph() -> MixedGraph {
    let edges = [
        ("R", "M1"),
        ("X", "M1"),
        ("M1", "M2"),
        ("R", "M2"),
        ("X", "M2"),
        ("M1", "Y"),
        ("M2", "Y"),
        ("X", "Y"),
        ("R", "Y"),
    ];
    MixedGraph::dag(&["R", "X", "M1", "M2", "Y"], &edges).expect("valid graph")
}

pub const SPINE_EXPOSURE: &str = "white";
pub const SPINE_OUTCOME: &str = "bp_year4";
pub const SPINE_CONTEXTS: [&str; 3] = ["white", "age", "gender"];

/// The bundled synthetic spine cohort.
pub fn spine() -> Result<Dataset> {
    Dataset::from_csv_path(repo_path("data/spine_synthetic.csv"))
}

pub fn spine_spec() -> ScmSpec {
    std::fs::read_to_string(repo_path("data/spine_synthetic.scm"))
        .expect("bundled model present")
        .parse()
        .expect("bundled model parses")
}

/// Pipeline settings for the spine cohort with Fisher z tests and the
/// joint block `income + working`.
pub fn spine_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(SPINE_EXPOSURE, SPINE_OUTCOME, &SPINE_CONTEXTS);
    cfg.joint = vec![vec!["income".into(), "working".into()]];
    cfg.seed = seed;
    cfg.estimator.seed = seed;
    cfg
}
