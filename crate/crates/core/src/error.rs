use thiserror::Error;

/// Errors raised anywhere in the discovery and estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("graph parse error on line {line}: {msg}")]
    GraphParse { line: usize, msg: String },

    #[error("degenerate data: collinear or constant columns {columns:?}")]
    Degenerate { columns: Vec<String> },

    #[error("insufficient sample size: {0}")]
    SampleSize(String),

    #[error("conditional independence decisions are inconsistent with every MAG over {vars:?}: {decisions}")]
    Inconsistent { vars: Vec<String>, decisions: String },

    #[error(
        "effect of {mediator} is not identifiable: P(y | do(m), r) is identifiable if and only if \
         there exists an admissible set, and the evidence indicates latent mediator-outcome confounding"
    )]
    NotIdentifiable { mediator: String },

    #[error("scm line {line}: {msg}")]
    Scm { line: usize, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
