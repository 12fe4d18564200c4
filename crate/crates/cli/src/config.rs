//! Run configuration: TOML file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use disparity_core::estimate::{EstimatorConfig, ModelKind, Mode};
use disparity_core::mechanism::DeltaOptions;
use disparity_core::pipeline::{CiChoice, PipelineConfig};
use disparity_core::MixedGraph;

/// Keys accepted in a `--config` file. All optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub exposure: Option<String>,
    pub outcome: Option<String>,
    pub contexts: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub ci_test: Option<String>,
    pub model: Option<String>,
    pub k: Option<usize>,
    pub mode: Option<String>,
    pub bootstrap: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub joint: Option<Vec<String>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config `{}`", path.display()))
    }

    /// `self` with every key set in `flags` replaced.
    pub fn overridden_by(self, flags: FileConfig) -> FileConfig {
        FileConfig {
            input: flags.input.or(self.input),
            exposure: flags.exposure.or(self.exposure),
            outcome: flags.outcome.or(self.outcome),
            contexts: flags.contexts.or(self.contexts),
            alpha: flags.alpha.or(self.alpha),
            ci_test: flags.ci_test.or(self.ci_test),
            model: flags.model.or(self.model),
            k: flags.k.or(self.k),
            mode: flags.mode.or(self.mode),
            bootstrap: flags.bootstrap.or(self.bootstrap),
            level: flags.level.or(self.level),
            seed: flags.seed.or(self.seed),
            out: flags.out.or(self.out),
            joint: flags.joint.or(self.joint),
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub out: Option<PathBuf>,
    pub pipeline: PipelineConfig,
}

pub fn parse_block(text: &str) -> anyhow::Result<Vec<String>> {
    let block: Vec<String> = text.split('+').map(|s| s.trim().to_string()).collect();
    if block.len() < 2 || block.iter().any(String::is_empty) {
        bail!("joint block `{text}` must look like `m1+m2`");
    }
    Ok(block)
}

fn parse_ci(text: &str) -> anyhow::Result<CiChoice> {
    Ok(match text {
        "fisher_z" => CiChoice::FisherZ,
        "hsic_residual" => CiChoice::hsic_residual(),
        other => match other.strip_prefix("oracle:") {
            Some(path) => {
                let src = std::fs::read_to_string(path).with_context(|| format!("cannot read graph file `{path}`"))?;
                let graph: MixedGraph = src.parse().with_context(|| format!("invalid graph file `{path}`"))?;
                CiChoice::Oracle {
                    graph,
                    label: path.to_string(),
                }
            }
            None => bail!("unknown ci_test `{other}`; expected fisher_z, hsic_residual or oracle:<graph file>"),
        },
    })
}

impl RunConfig {
    pub fn resolve(cfg: FileConfig) -> anyhow::Result<Self> {
        let input = cfg.input.context("missing --input")?;
        let exposure = cfg.exposure.context("missing --exposure")?;
        let outcome = cfg.outcome.context("missing --outcome")?;
        let contexts = cfg.contexts.unwrap_or_else(|| vec![exposure.clone()]);
        let model = match (cfg.model.as_deref().unwrap_or("linear"), cfg.k) {
            ("linear", None) => ModelKind::Linear,
            ("linear", Some(_)) => bail!("--k applies to the knn model only"),
            ("knn", k) => ModelKind::Knn { k: k.unwrap_or(25) },
            (other, _) => bail!("unknown model `{other}`; expected linear or knn"),
        };
        let mode = match cfg.mode.as_deref().unwrap_or("empirical") {
            "empirical" | "empirical_product" => Mode::EmpiricalProduct,
            "kde" => Mode::Kde,
            other => bail!("unknown mode `{other}`; expected empirical or kde"),
        };
        let seed = cfg.seed.unwrap_or(0);
        let defaults = EstimatorConfig::default();
        let joint = cfg
            .joint
            .unwrap_or_default()
            .iter()
            .map(|b| parse_block(b))
            .collect::<anyhow::Result<_>>()?;
        Ok(RunConfig {
            input,
            out: cfg.out,
            pipeline: PipelineConfig {
                exposure,
                outcome,
                contexts,
                alpha: cfg.alpha.unwrap_or(0.05),
                ci: parse_ci(cfg.ci_test.as_deref().unwrap_or("fisher_z"))?,
                delta: DeltaOptions::default(),
                estimator: EstimatorConfig {
                    model,
                    mode,
                    bootstrap_reps: cfg.bootstrap.unwrap_or(defaults.bootstrap_reps),
                    level: cfg.level.unwrap_or(defaults.level),
                    seed,
                    ..defaults
                },
                joint,
                seed,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: FileConfig = toml::from_str(
            "input = \"a.csv\"\nexposure = \"R\"\noutcome = \"Y\"\nalpha = 0.01\nseed = 4\njoint = [\"M1+M2\"]",
        )
        .unwrap();
        let flags = FileConfig {
            alpha: Some(0.1),
            ..Default::default()
        };
        let run = RunConfig::resolve(file.overridden_by(flags)).unwrap();
        assert_eq!(run.pipeline.alpha, 0.1);
        assert_eq!(run.pipeline.seed, 4);
        assert_eq!(run.pipeline.contexts, vec!["R"]);
        assert_eq!(run.pipeline.joint, vec![vec!["M1", "M2"]]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
        assert!(parse_block("M1").is_err());
        assert!(parse_block("M1+").is_err());
        let base = FileConfig {
            input: Some("a.csv".into()),
            exposure: Some("R".into()),
            outcome: Some("Y".into()),
            ..Default::default()
        };
        for bad in [
            FileConfig {
                mode: Some("mcmc".into()),
                ..base.clone()
            },
            FileConfig {
                ci_test: Some("oracle:/no/such/file".into()),
                ..base.clone()
            },
            FileConfig {
                k: Some(3),
                ..base.clone()
            },
        ] {
            assert!(RunConfig::resolve(bad).is_err());
        }
    }
}
