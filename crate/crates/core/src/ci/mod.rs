//! Conditional-independence decisions from data or from a ground-truth graph.
//!
//! Every source implements [`CiTest`], so the discovery code is identical in
//! data and oracle mode. Decisions are memoized per unordered query and double
//! as the evidence log of a run.

mod fisher;
mod hsic;

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{m_separated, MixedGraph, SeparationQuery};
use crate::linalg::residuals;
use crate::rng::{rng_from, substream};

pub use fisher::fisher_z;
pub use hsic::{hsic_statistic, hsic_test};
pub(crate) use hsic::{centered_gram, hsic_from_grams, median_distance};

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_PERMUTATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiDecision {
    pub independent: bool,
    pub statistic: f64,
    pub p_value: f64,
    pub test_name: String,
    pub conditioning_set: Vec<String>,
    /// Set when an input was constant and the test could not run.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl CiDecision {
    /// The decision re-thresholded at a different level.
    pub fn independent_at(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// One logged query and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRecord {
    pub x: String,
    pub y: String,
    #[serde(flatten)]
    pub decision: CiDecision,
}

/// A source of conditional-independence decisions over named variables.
pub trait CiTest: Send + Sync {
    fn test(&self, x: &str, y: &str, z: &[String]) -> Result<CiDecision>;
    fn alpha(&self) -> f64;
    /// Every decision made so far, in canonical query order.
    fn evidence(&self) -> Vec<CiRecord>;
}

type QueryKey = (String, String, Vec<String>);

fn query_key(x: &str, y: &str, z: &[String]) -> QueryKey {
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let mut z = z.to_vec();
    z.sort();
    (a.to_string(), b.to_string(), z)
}

#[derive(Default)]
struct DecisionLog(Mutex<BTreeMap<QueryKey, CiDecision>>);

impl DecisionLog {
    fn get_or<F>(&self, x: &str, y: &str, z: &[String], f: F) -> Result<CiDecision>
    where
        F: FnOnce(&QueryKey) -> Result<CiDecision>,
    {
        let key = query_key(x, y, z);
        if let Some(d) = self.0.lock().expect("log poisoned").get(&key) {
            return Ok(d.clone());
        }
        let d = f(&key)?;
        self.0
            .lock()
            .expect("log poisoned")
            .insert(key, d.clone());
        Ok(d)
    }

    fn records(&self) -> Vec<CiRecord> {
        self.0
            .lock()
            .expect("log poisoned")
            .iter()
            .map(|((x, y, _), d)| CiRecord {
                x: x.clone(),
                y: y.clone(),
                decision: d.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    FisherZ,
    /// Regress both variables on the conditioning set, then HSIC-test the
    /// residuals on at most `max_rows` rows.
    HsicResidual { perms: usize, max_rows: usize },
}

/// Data-driven CI decisions.
pub struct DataCi<'a> {
    data: &'a Dataset,
    method: CiMethod,
    alpha: f64,
    seed: u64,
    log: DecisionLog,
}

impl<'a> DataCi<'a> {
    pub fn new(data: &'a Dataset, method: CiMethod, alpha: f64, seed: u64) -> Self {
        DataCi {
            data,
            method,
            alpha,
            seed,
            log: DecisionLog::default(),
        }
    }

    pub fn fisher_z(data: &'a Dataset, alpha: f64) -> Self {
        Self::new(data, CiMethod::FisherZ, alpha, 0)
    }
}

impl CiTest for DataCi<'_> {
    fn test(&self, x: &str, y: &str, z: &[String]) -> Result<CiDecision> {
        self.log.get_or(x, y, z, |key| match self.method {
            CiMethod::FisherZ => fisher_z(self.data, &key.0, &key.1, &key.2, self.alpha),
            CiMethod::HsicResidual { perms, max_rows } => {
                let label = format!("{}|{}|{}", key.0, key.1, key.2.join(","));
                hsic_residual(
                    self.data,
                    &key.0,
                    &key.1,
                    &key.2,
                    self.alpha,
                    perms,
                    max_rows,
                    substream(self.seed, &label),
                )
            }
        })
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn evidence(&self) -> Vec<CiRecord> {
        self.log.records()
    }
}

/// Residualize-then-HSIC test of `x` and `y` given `z`.
#[allow(clippy::too_many_arguments)]
pub fn hsic_residual<S: AsRef<str>>(
    data: &Dataset,
    x: &str,
    y: &str,
    z: &[S],
    alpha: f64,
    perms: usize,
    max_rows: usize,
    seed: u64,
) -> Result<CiDecision> {
    let n = data.n_rows();
    let mut rng = rng_from(seed);
    let rows: Vec<usize> = if n > max_rows {
        let mut r = sample(&mut rng, n, max_rows).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..n).collect()
    };
    let pick = |v: &[f64]| -> Vec<f64> { rows.iter().map(|&i| v[i]).collect() };
    let mut feats: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for c in z {
        for col in data.design_columns(c.as_ref())? {
            feats.push(pick(&col));
            names.push(c.as_ref().to_string());
        }
    }
    let fref: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
    let rx = residuals(&fref, &names, &pick(data.column(x)?))?;
    let ry = residuals(&fref, &names, &pick(data.column(y)?))?;
    let mut dec = hsic_test(&rx, &ry, alpha, perms, rng_seed(&mut rng))?;
    dec.test_name = "hsic_residual".into();
    dec.conditioning_set = z.iter().map(|s| s.as_ref().to_string()).collect();
    Ok(dec)
}

fn rng_seed<R: rand::Rng>(rng: &mut R) -> u64 {
    rng.random()
}

/// Exact decisions read off a ground-truth DAG by d-separation.
pub struct OracleCi {
    truth: MixedGraph,
    log: DecisionLog,
}

impl OracleCi {
    pub fn new(truth: MixedGraph) -> Result<Self> {
        if !truth.is_dag() {
            return Err(Error::Graph("oracle CI needs a DAG".into()));
        }
        Ok(OracleCi {
            truth,
            log: DecisionLog::default(),
        })
    }

    pub fn truth(&self) -> &MixedGraph {
        &self.truth
    }
}

/// `independent = m_separated(truth, q)`, with p-value 1 or 0.
pub fn oracle_ci(truth: &MixedGraph, q: &SeparationQuery) -> Result<CiDecision> {
    let independent = m_separated(truth, q)?;
    Ok(CiDecision {
        independent,
        statistic: if independent { 0.0 } else { f64::INFINITY },
        p_value: if independent { 1.0 } else { 0.0 },
        test_name: "oracle".into(),
        conditioning_set: q.z.clone(),
        degenerate: false,
    })
}

impl CiTest for OracleCi {
    fn test(&self, x: &str, y: &str, z: &[String]) -> Result<CiDecision> {
        self.log.get_or(x, y, z, |key| {
            oracle_ci(&self.truth, &SeparationQuery::new(&key.0, &key.1, &key.2)?)
        })
    }

    fn alpha(&self) -> f64 {
        DEFAULT_ALPHA
    }

    fn evidence(&self) -> Vec<CiRecord> {
        self.log.records()
    }
}
