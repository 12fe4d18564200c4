//! Structural causal models: a small text format, sampling, ground-truth
//! effects and ground-truth admissible sets.
//!
//! ```text
//! # comments start with a hash
//! coef a_r = 2
//! var R = bernoulli(0.5)
//! var X = normal(0, 1)
//! var M = a_r * R + 3 * X + normal(0, 1)
//! var Y = 2 * M + tanh(X) + normal(0, 1)
//! exposure R
//! outcome Y
//! latent U
//! ```

mod effects;
mod expr;
mod truth;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::MixedGraph;
use crate::rng::rng_from;

pub use effects::{analytic_effects, monte_carlo_effects, GroundTruth, TruthMethod};
pub use expr::{Expr, Func};
pub use truth::{dag_admissible_sets, true_admissible_sets, AdmissibleTruth};

/// Additive exogenous noise of one equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    Normal { mu: f64, sd: f64 },
    Bernoulli { q: f64 },
}

impl Noise {
    pub fn mean(self) -> f64 {
        match self {
            Noise::None => 0.0,
            Noise::Normal { mu, .. } => mu,
            Noise::Bernoulli { q } => q,
        }
    }

    fn draw<R: Rng>(self, rng: &mut R, n: usize) -> Vec<f64> {
        match self {
            Noise::None => vec![0.0; n],
            Noise::Normal { mu, sd } => {
                let d = Normal::new(mu, sd).expect("validated at parse time");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Noise::Bernoulli { q } => (0..n)
                .map(|_| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::None => Ok(()),
            Noise::Normal { mu, sd } => write!(f, "normal({mu}, {sd})"),
            Noise::Bernoulli { q } => write!(f, "bernoulli({q})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub name: String,
    pub expr: Expr,
    pub noise: Noise,
    pub latent: bool,
}

/// A validated SCM. Equations are stored in file order, which is a
/// topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    pub equations: Vec<Equation>,
    pub coefs: Vec<(String, f64)>,
    pub exposure: String,
    pub outcome: Option<String>,
    index: HashMap<String, usize>,
}

fn scm_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Scm {
        line,
        msg: msg.into(),
    }
}

fn valid_name(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

impl FromStr for ScmSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut equations: Vec<Equation> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut coefs: Vec<(String, f64)> = Vec::new();
        let mut exposure: Option<(usize, String)> = None;
        let mut outcome: Option<(usize, String)> = None;
        let mut latents: Vec<(usize, String)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
            let rest = rest.trim();
            match kw {
                "var" | "coef" => {
                    let (name, rhs) = rest
                        .split_once('=')
                        .ok_or_else(|| scm_err(line, format!("expected `{kw} <name> = ...`")))?;
                    let name = name.trim();
                    if !valid_name(name) || expr::RESERVED.contains(&name) {
                        return Err(scm_err(line, format!("invalid name `{name}`")));
                    }
                    if index.contains_key(name) || coefs.iter().any(|(c, _)| c == name) {
                        return Err(scm_err(line, format!("`{name}` is defined twice")));
                    }
                    let lookup = |id: &str| -> Option<expr::Ident> {
                        if let Some(&i) = index.get(id) {
                            Some(expr::Ident::Var(i))
                        } else {
                            coefs
                                .iter()
                                .find(|(c, _)| c == id)
                                .map(|(c, v)| expr::Ident::Coef(c.clone(), *v))
                        }
                    };
                    let parsed = expr::parse(rhs, &lookup).map_err(|m| scm_err(line, m))?;
                    if kw == "coef" {
                        if !parsed.noise.is_none() || parsed.expr.has_vars() {
                            return Err(scm_err(line, "a coefficient must be a constant"));
                        }
                        coefs.push((name.to_string(), parsed.expr.eval_const()));
                    } else {
                        let noise = parsed.noise.unwrap_or(Noise::None);
                        index.insert(name.to_string(), equations.len());
                        equations.push(Equation {
                            name: name.to_string(),
                            expr: parsed.expr,
                            noise,
                            latent: false,
                        });
                    }
                }
                "exposure" | "outcome" | "latent" => {
                    if !valid_name(rest) {
                        return Err(scm_err(line, format!("expected `{kw} <name>`")));
                    }
                    let slot = (line, rest.to_string());
                    match kw {
                        "exposure" if exposure.is_some() => {
                            return Err(scm_err(line, "exposure declared twice"))
                        }
                        "exposure" => exposure = Some(slot),
                        "outcome" if outcome.is_some() => {
                            return Err(scm_err(line, "outcome declared twice"))
                        }
                        "outcome" => outcome = Some(slot),
                        _ => latents.push(slot),
                    }
                }
                other => return Err(scm_err(line, format!("unknown directive `{other}`"))),
            }
        }
        let resolve = |(line, name): &(usize, String)| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| scm_err(*line, format!("`{name}` is not a declared variable")))
        };
        let (eline, ename) = exposure.clone().ok_or_else(|| scm_err(0, "missing `exposure` directive"))?;
        let ei = resolve(&(eline, ename.clone()))?;
        if equations[ei].expr.has_vars() {
            return Err(scm_err(eline, format!("exposure `{ename}` must be a root")));
        }
        for l in &latents {
            let i = resolve(l)?;
            if i == ei {
                return Err(scm_err(l.0, "the exposure cannot be latent"));
            }
            equations[i].latent = true;
        }
        if let Some(o) = &outcome {
            let i = resolve(o)?;
            if i == ei || equations[i].latent {
                return Err(scm_err(o.0, "the outcome must be observed and differ from the exposure"));
            }
        }
        Ok(ScmSpec {
            equations,
            coefs,
            exposure: ename,
            outcome: outcome.map(|o| o.1),
            index,
        })
    }
}

impl fmt::Display for ScmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, v) in &self.coefs {
            writeln!(f, "coef {c} = {v}")?;
        }
        for eq in &self.equations {
            let names: Vec<&str> = self.equations.iter().map(|e| e.name.as_str()).collect();
            let rhs = eq.expr.render(&names);
            match (rhs.as_str(), eq.noise) {
                (_, Noise::None) => writeln!(f, "var {} = {rhs}", eq.name)?,
                ("0", n) => writeln!(f, "var {} = {n}", eq.name)?,
                (_, n) => writeln!(f, "var {} = {rhs} + {n}", eq.name)?,
            }
        }
        writeln!(f, "exposure {}", self.exposure)?;
        if let Some(o) = &self.outcome {
            writeln!(f, "outcome {o}")?;
        }
        for eq in self.equations.iter().filter(|e| e.latent) {
            writeln!(f, "latent {}", eq.name)?;
        }
        Ok(())
    }
}

impl ScmSpec {
    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read `{}`: {e}", path.display())))?;
        text.parse()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.equations.iter().map(|e| e.name.as_str()).collect()
    }

    pub fn observed(&self) -> Vec<&str> {
        self.equations
            .iter()
            .filter(|e| !e.latent)
            .map(|e| e.name.as_str())
            .collect()
    }

    pub fn outcome(&self) -> Result<&str> {
        self.outcome
            .as_deref()
            .ok_or_else(|| Error::Input("the scm declares no `outcome`".into()))
    }

    /// The causal DAG over all variables, latent ones included.
    pub fn graph(&self) -> Result<MixedGraph> {
        let mut g = MixedGraph::new(&self.names())?;
        for (i, eq) in self.equations.iter().enumerate() {
            for p in eq.expr.vars() {
                if !g.adjacent(p, i) {
                    g.add_edge_idx(p, i, crate::graph::Mark::Tail, crate::graph::Mark::Arrow)?;
                }
            }
        }
        Ok(g)
    }

    /// Evaluates every equation column-wise. `noise[v]` is the exogenous
    /// draw of `v`; `fixed(v)` overrides a variable's value entirely.
    pub(crate) fn evaluate<F>(&self, noise: &[Vec<f64>], n: usize, mut fixed: F) -> Vec<Vec<f64>>
    where
        F: FnMut(usize, &[Vec<f64>]) -> Option<Vec<f64>>,
    {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(self.equations.len());
        for (i, eq) in self.equations.iter().enumerate() {
            let col = match fixed(i, &cols) {
                Some(v) => v,
                None => {
                    let mut v = eq.expr.eval_columns(&cols, n);
                    for (a, e) in v.iter_mut().zip(&noise[i]) {
                        *a += e;
                    }
                    v
                }
            };
            cols.push(col);
        }
        cols
    }

    pub(crate) fn draw_noise<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        self.equations.iter().map(|e| e.noise.draw(rng, n)).collect()
    }

    /// `n` iid rows of the observed variables.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = rng_from(seed);
        let noise = self.draw_noise(&mut rng, n);
        let cols = self.evaluate(&noise, n, |_, _| None);
        let mut out = Vec::new();
        for (eq, col) in self.equations.iter().zip(cols) {
            if eq.latent {
                continue;
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Input(format!(
                    "equation for `{}` produced a non-finite value in row {}",
                    eq.name,
                    i + 1
                )));
            }
            out.push((eq.name.clone(), col));
        }
        Dataset::new(out)
    }
}

/// Free-function form of [`ScmSpec::sample`].
pub fn sample(spec: &ScmSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.sample(n, seed)
}

/// The running example: `X -> M1 -> M2 -> Y` with exposure `R` shifting
/// both mediators and the outcome.
pub const RUNNING_EXAMPLE: &str = include_str!("../../../../data/running_example.scm");
