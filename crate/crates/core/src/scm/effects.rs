//! Ground-truth adjusted and unadjusted effects of an SCM.
//!
//! The spliced world runs the model with the exposure at 0, except that the
//! mediator block takes its values from an independent world with the
//! exposure at 1 and fresh exogenous noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ScmSpec;
use crate::error::{Error, Result};
use crate::rng::{child, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMethod {
    AnalyticLinear,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mediators: Vec<String>,
    pub delta: f64,
    pub zeta: f64,
    pub total: f64,
    pub method: TruthMethod,
    pub mc_se: Option<f64>,
}

fn block_ids<S: AsRef<str>>(spec: &ScmSpec, m_cols: &[S]) -> Result<(Vec<bool>, Vec<String>, usize, usize)> {
    let y = spec.id(spec.outcome()?)?;
    let r = spec.id(&spec.exposure)?;
    let mut block = vec![false; spec.equations.len()];
    let mut names = Vec::new();
    for m in m_cols {
        let i = spec.id(m.as_ref())?;
        if i == y || i == r {
            return Err(Error::Input(format!(
                "mediator block cannot contain the exposure or the outcome (`{}`)",
                m.as_ref()
            )));
        }
        block[i] = true;
        names.push(m.as_ref().to_string());
    }
    Ok((block, names, r, y))
}

/// Exact effects by mean propagation; every equation must be affine with
/// normal or bernoulli noise.
pub fn analytic_effects<S: AsRef<str>>(spec: &ScmSpec, m_cols: &[S]) -> Result<GroundTruth> {
    let (block, mediators, r, y) = block_ids(spec, m_cols)?;
    let mut lin = Vec::with_capacity(spec.equations.len());
    for eq in &spec.equations {
        match eq.expr.linear() {
            Some(l) => lin.push(l),
            _ => {
                return Err(Error::Unsupported(format!(
                    "equation for `{}` is nonlinear; use monte_carlo_effects",
                    eq.name
                )))
            }
        }
    }
    let world = |exposure: f64, spliced: Option<&[f64]>| -> Vec<f64> {
        let mut mean = vec![0.0; lin.len()];
        for (i, (c, terms)) in lin.iter().enumerate() {
            mean[i] = if i == r {
                exposure
            } else if let Some(src) = spliced.filter(|_| block[i]) {
                src[i]
            } else {
                c + terms.iter().map(|(v, a)| a * mean[*v]).sum::<f64>()
                    + spec.equations[i].noise.mean()
            };
        }
        mean
    };
    let m0 = world(0.0, None);
    let m1 = world(1.0, None);
    let ms = world(0.0, Some(&m1));
    let total = m1[y] - m0[y];
    let delta = ms[y] - m0[y];
    Ok(GroundTruth {
        mediators,
        delta,
        zeta: total - delta,
        total,
        method: TruthMethod::AnalyticLinear,
        mc_se: None,
    })
}

const BATCH: usize = 8192;

/// Streaming mean and sum of squared deviations.
#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        let mut m = Moments::default();
        for &x in xs {
            m.n += 1.0;
            let d = x - m.mean;
            m.mean += d / m.n;
            m.m2 += d * (x - m.mean);
        }
        m
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        if o.n == 0.0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Effects by simulation of the plain, exposed and spliced worlds.
pub fn monte_carlo_effects<S: AsRef<str>>(
    spec: &ScmSpec,
    m_cols: &[S],
    n_sim: usize,
    seed: u64,
) -> Result<GroundTruth> {
    let (block, mediators, r, y) = block_ids(spec, m_cols)?;
    if n_sim < 2 {
        return Err(Error::SampleSize("monte_carlo_effects needs n_sim >= 2".into()));
    }
    let batches = n_sim.div_ceil(BATCH);
    let parts: Vec<(Moments, Moments)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let n = BATCH.min(n_sim - b * BATCH);
            let mut rng = rng_from(child(seed, b as u64));
            let u = spec.draw_noise(&mut rng, n);
            let u_fresh = spec.draw_noise(&mut rng, n);
            let set = |value: f64| move |i: usize, _: &[Vec<f64>]| (i == r).then(|| vec![value; n]);
            let exposed = spec.evaluate(&u, n, set(1.0));
            let donor = spec.evaluate(&u_fresh, n, set(1.0));
            let splice = |take: bool| {
                spec.evaluate(&u, n, |i, _| {
                    if i == r {
                        Some(vec![0.0; n])
                    } else if take && block[i] {
                        Some(donor[i].clone())
                    } else {
                        None
                    }
                })
            };
            let plain = splice(false);
            let spliced = splice(true);
            let d: Vec<f64> = (0..n).map(|k| spliced[y][k] - plain[y][k]).collect();
            let t: Vec<f64> = (0..n).map(|k| exposed[y][k] - plain[y][k]).collect();
            (Moments::of(&d), Moments::of(&t))
        })
        .collect();
    let (d, t) = parts
        .into_iter()
        .fold((Moments::default(), Moments::default()), |(a, b), (c, e)| (a.merge(c), b.merge(e)));
    if !d.mean.is_finite() || !t.mean.is_finite() {
        return Err(Error::Input("simulation produced non-finite outcomes".into()));
    }
    let sd = (d.m2 / (d.n - 1.0)).sqrt();
    Ok(GroundTruth {
        mediators,
        delta: d.mean,
        zeta: t.mean - d.mean,
        total: t.mean,
        method: TruthMethod::MonteCarlo,
        mc_se: Some(sd / (n_sim as f64).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::RUNNING_EXAMPLE;

    #[test]
    fn running_example_closed_forms() {
        let spec: ScmSpec = RUNNING_EXAMPLE.parse().unwrap();
        let g = analytic_effects(&spec, &["M1"]).unwrap();
        assert!((g.delta - 16.0).abs() < 1e-12);
        assert!((analytic_effects(&spec, &["M2"]).unwrap().delta - 21.0).abs() < 1e-12);
        assert!((analytic_effects(&spec, &["M1", "M2"]).unwrap().delta - 25.0).abs() < 1e-12);
        // rho_R + rho_1 a_R + rho_2 (b_1 a_R + b_R)
        assert!((g.total - (4.0 + 2.0 * 2.0 + 3.0 * (2.0 * 2.0 + 3.0))).abs() < 1e-12);
        assert_eq!(g.delta + g.zeta, g.total);
    }

    #[test]
    fn monte_carlo_matches_closed_forms() {
        let spec: ScmSpec = RUNNING_EXAMPLE.parse().unwrap();
        for (block, want) in [(vec!["M1"], 16.0), (vec!["M2"], 21.0), (vec!["M1", "M2"], 25.0)] {
            let g = monte_carlo_effects(&spec, &block, 200_000, 7).unwrap();
            let se = g.mc_se.unwrap();
            assert!((g.delta - want).abs() < 4.0 * se, "{block:?}: {} +- {se}", g.delta);
            assert!((g.delta + g.zeta - g.total).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_block_has_exactly_zero_delta() {
        let spec: ScmSpec = RUNNING_EXAMPLE.parse().unwrap();
        let g = monte_carlo_effects(&spec, &[] as &[&str], 10_000, 1).unwrap();
        assert_eq!(g.delta, 0.0);
        assert_eq!(g.mc_se, Some(0.0));
    }

    #[test]
    fn nonlinear_specs_need_simulation() {
        let spec: ScmSpec = "var R = bernoulli(0.5)\nvar X = normal(0,1)\n\
                             var M = tanh(R + X) + normal(0,1)\nvar Y = 2 * M + normal(0,1)\n\
                             exposure R\noutcome Y"
            .parse()
            .unwrap();
        assert!(matches!(analytic_effects(&spec, &["M"]), Err(Error::Unsupported(_))));
        let a = monte_carlo_effects(&spec, &["M"], 40_000, 3).unwrap();
        let b = monte_carlo_effects(&spec, &["M"], 160_000, 3).unwrap();
        assert!(a.delta.is_finite());
        let ratio = a.mc_se.unwrap() / b.mc_se.unwrap();
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn direct_path_only() {
        let spec: ScmSpec = "var R = bernoulli(0.5)\nvar M = normal(0,1)\n\
                             var Y = 0 * M + 4 * R + normal(0,1)\nexposure R\noutcome Y"
            .parse()
            .unwrap();
        let g = analytic_effects(&spec, &["M"]).unwrap();
        assert_eq!(g.delta, 0.0);
        assert_eq!(g.zeta, 4.0);
    }
}
