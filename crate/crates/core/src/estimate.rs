//! Plug-in estimation of adjusted and unadjusted effects given an admissible
//! set, with percentile bootstrap intervals.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset};
use crate::error::{Error, Result};
use crate::linalg::ols;
use crate::rng::{child, rng_from, substream, MCMC};

/// Smallest exposure group the estimator accepts.
pub const MIN_GROUP_ROWS: usize = 30;
/// Pair budget for nonlinear models under the empirical product measure.
const MAX_PAIRS: usize = 20_000;
/// Chain-factorized densities are sampled directly up to this many factors.
const MAX_DIRECT_FACTORS: usize = 4;
const MCMC_STEPS: usize = 5000;
const MCMC_BURN_IN: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Linear,
    Knn { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EmpiricalProduct,
    Kde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub model: ModelKind,
    pub mode: Mode,
    pub bootstrap_reps: usize,
    /// Interval level `1 - gamma`.
    pub level: f64,
    /// Monte Carlo draws of the adjustment law in kde mode.
    pub kde_draws: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            model: ModelKind::Linear,
            mode: Mode::EmpiricalProduct,
            bootstrap_reps: 200,
            level: 0.95,
            kde_draws: 4000,
            seed: 0,
        }
    }
}

/// One-hot encoding of a feature column, first level dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Encoder {
    name: String,
    levels: Option<Vec<i64>>,
}

impl Encoder {
    fn new(data: &Dataset, name: &str) -> Result<Self> {
        let levels = match data.kind(name)? {
            ColumnKind::Categorical => {
                let set: BTreeSet<i64> = data.column(name)?.iter().map(|&v| v as i64).collect();
                Some(set.into_iter().collect())
            }
            _ => None,
        };
        Ok(Encoder {
            name: name.to_string(),
            levels,
        })
    }

    fn width(&self) -> usize {
        self.levels.as_ref().map_or(1, |l| l.len().saturating_sub(1))
    }

    fn encode(&self, v: f64, out: &mut Vec<f64>) {
        match &self.levels {
            None => out.push(v),
            Some(levels) => out.extend(levels[1..].iter().map(|&l| f64::from(u8::from(v as i64 == l)))),
        }
    }

    fn design_names(&self) -> Vec<String> {
        match &self.levels {
            None => vec![self.name.clone()],
            Some(levels) => levels[1..].iter().map(|l| format!("{}={l}", self.name)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fit {
    Linear {
        coefficients: Vec<f64>,
    },
    Knn {
        k: usize,
        center: Vec<f64>,
        scale: Vec<f64>,
        /// Standardized training rows, row-major.
        x: Vec<f64>,
        y: Vec<f64>,
    },
}

/// `E(Y | m, b, R = 0)` fitted on the unexposed rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub m_cols: Vec<String>,
    pub b_cols: Vec<String>,
    pub kind: ModelKind,
    pub r_squared: f64,
    pub n_train: usize,
    encoders: Vec<Encoder>,
    fit: Fit,
}

impl OutcomeModel {
    /// Feature columns, mediators first.
    pub fn features(&self) -> Vec<String> {
        self.m_cols.iter().chain(&self.b_cols).cloned().collect()
    }

    /// `[intercept, slopes..]` over the encoded design for a linear fit.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.fit {
            Fit::Linear { coefficients } => Some(coefficients),
            Fit::Knn { .. } => None,
        }
    }

    fn encode(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoders.iter().map(Encoder::width).sum());
        for (e, &v) in self.encoders.iter().zip(raw) {
            e.encode(v, &mut out);
        }
        out
    }

    /// Prediction at raw feature values ordered as [`OutcomeModel::features`].
    pub fn predict(&self, raw: &[f64]) -> f64 {
        let x = self.encode(raw);
        match &self.fit {
            Fit::Linear { coefficients } => {
                coefficients[0] + coefficients[1..].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>()
            }
            Fit::Knn {
                k,
                center,
                scale,
                x: train,
                y,
            } => {
                let p = center.len();
                let q: Vec<f64> = (0..p).map(|j| (x[j] - center[j]) / scale[j]).collect();
                let mut d: Vec<(f64, usize)> = train
                    .chunks_exact(p.max(1))
                    .take(y.len())
                    .enumerate()
                    .map(|(i, row)| (row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                    .collect();
                let k = (*k).min(d.len());
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
            }
        }
    }
}

fn exposure_groups(data: &Dataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let (g0, g1) = data.groups()?;
    for (g, label) in [(&g0, "R = 0"), (&g1, "R = 1")] {
        if g.len() < MIN_GROUP_ROWS {
            return Err(Error::SampleSize(format!(
                "group {label} has {} rows, need at least {MIN_GROUP_ROWS}",
                g.len()
            )));
        }
    }
    Ok((g0, g1))
}

fn check_columns<S: AsRef<str>>(data: &Dataset, m_cols: &[S], b_cols: &[S]) -> Result<(Vec<String>, Vec<String>)> {
    let roles = data.roles()?;
    let m: Vec<String> = m_cols.iter().map(|s| s.as_ref().to_string()).collect();
    let b: Vec<String> = b_cols.iter().map(|s| s.as_ref().to_string()).collect();
    if m.is_empty() {
        return Err(Error::Input("empty mediator block".into()));
    }
    let mut seen = BTreeSet::new();
    for c in m.iter().chain(&b) {
        data.column(c)?;
        if *c == roles.exposure || *c == roles.outcome {
            return Err(Error::Input(format!("`{c}` cannot be a mediator or adjustment column")));
        }
        if !seen.insert(c.clone()) {
            return Err(Error::Input(format!("column `{c}` listed twice")));
        }
    }
    Ok((m, b))
}

/// Fits the outcome model on the `R = 0` rows.
pub fn fit_outcome_model<S: AsRef<str>>(
    data: &Dataset,
    m_cols: &[S],
    b_cols: &[S],
    kind: ModelKind,
) -> Result<OutcomeModel> {
    let (m_cols, b_cols) = check_columns(data, m_cols, b_cols)?;
    let (g0, _) = data.groups()?;
    if g0.len() < MIN_GROUP_ROWS {
        return Err(Error::SampleSize(format!(
            "outcome model needs at least {MIN_GROUP_ROWS} rows with R = 0, got {}",
            g0.len()
        )));
    }
    let train = data.select_rows(&g0);
    let cols: Vec<String> = m_cols.iter().chain(&b_cols).cloned().collect();
    let encoders = cols
        .iter()
        .map(|c| Encoder::new(&train, c))
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<&[f64]> = cols.iter().map(|c| train.column(c)).collect::<Result<_>>()?;
    let n = g0.len();
    let mut design: Vec<Vec<f64>> = vec![Vec::with_capacity(n); encoders.iter().map(Encoder::width).sum()];
    let mut row = Vec::new();
    for i in 0..n {
        row.clear();
        for (e, col) in encoders.iter().zip(&raw) {
            e.encode(col[i], &mut row);
        }
        for (d, v) in design.iter_mut().zip(&row) {
            d.push(*v);
        }
    }
    let y = train.column(&data.roles()?.outcome)?;
    let names: Vec<String> = encoders.iter().flat_map(Encoder::design_names).collect();
    let fit = match kind {
        ModelKind::Linear => {
            let refs: Vec<&[f64]> = design.iter().map(Vec::as_slice).collect();
            Fit::Linear {
                coefficients: ols(&refs, &names, y)?,
            }
        }
        ModelKind::Knn { k } => {
            if k == 0 || k > n {
                return Err(Error::Input(format!("k = {k} must lie in 1..={n}")));
            }
            let p = design.len();
            let center: Vec<f64> = design.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
            let scale: Vec<f64> = design
                .iter()
                .zip(&center)
                .map(|(c, m)| {
                    let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
                    if sd > 0.0 {
                        sd
                    } else {
                        1.0
                    }
                })
                .collect();
            let (dr, cr, sr) = (&design, &center, &scale);
            let mut x: Vec<f64> = (0..n)
                .flat_map(|i| (0..p).map(move |j| (dr[j][i] - cr[j]) / sr[j]))
                .collect();
            if p == 0 {
                x = vec![0.0; n];
            }
            Fit::Knn {
                k,
                center,
                scale,
                x,
                y: y.to_vec(),
            }
        }
    };
    let mut model = OutcomeModel {
        m_cols,
        b_cols,
        kind,
        r_squared: 0.0,
        n_train: n,
        encoders,
        fit,
    };
    let ybar = y.iter().sum::<f64>() / n as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    let mut feat = vec![0.0; cols.len()];
    for i in 0..n {
        for (f, col) in feat.iter_mut().zip(&raw) {
            *f = col[i];
        }
        let r = y[i] - model.predict(&feat);
        ss_res += r * r;
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    model.r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(model)
}

/// Point estimate of the adjusted effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub delta_hat: f64,
    pub zeta_hat: f64,
    pub total_disparity_hat: f64,
    /// Monte Carlo standard error of the plug-in sum, when it is sampled.
    pub mc_se: Option<f64>,
    pub n0: usize,
    pub n1: usize,
}

fn rows(data: &Dataset, cols: &[String], idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    let c: Vec<&[f64]> = cols.iter().map(|n| data.column(n)).collect::<Result<_>>()?;
    Ok(idx.iter().map(|&i| c.iter().map(|col| col[i]).collect()).collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and standard error of a sequence; `batches > 1` uses batch means.
fn mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mu = mean(xs);
    if batches > 1 && n >= 2 * batches {
        let size = n / batches;
        let bm: Vec<f64> = xs.chunks_exact(size).take(batches).map(mean).collect();
        let m = mean(&bm);
        let var = bm.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
        return (mu, (var / batches as f64).sqrt());
    }
    let var = xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n.max(2) - 1) as f64;
    (mu, (var / n as f64).sqrt())
}

/// `delta_hat = E_{b ~ p(b | R = 0), m ~ p(m | R = 1)} model(m, b) - mean(Y | R = 0)`
/// and `zeta_hat = gap - delta_hat`.
pub fn estimate_adjusted(data: &Dataset, model: &OutcomeModel, mode: Mode, kde_draws: usize, seed: u64) -> Result<PointEstimate> {
    let (g0, g1) = exposure_groups(data)?;
    let y = data.column(&data.roles()?.outcome)?;
    let y0 = g0.iter().map(|&i| y[i]).sum::<f64>() / g0.len() as f64;
    let y1 = g1.iter().map(|&i| y[i]).sum::<f64>() / g1.len() as f64;
    let gap = y1 - y0;
    let m_rows = rows(data, &model.m_cols, &g1)?;
    let b_rows = rows(data, &model.b_cols, &g0)?;
    let joined = |m: &[f64], b: &[f64]| -> Vec<f64> { m.iter().chain(b).copied().collect() };
    let (plug_in, mc_se) = match mode {
        Mode::EmpiricalProduct => match &model.fit {
            // Separable, so the double sum is a product of group means.
            Fit::Linear { coefficients } => {
                let enc_mean = |rs: &[Vec<f64>], encs: &[Encoder]| -> Vec<f64> {
                    let mut acc: Vec<f64> = Vec::new();
                    for r in rs {
                        let mut v = Vec::new();
                        for (e, &x) in encs.iter().zip(r) {
                            e.encode(x, &mut v);
                        }
                        if acc.is_empty() {
                            acc = vec![0.0; v.len()];
                        }
                        for (a, x) in acc.iter_mut().zip(v) {
                            *a += x;
                        }
                    }
                    acc.iter().map(|a| a / rs.len() as f64).collect()
                };
                let nm = model.m_cols.len();
                let mut x = enc_mean(&m_rows, &model.encoders[..nm]);
                x.extend(enc_mean(&b_rows, &model.encoders[nm..]));
                let v = coefficients[0] + coefficients[1..].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>();
                (v, None)
            }
            Fit::Knn { .. } => {
                let total = g0.len() * g1.len();
                if total <= MAX_PAIRS {
                    let vals: Vec<f64> = b_rows
                        .par_iter()
                        .flat_map_iter(|b| m_rows.iter().map(|m| model.predict(&joined(m, b))))
                        .collect();
                    (mean(&vals), None)
                } else {
                    let mut rng = rng_from(seed);
                    let pairs: Vec<(usize, usize)> = (0..MAX_PAIRS)
                        .map(|_| (rng.random_range(0..m_rows.len()), rng.random_range(0..b_rows.len())))
                        .collect();
                    let vals: Vec<f64> = pairs
                        .par_iter()
                        .map(|&(j, i)| model.predict(&joined(&m_rows[j], &b_rows[i])))
                        .collect();
                    let (mu, se) = mean_se(&vals, 0);
                    (mu, Some(se))
                }
            }
        },
        Mode::Kde => {
            let kinds: Vec<bool> = model
                .b_cols
                .iter()
                .map(|c| Ok(data.kind(c)? != ColumnKind::Continuous))
                .collect::<Result<_>>()?;
            let kde = ChainKde::new(&b_rows, &kinds);
            let mut rng = rng_from(seed);
            let (draws, batches) = if kde.dims() > MAX_DIRECT_FACTORS {
                let mut mrng = rng_from(substream(seed, MCMC));
                (kde.metropolis(&mut mrng, MCMC_STEPS, MCMC_BURN_IN), 20)
            } else {
                ((0..kde_draws.max(2)).map(|_| kde.sample(&mut rng)).collect(), 0)
            };
            let ms: Vec<&Vec<f64>> = (0..draws.len())
                .map(|_| m_rows.choose(&mut rng).expect("nonempty group"))
                .collect();
            let vals: Vec<f64> = draws
                .par_iter()
                .zip(ms.par_iter())
                .map(|(b, m)| model.predict(&joined(m, b)))
                .collect();
            let (mu, se) = mean_se(&vals, batches);
            (mu, Some(se))
        }
    };
    let delta_hat = plug_in - y0;
    Ok(PointEstimate {
        delta_hat,
        zeta_hat: gap - delta_hat,
        total_disparity_hat: gap,
        mc_se,
        n0: g0.len(),
        n1: g1.len(),
    })
}

/// Chain-factorized kernel density over the adjustment columns: Silverman
/// bandwidths for continuous factors and add-0.5 smoothed frequency tables
/// for discrete ones.
struct ChainKde<'a> {
    rows: &'a [Vec<f64>],
    discrete: Vec<bool>,
    bandwidth: Vec<f64>,
    levels: Vec<Vec<f64>>,
}

fn silverman(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let sd = (xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

impl<'a> ChainKde<'a> {
    fn new(rows: &'a [Vec<f64>], discrete: &[bool]) -> Self {
        let d = discrete.len();
        let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
        let bandwidth = (0..d)
            .map(|k| if discrete[k] { 0.0 } else { silverman(&col(k)) })
            .collect();
        let levels = (0..d)
            .map(|k| {
                if !discrete[k] {
                    return Vec::new();
                }
                let set: BTreeSet<u64> = col(k).iter().map(|v| v.to_bits()).collect();
                let mut l: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
                l.sort_by(f64::total_cmp);
                l
            })
            .collect();
        ChainKde {
            rows,
            discrete: discrete.to_vec(),
            bandwidth,
            levels,
        }
    }

    fn dims(&self) -> usize {
        self.discrete.len()
    }

    /// Log kernel of factor `k` between `v` and training row `i`.
    fn log_kernel(&self, k: usize, v: f64, i: usize) -> f64 {
        let x = self.rows[i][k];
        if self.discrete[k] || self.bandwidth[k] <= 0.0 {
            if v == x {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            let z = (v - x) / self.bandwidth[k];
            -0.5 * z * z
        }
    }

    /// Normalized row weights given the first `k` coordinates of `b`.
    fn weights(&self, b: &[f64], k: usize) -> Vec<f64> {
        let n = self.rows.len();
        let logw: Vec<f64> = (0..n)
            .map(|i| (0..k).map(|l| self.log_kernel(l, b[l], i)).sum())
            .collect();
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return vec![1.0 / n as f64; n];
        }
        let w: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    fn discrete_probs(&self, k: usize, w: &[f64]) -> Vec<f64> {
        let levels = &self.levels[k];
        // Pseudo-count 0.5 per level on the scale of the effective sample.
        let n_eff = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        let mut p = vec![0.5 / n_eff; levels.len()];
        for (i, wi) in w.iter().enumerate() {
            let l = levels
                .binary_search_by(|x| x.total_cmp(&self.rows[i][k]))
                .expect("level of a training row");
            p[l] += wi;
        }
        let s: f64 = p.iter().sum();
        p.into_iter().map(|x| x / s).collect()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dims();
        let mut b = vec![0.0; d];
        for k in 0..d {
            let w = self.weights(&b, k);
            if self.discrete[k] {
                let p = self.discrete_probs(k, &w);
                b[k] = self.levels[k][pick(&p, rng)];
            } else {
                let i = pick(&w, rng);
                let z: f64 = StandardNormal.sample(rng);
                b[k] = self.rows[i][k] + self.bandwidth[k] * z;
            }
        }
        b
    }

    fn log_density(&self, b: &[f64]) -> f64 {
        let mut out = 0.0;
        for k in 0..self.dims() {
            let w = self.weights(b, k);
            if self.discrete[k] {
                let p = self.discrete_probs(k, &w);
                match self.levels[k].binary_search_by(|x| x.total_cmp(&b[k])) {
                    Ok(l) => out += p[l].ln(),
                    Err(_) => return f64::NEG_INFINITY,
                }
            } else {
                let h = self.bandwidth[k];
                let dens: f64 = if h > 0.0 {
                    w.iter()
                        .enumerate()
                        .map(|(i, wi)| wi * self.log_kernel(k, b[k], i).exp())
                        .sum::<f64>()
                        / (h * (2.0 * std::f64::consts::PI).sqrt())
                } else {
                    w.iter()
                        .enumerate()
                        .filter(|(i, _)| self.rows[*i][k] == b[k])
                        .map(|(_, wi)| wi)
                        .sum()
                };
                out += dens.ln();
            }
        }
        out
    }

    /// Random-walk Metropolis on the chain-factorized density.
    fn metropolis<R: Rng>(&self, rng: &mut R, steps: usize, burn_in: usize) -> Vec<Vec<f64>> {
        let d = self.dims();
        let mut cur = self.rows.choose(rng).expect("nonempty group").clone();
        let mut cur_lp = self.log_density(&cur);
        let mut out = Vec::with_capacity(steps - burn_in);
        let step = 2.38 / (d as f64).sqrt();
        for t in 0..steps {
            let mut prop = cur.clone();
            for (k, v) in prop.iter_mut().enumerate() {
                if self.discrete[k] {
                    if rng.random::<f64>() < 1.0 / d as f64 {
                        *v = *self.levels[k].choose(rng).expect("at least one level");
                    }
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += step * self.bandwidth[k].max(1e-12) * z * 3.0;
                }
            }
            let lp = self.log_density(&prop);
            if lp.is_finite() && rng.random::<f64>().ln() < lp - cur_lp {
                cur = prop;
                cur_lp = lp;
            }
            if t >= burn_in {
                out.push(cur.clone());
            }
        }
        out
    }
}

fn pick<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub reps: usize,
    /// Resamples redrawn because an exposure group came out too small.
    pub redraws: usize,
}

/// Percentile interval of `estimator` over row resamples. A resample whose
/// estimate fails with a sample-size or degeneracy error is redrawn, up to
/// `10 * reps` attempts in total.
pub fn bootstrap_ci<F>(data: &Dataset, estimator: F, reps: usize, level: f64, seed: u64) -> Result<BootstrapInterval>
where
    F: Fn(&Dataset) -> Result<f64> + Sync,
{
    if reps < 100 {
        return Err(Error::Input(format!("bootstrap needs at least 100 replicates, got {reps}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Input(format!("interval level {level} must lie in (0, 1)")));
    }
    let n = data.n_rows();
    if n == 0 {
        return Err(Error::SampleSize("bootstrap of an empty dataset".into()));
    }
    let cap = 10 * reps;
    let per_rep: Vec<(Option<f64>, usize)> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<(Option<f64>, usize)> {
            let base = child(seed, r as u64);
            for attempt in 0..cap {
                let mut rng = rng_from(child(base, attempt as u64));
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                match estimator(&data.select_rows(&idx)) {
                    Ok(v) => return Ok((Some(v), attempt)),
                    Err(Error::SampleSize(_) | Error::Degenerate { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, cap))
        })
        .collect::<Result<_>>()?;
    let redraws: usize = per_rep.iter().map(|p| p.1).sum();
    if redraws > cap || per_rep.iter().any(|p| p.0.is_none()) {
        return Err(Error::SampleSize(format!(
            "bootstrap redrew {redraws} degenerate resamples, more than the cap of {cap}"
        )));
    }
    let mut vals: Vec<f64> = per_rep.into_iter().filter_map(|p| p.0).collect();
    vals.sort_by(f64::total_cmp);
    let g = 1.0 - level;
    Ok(BootstrapInterval {
        low: quantile(&vals, g / 2.0),
        high: quantile(&vals, 1.0 - g / 2.0),
        level,
        reps,
        redraws,
    })
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub mediators: Vec<String>,
    pub adjustment: Vec<String>,
    pub delta_hat: f64,
    pub zeta_hat: f64,
    pub total_disparity_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n0: usize,
    pub n1: usize,
    pub r_squared: f64,
    pub mc_se: Option<f64>,
    pub bootstrap_redraws: usize,
    pub estimator: EstimatorConfig,
}

/// Point estimate plus percentile bootstrap interval; the model is refit on
/// each resample with the adjustment set held fixed.
pub fn estimate_effect<S: AsRef<str> + Sync>(
    data: &Dataset,
    m_cols: &[S],
    b_cols: &[S],
    cfg: &EstimatorConfig,
) -> Result<EffectEstimate> {
    let run = |d: &Dataset, seed: u64| -> Result<(OutcomeModel, PointEstimate)> {
        let model = fit_outcome_model(d, m_cols, b_cols, cfg.model)?;
        let est = estimate_adjusted(d, &model, cfg.mode, cfg.kde_draws, seed)?;
        Ok((model, est))
    };
    let (model, point) = run(data, cfg.seed)?;
    let gap = point.delta_hat + point.zeta_hat;
    if (gap - point.total_disparity_hat).abs() > 1e-10 * point.total_disparity_hat.abs().max(1.0) {
        return Err(Error::Input("decomposition identity violated".into()));
    }
    let ci = bootstrap_ci(
        data,
        |d| Ok(run(d, cfg.seed)?.1.delta_hat),
        cfg.bootstrap_reps,
        cfg.level,
        substream(cfg.seed, crate::rng::BOOTSTRAP),
    )?;
    Ok(EffectEstimate {
        mediators: model.m_cols.clone(),
        adjustment: model.b_cols.clone(),
        delta_hat: point.delta_hat,
        zeta_hat: point.zeta_hat,
        total_disparity_hat: point.total_disparity_hat,
        ci_low: ci.low.min(point.delta_hat),
        ci_high: ci.high.max(point.delta_hat),
        n0: point.n0,
        n1: point.n1,
        r_squared: model.r_squared,
        mc_se: point.mc_se,
        bootstrap_redraws: ci.redraws,
        estimator: cfg.clone(),
    })
}
