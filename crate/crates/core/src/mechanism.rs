//! Mechanism-change dependence Δ between conditional-distribution families
//! indexed by the exposure-defined domains.
//!
//! `Δ_{A→B|S}` compares `{P^r(A | S)}` with `{P^r(B | A, S)}` across domains
//! `r`. Independence means the two mechanisms change in a disentangled way.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{centered_gram, hsic_from_grams, median_distance};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::graph::{m_separated_sets, MixedGraph};
use crate::rng::{child, rng_from, substream};

pub const MIN_DOMAIN_ROWS: usize = 30;

/// A conditional family `{P^r(target | given)}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Family {
    pub target: Vec<String>,
    pub given: Vec<String>,
}

impl Family {
    pub fn new<S: AsRef<str>>(target: &[S], given: &[S]) -> Self {
        let own = |v: &[S]| -> Vec<String> {
            let mut v: Vec<String> = v.iter().map(|s| s.as_ref().to_string()).collect();
            v.sort();
            v.dedup();
            v
        };
        Family {
            target: own(target),
            given: own(given),
        }
    }

    fn check(&self) -> Result<()> {
        if self.target.is_empty() {
            return Err(Error::Input("mechanism family needs a target".into()));
        }
        if let Some(v) = self.target.iter().find(|t| self.given.contains(t)) {
            return Err(Error::Input(format!("`{v}` is both target and conditioning")));
        }
        Ok(())
    }
}

/// Outcome of comparing two families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    /// Normalized HSIC in `[0, 1]`; 0 or 1 in oracle mode.
    pub delta: f64,
    pub p_value: f64,
    pub independent: bool,
    /// `(from, to)`; empty for a plain pair of families.
    pub direction: (Vec<String>, Vec<String>),
    pub conditioning: Vec<String>,
    pub first: Family,
    pub second: Family,
    pub n_domains: usize,
    pub test_name: String,
}

/// A source of mechanism-change decisions.
pub trait MechanismTest: Send + Sync {
    /// Δ between two arbitrary families.
    fn compare(&self, first: &Family, second: &Family) -> Result<DeltaResult>;
    fn alpha(&self) -> f64;
    /// Every comparison made so far, in canonical order.
    fn evidence(&self) -> Vec<DeltaResult>;

    /// `Δ_{from→to|given}`: `{P^r(from | given)}` against
    /// `{P^r(to | from, given)}`.
    fn delta(&self, from: &[String], to: &[String], given: &[String]) -> Result<DeltaResult> {
        let first = Family::new(from, given);
        let mut cond = given.to_vec();
        cond.extend_from_slice(from);
        let second = Family::new(to, &cond);
        let mut r = self.compare(&first, &second)?;
        let mut cset = given.to_vec();
        cset.sort();
        r.direction = (first.target.clone(), second.target.clone());
        r.conditioning = cset;
        Ok(r)
    }
}

#[derive(Default)]
struct Memo(Mutex<BTreeMap<(Family, Family), DeltaResult>>);

impl Memo {
    fn get_or<F: FnOnce() -> Result<DeltaResult>>(
        &self,
        a: &Family,
        b: &Family,
        f: F,
    ) -> Result<DeltaResult> {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if let Some(r) = self.0.lock().expect("memo poisoned").get(&key) {
            let mut r = r.clone();
            r.first = a.clone();
            r.second = b.clone();
            return Ok(r);
        }
        let r = f()?;
        self.0.lock().expect("memo poisoned").insert(key, r.clone());
        Ok(r)
    }

    fn records(&self) -> Vec<DeltaResult> {
        self.0.lock().expect("memo poisoned").values().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaOptions {
    pub alpha: f64,
    pub bootstrap: usize,
    /// Domain-label permutations for each change test.
    pub permutations: usize,
    pub grid_points: usize,
    /// Rows kept per domain, thinned by a stride over the sorted rows.
    pub max_rows: usize,
    pub seed: u64,
}

impl Default for DeltaOptions {
    fn default() -> Self {
        DeltaOptions {
            alpha: 0.05,
            bootstrap: 100,
            permutations: 100,
            grid_points: 50,
            max_rows: 2000,
            seed: 0,
        }
    }
}

/// Data-driven Δ over the domains defined by the exposure column.
pub struct DataMechanism<'a> {
    data: &'a Dataset,
    opts: DeltaOptions,
    memo: Memo,
    changes: Mutex<BTreeMap<Family, f64>>,
}

impl<'a> DataMechanism<'a> {
    pub fn new(data: &'a Dataset, opts: DeltaOptions) -> Self {
        DataMechanism {
            data,
            opts,
            memo: Memo::default(),
            changes: Mutex::default(),
        }
    }
}

impl ChangeSource for DataMechanism<'_> {
    fn change(&self, fam: &Family) -> Result<f64> {
        if let Some(p) = self.changes.lock().expect("cache poisoned").get(fam) {
            return Ok(*p);
        }
        let p = family_change(self.data, fam, &self.opts, self.opts.seed)?;
        self.changes.lock().expect("cache poisoned").insert(fam.clone(), p);
        Ok(p)
    }
}

impl MechanismTest for DataMechanism<'_> {
    fn compare(&self, first: &Family, second: &Family) -> Result<DeltaResult> {
        self.memo.get_or(first, second, || {
            let label = format!(
                "{}|{}~{}|{}",
                first.target.join(","),
                first.given.join(","),
                second.target.join(","),
                second.given.join(",")
            );
            let opts = DeltaOptions {
                seed: substream(self.opts.seed, &label),
                ..self.opts
            };
            compare_families(self.data, first, second, &opts, self)
        })
    }

    fn alpha(&self) -> f64 {
        self.opts.alpha
    }

    fn evidence(&self) -> Vec<DeltaResult> {
        self.memo.records()
    }
}

/// `Δ_{vi→vj|x}` on data, with `vi` and `vj` possibly sets.
pub fn delta_statistic<S: AsRef<str>>(
    data: &Dataset,
    vi: &[S],
    vj: &[S],
    x: &[S],
    opts: &DeltaOptions,
) -> Result<DeltaResult> {
    let own = |v: &[S]| -> Vec<String> { v.iter().map(|s| s.as_ref().to_string()).collect() };
    let (vi, vj, x) = (own(vi), own(vj), own(x));
    let first = Family::new(&vi, &x);
    let mut cond = x.clone();
    cond.extend(vi.iter().cloned());
    let second = Family::new(&vj, &cond);
    let mut r = compare_families(data, &first, &second, opts, &Uncached { data, opts })?;
    let mut x = x;
    x.sort();
    r.direction = (first.target.clone(), second.target.clone());
    r.conditioning = x;
    Ok(r)
}

/// Kernel weights of every row at each grid point, plus targets.
struct FamilyFit {
    /// `grid x rows`, row-major.
    kernel: Vec<f64>,
    n: usize,
    grid: usize,
    targets: Vec<Vec<f64>>,
}

impl FamilyFit {
    /// Conditional mean and standard deviation of each target at each grid
    /// point, with row multiplicity `w[i - start]` on rows `start..`.
    fn features(&self, start: usize, w: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.grid * self.targets.len());
        for t in &self.targets {
            let t = &t[start..start + w.len()];
            for g in 0..self.grid {
                let k = &self.kernel[g * self.n + start..g * self.n + start + w.len()];
                let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for i in 0..w.len() {
                    let kw = k[i] * w[i];
                    s0 += kw;
                    s1 += kw * t[i];
                    s2 += kw * t[i] * t[i];
                }
                push_moments(&mut out, s0, s1, s2);
            }
        }
        out
    }

    /// Features of the two groups defined by `labels` over all rows.
    fn split_features(&self, labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let cap = 2 * self.grid * self.targets.len();
        let (mut a, mut b) = (Vec::with_capacity(cap), Vec::with_capacity(cap));
        for t in &self.targets {
            for g in 0..self.grid {
                let k = &self.kernel[g * self.n..(g + 1) * self.n];
                let mut s = [[0.0; 3]; 2];
                for i in 0..self.n {
                    let acc = &mut s[labels[i] as usize];
                    acc[0] += k[i];
                    acc[1] += k[i] * t[i];
                    acc[2] += k[i] * t[i] * t[i];
                }
                push_moments(&mut a, s[0][0], s[0][1], s[0][2]);
                push_moments(&mut b, s[1][0], s[1][1], s[1][2]);
            }
        }
        (a, b)
    }
}

fn push_moments(out: &mut Vec<f64>, s0: f64, s1: f64, s2: f64) {
    if s0 > 0.0 {
        let m = s1 / s0;
        out.push(m);
        out.push((s2 / s0 - m * m).max(0.0).sqrt());
    } else {
        out.push(0.0);
        out.push(0.0);
    }
}

/// Standardized conditioning coordinates, quantile grid and bandwidth shared
/// by all domains.
struct Conditioning {
    coords: Vec<Vec<f64>>,
    grid: Vec<Vec<f64>>,
    bandwidth: f64,
}

fn conditioning(cols: &[Vec<f64>], grid_points: usize) -> Result<Conditioning> {
    let n = cols.first().map_or(0, Vec::len);
    if cols.is_empty() {
        return Ok(Conditioning {
            coords: Vec::new(),
            grid: vec![Vec::new()],
            bandwidth: 1.0,
        });
    }
    let mut std_cols = Vec::with_capacity(cols.len());
    for c in cols {
        let mean = c.iter().sum::<f64>() / n as f64;
        let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        std_cols.push(c.iter().map(|v| (v - mean) / sd.max(1e-300)).collect::<Vec<f64>>());
    }
    let coords: Vec<Vec<f64>> = (0..n).map(|i| std_cols.iter().map(|c| c[i]).collect()).collect();
    let sorted: Vec<Vec<f64>> = std_cols
        .iter()
        .map(|c| {
            let mut s = c.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let grid = (0..grid_points)
        .map(|k| {
            let level = if grid_points == 1 {
                0.5
            } else {
                0.1 + 0.8 * k as f64 / (grid_points - 1) as f64
            };
            let at = ((level * (n - 1) as f64).round() as usize).min(n - 1);
            sorted.iter().map(|s| s[at]).collect()
        })
        .collect();
    let mut bandwidth = median_distance(&coords);
    if bandwidth <= 0.0 {
        bandwidth = 1.0;
    }
    Ok(Conditioning {
        coords,
        grid,
        bandwidth,
    })
}

fn fit_family(targets: Vec<Vec<f64>>, cond: &Conditioning) -> FamilyFit {
    let n = targets[0].len();
    let inv = 1.0 / (2.0 * cond.bandwidth * cond.bandwidth);
    let mut kernel = Vec::with_capacity(cond.grid.len() * n);
    for g in &cond.grid {
        if g.is_empty() {
            kernel.extend(std::iter::repeat_n(1.0, n));
            continue;
        }
        for c in &cond.coords {
            let d: f64 = g.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            kernel.push((-d * inv).exp());
        }
    }
    FamilyFit {
        kernel,
        n,
        grid: cond.grid.len(),
        targets,
    }
}

/// Scales each feature to unit variance across replicates and drops
/// constant features.
fn standardize(points: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let dim = points.first().map_or(0, Vec::len);
    let mut keep = Vec::new();
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
        if var > 1e-24 * (1.0 + mean * mean) {
            keep.push((d, mean, var.sqrt()));
        }
    }
    points
        .iter()
        .map(|p| keep.iter().map(|&(d, m, s)| (p[d] - m) / s).collect())
        .collect()
}

/// Permutation test that a family's features differ between the two domains.
/// Feature differences are scaled by their permutation-null spread.
fn change_p_value(fit: &FamilyFit, labels: &[bool], perms: usize, seed: u64) -> f64 {
    let diff = |l: &[bool]| -> Vec<f64> {
        let (a, b) = fit.split_features(l);
        a.iter().zip(&b).map(|(x, y)| y - x).collect()
    };
    let observed = diff(labels);
    let mut rng = rng_from(seed);
    let mut shuffled = labels.to_vec();
    let null: Vec<Vec<f64>> = (0..perms)
        .map(|_| {
            shuffled.shuffle(&mut rng);
            diff(&shuffled)
        })
        .collect();
    let scale: Vec<f64> = (0..observed.len())
        .map(|d| (null.iter().map(|v| v[d] * v[d]).sum::<f64>() / perms.max(1) as f64).sqrt())
        .collect();
    let stat = |v: &[f64]| -> f64 {
        v.iter()
            .zip(&scale)
            .map(|(x, s)| {
                if *s > 1e-12 * (1.0 + x.abs()) {
                    (x / s).powi(2)
                } else if x.abs() > 1e-12 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .sum()
    };
    let t = stat(&observed);
    let exceed = null.iter().filter(|v| stat(v) >= t * (1.0 - 1e-12)).count();
    (exceed + 1) as f64 / (perms + 1) as f64
}

/// Rows of each domain in a canonical order over `cols`, so results do not
/// depend on file order, thinned by a stride to at most `max_rows`.
fn domain_rows(data: &Dataset, cols: &[&[f64]], max_rows: usize) -> Result<[Vec<usize>; 2]> {
    let (g0, g1) = data.groups()?;
    let canonical = |mut rows: Vec<usize>| -> Vec<usize> {
        rows.sort_by(|&a, &b| {
            cols.iter()
                .map(|c| c[a].total_cmp(&c[b]))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let n = rows.len();
        let m = n.min(max_rows.max(MIN_DOMAIN_ROWS));
        (0..m).map(|i| rows[i * n / m]).collect()
    };
    let domains = [canonical(g0), canonical(g1)];
    for (r, rows) in domains.iter().enumerate() {
        if rows.len() < MIN_DOMAIN_ROWS {
            return Err(Error::SampleSize(format!(
                "domain {r} has {} rows, Δ needs at least {MIN_DOMAIN_ROWS}",
                rows.len()
            )));
        }
    }
    Ok(domains)
}

fn family_columns<'d>(data: &'d Dataset, fam: &Family) -> Result<Vec<&'d [f64]>> {
    let roles = data.roles()?;
    let mut cols = Vec::new();
    for v in fam.target.iter().chain(&fam.given) {
        if *v == roles.exposure {
            return Err(Error::Input(format!(
                "the exposure `{v}` defines the domains and cannot enter a mechanism"
            )));
        }
        cols.push(data.column(v)?);
    }
    Ok(cols)
}

/// Domains over the pooled rows: `(pooled rows, size of domain 0)`.
fn pooled(domains: [Vec<usize>; 2]) -> (Vec<usize>, usize) {
    let n0 = domains[0].len();
    (domains.concat(), n0)
}

fn fit_on(data: &Dataset, fam: &Family, rows: &[usize], grid_points: usize) -> Result<FamilyFit> {
    let gather = |names: &[String]| -> Result<Vec<Vec<f64>>> {
        names
            .iter()
            .map(|v| data.column(v).map(|c| rows.iter().map(|&i| c[i]).collect()))
            .collect()
    };
    let cond = conditioning(&gather(&fam.given)?, grid_points)?;
    Ok(fit_family(gather(&fam.target)?, &cond))
}

fn check_targets(data: &Dataset, fam: &Family, domains: &[Vec<usize>; 2]) -> Result<()> {
    for rows in domains {
        for t in &fam.target {
            let c = data.column(t)?;
            if rows.iter().all(|&i| c[i] == c[rows[0]]) {
                return Err(Error::Degenerate {
                    columns: vec![t.clone()],
                });
            }
        }
    }
    Ok(())
}

/// Permutation p-value that `fam` changes across domains. Depends only on
/// the family, the options and `seed`.
fn family_change(data: &Dataset, fam: &Family, opts: &DeltaOptions, seed: u64) -> Result<f64> {
    fam.check()?;
    let cols = family_columns(data, fam)?;
    let domains = domain_rows(data, &cols, opts.max_rows)?;
    check_targets(data, fam, &domains)?;
    let (rows, n0) = pooled(domains);
    let labels: Vec<bool> = (0..rows.len()).map(|i| i >= n0).collect();
    let fit = fit_on(data, fam, &rows, opts.grid_points)?;
    Ok(change_p_value(&fit, &labels, opts.permutations, substream(seed, &family_label(fam))))
}

fn family_label(fam: &Family) -> String {
    format!("{}|{}", fam.target.join(","), fam.given.join(","))
}

/// Source of per-family change p-values.
trait ChangeSource {
    fn change(&self, fam: &Family) -> Result<f64>;
}

struct Uncached<'a> {
    data: &'a Dataset,
    opts: &'a DeltaOptions,
}

impl ChangeSource for Uncached<'_> {
    fn change(&self, fam: &Family) -> Result<f64> {
        family_change(self.data, fam, self.opts, self.opts.seed)
    }
}

fn compare_families(
    data: &Dataset,
    first: &Family,
    second: &Family,
    opts: &DeltaOptions,
    changes: &dyn ChangeSource,
) -> Result<DeltaResult> {
    first.check()?;
    second.check()?;
    let mut involved = family_columns(data, first)?;
    involved.extend(family_columns(data, second)?);
    let domains = domain_rows(data, &involved, opts.max_rows)?;
    check_targets(data, first, &domains)?;
    check_targets(data, second, &domains)?;
    let n_domains = domains.len();
    let (rows, n0) = pooled(domains);
    let fits = [
        fit_on(data, first, &rows, opts.grid_points)?,
        fit_on(data, second, &rows, opts.grid_points)?,
    ];

    // Surrogate domain pairs: each replicate resamples one domain's rows and
    // evaluates both families on that resample.
    let (u, w): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..2 * opts.bootstrap)
        .into_par_iter()
        .map(|k| {
            let r = k / opts.bootstrap.max(1);
            let (start, n) = if r == 0 { (0, n0) } else { (n0, rows.len() - n0) };
            let mut rng = rng_from(child(opts.seed, k as u64));
            let mut wts = vec![0.0; n];
            for _ in 0..n {
                wts[rng.random_range(0..n)] += 1.0;
            }
            (fits[0].features(start, &wts), fits[1].features(start, &wts))
        })
        .unzip();
    let (u, w) = (standardize(u), standardize(w));
    let delta = if u.first().is_some_and(|p| !p.is_empty()) && w.first().is_some_and(|p| !p.is_empty()) {
        let k = centered_gram(&u);
        let l = centered_gram(&w);
        let norm = (hsic_from_grams(&k, &k) * hsic_from_grams(&l, &l)).sqrt();
        if norm > 0.0 {
            (hsic_from_grams(&k, &l) / norm).clamp(0.0, 1.0)
        } else {
            0.0
        }
    } else {
        0.0
    };

    // Dependence requires both families to change across domains.
    let p_value = changes.change(first)?.max(changes.change(second)?);
    Ok(DeltaResult {
        delta,
        p_value,
        independent: p_value >= opts.alpha,
        direction: (Vec::new(), Vec::new()),
        conditioning: Vec::new(),
        first: first.clone(),
        second: second.clone(),
        n_domains,
        test_name: "delta_hsic".into(),
    })
}

/// Exact Δ from a ground-truth DAG.
///
/// The exposure is replaced by one change indicator per child, and two
/// families are dependent iff some indicator is d-connected to both targets
/// given the respective conditioning sets.
pub struct OracleMechanism {
    augmented: MixedGraph,
    indicators: Vec<String>,
    exposure: String,
    alpha: f64,
    memo: Memo,
}

impl OracleMechanism {
    pub fn new(truth: &MixedGraph, exposure: &str) -> Result<Self> {
        if !truth.is_dag() {
            return Err(Error::Graph("oracle mechanism test needs a DAG".into()));
        }
        let r = truth.id(exposure)?;
        let keep: Vec<&str> = truth
            .nodes()
            .iter()
            .map(String::as_str)
            .filter(|&v| v != exposure)
            .collect();
        let mut augmented = truth.induced(&keep)?;
        let mut indicators = Vec::new();
        for c in truth.children(r) {
            let name = format!("I[{}]", truth.name(c));
            augmented.add_node(&name)?;
            augmented.add_directed(&name, truth.name(c))?;
            indicators.push(name);
        }
        Ok(OracleMechanism {
            augmented,
            indicators,
            exposure: exposure.to_string(),
            alpha: crate::ci::DEFAULT_ALPHA,
            memo: Memo::default(),
        })
    }

    /// Indicators whose mechanism shift reaches `fam`.
    fn relevant(&self, fam: &Family) -> Result<Vec<&str>> {
        let mut out = Vec::new();
        for i in &self.indicators {
            if !m_separated_sets(&self.augmented, std::slice::from_ref(i), &fam.target, &fam.given)? {
                out.push(i.as_str());
            }
        }
        Ok(out)
    }
}

impl MechanismTest for OracleMechanism {
    fn compare(&self, first: &Family, second: &Family) -> Result<DeltaResult> {
        first.check()?;
        second.check()?;
        for v in first.target.iter().chain(&first.given).chain(&second.target).chain(&second.given) {
            if *v == self.exposure {
                return Err(Error::Input(format!(
                    "the exposure `{v}` defines the domains and cannot enter a mechanism"
                )));
            }
        }
        self.memo.get_or(first, second, || {
            let a = self.relevant(first)?;
            let b = self.relevant(second)?;
            let independent = !a.iter().any(|i| b.contains(i));
            Ok(DeltaResult {
                delta: if independent { 0.0 } else { 1.0 },
                p_value: if independent { 1.0 } else { 0.0 },
                independent,
                direction: (Vec::new(), Vec::new()),
                conditioning: Vec::new(),
                first: first.clone(),
                second: second.clone(),
                n_domains: 2,
                test_name: "oracle_delta".into(),
            })
        })
    }

    fn alpha(&self) -> f64 {
        self.alpha
    }

    fn evidence(&self) -> Vec<DeltaResult> {
        self.memo.records()
    }
}

/// Lemma-form comparisons recorded next to the algorithm's tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaForm {
    /// `{P(M,Y | O, S)}` vs `{P(O | S)}`.
    pub joint_vs_candidate: DeltaResult,
    /// `{P(O | M, S)}` vs `{P(M | O, S)}`.
    pub candidate_vs_mediator: DeltaResult,
    /// `{P(O | Y, S)}` vs `{P(Y | O, S)}`.
    pub candidate_vs_outcome: DeltaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMembership {
    pub member: bool,
    pub witness: Option<Vec<String>>,
    /// Subsets of the candidates examined.
    pub visited: usize,
    /// The three tests at the witness, or at the last subset examined.
    pub tests: Vec<DeltaResult>,
    pub lemma_form: Option<LemmaForm>,
}

/// All subsets of `items` by ascending size, then lexicographically by
/// position.
pub fn ordered_subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn rec<T: Clone>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i].clone());
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(1 << items.len().min(20));
    for k in 0..=items.len() {
        rec(items, k, 0, &mut Vec::new(), &mut out);
    }
    out
}

/// Searches for `S ⊆ candidates` with `Δ_{O→(M,Y)|S}` independent and both
/// `Δ_{M→O|S}` and `Δ_{M→Y|S}` dependent. `m` may be a mediator block.
pub fn detect_small_membership<S: AsRef<str>>(
    mech: &dyn MechanismTest,
    oi: &str,
    m: &[S],
    y: &str,
    candidates: &[S],
) -> Result<SmallMembership> {
    let m: Vec<String> = m.iter().map(|s| s.as_ref().to_string()).collect();
    if m.is_empty() || m.iter().any(|v| v == oi || v == y) || oi == y {
        return Err(Error::Input(format!(
            "detect_small_membership: `{oi}` must differ from the mediators and `{y}`"
        )));
    }
    let cands: Vec<String> = candidates
        .iter()
        .map(|s| s.as_ref().to_string())
        .filter(|c| c != oi && c != y && !m.contains(c))
        .collect();
    let o = vec![oi.to_string()];
    let yv = vec![y.to_string()];
    let mut my = m.clone();
    my.push(y.to_string());
    let mut visited = 0;
    let mut last = Vec::new();
    for s in ordered_subsets(&cands) {
        visited += 1;
        let t1 = mech.delta(&o, &my, &s)?;
        let t2 = mech.delta(&m, &o, &s)?;
        let t3 = mech.delta(&m, &yv, &s)?;
        let hit = t1.independent && !t2.independent && !t3.independent;
        last = vec![t1, t2, t3];
        if hit {
            let lemma_form = Some(lemma_form(mech, oi, &m, y, &s)?);
            return Ok(SmallMembership {
                member: true,
                witness: Some(s),
                visited,
                tests: last,
                lemma_form,
            });
        }
    }
    Ok(SmallMembership {
        member: false,
        witness: None,
        visited,
        tests: last,
        lemma_form: None,
    })
}

fn lemma_form(mech: &dyn MechanismTest, oi: &str, m: &[String], y: &str, s: &[String]) -> Result<LemmaForm> {
    let with = |extra: &[String]| -> Vec<String> {
        let mut v = s.to_vec();
        v.extend_from_slice(extra);
        v
    };
    let o = vec![oi.to_string()];
    let yv = vec![y.to_string()];
    let mut my = m.to_vec();
    my.push(y.to_string());
    Ok(LemmaForm {
        joint_vs_candidate: mech.compare(&Family::new(&my, &with(&o)), &Family::new(&o, s))?,
        candidate_vs_mediator: mech
            .compare(&Family::new(&o, &with(m)), &Family::new(m, &with(&o)))?,
        candidate_vs_outcome: mech
            .compare(&Family::new(&o, &with(&yv)), &Family::new(&yv, &with(&o)))?,
    })
}
