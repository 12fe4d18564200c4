//! Hilbert-Schmidt independence criterion with Gaussian kernels.

use rand::seq::SliceRandom;
use rand::Rng;

use super::CiDecision;
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Points used for the median heuristic; larger samples are strided down.
const BANDWIDTH_POINTS: usize = 1000;

/// Row-major `n x n` matrix.
pub(crate) struct Gram {
    pub n: usize,
    pub k: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median pairwise Euclidean distance; zero when most points coincide.
pub(crate) fn median_distance(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let m = n.min(BANDWIDTH_POINTS);
    // Stride through the sorted points so the subsample ignores row order.
    let mut order: Vec<usize> = (0..n).collect();
    if m < n {
        order.sort_by(|&a, &b| {
            points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    let idx: Vec<usize> = (0..m).map(|i| order[i * n / m]).collect();
    let mut d = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            d.push(sq_dist(&points[idx[a]], &points[idx[b]]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    med.sqrt()
}

/// Doubly centered Gaussian Gram matrix `HKH` with median-heuristic width.
pub(crate) fn centered_gram(points: &[Vec<f64>]) -> Gram {
    let n = points.len();
    let mut sigma = median_distance(points);
    if sigma <= 0.0 {
        // Fall back to the largest spread so ties do not zero the kernel.
        sigma = points
            .iter()
            .map(|p| sq_dist(p, &points[0]).sqrt())
            .fold(0.0, f64::max)
            .max(1.0);
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in (i + 1)..n {
            let v = (-sq_dist(&points[i], &points[j]) * inv).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    center(&mut k, n);
    Gram { n, k }
}

fn center(k: &mut [f64], n: usize) {
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / nf).collect();
    let all = row.iter().sum::<f64>() / nf;
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] += all - row[i] - row[j];
        }
    }
}

/// `tr(K L P) / n^2` where `P` permutes the rows and columns of `L`.
fn trace_product(k: &Gram, l: &Gram, perm: Option<&[usize]>) -> f64 {
    let n = k.n;
    let mut s = 0.0;
    match perm {
        None => {
            for (a, b) in k.k.iter().zip(&l.k) {
                s += a * b;
            }
        }
        Some(p) => {
            for i in 0..n {
                let lrow = &l.k[p[i] * n..(p[i] + 1) * n];
                let krow = &k.k[i * n..(i + 1) * n];
                for j in 0..n {
                    s += krow[j] * lrow[p[j]];
                }
            }
        }
    }
    (s / (n * n) as f64).max(0.0)
}

pub(crate) fn hsic_from_grams(k: &Gram, l: &Gram) -> f64 {
    trace_product(k, l, None)
}

/// Permutation p-value `(1 + #{stat_perm >= stat}) / (1 + perms)`.
pub(crate) fn permutation_p_value<R: Rng>(k: &Gram, l: &Gram, perms: usize, rng: &mut R) -> (f64, f64) {
    let stat = trace_product(k, l, None);
    let mut perm: Vec<usize> = (0..k.n).collect();
    let mut exceed = 0usize;
    for _ in 0..perms {
        perm.shuffle(rng);
        // A relative tolerance keeps exact ties (e.g. y = x) counted.
        if trace_product(k, l, Some(&perm)) >= stat * (1.0 - 1e-12) {
            exceed += 1;
        }
    }
    (stat, (exceed + 1) as f64 / (perms + 1) as f64)
}

fn as_points(x: &[f64]) -> Vec<Vec<f64>> {
    x.iter().map(|&v| vec![v]).collect()
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

/// Biased HSIC estimate of two samples.
pub fn hsic_statistic(x: &[f64], y: &[f64]) -> f64 {
    hsic_from_grams(&centered_gram(&as_points(x)), &centered_gram(&as_points(y)))
}

/// Permutation test of `x` against `y`. Constant inputs are reported as
/// independent with the degenerate flag set.
pub fn hsic_test(x: &[f64], y: &[f64], alpha: f64, perms: usize, seed: u64) -> Result<CiDecision> {
    if x.len() != y.len() {
        return Err(Error::Input(format!(
            "hsic_test: lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 20 {
        return Err(Error::SampleSize(format!(
            "hsic_test needs at least 20 points, got {}",
            x.len()
        )));
    }
    let mut dec = CiDecision {
        independent: true,
        statistic: 0.0,
        p_value: 1.0,
        test_name: "hsic".into(),
        conditioning_set: Vec::new(),
        degenerate: false,
    };
    if is_constant(x) || is_constant(y) {
        dec.degenerate = true;
        return Ok(dec);
    }
    let k = centered_gram(&as_points(x));
    let l = centered_gram(&as_points(y));
    let (stat, p) = permutation_p_value(&k, &l, perms, &mut rng_from(seed));
    dec.statistic = stat;
    dec.p_value = p;
    dec.independent = p >= alpha;
    Ok(dec)
}
