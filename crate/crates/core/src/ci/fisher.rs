use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use super::CiDecision;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Two-sided standard normal tail probability of `|s|`.
pub(crate) fn normal_two_sided(s: f64) -> f64 {
    erfc(s.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub(crate) fn covariance(cols: &[&[f64]]) -> DMatrix<f64> {
    let k = cols.len();
    let n = cols.first().map_or(0, |c| c.len()) as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = cols[a]
                .iter()
                .zip(cols[b])
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            cov[(a, b)] = s / (n - 1.0);
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Smallest prefix of `names` whose covariance is numerically singular,
/// reported as the offending columns.
fn collinear_columns(cov: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let k = cov.nrows();
    for (i, name) in names.iter().enumerate().take(k) {
        if cov[(i, i)] <= 1e-12 * (1.0 + cov.diagonal().amax()) {
            return vec![name.clone()];
        }
    }
    for m in 2..=k {
        let sub = cov.view((0, 0), (m, m)).into_owned();
        if !well_conditioned(&sub) {
            return names[..m].to_vec();
        }
    }
    names.to_vec()
}

fn well_conditioned(cov: &DMatrix<f64>) -> bool {
    // Scale to a correlation matrix so the threshold is unit-free.
    let d: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
    let corr = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] / (d[i] * d[j]));
    let ev = corr.symmetric_eigenvalues();
    ev.min() > 1e-10 * ev.max().max(1.0)
}

/// Partial-correlation test of `i` and `j` given `z`.
pub fn fisher_z<S: AsRef<str>>(data: &Dataset, i: &str, j: &str, z: &[S], alpha: f64) -> Result<CiDecision> {
    if i == j || z.iter().any(|c| c.as_ref() == i || c.as_ref() == j) {
        return Err(Error::Input(format!(
            "fisher_z: conditioning set must exclude `{i}` and `{j}`"
        )));
    }
    let mut names = vec![i.to_string(), j.to_string()];
    let mut owned: Vec<Vec<f64>> = vec![data.column(i)?.to_vec(), data.column(j)?.to_vec()];
    for c in z {
        let c = c.as_ref();
        for (k, col) in data.design_columns(c)?.into_iter().enumerate() {
            names.push(if k == 0 { c.to_string() } else { format!("{c}[{k}]") });
            owned.push(col);
        }
    }
    let n = data.n_rows();
    let dz = owned.len() - 2;
    if n < dz + 4 {
        return Err(Error::SampleSize(format!(
            "fisher_z needs n > |z| + 3, got n = {n}, |z| = {dz}"
        )));
    }
    let cols: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
    let cov = covariance(&cols);
    if !well_conditioned(&cov) {
        return Err(Error::Degenerate {
            columns: collinear_columns(&cov, &names),
        });
    }
    let prec = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate {
            columns: collinear_columns(&cov, &names),
        })?
        .inverse();
    let rho = (-prec[(0, 1)] / (prec[(0, 0)] * prec[(1, 1)]).sqrt()).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    let statistic = ((n - dz - 3) as f64).sqrt() * rho.atanh();
    let p_value = normal_two_sided(statistic);
    Ok(CiDecision {
        independent: p_value >= alpha,
        statistic,
        p_value,
        test_name: "fisher_z".into(),
        conditioning_set: z.iter().map(|s| s.as_ref().to_string()).collect(),
        degenerate: false,
    })
}
