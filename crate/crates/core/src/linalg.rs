//! Small dense least-squares helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordinary least squares with an intercept. Returns `[intercept, b_1..b_p]`.
///
/// Fails with [`Error::Degenerate`] when the design is rank deficient; a
/// constant regressor counts as collinear with the intercept.
pub fn ols(features: &[&[f64]], names: &[String], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let p = features.len();
    if n < p + 1 {
        return Err(Error::SampleSize(format!(
            "least squares with {p} features needs more than {p} rows, got {n}"
        )));
    }
    // Center for conditioning, then recover the intercept.
    let mx: Vec<f64> = features.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let my = y.iter().sum::<f64>() / n as f64;
    if p == 0 {
        return Ok(vec![my]);
    }
    let x = DMatrix::from_fn(n, p, |i, j| features[j][i] - mx[j]);
    let xtx = x.transpose() * &x;
    let scale: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt()).collect();
    if let Some(j) = scale.iter().position(|&s| s <= 1e-12 * (n as f64).sqrt()) {
        return Err(Error::Degenerate {
            columns: vec![names[j].clone()],
        });
    }
    let corr = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
    let ev = corr.clone().symmetric_eigenvalues();
    if ev.min() <= 1e-10 * ev.max() {
        return Err(Error::Degenerate {
            columns: collinear_group(&corr, names),
        });
    }
    let yc = DVector::from_fn(n, |i, _| y[i] - my);
    let xty = x.transpose() * yc;
    let rhs = DVector::from_fn(p, |j, _| xty[j] / scale[j]);
    let beta_scaled = corr
        .cholesky()
        .ok_or_else(|| Error::Degenerate {
            columns: names.to_vec(),
        })?
        .solve(&rhs);
    let beta: Vec<f64> = (0..p).map(|j| beta_scaled[j] / scale[j]).collect();
    let intercept = my - beta.iter().zip(&mx).map(|(b, m)| b * m).sum::<f64>();
    let mut out = Vec::with_capacity(p + 1);
    out.push(intercept);
    out.extend(beta);
    Ok(out)
}

/// Smallest leading block of the correlation matrix that is singular.
fn collinear_group(corr: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    for m in 2..=corr.nrows() {
        let ev = corr.view((0, 0), (m, m)).into_owned().symmetric_eigenvalues();
        if ev.min() <= 1e-10 * ev.max() {
            return names[..m].to_vec();
        }
    }
    names.to_vec()
}

/// Residuals of `y` after regressing on `features` with an intercept.
pub fn residuals(features: &[&[f64]], names: &[String], y: &[f64]) -> Result<Vec<f64>> {
    let beta = ols(features, names, y)?;
    Ok((0..y.len())
        .map(|i| {
            y[i] - beta[0]
                - features
                    .iter()
                    .zip(&beta[1..])
                    .map(|(f, b)| f[i] * b)
                    .sum::<f64>()
        })
        .collect())
}
