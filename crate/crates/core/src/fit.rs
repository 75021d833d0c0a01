//! Small dense least-squares helpers shared by the calibrated models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff below which a design matrix is treated as
/// rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares for `design * coeffs ≈ target`.
pub fn least_squares(design: &DMatrix<f64>, target: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = design.shape();
    if rows < cols {
        return Err(Error::Underdetermined(format!("{rows} observations for {cols} coefficients")));
    }
    // Column scaling keeps the SVD rank test meaningful when columns span
    // many orders of magnitude (1, L, L²).
    let scales: Vec<f64> = (0..cols)
        .map(|j| {
            let n = design.column(j).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let mut scaled = design.clone();
    for (j, s) in scales.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin / smax < RANK_TOL {
        return Err(Error::Underdetermined("design matrix is rank deficient".into()));
    }
    let sol = svd.solve(target, RANK_TOL * smax).map_err(|e| Error::Underdetermined(e.to_string()))?;
    Ok(DVector::from_iterator(cols, sol.iter().zip(&scales).map(|(c, s)| c / s)))
}

/// Polynomial fit `y = c0 + c1 x + ... + cd x^d`; coefficients lowest order
/// first.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<Vec<f64>> {
    assert_eq!(xs.len(), ys.len());
    let design = DMatrix::from_fn(xs.len(), degree + 1, |i, j| xs[i].powi(j as i32));
    let target = DVector::from_column_slice(ys);
    Ok(least_squares(&design, &target)?.iter().copied().collect())
}

pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Number of distinct values, compared exactly.
pub(crate) fn distinct(xs: &[f64]) -> usize {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v.len()
}
