//! Uniform B-spline evaluation (Cox–de Boor).
//!
//! A basis of `L` functions of order `n` (degree `n - 1`) over knots spaced
//! `T` apart, arranged so the spline is a full partition of unity on
//! `[0, (L - n + 1) T]`. Knot `j` sits at `(j - n + 1) T`.

use crate::error::{Error, Result};

fn knot(j: usize, order: usize, spacing: f64) -> f64 {
    (j as f64 - (order as f64 - 1.0)) * spacing
}

/// Right end of the interior domain for `n_coeffs` coefficients.
pub fn domain_end(n_coeffs: usize, order: usize, spacing: f64) -> f64 {
    (n_coeffs as f64 - order as f64 + 1.0) * spacing
}

/// Nonzero basis values at `t`: returns the index of the first nonzero
/// function and the `order` values starting there.
pub fn basis_at(t: f64, n_coeffs: usize, order: usize, spacing: f64) -> Result<(usize, Vec<f64>)> {
    if order < 1 || n_coeffs < order || !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "invalid basis: {n_coeffs} coefficients of order {order}, spacing {spacing}"
        )));
    }
    let end = domain_end(n_coeffs, order, spacing);
    let tol = 1e-9 * spacing;
    if !(t >= -tol && t <= end + tol) {
        return Err(Error::InvalidParameter(format!(
            "t = {t} outside spline support [0, {end}]"
        )));
    }
    let p = order - 1;
    let t = t.clamp(0.0, end);
    let span = ((t / spacing).floor() as usize + p).min(n_coeffs - 1);
    let mut vals = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    vals[0] = 1.0;
    for j in 1..=p {
        left[j] = t - knot(span + 1 - j, order, spacing);
        right[j] = knot(span + j, order, spacing) - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    Ok((span - p, vals))
}

/// Evaluates `sum_l coeffs[l] * Phi_l(t)` at every point of `t_grid`.
pub fn bspline_eval(coeffs: &[f64], order: usize, spacing: f64, t_grid: &[f64]) -> Result<Vec<f64>> {
    t_grid
        .iter()
        .map(|&t| {
            let (first, vals) = basis_at(t, coeffs.len(), order, spacing)?;
            Ok(vals.iter().enumerate().map(|(r, v)| v * coeffs[first + r]).sum())
        })
        .collect()
}
