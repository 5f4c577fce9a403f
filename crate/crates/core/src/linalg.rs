//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Relative ridge added when a nominally SPD matrix fails to factor.
pub const SPD_RIDGE: f64 = 1e-8;

/// Cholesky-factor `m`, repairing near-singular matrices with a ridge of
/// `1e-8 * mean(diag)` (doubled up to a few times before giving up).
pub fn cholesky_spd(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Numeric(format!(
            "cholesky: matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cholesky: non-finite entries".into()));
    }
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch);
    }
    let p = m.nrows();
    let scale = (m.diagonal().sum() / p as f64).abs().max(f64::MIN_POSITIVE);
    let mut ridge = SPD_RIDGE * scale;
    for _ in 0..8 {
        let repaired = m + DMatrix::identity(p, p) * ridge;
        if let Some(ch) = Cholesky::new(repaired) {
            return Ok(ch);
        }
        ridge *= 10.0;
    }
    Err(Error::Numeric(
        "cholesky: matrix not positive definite even after ridge repair".into(),
    ))
}

/// Inverse of an SPD matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(cholesky_spd(m)?.inverse())
}

/// Log-determinant of an SPD matrix via Cholesky.
pub fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let ch = cholesky_spd(m)?;
    Ok(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Draw `mean + L z` with `z` standard normal and `L` the Cholesky factor.
pub fn sample_mvn(mean: &DVector<f64>, chol: &Cholesky<f64, Dyn>, rng: &mut Stream) -> DVector<f64> {
    let p = mean.len();
    let z = DVector::from_fn(p, |_, _| rand::Rng::sample(rng, StandardNormal));
    mean + chol.l() * z
}

/// Column means of an `n x p` draw matrix.
pub fn col_means(draws: &DMatrix<f64>) -> DVector<f64> {
    let n = draws.nrows().max(1) as f64;
    DVector::from_iterator(draws.ncols(), draws.column_iter().map(|c| c.sum() / n))
}

/// Sample mean and (denominator `n-1`) covariance of an `n x p` draw matrix.
pub fn sample_mean_cov(draws: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = draws.shape();
    if n < 2 {
        return Err(Error::Numeric(format!(
            "sample covariance needs at least 2 draws, got {n}"
        )));
    }
    let mean = col_means(draws);
    let mut cov = DMatrix::zeros(p, p);
    for k in 0..n {
        let d = draws.row(k).transpose() - &mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov /= (n - 1) as f64;
    fill_upper_from_lower(&mut cov);
    Ok((mean, cov))
}

/// Weighted mean and covariance with normalized weights; the covariance uses
/// the effective-sample-size correction `1 / (1 - sum w^2)`.
pub fn weighted_mean_cov(
    draws: &DMatrix<f64>,
    weights: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, p) = draws.shape();
    if weights.len() != n {
        return Err(Error::Numeric(format!(
            "weight length {} does not match {} draws",
            weights.len(),
            n
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numeric("weights do not sum to a positive number".into()));
    }
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
    let mut mean = DVector::zeros(p);
    for k in 0..n {
        mean += draws.row(k).transpose() * w[k];
    }
    let w2: f64 = w.iter().map(|x| x * x).sum();
    let denom = 1.0 - w2;
    if denom <= 0.0 {
        return Err(Error::Numeric(
            "weighted covariance degenerate: a single draw carries all weight".into(),
        ));
    }
    let mut cov = DMatrix::zeros(p, p);
    for k in 0..n {
        let d = draws.row(k).transpose() - &mean;
        cov.syger(w[k], &d, &d, 1.0);
    }
    cov /= denom;
    fill_upper_from_lower(&mut cov);
    Ok((mean, cov))
}

fn fill_upper_from_lower(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            m[(i, j)] = m[(j, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mean_cov_match_hand_computation() {
        // Three points in the plane with known first and second moments.
        let draws = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 2.0, 5.0]);
        let (mean, cov) = sample_mean_cov(&draws).unwrap();
        assert_relative_eq!(mean[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(mean[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(1, 1)], 3.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 1)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(cov[(0, 1)], cov[(1, 0)], epsilon = 1e-15);
    }

    #[test]
    fn uniform_weights_reduce_to_sample_moments() {
        let draws = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 7.0]);
        let (m0, c0) = sample_mean_cov(&draws).unwrap();
        let (m1, c1) = weighted_mean_cov(&draws, &[1.0; 4]).unwrap();
        assert_relative_eq!(m0[0], m1[0], epsilon = 1e-12);
        assert_relative_eq!(c0[(0, 0)], c1[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn ridge_repairs_singular_matrix() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let ch = cholesky_spd(&singular).unwrap();
        let inv = ch.inverse();
        assert!(inv.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_det_matches_diagonal_case() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5, 4.0]));
        assert_relative_eq!(spd_log_det(&m).unwrap(), (2.0f64 * 0.5 * 4.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn mvn_sampler_hits_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let ch = cholesky_spd(&cov).unwrap();
        let mut rng = crate::rng::stream(9, &[99]);
        let n = 40_000;
        let mut draws = DMatrix::zeros(n, 2);
        for k in 0..n {
            let x = sample_mvn(&mean, &ch, &mut rng);
            draws.set_row(k, &x.transpose());
        }
        let (m, c) = sample_mean_cov(&draws).unwrap();
        assert_relative_eq!(m[0], 1.0, epsilon = 0.05);
        assert_relative_eq!(m[1], -2.0, epsilon = 0.05);
        assert_relative_eq!(c[(0, 0)], 2.0, epsilon = 0.12);
        assert_relative_eq!(c[(0, 1)], 0.6, epsilon = 0.08);
    }
}
