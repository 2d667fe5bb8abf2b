//! Small dense helpers shared by the filter and the samplers.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Cholesky factor of a symmetric matrix, adding diagonal jitter of
/// `1e-8 * trace / dim` (escalating tenfold) when the plain factorization fails.
pub fn cholesky_jitter(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows().max(1);
    let scale = (m.trace().abs() / n as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 1e-8 * scale;
    for _ in 0..8 {
        let mut j = m.clone();
        for i in 0..m.nrows() {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(j) {
            warn!("{what}: added diagonal jitter {jitter:.3e} to factorize");
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(what.to_string()))
}

pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draw from `N(mean, cov)` for a symmetric positive semi-definite `cov`.
///
/// Uses a Cholesky factor when one exists and falls back to a clamped
/// eigendecomposition for singular covariances.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = standard_normal(mean.len(), rng);
    if let Some(c) = Cholesky::new(cov.clone()) {
        return mean + c.l() * z;
    }
    let eig = cov.clone().symmetric_eigen();
    let scaled = DVector::from_iterator(
        z.len(),
        z.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(zi, &l)| zi * l.max(0.0).sqrt()),
    );
    mean + eig.eigenvectors * scaled
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jitter(&m, "test").is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_jitter(&bad, "test").is_err());
    }

    #[test]
    fn singular_covariance_sampling_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        for _ in 0..10 {
            let x = sample_mvn(&mean, &cov, &mut rng);
            assert!(((x[0] - 1.0) - (x[1] - 2.0)).abs() < 1e-6);
        }
        let zero = DMatrix::zeros(2, 2);
        assert_eq!(sample_mvn(&mean, &zero, &mut rng), mean);
    }
}
