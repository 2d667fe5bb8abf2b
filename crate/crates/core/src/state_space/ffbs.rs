//! Forward filtering, backward sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::kalman::{forward_filter, predict_step, transition_at, ForwardPass, UpdateForm};
use super::observations::ObservationSeries;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, sample_mvn, symmetrize};

/// Draw `theta_0..theta_T` given a completed forward pass. Column `t` of the
/// result is `theta_t`.
pub fn backward_sample<R: Rng + ?Sized>(
    pass: &ForwardPass,
    gs: &[DMatrix<f64>],
    w: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let steps = pass.steps();
    let n = pass.m_filt[0].len();
    let mut traj = DMatrix::zeros(n, steps + 1);
    let last = sample_mvn(&pass.m_filt[steps], &pass.c_filt[steps], rng);
    traj.set_column(steps, &last);
    for t in (0..steps).rev() {
        let g = transition_at(gs, t + 1);
        let c = &pass.c_filt[t];
        let (_, c_next) = predict_step(&pass.m_filt[t], c, g, w);
        let chol = cholesky_jitter(&c_next, "one-step covariance")?;
        let gc = g * c;
        // J' = C_next^-1 G C
        let jt = chol.solve(&gc);
        let diff = traj.column(t + 1) - &pass.m_pred[t + 1];
        let h = &pass.m_filt[t] + jt.tr_mul(&diff);
        let mut hc = c - jt.tr_mul(&gc);
        symmetrize(&mut hc);
        let draw = sample_mvn(&h, &hc, rng);
        if draw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite state draw at step {t}")));
        }
        traj.set_column(t, &draw);
    }
    Ok(traj)
}

#[allow(clippy::too_many_arguments)]
pub fn ffbs<R: Rng + ?Sized>(
    obs: &ObservationSeries,
    gs: &[DMatrix<f64>],
    w: &DMatrix<f64>,
    sigma2: &DVector<f64>,
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    form: UpdateForm,
    rng: &mut R,
) -> Result<(ForwardPass, DMatrix<f64>)> {
    let pass = forward_filter(obs, gs, w, sigma2, m0, c0, form)?;
    let traj = backward_sample(&pass, gs, w, rng)?;
    Ok((pass, traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_series(ys: &[f64]) -> ObservationSeries {
        let mut s = ObservationSeries::new(DMatrix::identity(1, 1), vec!["a".into()]);
        for &y in ys {
            s.push_step(vec![(0, vec![0], DVector::from_element(1, y))]).unwrap();
        }
        s
    }

    fn one(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn single_step_draws_filtering_posterior() {
        let obs = scalar_series(&[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gs = [one(1.0)];
        let (pass, _) = ffbs(&obs, &gs, &one(1.0), &DVector::from_element(1, 1.0), &DVector::zeros(1), &one(1.0), UpdateForm::Auto, &mut rng).unwrap();
        let n = 40_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = backward_sample(&pass, &gs, &one(1.0), &mut rng).unwrap()[(0, 1)];
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let se = (2.0 / 3.0 / n as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() < 4.0 * se);
        assert!((var - 2.0 / 3.0).abs() < 0.03);
    }

    #[test]
    fn zero_state_noise_gives_deterministic_path() {
        let obs = scalar_series(&[1.0, 0.4, -0.2]);
        let g = one(0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, traj) = ffbs(&obs, &[g], &one(0.0), &DVector::from_element(1, 0.5), &DVector::zeros(1), &one(2.0), UpdateForm::Auto, &mut rng).unwrap();
        for t in 0..3 {
            assert!((traj[(0, t + 1)] - 0.9 * traj[(0, t)]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_mismatched_transitions() {
        let obs = scalar_series(&[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ffbs(&obs, &[DMatrix::identity(2, 2)], &one(1.0), &DVector::from_element(1, 1.0), &DVector::zeros(1), &one(1.0), UpdateForm::Auto, &mut rng);
        assert!(r.is_err());
    }
}
