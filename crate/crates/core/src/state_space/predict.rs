//! Multi-step prediction and masked error metrics.

use nalgebra::{DMatrix, DVector};

use super::kalman::transition_at;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::spectral::{Basis, SpectralCoeffs};

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Steps ahead of the last fitted state.
    pub step: usize,
    pub state: DVector<f64>,
    /// Field reconstructed from the coefficient half.
    pub field: Field,
    /// Field reconstructed from the bias half (zero without one).
    pub bias: Field,
}

/// Iterate `theta_{T+j} = G theta_{T+j-1}` for `j = 1..=k`. Entry 0 is the
/// starting state. `gs[j-1]` drives step `j`; the last one is held for later
/// steps.
pub fn predict(theta_hat: &DVector<f64>, gs: &[DMatrix<f64>], k: usize, basis: &Basis) -> Result<Vec<Prediction>> {
    let n = theta_hat.len();
    let q = basis.dim();
    if n != q && n != 2 * q {
        return Err(Error::DimensionMismatch(format!("state {n} vs basis {q}")));
    }
    if k > 0 && (gs.is_empty() || gs.iter().any(|g| g.shape() != (n, n))) {
        return Err(Error::DimensionMismatch("transition matrices".into()));
    }
    let mut out = Vec::with_capacity(k + 1);
    let mut theta = theta_hat.clone();
    for j in 0..=k {
        if j > 0 {
            theta = transition_at(gs, j) * &theta;
        }
        let field = basis.synthesize(&SpectralCoeffs::from_vec(basis.truncation, theta.rows(0, q).into_owned())?)?;
        let bias = if n == 2 * q {
            basis.synthesize(&SpectralCoeffs::from_vec(basis.truncation, theta.rows(q, q).into_owned())?)?
        } else {
            Field::zeros(&basis.grid)
        };
        out.push(Prediction {
            step: j,
            state: theta.clone(),
            field,
            bias,
        });
    }
    Ok(out)
}

/// Mean squared difference over pixels observed in `reference`.
pub fn compute_mse(predicted: &Field, reference: &Field) -> Result<f64> {
    if predicted.shape() != reference.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            predicted.shape(),
            reference.shape()
        )));
    }
    let (n1, n2) = reference.shape();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n1 {
        for j in 0..n2 {
            if reference.is_observed(i, j) && predicted.is_observed(i, j) {
                let d = predicted.values[(i, j)] - reference.values[(i, j)];
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyData("no overlapping observed pixels".into()));
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::spectral::{analyze, Truncation};
    use crate::state_space::model::build_g;

    #[test]
    fn zero_steps_returns_start() {
        let g = GridSpec::new(8, 8).unwrap();
        let basis = Basis::new(&g, Truncation::new(4, 4).unwrap()).unwrap();
        let theta = DVector::from_fn(32, |i, _| i as f64 * 0.1);
        let p = predict(&theta, &[], 0, &basis).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].state, theta);
    }

    #[test]
    fn still_model_without_bias_is_constant() {
        let g = GridSpec::new(8, 8).unwrap();
        let t = Truncation::new(4, 4).unwrap();
        let basis = Basis::new(&g, t).unwrap();
        let f = Field::from_fn(&g, |a, b| (6.0 * a).sin() + b);
        let alpha = basis.analyze(&f).unwrap().values;
        let mut theta = DVector::zeros(32);
        theta.rows_mut(0, 16).copy_from(&alpha);
        let gmat = build_g(&DMatrix::identity(16, 16)).unwrap();
        let p = predict(&theta, &[gmat], 5, &basis).unwrap();
        for s in &p {
            assert!((&s.field.values - &p[0].field.values).amax() < 1e-12);
            assert!(s.bias.values.amax() < 1e-15);
        }
    }

    #[test]
    fn bias_drives_linear_growth() {
        let g = GridSpec::new(8, 8).unwrap();
        let t = Truncation::full(&g);
        let basis = Basis::new(&g, t).unwrap();
        let q = t.dim();
        let bias = analyze(&Field::from_fn(&g, |_, _| 0.5), t).unwrap().values;
        let mut theta = DVector::zeros(2 * q);
        theta.rows_mut(q, q).copy_from(&bias);
        let gmat = build_g(&DMatrix::identity(q, q)).unwrap();
        let p = predict(&theta, &[gmat], 3, &basis).unwrap();
        assert!((p[3].field.values.mean() - 1.5).abs() < 1e-12);
        assert!((p[3].bias.values.mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn mse_cases() {
        let g = GridSpec::new(4, 4).unwrap();
        let a = Field::from_fn(&g, |x, y| x * y);
        assert_eq!(compute_mse(&a, &a).unwrap(), 0.0);
        let b = Field::new(a.values.add_scalar(0.3));
        assert!((compute_mse(&b, &a).unwrap() - 0.09).abs() < 1e-15);
        let mut mask = DMatrix::from_element(4, 4, true);
        mask[(0, 0)] = false;
        let mut v = a.values.clone();
        v[(0, 0)] = 100.0;
        let masked = Field::with_mask(v, mask).unwrap();
        assert_eq!(compute_mse(&a, &masked).unwrap(), 0.0);
        let none = Field::with_mask(a.values.clone(), DMatrix::from_element(4, 4, false)).unwrap();
        assert!(compute_mse(&a, &none).is_err());
        assert!(compute_mse(&a, &Field::zeros(&GridSpec::new(2, 2).unwrap())).is_err());
    }
}
