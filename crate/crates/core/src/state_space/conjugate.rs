//! Conjugate inverse Wishart and inverse Gamma updates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use super::kalman::transition_at;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Inverse Wishart with scale `psi` and `df` degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct InvWishart {
    pub scale: DMatrix<f64>,
    pub df: f64,
}

impl InvWishart {
    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    /// `scale / (df - p - 1)`, defined for `df > p + 1`.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let d = self.df - self.dim() as f64 - 1.0;
        (d > 0.0).then(|| &self.scale / d)
    }

    /// Bartlett draw: `W^-1 = L A A' L'` with `L L' = scale^-1`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if self.df <= p as f64 - 1.0 {
            return Err(Error::InvalidArgument(format!("df {} too small for dimension {p}", self.df)));
        }
        let scale_chol = self
            .scale
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("inverse Wishart scale".into()))?;
        let prec = scale_chol.inverse();
        let l = prec
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("inverse Wishart precision".into()))?
            .l();
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p {
            let chi = ChiSquared::new(self.df - i as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let la = l * a;
        let b = la
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::Internal("singular Bartlett factor".into()))?;
        let mut w = b.tr_mul(&b);
        symmetrize(&mut w);
        Ok(w)
    }
}

/// Inverse Gamma with `shape` and `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGamma {
    pub shape: f64,
    pub rate: f64,
}

impl InvGamma {
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    pub fn sd(&self) -> Option<f64> {
        (self.shape > 2.0).then(|| self.rate / (self.shape - 1.0) / (self.shape - 2.0).sqrt())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let g = Gamma::new(self.shape, 1.0 / self.rate).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(1.0 / g.sample(rng))
    }
}

/// `theta_t - G_t theta_{t-1}` for `t = 1..T`, as columns.
pub fn state_residuals(traj: &DMatrix<f64>, gs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let steps = traj.ncols().saturating_sub(1);
    let mut r = DMatrix::zeros(traj.nrows(), steps);
    for t in 1..=steps {
        let col = traj.column(t) - transition_at(gs, t) * traj.column(t - 1);
        r.set_column(t - 1, &col);
    }
    r
}

/// Posterior `IW(phi + sum r r', nu + T)` for residual columns `r`.
pub fn w_posterior(residuals: &DMatrix<f64>, phi: &DMatrix<f64>, nu: f64) -> InvWishart {
    let mut scale = phi + residuals * residuals.transpose();
    symmetrize(&mut scale);
    InvWishart {
        scale,
        df: nu + residuals.ncols() as f64,
    }
}

/// Posterior `IG(a + n/2, b + ss/2)` for `n` residuals with sum of squares `ss`.
pub fn sigma2_posterior(n: usize, ss: f64, a: f64, b: f64) -> InvGamma {
    InvGamma {
        shape: a + n as f64 / 2.0,
        rate: b + ss / 2.0,
    }
}

pub fn gibbs_update_w<R: Rng + ?Sized>(
    traj: &DMatrix<f64>,
    gs: &[DMatrix<f64>],
    phi: &DMatrix<f64>,
    nu: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    w_posterior(&state_residuals(traj, gs), phi, nu).sample(rng)
}

/// Draw one variance from the residual vector of a source.
pub fn gibbs_update_sigma2<R: Rng + ?Sized>(residuals: &DVector<f64>, a: f64, b: f64, rng: &mut R) -> Result<f64> {
    sigma2_posterior(residuals.len(), residuals.norm_squared(), a, b).sample(rng)
}
