//! Bias-augmented linear Gaussian model: state `(alpha, gamma)` where
//! `alpha` are spectral coefficients and `gamma` a random-walk correction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `[[E, I], [0, I]]` for a one-step propagator `E`.
pub fn build_g(exp_p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = exp_p.shape();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    let q = r;
    let mut g = DMatrix::zeros(2 * q, 2 * q);
    g.view_mut((0, 0), (q, q)).copy_from(exp_p);
    for i in 0..q {
        g[(i, q + i)] = 1.0;
        g[(q + i, q + i)] = 1.0;
    }
    Ok(g)
}

/// Stacked state `(alpha, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub alpha: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl AugmentedState {
    pub fn new(alpha: DVector<f64>, gamma: DVector<f64>) -> Result<Self> {
        if alpha.len() != gamma.len() {
            return Err(Error::DimensionMismatch(format!(
                "alpha has {} entries, gamma {}",
                alpha.len(),
                gamma.len()
            )));
        }
        if alpha.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite state".into()));
        }
        Ok(Self { alpha, gamma })
    }

    pub fn from_stacked(theta: &DVector<f64>) -> Result<Self> {
        if !theta.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch("stacked state has odd length".into()));
        }
        let q = theta.len() / 2;
        Self::new(theta.rows(0, q).into_owned(), theta.rows(q, q).into_owned())
    }

    pub fn stacked(&self) -> DVector<f64> {
        let q = self.alpha.len();
        DVector::from_fn(2 * q, |i, _| if i < q { self.alpha[i] } else { self.gamma[i - q] })
    }
}

/// Conjugate priors: inverse Wishart `(phi, nu)` on the state noise and
/// inverse Gamma `(a_m, b_m)` on each source variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub phi: DMatrix<f64>,
    pub nu: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Priors {
    /// `phi = 0.01 I`, `nu = n + 2`, `a = b = 0.01`.
    pub fn weak(state_dim: usize, n_sources: usize) -> Self {
        Self {
            phi: DMatrix::identity(state_dim, state_dim) * 0.01,
            nu: state_dim as f64 + 2.0,
            a: vec![0.01; n_sources],
            b: vec![0.01; n_sources],
        }
    }

    pub fn validate(&self, state_dim: usize, n_sources: usize) -> Result<()> {
        if self.phi.shape() != (state_dim, state_dim) {
            return Err(Error::DimensionMismatch("prior scale matrix".into()));
        }
        if self.nu <= state_dim as f64 - 1.0 {
            return Err(Error::InvalidArgument(format!(
                "degrees of freedom {} too small for dimension {state_dim}",
                self.nu
            )));
        }
        if self.a.len() != n_sources || self.b.len() != n_sources {
            return Err(Error::DimensionMismatch("inverse Gamma priors per source".into()));
        }
        if self.a.iter().chain(self.b.iter()).any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("inverse Gamma parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w_cov: DMatrix<f64>,
    pub sigma2: DVector<f64>,
    pub priors: Priors,
    pub m0: DVector<f64>,
    pub c0: DMatrix<f64>,
}

impl ModelParams {
    /// Prior-mean state noise, unit variances and `C0 = 10 I`.
    pub fn initial(m0: DVector<f64>, n_sources: usize) -> Self {
        let n = m0.len();
        let priors = Priors::weak(n, n_sources);
        let w_cov = &priors.phi / (priors.nu - n as f64 - 1.0).max(1.0);
        Self {
            w_cov,
            sigma2: DVector::from_element(n_sources, 1.0),
            priors,
            m0,
            c0: DMatrix::identity(n, n) * 10.0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.m0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        if self.w_cov.shape() != (n, n) || self.c0.shape() != (n, n) {
            return Err(Error::DimensionMismatch("covariance shapes".into()));
        }
        if self.sigma2.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::InvalidArgument("observation variances must be positive".into()));
        }
        self.priors.validate(n, self.sigma2.len())
    }
}

/// One filter step: predicted and filtered moments.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub m_pred: DVector<f64>,
    pub c_pred: DMatrix<f64>,
    pub m_filt: DVector<f64>,
    pub c_filt: DMatrix<f64>,
}

impl FilterState {
    /// Start from the prior; predicted and filtered moments coincide.
    pub fn initial(m0: DVector<f64>, c0: DMatrix<f64>) -> Self {
        Self {
            m_pred: m0.clone(),
            c_pred: c0.clone(),
            m_filt: m0,
            c_filt: c0,
        }
    }
}
