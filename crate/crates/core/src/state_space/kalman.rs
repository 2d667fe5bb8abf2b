//! Kalman filtering in gain form and in information form.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::model::FilterState;
use super::observations::ObservationSeries;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, symmetrize};

/// How the measurement update is computed. `Innovation` factorizes the
/// `p x p` innovation covariance; `Information` works in state space using
/// cached normal-equation statistics. `Auto` picks the smaller system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    Innovation,
    Information,
    #[default]
    Auto,
}

/// `m = G m`, `C = G C G' + W`.
pub fn predict_step(m: &DVector<f64>, c: &DMatrix<f64>, g: &DMatrix<f64>, w: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut cp = g * c * g.transpose() + w;
    symmetrize(&mut cp);
    (g * m, cp)
}

/// Gain-form update with a dense observation covariance `v`.
pub fn kalman_update(
    m_pred: &DVector<f64>,
    c_pred: &DMatrix<f64>,
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    v: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.is_empty() {
        return Ok((m_pred.clone(), c_pred.clone()));
    }
    if f.nrows() != y.len() || f.ncols() != m_pred.len() || v.shape() != (y.len(), y.len()) {
        return Err(Error::DimensionMismatch(format!(
            "F {:?}, y {}, V {:?}, state {}",
            f.shape(),
            y.len(),
            v.shape(),
            m_pred.len()
        )));
    }
    let fc = f * c_pred;
    let mut s = &fc * f.transpose() + v;
    symmetrize(&mut s);
    let chol = cholesky_jitter(&s, "innovation covariance")?;
    // K' = S^-1 F C
    let kt = chol.solve(&fc);
    let m = m_pred + kt.tr_mul(&(y - f * m_pred));
    let mut c = c_pred - kt.tr_mul(&fc);
    symmetrize(&mut c);
    Ok((m, c))
}

/// Information-form update. `h` and `b` act on the first `h.nrows()` state
/// entries: `C = (C_pred^-1 + H)^-1`, `m = m_pred + C (b - H m_pred)`.
pub fn information_update(
    m_pred: &DVector<f64>,
    c_pred: &DMatrix<f64>,
    h: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m_pred.len();
    let q = h.nrows();
    if h.ncols() != q || b.len() != q || q > n {
        return Err(Error::DimensionMismatch("information block".into()));
    }
    let l = cholesky_jitter(c_pred, "predicted covariance")?.l();
    let lq = l.rows(0, q);
    let mut inner = lq.tr_mul(&(h * lq)) + DMatrix::identity(n, n);
    symmetrize(&mut inner);
    let r = cholesky_jitter(&inner, "information update")?;
    // C = L M^-1 L' = X' X with X = R^-1 L'
    let x = r
        .l()
        .solve_lower_triangular(&l.transpose())
        .ok_or_else(|| Error::Internal("triangular solve failed".into()))?;
    let mut c = x.tr_mul(&x);
    symmetrize(&mut c);
    let resid = b - h * m_pred.rows(0, q);
    let m = m_pred + c.columns(0, q) * resid;
    Ok((m, c))
}

/// Predict then update with a dense observation covariance.
pub fn kalman_step(
    fs: &FilterState,
    g: &DMatrix<f64>,
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<FilterState> {
    let (m_pred, c_pred) = predict_step(&fs.m_filt, &fs.c_filt, g, w);
    let (m_filt, c_filt) = kalman_update(&m_pred, &c_pred, f, y, v)?;
    Ok(FilterState {
        m_pred,
        c_pred,
        m_filt,
        c_filt,
    })
}

/// Transition for step `t` (1-based); the last matrix is held for later steps.
pub fn transition_at(gs: &[DMatrix<f64>], t: usize) -> &DMatrix<f64> {
    &gs[(t - 1).min(gs.len() - 1)]
}

/// Output of a forward pass. Index 0 holds the prior; index `t` the moments
/// after assimilating step `t`.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub m_pred: Vec<DVector<f64>>,
    pub m_filt: Vec<DVector<f64>>,
    pub c_filt: Vec<DMatrix<f64>>,
}

impl ForwardPass {
    pub fn steps(&self) -> usize {
        self.m_filt.len() - 1
    }
}

#[allow(clippy::too_many_arguments)]
pub fn forward_filter(
    obs: &ObservationSeries,
    gs: &[DMatrix<f64>],
    w: &DMatrix<f64>,
    sigma2: &DVector<f64>,
    m0: &DVector<f64>,
    c0: &DMatrix<f64>,
    form: UpdateForm,
) -> Result<ForwardPass> {
    let n = m0.len();
    if gs.is_empty() || gs.iter().any(|g| g.shape() != (n, n)) {
        return Err(Error::DimensionMismatch("transition matrices".into()));
    }
    if obs.loaded_dim() > n || sigma2.len() != obs.n_sources() {
        return Err(Error::DimensionMismatch("observation model vs state".into()));
    }
    let steps = obs.len();
    let mut pass = ForwardPass {
        m_pred: Vec::with_capacity(steps + 1),
        m_filt: Vec::with_capacity(steps + 1),
        c_filt: Vec::with_capacity(steps + 1),
    };
    pass.m_pred.push(m0.clone());
    pass.m_filt.push(m0.clone());
    pass.c_filt.push(c0.clone());
    for t in 1..=steps {
        let (mp, cp) = predict_step(&pass.m_filt[t - 1], &pass.c_filt[t - 1], transition_at(gs, t), w);
        let p = obs.step_len(t - 1);
        let use_innovation = match form {
            UpdateForm::Innovation => true,
            UpdateForm::Information => false,
            UpdateForm::Auto => p <= n,
        };
        let (mf, cf) = if p == 0 {
            (mp.clone(), cp)
        } else if use_innovation {
            let (f, y, v) = obs.dense_step(t - 1, n, sigma2);
            kalman_update(&mp, &cp, &f, &y, &DMatrix::from_diagonal(&v))?
        } else {
            let (h, b) = obs.information(t - 1, sigma2);
            information_update(&mp, &cp, &h, &b)?
        };
        if mf.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite filtered mean at step {t}")));
        }
        debug!("filter step {t}: {p} observations");
        pass.m_pred.push(mp);
        pass.m_filt.push(mf);
        pass.c_filt.push(cf);
    }
    Ok(pass)
}
