//! Least-squares transition estimate for the physics-free baseline.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DataDrivenFit {
    pub g: DMatrix<f64>,
    /// Fewer transitions than state entries; `g` is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Solve `G [theta_1 .. theta_{T-1}] = [theta_2 .. theta_T] - noise` in the
/// least-squares sense. `traj` holds `theta_0..theta_T` as columns; `noise`
/// (if given) has one column per transition.
pub fn fit_data_driven_g(traj: &DMatrix<f64>, noise: Option<&DMatrix<f64>>) -> Result<DataDrivenFit> {
    let fit = fit_quiet(traj, noise)?;
    if fit.rank_deficient {
        warn!(
            "{} transitions for {} state entries: transition estimate is rank-deficient, using minimum-norm solution",
            traj.ncols().saturating_sub(2),
            traj.nrows()
        );
    }
    Ok(fit)
}

pub(crate) fn fit_quiet(traj: &DMatrix<f64>, noise: Option<&DMatrix<f64>>) -> Result<DataDrivenFit> {
    let k = traj.nrows();
    let steps = traj.ncols().saturating_sub(1);
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 states after the initial one, got {steps}")));
    }
    let pairs = steps - 1;
    let later = traj.columns(2, pairs).into_owned();
    let earlier = traj.columns(1, pairs);
    let target = match noise {
        Some(w) => {
            if w.shape() != (k, pairs) {
                return Err(Error::DimensionMismatch(format!("noise {:?}, expected {:?}", w.shape(), (k, pairs))));
            }
            later - w
        }
        None => later,
    };
    let pinv = earlier
        .into_owned()
        .pseudo_inverse(1e-12 * earlier.amax().max(1.0))
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(DataDrivenFit {
        g: target * pinv,
        rank_deficient: pairs < k,
    })
}
