//! Gibbs sampler alternating state trajectories and noise parameters.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conjugate::{gibbs_update_w, sigma2_posterior};
use super::data_driven::fit_quiet;
use super::ffbs::ffbs;
use super::kalman::{forward_filter, UpdateForm};
use super::model::ModelParams;
use super::observations::ObservationSeries;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, standard_normal};

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConfig {
    pub iters: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub form: UpdateForm,
    /// Keep every post-burn-in state noise draw (large for big states).
    pub store_w: bool,
}

impl GibbsConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            iters: 500,
            burn_in: 200,
            seed,
            form: UpdateForm::Auto,
            store_w: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 || self.iters <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iters, self.burn_in
            )));
        }
        Ok(())
    }
}

/// Transition model for the sampler.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// Known transitions, one per step or a single one held constant.
    Fixed(Vec<DMatrix<f64>>),
    /// Transition re-estimated from each sampled trajectory, starting at `I`.
    Learned,
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    /// Kept trajectories, `n x (T+1)` with column `t` = state at step `t`.
    pub theta_draws: Vec<DMatrix<f64>>,
    pub w_draws: Vec<DMatrix<f64>>,
    pub sigma2_draws: Vec<DVector<f64>>,
    /// Kept transition estimates (learned dynamics only).
    pub g_draws: Vec<DMatrix<f64>>,
    pub burn_in: usize,
    pub seed: u64,
    pub theta_mean: DMatrix<f64>,
    pub w_mean: DMatrix<f64>,
    pub sigma2_mean: DVector<f64>,
    /// Transitions used for point prediction.
    pub g_hat: Vec<DMatrix<f64>>,
    /// Filtered means `m_{t|t}`, `t = 0..T`, under the point estimates.
    pub filtered: Vec<DVector<f64>>,
    /// One-step predicted means `m_{t|t-1}`, same indexing (entry 0 is the prior).
    pub predicted: Vec<DVector<f64>>,
    pub rank_deficient: bool,
}

impl PosteriorDraws {
    pub fn kept(&self) -> usize {
        self.theta_draws.len()
    }

    pub fn state_dim(&self) -> usize {
        self.theta_mean.nrows()
    }

    pub fn last_state(&self) -> DVector<f64> {
        self.theta_mean.column(self.theta_mean.ncols() - 1).into_owned()
    }
}

pub fn run_gibbs(
    obs: &ObservationSeries,
    dynamics: &Dynamics,
    params: &ModelParams,
    config: &GibbsConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    params.validate()?;
    let n = params.state_dim();
    if obs.is_empty() || obs.total_observed() == 0 {
        return Err(Error::EmptyData("no observed values in the training window".into()));
    }
    if params.sigma2.len() != obs.n_sources() {
        return Err(Error::DimensionMismatch("one variance per source required".into()));
    }
    let steps = obs.len();
    let learned = matches!(dynamics, Dynamics::Learned);
    if learned && steps < 2 {
        return Err(Error::InvalidArgument("learned dynamics need at least 2 steps".into()));
    }
    let rank_deficient = learned && steps - 1 < n;
    if rank_deficient {
        warn!(
            "{} transitions for {n} state entries: transition estimate is rank-deficient, using minimum-norm solution",
            steps - 1
        );
    }
    let mut gs = match dynamics {
        Dynamics::Fixed(g) => g.clone(),
        Dynamics::Learned => vec![DMatrix::identity(n, n)],
    };
    let counts = obs.observed_per_source();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = params.w_cov.clone();
    let mut sigma2 = params.sigma2.clone();
    let kept = config.iters - config.burn_in;
    let mut out = PosteriorDraws {
        theta_draws: Vec::with_capacity(kept),
        w_draws: Vec::new(),
        sigma2_draws: Vec::with_capacity(kept),
        g_draws: Vec::new(),
        burn_in: config.burn_in,
        seed: config.seed,
        theta_mean: DMatrix::zeros(n, steps + 1),
        w_mean: DMatrix::zeros(n, n),
        sigma2_mean: DVector::zeros(obs.n_sources()),
        g_hat: Vec::new(),
        filtered: Vec::new(),
        predicted: Vec::new(),
        rank_deficient,
    };
    let mut g_sum = DMatrix::zeros(n, n);
    for iter in 0..config.iters {
        let (_, traj) = ffbs(obs, &gs, &w, &sigma2, &params.m0, &params.c0, config.form, &mut rng)?;
        if traj.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite trajectory at iteration {iter}")));
        }
        if learned {
            let l = cholesky_jitter(&w, "state noise")?.l();
            let noise = DMatrix::from_columns(
                &(0..steps - 1).map(|_| &l * standard_normal(n, &mut rng)).collect::<Vec<_>>(),
            );
            gs = vec![fit_quiet(&traj, Some(&noise))?.g];
        }
        w = if learned {
            // residuals over the same transitions the estimate was fitted to
            let fitted = traj.columns(1, steps).into_owned();
            gibbs_update_w(&fitted, &gs, &params.priors.phi, params.priors.nu, &mut rng)?
        } else {
            gibbs_update_w(&traj, &gs, &params.priors.phi, params.priors.nu, &mut rng)?
        };
        let ss = obs.residual_ss(&traj);
        for m in 0..obs.n_sources() {
            let post = sigma2_posterior(counts[m], ss[m], params.priors.a[m], params.priors.b[m]);
            sigma2[m] = post.sample(&mut rng)?;
        }
        if iter >= config.burn_in {
            out.theta_mean += &traj;
            out.w_mean += &w;
            out.sigma2_mean += &sigma2;
            if learned {
                g_sum += &gs[0];
                out.g_draws.push(gs[0].clone());
            }
            if config.store_w {
                out.w_draws.push(w.clone());
            }
            out.theta_draws.push(traj);
            out.sigma2_draws.push(sigma2.clone());
        }
        if (iter + 1) % 100 == 0 {
            info!("gibbs iteration {}/{}", iter + 1, config.iters);
        }
    }
    let k = kept as f64;
    out.theta_mean /= k;
    out.w_mean /= k;
    out.sigma2_mean /= k;
    out.g_hat = if learned { vec![g_sum / k] } else { gs };
    let pass = forward_filter(obs, &out.g_hat, &out.w_mean, &out.sigma2_mean, &params.m0, &params.c0, config.form)?;
    out.filtered = pass.m_filt;
    out.predicted = pass.m_pred;
    Ok(out)
}
