//! Dynamic model, filtering, sampling and prediction.

pub mod conjugate;
pub mod data_driven;
pub mod ffbs;
pub mod gibbs;
pub mod kalman;
pub mod model;
pub mod observations;
pub mod predict;

pub use conjugate::{gibbs_update_sigma2, gibbs_update_w, sigma2_posterior, w_posterior, InvGamma, InvWishart};
pub use data_driven::{fit_data_driven_g, DataDrivenFit};
pub use ffbs::{backward_sample, ffbs};
pub use gibbs::{run_gibbs, Dynamics, GibbsConfig, PosteriorDraws};
pub use kalman::{forward_filter, information_update, kalman_step, kalman_update, ForwardPass, UpdateForm};
pub use model::{build_g, AugmentedState, FilterState, ModelParams, Priors};
pub use observations::{ObservationSeries, SourceBlock};
pub use predict::{compute_mse, predict, Prediction};
