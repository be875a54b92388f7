//! Kalman filtering for low-order state-space models with a nonparametric
//! empirical-Bayes correction of the one-step predictions.
//!
//! The filter in [`kalman`] produces predictive means `tilde_mu_i` and
//! posterior means `hat_mu_i`. The residuals `Y_i - tilde_mu_i` feed a
//! kernel density estimate in [`ebcorrect`], and Tweedie's formula turns
//! its log-derivative into an improved estimate. [`simulate`] and
//! [`poisson`] hold the Monte-Carlo benchmark and the count-data
//! cross-validation harness.

pub mod ebcorrect;
pub mod error;
pub mod kalman;
pub mod model;
pub mod poisson;
pub mod seeding;
pub mod simulate;

pub use ebcorrect::{improve_retrospective, improve_sequential, BandwidthPolicy, EbCorrector};
pub use error::{Error, Result};
pub use kalman::{fit_mle, forward_filter, gaussian_conditioning_oracle, loo_predictors, MleFit};
pub use model::{Family, FilterOutput, Initialization, Mode, ObservationSeries, StateSpaceSpec};
