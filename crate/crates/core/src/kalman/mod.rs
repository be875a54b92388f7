//! Exact Gaussian filtering and smoothing for the supported model families.
//!
//! Every family is embedded in a state of dimension at most two:
//! `s_i = T s_{i-1} + d + R U_i`, `mu_i = Z s_i`. AR(1) only uses the
//! first coordinate; the second row and column stay identically zero.

mod filter;
mod mle;
mod oracle;

use nalgebra::{Matrix2, RowVector2, Vector2};

pub use filter::{forward_filter, log_likelihood, loo_predictors, smooth, SmoothedState};
pub use mle::{fit_mle, fit_mle_with_noise, MleFit};
pub use oracle::{gaussian_conditioning_oracle, ORACLE_MAX_LEN};

use crate::error::Result;
use crate::model::{Family, Initialization, StateSpaceSpec};

/// Canonical state-space embedding of a [`StateSpaceSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceMatrices {
    pub state_dim: usize,
    pub transition: Matrix2<f64>,
    pub shock_loading: Vector2<f64>,
    pub observation_row: RowVector2<f64>,
    /// Constant added to the state at every transition.
    pub offset: Vector2<f64>,
    /// Mean and covariance of the first state `s_1`.
    pub initial_mean: Vector2<f64>,
    pub initial_covariance: Matrix2<f64>,
    pub innovation_variance: f64,
    pub obs_noise_variance: f64,
    /// True when the start is diffuse; the first `state_dim` innovations
    /// are then left out of the likelihood.
    pub diffuse: bool,
}

impl StateSpaceMatrices {
    pub fn from_spec(spec: &StateSpaceSpec) -> Result<Self> {
        spec.validate()?;
        let q = spec.innovation_variance;
        let c = spec.intercept;
        let kappa = spec.diffuse_scale;
        let diffuse = spec.init == Initialization::Diffuse || !spec.is_stationary();
        let observation_row = RowVector2::new(1.0, 0.0);
        let shock_loading = Vector2::new(1.0, 0.0);

        let (state_dim, transition, offset, initial_mean, initial_covariance) = match spec.family {
            Family::Ar1 => {
                let phi = spec.phi[0];
                let var = if diffuse { kappa } else { q / (1.0 - phi * phi) };
                (
                    1,
                    Matrix2::new(phi, 0.0, 0.0, 0.0),
                    Vector2::new(c * (1.0 - phi), 0.0),
                    Vector2::new(c, 0.0),
                    Matrix2::new(var, 0.0, 0.0, 0.0),
                )
            }
            Family::Ar2 => {
                let (p1, p2) = (spec.phi[0], spec.phi[1]);
                let cov = if diffuse {
                    Matrix2::new(kappa, 0.0, 0.0, kappa)
                } else {
                    // Autocovariances of a stationary AR(2).
                    let g0 = (1.0 - p2) * q / ((1.0 + p2) * ((1.0 - p2).powi(2) - p1 * p1));
                    let g1 = p1 * g0 / (1.0 - p2);
                    Matrix2::new(g0, g1, g1, g0)
                };
                (
                    2,
                    Matrix2::new(p1, p2, 1.0, 0.0),
                    Vector2::new(c * (1.0 - p1 - p2), 0.0),
                    Vector2::new(c, c),
                    cov,
                )
            }
            Family::Arima110 => {
                let phi = spec.phi[0];
                (
                    2,
                    Matrix2::new(1.0 + phi, -phi, 1.0, 0.0),
                    Vector2::new(c * (1.0 - phi), 0.0),
                    Vector2::zeros(),
                    Matrix2::new(kappa, 0.0, 0.0, kappa),
                )
            }
        };

        Ok(Self {
            state_dim,
            transition,
            shock_loading,
            observation_row,
            offset,
            initial_mean,
            initial_covariance,
            innovation_variance: q,
            obs_noise_variance: spec.obs_noise_variance,
            diffuse,
        })
    }

    /// State noise covariance `q R R'`.
    pub fn state_noise(&self) -> Matrix2<f64> {
        self.shock_loading * self.shock_loading.transpose() * self.innovation_variance
    }

    /// Dimensions are mutually consistent and unused coordinates are zero.
    pub fn is_consistent(&self) -> bool {
        match self.state_dim {
            1 => {
                self.transition[(0, 1)] == 0.0
                    && self.transition[(1, 0)] == 0.0
                    && self.transition[(1, 1)] == 0.0
                    && self.initial_covariance[(1, 1)] == 0.0
            }
            2 => true,
            _ => false,
        }
    }
}
