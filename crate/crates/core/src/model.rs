//! Domain types shared by every estimator: the observation series, the
//! state-space model specification, and the per-index output of a filter.
//!
//! The state process follows
//!
//! ```text
//! AR(1):        mu_i = c (1 - phi) + phi mu_{i-1} + U_i
//! AR(2):        mu_i = c (1 - phi1 - phi2) + phi1 mu_{i-1} + phi2 mu_{i-2} + U_i
//! ARIMA(1,1,0): (mu_i - mu_{i-1}) = c (1 - phi) + phi (mu_{i-1} - mu_{i-2}) + U_i
//! ```
//!
//! with `U_i ~ N(0, innovation_variance)` and observations
//! `Y_i = mu_i + eps_i`, `eps_i ~ N(0, obs_noise_variance)`. The intercept `c`
//! is therefore the stationary mean of the level (AR families) or of the
//! first differences (ARIMA).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default initial state variance used for diffuse starts.
pub const DEFAULT_DIFFUSE_SCALE: f64 = 1e7;

/// Relative tolerance of the gain identity check on [`FilterOutput`].
pub const GAIN_IDENTITY_TOL: f64 = 1e-10;

/// Ordered real observations with an in-band missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl ObservationSeries {
    /// A fully observed series.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::from_parts(values, missing)
    }

    /// Builds a series where `None` marks a missing observation.
    pub fn from_options<I>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let (values, missing): (Vec<f64>, Vec<bool>) = values
            .into_iter()
            .map(|v| match v {
                Some(x) => (x, false),
                None => (f64::NAN, true),
            })
            .unzip();
        Self::from_parts(values, missing)
    }

    fn from_parts(mut values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series must contain at least one entry".into()));
        }
        for (index, (v, &m)) in values.iter_mut().zip(&missing).enumerate() {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(Self { values, missing })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false; kept for API symmetry with slices.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observation at `i`, or `None` if it is missing.
    pub fn get(&self, i: usize) -> Option<f64> {
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.missing[i]
    }

    /// Raw values; missing entries hold NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    pub fn observed_count(&self) -> usize {
        self.missing.iter().filter(|m| !**m).count()
    }

    /// Copy of the series with index `i` marked missing.
    pub fn with_masked(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.missing[i] = true;
        out.values[i] = f64::NAN;
        out
    }
}

/// The three model families supported by the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Ar1,
    Ar2,
    Arima110,
}

impl Family {
    /// Number of AR coefficients the family carries.
    pub fn ar_order(self) -> usize {
        match self {
            Family::Ar1 | Family::Arima110 => 1,
            Family::Ar2 => 2,
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            Family::Ar1 => 1,
            Family::Ar2 | Family::Arima110 => 2,
        }
    }

    pub fn all() -> [Family; 3] {
        [Family::Ar1, Family::Ar2, Family::Arima110]
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Ar1 => "ar1",
            Family::Ar2 => "ar2",
            Family::Arima110 => "arima110",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar1" | "ar(1)" => Ok(Family::Ar1),
            "ar2" | "ar(2)" => Ok(Family::Ar2),
            "arima110" | "arima(1,1,0)" => Ok(Family::Arima110),
            other => Err(Error::InvalidArgument(format!("unknown model family `{other}`"))),
        }
    }
}

/// Whether the predictor of `mu_i` may use observations after `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `tilde_mu_i` uses `Y_1..Y_{i-1}`.
    Sequential,
    /// `tilde_mu_i` uses every `Y_j` with `j != i`.
    Retrospective,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Retrospective => "retrospective",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(Mode::Sequential),
            "retrospective" | "retro" => Ok(Mode::Retrospective),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// How the first state is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Initialization {
    /// Stationary mean and covariance when the AR part is stationary,
    /// otherwise a diffuse start with variance `diffuse_scale`.
    #[default]
    Auto,
    /// Always start from `N(intercept, diffuse_scale)`.
    Diffuse,
}

/// Specification of a scalar state-space model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceSpec {
    pub family: Family,
    pub phi: Vec<f64>,
    pub intercept: f64,
    pub innovation_variance: f64,
    pub obs_noise_variance: f64,
    pub diffuse_scale: f64,
    pub init: Initialization,
}

impl StateSpaceSpec {
    pub fn new(family: Family, phi: Vec<f64>, innovation_variance: f64) -> Self {
        Self {
            family,
            phi,
            intercept: 0.0,
            innovation_variance,
            obs_noise_variance: 1.0,
            diffuse_scale: DEFAULT_DIFFUSE_SCALE,
            init: Initialization::Auto,
        }
    }

    pub fn ar1(phi: f64, innovation_variance: f64) -> Self {
        Self::new(Family::Ar1, vec![phi], innovation_variance)
    }

    pub fn ar2(phi1: f64, phi2: f64, innovation_variance: f64) -> Self {
        Self::new(Family::Ar2, vec![phi1, phi2], innovation_variance)
    }

    pub fn arima110(phi: f64, innovation_variance: f64) -> Self {
        Self::new(Family::Arima110, vec![phi], innovation_variance)
    }

    pub fn with_intercept(mut self, intercept: f64) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn with_obs_noise_variance(mut self, variance: f64) -> Self {
        self.obs_noise_variance = variance;
        self
    }

    pub fn with_diffuse_scale(mut self, scale: f64) -> Self {
        self.diffuse_scale = scale;
        self
    }

    pub fn with_init(mut self, init: Initialization) -> Self {
        self.init = init;
        self
    }

    /// Checks every field invariant, naming the first violated field.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &'static str, reason: String| Err(Error::InvalidSpec { field, reason });
        if self.phi.len() != self.family.ar_order() {
            return bad(
                "phi",
                format!(
                    "{} expects {} coefficient(s), got {}",
                    self.family,
                    self.family.ar_order(),
                    self.phi.len()
                ),
            );
        }
        if let Some(p) = self.phi.iter().find(|p| !p.is_finite()) {
            return bad("phi", format!("coefficient {p} is not finite"));
        }
        if !self.intercept.is_finite() {
            return bad("intercept", "must be finite".into());
        }
        if !(self.innovation_variance >= 0.0 && self.innovation_variance.is_finite()) {
            return bad(
                "innovation_variance",
                format!("must be finite and >= 0, got {}", self.innovation_variance),
            );
        }
        if !(self.obs_noise_variance > 0.0 && self.obs_noise_variance.is_finite()) {
            return bad(
                "obs_noise_variance",
                format!("must be finite and > 0, got {}", self.obs_noise_variance),
            );
        }
        if !(self.diffuse_scale > 0.0 && self.diffuse_scale.is_finite()) {
            return bad(
                "diffuse_scale",
                format!("must be finite and > 0, got {}", self.diffuse_scale),
            );
        }
        Ok(())
    }

    /// True when the level process admits a stationary distribution.
    pub fn is_stationary(&self) -> bool {
        match self.family {
            Family::Ar1 => self.phi[0].abs() < 1.0,
            Family::Ar2 => {
                let (p1, p2) = (self.phi[0], self.phi[1]);
                p2.abs() < 1.0 && p1 + p2 < 1.0 && p2 - p1 < 1.0
            }
            Family::Arima110 => false,
        }
    }
}

/// Per-index output of a sequential or leave-one-out filter.
///
/// `tilde_mu[i]` is the predictor of `mu_i` built without `Y_i`,
/// `hat_mu[i]` the estimate that also uses `Y_i`, `posterior_variance[i]`
/// the variance of `mu_i` given the predictor's conditioning set, and
/// `gain[i] = R / (R + posterior_variance[i])` where `R` is the observation
/// noise variance (so `1 / (1 + tau^2)` for unit noise). At missing indices
/// the gain is 1 and the residual is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    tilde_mu: Vec<f64>,
    hat_mu: Vec<f64>,
    gain: Vec<f64>,
    residual: Vec<Option<f64>>,
    posterior_variance: Vec<f64>,
    noise_variance: f64,
}

impl FilterOutput {
    /// Assembles an output, deriving gains and residuals from the series.
    ///
    /// In debug builds the gain identity
    /// `hat_mu = gain * tilde_mu + (1 - gain) * Y` is verified at every
    /// observed index.
    pub fn new(
        series: &ObservationSeries,
        tilde_mu: Vec<f64>,
        hat_mu: Vec<f64>,
        posterior_variance: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let n = series.len();
        for len in [tilde_mu.len(), hat_mu.len(), posterior_variance.len()] {
            if len != n {
                return Err(Error::LengthMismatch { expected: n, found: len });
            }
        }
        let mut gain = Vec::with_capacity(n);
        let mut residual = Vec::with_capacity(n);
        for i in 0..n {
            let tau2 = posterior_variance[i];
            if tau2.is_nan() || tau2 < 0.0 || !tilde_mu[i].is_finite() || !hat_mu[i].is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            match series.get(i) {
                Some(y) => {
                    gain.push(noise_variance / (noise_variance + tau2));
                    residual.push(Some(y - tilde_mu[i]));
                }
                None => {
                    gain.push(1.0);
                    residual.push(None);
                }
            }
        }
        let out = Self {
            tilde_mu,
            hat_mu,
            gain,
            residual,
            posterior_variance,
            noise_variance,
        };
        if cfg!(debug_assertions) {
            out.check_gain_identity(series)?;
        }
        Ok(out)
    }

    /// Verifies `hat_mu = gain * tilde_mu + (1 - gain) * Y` to
    /// [`GAIN_IDENTITY_TOL`] relative error at every observed index.
    pub fn check_gain_identity(&self, series: &ObservationSeries) -> Result<()> {
        for i in 0..self.len() {
            let Some(y) = series.get(i) else {
                if self.hat_mu[i] != self.tilde_mu[i] {
                    return Err(Error::InconsistentOutput {
                        index: i,
                        reason: "missing index must carry the predictor forward".into(),
                    });
                }
                continue;
            };
            let g = self.gain[i];
            let implied = g * self.tilde_mu[i] + (1.0 - g) * y;
            let scale = 1.0_f64.max(y.abs()).max(self.tilde_mu[i].abs()).max(self.hat_mu[i].abs());
            if (self.hat_mu[i] - implied).abs() > GAIN_IDENTITY_TOL * scale {
                return Err(Error::InconsistentOutput {
                    index: i,
                    reason: format!(
                        "hat_mu {} differs from gain-weighted value {implied}",
                        self.hat_mu[i]
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tilde_mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tilde_mu.is_empty()
    }

    pub fn tilde_mu(&self) -> &[f64] {
        &self.tilde_mu
    }

    pub fn hat_mu(&self) -> &[f64] {
        &self.hat_mu
    }

    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    pub fn residual(&self) -> &[Option<f64>] {
        &self.residual
    }

    pub fn posterior_variance(&self) -> &[f64] {
        &self.posterior_variance
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Residuals at observed indices, in index order.
    pub fn observed_residuals(&self) -> Vec<f64> {
        self.residual.iter().flatten().copied().collect()
    }
}
