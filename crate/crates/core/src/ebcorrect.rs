//! Nonparametric empirical-Bayes correction of filter residuals.
//!
//! Given residuals `Z_j = Y_j - tilde_mu_j`, the marginal density of `Z` and
//! its derivative are estimated with the logistic-type kernel
//! `K(x) = 2 / (e^x + e^-x)^2 = sech^2(x) / 2`, and the posterior mean of
//! `nu = mu - tilde_mu` is approximated by Tweedie's formula
//! `delta(z) = z + f'(z) / f(z)`.
//!
//! Because `K'(x) / K(x) = -2 tanh(x)`, the ratio `f'/f` is a convex
//! combination of values in `[-2/sigma, 2/sigma]`. It is evaluated in that
//! form with weights shifted by the nearest residual, so far-tail
//! arguments never produce `0/0`.

use crate::error::{Error, Result};
use crate::kalman::forward_filter;
use crate::model::{FilterOutput, ObservationSeries, StateSpaceSpec};

/// Lower clamp on data-driven bandwidths.
pub const MIN_BANDWIDTH: f64 = 0.05;

/// `K(x) = 2 / (e^x + e^-x)^2`, evaluated as `2t / (1 + t)^2` with
/// `t = e^{-2|x|}` so large `|x|` underflows to zero.
pub fn kernel(x: f64) -> f64 {
    let t = (-2.0 * x.abs()).exp();
    2.0 * t / ((1.0 + t) * (1.0 + t))
}

/// `K'(x) = -4 (e^x - e^-x) / (e^x + e^-x)^3 = -2 tanh(x) K(x)`.
pub fn kernel_deriv(x: f64) -> f64 {
    -2.0 * x.tanh() * kernel(x)
}

/// `max(1 / ln(max(m, 3)), MIN_BANDWIDTH)` for a sample of size `m`.
pub fn log_sample_bandwidth(m: usize) -> f64 {
    (1.0 / (m.max(3) as f64).ln()).max(MIN_BANDWIDTH)
}

/// How the kernel bandwidth is chosen from the residual sample size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BandwidthPolicy {
    /// `sigma = 1 / log m`, clamped (see [`log_sample_bandwidth`]).
    #[default]
    LogSampleSize,
    Fixed(f64),
}

impl BandwidthPolicy {
    pub fn bandwidth(&self, m: usize) -> f64 {
        match *self {
            BandwidthPolicy::LogSampleSize => log_sample_bandwidth(m),
            BandwidthPolicy::Fixed(s) => s,
        }
    }
}

/// Kernel estimates of the residual density and its derivative at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub value: f64,
    pub derivative: f64,
}

/// Kernel density estimate over a residual sample with a fixed bandwidth.
///
/// Residuals are kept sorted, so every evaluation depends on the sample
/// only as a multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct EbCorrector {
    residuals: Vec<f64>,
    bandwidth: f64,
}

impl EbCorrector {
    pub fn new(mut residuals: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::InvalidCorrector("residual sample is empty".into()));
        }
        if let Some(j) = residuals.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite { index: j });
        }
        Self::check_bandwidth(bandwidth)?;
        residuals.sort_by(f64::total_cmp);
        Ok(Self { residuals, bandwidth })
    }

    pub fn with_policy(residuals: Vec<f64>, policy: BandwidthPolicy) -> Result<Self> {
        let sigma = policy.bandwidth(residuals.len());
        Self::new(residuals, sigma)
    }

    fn check_bandwidth(bandwidth: f64) -> Result<()> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidCorrector(format!("bandwidth must be positive, got {bandwidth}")))
        }
    }

    /// The residual sample in ascending order.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_size(&self) -> usize {
        self.residuals.len()
    }

    /// Appends one residual; the bandwidth is left unchanged.
    pub fn push(&mut self, z: f64) -> Result<()> {
        if !z.is_finite() {
            return Err(Error::NonFinite { index: self.residuals.len() });
        }
        let at = self.residuals.partition_point(|&r| r <= z);
        self.residuals.insert(at, z);
        Ok(())
    }

    pub fn set_bandwidth(&mut self, bandwidth: f64) -> Result<()> {
        Self::check_bandwidth(bandwidth)?;
        self.bandwidth = bandwidth;
        Ok(())
    }

    /// `f(z) = (m sigma)^-1 sum K((z - Z_j)/sigma)` and its derivative in `z`,
    /// `(m sigma^2)^-1 sum K'((z - Z_j)/sigma)`.
    ///
    /// Both underflow to zero once `z` is several hundred bandwidths away
    /// from every residual; [`EbCorrector::log_density_at`] stays finite.
    pub fn density_at(&self, z: f64) -> Density {
        let s = self.bandwidth;
        let (mut sum_k, mut sum_kd) = (0.0, 0.0);
        for &zj in &self.residuals {
            let u = (z - zj) / s;
            let k = kernel(u);
            sum_k += k;
            sum_kd += -2.0 * u.tanh() * k;
        }
        let m = self.residuals.len() as f64;
        Density {
            value: sum_k / (m * s),
            derivative: sum_kd / (m * s * s),
        }
    }

    fn nearest_scaled_distance(&self, z: f64) -> f64 {
        let r = &self.residuals;
        let at = r.partition_point(|&v| v < z);
        let above = r.get(at).map_or(f64::INFINITY, |v| v - z);
        let below = if at > 0 { z - r[at - 1] } else { f64::INFINITY };
        above.min(below) / self.bandwidth
    }

    /// `ln f(z)`, finite for every finite `z`.
    pub fn log_density_at(&self, z: f64) -> f64 {
        let s = self.bandwidth;
        let a = self.nearest_scaled_distance(z);
        // K(u) = 2 e^{-2|u|} / (1 + e^{-2|u|})^2; factor out e^{-2a}.
        let sum: f64 = self
            .residuals
            .iter()
            .map(|zj| {
                let au = ((z - zj) / s).abs();
                let t = (-2.0 * au).exp();
                (-2.0 * (au - a)).exp() / ((1.0 + t) * (1.0 + t))
            })
            .sum();
        let m = self.residuals.len() as f64;
        2.0f64.ln() - 2.0 * a + sum.ln() - (m * s).ln()
    }

    /// `f'(z) / f(z)`, always within `[-2/sigma, 2/sigma]`.
    pub fn correction(&self, z: f64) -> f64 {
        let s = self.bandwidth;
        let a = self.nearest_scaled_distance(z);
        let (mut num, mut den) = (0.0, 0.0);
        for &zj in &self.residuals {
            let u = (z - zj) / s;
            let au = u.abs();
            let t = (-2.0 * au).exp();
            let w = (-2.0 * (au - a)).exp() / ((1.0 + t) * (1.0 + t));
            num += w * (-2.0 * u.tanh());
            den += w;
        }
        let bound = 2.0 / s;
        (num / (den * s)).clamp(-bound, bound)
    }

    /// Tweedie estimate `z + f'(z)/f(z)`. The result satisfies
    /// `|delta_hat(z) - z| <= 2/sigma` as evaluated in floating point.
    pub fn delta_hat(&self, z: f64) -> f64 {
        let bound = 2.0 / self.bandwidth;
        let c = self.correction(z);
        let mut d = z + c;
        // Rounding of the sum can push the difference a few ulps past the bound.
        while (d - z) > bound {
            d = d.next_down();
        }
        while (d - z) < -bound {
            d = d.next_up();
        }
        d
    }
}

/// Retrospective improvement `tilde_mu_i + delta_hat(Z_i)` with one
/// corrector built from every observed residual. Missing indices carry the
/// predictor forward.
pub fn improve_retrospective(
    series: &ObservationSeries,
    filter_out: &FilterOutput,
    policy: BandwidthPolicy,
) -> Result<Vec<f64>> {
    if filter_out.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            found: filter_out.len(),
        });
    }
    let residuals = filter_out.observed_residuals();
    if residuals.is_empty() {
        return Ok(filter_out.tilde_mu().to_vec());
    }
    let corrector = EbCorrector::with_policy(residuals, policy)?;
    Ok(filter_out
        .tilde_mu()
        .iter()
        .zip(filter_out.residual())
        .map(|(&t, z)| match z {
            Some(z) => t + corrector.delta_hat(*z),
            None => t,
        })
        .collect())
}

/// Sequential improvement on top of the forward Kalman filter.
///
/// Indices `i <= warmup` (1-based) return the plain filter estimate. Past
/// the warm-up, index `i` returns `tilde_mu_i + delta_hat^i(Z_i)` where the
/// corrector holds exactly the observed residuals before `i` and its
/// bandwidth follows `policy` at that sample size.
pub fn improve_sequential(
    series: &ObservationSeries,
    spec: &StateSpaceSpec,
    warmup: usize,
    policy: BandwidthPolicy,
) -> Result<Vec<f64>> {
    let filter_out = forward_filter(series, spec)?;
    improve_sequential_from(&filter_out, warmup, policy)
}

/// As [`improve_sequential`], reusing an existing forward-filter output.
pub fn improve_sequential_from(
    filter_out: &FilterOutput,
    warmup: usize,
    policy: BandwidthPolicy,
) -> Result<Vec<f64>> {
    if warmup < 1 {
        return Err(Error::InvalidArgument("warm-up must be at least 1".into()));
    }
    let n = filter_out.len();
    let mut out = Vec::with_capacity(n);
    let mut corrector: Option<EbCorrector> = None;
    for i in 0..n {
        let tilde = filter_out.tilde_mu()[i];
        let z = filter_out.residual()[i];
        let value = match (&mut corrector, z) {
            (Some(c), Some(z)) if i >= warmup => {
                c.set_bandwidth(policy.bandwidth(c.sample_size()))?;
                tilde + c.delta_hat(z)
            }
            _ => filter_out.hat_mu()[i],
        };
        out.push(value);
        if let Some(z) = z {
            match &mut corrector {
                Some(c) => c.push(z)?,
                None => corrector = Some(EbCorrector::new(vec![z], policy.bandwidth(1))?),
            }
        }
    }
    Ok(out)
}
