use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::StateSpaceMatrices;
use crate::error::{Error, Result};
use crate::model::{FilterOutput, ObservationSeries, StateSpaceSpec};

/// One-step prediction of the state before seeing `Y_t`.
#[derive(Debug, Clone, Copy)]
struct Predicted {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
}

/// Innovation `v = Y - Z a` with variance `f = Z P Z' + R`.
#[derive(Debug, Clone, Copy)]
struct Innovation {
    v: f64,
    f: f64,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    pred: Predicted,
    innov: Option<Innovation>,
}

impl StateSpaceMatrices {
    fn initial(&self) -> Predicted {
        Predicted {
            mean: self.initial_mean,
            cov: self.initial_covariance,
        }
    }

    fn observed_mean(&self, p: &Predicted) -> f64 {
        (self.observation_row * p.mean)[0]
    }

    fn observed_variance(&self, p: &Predicted) -> f64 {
        (self.observation_row * p.cov * self.observation_row.transpose())[0]
    }

    /// Measurement update followed by the time update to `t + 1`.
    fn advance(&self, p: &Predicted, y: Option<f64>) -> (Predicted, Option<Innovation>) {
        let (mean, cov, innov) = match y {
            Some(y) => {
                let v = y - self.observed_mean(p);
                let f = self.observed_variance(p) + self.obs_noise_variance;
                let k = p.cov * self.observation_row.transpose() / f;
                let cov = p.cov - k * k.transpose() * f;
                (p.mean + k * v, cov, Some(Innovation { v, f }))
            }
            None => (p.mean, p.cov, None),
        };
        let t = &self.transition;
        let next = Predicted {
            mean: t * mean + self.offset,
            cov: t * cov * t.transpose() + self.state_noise(),
        };
        (next, innov)
    }

    /// Backward step of the fixed-interval smoother: maps `(r_t, N_t)` to
    /// `(r_{t-1}, N_{t-1})`.
    fn smooth_back(
        &self,
        step: &Step,
        r: &Vector2<f64>,
        n: &Matrix2<f64>,
    ) -> (Vector2<f64>, Matrix2<f64>) {
        let t = &self.transition;
        match step.innov {
            Some(Innovation { v, f }) => {
                let z_t = self.observation_row.transpose();
                let kf = step.pred.cov * z_t / f;
                let l = t * (Matrix2::identity() - kf * self.observation_row);
                let r_prev = z_t * (v / f) + l.transpose() * r;
                let n_prev = z_t * self.observation_row / f + l.transpose() * n * l;
                (r_prev, n_prev)
            }
            None => (t.transpose() * r, t.transpose() * n * t),
        }
    }
}

fn finite(p: &Predicted, index: usize) -> Result<()> {
    if p.mean.iter().chain(p.cov.iter()).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { index })
    }
}

fn filter_steps(m: &StateSpaceMatrices, series: &ObservationSeries) -> Result<Vec<Step>> {
    let mut steps = Vec::with_capacity(series.len());
    let mut pred = m.initial();
    for (i, y) in series.iter().enumerate() {
        finite(&pred, i)?;
        let (next, innov) = m.advance(&pred, y);
        steps.push(Step { pred, innov });
        pred = next;
    }
    Ok(steps)
}

/// Sequential Kalman filter.
///
/// `tilde_mu[i] = E[mu_i | Y_1..Y_{i-1}]` and `hat_mu[i] = E[mu_i | Y_1..Y_i]`;
/// missing indices skip the update.
pub fn forward_filter(series: &ObservationSeries, spec: &StateSpaceSpec) -> Result<FilterOutput> {
    let m = StateSpaceMatrices::from_spec(spec)?;
    let steps = filter_steps(&m, series)?;
    let n = series.len();
    let (mut tilde, mut hat, mut tau2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for s in &steps {
        let t = m.observed_mean(&s.pred);
        let var = m.observed_variance(&s.pred);
        tilde.push(t);
        tau2.push(var);
        hat.push(match s.innov {
            Some(Innovation { v, f }) => t + var / f * v,
            None => t,
        });
    }
    FilterOutput::new(series, tilde, hat, tau2, m.obs_noise_variance)
}

/// Gaussian prediction-error log-likelihood. With a diffuse start the first
/// `state_dim` innovations are excluded.
pub fn log_likelihood(series: &ObservationSeries, spec: &StateSpaceSpec) -> Result<f64> {
    let m = StateSpaceMatrices::from_spec(spec)?;
    let mut burn = if m.diffuse { m.state_dim } else { 0 };
    let mut pred = m.initial();
    let mut ll = 0.0;
    for (i, y) in series.iter().enumerate() {
        finite(&pred, i)?;
        let (next, innov) = m.advance(&pred, y);
        if let Some(Innovation { v, f }) = innov {
            if burn > 0 {
                burn -= 1;
            } else {
                ll -= 0.5 * ((2.0 * std::f64::consts::PI * f).ln() + v * v / f);
            }
        }
        pred = next;
    }
    Ok(ll)
}

/// Fixed-interval smoothed moments of `mu_i` given every observed `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedState {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// Fixed-interval smoother (backward `r`/`N` recursion), which needs no
/// inversion of the predicted covariance and handles missing values.
pub fn smooth(series: &ObservationSeries, spec: &StateSpaceSpec) -> Result<SmoothedState> {
    let m = StateSpaceMatrices::from_spec(spec)?;
    let steps = filter_steps(&m, series)?;
    let n = steps.len();
    let mut mean = vec![0.0; n];
    let mut variance = vec![0.0; n];
    let mut r = Vector2::zeros();
    let mut nn = Matrix2::zeros();
    for t in (0..n).rev() {
        let step = &steps[t];
        let (r_prev, n_prev) = m.smooth_back(step, &r, &nn);
        let p = &step.pred.cov;
        let state = step.pred.mean + p * r_prev;
        let cov = p - p * n_prev * p;
        mean[t] = (m.observation_row * state)[0];
        variance[t] = (m.observation_row * cov * m.observation_row.transpose())[0].max(0.0);
        r = r_prev;
        nn = n_prev;
    }
    Ok(SmoothedState { mean, variance })
}

/// Smoothed moments of `mu_i` with observation `i` masked, reusing the
/// unmasked filter for indices before `i`.
fn masked_moments(
    m: &StateSpaceMatrices,
    series: &ObservationSeries,
    steps: &[Step],
    i: usize,
    scratch: &mut Vec<Step>,
) -> Result<(f64, f64)> {
    scratch.clear();
    let masked = Step {
        pred: steps[i].pred,
        innov: None,
    };
    let (mut pred, _) = m.advance(&masked.pred, None);
    for t in i + 1..series.len() {
        finite(&pred, t)?;
        let (next, innov) = m.advance(&pred, series.get(t));
        scratch.push(Step { pred, innov });
        pred = next;
    }
    let mut r = Vector2::zeros();
    let mut nn = Matrix2::zeros();
    for step in scratch.iter().rev() {
        (r, nn) = m.smooth_back(step, &r, &nn);
    }
    let (r_prev, n_prev) = m.smooth_back(&masked, &r, &nn);
    let p = &masked.pred.cov;
    let state = masked.pred.mean + p * r_prev;
    let cov = p - p * n_prev * p;
    let mean = (m.observation_row * state)[0];
    let var = (m.observation_row * cov * m.observation_row.transpose())[0].max(0.0);
    if !(mean.is_finite() && var.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok((mean, var))
}

/// Retrospective leave-one-out predictors.
///
/// `tilde_mu[i] = E[mu_i | Y_j, j != i]` from one smoother pass per index
/// with `i` masked; `hat_mu[i] = E[mu_i | all Y]`, obtained from the
/// leave-one-out moments by the Gaussian update with `Y_i`.
pub fn loo_predictors(series: &ObservationSeries, spec: &StateSpaceSpec) -> Result<FilterOutput> {
    let m = StateSpaceMatrices::from_spec(spec)?;
    let steps = filter_steps(&m, series)?;
    let n = series.len();
    let moments: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map_init(Vec::new, |scratch, i| masked_moments(&m, series, &steps, i, scratch))
        .collect::<Result<_>>()?;

    let r = m.obs_noise_variance;
    let mut tilde = Vec::with_capacity(n);
    let mut hat = Vec::with_capacity(n);
    let mut tau2 = Vec::with_capacity(n);
    for (i, &(mean, var)) in moments.iter().enumerate() {
        tilde.push(mean);
        tau2.push(var);
        hat.push(match series.get(i) {
            Some(y) => {
                let g = r / (r + var);
                g * mean + (1.0 - g) * y
            }
            None => mean,
        });
    }
    FilterOutput::new(series, tilde, hat, tau2, r)
}
