//! Gaussian maximum-likelihood fitting through the innovations
//! decomposition of the prediction-error likelihood.
//!
//! Parameters are searched on an unconstrained domain: AR coefficients go
//! through `tanh` (and the partial-autocorrelation map for AR(2)) so every
//! iterate is stationary, and the innovation variance through `exp` with a
//! clamped exponent. The observation noise stays fixed at its spec value.

use super::filter::log_likelihood;
use crate::error::{Error, Result};
use crate::model::{Family, ObservationSeries, StateSpaceSpec};

const MIN_LEN: usize = 30;
const LOG_Q_MIN: f64 = -23.0;
const LOG_Q_MAX: f64 = 12.0;
const PHI_SCALE: f64 = 0.999;
const MAX_ITER: usize = 4000;
const F_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub spec: StateSpaceSpec,
    pub log_likelihood: f64,
    pub evaluations: usize,
}

fn decode(family: Family, theta: &[f64], noise: f64) -> StateSpaceSpec {
    let q = theta[theta.len() - 1].clamp(LOG_Q_MIN, LOG_Q_MAX).exp();
    let spec = match family {
        Family::Ar1 => StateSpaceSpec::ar1(PHI_SCALE * theta[1].tanh(), q),
        Family::Arima110 => StateSpaceSpec::arima110(PHI_SCALE * theta[1].tanh(), q),
        Family::Ar2 => {
            let r1 = PHI_SCALE * theta[1].tanh();
            let r2 = PHI_SCALE * theta[2].tanh();
            StateSpaceSpec::ar2(r1 * (1.0 - r2), r2, q)
        }
    };
    spec.with_intercept(theta[0]).with_obs_noise_variance(noise)
}

fn atanh_scaled(phi: f64) -> f64 {
    (phi / PHI_SCALE).clamp(-0.95, 0.95).atanh()
}

fn moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let acf = |lag: usize| {
        if var <= 0.0 || x.len() <= lag {
            return 0.0;
        }
        x.iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n * var)
    };
    (mean, var, acf(1), acf(2))
}

/// Moment-based starting point in the unconstrained parameterization.
fn initial_theta(family: Family, series: &ObservationSeries, noise: f64) -> Vec<f64> {
    let obs: Vec<f64> = series.iter().flatten().collect();
    match family {
        Family::Ar1 => {
            let (mean, var, r1, _) = moments(&obs);
            let phi = r1.clamp(-0.9, 0.9);
            let q = ((var - noise).max(0.05)) * (1.0 - phi * phi);
            vec![mean, atanh_scaled(phi), q.ln()]
        }
        Family::Ar2 => {
            let (mean, var, r1, r2) = moments(&obs);
            let r1 = r1.clamp(-0.9, 0.9);
            let phi2 = ((r2 - r1 * r1) / (1.0 - r1 * r1)).clamp(-0.9, 0.9);
            let pacf1 = (r1).clamp(-0.9, 0.9);
            let q = ((var - noise).max(0.05)) * (1.0 - r1 * r1);
            vec![mean, atanh_scaled(pacf1), atanh_scaled(phi2), q.ln()]
        }
        Family::Arima110 => {
            let diffs: Vec<f64> = obs.windows(2).map(|w| w[1] - w[0]).collect();
            let (mean, var, r1, _) = moments(&diffs);
            let phi = r1.clamp(-0.9, 0.9);
            let q = (var - 2.0 * noise).max(0.05);
            vec![mean, atanh_scaled(phi), q.ln()]
        }
    }
}

struct Simplex {
    best: Vec<f64>,
    value: f64,
    evaluations: usize,
    converged: bool,
}

/// Plain Nelder-Mead with standard coefficients.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(f: &mut F, start: &[f64], steps: &[f64]) -> Simplex {
    let dim = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..dim {
        let mut p = start.to_vec();
        p[k] += steps[k];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evaluations = dim + 1;
    let mut converged = false;

    for _ in 0..MAX_ITER {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (lo, hi) = (vals[0], vals[dim]);
        if hi.is_finite() && (hi - lo).abs() <= F_TOL * (1.0 + lo.abs()) {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| pts[..dim].iter().map(|p| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[dim])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let reflected = along(-1.0);
        let fr = f(&reflected);
        evaluations += 1;
        if fr < vals[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            evaluations += 1;
            if fe < fr {
                pts[dim] = expanded;
                vals[dim] = fe;
            } else {
                pts[dim] = reflected;
                vals[dim] = fr;
            }
            continue;
        }
        if fr < vals[dim - 1] {
            pts[dim] = reflected;
            vals[dim] = fr;
            continue;
        }
        let contracted = if fr < vals[dim] { along(-0.5) } else { along(0.5) };
        let fc = f(&contracted);
        evaluations += 1;
        if fc < vals[dim].min(fr) {
            pts[dim] = contracted;
            vals[dim] = fc;
            continue;
        }
        let best = pts[0].clone();
        for i in 1..=dim {
            pts[i] = best.iter().zip(&pts[i]).map(|(b, p)| b + 0.5 * (p - b)).collect();
            vals[i] = f(&pts[i]);
            evaluations += 1;
        }
    }

    let (i, &value) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    Simplex {
        best: pts[i].clone(),
        value,
        evaluations,
        converged,
    }
}

/// Fits `family` to `series` by maximizing the Gaussian likelihood.
///
/// Five starts (the moment estimate plus four fixed AR-coefficient
/// offsets) are each refined by Nelder-Mead, then the best is polished by
/// one more restart. Fails with [`Error::NotConverged`], carrying the best
/// iterate, if that final search does not meet the tolerance. The
/// observation noise variance is fixed at 1.
pub fn fit_mle(series: &ObservationSeries, family: Family) -> Result<MleFit> {
    fit_mle_with_noise(series, family, 1.0)
}

/// [`fit_mle`] with the observation noise variance fixed at `noise`.
pub fn fit_mle_with_noise(series: &ObservationSeries, family: Family, noise: f64) -> Result<MleFit> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise}")));
    }
    if series.observed_count() < MIN_LEN {
        return Err(Error::InvalidArgument(format!(
            "maximum likelihood needs at least {MIN_LEN} observations, got {}",
            series.observed_count()
        )));
    }
    let mut objective = |theta: &[f64]| match log_likelihood(series, &decode(family, theta, noise)) {
        Ok(ll) if ll.is_finite() => -ll,
        _ => f64::INFINITY,
    };

    let base = initial_theta(family, series, noise);
    let obs: Vec<f64> = series.iter().flatten().collect();
    let (_, var, _, _) = moments(&obs);
    let mut steps = vec![0.5; base.len()];
    steps[0] = var.sqrt().max(0.1);

    let mut evaluations = 0;
    let mut best: Option<Simplex> = None;
    for offset in [0.0, -1.0, 1.0, -0.5, 0.5] {
        let mut start = base.clone();
        start[1] += offset;
        let run = nelder_mead(&mut objective, &start, &steps);
        evaluations += run.evaluations;
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let polish = nelder_mead(&mut objective, &best.best, &steps);
    evaluations += polish.evaluations;
    let final_run = if polish.value <= best.value { polish } else { best };

    let spec = decode(family, &final_run.best, noise);
    if !final_run.converged || !final_run.value.is_finite() {
        return Err(Error::NotConverged {
            best: Box::new(spec),
            objective: final_run.value,
            evaluations,
        });
    }
    Ok(MleFit {
        spec,
        log_likelihood: -final_run.value,
        evaluations,
    })
}
