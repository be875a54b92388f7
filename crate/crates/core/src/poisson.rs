//! Poisson-count pipeline: square-root stabilization, binomial thinning and
//! the thinning cross-validation risk estimate.
//!
//! A count `X_i ~ Po(lambda_i)` is split into `U_i ~ B(X_i, p)` and
//! `V_i = X_i - U_i`, which are independent Poisson with means
//! `p lambda_i` and `(1 - p) lambda_i`. Estimators see only `U`; the loss
//! `rho = n^-1 sum (lambda_hat_i/p - V_i/(1-p))^2` minus the moment
//! estimate `A_n = (n (1-p)^2)^-1 sum V_i` is unbiased for
//! `n^-1 sum (lambda_hat_i/p - lambda_i)^2`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::ebcorrect::{improve_retrospective, improve_sequential_from, BandwidthPolicy};
use crate::error::{Error, Result};
use crate::kalman::{fit_mle_with_noise, forward_filter, loo_predictors};
use crate::model::{Family, FilterOutput, Mode, ObservationSeries, StateSpaceSpec};
use crate::seeding::{derive_seed, stream, Purpose};
use crate::simulate::RiskStat;

/// Ordered nonnegative counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSeries(Vec<u64>);

impl CountSeries {
    pub fn new(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinningSplit {
    pub main: Vec<u64>,
    pub auxiliary: Vec<u64>,
    pub p: f64,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// `2 sqrt(x + 0.25)` elementwise.
pub fn stabilize(counts: &CountSeries) -> ObservationSeries {
    stabilize_values(counts.counts().iter().map(|&x| x as f64))
}

/// Stabilizes `U_i / p`, the main sample rescaled to the full-sample mean.
pub fn stabilize_scaled(main: &[u64], p: f64) -> ObservationSeries {
    stabilize_values(main.iter().map(|&u| u as f64 / p))
}

fn stabilize_values(xs: impl Iterator<Item = f64>) -> ObservationSeries {
    ObservationSeries::new(xs.map(|x| 2.0 * (x + 0.25).sqrt()).collect())
        .expect("transformed counts are finite")
}

/// `0.25 mu^2` elementwise.
pub fn unstabilize(mu_hat: &[f64]) -> Vec<f64> {
    mu_hat.iter().map(|m| 0.25 * m * m).collect()
}

/// Binomial thinning with retention probability `p`.
pub fn thin(counts: &CountSeries, p: f64, seed: u64) -> Result<ThinningSplit> {
    check_p(p)?;
    let mut rng = stream(seed, Purpose::Thinning, 0);
    let mut main = Vec::with_capacity(counts.len());
    let mut auxiliary = Vec::with_capacity(counts.len());
    for &x in counts.counts() {
        let u = Binomial::new(x, p)
            .map_err(|_| Error::InvalidProbability(p))?
            .sample(&mut rng);
        main.push(u);
        auxiliary.push(x - u);
    }
    Ok(ThinningSplit { main, auxiliary, p })
}

/// `n^-1 sum (lambda_hat_i/p - V_i/(1-p))^2`.
pub fn cv_loss(lambda_hat: &[f64], auxiliary: &[u64], p: f64) -> Result<f64> {
    check_p(p)?;
    if lambda_hat.len() != auxiliary.len() {
        return Err(Error::LengthMismatch {
            expected: auxiliary.len(),
            found: lambda_hat.len(),
        });
    }
    if auxiliary.is_empty() {
        return Err(Error::InvalidArgument("empty loss window".into()));
    }
    let s: f64 = lambda_hat
        .iter()
        .zip(auxiliary)
        .map(|(l, &v)| (l / p - v as f64 / (1.0 - p)).powi(2))
        .sum();
    Ok(s / auxiliary.len() as f64)
}

/// Moment estimate `(n (1-p)^2)^-1 sum V_i` of the loss offset.
pub fn estimate_an(auxiliary: &[u64], p: f64) -> Result<f64> {
    check_p(p)?;
    if auxiliary.is_empty() {
        return Err(Error::InvalidArgument("empty loss window".into()));
    }
    let s: f64 = auxiliary.iter().map(|&v| v as f64).sum();
    Ok(s / (auxiliary.len() as f64 * (1.0 - p).powi(2)))
}

/// How the state-space model for one cross-validation run is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum CvModel {
    /// Maximum-likelihood fit of the family on each main sample.
    Fit(Family),
    /// A fixed spec applied as given.
    Fixed(StateSpaceSpec),
}

impl CvModel {
    pub fn label(&self) -> String {
        match self {
            CvModel::Fit(f) => f.to_string(),
            CvModel::Fixed(s) => format!("{}-fixed", s.family),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub p: f64,
    pub reps: usize,
    pub mode: Mode,
    pub warmup: usize,
    pub seed: u64,
    pub bandwidth: BandwidthPolicy,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            p: 0.95,
            reps: 500,
            mode: Mode::Sequential,
            warmup: 100,
            seed: 0,
            bandwidth: BandwidthPolicy::LogSampleSize,
        }
    }
}

/// The p-scale intensity estimates of one thinning draw.
#[derive(Debug, Clone, PartialEq)]
pub struct CvEstimates {
    pub split: ThinningSplit,
    pub kf: Vec<f64>,
    pub improved: Vec<f64>,
    pub naive: Vec<f64>,
}

/// `rho - A_n` for each method over the scored window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvRisk {
    pub kf: f64,
    pub improved: f64,
    pub naive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub model: String,
    pub mode: Mode,
    pub p: f64,
    pub reps: usize,
    pub kf: RiskStat,
    pub improved: RiskStat,
    pub naive: RiskStat,
}

fn resolve_spec(model: &CvModel, series: &ObservationSeries, noise: f64) -> Result<StateSpaceSpec> {
    match model {
        CvModel::Fixed(spec) => Ok(spec.clone()),
        CvModel::Fit(family) => Ok(fit_mle_with_noise(series, *family, noise)?.spec),
    }
}

/// Fits and filters one main sample, returning p-scale estimates.
pub fn cv_estimates(
    counts: &CountSeries,
    model: &CvModel,
    config: &CvConfig,
    rep: usize,
) -> Result<CvEstimates> {
    check_p(config.p)?;
    let p = config.p;
    let split = thin(counts, p, derive_seed(config.seed, &[Purpose::Thinning as u64, rep as u64]))?;
    let y = stabilize_scaled(&split.main, p);
    // U/p has variance lambda/p, so its square-root transform has variance 1/p.
    let spec = resolve_spec(model, &y, 1.0 / p)?;
    let (out, improved): (FilterOutput, Vec<f64>) = match config.mode {
        Mode::Sequential => {
            let out = forward_filter(&y, &spec)?;
            let imp = improve_sequential_from(&out, config.warmup.max(1), config.bandwidth)?;
            (out, imp)
        }
        Mode::Retrospective => {
            let out = loo_predictors(&y, &spec)?;
            let imp = improve_retrospective(&y, &out, config.bandwidth)?;
            (out, imp)
        }
    };
    let to_p_scale = |mu: &[f64]| unstabilize(mu).into_iter().map(|l| p * l).collect::<Vec<_>>();
    Ok(CvEstimates {
        kf: to_p_scale(out.hat_mu()),
        improved: to_p_scale(&improved),
        naive: split.main.iter().map(|&u| u as f64).collect(),
        split,
    })
}

impl CvEstimates {
    /// `rho - A_n` for each method over indices `from..`.
    pub fn approximated_risk(&self, from: usize) -> Result<CvRisk> {
        let v = &self.split.auxiliary[from..];
        let p = self.split.p;
        let an = estimate_an(v, p)?;
        Ok(CvRisk {
            kf: cv_loss(&self.kf[from..], v, p)? - an,
            improved: cv_loss(&self.improved[from..], v, p)? - an,
            naive: cv_loss(&self.naive[from..], v, p)? - an,
        })
    }

    /// `(n p^2)^-1 sum (lambda_hat_i - p lambda_i)^2` over indices `from..`.
    pub fn direct_risk(&self, lambda: &[f64], from: usize) -> Result<CvRisk> {
        if lambda.len() != self.kf.len() {
            return Err(Error::LengthMismatch {
                expected: self.kf.len(),
                found: lambda.len(),
            });
        }
        let p = self.split.p;
        let risk = |est: &[f64]| {
            let w = &est[from..];
            w.iter()
                .zip(&lambda[from..])
                .map(|(e, l)| (e - p * l).powi(2))
                .sum::<f64>()
                / (w.len() as f64 * p * p)
        };
        Ok(CvRisk {
            kf: risk(&self.kf),
            improved: risk(&self.improved),
            naive: risk(&self.naive),
        })
    }
}

fn check_window(counts: &CountSeries, config: &CvConfig) -> Result<()> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if config.warmup >= counts.len() {
        return Err(Error::InvalidArgument(format!(
            "warm-up {} leaves no scored index in a series of length {}",
            config.warmup,
            counts.len()
        )));
    }
    Ok(())
}

/// Per-repetition `rho - A_n` for one model, in repetition order.
pub fn cv_replications(counts: &CountSeries, model: &CvModel, config: &CvConfig) -> Result<Vec<CvRisk>> {
    check_window(counts, config)?;
    (0..config.reps)
        .into_par_iter()
        .map(|rep| cv_estimates(counts, model, config, rep)?.approximated_risk(config.warmup))
        .collect()
}

/// Averages and standard errors of `rho - A_n` for every model.
pub fn run_cv(counts: &CountSeries, models: &[CvModel], config: &CvConfig) -> Result<Vec<CvReport>> {
    models
        .iter()
        .map(|model| {
            let runs = cv_replications(counts, model, config)?;
            let pick = |f: fn(&CvRisk) -> f64| RiskStat::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
            Ok(CvReport {
                model: model.label(),
                mode: config.mode,
                p: config.p,
                reps: config.reps,
                kf: pick(|r| r.kf),
                improved: pick(|r| r.improved),
                naive: pick(|r| r.naive),
            })
        })
        .collect()
}

/// Synthetic counts with known intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCounts {
    pub lambda: Vec<f64>,
    pub counts: CountSeries,
}

/// Counts whose log-intensity is a Gaussian AR(1) around `ln(mean)` with
/// occasional level jumps.
///
/// `log lambda_i = ln(mean) + psi (log lambda_{i-1} - ln(mean)) + e_i + J_i`
/// with `e_i ~ N(0, sd^2)` and `J_i = N(0, jump_sd^2)` with probability
/// `jump_p`, zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityModel {
    pub mean: f64,
    pub psi: f64,
    pub sd: f64,
    pub jump_p: f64,
    pub jump_sd: f64,
}

impl Default for IntensityModel {
    fn default() -> Self {
        Self {
            mean: 24.0,
            psi: 0.9,
            sd: 0.05,
            jump_p: 0.05,
            jump_sd: 0.4,
        }
    }
}

pub fn simulate_counts(n: usize, model: IntensityModel, seed: u64) -> Result<SyntheticCounts> {
    let valid = model.mean > 0.0
        && model.psi.abs() < 1.0
        && model.sd >= 0.0
        && model.jump_sd >= 0.0
        && (0.0..=1.0).contains(&model.jump_p);
    if !valid {
        return Err(Error::InvalidArgument(format!("invalid intensity model {model:?}")));
    }
    let mut latent = stream(seed, Purpose::LatentIntensity, 0);
    let center = model.mean.ln();
    let mut dev = 0.0;
    let mut lambda = Vec::with_capacity(n);
    for _ in 0..n {
        let e: f64 = latent.sample(StandardNormal);
        let j: f64 = latent.sample(StandardNormal);
        let jump = if latent.random::<f64>() < model.jump_p { model.jump_sd * j } else { 0.0 };
        dev = model.psi * dev + model.sd * e + jump;
        lambda.push((center + dev).exp());
    }
    let counts = draw_counts(&lambda, seed)?;
    Ok(SyntheticCounts { lambda, counts })
}

/// Independent `Po(lambda_i)` draws.
pub fn draw_counts(lambda: &[f64], seed: u64) -> Result<CountSeries> {
    let mut rng = stream(seed, Purpose::Counts, 0);
    lambda
        .iter()
        .map(|&l| {
            if l == 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(l).map_err(|_| Error::InvalidArgument(format!("intensity {l} out of range")))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect::<Result<_>>()
        .map(CountSeries::new)
}
