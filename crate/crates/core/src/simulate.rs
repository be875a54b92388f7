//! Sparse-shock AR(1) generator and the Monte-Carlo risk benchmark.
//!
//! The state follows `mu_i = phi mu_{i-1} + X_i I_i` with `mu_0 = 0`,
//! `X_i ~ N(0, v^2)` and `I_i ~ Bernoulli(p)`, observed as
//! `Y_i = mu_i + eps_i` with standard normal noise. The benchmark filters
//! each path with the AR(1) Kalman filter that knows `phi` and the true
//! shock variance `p v^2`, applies the matching empirical-Bayes improver,
//! and scores squared error over an interior window.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::ebcorrect::{improve_retrospective, improve_sequential_from, BandwidthPolicy};
use crate::error::{Error, Result};
use crate::kalman::{forward_filter, loo_predictors};
use crate::model::{FilterOutput, Mode, ObservationSeries, StateSpaceSpec};
use crate::seeding::{derive_seed, stream, Purpose};

/// Default Bernoulli probability of a shock.
pub const DEFAULT_SHOCK_PROB: f64 = 0.1;

/// A simulated path with its latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTruth {
    pub mu: Vec<f64>,
    pub y: Vec<f64>,
    pub shocks: Vec<f64>,
    pub indicators: Vec<bool>,
}

impl SimulationTruth {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn series(&self) -> ObservationSeries {
        ObservationSeries::new(self.y.clone()).expect("simulated observations are finite")
    }
}

/// Simulates `n` steps of the sparse-shock AR(1) model.
///
/// `shock_scale` is the standard deviation `v` of the shock size. Shock
/// sizes, indicators and observation noise come from independent
/// sub-streams of `seed`.
pub fn simulate_sparse_ar(
    n: usize,
    phi: f64,
    shock_scale: f64,
    bern_p: f64,
    seed: u64,
) -> Result<SimulationTruth> {
    if n == 0 {
        return Err(Error::InvalidArgument("simulation length must be at least 1".into()));
    }
    if !(shock_scale >= 0.0 && shock_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("shock scale must be >= 0, got {shock_scale}")));
    }
    let bern = Bernoulli::new(bern_p).map_err(|_| Error::InvalidProbability(bern_p))?;
    let mut size_rng = stream(seed, Purpose::ShockSize, 0);
    let mut ind_rng = stream(seed, Purpose::ShockIndicator, 0);
    let mut noise_rng = stream(seed, Purpose::ObservationNoise, 0);

    let mut truth = SimulationTruth {
        mu: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        shocks: Vec::with_capacity(n),
        indicators: Vec::with_capacity(n),
    };
    let mut prev = 0.0;
    for _ in 0..n {
        let x: f64 = shock_scale * size_rng.sample::<f64, _>(StandardNormal);
        let on = bern.sample(&mut ind_rng);
        let u = if on { x } else { 0.0 };
        let mu = phi * prev + u;
        let eps: f64 = noise_rng.sample(StandardNormal);
        truth.mu.push(mu);
        truth.y.push(mu + eps);
        truth.shocks.push(u);
        truth.indicators.push(on);
        prev = mu;
    }
    Ok(truth)
}

/// Exact Bayes rule `delta^n` for the realized `nu_i = mu_i - tilde_mu_i`:
/// the posterior mean of `nu` given `nu + eta = z`, `eta ~ N(0, 1)`, with
/// the empirical distribution of the `nu_i` as prior.
#[derive(Debug, Clone)]
pub struct PopulationDelta {
    nu: Vec<f64>,
}

impl PopulationDelta {
    pub fn new(truth: &SimulationTruth, filter_out: &FilterOutput) -> Result<Self> {
        if truth.len() != filter_out.len() {
            return Err(Error::LengthMismatch {
                expected: truth.len(),
                found: filter_out.len(),
            });
        }
        let nu = truth
            .mu
            .iter()
            .zip(filter_out.tilde_mu())
            .zip(filter_out.residual())
            .filter(|(_, z)| z.is_some())
            .map(|((m, t), _)| m - t)
            .collect::<Vec<_>>();
        if nu.is_empty() {
            return Err(Error::InvalidArgument("no observed indices".into()));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// `z + f'(z)/f(z)` with `f(z) = n^-1 sum phi(z - nu_i)`, evaluated as
    /// the normal-weighted average of the `nu_i`.
    pub fn eval(&self, z: f64) -> f64 {
        let shift = self
            .nu
            .iter()
            .map(|nu| 0.5 * (z - nu).powi(2))
            .fold(f64::INFINITY, f64::min);
        let (mut num, mut den) = (0.0, 0.0);
        for &nu in &self.nu {
            let w = (shift - 0.5 * (z - nu).powi(2)).exp();
            num += w * nu;
            den += w;
        }
        num / den
    }
}

pub fn population_delta_oracle(truth: &SimulationTruth, filter_out: &FilterOutput, z: f64) -> Result<f64> {
    Ok(PopulationDelta::new(truth, filter_out)?.eval(z))
}

/// One `(phi, v)` cell of the benchmark grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub phi: f64,
    pub v: f64,
}

/// The twelve cells `phi in {0.25, 0.75}`, `v in {0, ..., 5}`.
pub fn default_grid() -> Vec<GridCell> {
    [0.25, 0.75]
        .iter()
        .flat_map(|&phi| (0..=5).map(move |v| GridCell { phi, v: v as f64 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    /// Number of scored indices.
    pub n: usize,
    /// Warm-up length; `None` uses 100 (sequential, before the window) or
    /// 50 (retrospective, on each side).
    pub warmup: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    pub bern_p: f64,
    pub bandwidth: BandwidthPolicy,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            n: 500,
            warmup: None,
            reps: 100,
            seed: 0,
            bern_p: DEFAULT_SHOCK_PROB,
            bandwidth: BandwidthPolicy::LogSampleSize,
        }
    }
}

impl BenchmarkConfig {
    pub fn warmup_for(&self, mode: Mode) -> usize {
        self.warmup.unwrap_or(match mode {
            Mode::Sequential => 100,
            Mode::Retrospective => 50,
        })
    }

    /// Total simulated length and the scored half-open index range.
    pub fn layout(&self, mode: Mode) -> (usize, (usize, usize)) {
        let w = self.warmup_for(mode);
        let total = match mode {
            Mode::Sequential => w + self.n,
            Mode::Retrospective => 2 * w + self.n,
        };
        (total, (w, w + self.n))
    }
}

/// Sum of squared errors over the interior for one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationRisk {
    pub kf: f64,
    pub improved: f64,
    pub naive: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskStat {
    pub mean: f64,
    pub se: f64,
}

impl RiskStat {
    /// Mean and standard error (sample standard deviation over `sqrt(k)`).
    pub fn from_samples(xs: &[f64]) -> Self {
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let se = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskReport {
    pub phi: f64,
    pub v: f64,
    pub mode: Mode,
    pub reps: usize,
    pub n: usize,
    /// Scored half-open index range within the simulated path.
    pub interior: (usize, usize),
    pub kf: RiskStat,
    pub improved: RiskStat,
    pub naive: RiskStat,
}

/// Seed of replication `rep` in `cell`; shared by both modes.
pub fn replication_seed(master: u64, cell: GridCell, rep: usize) -> u64 {
    derive_seed(
        master,
        &[Purpose::Replication as u64, cell.phi.to_bits(), cell.v.to_bits(), rep as u64],
    )
}

/// The Kalman spec the benchmark treats as known for a cell.
pub fn benchmark_spec(cell: GridCell, bern_p: f64) -> StateSpaceSpec {
    StateSpaceSpec::ar1(cell.phi, bern_p * cell.v * cell.v)
}

fn sse(est: &[f64], truth: &[f64], (lo, hi): (usize, usize)) -> f64 {
    est[lo..hi]
        .iter()
        .zip(&truth[lo..hi])
        .map(|(e, m)| (e - m).powi(2))
        .sum()
}

pub fn run_replication(
    cell: GridCell,
    mode: Mode,
    config: &BenchmarkConfig,
    rep: usize,
) -> Result<ReplicationRisk> {
    let (total, interior) = config.layout(mode);
    let truth = simulate_sparse_ar(
        total,
        cell.phi,
        cell.v,
        config.bern_p,
        replication_seed(config.seed, cell, rep),
    )?;
    let series = truth.series();
    let spec = benchmark_spec(cell, config.bern_p);
    let (kf, improved) = match mode {
        Mode::Sequential => {
            let out = forward_filter(&series, &spec)?;
            let warmup = config.warmup_for(mode).max(1);
            let improved = improve_sequential_from(&out, warmup, config.bandwidth)?;
            (out.hat_mu().to_vec(), improved)
        }
        Mode::Retrospective => {
            let out = loo_predictors(&series, &spec)?;
            let improved = improve_retrospective(&series, &out, config.bandwidth)?;
            (out.hat_mu().to_vec(), improved)
        }
    };
    Ok(ReplicationRisk {
        kf: sse(&kf, &truth.mu, interior),
        improved: sse(&improved, &truth.mu, interior),
        naive: sse(&truth.y, &truth.mu, interior),
    })
}

/// Runs every cell of `grid` in `mode`. Replications run in parallel and
/// are reduced in replication order.
pub fn run_benchmark(grid: &[GridCell], mode: Mode, config: &BenchmarkConfig) -> Result<Vec<RiskReport>> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if config.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let (_, interior) = config.layout(mode);
    grid.iter()
        .map(|&cell| {
            let runs: Vec<ReplicationRisk> = (0..config.reps)
                .into_par_iter()
                .map(|rep| run_replication(cell, mode, config, rep))
                .collect::<Result<_>>()?;
            let pick = |f: fn(&ReplicationRisk) -> f64| {
                RiskStat::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
            };
            Ok(RiskReport {
                phi: cell.phi,
                v: cell.v,
                mode,
                reps: config.reps,
                n: config.n,
                interior,
                kf: pick(|r| r.kf),
                improved: pick(|r| r.improved),
                naive: pick(|r| r.naive),
            })
        })
        .collect()
}
