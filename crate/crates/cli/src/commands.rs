use std::path::PathBuf;

use ebkalman::kalman::{fit_mle_with_noise, forward_filter, loo_predictors};
use ebkalman::poisson::{run_cv, simulate_counts, CvConfig, CvModel, IntensityModel};
use ebkalman::simulate::{run_benchmark, simulate_sparse_ar, BenchmarkConfig, GridCell, DEFAULT_SHOCK_PROB};
use ebkalman::{
    improve_retrospective, improve_sequential, BandwidthPolicy, Family, FilterOutput, Mode, ObservationSeries,
    StateSpaceSpec,
};

use crate::config::ConfigFile;
use crate::error::CliError;
use crate::io::{emit, read_counts, read_series, Cell, Format, Report};
use crate::{Command, Common, ModelArgs};

const COMMON_KEYS: &[&str] = &["out", "format"];
const MODEL_KEYS: &[&str] = &["input", "spec", "fit", "obs-noise", "mode"];

pub const SIMULATE_COLUMNS: &[&str] = &["index", "mu", "y", "indicator"];
pub const FILTER_COLUMNS: &[&str] = &["index", "y", "tilde_mu", "hat_mu", "gain", "residual", "posterior_variance"];
pub const IMPROVE_COLUMNS: &[&str] = &["index", "y", "tilde_mu", "hat_mu", "improved"];
pub const BENCHMARK_COLUMNS: &[&str] = &[
    "mode", "phi", "v", "reps", "n", "interior_start", "interior_end", "kf_mean", "kf_se", "improved_mean",
    "improved_se", "naive_mean", "naive_se",
];
pub const CV_COLUMNS: &[&str] = &[
    "model", "mode", "p", "reps", "kf_mean", "kf_se", "improved_mean", "improved_se", "naive_mean", "naive_se",
];

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { common, n, phi, v, bern_p, seed } => {
            let cfg = load(&common, &["n", "phi", "v", "bern-p", "seed"])?;
            let truth = simulate_sparse_ar(
                cfg.pick_or("n", n, 500)?,
                cfg.pick_or("phi", phi, 0.25)?,
                cfg.pick_or("v", v, 1.0)?,
                cfg.pick_or("bern-p", bern_p, DEFAULT_SHOCK_PROB)?,
                cfg.pick_or("seed", seed, 0)?,
            )?;
            let mut report = Report::new("simulate", SIMULATE_COLUMNS);
            for i in 0..truth.len() {
                report.push(vec![
                    i.into(),
                    truth.mu[i].into(),
                    truth.y[i].into(),
                    Cell::Int(truth.indicators[i] as u64),
                ]);
            }
            finish(&cfg, &common, report)
        }
        Command::SimulateCounts { common, n, seed, lambda_out } => {
            let cfg = load(&common, &["n", "seed", "lambda-out"])?;
            let syn = simulate_counts(cfg.pick_or("n", n, 989)?, IntensityModel::default(), cfg.pick_or("seed", seed, 0)?)?;
            let counts: String = syn.counts.counts().iter().map(|c| format!("{c}\n")).collect();
            emit(&counts, out_path(&cfg, &common)?.as_ref())?;
            if let Some(path) = cfg.pick::<PathBuf>("lambda-out", lambda_out)? {
                let lambda: String = syn.lambda.iter().map(|l| format!("{l}\n")).collect();
                emit(&lambda, Some(&path))?;
            }
            Ok(())
        }
        Command::Filter { common, model } => {
            let cfg = load(&common, MODEL_KEYS)?;
            let (series, _, out) = filtered(&cfg, &model)?;
            let mut report = Report::new("filter", FILTER_COLUMNS);
            for i in 0..series.len() {
                report.push(vec![
                    i.into(),
                    series.get(i).into(),
                    out.tilde_mu()[i].into(),
                    out.hat_mu()[i].into(),
                    out.gain()[i].into(),
                    out.residual()[i].into(),
                    out.posterior_variance()[i].into(),
                ]);
            }
            finish(&cfg, &common, report)
        }
        Command::Improve { common, model, warmup, bandwidth } => {
            let cfg = load(&common, &[MODEL_KEYS, &["warmup", "bandwidth"]].concat())?;
            let (series, spec, out) = filtered(&cfg, &model)?;
            let policy = bandwidth_policy(&cfg, bandwidth)?;
            let improved = match mode(&cfg, model.mode.clone())? {
                Mode::Sequential => improve_sequential(&series, &spec, cfg.pick_or("warmup", warmup, 100)?, policy)?,
                Mode::Retrospective => improve_retrospective(&series, &out, policy)?,
            };
            let mut report = Report::new("improve", IMPROVE_COLUMNS);
            for i in 0..series.len() {
                report.push(vec![
                    i.into(),
                    series.get(i).into(),
                    out.tilde_mu()[i].into(),
                    out.hat_mu()[i].into(),
                    improved[i].into(),
                ]);
            }
            finish(&cfg, &common, report)
        }
        Command::Benchmark { common, mode, phi_grid, v_grid, n, warmup, reps, seed, bern_p, bandwidth } => {
            let cfg = load(
                &common,
                &["mode", "phi-grid", "v-grid", "n", "warmup", "reps", "seed", "bern-p", "bandwidth"],
            )?;
            let modes = match cfg.pick_or("mode", mode, "both".to_string())?.as_str() {
                "both" => vec![Mode::Retrospective, Mode::Sequential],
                other => vec![other.parse::<Mode>().map_err(|e| CliError::Usage(e.to_string()))?],
            };
            let phis = parse_grid("phi-grid", &cfg.pick_or("phi-grid", phi_grid, "0.25,0.75".into())?)?;
            let vs = parse_grid("v-grid", &cfg.pick_or("v-grid", v_grid, "0,1,2,3,4,5".into())?)?;
            let grid: Vec<GridCell> = phis.iter().flat_map(|&phi| vs.iter().map(move |&v| GridCell { phi, v })).collect();
            let config = BenchmarkConfig {
                n: cfg.pick_or("n", n, 500)?,
                warmup: cfg.pick("warmup", warmup)?,
                reps: cfg.pick_or("reps", reps, 100)?,
                seed: cfg.pick_or("seed", seed, 0)?,
                bern_p: cfg.pick_or("bern-p", bern_p, DEFAULT_SHOCK_PROB)?,
                bandwidth: bandwidth_policy(&cfg, bandwidth)?,
            };
            if config.reps == 0 || config.n == 0 {
                return Err(CliError::Usage("n and reps must be at least 1".into()));
            }
            let mut report = Report::new("benchmark", BENCHMARK_COLUMNS);
            for m in modes {
                for r in run_benchmark(&grid, m, &config)? {
                    report.push(vec![
                        Cell::Text(m.to_string()),
                        r.phi.into(),
                        r.v.into(),
                        r.reps.into(),
                        r.n.into(),
                        r.interior.0.into(),
                        r.interior.1.into(),
                        r.kf.mean.into(),
                        r.kf.se.into(),
                        r.improved.mean.into(),
                        r.improved.se.into(),
                        r.naive.mean.into(),
                        r.naive.se.into(),
                    ]);
                }
            }
            finish(&cfg, &common, report)
        }
        Command::Cv { common, input, models, spec, p, reps, mode: m, warmup, seed, bandwidth } => {
            let cfg = load(
                &common,
                &["input", "models", "spec", "p", "reps", "mode", "warmup", "seed", "bandwidth"],
            )?;
            let path: PathBuf = cfg.pick("input", input)?.ok_or_else(|| CliError::Usage("cv needs --input".into()))?;
            let counts = read_counts(&path)?;
            let specs: Vec<String> = if spec.is_empty() {
                cfg.pick::<String>("spec", None)?
                    .map(|s| s.split(';').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
                    .unwrap_or_default()
            } else {
                spec
            };
            let mut cv_models: Vec<CvModel> = specs.iter().map(|s| parse_spec(s).map(CvModel::Fixed)).collect::<Result<_, _>>()?;
            if cv_models.is_empty() || models.is_some() {
                for f in cfg.pick_or("models", models, "ar1,ar2,arima110".into())?.split(',') {
                    cv_models.push(CvModel::Fit(parse_family(f.trim())?));
                }
            }
            let config = CvConfig {
                p: cfg.pick_or("p", p, 0.95)?,
                reps: cfg.pick_or("reps", reps, 500)?,
                mode: mode(&cfg, m)?,
                warmup: cfg.pick_or("warmup", warmup, 100)?,
                seed: cfg.pick_or("seed", seed, 0)?,
                bandwidth: bandwidth_policy(&cfg, bandwidth)?,
            };
            if config.reps == 0 {
                return Err(CliError::Usage("reps must be at least 1".into()));
            }
            let mut report = Report::new("cv", CV_COLUMNS);
            for r in run_cv(&counts, &cv_models, &config)? {
                report.push(vec![
                    Cell::Text(r.model),
                    Cell::Text(r.mode.to_string()),
                    r.p.into(),
                    r.reps.into(),
                    r.kf.mean.into(),
                    r.kf.se.into(),
                    r.improved.mean.into(),
                    r.improved.se.into(),
                    r.naive.mean.into(),
                    r.naive.se.into(),
                ]);
            }
            finish(&cfg, &common, report)
        }
    }
}

fn load(common: &Common, keys: &[&str]) -> Result<ConfigFile, CliError> {
    let cfg = ConfigFile::load(common.config.as_deref())?;
    cfg.restrict(&[COMMON_KEYS, keys].concat())?;
    Ok(cfg)
}

fn out_path(cfg: &ConfigFile, common: &Common) -> Result<Option<PathBuf>, CliError> {
    cfg.pick("out", common.out.clone())
}

fn finish(cfg: &ConfigFile, common: &Common, report: Report) -> Result<(), CliError> {
    let format = match common.format {
        Some(f) => f,
        None => match cfg.pick::<String>("format", None)?.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("jsonl") => Format::Jsonl,
            Some(other) => return Err(CliError::Usage(format!("unknown format '{other}'"))),
        },
    };
    emit(&report.render(format), out_path(cfg, common)?.as_ref())
}

fn mode(cfg: &ConfigFile, flag: Option<String>) -> Result<Mode, CliError> {
    cfg.pick_or("mode", flag, "sequential".into())?
        .parse()
        .map_err(|e: ebkalman::Error| CliError::Usage(e.to_string()))
}

fn parse_family(s: &str) -> Result<Family, CliError> {
    s.parse().map_err(|e: ebkalman::Error| CliError::Usage(e.to_string()))
}

fn parse_grid(name: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Usage(format!("malformed {name} '{s}': expected comma-separated numbers")))?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("{name} is empty")));
    }
    Ok(values)
}

fn bandwidth_policy(cfg: &ConfigFile, flag: Option<String>) -> Result<BandwidthPolicy, CliError> {
    match cfg.pick("bandwidth", flag)?.as_deref() {
        None | Some("log") => Ok(BandwidthPolicy::LogSampleSize),
        Some(s) => match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(BandwidthPolicy::Fixed(v)),
            _ => Err(CliError::Usage(format!("bandwidth must be 'log' or a positive number, got '{s}'"))),
        },
    }
}

/// Parses `family:intercept:phi[,phi2]:variance[:noise]`.
pub fn parse_spec(s: &str) -> Result<StateSpaceSpec, CliError> {
    let bad = |why: &str| CliError::Usage(format!("malformed spec '{s}': {why}"));
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    if !(4..=5).contains(&parts.len()) {
        return Err(bad("expected family:intercept:phi[,phi2]:variance[:noise]"));
    }
    let num = |x: &str| x.parse::<f64>().map_err(|_| bad(&format!("'{x}' is not a number")));
    let family = parse_family(parts[0])?;
    let phi = parts[2].split(',').map(num).collect::<Result<Vec<_>, _>>()?;
    let mut spec = StateSpaceSpec::new(family, phi, num(parts[3])?).with_intercept(num(parts[1])?);
    if let Some(noise) = parts.get(4) {
        spec = spec.with_obs_noise_variance(num(noise)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn filtered(cfg: &ConfigFile, model: &ModelArgs) -> Result<(ObservationSeries, StateSpaceSpec, FilterOutput), CliError> {
    let path: PathBuf = cfg
        .pick("input", model.input.clone())?
        .ok_or_else(|| CliError::Usage("missing --input".into()))?;
    let series = read_series(&path)?;
    let spec = match (cfg.pick::<String>("spec", model.spec.clone())?, cfg.pick::<String>("fit", model.fit.clone())?) {
        (Some(s), None) => parse_spec(&s)?,
        (None, Some(f)) => {
            let noise = cfg.pick_or("obs-noise", model.obs_noise, 1.0)?;
            fit_mle_with_noise(&series, parse_family(&f)?, noise)?.spec
        }
        _ => return Err(CliError::Usage("give exactly one of --spec or --fit".into())),
    };
    let out = match mode(cfg, model.mode.clone())? {
        Mode::Sequential => forward_filter(&series, &spec)?,
        Mode::Retrospective => loo_predictors(&series, &spec)?,
    };
    Ok((series, spec, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings() {
        let s = parse_spec("ar2:1.5:0.5,0.2:0.3").unwrap();
        assert_eq!(s.family, Family::Ar2);
        assert_eq!(s.phi, vec![0.5, 0.2]);
        assert_eq!((s.intercept, s.innovation_variance, s.obs_noise_variance), (1.5, 0.3, 1.0));
        assert_eq!(parse_spec("ar1:0:0.75:0.1:2").unwrap().obs_noise_variance, 2.0);
        for bad in ["ar1:0:0.5", "ar3:0:0.5:1", "ar1:x:0.5:1", "ar1:0:0.5,0.1:1"] {
            assert!(parse_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("g", "0, 1.5,2").unwrap(), vec![0.0, 1.5, 2.0]);
        assert!(parse_grid("g", "0,,1").is_err());
        assert!(parse_grid("g", "a").is_err());
    }
}
