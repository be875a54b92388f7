//! Forward filter, leave-one-out predictors and smoother against dense
//! Gaussian conditioning.

use ebkalman::kalman::{forward_filter, gaussian_conditioning_oracle, loo_predictors, smooth};
use ebkalman::model::{ObservationSeries, StateSpaceSpec};
use ebkalman::simulate::simulate_sparse_ar;

const TOL: f64 = 1e-8;

fn spec_grid() -> Vec<StateSpaceSpec> {
    let mut specs = Vec::new();
    for &phi in &[-0.6, 0.0, 0.3, 0.75, 0.95] {
        for &q in &[0.2, 1.5] {
            specs.push(StateSpaceSpec::ar1(phi, q).with_intercept(0.7));
        }
    }
    for &(p1, p2) in &[(0.5, 0.3), (1.2, -0.5), (-0.4, 0.2), (0.1, -0.8), (0.9, 0.05)] {
        for &q in &[0.4, 2.0] {
            specs.push(StateSpaceSpec::ar2(p1, p2, q).with_intercept(-1.0).with_obs_noise_variance(0.8));
        }
    }
    specs
}

fn series_for(k: usize, n: usize) -> ObservationSeries {
    let t = simulate_sparse_ar(n, 0.6, 1.5, 0.5, 100 + k as u64).unwrap();
    ObservationSeries::from_options(
        t.y.iter().enumerate().map(|(i, &y)| if i % 11 == 7 { None } else { Some(y) }),
    )
    .unwrap()
}

fn observed(s: &ObservationSeries, keep: impl Fn(usize) -> bool) -> Vec<usize> {
    (0..s.len()).filter(|&j| !s.is_missing(j) && keep(j)).collect()
}

#[test]
fn twenty_point_grid_matches_oracle() {
    let specs = spec_grid();
    assert_eq!(specs.len(), 20);
    for (k, spec) in specs.iter().enumerate() {
        let s = series_for(k, 20 + k + k % 3 * 5);
        let f = forward_filter(&s, spec).unwrap();
        let l = loo_predictors(&s, spec).unwrap();
        let sm = smooth(&s, spec).unwrap();
        for i in 0..s.len() {
            let (m, v) = gaussian_conditioning_oracle(&s, spec, &observed(&s, |j| j < i), i).unwrap();
            assert!((f.tilde_mu()[i] - m).abs() < TOL, "spec {k} i {i} predictive");
            assert!((f.posterior_variance()[i] - v).abs() < TOL, "spec {k} i {i} variance");
            let (m, _) = gaussian_conditioning_oracle(&s, spec, &observed(&s, |j| j <= i), i).unwrap();
            assert!((f.hat_mu()[i] - m).abs() < TOL, "spec {k} i {i} filtered");
            let (m, v) = gaussian_conditioning_oracle(&s, spec, &observed(&s, |j| j != i), i).unwrap();
            assert!((l.tilde_mu()[i] - m).abs() < TOL, "spec {k} i {i} loo");
            assert!((l.posterior_variance()[i] - v).abs() < TOL, "spec {k} i {i} loo variance");
            let (m, v) = gaussian_conditioning_oracle(&s, spec, &observed(&s, |_| true), i).unwrap();
            assert!((l.hat_mu()[i] - m).abs() < TOL, "spec {k} i {i} loo hat");
            assert!((sm.mean[i] - m).abs() < TOL && (sm.variance[i] - v).abs() < TOL);
        }
    }
}

#[test]
fn conditioning_on_more_data_never_raises_variance() {
    let spec = StateSpaceSpec::ar2(0.5, 0.3, 1.0);
    let s = series_for(3, 40);
    let target = 25;
    let mut prev = f64::INFINITY;
    for upto in 0..s.len() {
        let (_, v) = gaussian_conditioning_oracle(&s, &spec, &observed(&s, |j| j <= upto), target).unwrap();
        assert!(v <= prev + 1e-12);
        prev = v;
    }
}

#[test]
fn filter_gain_identity_holds_row_by_row() {
    for (k, spec) in spec_grid().iter().enumerate() {
        let s = series_for(k, 50);
        for out in [forward_filter(&s, spec).unwrap(), loo_predictors(&s, spec).unwrap()] {
            out.check_gain_identity(&s).unwrap();
        }
    }
}
