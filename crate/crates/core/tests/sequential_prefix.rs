use ebkalman::ebcorrect::{improve_retrospective, improve_sequential, BandwidthPolicy};
use ebkalman::kalman::loo_predictors;
use ebkalman::model::{ObservationSeries, StateSpaceSpec};
use ebkalman::simulate::simulate_sparse_ar;

#[test]
fn sequential_output_depends_only_on_the_past() {
    let y = simulate_sparse_ar(300, 0.75, 3.0, 0.1, 2).unwrap().y;
    let spec = StateSpaceSpec::ar1(0.75, 0.9);
    let full = improve_sequential(&ObservationSeries::new(y.clone()).unwrap(), &spec, 50, BandwidthPolicy::LogSampleSize).unwrap();
    for cut in [60, 151, 299] {
        let mut changed = y.clone();
        for v in &mut changed[cut + 1..] {
            *v += 100.0;
        }
        let other = improve_sequential(&ObservationSeries::new(changed).unwrap(), &spec, 50, BandwidthPolicy::LogSampleSize).unwrap();
        assert_eq!(full[..=cut], other[..=cut]);
    }
}

#[test]
fn warmup_indices_return_the_filter() {
    let s = simulate_sparse_ar(120, 0.25, 2.0, 0.1, 3).unwrap().series();
    let spec = StateSpaceSpec::ar1(0.25, 0.4);
    let out = ebkalman::kalman::forward_filter(&s, &spec).unwrap();
    let imp = improve_sequential(&s, &spec, 40, BandwidthPolicy::LogSampleSize).unwrap();
    assert_eq!(imp[..40], out.hat_mu()[..40]);
    assert_ne!(imp[40], out.hat_mu()[40]);
}

#[test]
fn retrospective_carries_missing_predictor() {
    let t = simulate_sparse_ar(80, 0.25, 2.0, 0.1, 4).unwrap();
    let s = ObservationSeries::from_options(t.y.iter().enumerate().map(|(i, &y)| (i != 30).then_some(y))).unwrap();
    let spec = StateSpaceSpec::ar1(0.25, 0.4);
    let out = loo_predictors(&s, &spec).unwrap();
    let imp = improve_retrospective(&s, &out, BandwidthPolicy::LogSampleSize).unwrap();
    assert_eq!(imp[30], out.tilde_mu()[30]);
}
