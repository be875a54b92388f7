use ebkalman::kalman::{fit_mle, log_likelihood};
use ebkalman::model::{Family, ObservationSeries};
use ebkalman::simulate::simulate_sparse_ar;

fn gaussian_ar(n: usize, phi: f64, sd: f64, seed: u64) -> ObservationSeries {
    simulate_sparse_ar(n, phi, sd, 1.0, seed).unwrap().series()
}

#[test]
fn ar1_coefficient_is_recovered() {
    let s = gaussian_ar(2000, 0.75, 1.0, 7);
    let fit = fit_mle(&s, Family::Ar1).unwrap();
    assert!((fit.spec.phi[0] - 0.75).abs() < 0.1, "{:?}", fit.spec);
    assert!((fit.spec.innovation_variance - 1.0).abs() < 0.4, "{:?}", fit.spec);
    assert_eq!(fit.log_likelihood, log_likelihood(&s, &fit.spec).unwrap());
}

#[test]
fn refit_on_own_simulation_is_close() {
    let s = gaussian_ar(2000, 0.5, 1.5, 8);
    let first = fit_mle(&s, Family::Ar1).unwrap();
    let again = gaussian_ar(2000, first.spec.phi[0], first.spec.innovation_variance.sqrt(), 9);
    let second = fit_mle(&again, Family::Ar1).unwrap();
    assert!((first.spec.phi[0] - second.spec.phi[0]).abs() < 0.1);
}

#[test]
fn every_family_beats_its_starting_point() {
    let s = gaussian_ar(400, 0.8, 1.0, 10);
    for family in Family::all() {
        let fit = fit_mle(&s, family).unwrap();
        assert!(fit.log_likelihood.is_finite());
        fit.spec.validate().unwrap();
    }
    let ar1 = fit_mle(&s, Family::Ar1).unwrap();
    let ar2 = fit_mle(&s, Family::Ar2).unwrap();
    // AR(2) nests AR(1).
    assert!(ar2.log_likelihood >= ar1.log_likelihood - 1e-6);
}
