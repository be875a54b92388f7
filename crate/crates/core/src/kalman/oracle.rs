use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::StateSpaceMatrices;
use crate::error::{Error, Result};
use crate::model::{ObservationSeries, StateSpaceSpec};

/// Largest series the dense oracle accepts.
pub const ORACLE_MAX_LEN: usize = 200;

/// Exact `E[mu_target | Y_j, j in conditioning]` and its variance, from
/// the dense joint covariance of `(mu_1..mu_n, Y_1..Y_n)`.
///
/// Built by propagating means and cross-covariances of the state directly,
/// without any filtering recursion. Conditioning on a missing index is an
/// error, and so is a covariance that fails to factor.
pub fn gaussian_conditioning_oracle(
    series: &ObservationSeries,
    spec: &StateSpaceSpec,
    conditioning: &[usize],
    target: usize,
) -> Result<(f64, f64)> {
    let n = series.len();
    if n > ORACLE_MAX_LEN {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to {ORACLE_MAX_LEN} points, got {n}"
        )));
    }
    if target >= n {
        return Err(Error::InvalidArgument(format!("target {target} out of range")));
    }
    let mut set: Vec<usize> = conditioning.to_vec();
    set.sort_unstable();
    set.dedup();
    for &j in &set {
        if j >= n {
            return Err(Error::InvalidArgument(format!("index {j} out of range")));
        }
        if series.is_missing(j) {
            return Err(Error::InvalidSeries(format!("cannot condition on missing index {j}")));
        }
    }

    let m = StateSpaceMatrices::from_spec(spec)?;
    let z = m.observation_row;
    let t = m.transition;
    let q = m.state_noise();

    let mut means = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    let (mut mean, mut cov): (Vector2<f64>, Matrix2<f64>) = (m.initial_mean, m.initial_covariance);
    for _ in 0..n {
        means.push((z * mean)[0]);
        covs.push(cov);
        mean = t * mean + m.offset;
        cov = t * cov * t.transpose() + q;
    }

    // Cov(mu_a, mu_b) for a >= b is Z T^(a-b) Cov(s_b) Z'.
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    for b in 0..n {
        let mut cross = covs[b];
        for a in b..n {
            let c = (z * cross * z.transpose())[0];
            sigma[(a, b)] = c;
            sigma[(b, a)] = c;
            cross = t * cross;
        }
    }

    let prior_var = sigma[(target, target)];
    if set.is_empty() {
        return Ok((means[target], prior_var));
    }

    let k = set.len();
    let mut syy = DMatrix::<f64>::zeros(k, k);
    let mut sty = DVector::<f64>::zeros(k);
    let mut resid = DVector::<f64>::zeros(k);
    for (a, &ja) in set.iter().enumerate() {
        for (b, &jb) in set.iter().enumerate() {
            syy[(a, b)] = sigma[(ja, jb)];
        }
        syy[(a, a)] += m.obs_noise_variance;
        sty[a] = sigma[(target, ja)];
        resid[a] = series.values()[ja] - means[ja];
    }
    let chol = syy
        .cholesky()
        .ok_or_else(|| Error::SingularCovariance(format!("observation covariance over {k} indices")))?;
    let w = chol.solve(&sty);
    let mean = means[target] + w.dot(&resid);
    let var = prior_var - w.dot(&sty);
    Ok((mean, var))
}
