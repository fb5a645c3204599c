//! Convergence diagnostics computed on particle ensembles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::kernel::pairwise_sq_dists;

/// Jitter added to a singular empirical covariance.
pub const COVARIANCE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Proxy {
    pub distance: f64,
    /// The empirical covariance needed jitter to be positive definite.
    pub regularized: bool,
}

/// Empirical mean and (1/N) covariance.
pub fn moments(particles: &ParticleEnsemble) -> (DVector<f64>, DMatrix<f64>) {
    let x = particles.positions();
    let n = particles.n() as f64;
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Bures-Wasserstein distance between the moment-matched Gaussian of the
/// ensemble and `N(mean, cov)`:
///
/// ```text
/// sqrt(|m - mean|^2 + tr(S + cov - 2 (cov^1/2 S cov^1/2)^1/2))
/// ```
pub fn gaussian_w2_proxy(
    particles: &ParticleEnsemble,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<W2Proxy> {
    let d = particles.dim();
    if mean.len() != d || cov.shape() != (d, d) {
        return Err(Error::InvalidInput(format!(
            "reference Gaussian has dimension {}, particles {d}",
            mean.len()
        )));
    }
    if cov.clone().cholesky().is_none() {
        return Err(Error::InvalidParameter(
            "reference covariance is not positive definite".into(),
        ));
    }
    if particles.n() <= d {
        return Err(Error::DegenerateEnsemble(format!(
            "need more than {d} particles for a {d}-dimensional covariance"
        )));
    }
    let (m, mut s) = moments(particles);
    let mut regularized = false;
    if s.clone().cholesky().is_none() {
        for i in 0..d {
            s[(i, i)] += COVARIANCE_JITTER;
        }
        regularized = true;
    }
    let root = psd_sqrt(cov);
    let cross = psd_sqrt(&(&root * &s * &root));
    let w2 = (m - mean).norm_squared() + s.trace() + cov.trace() - 2.0 * cross.trace();
    Ok(W2Proxy {
        distance: w2.max(0.0).sqrt(),
        regularized,
    })
}

/// Fraction of particles with first coordinate `>= 0`.
pub fn mode_balance(particles: &ParticleEnsemble) -> f64 {
    let positive = particles
        .positions()
        .column(0)
        .iter()
        .filter(|&&v| v >= 0.0)
        .count();
    positive as f64 / particles.n() as f64
}

/// Mean distance from each particle to its nearest neighbour.
pub fn mean_nn_distance(particles: &ParticleEnsemble) -> f64 {
    let n = particles.n();
    if n < 2 {
        return 0.0;
    }
    let sq = pairwise_sq_dists(particles.positions());
    let total: f64 = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| sq[(i, j)])
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / n as f64
}
