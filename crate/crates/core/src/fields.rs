//! Finite-particle estimators of the gradient-flow field
//! `v = grad log p - grad log q`.
//!
//! Each estimator combines the target scores `g_i = grad log p(x_i)` with a
//! kernel-based estimate of `-grad log q` at the particles.

use nalgebra::DMatrix;

use crate::ensemble::{ParticleEnsemble, VectorField};
use crate::error::{Error, Result};
use crate::kernel::{kernel_matrices, kernel_peak, pairwise_sq_dists};
use crate::targets::{score_matrix, Target};

/// Relative ridge applied by GFSF when none is given, in units of the kernel
/// peak `(2 pi h)^(-D/2)`.
pub const GFSF_DEFAULT_RELATIVE_REG: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Svgd,
    Blob,
    Gfsd,
    /// `reg` is the absolute diagonal regularization; `None` uses
    /// [`GFSF_DEFAULT_RELATIVE_REG`] times the kernel peak.
    Gfsf {
        reg: Option<f64>,
    },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Svgd => "svgd",
            Estimator::Blob => "blob",
            Estimator::Gfsd => "gfsd",
            Estimator::Gfsf { .. } => "gfsf",
        }
    }

    pub fn field<T: Target + ?Sized>(
        &self,
        particles: &ParticleEnsemble,
        target: &T,
        h: f64,
    ) -> Result<VectorField> {
        match *self {
            Estimator::Svgd => svgd_field(particles, target, h),
            Estimator::Blob => blob_field(particles, target, h),
            Estimator::Gfsd => gfsd_field(particles, target, h),
            Estimator::Gfsf { reg } => {
                let reg = reg.unwrap_or_else(|| gfsf_default_reg(particles.dim(), h));
                gfsf_field(particles, target, h, reg)
            }
        }
    }
}

pub fn gfsf_default_reg(dim: usize, h: f64) -> f64 {
    GFSF_DEFAULT_RELATIVE_REG * kernel_peak(dim, h)
}

/// `(1/N) (K G + K')`: kernel-smoothed scores plus the repulsive term.
pub fn svgd_field<T: Target + ?Sized>(
    particles: &ParticleEnsemble,
    target: &T,
    h: f64,
) -> Result<VectorField> {
    let scores = score_matrix(target, particles)?;
    let km = kernel_matrices(particles, h)?;
    let n = particles.n() as f64;
    VectorField::new((&km.gram * scores + km.grad_sum) / n)
}

/// Scores minus the smoothed-density score minus the kernel-weighted
/// correction of the blob method.
pub fn blob_field<T: Target + ?Sized>(
    particles: &ParticleEnsemble,
    target: &T,
    h: f64,
) -> Result<VectorField> {
    let scores = score_matrix(target, particles)?;
    let (gram, row_sums) = gram_and_row_sums(particles, h)?;
    let x = particles.positions();
    let (n, d) = (particles.n(), particles.dim());
    let mut v = scores;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // grad_{x_i} K(x_i, x_j) = -(x_i - x_j) / h * K_ij
            let w = gram[(i, j)] / h * (1.0 / row_sums[i] + 1.0 / row_sums[j]);
            for c in 0..d {
                v[(i, c)] += (x[(i, c)] - x[(j, c)]) * w;
            }
        }
    }
    VectorField::new(v)
}

/// `grad log p - grad log (q^ * K)`.
pub fn gfsd_field<T: Target + ?Sized>(
    particles: &ParticleEnsemble,
    target: &T,
    h: f64,
) -> Result<VectorField> {
    let scores = score_matrix(target, particles)?;
    let (gram, row_sums) = gram_and_row_sums(particles, h)?;
    let x = particles.positions();
    let (n, d) = (particles.n(), particles.dim());
    let mut v = scores;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = gram[(i, j)] / h / row_sums[i];
            for c in 0..d {
                v[(i, c)] += (x[(i, c)] - x[(j, c)]) * w;
            }
        }
    }
    VectorField::new(v)
}

/// `G + (K + reg I)^(-1) K'`, the score estimate from smoothed test functions.
///
/// Fails with [`Error::SingularSystem`] when `K + reg I` is numerically
/// singular, e.g. duplicate particles with `reg = 0`.
pub fn gfsf_field<T: Target + ?Sized>(
    particles: &ParticleEnsemble,
    target: &T,
    h: f64,
    reg: f64,
) -> Result<VectorField> {
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "GFSF regularization must be non-negative, got {reg}"
        )));
    }
    let scores = score_matrix(target, particles)?;
    let km = kernel_matrices(particles, h)?;
    let interaction = gfsf_interaction(&km.gram, &km.grad_sum, reg)?;
    VectorField::new(scores + interaction)
}

/// Solves `(K + reg I) U = K'` for the `N x D` matrix `U`.
pub fn gfsf_interaction(
    gram: &DMatrix<f64>,
    grad_sum: &DMatrix<f64>,
    reg: f64,
) -> Result<DMatrix<f64>> {
    let n = gram.nrows();
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += reg;
    }
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = a.cholesky().ok_or_else(|| {
        Error::SingularSystem("kernel matrix plus ridge is not positive definite".into())
    })?;
    let l = chol.l_dirty();
    let min_pivot = (0..n)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot > SINGULAR_PIVOT_RATIO * max_diag) {
        return Err(Error::SingularSystem(format!(
            "kernel matrix plus ridge is numerically singular (pivot ratio {:.3e})",
            min_pivot / max_diag
        )));
    }
    Ok(chol.solve(grad_sum))
}

const SINGULAR_PIVOT_RATIO: f64 = 1e-13;

fn gram_and_row_sums(particles: &ParticleEnsemble, h: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    // The kernel's normalizing constant cancels in every ratio below, so the
    // unnormalized exponentials are used to avoid overflow for small h.
    let sq = pairwise_sq_dists(particles.positions());
    let n = particles.n();
    let gram = DMatrix::from_fn(n, n, |i, j| (-sq[(i, j)] / (2.0 * h)).exp());
    let sums = gram.row_iter().map(|r| r.sum()).collect();
    Ok((gram, sums))
}
