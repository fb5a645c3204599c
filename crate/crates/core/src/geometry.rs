//! Finite-particle Riemannian primitives on the Wasserstein space over
//! Euclidean support.
//!
//! With particles paired by index, the exponential map is a per-particle
//! displacement, its inverse is the per-particle difference, and parallel
//! transport carries each velocity along with its particle. The last two are
//! approximations that hold when the pairs are close relative to the spacing
//! inside each ensemble.

use crate::ensemble::{ParticleEnsemble, VectorField};
use crate::error::{Error, Result};
use crate::kernel::pairwise_sq_dists;

/// Default closeness ratio for [`PairedEnsembles::is_pairwise_close`].
pub const DEFAULT_CLOSENESS: f64 = 0.5;

/// `x_i + step * v_i` for every particle.
pub fn exp_map(
    particles: &ParticleEnsemble,
    field: &VectorField,
    step: f64,
) -> Result<ParticleEnsemble> {
    if !field.matches(particles) {
        return Err(shape_error(
            particles.n(),
            particles.dim(),
            field.n(),
            field.dim(),
        ));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "step must be positive and finite, got {step}"
        )));
    }
    Ok(ParticleEnsemble::from_matrix_unchecked(
        particles.positions() + field.velocities() * step,
    ))
}

/// Two ensembles whose particles are paired by index.
#[derive(Debug, Clone)]
pub struct PairedEnsembles<'a> {
    pub source: &'a ParticleEnsemble,
    pub dest: &'a ParticleEnsemble,
}

impl<'a> PairedEnsembles<'a> {
    pub fn new(source: &'a ParticleEnsemble, dest: &'a ParticleEnsemble) -> Result<Self> {
        if source.n() != dest.n() || source.dim() != dest.dim() {
            return Err(shape_error(source.n(), source.dim(), dest.n(), dest.dim()));
        }
        Ok(Self { source, dest })
    }

    /// Largest pair displacement divided by the smallest nearest-neighbour
    /// distance within either ensemble.
    pub fn closeness_ratio(&self) -> f64 {
        let max_disp = (self.dest.positions() - self.source.positions())
            .row_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max);
        let spacing = min_nn_distance(self.source).min(min_nn_distance(self.dest));
        if max_disp == 0.0 {
            0.0
        } else {
            max_disp / spacing
        }
    }

    /// Whether every displacement is at most `c` times the smallest
    /// nearest-neighbour spacing.
    pub fn is_pairwise_close(&self, c: f64) -> bool {
        self.closeness_ratio() <= c
    }
}

fn min_nn_distance(p: &ParticleEnsemble) -> f64 {
    if p.n() < 2 {
        return f64::INFINITY;
    }
    let sq = pairwise_sq_dists(p.positions());
    let mut best = f64::INFINITY;
    for i in 0..p.n() {
        for j in (i + 1)..p.n() {
            best = best.min(sq[(i, j)]);
        }
    }
    best.sqrt()
}

/// Result of [`inverse_exp`]: the displacement field and whether the
/// closeness check held.
#[derive(Debug, Clone)]
pub struct InverseExp {
    pub field: VectorField,
    pub pairwise_close: bool,
}

/// `y_i - x_i`, the finite-particle inverse exponential map.
///
/// Logs a warning (but does not fail) when the pairs are not close under
/// threshold `c`.
pub fn inverse_exp(pair: &PairedEnsembles, c: f64) -> Result<InverseExp> {
    let field = VectorField::new(pair.dest.positions() - pair.source.positions())?;
    let pairwise_close = pair.is_pairwise_close(c);
    if !pairwise_close {
        log::warn!(
            "inverse exponential map on ensembles that are not pairwise close (ratio {:.3} > {c})",
            pair.closeness_ratio()
        );
    }
    Ok(InverseExp {
        field,
        pairwise_close,
    })
}

/// Carries a field at `pair.source` to `pair.dest`: the velocity of particle
/// `i` is reinterpreted at `y_i`.
pub fn parallel_transport(field: &VectorField, pair: &PairedEnsembles) -> Result<VectorField> {
    if !field.matches(pair.source) {
        return Err(shape_error(
            pair.source.n(),
            pair.source.dim(),
            field.n(),
            field.dim(),
        ));
    }
    Ok(field.clone())
}

fn shape_error(n: usize, d: usize, m: usize, e: usize) -> Error {
    Error::InvalidInput(format!("shape mismatch: {n}x{d} vs {m}x{e}"))
}
