//! Target densities, exposed through their (unnormalized) log-density and score.

mod bimodal;
mod blr;
mod dataset;
mod gaussian;

pub use bimodal::ToyBimodal;
pub use blr::{blr_metrics, BlrMetrics, BlrModel};
pub use dataset::{load_dataset, parse_csv, synthetic_logistic, Dataset};
pub use gaussian::GaussianTarget;

use nalgebra::DMatrix;
use rand::RngCore;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

/// A target distribution `p` known through `grad log p`.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    /// `log p(x)` up to an additive constant. Used for gradient validation.
    fn log_density(&self, x: &[f64]) -> f64;

    /// Writes `grad log p(x)` into `out`.
    fn grad_log_p(&self, x: &[f64], out: &mut [f64]);

    /// Draws a fresh minibatch for stochastic targets. Deterministic targets
    /// ignore this.
    fn resample(&mut self, _rng: &mut dyn RngCore) {}
}

/// Scores of every particle as an `N x D` matrix, row `i` = `grad log p(x_i)`.
pub fn score_matrix<T: Target + ?Sized>(
    target: &T,
    particles: &ParticleEnsemble,
) -> Result<DMatrix<f64>> {
    let (n, d) = (particles.n(), particles.dim());
    if d != target.dim() {
        return Err(Error::InvalidInput(format!(
            "particles have dimension {d}, target '{}' expects {}",
            target.name(),
            target.dim()
        )));
    }
    let mut scores = DMatrix::zeros(n, d);
    let mut buf = vec![0.0; d];
    for i in 0..n {
        let x = particles.particle(i);
        target.grad_log_p(&x, &mut buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { particle: i });
        }
        for (c, v) in buf.iter().enumerate() {
            scores[(i, c)] = *v;
        }
    }
    Ok(scores)
}

/// Maximum relative error between `grad_log_p` and central differences of
/// `log_density` at `x`, with relative error floored at `abs_floor`.
pub fn finite_difference_error<T: Target + ?Sized>(
    target: &T,
    x: &[f64],
    step: f64,
    abs_floor: f64,
) -> f64 {
    let d = target.dim();
    let mut grad = vec![0.0; d];
    target.grad_log_p(x, &mut grad);
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for c in 0..d {
        let orig = probe[c];
        probe[c] = orig + step;
        let up = target.log_density(&probe);
        probe[c] = orig - step;
        let down = target.log_density(&probe);
        probe[c] = orig;
        let fd = (up - down) / (2.0 * step);
        let err = (grad[c] - fd).abs() / fd.abs().max(abs_floor);
        worst = worst.max(err);
    }
    worst
}

/// Target with identically zero score. The fields then reduce to their
/// particle-interaction parts.
#[derive(Debug, Clone)]
pub struct FlatTarget {
    dim: usize,
}

impl FlatTarget {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Target for FlatTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "flat"
    }

    fn log_density(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn grad_log_p(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}
