//! Bayesian logistic regression with a Gaussian prior on the weights whose
//! precision `alpha` has a Gamma(a0, scale b0) prior.
//!
//! Particles are laid out as `[w_1, ..., w_d, ln alpha]`.

use rand::seq::index;
use rand::RngCore;

use super::{Dataset, Target};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BlrModel {
    data: Dataset,
    pub a0: f64,
    /// Gamma scale (not rate).
    pub b0: f64,
    pub batch_size: usize,
    batch: Vec<usize>,
}

impl BlrModel {
    pub const DEFAULT_A0: f64 = 1.0;
    pub const DEFAULT_B0: f64 = 100.0;

    pub fn new(data: Dataset, a0: f64, b0: f64, batch_size: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if !(a0 > 0.0 && b0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Gamma prior needs a0 > 0 and b0 > 0, got ({a0}, {b0})"
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch size must be positive".into(),
            ));
        }
        let batch = (0..data.len()).collect();
        Ok(Self {
            data,
            a0,
            b0,
            batch_size,
            batch,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// Number of weights, including the bias.
    pub fn n_weights(&self) -> usize {
        self.data.n_features()
    }

    pub fn current_batch(&self) -> &[usize] {
        &self.batch
    }

    fn check(&self, batch: &[usize], theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_weights() + 1 {
            return Err(Error::InvalidInput(format!(
                "parameter has length {}, expected {}",
                theta.len(),
                self.n_weights() + 1
            )));
        }
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty minibatch".into()));
        }
        if let Some(&bad) = batch.iter().find(|&&m| m >= self.data.len()) {
            return Err(Error::InvalidInput(format!(
                "batch index {bad} out of range for {} points",
                self.data.len()
            )));
        }
        Ok(())
    }

    fn logit(&self, m: usize, w: &[f64]) -> f64 {
        self.data
            .features
            .row(m)
            .iter()
            .zip(w)
            .map(|(f, w)| f * w)
            .sum()
    }

    /// Log joint density on a minibatch, with the likelihood scaled by
    /// `M / |batch|`, in `(w, ln alpha)` coordinates including the Jacobian.
    pub fn log_joint_on(&self, batch: &[usize], theta: &[f64]) -> Result<f64> {
        self.check(batch, theta)?;
        let d = self.n_weights();
        let (w, zeta) = (&theta[..d], theta[d]);
        let alpha = zeta.exp();
        let scale = self.data.len() as f64 / batch.len() as f64;
        let loglik: f64 = batch
            .iter()
            .map(|&m| {
                let z = self.logit(m, w);
                let y = self.data.labels[m];
                y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z)
            })
            .sum();
        let w2: f64 = w.iter().map(|v| v * v).sum();
        let prior = (d as f64 / 2.0 + self.a0) * zeta - alpha * (1.0 / self.b0 + w2 / 2.0);
        Ok(scale * loglik + prior)
    }

    /// Gradient of [`log_joint_on`](Self::log_joint_on).
    pub fn grad_log_p_on(&self, batch: &[usize], theta: &[f64]) -> Result<Vec<f64>> {
        self.check(batch, theta)?;
        let d = self.n_weights();
        let (w, zeta) = (&theta[..d], theta[d]);
        let alpha = zeta.exp();
        let scale = self.data.len() as f64 / batch.len() as f64;
        let mut grad = vec![0.0; d + 1];
        for &m in batch {
            let resid = self.data.labels[m] - sigmoid(self.logit(m, w));
            for (g, f) in grad.iter_mut().zip(self.data.features.row(m).iter()) {
                *g += scale * resid * f;
            }
        }
        let w2: f64 = w.iter().map(|v| v * v).sum();
        for (g, wc) in grad.iter_mut().zip(w) {
            *g -= alpha * wc;
        }
        grad[d] = self.a0 - alpha * (1.0 / self.b0 + w2 / 2.0) + d as f64 / 2.0;
        Ok(grad)
    }
}

impl Target for BlrModel {
    fn dim(&self) -> usize {
        self.n_weights() + 1
    }

    fn name(&self) -> &str {
        "blr"
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_joint_on(&self.batch, x).unwrap_or(f64::NAN)
    }

    fn grad_log_p(&self, x: &[f64], out: &mut [f64]) {
        match self.grad_log_p_on(&self.batch, x) {
            Ok(g) => out.copy_from_slice(&g),
            Err(_) => out.fill(f64::NAN),
        }
    }

    fn resample(&mut self, rng: &mut dyn RngCore) {
        let m = self.data.len();
        self.batch = if self.batch_size >= m {
            (0..m).collect()
        } else {
            index::sample(rng, m, self.batch_size).into_vec()
        };
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln sigmoid(z) = -softplus(-z)`.
pub(crate) fn log_sigmoid(z: f64) -> f64 {
    let t = -z;
    -(t.max(0.0) + (-t.abs()).exp().ln_1p())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlrMetrics {
    pub accuracy: f64,
    pub log_likelihood: f64,
}

/// Posterior-predictive accuracy and mean log-likelihood on `test`.
///
/// The predictive probability averages `sigmoid(w . f)` over particles. A
/// probability of exactly one half predicts label 1.
pub fn blr_metrics(particles: &ParticleEnsemble, test: &Dataset) -> Result<BlrMetrics> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let d = test.n_features();
    if particles.dim() != d + 1 {
        return Err(Error::InvalidInput(format!(
            "particles have dimension {}, expected {}",
            particles.dim(),
            d + 1
        )));
    }
    let s = particles.n();
    let log_s = (s as f64).ln();
    let x = particles.positions();
    let mut correct = 0usize;
    let mut ll = 0.0;
    let mut logs = vec![0.0; s];
    for m in 0..test.len() {
        let f = test.features.row(m);
        let y = test.labels[m];
        for (p, slot) in logs.iter_mut().enumerate() {
            let z: f64 = (0..d).map(|c| x[(p, c)] * f[c]).sum();
            *slot = if y == 1.0 {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            };
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_true = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln() - log_s;
        let prob_true = log_true.exp();
        let prob_one = if y == 1.0 { prob_true } else { 1.0 - prob_true };
        let predicted = if prob_one >= 0.5 { 1.0 } else { 0.0 };
        if predicted == y {
            correct += 1;
        }
        ll += log_true;
    }
    let n = test.len() as f64;
    Ok(BlrMetrics {
        accuracy: correct as f64 / n,
        log_likelihood: ll / n,
    })
}
