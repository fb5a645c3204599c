//! Gaussian kernel, kernel/gradient matrices and bandwidth selection.
//!
//! One convention is used throughout:
//!
//! ```text
//! K_h(x, y) = (2 pi h)^(-D/2) exp(-|x - y|^2 / (2h))
//! ```
//!
//! so `h` is the variance of the Gaussian, in units of squared length.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};

/// How the bandwidth evolves over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthPolicy {
    Fixed,
    Median,
    /// Heat-equation matching, refined once per iteration.
    HeatEquation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub policy: BandwidthPolicy,
    /// Maximum multiplicative change of `h` per HE update.
    pub he_trust_ratio: f64,
    /// Relative offset of the probe point in the HE line search.
    pub he_probe_delta: f64,
}

impl KernelConfig {
    pub const DEFAULT_TRUST_RATIO: f64 = 2.0;
    pub const DEFAULT_PROBE_DELTA: f64 = 0.1;

    pub fn new(bandwidth: f64, policy: BandwidthPolicy) -> Result<Self> {
        let cfg = Self {
            bandwidth,
            policy,
            he_trust_ratio: Self::DEFAULT_TRUST_RATIO,
            he_probe_delta: Self::DEFAULT_PROBE_DELTA,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_bandwidth(self.bandwidth)?;
        if !(self.he_trust_ratio > 1.0 && self.he_trust_ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "HE trust ratio must be > 1, got {}",
                self.he_trust_ratio
            )));
        }
        if !(self.he_probe_delta > 0.0 && self.he_probe_delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "HE probe delta must lie in (0, 1), got {}",
                self.he_probe_delta
            )));
        }
        Ok(())
    }

    /// Recomputes the bandwidth for the current ensemble according to the
    /// policy and stores it. Returns the new value.
    pub fn update(&mut self, particles: &ParticleEnsemble) -> Result<f64> {
        self.bandwidth = match self.policy {
            BandwidthPolicy::Fixed => self.bandwidth,
            BandwidthPolicy::Median => median_bandwidth(particles)?,
            BandwidthPolicy::HeatEquation => select_bandwidth_he(particles, self.bandwidth, self),
        };
        Ok(self.bandwidth)
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

/// Normalizing constant `(2 pi h)^(-D/2)`, the kernel's value on the diagonal.
pub fn kernel_peak(dim: usize, h: f64) -> f64 {
    (2.0 * PI * h).powf(-(dim as f64) / 2.0)
}

pub fn eval_kernel(x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "points have dimensions {} and {}",
            x.len(),
            y.len()
        )));
    }
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(kernel_peak(x.len(), h) * (-sq / (2.0 * h)).exp())
}

/// Kernel Gram matrix and summed kernel gradients for an ensemble.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    /// `gram[(i, j)] = K(x_i, x_j)`, symmetric.
    pub gram: DMatrix<f64>,
    /// Row `i` is `sum_j grad_{x_j} K(x_j, x_i) = sum_j (x_i - x_j) / h * K_ji`.
    ///
    /// Stored `N x D`, i.e. the transpose of the column-per-particle layout.
    pub grad_sum: DMatrix<f64>,
}

pub fn kernel_matrices(particles: &ParticleEnsemble, h: f64) -> Result<KernelMatrices> {
    check_bandwidth(h)?;
    if let Some(i) = particles.first_non_finite() {
        return Err(Error::InvalidInput(format!(
            "particle {i} has non-finite coordinates"
        )));
    }
    let x = particles.positions();
    let (n, d) = (particles.n(), particles.dim());
    let peak = kernel_peak(d, h);
    let sq = pairwise_sq_dists(x);

    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        gram[(i, i)] = peak;
        for j in (i + 1)..n {
            let k = peak * (-sq[(i, j)] / (2.0 * h)).exp();
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }

    let mut grad_sum = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = gram[(j, i)] / h;
            for c in 0..d {
                grad_sum[(i, c)] += (x[(i, c)] - x[(j, c)]) * w;
            }
        }
    }
    Ok(KernelMatrices { gram, grad_sum })
}

pub(crate) fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut sq = DMatrix::zeros(n, n);
    for col in x.column_iter() {
        for j in 0..n {
            let xj = col[j];
            for i in (j + 1)..n {
                let diff = col[i] - xj;
                sq[(i, j)] += diff * diff;
            }
        }
    }
    sq.fill_upper_triangle_with_lower_triangle();
    sq
}

/// Median heuristic: `median(|x_i - x_j|^2) / (2 ln(N + 1))` over pairs `i < j`.
pub fn median_bandwidth(particles: &ParticleEnsemble) -> Result<f64> {
    let n = particles.n();
    if n < 2 {
        return Err(Error::DegenerateEnsemble(
            "median bandwidth needs at least two particles".into(),
        ));
    }
    let sq = pairwise_sq_dists(particles.positions());
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| sq[(i, j)])
        .collect();
    let m = dists.len();
    let (below, &mut upper, _) = dists.select_nth_unstable_by(m / 2, f64::total_cmp);
    let median = if m % 2 == 1 {
        upper
    } else {
        let lower = below.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if !(median > 0.0) || !median.is_finite() {
        return Err(Error::DegenerateEnsemble(
            "median pairwise distance is zero (coincident particles)".into(),
        ));
    }
    Ok(median / (2.0 * ((n + 1) as f64).ln()))
}

/// Value and `h`-derivative of the heat-equation mismatch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeObjective {
    pub value: f64,
    pub derivative: f64,
}

/// Evaluates `J(h) = sum_k g_k(h)^2` and `J'(h) = sum_k 2 g_k(h) g_k'(h)`.
///
/// `g_k` measures, at particle `k`, how far one step of the smoothed-density
/// dynamics `dx = -grad log q~ dt` is from the heat-equation evolution of
/// `q~`. The constant `(2 pi)^(D/2)` factor is dropped.
pub fn he_objective(particles: &ParticleEnsemble, h: f64) -> Result<HeObjective> {
    check_bandwidth(h)?;
    let x = particles.positions();
    let (n, d) = (particles.n(), particles.dim());
    let df = d as f64;
    let sq = pairwise_sq_dists(x);
    let scale = h.powf(-df / 2.0);
    let e = DMatrix::from_fn(n, n, |i, j| scale * (-sq[(i, j)] / (2.0 * h)).exp());

    // Per-column sums over i: S_j, V_j scalars and T_j, W_j vectors.
    let mut s = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    let mut t = DMatrix::<f64>::zeros(n, d);
    let mut w = DMatrix::<f64>::zeros(n, d);
    for j in 0..n {
        for i in 0..n {
            let eij = e[(i, j)];
            s[j] += eij;
            v[j] += eij * sq[(i, j)];
            for c in 0..d {
                let dij = x[(i, c)] - x[(j, c)];
                t[(j, c)] += eij * dij;
                w[(j, c)] += eij * sq[(i, j)] * dij;
            }
        }
    }

    let inv2h2 = 1.0 / (2.0 * h * h);
    let mut value = 0.0;
    let mut derivative = 0.0;
    for k in 0..n {
        let mut sum_e = 0.0;
        let mut sum_e_r2 = 0.0;
        let mut sum_e_r4 = 0.0;
        // sum_j e_jk / S_j * (d_jk . T_j) and its weighted variants
        let mut cross = 0.0;
        let mut cross_w = 0.0;
        let mut cross_r2 = 0.0;
        let mut cross_v = 0.0;
        for j in 0..n {
            let ejk = e[(j, k)];
            let r2 = sq[(j, k)];
            sum_e += ejk;
            sum_e_r2 += ejk * r2;
            sum_e_r4 += ejk * r2 * r2;
            if ejk == 0.0 {
                continue;
            }
            let mut dt = 0.0;
            let mut dw = 0.0;
            for c in 0..d {
                let djk = x[(j, c)] - x[(k, c)];
                dt += djk * t[(j, c)];
                dw += djk * w[(j, c)];
            }
            let a = ejk / s[j];
            cross += a * dt;
            cross_w += a * dw;
            cross_r2 += a * r2 * dt;
            cross_v += a * v[j] / s[j] * dt;
        }
        let g = sum_e_r2 - h * df * sum_e - cross;
        let g_prime = inv2h2 * sum_e_r4 - df / h * sum_e_r2 + (df * df / 2.0 - df) * sum_e
            - inv2h2 * cross_w
            - inv2h2 * cross_r2
            + inv2h2 * cross_v
            + df / (2.0 * h) * cross;
        value += g * g;
        derivative += 2.0 * g * g_prime;
    }
    Ok(HeObjective { value, derivative })
}

/// `h^(D-2) J(h)` and its slope in `u = ln h`.
///
/// `g_k` carries a factor `h^(2 - D/2)` relative to the dimensionless
/// heat-equation residual, so plain `J` is biased towards `h -> 0` for
/// `D < 2` (and towards large `h` for `D > 2`). Rescaling by `h^(D-2)`
/// removes that bias; for `D = 2` the two coincide.
pub fn he_scaled_objective(particles: &ParticleEnsemble, h: f64) -> Result<(f64, f64)> {
    let obj = he_objective(particles, h)?;
    let p = particles.dim() as f64 - 2.0;
    let w = h.powf(p);
    Ok((w * obj.value, w * (h * obj.derivative + p * obj.value)))
}

/// One-step HE bandwidth refinement by quadratic interpolation in `ln h`.
///
/// Fits the scaled objective (see [`he_scaled_objective`]) along `u = ln h`
/// from its value and slope at `h_prev` and one probe value at
/// `h_prev (1 + delta)`, moves to the minimizer clipped to
/// `[h_prev / rho, h_prev * rho]`, and keeps the move only if the objective
/// does not increase. Any degeneracy returns `h_prev`.
pub fn select_bandwidth_he(particles: &ParticleEnsemble, h_prev: f64, cfg: &KernelConfig) -> f64 {
    let Ok((f0, slope)) = he_scaled_objective(particles, h_prev) else {
        return h_prev;
    };
    let step = (1.0 + cfg.he_probe_delta).ln();
    let Ok((f_probe, _)) = he_scaled_objective(particles, h_prev * (1.0 + cfg.he_probe_delta))
    else {
        return h_prev;
    };
    let curvature = (f_probe - f0 - slope * step) / (step * step);
    if !(curvature > 0.0) || !curvature.is_finite() || !slope.is_finite() {
        return h_prev;
    }
    let max_shift = cfg.he_trust_ratio.ln();
    let shift = (-slope / (2.0 * curvature)).clamp(-max_shift, max_shift);
    if shift == 0.0 {
        return h_prev;
    }
    let h_new = h_prev * shift.exp();
    match he_scaled_objective(particles, h_new) {
        Ok((f_new, _)) if f_new <= f0 && h_new.is_finite() && h_new > 0.0 => h_new,
        _ => h_prev,
    }
}
