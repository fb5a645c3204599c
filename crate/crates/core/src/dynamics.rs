//! Particle dynamics driven by an estimated gradient-flow field.
//!
//! * WGD: plain simulation `x <- x + eps v(x)`.
//! * PO: heavy-ball momentum with optional injected Gaussian noise.
//! * WAG / WNes: accelerated updates with auxiliary particles `y` at which the
//!   field is evaluated, in their finite-particle form where inverse
//!   exponential maps are differences and parallel transport is an
//!   index-preserving carry.
//! * AdaGrad with momentum: per-coordinate adaptive steps.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ensemble::{ParticleEnsemble, VectorField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Wgd,
    Po,
    Wag,
    Wnes,
    AdagradMomentum,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Wgd => "wgd",
            Method::Po => "po",
            Method::Wag => "wag",
            Method::Wnes => "wnes",
            Method::AdagradMomentum => "adagrad",
        }
    }

    pub fn uses_auxiliary(&self) -> bool {
        matches!(self, Method::Wag | Method::Wnes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelParams {
    pub method: Method,
    /// Base step size `eps0`.
    pub step: f64,
    /// Power-decay exponent of the step schedule.
    pub decay: f64,
    /// Iterations run at `eps0` before decay starts.
    pub burn_in: u64,
    /// WAG acceleration factor, must exceed 3.
    pub wag_alpha: f64,
    /// WNes Lipschitz bound.
    pub wnes_mu: f64,
    /// WNes shrinkage.
    pub wnes_beta: f64,
    /// Compute WNes coefficients from `eps0` instead of the scheduled step.
    pub wnes_freeze: bool,
    /// Use this value for `c1 (c2 - 1)` instead of computing it.
    pub wnes_combined: Option<f64>,
    pub po_momentum: f64,
    pub po_noise_std: f64,
    /// AdaGrad remember rate.
    pub adagrad_rate: f64,
}

impl AccelParams {
    pub fn new(method: Method, step: f64) -> Self {
        Self {
            method,
            step,
            decay: 0.0,
            burn_in: 0,
            wag_alpha: 3.9,
            wnes_mu: 1000.0,
            wnes_beta: 0.2,
            wnes_freeze: false,
            wnes_combined: None,
            po_momentum: 0.7,
            po_noise_std: 0.0,
            adagrad_rate: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.step > 0.0 && self.step.is_finite()) {
            bad.push(format!("step size must be positive, got {}", self.step));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            bad.push(format!(
                "step decay must be non-negative, got {}",
                self.decay
            ));
        }
        match self.method {
            Method::Wag if !(self.wag_alpha > 3.0 && self.wag_alpha.is_finite()) => {
                bad.push(format!("WAG requires alpha > 3, got {}", self.wag_alpha));
            }
            Method::Wnes if self.wnes_combined.is_none() => {
                if let Err(e) = wnes_coefficients(self.step, self.wnes_beta, self.wnes_mu) {
                    bad.push(e.to_string());
                }
            }
            Method::Po => {
                if !(0.0..1.0).contains(&self.po_momentum) {
                    bad.push(format!(
                        "PO momentum must lie in [0, 1), got {}",
                        self.po_momentum
                    ));
                }
                if !(self.po_noise_std >= 0.0 && self.po_noise_std.is_finite()) {
                    bad.push(format!(
                        "PO noise std must be non-negative, got {}",
                        self.po_noise_std
                    ));
                }
            }
            Method::AdagradMomentum if !(0.0..1.0).contains(&self.adagrad_rate) => {
                bad.push(format!(
                    "AdaGrad rate must lie in [0, 1), got {}",
                    self.adagrad_rate
                ));
            }
            _ => {}
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(bad.join("; ")))
        }
    }
}

/// `eps0` for `k < burn_in`, then `eps0 (k - burn_in + 1)^(-decay)`.
pub fn step_size(params: &AccelParams, k: u64) -> f64 {
    if k < params.burn_in {
        params.step
    } else {
        params.step * ((k - params.burn_in + 1) as f64).powf(-params.decay)
    }
}

/// WNes coefficients derived from `(eps, beta, mu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WnesCoefficients {
    pub alpha: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    /// `c1 (c2 - 1)`, the momentum weight on `x_k - x_{k-1}`.
    pub combined: f64,
}

pub fn wnes_coefficients(eps: f64, beta: f64, mu: f64) -> Result<WnesCoefficients> {
    check_wnes_inputs(eps, beta, mu)?;
    let (root, gap) = wnes_root(beta, mu * eps);
    let alpha = gap / 2.0;
    let gamma = gap / (root + beta) * mu;
    let c1 = alpha * gamma / (gamma + alpha * mu);
    let c2 = 1.0 / alpha;
    Ok(WnesCoefficients {
        alpha,
        gamma,
        c1,
        c2,
        combined: c1 * (c2 - 1.0),
    })
}

/// `c1 (c2 - 1)` written directly in `(eps, beta, mu)`.
pub fn wnes_combined_closed_form(eps: f64, beta: f64, mu: f64) -> Result<f64> {
    check_wnes_inputs(eps, beta, mu)?;
    let me = mu * eps;
    let (_, gap) = wnes_root(beta, me);
    Ok(1.0 + beta - 2.0 * (1.0 + beta) * (2.0 + beta) * me / (gap + 2.0 * (1.0 + beta) * me))
}

/// `sqrt(beta^2 + 4(1+beta) me)` and its excess over `beta`, the latter
/// rationalized so it stays accurate when `me` is tiny.
fn wnes_root(beta: f64, me: f64) -> (f64, f64) {
    let q = 4.0 * (1.0 + beta) * me;
    let root = (beta * beta + q).sqrt();
    (root, q / (root + beta))
}

fn check_wnes_inputs(eps: f64, beta: f64, mu: f64) -> Result<()> {
    for (name, v) in [("eps", eps), ("beta", beta), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "WNes {name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

/// Iteration state owned by one stepper.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub x: ParticleEnsemble,
    /// Auxiliary particles for WAG and WNes.
    pub y: Option<ParticleEnsemble>,
    /// Previous positions, for momentum methods.
    pub x_prev: Option<ParticleEnsemble>,
    pub k: u64,
    pub adagrad_acc: Option<DMatrix<f64>>,
    rng: ChaCha8Rng,
}

impl DynamicsState {
    pub fn new(x0: ParticleEnsemble, method: Method, seed: u64) -> Self {
        let y = method.uses_auxiliary().then(|| x0.clone());
        let x_prev = matches!(method, Method::Po | Method::Wag | Method::Wnes).then(|| x0.clone());
        let adagrad_acc =
            (method == Method::AdagradMomentum).then(|| DMatrix::zeros(x0.n(), x0.dim()));
        Self {
            x: x0,
            y,
            x_prev,
            k: 0,
            adagrad_acc,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Where the next field evaluation happens: `y` when present, else `x`.
    pub fn eval_point(&self) -> &ParticleEnsemble {
        self.y.as_ref().unwrap_or(&self.x)
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        &mut self.rng
    }
}

/// Advances the state by one iteration of `params.method`. Returns the field
/// that drove the step. On error the state is left untouched.
pub fn step<F>(state: &mut DynamicsState, field_fn: F, params: &AccelParams) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    match params.method {
        Method::Wgd => wgd_step(state, field_fn, params),
        Method::Po => po_step(state, field_fn, params),
        Method::Wag => wag_step(state, field_fn, params),
        Method::Wnes => wnes_step(state, field_fn, params),
        Method::AdagradMomentum => adagrad_momentum_step(state, field_fn, params),
    }
}

fn evaluate<F>(mut field_fn: F, at: &ParticleEnsemble) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    let v = field_fn(at)?;
    if !v.matches(at) {
        return Err(Error::InvalidInput(format!(
            "field is {}x{}, particles are {}x{}",
            v.n(),
            v.dim(),
            at.n(),
            at.dim()
        )));
    }
    if let Some(i) = v
        .velocities()
        .row_iter()
        .position(|r| r.iter().any(|c| !c.is_finite()))
    {
        return Err(Error::NonFiniteField { particle: i });
    }
    Ok(v)
}

fn finite(m: DMatrix<f64>) -> Result<ParticleEnsemble> {
    let p = ParticleEnsemble::from_matrix_unchecked(m);
    match p.first_non_finite() {
        Some(i) => Err(Error::Diverged { particle: i }),
        None => Ok(p),
    }
}

pub fn wgd_step<F>(
    state: &mut DynamicsState,
    field_fn: F,
    params: &AccelParams,
) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    let eps = step_size(params, state.k);
    let v = evaluate(field_fn, &state.x)?;
    let x = finite(state.x.positions() + v.velocities() * eps)?;
    state.x = x;
    state.k += 1;
    Ok(v)
}

pub fn po_step<F>(
    state: &mut DynamicsState,
    field_fn: F,
    params: &AccelParams,
) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    let eps = step_size(params, state.k);
    let v = evaluate(field_fn, &state.x)?;
    let (n, d) = (state.x.n(), state.x.dim());
    let mut drive = v.velocities().clone();
    if params.po_noise_std > 0.0 {
        let sigma = params.po_noise_std;
        for j in 0..d {
            for i in 0..n {
                let xi: f64 = state.rng.sample(StandardNormal);
                drive[(i, j)] += sigma * xi;
            }
        }
    }
    let prev = state.x_prev.as_ref().unwrap_or(&state.x);
    let momentum = (state.x.positions() - prev.positions()) * params.po_momentum;
    let x = finite(state.x.positions() + drive * eps + momentum)?;
    state.x_prev = Some(std::mem::replace(&mut state.x, x));
    state.k += 1;
    Ok(v)
}

pub fn wag_step<F>(
    state: &mut DynamicsState,
    field_fn: F,
    params: &AccelParams,
) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    if !(params.wag_alpha > 3.0) {
        return Err(Error::InvalidParameter(format!(
            "WAG requires alpha > 3, got {}",
            params.wag_alpha
        )));
    }
    let eps = step_size(params, state.k);
    let k = (state.k + 1) as f64;
    let y = state.y.clone().unwrap_or_else(|| state.x.clone());
    let v = evaluate(field_fn, &y)?;
    let ev = v.velocities() * eps;
    let x_new = y.positions() + &ev;
    let y_new = &x_new
        + (y.positions() - state.x.positions()) * ((k - 1.0) / k)
        + ev * ((k + params.wag_alpha - 2.0) / k);
    let x_new = finite(x_new)?;
    let y_new = finite(y_new)?;
    state.x_prev = Some(std::mem::replace(&mut state.x, x_new));
    state.y = Some(y_new);
    state.k += 1;
    Ok(v)
}

/// Momentum weight `c1 (c2 - 1)` WNes uses at iteration `k`.
pub fn wnes_weight(params: &AccelParams, k: u64) -> Result<f64> {
    if let Some(c) = params.wnes_combined {
        return Ok(c);
    }
    let eps = if params.wnes_freeze {
        params.step
    } else {
        step_size(params, k)
    };
    Ok(wnes_coefficients(eps, params.wnes_beta, params.wnes_mu)?.combined)
}

pub fn wnes_step<F>(
    state: &mut DynamicsState,
    field_fn: F,
    params: &AccelParams,
) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    let eps = step_size(params, state.k);
    let weight = wnes_weight(params, state.k)?;
    let y = state.y.clone().unwrap_or_else(|| state.x.clone());
    let v = evaluate(field_fn, &y)?;
    let x_new = y.positions() + v.velocities() * eps;
    let y_new = &x_new + (&x_new - state.x.positions()) * weight;
    let x_new = finite(x_new)?;
    let y_new = finite(y_new)?;
    state.x_prev = Some(std::mem::replace(&mut state.x, x_new));
    state.y = Some(y_new);
    state.k += 1;
    Ok(v)
}

/// Floor added to the root accumulator.
pub const ADAGRAD_FUDGE: f64 = 1e-6;

pub fn adagrad_momentum_step<F>(
    state: &mut DynamicsState,
    field_fn: F,
    params: &AccelParams,
) -> Result<VectorField>
where
    F: FnMut(&ParticleEnsemble) -> Result<VectorField>,
{
    let eps = step_size(params, state.k);
    let v = evaluate(field_fn, &state.x)?;
    let sq = v.velocities().component_mul(v.velocities());
    let acc = match (&state.adagrad_acc, state.k) {
        (Some(acc), k) if k > 0 => acc * params.adagrad_rate + sq * (1.0 - params.adagrad_rate),
        _ => sq,
    };
    let scaled = v
        .velocities()
        .zip_map(&acc, |g, a| g / (ADAGRAD_FUDGE + a.sqrt()));
    let x = finite(state.x.positions() + scaled * eps)?;
    state.x = x;
    state.adagrad_acc = Some(acc);
    state.k += 1;
    Ok(v)
}
