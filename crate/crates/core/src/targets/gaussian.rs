use nalgebra::{DMatrix, DVector};

use super::Target;
use crate::error::{Error, Result};

/// Multivariate normal `N(mean, cov)`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.shape() != (d, d) {
            return Err(Error::InvalidParameter(format!(
                "covariance must be {d}x{d}, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite Gaussian parameters".into(),
            ));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter(
                "covariance is not symmetric".into(),
            ));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
        let precision = chol.inverse();
        Ok(Self {
            mean,
            cov,
            precision,
        })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(
            DVector::from_vec(mean),
            DMatrix::from_diagonal_element(d, d, variance),
        )
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(vec![0.0; dim], 1.0).expect("identity covariance is SPD")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn name(&self) -> &str {
        "gaussian"
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(x) - &self.mean;
        -0.5 * diff.dot(&(&self.precision * &diff))
    }

    fn grad_log_p(&self, x: &[f64], out: &mut [f64]) {
        let diff = DVector::from_column_slice(x) - &self.mean;
        let g = -(&self.precision * diff);
        out.copy_from_slice(g.as_slice());
    }
}
