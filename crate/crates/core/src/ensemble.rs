//! Particle positions and per-particle velocities.
//!
//! Both types wrap an `N x D` matrix with one particle per row.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};

/// `N` particles in `R^D`, the support of the empirical approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: DMatrix<f64>,
}

impl ParticleEnsemble {
    /// Wraps a position matrix, rejecting empty or non-finite input.
    pub fn new(positions: DMatrix<f64>) -> Result<Self> {
        if positions.nrows() == 0 || positions.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "ensemble must have at least one particle and one dimension, got {}x{}",
                positions.nrows(),
                positions.ncols()
            )));
        }
        if let Some(i) = first_non_finite_row(&positions) {
            return Err(Error::InvalidInput(format!(
                "particle {i} has non-finite coordinates"
            )));
        }
        Ok(Self { positions })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("rows have differing lengths".into()));
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    /// Skips the finiteness check. Used by steppers, which check afterwards.
    pub(crate) fn from_matrix_unchecked(positions: DMatrix<f64>) -> Self {
        Self { positions }
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn into_positions(self) -> DMatrix<f64> {
        self.positions
    }

    pub fn particle(&self, i: usize) -> Vec<f64> {
        self.positions.row(i).iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        first_non_finite_row(&self.positions).is_none()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        first_non_finite_row(&self.positions)
    }

    pub fn mean(&self) -> RowDVector<f64> {
        self.positions.row_mean()
    }

    /// Shifts every particle by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "offset has length {}, expected {}",
                offset.len(),
                self.dim()
            )));
        }
        let mut positions = self.positions.clone();
        for mut row in positions.row_iter_mut() {
            for (x, t) in row.iter_mut().zip(offset) {
                *x += t;
            }
        }
        Self::new(positions)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.positions * factor)
    }
}

/// Per-particle velocities; row `i` is the velocity of particle `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    velocities: DMatrix<f64>,
}

impl VectorField {
    pub fn new(velocities: DMatrix<f64>) -> Result<Self> {
        if let Some(i) = first_non_finite_row(&velocities) {
            return Err(Error::NonFiniteField { particle: i });
        }
        Ok(Self { velocities })
    }

    #[doc(hidden)]
    pub fn from_unchecked(velocities: DMatrix<f64>) -> Self {
        Self { velocities }
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            velocities: DMatrix::zeros(n, d),
        }
    }

    pub fn n(&self) -> usize {
        self.velocities.nrows()
    }

    pub fn dim(&self) -> usize {
        self.velocities.ncols()
    }

    pub fn velocities(&self) -> &DMatrix<f64> {
        &self.velocities
    }

    pub fn into_velocities(self) -> DMatrix<f64> {
        self.velocities
    }

    pub fn matches(&self, particles: &ParticleEnsemble) -> bool {
        self.n() == particles.n() && self.dim() == particles.dim()
    }

    /// Mean Euclidean norm of the rows.
    pub fn mean_norm(&self) -> f64 {
        let n = self.n().max(1) as f64;
        self.velocities.row_iter().map(|r| r.norm()).sum::<f64>() / n
    }

    /// Sum of squared row norms.
    pub fn squared_norm(&self) -> f64 {
        self.velocities.norm_squared()
    }
}

fn first_non_finite_row(m: &DMatrix<f64>) -> Option<usize> {
    m.row_iter()
        .position(|row| row.iter().any(|v| !v.is_finite()))
}
