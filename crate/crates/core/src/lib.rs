//! Particle-based variational inference as finite-particle simulation of
//! Wasserstein gradient flows.
//!
//! The crate provides
//!
//! * four estimators of the gradient-flow field (`svgd`, `blob`, `gfsd`,
//!   `gfsf`) in [`fields`],
//! * bandwidth selection for the Gaussian kernel, including heat-equation
//!   matching, in [`kernel`],
//! * plain and accelerated particle dynamics in [`dynamics`], built on the
//!   finite-particle geometry of [`geometry`],
//! * analytic and Bayesian logistic regression targets in [`targets`],
//! * a deterministic, config-driven experiment runner in [`runner`].
//!
//! ```
//! use nalgebra::DMatrix;
//! use parvi::{fields::Estimator, kernel, targets::GaussianTarget, ParticleEnsemble};
//!
//! let x = ParticleEnsemble::new(DMatrix::from_row_slice(3, 1, &[-1.0, 0.5, 2.0])).unwrap();
//! let h = kernel::median_bandwidth(&x).unwrap();
//! let v = Estimator::Gfsd.field(&x, &GaussianTarget::standard(1), h).unwrap();
//! assert_eq!(v.n(), 3);
//! ```

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod kernel;
pub mod runner;
pub mod targets;

pub use ensemble::{ParticleEnsemble, VectorField};
pub use error::{Error, Result};
