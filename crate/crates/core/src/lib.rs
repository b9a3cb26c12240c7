//! Symmetry-aware variational inference.
//!
//! Minimises f-divergences `D_f(P || Q)` over location-scale families on
//! `R^d` and von Mises-Fisher families on the sphere `S^{d-1}`, and checks
//! which statistics of the target (mean, covariance up to scale,
//! correlation, symmetry axis) a minimiser reproduces.
//!
//! Modules:
//!
//! - [`divergence`]: generators, densities, quadrature and Monte Carlo
//!   evaluation of f-divergences.
//! - [`euclidean`]: location-scale families, even and elliptical targets,
//!   affine group actions, moment statistics and fixed-set checks.
//! - [`sphere`]: von Mises-Fisher family, rotationally symmetric axial
//!   targets, the closed-form reverse-KL objective and its critical
//!   threshold, the axis statistic and the Lambert projection.
//! - [`optimize`]: multi-start minimisation over `(nu, S)` and `(nu, kappa)`.
//! - [`quadrature`]: Gauss-Legendre rules and deterministic summation.

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergence;
pub mod error;
pub mod euclidean;
pub mod linalg;
pub mod optimize;
pub mod quadrature;
pub mod sphere;

pub use divergence::{
    divergence_monte_carlo, divergence_quadrature, Density, DivergenceGenerator, Extent,
    MonteCarloEstimate, QuadratureSpec, ReferenceMeasure, Sampler, Support,
};
pub use error::{Error, Result};
pub use euclidean::{AffineMap, EllipticalTargetSpec, LocScaleFamily, LocScaleParams};

pub use optimize::{FitResult, FittedParams, OptConfig, OptMethod};
pub use sphere::{AxialTarget, Line, SphereMoments, VmfParams};
