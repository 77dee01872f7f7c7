//! Inertial-particle transport in a 2-D incompressible fractional Gaussian
//! velocity field.
//!
//! The velocity field is `v = ∇⊥ψ` where the stream function `ψ` is a random
//! Fourier series on the unit torus whose coefficients are independent
//! stationary fractional Ornstein–Uhlenbeck processes (up to the conjugate
//! symmetry that keeps `ψ` real). Particles obey Stokes' law
//! `τ ẍ = v(x,t) − ẋ`; the solution operator forms a cocycle with an explicit
//! absorbing velocity ball, which makes a pullback-attractor approximation
//! possible from a single field realization.
//!
//! Module map:
//! - [`fou`]: exact covariance kernel and exact stationary sampling of fOU
//!   processes (adaptive oscillatory quadrature + innovations form of the
//!   Cholesky transport).
//! - [`spectrum`]: wave-mode lattice, energy-spectrum configuration, and the
//!   summability/regularity exponent checks.
//! - [`field`]: synthesis and pointwise/grid evaluation of one stream-function
//!   realization, with serialization.
//! - [`particles`]: Stokes-law and passive-tracer integration against a frozen
//!   field realization.
//! - [`attractor`]: absorbing-radius computation, forward-invariance checks,
//!   and finite-sample pullback snapshots.
//! - [`diagnostics`]: estimators that confront simulated output with the
//!   analytic targets (structure functions, energy spectrum, autocovariance,
//!   clustering).

pub mod attractor;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod fou;
pub mod grid;
pub mod particles;
pub mod spectrum;
pub mod streams;

mod quad;

pub use attractor::{AbsorbingRadius, AttractorCloud, CloudSemidistance, InvarianceReport};
pub use error::{Error, Result};
pub use field::{FieldGrid, FieldPath};
pub use fou::{FouParams, RealFouPath, StructureBounds};
pub use grid::TimeGrid;
pub use particles::{ParticleState, SimConfig, TrajectoryRecord};
pub use spectrum::{SpectrumConfig, SpectrumKind, WaveMode};
