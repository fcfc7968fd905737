//! Numerical laboratory for large deviations of q-fold self-intersection
//! local times of symmetric α-stable random walks on `Z^d`.
//!
//! The crate is organised bottom-up:
//!
//! * [`special`], [`lattice_sums`] and [`quadrature`] are the numerical
//!   primitives (incomplete gamma, Ewald lattice sums, Gauss–Legendre).
//! * [`model`] builds the power-law jump law, its torus projection and the
//!   Fourier symbol.
//! * [`walk`] simulates the continuous-time walk and its local times.
//! * [`green`] computes torus and free Green functions and heat kernels.
//! * [`gaussian`] samples the Gaussian field with Green covariance and tests
//!   the Eisenbaum isomorphism.
//! * [`variational`] solves for κ(q), ρ(q) and ρ₁ on finite domains.
//! * [`ldp`] estimates tail probabilities of the SILT.
//! * [`config`], [`runner`] and [`verify`] wire everything to the CLI.

pub mod config;
pub mod error;
pub mod gaussian;
pub mod green;
pub mod lattice;
pub mod lattice_sums;
pub mod ldp;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod runner;
pub mod special;
pub mod stats;
pub mod variational;
pub mod verify;
pub mod walk;

pub use error::{Error, Result};
pub use lattice::{LatticeFunction, Site, SpaceTag, Torus, MAX_DIM};
pub use model::{JumpLaw, ModelParams, Regime, TorusLaw};
