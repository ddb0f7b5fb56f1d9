//! Higher-order semirelativistic Schrödinger and Hartree-Fock solvers on
//! periodic grids.
//!
//! The kinetic operator is the Taylor truncation of `sqrt(p²c² + m²c⁴)`
//! at order `J`, applied as a Fourier multiplier. Mean-field terms use a
//! spectral Coulomb-type kernel. Time stepping is either Strang splitting
//! or a Duhamel-Picard iteration.

pub mod coefficients;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod meanfield;
pub mod potentials;
pub mod propagation;
pub mod scenarios;

pub use coefficients::{Dispersion, OperatorSpec, PhysicalConstants};
pub use error::{HosfError, Result};
pub use grid::{Field, GridSpec, OrbitalSet, RealField, SpectralField};
pub use meanfield::{CoulombKernel, KernelSpec, MeanFieldModel};
pub use propagation::{Hamiltonian, IntegratorConfig, Method, Simulation};

/// Version of this library, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
