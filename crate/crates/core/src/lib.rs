//! Simulation toolkit for cooling an ensemble of electron spins through a
//! periodically reset superconducting flux qubit.
//!
//! The crate provides three independent computational engines plus the shared
//! physical model that feeds them:
//!
//! * [`model`] — device geometry and thermodynamics: position-dependent
//!   spin–qubit coupling, effective Hamiltonian assembly, Gibbs populations,
//!   polarization readout.
//! * [`lindblad`] — full density-matrix engine: Markovian dissipators,
//!   split-step propagation, qubit reset, and protocol runs with invariant
//!   auditing. Exploits excitation-number block structure when present, so a
//!   seven-spin protocol run completes on a laptop core.
//! * [`dicke`] — exact permutation-symmetric engine: angular-momentum sector
//!   bookkeeping, closed-form single-block dynamics, the two discrete update
//!   maps of the idealized protocol, and its cooling limits.
//! * [`xcheck`] — brute-force oracles that verify the two engines against
//!   each other and against first-principles constructions (explicit sector
//!   bases, full dephasing maps, permutation invariance).
//!
//! Conventions used throughout:
//!
//! * Basis index 0 of a qubit is the **ground** state; `sigma_z` is
//!   `diag(-1, +1)` so the excited population of a single qubit is
//!   `(1 + <sigma_z>) / 2`.
//! * Qubit 0 (the flux qubit) is the most significant bit of a basis index.
//! * All rates and angular frequencies are in rad/s; times in seconds;
//!   distances in meters; fields in tesla; temperatures in kelvin.

pub mod constants;
pub mod dicke;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod operator;
pub mod xcheck;

pub use error::{Error, Result};
