//! Physical constants, pinned so fixtures are bit-reproducible.

/// Electron gyromagnetic ratio, rad s^-1 T^-1.
pub const GAMMA_E: f64 = 1.760859e11;

/// Vacuum permeability, T m A^-1.
pub const MU_0: f64 = 1.256637e-6;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054571817e-34;

/// Boltzmann constant, J K^-1.
pub const K_B: f64 = 1.380649e-23;
