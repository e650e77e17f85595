//! Dense operators on registers of qubits.
//!
//! Conventions (used by every engine in this crate):
//!
//! * Single-qubit basis order is (ground, excited), so `sigma_z` is
//!   `diag(-1, +1)` and the excited-state projector is `diag(0, 1)`.
//! * `sigma_plus` *raises* (ground -> excited) and `sigma_minus` lowers;
//!   `sigma_plus = (sigma_x + i sigma_y) / 2` with the `sigma_y` below.
//! * A register index is read as a bit string with qubit 0 as the most
//!   significant bit: `index = b_0 * 2^(n-1) + b_1 * 2^(n-2) + ...`.

use ndarray::Array2;
use num_complex::Complex64 as C64;

/// Complex zero.
pub const C_ZERO: C64 = C64::new(0.0, 0.0);
/// Complex one.
pub const C_ONE: C64 = C64::new(1.0, 0.0);
/// Imaginary unit.
pub const C_I: C64 = C64::new(0.0, 1.0);

/// Dense operator on a register of qubits.
pub type Operator = Array2<C64>;

/// Pauli x: `[[0, 1], [1, 0]]`.
pub fn sigma_x() -> Operator {
    ndarray::array![[C_ZERO, C_ONE], [C_ONE, C_ZERO]]
}

/// Pauli y in the (ground, excited) ordering: `[[0, i], [-i, 0]]`.
///
/// This sign pairs with `sigma_z = diag(-1, +1)` so the algebra
/// `[sigma_x, sigma_y] = 2 i sigma_z` and the ladder decomposition
/// `sigma_pm = (sigma_x ± i sigma_y) / 2` both hold.
pub fn sigma_y() -> Operator {
    ndarray::array![[C_ZERO, C_I], [-C_I, C_ZERO]]
}

/// Pauli z: `diag(-1, +1)`; ground state has eigenvalue −1.
pub fn sigma_z() -> Operator {
    ndarray::array![[-C_ONE, C_ZERO], [C_ZERO, C_ONE]]
}

/// Raising operator `|excited><ground|`.
pub fn sigma_plus() -> Operator {
    ndarray::array![[C_ZERO, C_ZERO], [C_ONE, C_ZERO]]
}

/// Lowering operator `|ground><excited|`.
pub fn sigma_minus() -> Operator {
    ndarray::array![[C_ZERO, C_ONE], [C_ZERO, C_ZERO]]
}

/// Identity on a `dim`-dimensional space.
pub fn identity(dim: usize) -> Operator {
    Array2::eye(dim).mapv(|x: f64| C64::new(x, 0.0))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    ndarray::linalg::kron(a, b)
}

/// Embed a single-qubit operator on qubit `k` of an `n`-qubit register
/// (qubit 0 is the most significant bit).
pub fn embed(op: &Operator, k: usize, n: usize) -> Operator {
    assert!(k < n, "qubit index {k} out of range for {n} qubits");
    assert_eq!(op.nrows(), 2);
    assert_eq!(op.ncols(), 2);
    let left = identity(1 << k);
    let right = identity(1 << (n - k - 1));
    kron(&kron(&left, op), &right)
}

/// Conjugate transpose.
pub fn adjoint(op: &Operator) -> Operator {
    op.t().mapv(|z| z.conj())
}

/// Largest elementwise magnitude of `a - a†`; zero for Hermitian matrices.
pub fn hermiticity_defect(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[[i, j]] - a[[j, i]].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// Largest elementwise magnitude.
pub fn max_abs(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Number of qubits for a dimension, if it is a power of two and at least 2.
pub fn qubit_count(dim: usize) -> Option<usize> {
    if dim >= 2 && dim.is_power_of_two() {
        Some(dim.trailing_zeros() as usize)
    } else {
        None
    }
}

/// Bit value of qubit `k` inside basis index `idx` of an `n`-qubit register.
#[inline]
pub fn qubit_bit(idx: usize, k: usize, n: usize) -> usize {
    (idx >> (n - 1 - k)) & 1
}
