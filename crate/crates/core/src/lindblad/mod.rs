//! Density-matrix engine: Markovian dissipators, split-step propagation,
//! flux-qubit reset, and full protocol runs with invariant auditing.
//!
//! The stepper alternates exact unitary conjugation with a first-order
//! dissipative update:
//!
//! ```text
//! rho -> rho' = U rho U†,   U = exp(-i H delta)
//! rho(t + delta) = rho' + L[rho'] delta
//! ```
//!
//! The first-order step does not guarantee positivity by construction, so
//! every cycle records a minimum-eigenvalue estimate and the run aborts if
//! it dips below `-1e-4` (or the trace drifts past `1e-6`).
//!
//! When the Hamiltonian and initial state are exactly block-diagonal in the
//! total-excitation decomposition (true for every bundled scenario), the
//! engine evolves the blocks independently — same arithmetic, far smaller
//! matrices.

pub(crate) mod blocks;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::SpinEnsemble;
use crate::operator::{hermiticity_defect, max_abs, qubit_bit, qubit_count, Operator};
use blocks::{BlockEngine, SectorLayout};

/// Max `|rho - rho†|` entry for a valid density matrix.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Max `|Tr rho - 1|` for a valid density matrix.
pub const TRACE_TOL: f64 = 1e-9;
/// Most negative eigenvalue tolerated in a valid density matrix.
pub const MIN_EIG_TOL: f64 = -1e-6;
/// Trace drift that aborts a protocol run.
pub const ABORT_TRACE_ERROR: f64 = 1e-6;
/// Eigenvalue floor that aborts a protocol run.
pub const ABORT_MIN_EIG: f64 = -1e-4;

/// Validated state of the flux-qubit-plus-spins register.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: Operator,
    n_qubits: usize,
}

impl DensityMatrix {
    /// Validate and wrap a dense matrix: power-of-two dimension, Hermitian
    /// within [`HERMITICITY_TOL`], unit trace within [`TRACE_TOL`], smallest
    /// eigenvalue above [`MIN_EIG_TOL`] (exact eigendecomposition up to
    /// dimension 256, estimated beyond).
    pub fn new(mat: Operator) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("matrix is {}x{}, not square", mat.nrows(), mat.ncols()),
            });
        }
        let n_qubits = qubit_count(mat.nrows()).ok_or_else(|| Error::InvalidDensityMatrix {
            reason: format!("dimension {} is not a power of two >= 2", mat.nrows()),
        })?;
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidDensityMatrix {
                reason: "non-finite entries".into(),
            });
        }
        let defect = hermiticity_defect(&mat);
        if defect > HERMITICITY_TOL {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("not Hermitian: max |rho - rho†| = {defect:.3e}"),
            });
        }
        let trace: C64 = mat.diag().iter().sum();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("trace = {:.12} + {:.3e}i, not 1", trace.re, trace.im),
            });
        }
        let min_eig = dense_min_eigenvalue(&mat);
        if min_eig < MIN_EIG_TOL {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("minimum eigenvalue {min_eig:.3e} below {MIN_EIG_TOL:.0e}"),
            });
        }
        Ok(DensityMatrix { mat, n_qubits })
    }

    /// Wrap a matrix produced by a trace-preserving internal map, skipping
    /// the O(dim^3) validation.
    pub(crate) fn from_trusted(mat: Operator, n_qubits: usize) -> Self {
        debug_assert_eq!(mat.nrows(), 1usize << n_qubits);
        DensityMatrix { mat, n_qubits }
    }

    /// Protocol initial state: flux qubit in its ground state, every spin
    /// maximally mixed — `|0><0| ⊗ (I/2)^(⊗M)`.
    pub fn ground_fq_mixed_spins(m_spins: usize) -> Result<Self> {
        if m_spins == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let n = m_spins + 1;
        let dim = 1usize << n;
        let half_dim = dim / 2;
        let w = 1.0 / half_dim as f64;
        let mut mat: Operator = Array2::zeros((dim, dim));
        for i in 0..half_dim {
            mat[[i, i]] = C64::new(w, 0.0);
        }
        Ok(DensityMatrix { mat, n_qubits: n })
    }

    /// Pure computational-basis state `|index>`.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if n_qubits == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if index >= dim {
            return Err(Error::IndexOutOfRange {
                name: "basis index",
                index,
                len: dim,
            });
        }
        let mut mat: Operator = Array2::zeros((dim, dim));
        mat[[index, index]] = C64::new(1.0, 0.0);
        Ok(DensityMatrix { mat, n_qubits })
    }

    /// Projector onto a pure state (validated through [`DensityMatrix::new`]).
    pub fn from_pure(psi: &Array1<C64>) -> Result<Self> {
        let dim = psi.len();
        let mat = Array2::from_shape_fn((dim, dim), |(i, j)| psi[i] * psi[j].conj());
        DensityMatrix::new(mat)
    }

    /// The underlying dense matrix.
    pub fn matrix(&self) -> &Operator {
        &self.mat
    }

    /// Register size.
    pub fn num_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Matrix dimension `2^n`.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Trace (should be 1).
    pub fn trace(&self) -> C64 {
        self.mat.diag().iter().sum()
    }

    /// `|Tr rho - 1|`.
    pub fn trace_error(&self) -> f64 {
        let t = self.trace();
        ((t.re - 1.0).powi(2) + t.im.powi(2)).sqrt()
    }

    /// Max `|rho - rho†|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.mat)
    }

    /// Smallest eigenvalue: exact up to dimension 256, otherwise a power-
    /// iteration estimate (an upper bound on the true minimum).
    pub fn min_eigenvalue(&self) -> f64 {
        dense_min_eigenvalue(&self.mat)
    }

    /// Excited population of register qubit `k` (qubit 0 is the flux
    /// qubit): summed diagonal weight on basis states with that bit set.
    pub fn excited_population(&self, k: usize) -> Result<f64> {
        if k >= self.n_qubits {
            return Err(Error::IndexOutOfRange {
                name: "qubit",
                index: k,
                len: self.n_qubits,
            });
        }
        let mut p = 0.0;
        for i in 0..self.dim() {
            if qubit_bit(i, k, self.n_qubits) == 1 {
                p += self.mat[[i, i]].re;
            }
        }
        Ok(p)
    }

    /// Partial trace over the flux qubit: the spins' reduced state.
    pub fn spin_marginal(&self) -> Operator {
        let half = self.dim() / 2;
        Array2::from_shape_fn((half, half), |(i, j)| {
            self.mat[[i, j]] + self.mat[[i + half, j + half]]
        })
    }
}

fn dense_min_eigenvalue(mat: &Operator) -> f64 {
    let dim = mat.nrows();
    if dim <= 256 {
        let (vals, _) = blocks::hermitian_eig(mat);
        vals.into_iter().fold(f64::INFINITY, f64::min)
    } else {
        // Power iteration on I - rho; optimistic but cheap.
        let mut x = Array1::from_elem(dim, C64::new(1.0 / (dim as f64).sqrt(), 0.0));
        for _ in 0..200 {
            let y = &x - &mat.dot(&x);
            let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-300 {
                break;
            }
            x = y / C64::new(norm, 0.0);
        }
        let bx = mat.dot(&x);
        let rayleigh: C64 = x.iter().zip(bx.iter()).map(|(a, b)| a.conj() * b).sum();
        let min_diag = mat
            .diag()
            .iter()
            .map(|z| z.re)
            .fold(f64::INFINITY, f64::min);
        rayleigh.re.min(min_diag)
    }
}

/// Timing of a protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Integration substep (s).
    pub delta: f64,
    /// Interaction interval between resets (s).
    pub t_int: f64,
    /// Reset duration (s); spins are frozen, the clock still advances.
    pub t_i: f64,
    /// Number of reset cycles.
    pub n_steps: usize,
    /// `round(t_int / delta)`, at least 1.
    pub substeps_per_cycle: usize,
    /// `t_int - substeps_per_cycle * delta`, recorded, not compensated.
    pub t_int_residual: f64,
}

impl Schedule {
    /// Build a schedule; `t_int` is snapped to an integer number of
    /// substeps by rounding and the residual is recorded.
    pub fn new(delta: f64, t_int: f64, t_i: f64, n_steps: usize) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::NonPositive {
                name: "delta",
                value: delta,
            });
        }
        if !(t_int > 0.0) {
            return Err(Error::NonPositive {
                name: "t_int",
                value: t_int,
            });
        }
        if !(t_i >= 0.0) {
            return Err(Error::Negative {
                name: "t_i",
                value: t_i,
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidSchedule {
                reason: "n_steps must be at least 1".into(),
            });
        }
        let substeps = (t_int / delta).round().max(1.0) as usize;
        Ok(Schedule {
            delta,
            t_int,
            t_i,
            n_steps,
            substeps_per_cycle: substeps,
            t_int_residual: t_int - substeps as f64 * delta,
        })
    }

    /// Elapsed wall-clock time per cycle.
    pub fn cycle_period(&self) -> f64 {
        self.t_i + self.t_int
    }
}

/// Observables recorded after one reset cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Cycle index (0 = initial state, before any evolution).
    pub step: usize,
    /// Elapsed time `step * (t_i + t_int)` in seconds.
    pub time_s: f64,
    /// Excited population of each spin (index 0 here = spin 1).
    pub p_up: Vec<f64>,
    /// Mean excited population over the spins.
    pub p_up_mean: f64,
    /// `|Tr rho - 1|` at this cycle.
    pub trace_error: f64,
    /// Minimum-eigenvalue estimate at this cycle.
    pub min_eig: f64,
}

/// Health counters accumulated over a full run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunAudit {
    pub max_trace_error: f64,
    pub max_hermiticity_defect: f64,
    /// Most negative per-cycle eigenvalue estimate.
    pub min_eigenvalue_estimate: f64,
    /// Exact smallest eigenvalue of the final state.
    pub final_min_eigenvalue: f64,
    /// Cycle at which the saturation rule fired, if it did.
    pub saturated_at: Option<usize>,
    pub substeps_per_cycle: usize,
    pub t_int_residual: f64,
}

/// Per-cycle observable series plus the run audit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Number of spins (register size minus the flux qubit).
    pub m_spins: usize,
    /// One record per cycle, starting with the initial state at step 0.
    pub records: Vec<TrajectoryRecord>,
    pub audit: RunAudit,
}

impl Trajectory {
    /// Final mean excited population.
    pub fn final_p_up_mean(&self) -> f64 {
        self.records.last().map(|r| r.p_up_mean).unwrap_or(f64::NAN)
    }
}

/// Early-stop rule: stop when the mean excited population changes by less
/// than `tol` over `window` cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationRule {
    pub window: usize,
    pub tol: f64,
}

impl Default for SaturationRule {
    fn default() -> Self {
        SaturationRule {
            window: 100,
            tol: 1e-4,
        }
    }
}

/// A trajectory together with the final state.
#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
}

/// Action of the dissipator
/// `L[rho] = sum_l gT_l (Z_l rho Z_l - rho) + sum_l gL_l (P_l rho P_l† + M_l rho M_l† - rho)`
/// (with `P`/`M` the per-qubit raising/lowering operators). Exactly
/// traceless and Hermiticity-preserving.
pub fn dissipator(rho: &DensityMatrix, ens: &SpinEnsemble) -> Result<Operator> {
    if rho.num_qubits() != ens.num_qubits() {
        return Err(Error::LengthMismatch {
            name: "register",
            expected: ens.num_qubits(),
            got: rho.num_qubits(),
        });
    }
    Ok(dissipator_dense(rho.matrix(), ens))
}

fn dissipator_dense(rho: &Operator, ens: &SpinEnsemble) -> Operator {
    let n = ens.num_qubits();
    let dim = 1usize << n;
    let total: f64 = ens.gamma_t.iter().sum::<f64>() + ens.gamma_l.iter().sum::<f64>();
    let mut out = rho.mapv(|z| z * C64::new(-total, 0.0));
    for l in 0..n {
        let shift = n - 1 - l;
        let bit = 1usize << shift;
        let gt = ens.gamma_t[l];
        if gt > 0.0 {
            for i in 0..dim {
                for j in 0..dim {
                    // sigma_z sandwich: sign +1 when bits agree, -1 otherwise
                    let s = if (i ^ j) & bit == 0 { gt } else { -gt };
                    out[[i, j]] += C64::new(s, 0.0) * rho[[i, j]];
                }
            }
        }
        let gl = ens.gamma_l[l];
        if gl > 0.0 {
            let w = C64::new(gl, 0.0);
            for i in 0..dim {
                for j in 0..dim {
                    if i & bit != 0 && j & bit != 0 {
                        // raising: |1><0| rho |0><1|
                        out[[i, j]] += w * rho[[i & !bit, j & !bit]];
                    } else if i & bit == 0 && j & bit == 0 {
                        // lowering: |0><1| rho |1><0|
                        out[[i, j]] += w * rho[[i | bit, j | bit]];
                    }
                }
            }
        }
    }
    out
}

/// Precomputed single-substep unitary `exp(-i H delta)`.
///
/// Built once per run by Hermitian eigendecomposition (the rotating-frame
/// Hamiltonian is time-independent); reusing it is bit-identical to
/// recomputing it every substep.
#[derive(Debug, Clone)]
pub struct Propagator {
    delta: f64,
    u: Operator,
}

impl Propagator {
    /// Diagonalize `h` and exponentiate. `h` must be square with
    /// power-of-two dimension and Hermitian to `1e-12` relative tolerance.
    pub fn new(h: &Operator, delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::Negative {
                name: "delta",
                value: delta,
            });
        }
        if h.nrows() != h.ncols() || qubit_count(h.nrows()).is_none() {
            return Err(Error::InvalidDensityMatrix {
                reason: format!(
                    "Hamiltonian is {}x{}: need square, power-of-two",
                    h.nrows(),
                    h.ncols()
                ),
            });
        }
        let scale = max_abs(h).max(1.0);
        let defect = hermiticity_defect(h);
        if defect > 1e-12 * scale {
            return Err(Error::NotHermitian {
                defect,
                tol: 1e-12 * scale,
            });
        }
        // Exponentiate per excitation block when the structure allows: the
        // same numbers fall out, from much smaller eigenproblems.
        let n = qubit_count(h.nrows()).unwrap();
        let layout = SectorLayout::new(n);
        let u = if layout.is_block_diagonal(h) {
            let blocks: Vec<_> = layout
                .split(h)
                .iter()
                .map(|hb| blocks::unitary_from_hermitian(hb, delta))
                .collect();
            layout.assemble(&blocks)
        } else {
            blocks::unitary_from_hermitian(h, delta)
        };
        Ok(Propagator { delta, u })
    }

    /// The dense unitary.
    pub fn matrix(&self) -> &Operator {
        &self.u
    }

    /// Substep length this propagator was built for.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// One split step: `rho -> U rho U† + L[U rho U†] delta`.
///
/// Builds the propagator on the fly; for repeated stepping build one
/// [`Propagator`] and call [`evolve_substep_with`] (bit-identical results).
pub fn evolve_substep(
    rho: &DensityMatrix,
    h: &Operator,
    ens: &SpinEnsemble,
    delta: f64,
) -> Result<DensityMatrix> {
    if !(delta > 0.0) {
        return Err(Error::NonPositive {
            name: "delta",
            value: delta,
        });
    }
    let prop = Propagator::new(h, delta)?;
    evolve_substep_with(rho, &prop, ens)
}

/// One split step using a precomputed propagator.
pub fn evolve_substep_with(
    rho: &DensityMatrix,
    prop: &Propagator,
    ens: &SpinEnsemble,
) -> Result<DensityMatrix> {
    if rho.num_qubits() != ens.num_qubits() || prop.u.nrows() != rho.dim() {
        return Err(Error::LengthMismatch {
            name: "register",
            expected: ens.num_qubits(),
            got: rho.num_qubits(),
        });
    }
    let u_rho = prop.u.dot(rho.matrix());
    let u_dag = prop.u.t().mapv(|z| z.conj());
    let conjugated = u_rho.dot(&u_dag);
    let diss = dissipator_dense(&conjugated, ens);
    let next = conjugated + diss.mapv(|z| z * C64::new(prop.delta, 0.0));
    if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalOverflow {
            context: "evolve_substep",
        });
    }
    Ok(DensityMatrix::from_trusted(next, rho.num_qubits()))
}

/// Instantaneous reset `rho -> |0><0| ⊗ Tr_0(rho)`: the flux qubit returns
/// to its ground state, the spins keep their marginal exactly.
pub fn reset_flux_qubit(rho: &DensityMatrix) -> DensityMatrix {
    let dim = rho.dim();
    let half = dim / 2;
    let mut out: Operator = Array2::zeros((dim, dim));
    for i in 0..half {
        for j in 0..half {
            out[[i, j]] = rho.matrix()[[i, j]] + rho.matrix()[[i + half, j + half]];
        }
    }
    DensityMatrix::from_trusted(out, rho.num_qubits())
}

enum Engine {
    Block(Box<BlockEngine>),
    Dense(DenseEngine),
}

struct DenseEngine {
    u: Operator,
    u_dag: Operator,
    rho: Operator,
    delta: f64,
}

impl DenseEngine {
    fn substep(&mut self, ens: &SpinEnsemble) {
        let conj = self.u.dot(&self.rho).dot(&self.u_dag);
        let diss = dissipator_dense(&conj, ens);
        self.rho = conj + diss.mapv(|z| z * C64::new(self.delta, 0.0));
    }

    fn reset(&mut self) {
        let dim = self.rho.nrows();
        let half = dim / 2;
        let mut out: Operator = Array2::zeros((dim, dim));
        for i in 0..half {
            for j in 0..half {
                out[[i, j]] = self.rho[[i, j]] + self.rho[[i + half, j + half]];
            }
        }
        self.rho = out;
    }

    fn record(&self, n_qubits: usize) -> blocks::RecordScalars {
        let dim = self.rho.nrows();
        let excited = (0..n_qubits)
            .map(|k| {
                (0..dim)
                    .filter(|&i| qubit_bit(i, k, n_qubits) == 1)
                    .map(|i| self.rho[[i, i]].re)
                    .sum()
            })
            .collect();
        let trace: f64 = (0..dim).map(|i| self.rho[[i, i]].re).sum();
        blocks::RecordScalars {
            excited,
            trace_error: (trace - 1.0).abs(),
            hermiticity_defect: hermiticity_defect(&self.rho),
            min_eig_estimate: dense_min_eigenvalue(&self.rho),
        }
    }
}

/// Run the reset protocol: `n_steps` cycles of (`t_int` of Lindblad
/// evolution under `h`, then a flux-qubit reset), recording observables
/// after every cycle. Deterministic for fixed inputs.
///
/// Aborts with [`Error::InvariantBreach`] if the trace drifts past
/// [`ABORT_TRACE_ERROR`] or the minimum-eigenvalue estimate falls below
/// [`ABORT_MIN_EIG`].
pub fn run_protocol(
    initial: &DensityMatrix,
    h: &Operator,
    ens: &SpinEnsemble,
    schedule: &Schedule,
) -> Result<Trajectory> {
    Ok(run_protocol_full(initial, h, ens, schedule, None)?.trajectory)
}

/// [`run_protocol`] plus the final state and an optional early-stop rule.
pub fn run_protocol_full(
    initial: &DensityMatrix,
    h: &Operator,
    ens: &SpinEnsemble,
    schedule: &Schedule,
    saturation: Option<SaturationRule>,
) -> Result<ProtocolRun> {
    let n = ens.num_qubits();
    let m = ens.num_spins();
    if initial.num_qubits() != n {
        return Err(Error::LengthMismatch {
            name: "register",
            expected: n,
            got: initial.num_qubits(),
        });
    }
    if h.nrows() != initial.dim() || h.ncols() != initial.dim() {
        return Err(Error::LengthMismatch {
            name: "hamiltonian",
            expected: initial.dim(),
            got: h.nrows(),
        });
    }

    let mut engine = match BlockEngine::new(h, ens, schedule.delta, initial.matrix()) {
        Some(be) => Engine::Block(Box::new(be)),
        None => {
            let prop = Propagator::new(h, schedule.delta)?;
            let u_dag = prop.u.t().mapv(|z| z.conj());
            Engine::Dense(DenseEngine {
                u: prop.u,
                u_dag,
                rho: initial.matrix().clone(),
                delta: schedule.delta,
            })
        }
    };

    let mut records: Vec<TrajectoryRecord> = Vec::with_capacity(schedule.n_steps + 1);
    let mut audit = RunAudit {
        max_trace_error: 0.0,
        max_hermiticity_defect: 0.0,
        min_eigenvalue_estimate: f64::INFINITY,
        final_min_eigenvalue: f64::NAN,
        saturated_at: None,
        substeps_per_cycle: schedule.substeps_per_cycle,
        t_int_residual: schedule.t_int_residual,
    };

    let push_record = |engine: &mut Engine,
                       step: usize,
                       records: &mut Vec<TrajectoryRecord>,
                       audit: &mut RunAudit|
     -> Result<()> {
        let scalars = match engine {
            Engine::Block(be) => be.record(),
            Engine::Dense(de) => de.record(n),
        };
        let p_up: Vec<f64> = scalars.excited[1..].to_vec();
        let p_up_mean = p_up.iter().sum::<f64>() / m as f64;
        audit.max_trace_error = audit.max_trace_error.max(scalars.trace_error);
        audit.max_hermiticity_defect = audit.max_hermiticity_defect.max(scalars.hermiticity_defect);
        audit.min_eigenvalue_estimate = audit.min_eigenvalue_estimate.min(scalars.min_eig_estimate);
        if !p_up_mean.is_finite() {
            return Err(Error::NumericalOverflow {
                context: "run_protocol",
            });
        }
        if scalars.trace_error > ABORT_TRACE_ERROR {
            return Err(Error::InvariantBreach {
                step,
                what: format!(
                    "trace error {:.3e} exceeds {ABORT_TRACE_ERROR:.0e}",
                    scalars.trace_error
                ),
            });
        }
        if scalars.min_eig_estimate < ABORT_MIN_EIG {
            return Err(Error::InvariantBreach {
                step,
                what: format!(
                    "minimum eigenvalue estimate {:.3e} below {ABORT_MIN_EIG:.0e}",
                    scalars.min_eig_estimate
                ),
            });
        }
        if let Some(&bad) = p_up.iter().find(|&&p| !(-1e-6..=1.0 + 1e-6).contains(&p)) {
            return Err(Error::InvariantBreach {
                step,
                what: format!("excited population {bad:.6e} outside [-1e-6, 1+1e-6]"),
            });
        }
        records.push(TrajectoryRecord {
            step,
            time_s: step as f64 * schedule.cycle_period(),
            p_up,
            p_up_mean,
            trace_error: scalars.trace_error,
            min_eig: scalars.min_eig_estimate,
        });
        Ok(())
    };

    push_record(&mut engine, 0, &mut records, &mut audit)?;

    for step in 1..=schedule.n_steps {
        for _ in 0..schedule.substeps_per_cycle {
            match &mut engine {
                Engine::Block(be) => be.substep(),
                Engine::Dense(de) => de.substep(ens),
            }
        }
        match &mut engine {
            Engine::Block(be) => be.reset(),
            Engine::Dense(de) => de.reset(),
        }
        push_record(&mut engine, step, &mut records, &mut audit)?;

        if let Some(rule) = saturation {
            let len = records.len();
            if rule.window > 0 && len > rule.window {
                let now = records[len - 1].p_up_mean;
                let then = records[len - 1 - rule.window].p_up_mean;
                if (now - then).abs() < rule.tol {
                    audit.saturated_at = Some(step);
                    break;
                }
            }
        }
    }

    let (final_mat, exact_min) = match engine {
        Engine::Block(be) => (be.dense_state(), be.exact_min_eigenvalue()),
        Engine::Dense(de) => {
            let me = dense_min_eigenvalue(&de.rho);
            (de.rho, me)
        }
    };
    audit.final_min_eigenvalue = exact_min;
    audit.min_eigenvalue_estimate = audit.min_eigenvalue_estimate.min(exact_min);

    Ok(ProtocolRun {
        trajectory: Trajectory {
            m_spins: m,
            records,
            audit,
        },
        final_state: DensityMatrix::from_trusted(final_mat, n),
    })
}
