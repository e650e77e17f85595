//! Brute-force verification oracles for small ensembles.
//!
//! Everything here is deliberately slow and explicit: collective
//! angular-momentum sectors are constructed by joint diagonalization of
//! `(S², S_z)` in the `2^M` binary basis, column mixing is evaluated by
//! literally zeroing off-diagonal elements, permutation invariance is
//! checked against explicit permutation matrices, and the density-matrix
//! engine is compared sector-by-sector against the collective-state
//! recursions from [`crate::dicke`]. The fast paths elsewhere in the crate
//! are trusted because they agree with these oracles.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dicke::{
    binomial, block_decay_rates, degeneracy_f64, sector_j2s, step1_update, step2_update,
    SectorIndex, SectorState,
};
use crate::error::{Error, Result};
use crate::lindblad::blocks::hermitian_eig;
use crate::lindblad::{evolve_substep_with, reset_flux_qubit, DensityMatrix, Propagator};
use crate::model::{build_effective_hamiltonian, SpinEnsemble};
use crate::operator::{embed, max_abs, qubit_count, sigma_x, sigma_y, sigma_z, Operator};
use num_traits::ToPrimitive;

/// Cost guard: oracles run on at most this many spins.
pub const MAX_ORACLE_SPINS: usize = 8;
/// Cross-engine comparisons run on at most this many spins.
pub const MAX_EQUIVALENCE_SPINS: usize = 4;
/// Required cross-engine agreement on sector populations.
pub const EQUIVALENCE_TOL: f64 = 1e-3;
/// Residual off-diagonal weight allowed before a reset counts as saturated.
pub const SATURATION_COHERENCE_TOL: f64 = 1e-6;

fn guard_spins(m_spins: usize) -> Result<()> {
    if m_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if m_spins > MAX_ORACLE_SPINS {
        return Err(Error::Unsupported {
            what: format!("oracle checks limited to {MAX_ORACLE_SPINS} spins, got {m_spins}"),
        });
    }
    Ok(())
}

/// `S_z = sum_k sigma_z^(k)` diagonal values: entry `i` is `2c - M` where
/// `c` is the number of set bits (eigenvalue `2m`).
pub fn collective_sz_diag(m_spins: usize) -> Result<Vec<i32>> {
    guard_spins(m_spins)?;
    let dim = 1usize << m_spins;
    Ok((0..dim)
        .map(|i| 2 * (i.count_ones() as i32) - m_spins as i32)
        .collect())
}

/// Total-spin operator `S² = S_x² + S_y² + S_z²` with `S_a = ½ sum_k
/// sigma_a^(k)`; eigenvalue `j(j+1)`.
pub fn total_spin_squared(m_spins: usize) -> Result<Operator> {
    guard_spins(m_spins)?;
    let dim = 1usize << m_spins;
    let half = C64::new(0.5, 0.0);
    let mut s2: Operator = Array2::zeros((dim, dim));
    for pauli in [sigma_x(), sigma_y(), sigma_z()] {
        let mut s_a: Operator = Array2::zeros((dim, dim));
        for k in 0..m_spins {
            s_a.scaled_add(half, &embed(&pauli, k, m_spins));
        }
        s2 = s2 + s_a.dot(&s_a);
    }
    Ok(s2)
}

/// Orthonormal vectors spanning one `(j, m)` eigenspace of `(S², S_z)`;
/// there are `d_j` of them (one per copy of the sector).
#[derive(Debug, Clone)]
pub struct SectorSpan {
    pub sector: SectorIndex,
    pub vectors: Vec<Array1<C64>>,
}

/// Simultaneous eigenbasis of `(S², S_z)` over the `2^M` binary basis,
/// grouped by sector.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    m_spins: usize,
    spans: Vec<SectorSpan>,
}

/// Build the sector basis by diagonalizing `S²` inside each magnetization
/// column (`S_z` is diagonal already, so the columns are its eigenspaces).
///
/// Eigenvalues must land within `1e-8` of some `j(j+1)`; the multiplicity
/// of each `(j, m)` group must equal `d_j`. Degenerate eigenspaces inherit
/// the deterministic ordering of the underlying symmetric eigensolver, so
/// repeated builds give identical vectors.
pub fn build_sector_basis(m_spins: usize) -> Result<SectorBasis> {
    guard_spins(m_spins)?;
    let dim = 1usize << m_spins;
    let s2 = total_spin_squared(m_spins)?;

    let mut spans: Vec<SectorSpan> = Vec::new();
    for c in 0..=m_spins {
        let column: Vec<usize> = (0..dim).filter(|i| i.count_ones() as usize == c).collect();
        let cd = column.len();
        let block = Array2::from_shape_fn((cd, cd), |(a, b)| s2[[column[a], column[b]]]);
        let (vals, vecs) = hermitian_eig(&block);
        let m2 = 2 * c as i32 - m_spins as i32;

        // Ascending eigenvalues <=> ascending j2 >= |m2| with M's parity.
        let mut cursor = 0usize;
        let mut j2 = m2.unsigned_abs();
        while cursor < cd {
            let want = degeneracy_f64(m_spins, j2)? as usize;
            let target = (j2 as f64) * (j2 as f64 + 2.0) / 4.0;
            let mut vectors = Vec::with_capacity(want);
            for t in cursor..cursor + want {
                if t >= cd || (vals[t] - target).abs() > 1e-8 {
                    return Err(Error::InvalidSectorState {
                        reason: format!(
                            "column 2m = {m2}: eigenvalue {} does not match j(j+1) = {target} for 2j = {j2}",
                            vals.get(t).copied().unwrap_or(f64::NAN)
                        ),
                    });
                }
                let mut full: Array1<C64> = Array1::zeros(dim);
                for (a, &idx) in column.iter().enumerate() {
                    full[idx] = vecs[[a, t]];
                }
                vectors.push(full);
            }
            cursor += want;
            spans.push(SectorSpan {
                sector: SectorIndex { j2, m2 },
                vectors,
            });
            j2 += 2;
        }
    }

    // Deterministic ordering: j descending (as in the collective-state
    // tables), then m descending.
    spans.sort_by(|a, b| {
        b.sector
            .j2
            .cmp(&a.sector.j2)
            .then(b.sector.m2.cmp(&a.sector.m2))
    });
    Ok(SectorBasis { m_spins, spans })
}

impl SectorBasis {
    pub fn num_spins(&self) -> usize {
        self.m_spins
    }

    pub fn spans(&self) -> &[SectorSpan] {
        &self.spans
    }

    pub fn span(&self, j2: u32, m2: i32) -> Result<&SectorSpan> {
        SectorIndex { j2, m2 }.check(self.m_spins)?;
        self.spans
            .iter()
            .find(|s| s.sector.j2 == j2 && s.sector.m2 == m2)
            .ok_or(Error::InvalidSector {
                m_spins: self.m_spins,
                j2: j2 as i64,
                m2: m2 as i64,
            })
    }

    /// Number of copies of `(j, m)`; equals `d_j`.
    pub fn multiplicity(&self, j2: u32, m2: i32) -> Result<usize> {
        Ok(self.span(j2, m2)?.vectors.len())
    }

    /// `rho_{j,m} = sum_i |j,m,i><j,m,i|`: the (unnormalized) projector
    /// onto the sector, summed over its copies.
    pub fn sector_projector(&self, j2: u32, m2: i32) -> Result<Operator> {
        let span = self.span(j2, m2)?;
        let dim = 1usize << self.m_spins;
        let mut out: Operator = Array2::zeros((dim, dim));
        for v in &span.vectors {
            for i in 0..dim {
                if v[i] == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..dim {
                    out[[i, j]] += v[i] * v[j].conj();
                }
            }
        }
        Ok(out)
    }

    /// Per-copy sector populations of a spin-space density matrix:
    /// `p[j][m] = (1/d_j) sum_i <j,m,i| rho |j,m,i>`, the same
    /// normalization as [`SectorState`] (`sum d_j p[j][m] = 1`).
    pub fn project_per_copy(&self, rho_spins: &Operator) -> Result<Vec<(SectorIndex, f64)>> {
        let dim = 1usize << self.m_spins;
        if rho_spins.nrows() != dim || rho_spins.ncols() != dim {
            return Err(Error::LengthMismatch {
                name: "spin density matrix",
                expected: dim,
                got: rho_spins.nrows(),
            });
        }
        let mut out = Vec::with_capacity(self.spans.len());
        for span in &self.spans {
            let mut total = 0.0;
            for v in &span.vectors {
                let rv = rho_spins.dot(v);
                let val: C64 = v.iter().zip(rv.iter()).map(|(a, b)| a.conj() * b).sum();
                total += val.re;
            }
            out.push((span.sector, total / span.vectors.len() as f64));
        }
        Ok(out)
    }

    /// Largest deviation of the full vector set from orthonormality
    /// (`max |<v_a|v_b> - delta_ab|`). Vectors from different columns are
    /// orthogonal by construction; within a column every pair is checked.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut all: Vec<(&Array1<C64>, i32)> = Vec::new();
        for span in &self.spans {
            for v in &span.vectors {
                all.push((v, span.sector.m2));
            }
        }
        let mut worst = 0.0f64;
        for a in 0..all.len() {
            for b in a..all.len() {
                if all[a].1 != all[b].1 {
                    continue; // disjoint support, exactly orthogonal
                }
                let ip: C64 = all[a]
                    .0
                    .iter()
                    .zip(all[b].0.iter())
                    .map(|(x, y)| x.conj() * y)
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    /// Largest eigen-residuals of the basis: `max ||S² v - j(j+1) v||_inf`
    /// and `max ||S_z v - 2m v||_inf`.
    pub fn eigen_residuals(&self) -> Result<(f64, f64)> {
        let s2 = total_spin_squared(self.m_spins)?;
        let sz = collective_sz_diag(self.m_spins)?;
        let mut worst_s2 = 0.0f64;
        let mut worst_sz = 0.0f64;
        for span in &self.spans {
            let j2 = span.sector.j2 as f64;
            let jjp1 = j2 * (j2 + 2.0) / 4.0;
            for v in &span.vectors {
                let s2v = s2.dot(v);
                for i in 0..v.len() {
                    worst_s2 = worst_s2.max((s2v[i] - C64::new(jjp1, 0.0) * v[i]).norm());
                    let szv = C64::new(sz[i] as f64, 0.0) * v[i];
                    let target = C64::new(span.sector.m2 as f64, 0.0) * v[i];
                    worst_sz = worst_sz.max((szv - target).norm());
                }
            }
        }
        Ok((worst_s2, worst_sz))
    }
}

/// Independent column-mixing oracle: zero every off-diagonal element of a
/// single-column state (the long-time limit of independent `sigma_z`
/// dephasing) and verify the diagonal is the column-uniform distribution
/// `(Tr rho / C(M, c)) x (projector onto the column)`.
///
/// For a sector projector `rho_{j,m}` (trace `d_j`) the verified identity
/// is exactly `(d_j / C(M, c))` times the column projector.
pub fn brute_force_step2(rho: &Operator) -> Result<Operator> {
    if rho.nrows() != rho.ncols() {
        return Err(Error::NotSingleColumn {
            detail: format!("matrix is {}x{}, not square", rho.nrows(), rho.ncols()),
        });
    }
    let m_spins = qubit_count(rho.nrows()).ok_or_else(|| Error::NotSingleColumn {
        detail: format!("dimension {} is not a power of two", rho.nrows()),
    })?;
    guard_spins(m_spins)?;
    let dim = rho.nrows();
    let scale = max_abs(rho);
    if scale == 0.0 {
        return Err(Error::NotSingleColumn {
            detail: "zero matrix has no column support".into(),
        });
    }
    let support_tol = 1e-12 * scale;
    let mut column: Option<u32> = None;
    for i in 0..dim {
        for j in 0..dim {
            if rho[[i, j]].norm() <= support_tol {
                continue;
            }
            let (ci, cj) = (i.count_ones(), j.count_ones());
            if ci != cj {
                return Err(Error::NotSingleColumn {
                    detail: format!(
                        "entry ({i}, {j}) couples columns with {ci} and {cj} excited spins"
                    ),
                });
            }
            match column {
                None => column = Some(ci),
                Some(c) if c != ci => {
                    return Err(Error::NotSingleColumn {
                        detail: format!("support on both {c}- and {ci}-excitation columns"),
                    });
                }
                _ => {}
            }
        }
    }
    let c = column.expect("nonzero matrix has support") as usize;

    let mut dephased: Operator = Array2::zeros((dim, dim));
    for i in 0..dim {
        dephased[[i, i]] = rho[[i, i]];
    }

    // Verify the column-uniform closed form.
    let trace: C64 = rho.diag().iter().sum();
    let col_dim = binomial(m_spins, c).to_f64().unwrap();
    let target = trace.re / col_dim;
    let tol = 1e-10 * trace.re.abs().max(1.0);
    for i in 0..dim {
        let expected = if i.count_ones() as usize == c {
            target
        } else {
            0.0
        };
        let got = dephased[[i, i]];
        if (got.re - expected).abs() > tol || got.im.abs() > tol {
            return Err(Error::InvalidSectorState {
                reason: format!(
                    "dephased diagonal [{i}] = {:.12e} differs from the uniform column value {expected:.12e}",
                    got.re
                ),
            });
        }
    }
    Ok(dephased)
}

/// Outcome of permutation-invariance checks on `rho_{j,m}`.
#[derive(Debug, Clone, Serialize)]
pub struct PermutationReport {
    pub m_spins: usize,
    pub j2: u32,
    pub m2: i32,
    pub transpositions_checked: usize,
    pub random_permutations_checked: usize,
    /// `max |P rho P† - rho|` over all checked permutations.
    pub max_state_deviation: f64,
    /// `max |[P, S_z]|` (zero because permutations preserve magnetization).
    pub max_sz_commutator: f64,
    /// `max |[P, S²]|`.
    pub max_s2_commutator: f64,
    pub passed: bool,
}

fn permute_index(idx: usize, perm: &[usize], m_spins: usize) -> usize {
    let mut out = 0usize;
    for (k, &pk) in perm.iter().enumerate() {
        let bit = (idx >> (m_spins - 1 - k)) & 1;
        out |= bit << (m_spins - 1 - pk);
    }
    out
}

fn random_permutation<R: Rng>(rng: &mut R, m_spins: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..m_spins).collect();
    for i in (1..m_spins).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Check that the copy-summed sector state `rho_{j,m}` is invariant under
/// spin relabeling: `P rho P† = rho` for every transposition and a fixed
/// sample of 20 seeded random permutations, and that the permutation
/// matrices commute with `S_z` and `S²`. All deviations must stay below
/// `1e-10`.
pub fn permutation_invariance_check(m_spins: usize, j2: u32, m2: i32) -> Result<PermutationReport> {
    let basis = build_sector_basis(m_spins)?;
    let rho = basis.sector_projector(j2, m2)?;
    let s2 = total_spin_squared(m_spins)?;
    let sz = collective_sz_diag(m_spins)?;
    let dim = 1usize << m_spins;

    let mut perms: Vec<Vec<usize>> = Vec::new();
    for a in 0..m_spins {
        for b in a + 1..m_spins {
            let mut p: Vec<usize> = (0..m_spins).collect();
            p.swap(a, b);
            perms.push(p);
        }
    }
    let transpositions = perms.len();
    let seed = 0x5EC7_0000u64
        ^ ((m_spins as u64) << 32)
        ^ ((j2 as u64) << 16)
        ^ (m2 as i64 as u64 & 0xFFFF);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = 20usize;
    for _ in 0..random {
        perms.push(random_permutation(&mut rng, m_spins));
    }

    let mut max_state = 0.0f64;
    let mut max_sz = 0.0f64;
    let mut max_s2 = 0.0f64;
    for perm in &perms {
        let map: Vec<usize> = (0..dim).map(|i| permute_index(i, perm, m_spins)).collect();
        let mut inv = vec![0usize; dim];
        for (i, &mi) in map.iter().enumerate() {
            inv[mi] = i;
        }
        for i in 0..dim {
            for j in 0..dim {
                // (P rho P†)[map i, map j] = rho[i, j]
                max_state = max_state.max((rho[[map[i], map[j]]] - rho[[i, j]]).norm());
                // [P, S²][i, j] = S²[inv i, j] - S²[i, map j]
                max_s2 = max_s2.max((s2[[inv[i], j]] - s2[[i, map[j]]]).norm());
            }
            // [P, S_z] is supported on (map j, j): values sz(j) vs sz(map j).
            max_sz = max_sz.max((sz[i] - sz[map[i]]).abs() as f64);
        }
    }

    Ok(PermutationReport {
        m_spins,
        j2,
        m2,
        transpositions_checked: transpositions,
        random_permutations_checked: random,
        max_state_deviation: max_state,
        max_sz_commutator: max_sz,
        max_s2_commutator: max_s2,
        passed: max_state < 1e-10 && max_sz < 1e-10 && max_s2 < 1e-10,
    })
}

/// Timing of a cross-engine comparison run.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceSchedule {
    /// Reset cycles to compare.
    pub n_cycles: usize,
    /// Window length in units of the slowest block decay time; the design
    /// target is `>= 10` so each window genuinely saturates.
    pub decay_constants_per_window: f64,
    /// Dimensionless substep `rate x delta` for the integrator.
    pub rate_delta_product: f64,
    /// Spin dephasing rate (1/s) for a second, column-mixing window after
    /// each reset; `None` runs extraction only.
    pub spin_dephasing: Option<f64>,
}

impl Default for EquivalenceSchedule {
    fn default() -> Self {
        EquivalenceSchedule {
            n_cycles: 20,
            decay_constants_per_window: 14.0,
            rate_delta_product: 0.01,
            spin_dephasing: None,
        }
    }
}

/// One sector's engine-vs-recursion comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SectorDeviation {
    pub j2: u32,
    pub m2: i32,
    /// Per-copy population measured from the density-matrix engine.
    pub engine: f64,
    /// Per-copy population from the collective-state recursion.
    pub reference: f64,
    pub deviation: f64,
}

/// Worst sector per cycle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CycleComparison {
    pub cycle: usize,
    pub max_deviation: f64,
    pub worst: SectorDeviation,
}

/// Full cross-engine comparison result.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub m_spins: usize,
    pub spin_dephasing_enabled: bool,
    pub threshold: f64,
    pub max_deviation: f64,
    /// Largest unsaturated coherence observed at the end of any window:
    /// flux-qubit coherences after each coupling window, every off-diagonal
    /// after each spin-dephasing window.
    pub max_residual_coherence: f64,
    pub coherence_tolerance: f64,
    pub cycles: Vec<CycleComparison>,
    /// Final-cycle populations for every sector.
    pub breakdown: Vec<SectorDeviation>,
    pub final_p_up_engine: f64,
    pub final_p_up_reference: f64,
    pub passed: bool,
}

fn max_offdiagonal(mat: &Operator) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            if i != j {
                worst = worst.max(mat[[i, j]].norm());
            }
        }
    }
    worst
}

/// Largest coherence involving the flux qubit (register entries whose
/// qubit-0 bits differ). This is what an extraction window must kill
/// before the reset; spin-spin coherences within a flux-qubit branch are
/// physical at extraction saturation and are *not* counted here.
fn max_fq_coherence(mat: &Operator) -> f64 {
    let fq_bit = mat.nrows() / 2;
    let mut worst = 0.0f64;
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            if (i ^ j) & fq_bit != 0 {
                worst = worst.max(mat[[i, j]].norm());
            }
        }
    }
    worst
}

/// Compare the density-matrix engine against the collective-state
/// recursions on identical spins.
///
/// Each cycle drives the exchange Hamiltonian with flux-qubit dephasing
/// `gamma` until the two-level blocks saturate (population split exactly in
/// half — the extraction recursion), verifies the residual coherence, and
/// resets the flux qubit. When `schedule.spin_dephasing` is set, a second
/// field-free window dephases the spins, which redistributes each
/// magnetization column uniformly (the column-mixing recursion). Sector
/// populations are compared after every cycle; the run passes when the
/// largest deviation stays below `1e-3` and every window saturated.
pub fn engine_equivalence(
    m_spins: usize,
    g: f64,
    gamma: f64,
    schedule: &EquivalenceSchedule,
) -> Result<EquivalenceReport> {
    if m_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if m_spins > MAX_EQUIVALENCE_SPINS {
        return Err(Error::Unsupported {
            what: format!(
                "cross-engine comparison limited to {MAX_EQUIVALENCE_SPINS} spins, got {m_spins}"
            ),
        });
    }
    if !(g > 0.0) {
        return Err(Error::NonPositive {
            name: "g",
            value: g,
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::NonPositive {
            name: "gamma",
            value: gamma,
        });
    }
    if schedule.n_cycles == 0 {
        return Err(Error::InvalidSchedule {
            reason: "n_cycles must be at least 1".into(),
        });
    }
    if !(schedule.decay_constants_per_window > 0.0) {
        return Err(Error::NonPositive {
            name: "decay_constants_per_window",
            value: schedule.decay_constants_per_window,
        });
    }
    if !(schedule.rate_delta_product > 0.0 && schedule.rate_delta_product < 0.5) {
        return Err(Error::InvalidSchedule {
            reason: format!(
                "rate_delta_product {} outside (0, 0.5)",
                schedule.rate_delta_product
            ),
        });
    }
    if let Some(gp) = schedule.spin_dephasing {
        if !(gp > 0.0) {
            return Err(Error::NonPositive {
                name: "spin_dephasing",
                value: gp,
            });
        }
    }

    let basis = build_sector_basis(m_spins)?;
    let m = m_spins;
    let n_qubits = m + 1;
    let dim = 1usize << n_qubits;

    // Extraction window: exchange coupling plus flux-qubit dephasing.
    let ens_a = SpinEnsemble::new(
        vec![0.0; m],
        vec![g; m],
        {
            let mut gt = vec![0.0; m + 1];
            gt[0] = gamma;
            gt
        },
        vec![0.0; m + 1],
    )?;
    let h_a = build_effective_hamiltonian(&ens_a)?;

    // Slowest two-level block relaxation sets the window length.
    let mut slowest = 2.0 * gamma; // coherence floor
    for j2 in sector_j2s(m) {
        let mut m2 = -(j2 as i32) + 2;
        while m2 <= j2 as i32 {
            let l = SectorIndex { j2, m2 }.ladder_coeff();
            let (slow, _) = block_decay_rates(g, gamma, l);
            slowest = slowest.min(-slow.re);
            m2 += 2;
        }
    }
    let t_a = schedule.decay_constants_per_window / slowest;
    let delta_a = schedule.rate_delta_product / gamma;
    let n_sub_a = (t_a / delta_a).ceil() as usize;
    let prop_a = Propagator::new(&h_a, delta_a)?;

    // Optional column-mixing window: field-free spin dephasing.
    let window_b = match schedule.spin_dephasing {
        Some(gp) => {
            let ens_b = SpinEnsemble::new(
                vec![0.0; m],
                vec![0.0; m],
                {
                    let mut gt = vec![0.0; m + 1];
                    for r in gt.iter_mut().skip(1) {
                        *r = gp;
                    }
                    gt
                },
                vec![0.0; m + 1],
            )?;
            let delta_b = schedule.rate_delta_product / gp;
            // Slowest coherence: a single differing spin bit decays at 2 gp.
            let t_b = schedule.decay_constants_per_window / (2.0 * gp);
            let n_sub_b = (t_b / delta_b).ceil() as usize;
            let h_b: Operator = Array2::zeros((dim, dim));
            Some((ens_b, Propagator::new(&h_b, delta_b)?, n_sub_b))
        }
        None => None,
    };

    let mut rho = DensityMatrix::ground_fq_mixed_spins(m)?;
    let mut reference = SectorState::uniform(m)?;

    let mut cycles = Vec::with_capacity(schedule.n_cycles);
    let mut breakdown: Vec<SectorDeviation> = Vec::new();
    let mut max_deviation = 0.0f64;
    let mut max_residual = 0.0f64;

    for cycle in 1..=schedule.n_cycles {
        for _ in 0..n_sub_a {
            rho = evolve_substep_with(&rho, &prop_a, &ens_a)?;
        }
        max_residual = max_residual.max(max_fq_coherence(rho.matrix()));
        rho = reset_flux_qubit(&rho);
        reference = step1_update(&reference);

        if let Some((ens_b, prop_b, n_sub_b)) = &window_b {
            for _ in 0..*n_sub_b {
                rho = evolve_substep_with(&rho, prop_b, ens_b)?;
            }
            max_residual = max_residual.max(max_offdiagonal(rho.matrix()));
            reference = step2_update(&reference);
        }

        let marginal = rho.spin_marginal();
        let engine_p = basis.project_per_copy(&marginal)?;
        breakdown = engine_p
            .iter()
            .map(|&(sector, engine)| {
                let reference = reference.get(sector.j2, sector.m2).expect("valid sector");
                SectorDeviation {
                    j2: sector.j2,
                    m2: sector.m2,
                    engine,
                    reference,
                    deviation: (engine - reference).abs(),
                }
            })
            .collect();
        let worst = breakdown
            .iter()
            .copied()
            .max_by(|a, b| a.deviation.total_cmp(&b.deviation))
            .expect("at least one sector");
        max_deviation = max_deviation.max(worst.deviation);
        cycles.push(CycleComparison {
            cycle,
            max_deviation: worst.deviation,
            worst,
        });
    }

    let mut p_up_engine = 0.0;
    for k in 1..=m {
        p_up_engine += rho.excited_population(k)? / m as f64;
    }

    Ok(EquivalenceReport {
        m_spins: m,
        spin_dephasing_enabled: window_b.is_some(),
        threshold: EQUIVALENCE_TOL,
        max_deviation,
        max_residual_coherence: max_residual,
        coherence_tolerance: SATURATION_COHERENCE_TOL,
        cycles,
        breakdown,
        final_p_up_engine: p_up_engine,
        final_p_up_reference: reference.p_up(),
        passed: max_deviation < EQUIVALENCE_TOL && max_residual < SATURATION_COHERENCE_TOL,
    })
}

/// One sector's entry in the basis audit.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SectorSummary {
    pub j2: u32,
    pub m2: i32,
    pub multiplicity: usize,
    pub expected_multiplicity: usize,
}

/// Construction audit of the sector basis.
#[derive(Debug, Clone, Serialize)]
pub struct BasisAudit {
    pub m_spins: usize,
    pub total_dimension: usize,
    pub orthonormality_defect: f64,
    pub max_s2_residual: f64,
    pub max_sz_residual: f64,
    pub sectors: Vec<SectorSummary>,
    pub passed: bool,
}

/// Column-mixing audit of one sector projector.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Step2Audit {
    pub j2: u32,
    pub m2: i32,
    /// Largest deviation of the dephased diagonal from the column-uniform
    /// closed form.
    pub max_deviation: f64,
    pub passed: bool,
}

/// Aggregate pass/fail report over every oracle, serialized as JSON by the
/// command-line `xcheck` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct XcheckReport {
    pub m_spins: usize,
    pub basis: BasisAudit,
    pub step2: Vec<Step2Audit>,
    pub permutation: Vec<PermutationReport>,
    /// Cross-engine run without spin dephasing (ensembles of at most
    /// [`MAX_EQUIVALENCE_SPINS`] spins; `None` beyond).
    pub equivalence_extraction: Option<EquivalenceReport>,
    /// Cross-engine run with spin dephasing enabled.
    pub equivalence_with_spin_dephasing: Option<EquivalenceReport>,
    pub passed: bool,
}

/// Run every oracle for `m_spins` spins and aggregate the verdicts.
pub fn run_all(m_spins: usize) -> Result<XcheckReport> {
    let basis = build_sector_basis(m_spins)?;
    let (max_s2, max_sz) = basis.eigen_residuals()?;
    let ortho = basis.orthonormality_defect();
    let mut sectors = Vec::new();
    let mut total_dim = 0usize;
    let mut basis_ok = ortho < 1e-10 && max_s2 < 1e-8 && max_sz < 1e-10;
    for span in basis.spans() {
        let expected = degeneracy_f64(m_spins, span.sector.j2)? as usize;
        total_dim += span.vectors.len();
        basis_ok &= span.vectors.len() == expected;
        sectors.push(SectorSummary {
            j2: span.sector.j2,
            m2: span.sector.m2,
            multiplicity: span.vectors.len(),
            expected_multiplicity: expected,
        });
    }
    basis_ok &= total_dim == 1 << m_spins;
    let basis_audit = BasisAudit {
        m_spins,
        total_dimension: total_dim,
        orthonormality_defect: ortho,
        max_s2_residual: max_s2,
        max_sz_residual: max_sz,
        sectors,
        passed: basis_ok,
    };

    let mut step2 = Vec::new();
    let mut permutation = Vec::new();
    for span in basis.spans() {
        let (j2, m2) = (span.sector.j2, span.sector.m2);
        let rho = basis.sector_projector(j2, m2)?;
        let audit = match brute_force_step2(&rho) {
            Ok(dephased) => {
                let c = ((m2 + m_spins as i32) / 2) as usize;
                let col_dim = binomial(m_spins, c).to_f64().unwrap();
                let target = span.vectors.len() as f64 / col_dim;
                let mut dev = 0.0f64;
                for i in 0..dephased.nrows() {
                    let expected = if i.count_ones() as usize == c {
                        target
                    } else {
                        0.0
                    };
                    dev = dev.max((dephased[[i, i]].re - expected).abs());
                    dev = dev.max(dephased[[i, i]].im.abs());
                }
                Step2Audit {
                    j2,
                    m2,
                    max_deviation: dev,
                    passed: dev < 1e-10,
                }
            }
            Err(_) => Step2Audit {
                j2,
                m2,
                max_deviation: f64::INFINITY,
                passed: false,
            },
        };
        step2.push(audit);
        permutation.push(permutation_invariance_check(m_spins, j2, m2)?);
    }

    let (equivalence_extraction, equivalence_with_spin_dephasing) =
        if m_spins <= MAX_EQUIVALENCE_SPINS {
            let g = 5_000.0;
            let gamma = 2_000.0;
            let plain = engine_equivalence(m_spins, g, gamma, &EquivalenceSchedule::default())?;
            let dephased = engine_equivalence(
                m_spins,
                g,
                gamma,
                &EquivalenceSchedule {
                    spin_dephasing: Some(gamma),
                    ..EquivalenceSchedule::default()
                },
            )?;
            (Some(plain), Some(dephased))
        } else {
            (None, None)
        };

    let passed = basis_audit.passed
        && step2.iter().all(|a| a.passed)
        && permutation.iter().all(|p| p.passed)
        && equivalence_extraction.as_ref().map_or(true, |r| r.passed)
        && equivalence_with_spin_dephasing
            .as_ref()
            .map_or(true, |r| r.passed);

    Ok(XcheckReport {
        m_spins,
        basis: basis_audit,
        step2,
        permutation,
        equivalence_extraction,
        equivalence_with_spin_dephasing,
        passed,
    })
}
