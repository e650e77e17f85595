//! Exact engine for permutation-symmetric ensembles.
//!
//! When all spins share the same detuning and coupling, the collective state
//! decomposes into angular-momentum sectors `(j, m)` with degeneracies `d_j`,
//! and the idealized cooling protocol acts on per-state populations
//! `p[j][m]` through two simple maps:
//!
//! * **Excitation extraction** ([`step1_update`]): each cycle, every state
//!   that can emit (`m > -j`) sends half its population one step down in
//!   `m`; states with `m = -j` are dark and keep theirs.
//! * **Sector remixing** ([`step2_update`]): full dephasing in the binary
//!   basis spreads each magnetization column's population uniformly over the
//!   column, reconnecting dark sectors to bright ones.
//!
//! Quantum numbers are stored doubled (`j2 = 2j`, `m2 = 2m`) so that even
//! and odd ensemble sizes use the same integer bookkeeping.
//!
//! All maps conserve the degeneracy-weighted total population exactly (see
//! [`exact`] for an arbitrary-precision rational mirror used to pin this
//! down in tests).

pub mod exact;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Doubled quantum numbers `(2j, 2m)` of an angular-momentum sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SectorIndex {
    /// Twice the total angular momentum, `0 <= j2 <= M`, same parity as `M`.
    pub j2: u32,
    /// Twice the magnetization, `-j2 <= m2 <= j2`, same parity as `j2`.
    pub m2: i32,
}

impl SectorIndex {
    /// Validate against an ensemble of `m_spins` spins.
    pub fn check(&self, m_spins: usize) -> Result<()> {
        let valid = (self.j2 as usize) <= m_spins
            && (self.j2 as usize) % 2 == m_spins % 2
            && self.m2.unsigned_abs() <= self.j2
            && (self.m2.rem_euclid(2)) as u32 == self.j2 % 2;
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidSector {
                m_spins,
                j2: self.j2 as i64,
                m2: self.m2 as i64,
            })
        }
    }

    /// `l_{j,m} = sqrt(j(j+1) - m(m-1))`, the ladder matrix element for the
    /// transition `|j, m> -> |j, m-1>`.
    pub fn ladder_coeff(&self) -> f64 {
        let j2 = self.j2 as i64;
        let m2 = self.m2 as i64;
        let l2 = j2 * (j2 + 2) - m2 * (m2 - 2);
        (l2 as f64 / 4.0).sqrt()
    }

    /// Whether the sector can emit an excitation (`m > -j`).
    pub fn can_emit(&self) -> bool {
        self.m2 > -(self.j2 as i32)
    }
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Number of inequivalent `j`-sectors (degeneracy `d_j`) for `m_spins`
/// spins: `d_j = C(M, M/2 - j) - C(M, M/2 - j - 1)`, exact for any size.
pub fn degeneracy(m_spins: usize, j2: u32) -> Result<BigUint> {
    if m_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if (j2 as usize) > m_spins || (j2 as usize) % 2 != m_spins % 2 {
        return Err(Error::InvalidSector {
            m_spins,
            j2: j2 as i64,
            m2: 0,
        });
    }
    let k = (m_spins - j2 as usize) / 2;
    let main = binomial(m_spins, k);
    let sub = if k == 0 {
        BigUint::zero()
    } else {
        binomial(m_spins, k - 1)
    };
    Ok(main - sub)
}

/// `d_j` as a float (exact for small ensembles, correctly rounded beyond).
pub fn degeneracy_f64(m_spins: usize, j2: u32) -> Result<f64> {
    Ok(degeneracy(m_spins, j2)?.to_f64().unwrap_or(f64::INFINITY))
}

/// The `j2` values present for `m_spins` spins, descending from `m_spins`
/// to 0 or 1.
pub fn sector_j2s(m_spins: usize) -> Vec<u32> {
    (0..=m_spins / 2)
        .map(|i| (m_spins - 2 * i) as u32)
        .collect()
}

/// Per-state populations `p[j][m]` of a permutation-symmetric mixed state.
///
/// The normalization carries the degeneracies: `sum_{j,m} d_j p[j][m] = 1`.
/// Row `i` holds `j2 = M - 2i`; within a row, entries run from `m2 = j2`
/// down to `m2 = -j2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    m_spins: usize,
    p: Vec<Vec<f64>>,
}

/// Tolerance on the degeneracy-weighted normalization of a [`SectorState`].
pub const SECTOR_NORM_TOL: f64 = 1e-12;

impl SectorState {
    /// Maximally mixed state: every one of the `2^M` collective states has
    /// population `2^-M`.
    pub fn uniform(m_spins: usize) -> Result<Self> {
        if m_spins == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let val = 0.5f64.powi(m_spins as i32);
        let p = sector_j2s(m_spins)
            .iter()
            .map(|&j2| vec![val; j2 as usize + 1])
            .collect();
        Ok(SectorState { m_spins, p })
    }

    /// Build from explicit rows (same layout as the internal storage);
    /// validates shape, nonnegativity, and normalization.
    pub fn from_rows(m_spins: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if m_spins == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let j2s = sector_j2s(m_spins);
        if rows.len() != j2s.len() {
            return Err(Error::InvalidSectorState {
                reason: format!("expected {} j-rows, got {}", j2s.len(), rows.len()),
            });
        }
        for (row, &j2) in rows.iter().zip(&j2s) {
            if row.len() != j2 as usize + 1 {
                return Err(Error::InvalidSectorState {
                    reason: format!("row j2 = {j2} must have {} entries", j2 + 1),
                });
            }
            if let Some(&bad) = row.iter().find(|&&x| !(x >= 0.0)) {
                return Err(Error::InvalidSectorState {
                    reason: format!("negative or NaN population {bad:.3e} in row j2 = {j2}"),
                });
            }
        }
        let state = SectorState { m_spins, p: rows };
        let norm = state.weighted_norm();
        if (norm - 1.0).abs() > SECTOR_NORM_TOL {
            return Err(Error::InvalidSectorState {
                reason: format!("weighted norm {norm:.15} != 1"),
            });
        }
        Ok(state)
    }

    /// Number of spins.
    pub fn num_spins(&self) -> usize {
        self.m_spins
    }

    /// Population of state `(j2, m2)`.
    pub fn get(&self, j2: u32, m2: i32) -> Result<f64> {
        let idx = SectorIndex { j2, m2 };
        idx.check(self.m_spins)?;
        let row = (self.m_spins - j2 as usize) / 2;
        let col = ((j2 as i32 - m2) / 2) as usize;
        Ok(self.p[row][col])
    }

    /// Iterate over `(sector, population)` pairs, `j` descending then `m`
    /// descending.
    pub fn iter(&self) -> impl Iterator<Item = (SectorIndex, f64)> + '_ {
        self.p.iter().enumerate().flat_map(move |(i, row)| {
            let j2 = (self.m_spins - 2 * i) as u32;
            row.iter().enumerate().map(move |(a, &v)| {
                (
                    SectorIndex {
                        j2,
                        m2: j2 as i32 - 2 * a as i32,
                    },
                    v,
                )
            })
        })
    }

    /// Degeneracy-weighted total population; 1 for a valid state.
    pub fn weighted_norm(&self) -> f64 {
        self.iter()
            .map(|(idx, v)| degeneracy_f64(self.m_spins, idx.j2).unwrap() * v)
            .sum()
    }

    /// Mean excited-state probability per spin.
    ///
    /// A state in column `m` has `(m2 + M) / 2` excited spins.
    pub fn p_up(&self) -> f64 {
        let m = self.m_spins as f64;
        self.iter()
            .map(|(idx, v)| {
                let d = degeneracy_f64(self.m_spins, idx.j2).unwrap();
                let excited = (idx.m2 as f64 + m) / 2.0;
                d * v * excited / m
            })
            .sum()
    }
}

/// One extraction cycle: every emitting state `(j, m > -j)` moves half its
/// population to `(j, m-1)`; dark states (`m = -j`) are untouched.
///
/// Written in flow form (outflow subtracted exactly where it is added) so
/// the weighted norm is conserved to the last bit.
pub fn step1_update(s: &SectorState) -> SectorState {
    let mut p = s.p.clone();
    for (i, row) in p.iter_mut().enumerate() {
        let j2 = (s.m_spins - 2 * i) as u32;
        let len = row.len();
        // Entry a holds m2 = j2 - 2a; the last entry (a = j2) is m = -j.
        // Sweep from the bottom so each outflow lands before its source
        // is rewritten — equivalently, compute outflows first.
        let outflow: Vec<f64> = (0..len)
            .map(|a| if a + 1 < len { row[a] / 2.0 } else { 0.0 })
            .collect();
        let _ = j2;
        for a in 0..len {
            let inflow = if a == 0 { 0.0 } else { outflow[a - 1] };
            row[a] = row[a] - outflow[a] + inflow;
        }
    }
    SectorState {
        m_spins: s.m_spins,
        p,
    }
}

/// One full-dephasing remix: within each magnetization column, the total
/// population is spread uniformly over the column's `C(M, m + M/2)` states.
///
/// Idempotent, and conserves every column total exactly.
pub fn step2_update(s: &SectorState) -> SectorState {
    let m = s.m_spins;
    let pi = column_distribution(s);
    let mut out = Vec::with_capacity(s.p.len());
    for &j2 in &sector_j2s(m) {
        let row = (0..=j2)
            .map(|a| {
                let m2 = j2 as i32 - 2 * a as i32;
                let c = ((m2 + m as i32) / 2) as usize;
                pi.pi[c] / binomial(m, c).to_f64().unwrap()
            })
            .collect();
        out.push(row);
    }
    SectorState { m_spins: m, p: out }
}

/// Population per magnetization column, indexed by excited-spin count
/// `c = 0..=M` (so `m2 = 2c - M`).
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDistribution {
    m_spins: usize,
    pi: Vec<f64>,
}

impl ColumnDistribution {
    /// The distribution of the maximally mixed state:
    /// `pi_c = C(M, c) / 2^M`.
    pub fn uniform(m_spins: usize) -> Result<Self> {
        if m_spins == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let denom = 0.5f64.powi(m_spins as i32);
        let pi = (0..=m_spins)
            .map(|c| binomial(m_spins, c).to_f64().unwrap() * denom)
            .collect();
        Ok(ColumnDistribution { m_spins, pi })
    }

    /// Build from explicit column populations (index = excited count).
    pub fn from_probs(m_spins: usize, pi: Vec<f64>) -> Result<Self> {
        if pi.len() != m_spins + 1 {
            return Err(Error::LengthMismatch {
                name: "pi",
                expected: m_spins + 1,
                got: pi.len(),
            });
        }
        if let Some(&bad) = pi.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::InvalidSectorState {
                reason: format!("negative or NaN column population {bad:.3e}"),
            });
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > SECTOR_NORM_TOL {
            return Err(Error::InvalidSectorState {
                reason: format!("column populations sum to {sum:.15}, not 1"),
            });
        }
        Ok(ColumnDistribution { m_spins, pi })
    }

    /// Number of spins.
    pub fn num_spins(&self) -> usize {
        self.m_spins
    }

    /// Column population by excited count.
    pub fn by_excited_count(&self, c: usize) -> f64 {
        self.pi[c]
    }

    /// Column population by doubled magnetization.
    pub fn by_m2(&self, m2: i32) -> Result<f64> {
        let shifted = m2 + self.m_spins as i32;
        if shifted < 0 || shifted > 2 * self.m_spins as i32 || shifted % 2 != 0 {
            return Err(Error::InvalidSector {
                m_spins: self.m_spins,
                j2: -1,
                m2: m2 as i64,
            });
        }
        Ok(self.pi[(shifted / 2) as usize])
    }

    /// All column populations, ascending in excited count.
    pub fn probs(&self) -> &[f64] {
        &self.pi
    }

    /// Total population (1 up to rounding).
    pub fn total(&self) -> f64 {
        self.pi.iter().sum()
    }

    /// Mean excited-state probability per spin.
    pub fn p_up(&self) -> f64 {
        let m = self.m_spins as f64;
        self.pi
            .iter()
            .enumerate()
            .map(|(c, &v)| v * c as f64 / m)
            .sum()
    }
}

/// Collapse a sector state to its magnetization-column totals:
/// `Pi_m = sum_j d_j p[j][m]`.
pub fn column_distribution(s: &SectorState) -> ColumnDistribution {
    let m = s.m_spins;
    let mut pi = vec![0.0; m + 1];
    for (idx, v) in s.iter() {
        let c = ((idx.m2 + m as i32) / 2) as usize;
        pi[c] += degeneracy_f64(m, idx.j2).unwrap() * v;
    }
    ColumnDistribution { m_spins: m, pi }
}

/// One combined extraction-plus-remix cycle on column totals.
///
/// After a remix the column is uniform, so the fraction of its population
/// sitting in dark states is `D(m) / C(M, c)`, where `D(m) = d_|m|` for
/// `m <= 0` (the `j = -m` sector is dark) and `0` for `m > 0`. The bright
/// remainder emits with probability 1/2:
///
/// ```text
/// T_c   = (1/2) (1 - D/C) Pi_c      (outflow of column c)
/// Pi'_c = Pi_c - T_c + T_{c+1}
/// ```
pub fn pi_update(pi: &ColumnDistribution) -> ColumnDistribution {
    let m = pi.m_spins;
    let outflow: Vec<f64> = (0..=m)
        .map(|c| {
            let m2 = 2 * c as i32 - m as i32;
            let dark = if m2 <= 0 {
                degeneracy_f64(m, (-m2) as u32).unwrap()
            } else {
                0.0
            };
            let col = binomial(m, c).to_f64().unwrap();
            0.5 * (1.0 - dark / col) * pi.pi[c]
        })
        .collect();
    let next = (0..=m)
        .map(|c| {
            let inflow = if c + 1 <= m { outflow[c + 1] } else { 0.0 };
            pi.pi[c] - outflow[c] + inflow
        })
        .collect();
    ColumnDistribution {
        m_spins: m,
        pi: next,
    }
}

/// Cooling floor of extraction-only operation.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkLimit {
    /// `(j2, w_j)` pairs: the probability `w_j = d_j (2j+1) / 2^M` that a
    /// maximally mixed ensemble starts in sector `j`.
    pub sector_weights: Vec<(u32, f64)>,
    /// Asymptotic mean excited probability per spin:
    /// `sum_j w_j (1 - 2j/M) / 2`.
    pub p_up_infinity: f64,
}

/// Where extraction alone gets stuck: every sector `j` funnels into its
/// dark state `|j, -j>`, which still holds `(M/2 - j)` excitations.
pub fn dark_limit(m_spins: usize) -> Result<DarkLimit> {
    if m_spins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let denom = 0.5f64.powi(m_spins as i32);
    let mut weights = Vec::new();
    let mut p_inf = 0.0;
    for &j2 in &sector_j2s(m_spins) {
        let w = degeneracy_f64(m_spins, j2)? * (j2 as f64 + 1.0) * denom;
        weights.push((j2, w));
        p_inf += w * 0.5 * (1.0 - j2 as f64 / m_spins as f64);
    }
    Ok(DarkLimit {
        sector_weights: weights,
        p_up_infinity: p_inf,
    })
}

/// Which maps make up one idealized protocol cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdealizedMode {
    /// Extraction only: saturates at the dark-state floor.
    Step1Only,
    /// Extraction plus remix: cools to zero.
    Step1Plus2,
}

/// Run the idealized protocol from the maximally mixed state and return the
/// mean excited probability per spin after each cycle (entry 0 is the
/// initial 1/2).
///
/// Extraction-only mode iterates the per-sector map; the combined mode
/// iterates the column map, which is exactly equivalent for column-uniform
/// states (the remix makes every state column-uniform, and the initial
/// mixed state already is).
pub fn idealized_protocol(
    m_spins: usize,
    n_cycles: usize,
    mode: IdealizedMode,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n_cycles + 1);
    match mode {
        IdealizedMode::Step1Only => {
            let mut s = SectorState::uniform(m_spins)?;
            out.push(s.p_up());
            for _ in 0..n_cycles {
                s = step1_update(&s);
                out.push(s.p_up());
            }
        }
        IdealizedMode::Step1Plus2 => {
            let mut pi = ColumnDistribution::uniform(m_spins)?;
            out.push(pi.p_up());
            for _ in 0..n_cycles {
                pi = pi_update(&pi);
                out.push(pi.p_up());
            }
        }
    }
    Ok(out)
}

/// State of one `(j, m)` two-level block during an interaction window: the
/// flux qubit is ground with the ensemble at `|j, m>` (population `a`), or
/// excited with the ensemble dropped to `|j, m-1>` (population `b`), with
/// coherence `c` between the two.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockState {
    /// Sector of the upper level (the one the ground-state qubit sees).
    pub sector: SectorIndex,
    /// Population of `|ground, (j, m)>`.
    pub a: f64,
    /// Population of `|excited, (j, m-1)>`.
    pub b: f64,
    /// Coherence between the two levels.
    pub c: num_complex::Complex64,
}

/// The two relaxation rates of a block: `-gamma ± sqrt(gamma^2 - 4 g^2 l^2)`
/// (complex for the underdamped case).
pub fn block_decay_rates(
    g: f64,
    gamma: f64,
    l: f64,
) -> (num_complex::Complex64, num_complex::Complex64) {
    let disc = num_complex::Complex64::new(gamma * gamma - 4.0 * g * g * l * l, 0.0);
    let root = disc.sqrt();
    let minus_gamma = num_complex::Complex64::new(-gamma, 0.0);
    (minus_gamma + root, minus_gamma - root)
}

/// Evolve one block for time `t` under exchange coupling `g` (scaled by the
/// sector's ladder coefficient) and flux-qubit dephasing `gamma`.
///
/// Closed form of the block equations
///
/// ```text
/// da/dt = -2 g l Im(c)         d(Re c)/dt = -2 gamma Re(c)
/// db/dt = +2 g l Im(c)         d(Im c)/dt = g l (a - b) - 2 gamma Im(c)
/// ```
///
/// via the matrix exponential of `[[0, -4gl], [gl, -2gamma]]` acting on
/// `(a - b, Im c)`; `a + b` is conserved.
pub fn block_evolve(block: &BlockState, g: f64, gamma: f64, t: f64) -> Result<BlockState> {
    if !(gamma >= 0.0) {
        return Err(Error::Negative {
            name: "gamma",
            value: gamma,
        });
    }
    if !(t >= 0.0) {
        return Err(Error::Negative {
            name: "t",
            value: t,
        });
    }
    if !(block.a >= 0.0) || !(block.b >= 0.0) {
        return Err(Error::InvalidSectorState {
            reason: format!(
                "block populations must be nonnegative: a = {}, b = {}",
                block.a, block.b
            ),
        });
    }
    if block.c.norm_sqr() > block.a * block.b * (1.0 + 1e-9) + 1e-15 {
        return Err(Error::InvalidSectorState {
            reason: format!(
                "block coherence too large for its populations: |c|^2 = {:.6e} > a b = {:.6e}",
                block.c.norm_sqr(),
                block.a * block.b
            ),
        });
    }
    if !block.sector.can_emit() {
        return Err(Error::InvalidSector {
            m_spins: 0,
            j2: block.sector.j2 as i64,
            m2: block.sector.m2 as i64,
        });
    }
    let l = block.sector.ladder_coeff();
    let gl = g * l;

    // exp(A t) with A = -gamma I + B, B = [[gamma, -4gl], [gl, -gamma]],
    // B^2 = (gamma^2 - 4 gl^2) I = mu^2 I:
    //   exp(A t) = e^{-gamma t} (cosh(mu t) I + sinh(mu t)/mu B)
    let mu2 = gamma * gamma - 4.0 * gl * gl;
    let (ch, sh_over_mu) = if mu2.abs() * t * t < 1e-12 {
        // Degenerate (critically damped) branch by series, stable at mu ~ 0.
        let x2 = mu2 * t * t;
        (
            1.0 + x2 / 2.0 + x2 * x2 / 24.0,
            t * (1.0 + x2 / 6.0 + x2 * x2 / 120.0),
        )
    } else if mu2 > 0.0 {
        let mu = mu2.sqrt();
        (f64::cosh(mu * t), f64::sinh(mu * t) / mu)
    } else {
        let nu = (-mu2).sqrt();
        (f64::cos(nu * t), f64::sin(nu * t) / nu)
    };
    let damp = (-gamma * t).exp();

    let u0 = block.a - block.b;
    let v0 = block.c.im;
    let u = damp * ((ch + sh_over_mu * gamma) * u0 - sh_over_mu * 4.0 * gl * v0);
    let v = damp * (sh_over_mu * gl * u0 + (ch - sh_over_mu * gamma) * v0);
    let s = block.a + block.b;
    let re_c = block.c.re * (-2.0 * gamma * t).exp();

    Ok(BlockState {
        sector: block.sector,
        a: (s + u) / 2.0,
        b: (s - u) / 2.0,
        c: num_complex::Complex64::new(re_c, v),
    })
}
