//! Device model: geometry-dependent couplings, effective Hamiltonian,
//! thermal populations, and polarization readout.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::constants::{GAMMA_E, HBAR, K_B, MU_0};
use crate::error::{Error, Result};
use crate::lindblad::DensityMatrix;
use crate::operator::{embed, qubit_bit, sigma_minus, sigma_plus, sigma_z, Operator};

/// Device and schedule parameters.
///
/// Units: `r0` in meters, `i_p` in amperes, `gap`/`epsilon` in rad/s,
/// all times in seconds.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PhysicalConfig {
    /// Half-side length of the square loop (m).
    pub r0: f64,
    /// Persistent current (A).
    pub i_p: f64,
    /// Tunneling energy gap of the flux qubit, angular frequency (rad/s).
    pub gap: f64,
    /// Energy bias / detuning parameter of the flux qubit (rad/s).
    pub epsilon: f64,
    /// Flux-qubit longitudinal relaxation time (s).
    pub t1_fq: f64,
    /// Flux-qubit transverse relaxation time (s).
    pub t2_fq: f64,
    /// Electron-spin longitudinal relaxation time (s).
    pub t1_e: f64,
    /// Electron-spin transverse relaxation time (s).
    pub t2_e: f64,
    /// Flux-qubit reset duration (s); spins are frozen while it elapses.
    pub t_i: f64,
    /// Free-interaction interval between resets (s).
    pub t_int: f64,
    /// Integration substep (s).
    pub delta: f64,
}

impl Default for PhysicalConfig {
    /// Reference parameter set used by all bundled scenarios.
    fn default() -> Self {
        PhysicalConfig {
            r0: 3.0e-6,
            i_p: 180e-9,
            gap: 2.0 * std::f64::consts::PI * 5.37e9,
            epsilon: 2.0 * std::f64::consts::PI * 0.112e9,
            t1_fq: 200e-6,
            t2_fq: 30e-6,
            t1_e: 1.0,
            t2_e: 1.0e-3,
            t_i: 5e-6,
            t_int: 95e-6,
            delta: 5e-6,
        }
    }
}

impl PhysicalConfig {
    /// Validate hard constraints and return soft warnings.
    ///
    /// Errors on nonpositive lengths/times and on `delta > t_int`; returns
    /// warning strings when the substep is too coarse for the fastest rate
    /// or coupling (`delta * max(rate, g) > 0.05`).
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("r0", self.r0),
            ("I_p", self.i_p),
            ("T1_fq", self.t1_fq),
            ("T2_fq", self.t2_fq),
            ("T1_e", self.t1_e),
            ("T2_e", self.t2_e),
            ("t_i", self.t_i),
            ("t_int", self.t_int),
            ("delta", self.delta),
        ] {
            if !(v > 0.0) {
                return Err(Error::NonPositive { name, value: v });
            }
        }
        if self.delta > self.t_int {
            return Err(Error::InvalidSchedule {
                reason: format!(
                    "substep delta = {:.3e} s exceeds interaction interval t_int = {:.3e} s",
                    self.delta, self.t_int
                ),
            });
        }
        let mut warnings = Vec::new();
        let g0 = coupling_strength(self, 0.0, 0.0)?;
        let fastest = [
            1.0 / self.t1_fq,
            1.0 / self.t2_fq,
            1.0 / self.t1_e,
            1.0 / self.t2_e,
            g0,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if self.delta * fastest > 0.05 {
            warnings.push(format!(
                "substep delta = {:.3e} s is coarse: delta * fastest scale = {:.3} > 0.05",
                self.delta,
                self.delta * fastest
            ));
        }
        Ok(warnings)
    }
}

/// Spin–qubit coupling at position `(x, y)` inside the square loop, rad/s.
///
/// Each loop side is modeled as an infinite straight wire; the field at the
/// spin is the sum of the four wire fields at perpendicular distances
/// `r0 - x`, `r0 + x`, `r0 - y`, `r0 + y`:
///
/// ```text
/// g = (epsilon / sqrt(epsilon^2 + gap^2)) * (gamma_e * mu0 * I_p / 2 pi) * sum_i 1 / r_i
/// ```
///
/// Positions on or outside the boundary are rejected: the wire model
/// diverges there.
pub fn coupling_strength(cfg: &PhysicalConfig, x: f64, y: f64) -> Result<f64> {
    if !(x.abs() < cfg.r0 && y.abs() < cfg.r0) {
        return Err(Error::PositionOutsideLoop { x, y, r0: cfg.r0 });
    }
    let norm = (cfg.epsilon * cfg.epsilon + cfg.gap * cfg.gap).sqrt();
    if norm == 0.0 {
        return Err(Error::NonPositive {
            name: "sqrt(epsilon^2 + gap^2)",
            value: 0.0,
        });
    }
    let tilt = cfg.epsilon / norm;
    let field = GAMMA_E * MU_0 * cfg.i_p / (2.0 * std::f64::consts::PI);
    // Grouped per axis so the x <-> y symmetry is bit-exact.
    let inv_x = 1.0 / (cfg.r0 - x) + 1.0 / (cfg.r0 + x);
    let inv_y = 1.0 / (cfg.r0 - y) + 1.0 / (cfg.r0 + y);
    Ok(tilt * field * (inv_x + inv_y))
}

/// One flux qubit plus `M` electron spins with their couplings and decay
/// rates.
///
/// Index convention for the rate arrays: entry 0 is the flux qubit, entries
/// `1..=M` are the spins (matching the register layout where qubit 0 is the
/// flux qubit).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinEnsemble {
    /// Spin detunings ω'_k (rad/s), length `M`.
    pub omega_prime: Vec<f64>,
    /// Couplings g_k (rad/s), length `M`.
    pub g: Vec<f64>,
    /// Transverse (dephasing) rates γ_T^(l) (1/s), length `M + 1`.
    pub gamma_t: Vec<f64>,
    /// Longitudinal (symmetric exchange) rates γ_L^(l) (1/s), length `M + 1`.
    pub gamma_l: Vec<f64>,
}

impl SpinEnsemble {
    /// Build a validated ensemble. `omega_prime` and `g` have one entry per
    /// spin; `gamma_t` and `gamma_l` have `M + 1` entries (flux qubit
    /// first). All rates must be nonnegative and `M >= 1`.
    pub fn new(
        omega_prime: Vec<f64>,
        g: Vec<f64>,
        gamma_t: Vec<f64>,
        gamma_l: Vec<f64>,
    ) -> Result<Self> {
        let m = omega_prime.len();
        if m == 0 {
            return Err(Error::EmptyEnsemble);
        }
        if g.len() != m {
            return Err(Error::LengthMismatch {
                name: "g",
                expected: m,
                got: g.len(),
            });
        }
        for (name, arr) in [("gamma_T", &gamma_t), ("gamma_L", &gamma_l)] {
            if arr.len() != m + 1 {
                return Err(Error::LengthMismatch {
                    name,
                    expected: m + 1,
                    got: arr.len(),
                });
            }
            if let Some(&bad) = arr.iter().find(|&&r| !(r >= 0.0)) {
                return Err(Error::Negative { name, value: bad });
            }
        }
        Ok(SpinEnsemble {
            omega_prime,
            g,
            gamma_t,
            gamma_l,
        })
    }

    /// Ensemble of `m` identical resonant spins with coupling `g0` and no
    /// dissipation anywhere.
    pub fn uniform_dissipation_free(m: usize, g0: f64) -> Result<Self> {
        SpinEnsemble::new(
            vec![0.0; m],
            vec![g0; m],
            vec![0.0; m + 1],
            vec![0.0; m + 1],
        )
    }

    /// Number of spins (flux qubit excluded).
    pub fn num_spins(&self) -> usize {
        self.omega_prime.len()
    }

    /// Register size: flux qubit plus spins.
    pub fn num_qubits(&self) -> usize {
        self.num_spins() + 1
    }

    /// True when every decay rate is zero (purely unitary dynamics).
    pub fn is_dissipation_free(&self) -> bool {
        self.gamma_t
            .iter()
            .chain(self.gamma_l.iter())
            .all(|&r| r == 0.0)
    }
}

/// How quoted relaxation times `T1`/`T2` map onto dissipator coefficients.
///
/// A dephasing term `gamma_T (sz rho sz - rho)` decays a lone qubit's
/// coherence at `2 gamma_T`, and the symmetric longitudinal term relaxes its
/// population toward 1/2 at `2 gamma_L`, so there are two natural readings of
/// "`gamma = 1/T`": take the coefficient itself to be `1/T`, or choose the
/// coefficient so the *observable* decay rate is `1/T`. Benchmarks published
/// with the first reading are only reproduced under it, hence the knob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateConvention {
    /// Coefficients equal the inverse times verbatim:
    /// `gamma_T = 1/T2`, `gamma_L = 1/T1`.
    #[default]
    CaptionLiteral,
    /// Observable decay rates equal the inverse times: coherence dies at
    /// `1/T2` and population relaxes at `1/T1`, so
    /// `gamma_T = 1/(2 T2)`, `gamma_L = 1/(2 T1)`.
    DecayCalibrated,
    /// Mixed mapping: dephasing calibrated (`gamma_T = 1/(2 T2)`),
    /// longitudinal verbatim (`gamma_L = 1/T1`). Matches the block-decay
    /// spectrum `(-gamma +- sqrt(gamma^2 - (16 g l)^2))/2` quoted for the
    /// overdamped extraction benchmark, and reproduces its saturation curves
    /// most closely.
    DephasingCalibrated,
}

impl RateConvention {
    /// Factor applied to `1/T2` to obtain the dephasing coefficient.
    pub fn dephasing_scale(self) -> f64 {
        match self {
            RateConvention::CaptionLiteral => 1.0,
            RateConvention::DecayCalibrated | RateConvention::DephasingCalibrated => 0.5,
        }
    }

    /// Factor applied to `1/T1` to obtain the longitudinal coefficient.
    pub fn longitudinal_scale(self) -> f64 {
        match self {
            RateConvention::CaptionLiteral | RateConvention::DephasingCalibrated => 1.0,
            RateConvention::DecayCalibrated => 0.5,
        }
    }

    /// Dissipator coefficient arrays `(gamma_t, gamma_l)` for a register of
    /// `m` spins, flux qubit first, built from the relaxation times in `cfg`.
    pub fn gamma_arrays(self, cfg: &PhysicalConfig, m: usize) -> (Vec<f64>, Vec<f64>) {
        let st = self.dephasing_scale();
        let sl = self.longitudinal_scale();
        let mut gamma_t = vec![st / cfg.t2_fq];
        let mut gamma_l = vec![sl / cfg.t1_fq];
        gamma_t.extend(std::iter::repeat_n(st / cfg.t2_e, m));
        gamma_l.extend(std::iter::repeat_n(sl / cfg.t1_e, m));
        (gamma_t, gamma_l)
    }
}

impl std::fmt::Display for RateConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RateConvention::CaptionLiteral => "caption-literal",
            RateConvention::DecayCalibrated => "decay-calibrated",
            RateConvention::DephasingCalibrated => "dephasing-calibrated",
        })
    }
}

impl std::str::FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caption-literal" => Ok(RateConvention::CaptionLiteral),
            "decay-calibrated" => Ok(RateConvention::DecayCalibrated),
            "dephasing-calibrated" => Ok(RateConvention::DephasingCalibrated),
            _ => Err(Error::UnknownConvention {
                kind: "rate_convention",
                value: s.to_string(),
                allowed: "caption-literal, decay-calibrated, dephasing-calibrated",
            }),
        }
    }
}

/// Normalization of the raising/lowering operators in the exchange term.
///
/// With `s+- = (sx +- i sy)/2` the flip-flop term `g (sp sm + sm sp)` has
/// matrix element `g` between `|10>` and `|01>`; with the unnormalized
/// `s+- = sx +- i sy` every element quadruples. The longitudinal dissipator
/// is trace-preserving only under the half-normalized reading, so this
/// convention applies to the coherent exchange term alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LadderConvention {
    /// `s+- = (sx +- i sy)/2`: exchange matrix element `g`.
    #[default]
    Half,
    /// `s+- = sx +- i sy`: exchange matrix element `4 g`. Matches the
    /// quoted block-decay spectrum `(16 g l)^2` of the extraction benchmark.
    Plain,
}

impl LadderConvention {
    /// Factor the exchange matrix element carries relative to `g`.
    pub fn exchange_scale(self) -> f64 {
        match self {
            LadderConvention::Half => 1.0,
            LadderConvention::Plain => 4.0,
        }
    }
}

impl std::fmt::Display for LadderConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LadderConvention::Half => "half",
            LadderConvention::Plain => "plain",
        })
    }
}

impl std::str::FromStr for LadderConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(LadderConvention::Half),
            "plain" => Ok(LadderConvention::Plain),
            _ => Err(Error::UnknownConvention {
                kind: "ladder_convention",
                value: s.to_string(),
                allowed: "half, plain",
            }),
        }
    }
}

/// Rotating-frame Hamiltonian of the register:
/// `H = sum_k w'_k sigma_z^(k) + sum_k g_k (sp^(0) sm^(k) + sm^(0) sp^(k))`,
/// with qubit 0 the flux qubit, `k = 1..=M` the spins, and half-normalized
/// ladder operators (exchange matrix element `g_k`).
pub fn build_effective_hamiltonian(ens: &SpinEnsemble) -> Result<Operator> {
    build_effective_hamiltonian_with(ens, LadderConvention::Half)
}

/// [`build_effective_hamiltonian`] with an explicit ladder-operator
/// convention for the exchange term.
pub fn build_effective_hamiltonian_with(
    ens: &SpinEnsemble,
    ladder: LadderConvention,
) -> Result<Operator> {
    let m = ens.num_spins();
    let n = ens.num_qubits();
    let dim = 1usize << n;
    let scale = ladder.exchange_scale();
    let mut h: Operator = Array2::zeros((dim, dim));
    for k in 0..m {
        let zk = embed(&sigma_z(), k + 1, n);
        h.scaled_add(C64::new(ens.omega_prime[k], 0.0), &zk);
        let exchange = embed(&sigma_plus(), 0, n).dot(&embed(&sigma_minus(), k + 1, n))
            + embed(&sigma_minus(), 0, n).dot(&embed(&sigma_plus(), k + 1, n));
        h.scaled_add(C64::new(scale * ens.g[k], 0.0), &exchange);
    }
    Ok(h)
}

/// Thermal excited-state population of an electron spin in field `b_field`
/// (T) at temperature `temperature` (K):
/// `p = 1 / (1 + exp(hbar * gamma_e * B / (k_B T)))`.
pub fn gibbs_population(b_field: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositive {
            name: "temperature",
            value: temperature,
        });
    }
    let x = HBAR * GAMMA_E * b_field / (K_B * temperature);
    Ok(1.0 / (1.0 + x.exp()))
}

/// Excited-state population of register qubit `k`:
/// `p = (1 + Tr(sigma_z^(k) rho)) / 2`, i.e. the summed diagonal weight of
/// basis states in which qubit `k` is excited.
pub fn excited_population(rho: &DensityMatrix, k: usize) -> Result<f64> {
    let n = rho.num_qubits();
    if k >= n {
        return Err(Error::IndexOutOfRange {
            name: "qubit",
            index: k,
            len: n,
        });
    }
    let mat = rho.matrix();
    let mut p = 0.0;
    for i in 0..mat.nrows() {
        if qubit_bit(i, k, n) == 1 {
            p += mat[[i, i]].re;
        }
    }
    Ok(p)
}

/// Sensitivity gain of a cooled spin ensemble over its thermal baseline:
/// `(1 - 2 p_cooled) / (1 - 2 p_thermal)`.
///
/// Both arguments are excited-state probabilities. The thermal baseline must
/// be strictly below 1/2, otherwise there is no contrast to compare against.
pub fn polarization_gain(p_cooled: f64, p_thermal: f64) -> Result<f64> {
    for (name, p) in [("p_cooled", p_cooled), ("p_thermal", p_thermal)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityRange { name, value: p });
        }
    }
    if p_thermal >= 0.5 {
        return Err(Error::NoBaselineContrast { p_thermal });
    }
    Ok((1.0 - 2.0 * p_cooled) / (1.0 - 2.0 * p_thermal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::hermiticity_defect;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Frozen oracle: independent arithmetic evaluation of the coupling
    // formula at the loop center with the reference parameters.
    //   tilt      = 0.112 / sqrt(0.112^2 + 5.37^2)      = 2.08520757e-2
    //   field     = gamma_e * mu0 * I_p / 2pi           = 6.33909e-3
    //   inv_sum   = 4 / 3e-6                            = 1.33333333e6
    //   g0        = tilt * field * inv_sum              = 176.2443 rad/s
    const G0_ORACLE: f64 = 176.2443;

    #[test]
    fn coupling_at_center_matches_arithmetic_oracle() {
        let cfg = PhysicalConfig::default();
        let g0 = coupling_strength(&cfg, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(g0, G0_ORACLE, epsilon = 1e-3);
        // Published reference value for this geometry is 175 rad/s.
        assert!((g0 / 175.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn coupling_offcenter_matches_reciprocal_distance_sum() {
        // At (r0/2, 0) the perpendicular distances are
        // (r0/2, 3 r0/2, r0, r0), so the reciprocal sum is exactly 7/6 of
        // the center value 4/r0.
        let cfg = PhysicalConfig::default();
        let g0 = coupling_strength(&cfg, 0.0, 0.0).unwrap();
        let g = coupling_strength(&cfg, cfg.r0 / 2.0, 0.0).unwrap();
        assert_abs_diff_eq!(g / g0, 7.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g, 205.6184, epsilon = 2e-3);
    }

    #[test]
    fn coupling_vanishes_at_zero_bias() {
        let cfg = PhysicalConfig {
            epsilon: 0.0,
            ..PhysicalConfig::default()
        };
        assert_eq!(coupling_strength(&cfg, 1.0e-6, -0.5e-6).unwrap(), 0.0);
    }

    #[test]
    fn coupling_rejects_boundary_and_outside() {
        let cfg = PhysicalConfig::default();
        assert!(coupling_strength(&cfg, cfg.r0, 0.0).is_err());
        assert!(coupling_strength(&cfg, 0.0, -cfg.r0).is_err());
        assert!(coupling_strength(&cfg, 2.0 * cfg.r0, 0.0).is_err());
        assert!(coupling_strength(&cfg, f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn coupling_symmetries_hold_exactly(
            xf in -0.95f64..0.95, yf in -0.95f64..0.95
        ) {
            let cfg = PhysicalConfig::default();
            let (x, y) = (xf * cfg.r0, yf * cfg.r0);
            let g = coupling_strength(&cfg, x, y).unwrap();
            // Mirror and diagonal symmetry are exact: the same four
            // distances are summed in a different order.
            prop_assert_eq!(g, coupling_strength(&cfg, -x, y).unwrap());
            prop_assert_eq!(g, coupling_strength(&cfg, x, -y).unwrap());
            prop_assert_eq!(g, coupling_strength(&cfg, y, x).unwrap());
        }

        #[test]
        fn coupling_grows_toward_a_side(step in 1usize..40) {
            // Walking from the center straight toward a side, g increases
            // monotonically and diverges.
            let cfg = PhysicalConfig::default();
            let frac_near = step as f64 / 41.0;
            let frac_far = (step + 1) as f64 / 41.0;
            let g_near = coupling_strength(&cfg, frac_near * cfg.r0, 0.0).unwrap();
            let g_far = coupling_strength(&cfg, frac_far * cfg.r0, 0.0).unwrap();
            prop_assert!(g_far > g_near);
        }
    }

    #[test]
    fn coupling_diverges_near_side() {
        let cfg = PhysicalConfig::default();
        let g = coupling_strength(&cfg, cfg.r0 * (1.0 - 1e-9), 0.0).unwrap();
        assert!(g > 1e5); // 1/(r0 - x) alone contributes ~ K * 3.3e14 / 1e9
    }

    #[test]
    fn hamiltonian_m1_matches_hand_computed_matrix() {
        // M = 1, detuning w, coupling g: in the basis |00>, |01>, |10>, |11>
        // (flux qubit first) the matrix is
        //   diag(-w, +w, -w, +w) with g on the |01> <-> |10> exchange block.
        let (w, g) = (123.0, 45.0);
        let ens = SpinEnsemble::new(vec![w], vec![g], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let h = build_effective_hamiltonian(&ens).unwrap();
        let expect = ndarray::array![
            [
                C64::new(-w, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0)
            ],
            [
                C64::new(0.0, 0.0),
                C64::new(w, 0.0),
                C64::new(g, 0.0),
                C64::new(0.0, 0.0)
            ],
            [
                C64::new(0.0, 0.0),
                C64::new(g, 0.0),
                C64::new(-w, 0.0),
                C64::new(0.0, 0.0)
            ],
            [
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(w, 0.0)
            ]
        ];
        assert_eq!(h.dim(), (4, 4));
        for (a, b) in h.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn hamiltonian_decoupled_limit_has_doubly_degenerate_detuning() {
        let w = 7.5;
        let ens = SpinEnsemble::new(vec![w], vec![0.0], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let h = build_effective_hamiltonian(&ens).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| h[[i, i]].re).collect();
        assert_eq!(diag, vec![-w, w, -w, w]);
        assert_eq!(
            crate::operator::max_abs(&(h.clone() - Array2::from_diag(&h.diag()))),
            0.0
        );
    }

    #[test]
    fn hamiltonian_conserves_total_excitation() {
        // [H, N] = 0 with N = sum_k (1 + sigma_z^(k))/2: H only exchanges
        // excitations, so entries between different-popcount indices vanish.
        let ens = SpinEnsemble::new(
            vec![100.0, -220.0, 3000.0],
            vec![150.0, 175.0, 210.0],
            vec![0.0; 4],
            vec![0.0; 4],
        )
        .unwrap();
        let h = build_effective_hamiltonian(&ens).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                if usize::count_ones(i) != usize::count_ones(j) {
                    assert_eq!(h[[i as usize, j as usize]], C64::new(0.0, 0.0));
                }
            }
        }
        assert!(hermiticity_defect(&h) < 1e-12 * crate::operator::max_abs(&h));
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian(
            m in 1usize..5,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let omega: Vec<f64> = (0..m).map(|_| rng.random_range(-1e4..1e4)).collect();
            let g: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1e3)).collect();
            let ens = SpinEnsemble::new(omega, g, vec![0.0; m + 1], vec![0.0; m + 1]).unwrap();
            let h = build_effective_hamiltonian(&ens).unwrap();
            let scale = crate::operator::max_abs(&h).max(1.0);
            prop_assert!(hermiticity_defect(&h) < 1e-12 * scale);
        }
    }

    #[test]
    fn ensemble_rejects_bad_shapes_and_rates() {
        assert!(matches!(
            SpinEnsemble::new(vec![], vec![], vec![0.0], vec![0.0]),
            Err(Error::EmptyEnsemble)
        ));
        assert!(SpinEnsemble::new(vec![0.0], vec![1.0, 2.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(SpinEnsemble::new(vec![0.0], vec![1.0], vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(SpinEnsemble::new(vec![0.0], vec![1.0], vec![-1.0, 0.0], vec![0.0; 2]).is_err());
    }

    // Frozen oracle: hbar * gamma_e / k_B = 1.3449851 K/T, so at
    // B = 1 mT, T = 10 mK the exponent is 0.13449851 and
    // p = 1 / (1 + e^0.13449851) = 0.46642597.
    #[test]
    fn gibbs_population_matches_arithmetic_oracle() {
        let p = gibbs_population(1e-3, 10e-3).unwrap();
        assert_abs_diff_eq!(p, 0.46642597, epsilon = 1e-7);
        // Published anchor: ~0.47 at these conditions.
        assert!((p - 0.47).abs() < 0.005);
        // Warmer bath, weaker polarization: 0.49327 at 50 mK.
        let p50 = gibbs_population(1e-3, 50e-3).unwrap();
        assert_abs_diff_eq!(p50, 0.49327533, epsilon = 1e-6);
    }

    #[test]
    fn gibbs_population_limits() {
        assert_abs_diff_eq!(gibbs_population(0.0, 0.3).unwrap(), 0.5, epsilon = 0.0);
        // Strong field, cold bath: fully polarized to the ground state.
        assert!(gibbs_population(1.0, 1e-3).unwrap() < 1e-12);
        assert!(gibbs_population(1e-3, 0.0).is_err());
        assert!(gibbs_population(1e-3, -4.0).is_err());
    }

    proptest! {
        #[test]
        fn gibbs_population_is_a_probability_below_half(
            b in 0.0f64..10.0, t in 1e-6f64..300.0
        ) {
            let p = gibbs_population(b, t).unwrap();
            prop_assert!((0.0..=0.5).contains(&p));
        }
    }

    #[test]
    fn polarization_gain_matches_hand_values() {
        // (1 - 0.32) / (1 - 0.94) = 0.68 / 0.06 = 11.333...
        assert_abs_diff_eq!(
            polarization_gain(0.16, 0.47).unwrap(),
            11.333333333,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(polarization_gain(0.0, 0.25).unwrap(), 2.0, epsilon = 0.0);
        // Perfect cooling from an almost-unpolarized baseline diverges.
        assert!(polarization_gain(0.0, 0.4999).unwrap() > 4999.0);
    }

    #[test]
    fn polarization_gain_rejects_contrast_free_baseline() {
        assert!(matches!(
            polarization_gain(0.1, 0.5),
            Err(Error::NoBaselineContrast { .. })
        ));
        assert!(polarization_gain(0.1, 0.75).is_err());
        assert!(polarization_gain(-0.1, 0.4).is_err());
        assert!(polarization_gain(1.1, 0.4).is_err());
    }

    #[test]
    fn validate_flags_coarse_substep() {
        // The reference parameter set itself steps at delta / T2_fq = 1/6,
        // which the validator must flag (honest soft warning: the bundled
        // trajectories are produced with exactly this first-order step).
        let cfg = PhysicalConfig::default();
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("coarse"));
        // A finer substep resolves every rate and passes silently.
        let fine = PhysicalConfig {
            delta: 1e-6, // delta / T2_fq = 1/30 < 0.05
            ..PhysicalConfig::default()
        };
        assert!(fine.validate().unwrap().is_empty());
        let coarse = PhysicalConfig {
            delta: 60e-6, // delta / T2_fq = 2 > 0.05
            ..PhysicalConfig::default()
        };
        assert_eq!(coarse.validate().unwrap().len(), 1);
        let bad = PhysicalConfig {
            delta: 100e-6, // exceeds t_int = 95 us
            ..PhysicalConfig::default()
        };
        assert!(bad.validate().is_err());
        let nonpos = PhysicalConfig {
            r0: 0.0,
            ..PhysicalConfig::default()
        };
        assert!(nonpos.validate().is_err());
    }

    #[test]
    fn rate_conventions_map_reference_times_to_expected_coefficients() {
        let cfg = PhysicalConfig::default();
        // Reference times: T2_fq = 30 us, T1_fq = 200 us, T2_e = 1 ms,
        // T1_e = 1 s, so the literal coefficients are (33333.3, 5000) for
        // the flux qubit and (1000, 1) per spin.
        let (gt, gl) = RateConvention::CaptionLiteral.gamma_arrays(&cfg, 2);
        assert_eq!(gt.len(), 3);
        assert_eq!(gl.len(), 3);
        assert_abs_diff_eq!(gt[0], 33333.333333, epsilon = 1e-5);
        assert_abs_diff_eq!(gl[0], 5000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gt[1], 1000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gl[2], 1.0, epsilon = 1e-12);

        let (gt, gl) = RateConvention::DecayCalibrated.gamma_arrays(&cfg, 2);
        assert_abs_diff_eq!(gt[0], 16666.666667, epsilon = 1e-5);
        assert_abs_diff_eq!(gl[0], 2500.0, epsilon = 1e-9);

        let (gt, gl) = RateConvention::DephasingCalibrated.gamma_arrays(&cfg, 2);
        assert_abs_diff_eq!(gt[0], 16666.666667, epsilon = 1e-5);
        assert_abs_diff_eq!(gl[0], 5000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gt[1], 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gl[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn conventions_round_trip_through_display_and_parse() {
        for conv in [
            RateConvention::CaptionLiteral,
            RateConvention::DecayCalibrated,
            RateConvention::DephasingCalibrated,
        ] {
            let parsed: RateConvention = conv.to_string().parse().unwrap();
            assert_eq!(parsed, conv);
        }
        for conv in [LadderConvention::Half, LadderConvention::Plain] {
            let parsed: LadderConvention = conv.to_string().parse().unwrap();
            assert_eq!(parsed, conv);
        }
        assert_eq!(RateConvention::default(), RateConvention::CaptionLiteral);
        assert_eq!(LadderConvention::default(), LadderConvention::Half);
        assert!("half-baked".parse::<LadderConvention>().is_err());
        assert!("literal".parse::<RateConvention>().is_err());
    }

    #[test]
    fn plain_ladder_quadruples_exchange_elements_only() {
        let ens =
            SpinEnsemble::new(vec![7.0, -3.0], vec![2.0, 5.0], vec![0.0; 3], vec![0.0; 3]).unwrap();
        let h1 = build_effective_hamiltonian(&ens).unwrap();
        let h4 = build_effective_hamiltonian_with(&ens, LadderConvention::Plain).unwrap();
        // z-part (diagonal) identical, exchange part (off-diagonal) scaled.
        for i in 0..h1.nrows() {
            for j in 0..h1.ncols() {
                let expect = if i == j { h1[[i, j]] } else { 4.0 * h1[[i, j]] };
                assert_abs_diff_eq!(h4[[i, j]].re, expect.re, epsilon = 1e-12);
                assert_abs_diff_eq!(h4[[i, j]].im, expect.im, epsilon = 1e-12);
            }
        }
        assert!(hermiticity_defect(&h4) < 1e-12);
    }
}
