//! Scenario configuration: the JSON schema, its validation rules, and the
//! resolution step that turns a parsed file into engine-ready arrays.
//!
//! Scenarios gate the decay channels:
//!
//! | scenario    | detunings / couplings      | dissipation          |
//! |-------------|----------------------------|----------------------|
//! | `1`         | zero / uniform center value| none                 |
//! | `2`         | explicit or sampled        | none                 |
//! | `3`         | explicit or sampled        | dephasing only       |
//! | `4`         | explicit or sampled        | all four families    |
//! | `"custom"`  | explicit or sampled        | whatever is given    |
//! | `"idealized"` | n/a                      | n/a (per-cycle maps) |

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use spincool::dicke::IdealizedMode;
use spincool::model::{LadderConvention, PhysicalConfig, RateConvention};

use crate::sample::{sample_ensemble, SampledEnsemble};

/// Raw config file contents, one-to-one with the JSON schema. Unknown keys
/// are rejected so typos surface as errors naming the offending key.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    #[serde(rename = "M")]
    pub m: usize,
    pub omega_prime_rad_s: Option<Vec<f64>>,
    pub g_rad_s: Option<Vec<f64>>,
    pub sampling: Option<SamplingSpec>,
    pub schedule: Option<ScheduleSpec>,
    pub rates: Option<RatesSpec>,
    pub rate_convention: Option<String>,
    pub ladder_convention: Option<String>,
    /// Only meaningful for `scenario: "idealized"`: `"step1"` or `"step1+2"`.
    pub idealized_mode: Option<String>,
    /// Base name for the emitted files; defaults to the config file's stem.
    pub output_stem: Option<String>,
}

/// Scenario selector: a number 1–4 or one of the named modes.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum ScenarioId {
    Number(u8),
    Name(String),
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioId::Number(n) => write!(f, "{n}"),
            ScenarioId::Name(s) => f.write_str(s),
        }
    }
}

/// Seeded random-ensemble specification. The seed has no default: sampled
/// runs must be reproducible from the config alone.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub seed: u64,
    /// Half-width of the central square the spin positions are drawn from
    /// (meters). Must leave a margin to the loop boundary.
    #[serde(default = "default_region_half_width")]
    pub region_half_width_m: f64,
    /// Standard deviation of the zero-mean normal detuning draw (rad/s).
    #[serde(default = "default_detuning_sigma")]
    pub detuning_sigma_rad_s: f64,
}

fn default_region_half_width() -> f64 {
    1.8e-6
}

fn default_detuning_sigma() -> f64 {
    4000.0
}

/// Cycle timing overrides; anything omitted falls back to the reference
/// parameter set (5 us substep, 5 us reset, 95 us interaction window).
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub delta_s: Option<f64>,
    pub t_i_s: Option<f64>,
    pub t_int_s: Option<f64>,
    pub n_steps: Option<usize>,
}

/// Explicit dissipator coefficients (1/s). Scalars apply per family; the
/// full arrays (length M + 1, flux qubit first) override everything.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSpec {
    pub gamma_t_fq: Option<f64>,
    pub gamma_l_fq: Option<f64>,
    pub gamma_t_spin: Option<f64>,
    pub gamma_l_spin: Option<f64>,
    pub gamma_t: Option<Vec<f64>>,
    pub gamma_l: Option<Vec<f64>>,
}

impl RatesSpec {
    fn is_empty(&self) -> bool {
        self.gamma_t_fq.is_none()
            && self.gamma_l_fq.is_none()
            && self.gamma_t_spin.is_none()
            && self.gamma_l_spin.is_none()
            && self.gamma_t.is_none()
            && self.gamma_l.is_none()
    }
}

/// What a resolved config actually runs.
#[derive(Debug, Clone, PartialEq)]
pub enum RunKind {
    /// Full density-matrix protocol.
    Lindblad,
    /// Per-cycle sector/column maps, no Hamiltonian dynamics.
    Idealized(IdealizedMode),
}

/// Engine-ready scenario: every default filled, every array validated,
/// sampling already performed.
#[derive(Debug, Clone)]
pub struct ResolvedScenario {
    pub scenario: ScenarioId,
    pub kind: RunKind,
    pub m: usize,
    pub omega_prime: Vec<f64>,
    pub g: Vec<f64>,
    /// Spin positions when the ensemble was sampled (meters).
    pub positions: Option<Vec<(f64, f64)>>,
    pub gamma_t: Vec<f64>,
    pub gamma_l: Vec<f64>,
    pub rate_convention: RateConvention,
    pub ladder: LadderConvention,
    pub physical: PhysicalConfig,
    pub delta: f64,
    pub t_i: f64,
    pub t_int: f64,
    pub n_steps: usize,
    pub seed: Option<u64>,
    pub output_stem: String,
}

/// Default cycle cap when a config does not set `schedule.n_steps`;
/// saturation detection usually stops runs well before any sensible cap.
pub const DEFAULT_N_STEPS: usize = 2000;

/// Parse a JSON config. Schema violations name the offending key.
pub fn parse_config(text: &str) -> anyhow::Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_json::from_str(text).context("invalid scenario config")?;
    Ok(cfg)
}

fn check_length(name: &str, len: usize, m: usize) -> anyhow::Result<()> {
    if len != m {
        bail!("`{name}` has {len} entries but M = {m}");
    }
    Ok(())
}

fn parse_idealized_mode(s: Option<&str>) -> anyhow::Result<IdealizedMode> {
    match s.unwrap_or("step1+2") {
        "step1" => Ok(IdealizedMode::Step1Only),
        "step1+2" => Ok(IdealizedMode::Step1Plus2),
        other => bail!("`idealized_mode` must be \"step1\" or \"step1+2\", got \"{other}\""),
    }
}

/// Resolve a parsed config into an engine-ready scenario.
///
/// `stem` is the fallback output name (normally the config file's stem);
/// `seed_override` is the `--seed` flag and is only legal for sampled runs.
pub fn resolve(
    cfg: &ScenarioConfig,
    stem: &str,
    seed_override: Option<u64>,
) -> anyhow::Result<ResolvedScenario> {
    let physical = PhysicalConfig::default();
    if cfg.m == 0 {
        bail!("`M` must be at least 1");
    }
    let m = cfg.m;

    let scenario_num = match &cfg.scenario {
        ScenarioId::Number(n @ 1..=4) => Some(*n),
        ScenarioId::Number(n) => {
            bail!("`scenario` must be 1..=4, \"idealized\", or \"custom\", got {n}")
        }
        ScenarioId::Name(s) if s == "idealized" || s == "custom" => None,
        ScenarioId::Name(s) => {
            bail!("`scenario` must be 1..=4, \"idealized\", or \"custom\", got \"{s}\"")
        }
    };
    let is_idealized = matches!(&cfg.scenario, ScenarioId::Name(s) if s == "idealized");

    let rate_convention = match cfg.rate_convention.as_deref() {
        Some(s) => s.parse::<RateConvention>()?,
        None => RateConvention::default(),
    };
    let ladder = match cfg.ladder_convention.as_deref() {
        Some(s) => s.parse::<LadderConvention>()?,
        None => LadderConvention::default(),
    };

    let sched = cfg.schedule.clone().unwrap_or_default();
    let delta = sched.delta_s.unwrap_or(physical.delta);
    let t_i = sched.t_i_s.unwrap_or(physical.t_i);
    let t_int = sched.t_int_s.unwrap_or(physical.t_int);
    let n_steps = sched.n_steps.unwrap_or(DEFAULT_N_STEPS);
    let output_stem = cfg.output_stem.clone().unwrap_or_else(|| stem.to_string());

    if is_idealized {
        for (key, present) in [
            ("omega_prime_rad_s", cfg.omega_prime_rad_s.is_some()),
            ("g_rad_s", cfg.g_rad_s.is_some()),
            ("sampling", cfg.sampling.is_some()),
            ("rates", cfg.rates.is_some()),
            ("rate_convention", cfg.rate_convention.is_some()),
            ("ladder_convention", cfg.ladder_convention.is_some()),
        ] {
            if present {
                bail!("`{key}` is meaningless for the idealized scenario; remove it");
            }
        }
        if seed_override.is_some() {
            bail!("--seed has no effect on the idealized scenario");
        }
        let mode = parse_idealized_mode(cfg.idealized_mode.as_deref())?;
        return Ok(ResolvedScenario {
            scenario: cfg.scenario.clone(),
            kind: RunKind::Idealized(mode),
            m,
            omega_prime: Vec::new(),
            g: Vec::new(),
            positions: None,
            gamma_t: Vec::new(),
            gamma_l: Vec::new(),
            rate_convention,
            ladder,
            physical,
            delta,
            t_i,
            t_int,
            n_steps,
            seed: None,
            output_stem,
        });
    }
    if cfg.idealized_mode.is_some() {
        bail!("`idealized_mode` only applies to scenario \"idealized\"");
    }

    // Couplings and detunings: fixed (scenario 1), explicit, or sampled.
    let mut sampling = cfg.sampling.clone();
    if let Some(seed) = seed_override {
        match &mut sampling {
            Some(spec) => spec.seed = seed,
            None => bail!("--seed only applies to configs with a `sampling` block"),
        }
    }
    let seed = sampling.as_ref().map(|s| s.seed);

    let (omega_prime, g, positions): (Vec<f64>, Vec<f64>, Option<Vec<(f64, f64)>>) =
        if scenario_num == Some(1) {
            for (key, present) in [
                ("omega_prime_rad_s", cfg.omega_prime_rad_s.is_some()),
                ("g_rad_s", cfg.g_rad_s.is_some()),
                ("sampling", sampling.is_some()),
            ] {
                if present {
                    bail!(
                        "scenario 1 fixes zero detunings and a uniform center coupling; \
                         remove `{key}`"
                    );
                }
            }
            let g0 = spincool::model::coupling_strength(&physical, 0.0, 0.0)?;
            (vec![0.0; m], vec![g0; m], None)
        } else {
            match (&cfg.omega_prime_rad_s, &cfg.g_rad_s, &sampling) {
                (Some(w), Some(gv), None) => {
                    check_length("omega_prime_rad_s", w.len(), m)?;
                    check_length("g_rad_s", gv.len(), m)?;
                    (w.clone(), gv.clone(), None)
                }
                (None, None, Some(spec)) => {
                    let SampledEnsemble {
                        positions,
                        g,
                        omega_prime,
                    } = sample_ensemble(&physical, m, spec)?;
                    (omega_prime, g, Some(positions))
                }
                (Some(w), None, Some(spec)) => {
                    // Mixed form: detunings pinned, couplings sampled.
                    check_length("omega_prime_rad_s", w.len(), m)?;
                    let sampled = sample_ensemble(&physical, m, spec)?;
                    (w.clone(), sampled.g, Some(sampled.positions))
                }
                (None, Some(gv), Some(spec)) => {
                    check_length("g_rad_s", gv.len(), m)?;
                    let sampled = sample_ensemble(&physical, m, spec)?;
                    (sampled.omega_prime, gv.clone(), None)
                }
                (None, None, None) => bail!(
                    "scenario {} needs `omega_prime_rad_s` + `g_rad_s`, or a `sampling` block",
                    cfg.scenario
                ),
                _ => bail!(
                    "give each of detunings and couplings exactly once: explicit array or sampled"
                ),
            }
        };

    // Decay channels: convention-mapped defaults, explicit overrides, then
    // the scenario gate.
    let rates = cfg.rates.clone().unwrap_or_default();
    let (mut gamma_t, mut gamma_l) = rate_convention.gamma_arrays(&physical, m);
    if let Some(v) = rates.gamma_t_fq {
        gamma_t[0] = v;
    }
    if let Some(v) = rates.gamma_l_fq {
        gamma_l[0] = v;
    }
    if let Some(v) = rates.gamma_t_spin {
        gamma_t[1..].fill(v);
    }
    if let Some(v) = rates.gamma_l_spin {
        gamma_l[1..].fill(v);
    }
    if let Some(arr) = &rates.gamma_t {
        check_length("rates.gamma_t", arr.len(), m + 1)?;
        gamma_t.clone_from(arr);
    }
    if let Some(arr) = &rates.gamma_l {
        check_length("rates.gamma_l", arr.len(), m + 1)?;
        gamma_l.clone_from(arr);
    }
    match scenario_num {
        Some(1) | Some(2) => {
            if !rates.is_empty() {
                bail!(
                    "scenario {} runs without dissipation; remove the `rates` block",
                    cfg.scenario
                );
            }
            gamma_t.fill(0.0);
            gamma_l.fill(0.0);
        }
        Some(3) => {
            if rates.gamma_l_fq.unwrap_or(0.0) != 0.0
                || rates.gamma_l_spin.unwrap_or(0.0) != 0.0
                || rates
                    .gamma_l
                    .as_ref()
                    .is_some_and(|a| a.iter().any(|&r| r != 0.0))
            {
                bail!(
                    "scenario 3 enables dephasing only; longitudinal rates must be absent or zero"
                );
            }
            gamma_l.fill(0.0);
        }
        _ => {}
    }

    Ok(ResolvedScenario {
        scenario: cfg.scenario.clone(),
        kind: RunKind::Lindblad,
        m,
        omega_prime,
        g,
        positions,
        gamma_t,
        gamma_l,
        rate_convention,
        ladder,
        physical,
        delta,
        t_i,
        t_int,
        n_steps,
        seed,
        output_stem,
    })
}

impl ResolvedScenario {
    /// Channel-family activity summary, recorded in the sidecar so scenario
    /// gating is auditable from the output alone.
    pub fn gating_summary(&self) -> GatingSummary {
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        GatingSummary {
            dephasing_fq: self.gamma_t.first().copied().unwrap_or(0.0) > 0.0,
            dephasing_spins: sum(self.gamma_t.get(1..).unwrap_or(&[])) > 0.0,
            longitudinal_fq: self.gamma_l.first().copied().unwrap_or(0.0) > 0.0,
            longitudinal_spins: sum(self.gamma_l.get(1..).unwrap_or(&[])) > 0.0,
            dissipation_free: sum(&self.gamma_t) + sum(&self.gamma_l) == 0.0,
        }
    }
}

/// Which decay-channel families a run actually had enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GatingSummary {
    pub dephasing_fq: bool,
    pub dephasing_spins: bool,
    pub longitudinal_fq: bool,
    pub longitudinal_spins: bool,
    pub dissipation_free: bool,
}
