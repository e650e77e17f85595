//! Scenario execution: drive the engines, enforce the emitted-row
//! invariants, and write the CSV + sidecar pair.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;

use spincool::dicke::{pi_update, step1_update, ColumnDistribution, IdealizedMode, SectorState};
use spincool::lindblad::{
    run_protocol_full, DensityMatrix, SaturationRule, Schedule, TrajectoryRecord,
};
use spincool::model::{build_effective_hamiltonian_with, SpinEnsemble};

use crate::config::{parse_config, resolve, ResolvedScenario, RunKind};
use crate::output::{
    format_csv, format_sidecar, write_atomic, SaturationSummary, Sidecar, SidecarSchedule,
};

/// A run produced state that violates an advertised output invariant.
/// Distinguished from usage errors so the process can exit with a
/// dedicated code.
#[derive(Debug)]
pub struct InvariantBreach(pub String);

impl fmt::Display for InvariantBreach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant breach: {}", self.0)
    }
}

impl std::error::Error for InvariantBreach {}

/// Outcome summary for one config, printed by `simulate` and `sweep`.
pub struct RunOutcome {
    pub csv_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub steps_run: usize,
    pub saturated_at: Option<usize>,
    pub final_p_up_mean: f64,
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} + {}: {} steps, saturated at {}, final mean p_up {:.6}",
            self.csv_path.display(),
            self.sidecar_path.display(),
            self.steps_run,
            match self.saturated_at {
                Some(s) => s.to_string(),
                None => "never".to_string(),
            },
            self.final_p_up_mean
        )
    }
}

/// Load, resolve, and run one config file.
pub fn run_config_file(
    path: &Path,
    seed_override: Option<u64>,
    out_dir: &Path,
) -> anyhow::Result<RunOutcome> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    let cfg = parse_config(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let resolved = resolve(&cfg, &stem, seed_override)
        .with_context(|| format!("resolving config {}", path.display()))?;
    run_scenario(&resolved, out_dir)
}

/// Execute a resolved scenario and write its result files.
pub fn run_scenario(resolved: &ResolvedScenario, out_dir: &Path) -> anyhow::Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let (records, saturated_at, audit, mode_label) = match &resolved.kind {
        RunKind::Lindblad => run_lindblad(resolved)?,
        RunKind::Idealized(mode) => {
            let (records, saturated_at) = run_idealized(resolved, *mode)?;
            let label = match mode {
                IdealizedMode::Step1Only => "idealized-step1",
                IdealizedMode::Step1Plus2 => "idealized-step1+2",
            };
            (records, saturated_at, None, label)
        }
    };

    enforce_row_invariants(&records)?;

    let final_p_up_mean = records.last().map(|r| r.p_up_mean).unwrap_or(f64::NAN);
    let steps_run = records.len().saturating_sub(1);
    let csv_name = format!("{}.csv", resolved.output_stem);
    let sidecar_name = format!("{}.summary.json", resolved.output_stem);
    let csv_path = out_dir.join(&csv_name);
    let sidecar_path = out_dir.join(&sidecar_name);

    let sidecar = Sidecar {
        scenario: resolved.scenario.to_string(),
        mode: mode_label.to_string(),
        m: resolved.m,
        seed: resolved.seed,
        omega_prime_rad_s: resolved.omega_prime.clone(),
        g_rad_s: resolved.g.clone(),
        positions_m: resolved.positions.clone(),
        rate_convention: resolved.rate_convention.to_string(),
        ladder_convention: resolved.ladder.to_string(),
        gamma_t: resolved.gamma_t.clone(),
        gamma_l: resolved.gamma_l.clone(),
        gating: resolved.gating_summary(),
        schedule: SidecarSchedule {
            delta_s: resolved.delta,
            t_i_s: resolved.t_i,
            t_int_s: resolved.t_int,
            n_steps_cap: resolved.n_steps,
            steps_run,
        },
        physical: resolved.physical.clone(),
        saturation: SaturationSummary {
            saturated_at,
            final_p_up_mean,
        },
        audit,
        csv: csv_name,
    };

    write_atomic(&csv_path, format_csv(resolved.m, &records).as_bytes())?;
    write_atomic(&sidecar_path, format_sidecar(&sidecar)?.as_bytes())?;

    Ok(RunOutcome {
        csv_path,
        sidecar_path,
        steps_run,
        saturated_at,
        final_p_up_mean,
    })
}

type LindbladParts = (
    Vec<TrajectoryRecord>,
    Option<usize>,
    Option<spincool::lindblad::RunAudit>,
    &'static str,
);

fn run_lindblad(resolved: &ResolvedScenario) -> anyhow::Result<LindbladParts> {
    let ens = SpinEnsemble::new(
        resolved.omega_prime.clone(),
        resolved.g.clone(),
        resolved.gamma_t.clone(),
        resolved.gamma_l.clone(),
    )?;
    let h = build_effective_hamiltonian_with(&ens, resolved.ladder)?;
    let schedule = Schedule::new(
        resolved.delta,
        resolved.t_int,
        resolved.t_i,
        resolved.n_steps,
    )?;
    let initial = DensityMatrix::ground_fq_mixed_spins(resolved.m)?;
    let run = run_protocol_full(
        &initial,
        &h,
        &ens,
        &schedule,
        Some(SaturationRule::default()),
    )
    .map_err(|e| anyhow::Error::new(InvariantBreach(e.to_string())))?;
    let audit = run.trajectory.audit.clone();
    Ok((
        run.trajectory.records,
        audit.saturated_at,
        Some(audit),
        "lindblad",
    ))
}

/// Iterate the per-cycle maps, recording the same row shape as a full run:
/// the per-spin populations all equal the mean (the maps are permutation
/// symmetric), the trace column is the weighted-norm defect, and the
/// eigenvalue column is the smallest population.
fn run_idealized(
    resolved: &ResolvedScenario,
    mode: IdealizedMode,
) -> anyhow::Result<(Vec<TrajectoryRecord>, Option<usize>)> {
    let m = resolved.m;
    let cycle_time = resolved.t_i + resolved.t_int;
    let mut records = Vec::with_capacity(resolved.n_steps + 1);
    let mut push = |step: usize, p: f64, norm_defect: f64, min_pop: f64| {
        records.push(TrajectoryRecord {
            step,
            time_s: step as f64 * cycle_time,
            p_up: vec![p; m],
            p_up_mean: p,
            trace_error: norm_defect,
            min_eig: min_pop,
        });
    };
    match mode {
        IdealizedMode::Step1Only => {
            let mut s = SectorState::uniform(m)?;
            let audit = |s: &SectorState| {
                let min = s.iter().map(|(_, v)| v).fold(f64::INFINITY, f64::min);
                ((s.weighted_norm() - 1.0).abs(), min)
            };
            let (d, min) = audit(&s);
            push(0, s.p_up(), d, min);
            for step in 1..=resolved.n_steps {
                s = step1_update(&s);
                let (d, min) = audit(&s);
                push(step, s.p_up(), d, min);
            }
        }
        IdealizedMode::Step1Plus2 => {
            let mut pi = ColumnDistribution::uniform(m)?;
            let audit = |pi: &ColumnDistribution| {
                let min = pi.probs().iter().cloned().fold(f64::INFINITY, f64::min);
                ((pi.total() - 1.0).abs(), min)
            };
            let (d, min) = audit(&pi);
            push(0, pi.p_up(), d, min);
            for step in 1..=resolved.n_steps {
                pi = pi_update(&pi);
                let (d, min) = audit(&pi);
                push(step, pi.p_up(), d, min);
            }
        }
    }
    let means: Vec<f64> = records.iter().map(|r| r.p_up_mean).collect();
    Ok((records, detect_saturation(&means, 100, 1e-4)))
}

/// First index where the mean stopped moving: change within `tol` over
/// `window` consecutive steps.
fn detect_saturation(means: &[f64], window: usize, tol: f64) -> Option<usize> {
    if means.len() <= window {
        return None;
    }
    (window..means.len()).find(|&i| (means[i] - means[i - window]).abs() < tol)
}

/// Advertised guarantees on every emitted row: populations are
/// probabilities and the trace defect stays below 1e-9.
fn enforce_row_invariants(records: &[TrajectoryRecord]) -> anyhow::Result<()> {
    for rec in records {
        for (k, &p) in rec.p_up.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(anyhow::Error::new(InvariantBreach(format!(
                    "step {}: p_up_{} = {p:.6e} outside [0, 1]",
                    rec.step,
                    k + 1
                ))));
            }
        }
        if !(rec.trace_error < 1e-9) {
            return Err(anyhow::Error::new(InvariantBreach(format!(
                "step {}: trace error {:.6e} exceeds 1e-9",
                rec.step, rec.trace_error
            ))));
        }
    }
    Ok(())
}
