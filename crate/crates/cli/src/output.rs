//! Deterministic result emission: CSV trajectories, JSON sidecars, and
//! atomic file writes (temp + rename, same directory).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use spincool::lindblad::{RunAudit, TrajectoryRecord};
use spincool::model::PhysicalConfig;

use crate::config::GatingSummary;

/// Format one float as scientific notation with 9 significant digits.
pub fn sci9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Render the trajectory CSV: `step,time_s,p_up_1..p_up_M,p_up_mean,
/// trace_error,min_eig`, floats in 9-significant-digit scientific notation.
pub fn format_csv(m: usize, records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str("step,time_s");
    for k in 1..=m {
        out.push_str(&format!(",p_up_{k}"));
    }
    out.push_str(",p_up_mean,trace_error,min_eig\n");
    for rec in records {
        out.push_str(&rec.step.to_string());
        out.push(',');
        out.push_str(&sci9(rec.time_s));
        for &p in &rec.p_up {
            out.push(',');
            out.push_str(&sci9(p));
        }
        out.push(',');
        out.push_str(&sci9(rec.p_up_mean));
        out.push(',');
        out.push_str(&sci9(rec.trace_error));
        out.push(',');
        out.push_str(&sci9(rec.min_eig));
        out.push('\n');
    }
    out
}

/// Write `bytes` to `path` atomically: a unique sibling temp file is
/// populated first and then renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} over {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Everything needed to reproduce and audit a run, written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub scenario: String,
    pub mode: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: Option<u64>,
    pub omega_prime_rad_s: Vec<f64>,
    pub g_rad_s: Vec<f64>,
    /// Sampled spin positions (meters), when the ensemble was drawn.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions_m: Option<Vec<(f64, f64)>>,
    pub rate_convention: String,
    pub ladder_convention: String,
    pub gamma_t: Vec<f64>,
    pub gamma_l: Vec<f64>,
    pub gating: GatingSummary,
    pub schedule: SidecarSchedule,
    pub physical: PhysicalConfig,
    pub saturation: SaturationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<RunAudit>,
    pub csv: String,
}

/// Resolved cycle timing, echoed for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct SidecarSchedule {
    pub delta_s: f64,
    pub t_i_s: f64,
    pub t_int_s: f64,
    pub n_steps_cap: usize,
    pub steps_run: usize,
}

/// Where (and whether) the mean excited population stopped moving.
#[derive(Debug, Clone, Serialize)]
pub struct SaturationSummary {
    pub saturated_at: Option<usize>,
    pub final_p_up_mean: f64,
}

/// Serialize the sidecar as pretty JSON with a trailing newline.
pub fn format_sidecar(sidecar: &Sidecar) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(sidecar).context("serializing sidecar")?;
    s.push('\n');
    Ok(s)
}
