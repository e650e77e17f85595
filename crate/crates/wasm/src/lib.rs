//! Browser bindings for the cooling engines.
//!
//! Each operation takes plain scalars, runs entirely in the WebAssembly
//! module, and returns a JSON string the page decodes for plotting. The
//! JSON layer keeps the ABI trivial (strings only) and lets the same
//! functions be exercised natively by `tests/host.rs`, so the demo logic
//! stays testable without a browser.
//!
//! Build the module with `wasm-pack build crates/wasm --target web
//! --out-dir ../../www/pkg` and serve `www/` statically.

use serde::Serialize;

use spincool::dicke::{dark_limit, idealized_protocol, IdealizedMode};
use spincool::lindblad::{run_protocol_full, DensityMatrix, SaturationRule, Schedule};
use spincool::model::{
    build_effective_hamiltonian_with, coupling_strength, LadderConvention, PhysicalConfig,
    RateConvention, SpinEnsemble,
};

/// Largest ensemble the closed-form protocol will iterate in the page.
pub const MAX_IDEALIZED_SPINS: usize = 400;
/// Largest ensemble the dense density-matrix engine will run in the page;
/// the state has `2^(m+1)` dimensions, so this caps the matrix at 64x64.
pub const MAX_DENSE_SPINS: usize = 5;
/// Cycle cap for the dense engine (a cycle is 20 substeps).
pub const MAX_DENSE_CYCLES: usize = 5_000;

#[derive(Serialize)]
struct IdealizedCurve {
    m: usize,
    mode: &'static str,
    /// Mean excited probability per spin after each cycle; entry 0 is the
    /// initial 1/2.
    p_up: Vec<f64>,
    /// Extraction-only floor for this ensemble size (reference line; the
    /// remixed protocol cools through it toward zero).
    extraction_floor: f64,
}

/// Closed-form protocol curve: extraction only (`"step1"`) or extraction
/// plus remix (`"step1+2"`).
pub fn idealized_curve_json(m: usize, mode: &str, cycles: usize) -> Result<String, String> {
    let (mode, label) = match mode {
        "step1" => (IdealizedMode::Step1Only, "step1"),
        "step1+2" => (IdealizedMode::Step1Plus2, "step1+2"),
        other => {
            return Err(format!(
                "mode must be \"step1\" or \"step1+2\", got \"{other}\""
            ))
        }
    };
    if m == 0 || m > MAX_IDEALIZED_SPINS {
        return Err(format!("m must be 1..={MAX_IDEALIZED_SPINS}, got {m}"));
    }
    if cycles == 0 || cycles > 20_000 {
        return Err(format!("cycles must be 1..=20000, got {cycles}"));
    }
    let p_up = idealized_protocol(m, cycles, mode).map_err(|e| e.to_string())?;
    let floor = dark_limit(m).map_err(|e| e.to_string())?.p_up_infinity;
    let curve = IdealizedCurve {
        m,
        mode: label,
        p_up,
        extraction_floor: floor,
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CouplingMap {
    n: usize,
    half_width_m: f64,
    /// Row-major `n x n` couplings (rad/s) over the square
    /// `[-half_width, half_width]^2` centered under the loop.
    g_rad_s: Vec<f64>,
    g_min: f64,
    g_max: f64,
}

/// Coupling strength sampled on an `n x n` grid across the placement
/// region, for the heatmap panel.
pub fn coupling_map_json(n: usize, half_width_m: f64) -> Result<String, String> {
    if !(2..=256).contains(&n) {
        return Err(format!("n must be 2..=256, got {n}"));
    }
    if !(half_width_m > 0.0) {
        return Err(format!(
            "half_width_m must be positive, got {half_width_m:e}"
        ));
    }
    let cfg = PhysicalConfig::default();
    let mut g = Vec::with_capacity(n * n);
    let coord = |i: usize| -half_width_m + 2.0 * half_width_m * i as f64 / (n - 1) as f64;
    for iy in 0..n {
        for ix in 0..n {
            g.push(coupling_strength(&cfg, coord(ix), coord(iy)).map_err(|e| e.to_string())?);
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &g {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let map = CouplingMap {
        n,
        half_width_m,
        g_rad_s: g,
        g_min: lo,
        g_max: hi,
    };
    serde_json::to_string(&map).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CoolingCurve {
    m: usize,
    rate_convention: String,
    ladder_convention: String,
    /// Mean excited probability per spin after each cycle (entry 0 is the
    /// prepared 1/2).
    p_up_mean: Vec<f64>,
    saturated_at: Option<usize>,
    extraction_floor: f64,
    max_trace_error: f64,
}

/// Full density-matrix run: resonant spins, uniform center coupling, and
/// the dissipation rates selected by `rate_convention`.
pub fn cooling_curve_json(
    m: usize,
    rate_convention: &str,
    ladder_convention: &str,
    n_cycles: usize,
) -> Result<String, String> {
    if m == 0 || m > MAX_DENSE_SPINS {
        return Err(format!("m must be 1..={MAX_DENSE_SPINS}, got {m}"));
    }
    if n_cycles == 0 || n_cycles > MAX_DENSE_CYCLES {
        return Err(format!(
            "cycles must be 1..={MAX_DENSE_CYCLES}, got {n_cycles}"
        ));
    }
    let convention: RateConvention = rate_convention
        .parse()
        .map_err(|e: spincool::Error| e.to_string())?;
    let ladder: LadderConvention = ladder_convention
        .parse()
        .map_err(|e: spincool::Error| e.to_string())?;

    let cfg = PhysicalConfig::default();
    let g0 = coupling_strength(&cfg, 0.0, 0.0).map_err(|e| e.to_string())?;
    let (gamma_t, gamma_l) = convention.gamma_arrays(&cfg, m);
    let ens = SpinEnsemble::new(vec![0.0; m], vec![g0; m], gamma_t, gamma_l)
        .map_err(|e| e.to_string())?;
    let h = build_effective_hamiltonian_with(&ens, ladder).map_err(|e| e.to_string())?;
    let schedule =
        Schedule::new(cfg.delta, cfg.t_int, cfg.t_i, n_cycles).map_err(|e| e.to_string())?;
    let initial = DensityMatrix::ground_fq_mixed_spins(m).map_err(|e| e.to_string())?;
    let run = run_protocol_full(
        &initial,
        &h,
        &ens,
        &schedule,
        Some(SaturationRule::default()),
    )
    .map_err(|e| e.to_string())?;

    let curve = CoolingCurve {
        m,
        rate_convention: convention.to_string(),
        ladder_convention: ladder.to_string(),
        p_up_mean: run.trajectory.records.iter().map(|r| r.p_up_mean).collect(),
        saturated_at: run.trajectory.audit.saturated_at,
        extraction_floor: dark_limit(m).map_err(|e| e.to_string())?.p_up_infinity,
        max_trace_error: run.trajectory.audit.max_trace_error,
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

/// The exported surface: thin `Result<String, JsValue>` shims over the
/// functions above.
#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub fn idealized_curve(m: usize, mode: &str, cycles: usize) -> Result<String, JsValue> {
        super::idealized_curve_json(m, mode, cycles).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn coupling_map(n: usize, half_width_m: f64) -> Result<String, JsValue> {
        super::coupling_map_json(n, half_width_m).map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn cooling_curve(
        m: usize,
        rate_convention: &str,
        ladder_convention: &str,
        cycles: usize,
    ) -> Result<String, JsValue> {
        super::cooling_curve_json(m, rate_convention, ladder_convention, cycles)
            .map_err(|e| JsValue::from_str(&e))
    }
}
