//! Seeded ensemble sampling: spin positions uniform over a central square,
//! couplings through the loop-field model, detunings from a zero-mean
//! normal draw.

use anyhow::bail;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use spincool::model::{coupling_strength, PhysicalConfig};

use crate::config::SamplingSpec;

/// One sampled ensemble: positions (meters), couplings, detunings (rad/s).
#[derive(Debug, Clone)]
pub struct SampledEnsemble {
    pub positions: Vec<(f64, f64)>,
    pub g: Vec<f64>,
    pub omega_prime: Vec<f64>,
}

/// Draw `m` spins. The stream is fixed — positions first (x then y per
/// spin), then all detunings — so a seed pins the whole ensemble.
pub fn sample_ensemble(
    cfg: &PhysicalConfig,
    m: usize,
    spec: &SamplingSpec,
) -> anyhow::Result<SampledEnsemble> {
    let hw = spec.region_half_width_m;
    if !(hw >= 0.0) {
        bail!("`sampling.region_half_width_m` must be nonnegative, got {hw:.3e}");
    }
    if hw >= cfg.r0 {
        bail!(
            "`sampling.region_half_width_m` = {hw:.3e} m reaches the loop boundary \
             (half-width {:.3e} m), where the field model diverges",
            cfg.r0
        );
    }
    if !(spec.detuning_sigma_rad_s >= 0.0) {
        bail!(
            "`sampling.detuning_sigma_rad_s` must be nonnegative, got {:.3e}",
            spec.detuning_sigma_rad_s
        );
    }

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut positions = Vec::with_capacity(m);
    let mut g = Vec::with_capacity(m);
    for _ in 0..m {
        let (x, y) = if hw == 0.0 {
            (0.0, 0.0)
        } else {
            (rng.random_range(-hw..=hw), rng.random_range(-hw..=hw))
        };
        positions.push((x, y));
        g.push(coupling_strength(cfg, x, y)?);
    }
    let normal = Normal::new(0.0, spec.detuning_sigma_rad_s)?;
    let omega_prime = (0..m).map(|_| normal.sample(&mut rng)).collect();
    Ok(SampledEnsemble {
        positions,
        g,
        omega_prime,
    })
}
