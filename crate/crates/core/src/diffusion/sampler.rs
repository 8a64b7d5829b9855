//! Strided reverse process (DDIM-style update with `η ∈ {0, 1}`).

use serde::{Deserialize, Serialize};

use super::bundle::DiffusionBundle;
use super::contracts::Denoiser;
use super::schedule::NoiseSchedule;
use super::DiffusionError;
use crate::ingestion::{GenerationMeta, ImageSample};
use crate::rng::{self, Rng};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// `η = 0`: no noise after initialisation.
    Deterministic,
    /// `η = 1`: fresh noise at every step.
    Ancestral,
}

impl SamplerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMode::Deterministic => "deterministic",
            SamplerMode::Ancestral => "ancestral",
        }
    }

    fn eta(self) -> f64 {
        match self {
            SamplerMode::Deterministic => 0.0,
            SamplerMode::Ancestral => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub steps: usize,
    pub mode: SamplerMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { steps: 50, mode: SamplerMode::Deterministic }
    }
}

/// Descending timesteps `((i+1)·T/steps) − 1`, so the first is `T − 1`.
pub fn sampling_timesteps(len: usize, steps: usize) -> Result<Vec<usize>, DiffusionError> {
    if steps == 0 || steps > len {
        return Err(DiffusionError::InvalidSteps { steps, len });
    }
    Ok((0..steps).rev().map(|i| (i + 1) * len / steps - 1).collect())
}

/// Runs the reverse process from `init`. The last step returns the clean
/// prediction `x̂0`. `rng` is only drawn from in ancestral mode.
pub fn sample_latent(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    cond: &Matrix,
    cfg: &SamplerConfig,
    init: Vec<f64>,
    rng: &mut Rng,
) -> Result<Vec<f64>, DiffusionError> {
    let ts = sampling_timesteps(schedule.len(), cfg.steps)?;
    if init.len() != denoiser.latent_len() {
        return Err(DiffusionError::ShapeMismatch { what: "initial latent", expected: denoiser.latent_len(), got: init.len() });
    }
    let eta = cfg.mode.eta();
    let mut x = init;
    for (i, &t) in ts.iter().enumerate() {
        let eps = denoiser.predict_noise(&x, t, cond)?;
        let ab = schedule.alpha_bars[t];
        let x0: Vec<f64> = x.iter().zip(&eps).map(|(xv, e)| (xv - (1.0 - ab).sqrt() * e) / ab.sqrt()).collect();
        let Some(&prev) = ts.get(i + 1) else {
            x = x0;
            break;
        };
        let ab_prev = schedule.alpha_bars[prev];
        let sigma = eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).sqrt();
        let dir = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
        let noise = if sigma > 0.0 { rng::gaussian_vec(rng, x.len()) } else { Vec::new() };
        for k in 0..x.len() {
            x[k] = ab_prev.sqrt() * x0[k] + dir * eps[k] + if sigma > 0.0 { sigma * noise[k] } else { 0.0 };
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite("sampler state"));
        }
    }
    Ok(x)
}

/// Draws one image for `caption`. A pure function of the bundle
/// parameters, caption, seed and sampler settings.
pub fn sample(
    bundle: &DiffusionBundle,
    caption: &str,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<ImageSample, DiffusionError> {
    let cond = bundle.text.encode_text(caption)?;
    let mut r = rng::seeded(seed);
    let init = rng::gaussian_vec(&mut r, bundle.denoiser.latent_len());
    let z = sample_latent(bundle.denoiser.as_ref(), &bundle.schedule, &cond.token_states, cfg, init, &mut r)?;
    let mut img = bundle.vae.decode(&z, &format!("sample-{seed:016x}"))?;
    img.generation = Some(GenerationMeta {
        caption: caption.to_string(),
        seed,
        steps: cfg.steps,
        mode: cfg.mode.as_str().to_string(),
        expected_label: None,
    });
    Ok(img)
}
