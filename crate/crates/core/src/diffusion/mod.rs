//! Latent diffusion substrate: schedule, forward process, noise-prediction
//! loss, samplers, component contracts and deterministic toy components.

mod bundle;
mod contracts;
mod denoiser;
mod loss;
mod sampler;
mod schedule;
mod text;
mod vae;

pub use bundle::{build_toy_bundle, load_bundle, save_bundle, DiffusionBundle, ToyBundleConfig};
pub use contracts::{ComponentState, Denoiser, DenoiserGrads, LatentDist, LatentShape, LatentVae, TextEncoder};
pub use denoiser::{preconditioning, timestep_embedding, OracleDenoiser, ToyDenoiser, ToyDenoiserConfig};
pub use loss::{denoise_loss, denoise_loss_parts, DenoiseOutput, FreezeMask, RowSet};
pub use sampler::{sample, sample_latent, sampling_timesteps, SamplerConfig, SamplerMode};
pub use schedule::{forward_diffuse, make_schedule, NoiseSchedule, TOY_BETA_END, TOY_BETA_START, TOY_T};
pub use text::{ToyTextConfig, ToyTextEncoder, BOS_ID};
pub use vae::{ToyVae, ToyVaeConfig};

use crate::ingestion::IngestError;

#[derive(Debug, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid schedule: T={t}, beta {beta_start}..{beta_end} (need T ≥ 1 and 0 < start ≤ end < 1)")]
    InvalidRange { t: usize, beta_start: f64, beta_end: f64 },
    #[error("timestep {t} outside 0..{len}")]
    TOutOfRange { t: usize, len: usize },
    #[error("{steps} sampling steps for a {len}-step schedule")]
    InvalidSteps { steps: usize, len: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("inconsistent dimensions: {0}")]
    InconsistentDims(String),
    #[error("token {0:?} is already in the vocabulary")]
    DuplicateToken(String),
    #[error("token id {0} outside the embedding table")]
    UnknownTokenId(usize),
    #[error("{what}: need at least {needed}, got {got}")]
    NotEnoughData { what: &'static str, needed: usize, got: usize },
    #[error("unknown component kind {0:?}")]
    UnknownComponent(String),
    #[error("bad component state: {0}")]
    BadComponent(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Image(#[from] IngestError),
}

impl DiffusionError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, DiffusionError::NonFinite(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn small() -> DiffusionBundle {
        build_toy_bundle(&ToyBundleConfig { cond_width: 32, hidden: 32, vae_fit_images: 16, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn oracle_denoiser_has_zero_loss() {
        let b = small();
        let mut r = rng::seeded(1);
        let x0 = rng::gaussian_vec(&mut r, 256);
        let eps = rng::gaussian_vec(&mut r, 256);
        let mut ob = b.clone();
        ob.denoiser = Box::new(OracleDenoiser::new(x0.clone(), &b.schedule, 32));
        let out = denoise_loss(&ob, &x0, "a photo", 40, &eps, None).unwrap();
        assert!(out.loss < 1e-20);
    }

    #[test]
    fn frozen_mask_zeroes_everything() {
        let b = small();
        let mut r = rng::seeded(2);
        let x0 = rng::gaussian_vec(&mut r, 256);
        let eps = rng::gaussian_vec(&mut r, 256);
        let out = denoise_loss(&b, &x0, "a photo", 5, &eps, Some(&FreezeMask::all_frozen())).unwrap();
        assert!(out.loss > 0.0);
        assert!(out.denoiser_grad.iter().all(|g| *g == 0.0));
        assert!(out.embedding_grads.is_empty());
        let full = denoise_loss(&b, &x0, "a photo", 5, &eps, None).unwrap();
        assert_eq!(full.loss, out.loss);
        assert!(full.denoiser_grad.iter().any(|g| *g != 0.0));
        assert_eq!(full.embedding_grads.len(), 3);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let b = small();
        let cfg = SamplerConfig { steps: 10, mode: SamplerMode::Ancestral };
        let a = sample(&b, "a photo of a lung xray", &cfg, 7).unwrap();
        assert_eq!(a, sample(&b, "a photo of a lung xray", &cfg, 7).unwrap());
        assert_ne!(a.pixels(), sample(&b, "a photo of a lung xray", &cfg, 8).unwrap().pixels());
        assert_eq!((a.width(), a.height()), (64, 64));
        assert_eq!(a.generation.as_ref().unwrap().mode, "ancestral");
        let too_many = SamplerConfig { steps: TOY_T + 1, ..cfg };
        assert!(matches!(sample(&b, "x", &too_many, 0), Err(DiffusionError::InvalidSteps { .. })));
    }

    #[test]
    fn forward_statistics() {
        let s = NoiseSchedule::toy();
        let mut r = rng::seeded(3);
        let n = 20_000;
        for t in [0, 50, 99] {
            let eps = rng::gaussian_vec(&mut r, n);
            let x = forward_diffuse(&vec![0.7; n], t, &eps, &s).unwrap();
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let v = 1.0 - s.alpha_bars[t];
            assert!((mean - 0.7 * s.alpha_bars[t].sqrt()).abs() < 4.0 * (v / n as f64).sqrt());
            assert!((var - v).abs() < 4.0 * v * (2.0 / (n - 1) as f64).sqrt());
        }
    }
}
