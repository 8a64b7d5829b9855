use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::contracts::{ComponentState, Denoiser, LatentVae, TextEncoder};
use super::denoiser::{preconditioning, ToyDenoiser, ToyDenoiserConfig, TOY_DENOISER_KIND};
use super::schedule::{make_schedule, NoiseSchedule, TOY_BETA_END, TOY_BETA_START, TOY_T};
use super::text::{ToyTextConfig, ToyTextEncoder, TOY_TEXT_KIND};
use super::vae::{ToyVae, ToyVaeConfig, TOY_VAE_KIND};
use super::DiffusionError;
use crate::{io, rng, synthetic};

/// VAE, text encoder, denoiser and schedule with mutually consistent sizes.
#[derive(Debug, Clone)]
pub struct DiffusionBundle {
    pub vae: Box<dyn LatentVae>,
    pub text: Box<dyn TextEncoder>,
    pub denoiser: Box<dyn Denoiser>,
    pub schedule: NoiseSchedule,
    pub seed: u64,
}

impl DiffusionBundle {
    pub fn assemble(
        vae: Box<dyn LatentVae>,
        text: Box<dyn TextEncoder>,
        denoiser: Box<dyn Denoiser>,
        schedule: NoiseSchedule,
        seed: u64,
    ) -> Result<Self, DiffusionError> {
        let latent = vae.latent_shape().len();
        if denoiser.latent_len() != latent {
            return Err(DiffusionError::InconsistentDims(format!(
                "vae latent has {latent} values, denoiser expects {}",
                denoiser.latent_len()
            )));
        }
        if denoiser.cond_width() != text.width() {
            return Err(DiffusionError::InconsistentDims(format!(
                "text encoder width {}, denoiser conditioning width {}",
                text.width(),
                denoiser.cond_width()
            )));
        }
        if schedule.is_empty() {
            return Err(DiffusionError::InconsistentDims("empty noise schedule".to_string()));
        }
        Ok(DiffusionBundle { vae, text, denoiser, schedule, seed })
    }

    pub fn latent_len(&self) -> usize {
        self.denoiser.latent_len()
    }

    /// Every parameter, grouped: `vae`, `text.embeddings`, `text.other`,
    /// `denoiser`.
    pub fn parameter_blocks(&self) -> Vec<(&'static str, Vec<f64>)> {
        vec![
            ("vae", self.vae.state().params),
            ("text.embeddings", self.text.embedding_table().as_slice().to_vec()),
            ("text.other", self.text.other_params().to_vec()),
            ("denoiser", self.denoiser.params().to_vec()),
        ]
    }

    pub fn checksum(&self) -> String {
        let all: Vec<f64> = self.parameter_blocks().into_iter().flat_map(|(_, p)| p).collect();
        io::param_checksum(&all)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyBundleConfig {
    pub seed: u64,
    pub image_size: usize,
    pub patch: usize,
    pub latent_channels: usize,
    pub cond_width: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub vocab_base: usize,
    pub max_len: usize,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Synthetic images used to pre-fit the VAE.
    pub vae_fit_images: usize,
}

impl Default for ToyBundleConfig {
    fn default() -> Self {
        ToyBundleConfig {
            seed: 0,
            image_size: synthetic::TOY_SIZE,
            patch: 8,
            latent_channels: 4,
            cond_width: 768,
            hidden: 256,
            time_dim: 32,
            vocab_base: 1024,
            max_len: 32,
            timesteps: TOY_T,
            beta_start: TOY_BETA_START,
            beta_end: TOY_BETA_END,
            vae_fit_images: 64,
        }
    }
}

pub fn build_toy_bundle(cfg: &ToyBundleConfig) -> Result<DiffusionBundle, DiffusionError> {
    if cfg.image_size != synthetic::TOY_SIZE {
        return Err(DiffusionError::InconsistentDims(format!(
            "toy images are {}x{}, got image_size {}",
            synthetic::TOY_SIZE,
            synthetic::TOY_SIZE,
            cfg.image_size
        )));
    }
    let schedule = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)?;
    let fit = synthetic::toy_corpus(rng::derive_seed(cfg.seed, &[1]) % 1_000_000, cfg.vae_fit_images, true);
    let vae_cfg = ToyVaeConfig { image_size: cfg.image_size, patch: cfg.patch, channels: cfg.latent_channels, ..Default::default() };
    let vae = ToyVae::fit(vae_cfg, &fit)?;
    let text = ToyTextEncoder::new(ToyTextConfig {
        width: cfg.cond_width,
        vocab_base: cfg.vocab_base,
        max_len: cfg.max_len,
        seed: rng::derive_seed(cfg.seed, &[2]),
        registered: Vec::new(),
    })?;
    let (skip, scale) = preconditioning(&schedule);
    let denoiser = ToyDenoiser::new(ToyDenoiserConfig {
        latent_len: vae.latent_shape().len(),
        cond_width: cfg.cond_width,
        hidden: cfg.hidden,
        time_dim: cfg.time_dim,
        seed: rng::derive_seed(cfg.seed, &[3]),
        skip,
        scale,
    })?;
    DiffusionBundle::assemble(Box::new(vae), Box::new(text), Box::new(denoiser), schedule, cfg.seed)
}

const BUNDLE_FORMAT: &str = "latentbench-bundle-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentEntry {
    kind: String,
    config: serde_json::Value,
    payload: PathBuf,
    len: usize,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleManifest {
    format: String,
    seed: u64,
    schedule: NoiseSchedule,
    vae: ComponentEntry,
    text: ComponentEntry,
    denoiser: ComponentEntry,
}

/// Writes `bundle.json` plus one float32 payload per component into `dir`
/// and returns the manifest path.
pub fn save_bundle(dir: &Path, bundle: &DiffusionBundle) -> crate::Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let write = |name: &str, state: ComponentState| -> crate::Result<ComponentEntry> {
        let mut bytes = Vec::with_capacity(state.params.len() * 4);
        io::push_f32_le(&mut bytes, &state.params);
        let payload = PathBuf::from(format!("{name}.f32"));
        io::write_atomic(&dir.join(&payload), &bytes)?;
        Ok(ComponentEntry {
            kind: state.kind,
            config: state.config,
            payload,
            len: state.params.len(),
            sha256: io::sha256_hex(&bytes),
        })
    };
    let manifest = BundleManifest {
        format: BUNDLE_FORMAT.to_string(),
        seed: bundle.seed,
        schedule: bundle.schedule.clone(),
        vae: write("vae", bundle.vae.state())?,
        text: write("text", bundle.text.state())?,
        denoiser: write("denoiser", bundle.denoiser.state())?,
    };
    let path = dir.join("bundle.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}

pub fn load_bundle(manifest_path: &Path) -> crate::Result<DiffusionBundle> {
    let m: BundleManifest = io::read_json(manifest_path)?;
    if m.format != BUNDLE_FORMAT {
        return Err(crate::Error::format(manifest_path, format!("unexpected bundle format {:?}", m.format)));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let read = |e: &ComponentEntry| -> crate::Result<ComponentState> {
        let path = io::resolve(base, &e.payload);
        let bytes = io::read_bytes(&path)?;
        if io::sha256_hex(&bytes) != e.sha256 {
            return Err(crate::Error::format(&path, "payload checksum mismatch"));
        }
        let params = io::f32_le_at(&bytes, 0, e.len)
            .filter(|_| bytes.len() == e.len * 4)
            .ok_or_else(|| crate::Error::format(&path, format!("expected {} float32 values", e.len)))?;
        Ok(ComponentState { kind: e.kind.clone(), config: e.config.clone(), params })
    };
    let vae = read(&m.vae)?;
    let text = read(&m.text)?;
    let den = read(&m.denoiser)?;
    let vae: Box<dyn LatentVae> = match vae.kind.as_str() {
        TOY_VAE_KIND => Box::new(ToyVae::from_state(&vae)?),
        other => return Err(DiffusionError::UnknownComponent(other.to_string()).into()),
    };
    let text: Box<dyn TextEncoder> = match text.kind.as_str() {
        TOY_TEXT_KIND => Box::new(ToyTextEncoder::from_state(&text)?),
        other => return Err(DiffusionError::UnknownComponent(other.to_string()).into()),
    };
    let denoiser: Box<dyn Denoiser> = match den.kind.as_str() {
        TOY_DENOISER_KIND => Box::new(ToyDenoiser::from_state(&den)?),
        other => return Err(DiffusionError::UnknownComponent(other.to_string()).into()),
    };
    Ok(DiffusionBundle::assemble(vae, text, denoiser, m.schedule, m.seed)?)
}
