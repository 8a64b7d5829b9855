//! Few-shot adaptation of a diffusion bundle: textual inversion, denoiser
//! fine-tuning, and denoiser fine-tuning with a prior-preservation term.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    denoise_loss_parts, sample, DiffusionBundle, DiffusionError, FreezeMask, LatentDist, SamplerConfig,
};
use crate::ingestion::{FinetuneSet, ImageSample};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::projection::LossPoint;
use crate::{io, par, rng};

#[derive(Debug, thiserror::Error)]
pub enum FinetuneError {
    #[error("token {0:?} is already in the vocabulary")]
    DuplicateToken(String),
    #[error("init token {0:?} is not a single vocabulary entry")]
    UnknownInitToken(String),
    #[error("caption {caption:?} does not contain token {surface:?}")]
    TokenNotInCaption { caption: String, surface: String },
    #[error("prior-preservation training needs a non-empty prior set")]
    EmptyPriorSet,
    #[error("fine-tuning set is empty")]
    EmptyData,
    #[error("strategy {got:?} cannot be run by {trainer}")]
    WrongStrategy { got: Strategy, trainer: &'static str },
    #[error("invalid fine-tuning config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

impl FinetuneError {
    pub fn is_numerical(&self) -> bool {
        match self {
            FinetuneError::NonFiniteLoss { .. } => true,
            FinetuneError::Diffusion(e) => e.is_numerical(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TextualInversion,
    Unet,
    UnetWithPrior,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::TextualInversion => "textual_inversion",
            Strategy::Unet => "unet",
            Strategy::UnetWithPrior => "unet_with_prior",
        }
    }
}

/// Caption paired with every prior-set image unless configured otherwise.
pub const DEFAULT_CLASS_CAPTION: &str = "a photo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub strategy: Strategy,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Weight λ of the prior term.
    pub prior_weight: f64,
    /// Prior-set size; `None` means twice the instance-set size.
    pub prior_size: Option<usize>,
    pub class_caption: String,
    /// Sampler used to draw the prior set.
    pub prior_sampler: SamplerConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            strategy: Strategy::UnetWithPrior,
            steps: 400,
            learning_rate: 1e-3,
            batch_size: 4,
            seed: 0,
            optimizer: OptimizerConfig::adam(),
            prior_weight: 1.0,
            prior_size: None,
            class_caption: DEFAULT_CLASS_CAPTION.to_string(),
            prior_sampler: SamplerConfig::default(),
        }
    }
}

impl FinetuneConfig {
    fn validate(&self) -> Result<(), FinetuneError> {
        let bad = |m: &str| Err(FinetuneError::InvalidConfig(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.prior_weight >= 0.0 && self.prior_weight.is_finite()) {
            return bad("prior_weight must be finite and non-negative");
        }
        Ok(())
    }

    pub fn prior_size_for(&self, instances: usize) -> usize {
        self.prior_size.unwrap_or(2 * instances)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRegistration {
    pub surface: String,
    pub token_id: usize,
    pub init: Vec<f64>,
}

/// Adds `surface` to the text encoder. The new row copies `init_from`'s
/// row, or is a seeded Gaussian draw.
pub fn register_token(
    bundle: &mut DiffusionBundle,
    surface: &str,
    init_from: Option<&str>,
) -> Result<TokenRegistration, FinetuneError> {
    if bundle.text.lookup_token(surface).is_some() {
        return Err(FinetuneError::DuplicateToken(surface.to_string()));
    }
    let width = bundle.text.width();
    let init = match init_from {
        Some(word) => {
            let ids = bundle.text.tokenize(word);
            // BOS plus exactly one token
            if ids.len() != 2 {
                return Err(FinetuneError::UnknownInitToken(word.to_string()));
            }
            bundle.text.embedding_table().row(ids[1]).to_vec()
        }
        None => {
            let rows = bundle.text.embedding_table().rows() as u64;
            let mut r = rng::seeded(rng::derive_seed(bundle.seed, &[0x70c, rows]));
            rng::gaussian_vec(&mut r, width).into_iter().map(|v| 0.5 * v).collect()
        }
    };
    let token_id = bundle.text.register_token(surface, init.clone()).map_err(|e| match e {
        DiffusionError::DuplicateToken(s) => FinetuneError::DuplicateToken(s),
        other => other.into(),
    })?;
    Ok(TokenRegistration { surface: surface.to_string(), token_id, init })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorPair {
    pub image: ImageSample,
    pub caption: String,
}

/// `n` images sampled from the bundle with `class_caption`. Sample `i`
/// uses seed `derive_seed(seed, [i])`.
pub fn generate_prior_set(
    bundle: &DiffusionBundle,
    class_caption: &str,
    n: usize,
    seed: u64,
    sampler: &SamplerConfig,
) -> Result<Vec<PriorPair>, FinetuneError> {
    if n == 0 {
        return Err(FinetuneError::EmptyPriorSet);
    }
    let images = par::try_map_range(n, |i| {
        let s = rng::derive_seed(seed, &[i as u64]);
        sample(bundle, class_caption, sampler, s).map(|img| img.with_id(format!("prior-{i:04}")))
    })?;
    Ok(images.into_iter().map(|image| PriorPair { image, caption: class_caption.to_string() }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Total mini-batch loss before each update.
    pub trace: Vec<LossPoint>,
}

impl TrainOutcome {
    /// Mean loss over the first and last `fraction` of steps.
    pub fn head_tail(&self, fraction: f64) -> (f64, f64) {
        let n = self.trace.len();
        let k = ((n as f64 * fraction).round() as usize).clamp(1, n);
        let mean = |s: &[LossPoint]| s.iter().map(|p| p.loss).sum::<f64>() / s.len() as f64;
        (mean(&self.trace[..k]), mean(&self.trace[n - k..]))
    }
}

/// One encoded training example.
struct Example {
    latent: LatentDist,
    ids: Vec<usize>,
}

fn encode_examples<'a>(
    bundle: &DiffusionBundle,
    pairs: impl Iterator<Item = (&'a ImageSample, &'a str)>,
) -> Result<Vec<Example>, FinetuneError> {
    pairs
        .map(|(img, cap)| Ok(Example { latent: bundle.vae.encode_scaled(img)?, ids: bundle.text.tokenize(cap) }))
        .collect()
}

/// Draws a batch and returns the mean loss and mean gradients.
fn batch_gradient(
    bundle: &DiffusionBundle,
    examples: &[Example],
    batch: usize,
    r: &mut rng::Rng,
    mask: &FreezeMask,
    row: Option<usize>,
) -> Result<(f64, Vec<f64>), FinetuneError> {
    let t_len = bundle.schedule.len();
    let n = bundle.latent_len();
    let draws: Vec<(usize, usize, Vec<f64>, Vec<f64>)> = (0..batch)
        .map(|_| {
            let i = r.gen_range(0..examples.len());
            let t = r.gen_range(0..t_len);
            let z = rng::gaussian_vec(r, n);
            let eps = rng::gaussian_vec(r, n);
            (i, t, z, eps)
        })
        .collect();
    let outs = par::try_map_slice(&draws, |(i, t, z, eps)| {
        let ex = &examples[*i];
        let x0 = ex.latent.sample(z);
        denoise_loss_parts(bundle.denoiser.as_ref(), bundle.text.as_ref(), &bundle.schedule, &x0, &ex.ids, *t, eps, Some(mask))
    })?;
    let width = bundle.text.width();
    let len = if row.is_some() { width } else { bundle.denoiser.params().len() };
    let mut grad = vec![0.0; len];
    let mut loss = 0.0;
    let inv = 1.0 / batch as f64;
    for o in outs {
        loss += o.loss * inv;
        match row {
            Some(id) => {
                for (rid, g) in &o.embedding_grads {
                    if *rid == id {
                        crate::tensor::axpy(inv, g, &mut grad);
                    }
                }
            }
            None => crate::tensor::axpy(inv, &o.denoiser_grad, &mut grad),
        }
    }
    Ok((loss, grad))
}

/// Trains only the registered token's embedding row.
pub fn train_textual_inversion(
    bundle: &mut DiffusionBundle,
    data: &FinetuneSet,
    reg: &TokenRegistration,
    cfg: &FinetuneConfig,
) -> Result<TrainOutcome, FinetuneError> {
    cfg.validate()?;
    if cfg.strategy != Strategy::TextualInversion {
        return Err(FinetuneError::WrongStrategy { got: cfg.strategy, trainer: "textual inversion" });
    }
    if data.is_empty() {
        return Err(FinetuneError::EmptyData);
    }
    for c in &data.captions {
        if !bundle.text.tokenize(c).contains(&reg.token_id) {
            return Err(FinetuneError::TokenNotInCaption { caption: c.clone(), surface: reg.surface.clone() });
        }
    }
    let examples = encode_examples(bundle, data.pairs().into_iter())?;
    let mask = FreezeMask::embedding_row(reg.token_id);
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, &[0x71]));
    let width = bundle.text.width();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, width);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (loss, grad) = batch_gradient(bundle, &examples, cfg.batch_size, &mut r, &mask, Some(reg.token_id))
            .map_err(|e| non_finite_at(e, step))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FinetuneError::NonFiniteLoss { step });
        }
        trace.push(LossPoint { step, loss });
        opt.step(bundle.text.embedding_table_mut().row_mut(reg.token_id), &grad);
    }
    Ok(TrainOutcome { trace })
}

fn non_finite_at(e: FinetuneError, step: usize) -> FinetuneError {
    match e {
        FinetuneError::Diffusion(DiffusionError::NonFinite(_)) => FinetuneError::NonFiniteLoss { step },
        other => other,
    }
}

/// Trains only the denoiser. With `Strategy::UnetWithPrior` each step adds
/// `λ ·` the loss on a batch drawn from `prior` through an independent
/// random stream; `λ = 0` skips the prior term.
pub fn train_unet(
    bundle: &mut DiffusionBundle,
    data: &FinetuneSet,
    prior: Option<&[PriorPair]>,
    cfg: &FinetuneConfig,
) -> Result<TrainOutcome, FinetuneError> {
    cfg.validate()?;
    let with_prior = match cfg.strategy {
        Strategy::Unet => false,
        Strategy::UnetWithPrior => true,
        Strategy::TextualInversion => {
            return Err(FinetuneError::WrongStrategy { got: cfg.strategy, trainer: "unet fine-tuning" })
        }
    };
    if data.is_empty() {
        return Err(FinetuneError::EmptyData);
    }
    let prior = prior.unwrap_or(&[]);
    if with_prior && prior.is_empty() {
        return Err(FinetuneError::EmptyPriorSet);
    }
    let examples = encode_examples(bundle, data.pairs().into_iter())?;
    let prior_examples = if with_prior && cfg.prior_weight > 0.0 {
        encode_examples(bundle, prior.iter().map(|p| (&p.image, p.caption.as_str())))?
    } else {
        Vec::new()
    };
    let mask = FreezeMask::denoiser_only();
    let mut r_inst = rng::seeded(rng::derive_seed(cfg.seed, &[0x75]));
    let mut r_prior = rng::seeded(rng::derive_seed(cfg.seed, &[0x76]));
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, bundle.denoiser.params().len());
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let (mut loss, mut grad) = batch_gradient(bundle, &examples, cfg.batch_size, &mut r_inst, &mask, None)
            .map_err(|e| non_finite_at(e, step))?;
        if !prior_examples.is_empty() {
            let (pl, pg) = batch_gradient(bundle, &prior_examples, cfg.batch_size, &mut r_prior, &mask, None)
                .map_err(|e| non_finite_at(e, step))?;
            loss += cfg.prior_weight * pl;
            crate::tensor::axpy(cfg.prior_weight, &pg, &mut grad);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(FinetuneError::NonFiniteLoss { step });
        }
        trace.push(LossPoint { step, loss });
        opt.step(bundle.denoiser.params_mut(), &grad);
    }
    Ok(TrainOutcome { trace })
}

/// Training record written next to a fine-tuned bundle checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub prior_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// `(image id, caption, pixel checksum)` for every training image.
    pub data: Vec<(String, String, String)>,
    pub prior: Vec<(String, String, String)>,
    pub bundle_before: String,
    pub bundle_after: String,
    pub final_loss: f64,
}

pub fn image_checksum(img: &ImageSample) -> String {
    io::param_checksum(img.pixels())
}

#[allow(clippy::too_many_arguments)]
pub fn provenance(
    cfg: &FinetuneConfig,
    data: &FinetuneSet,
    prior: &[PriorPair],
    token: Option<&TokenRegistration>,
    before: &str,
    after: &DiffusionBundle,
    outcome: &TrainOutcome,
) -> Provenance {
    let rec = |img: &ImageSample, cap: &str| (img.id().to_string(), cap.to_string(), image_checksum(img));
    Provenance {
        strategy: cfg.strategy,
        steps: cfg.steps,
        seed: cfg.seed,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        prior_weight: cfg.prior_weight,
        token: token.map(|t| t.surface.clone()),
        data: data.pairs().into_iter().map(|(i, c)| rec(i, c)).collect(),
        prior: prior.iter().map(|p| rec(&p.image, &p.caption)).collect(),
        bundle_before: before.to_string(),
        bundle_after: after.checksum(),
        final_loss: outcome.trace.last().map(|p| p.loss).unwrap_or(f64::NAN),
    }
}

/// Writes the bundle checkpoint, `provenance.json` and `loss.csv` into `dir`.
pub fn save_finetuned(dir: &Path, bundle: &DiffusionBundle, prov: &Provenance, outcome: &TrainOutcome) -> crate::Result<()> {
    crate::diffusion::save_bundle(dir, bundle)?;
    io::write_json(&dir.join("provenance.json"), prov)?;
    io::write_atomic(&dir.join("loss.csv"), crate::projection::loss_trace_csv(&outcome.trace).as_bytes())
}

#[cfg(test)]
mod tests;
