//! The three pluggable component contracts.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::bench::EncoderOutput;
use crate::ingestion::ImageSample;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl LatentShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Diagonal Gaussian over latents, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDist {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl LatentDist {
    /// Reparameterised draw `mean + exp(logvar/2)·eps`.
    pub fn sample(&self, eps: &[f64]) -> Vec<f64> {
        self.mean.iter().zip(&self.logvar).zip(eps).map(|((m, lv), e)| m + (0.5 * lv).exp() * e).collect()
    }
}

/// Serializable snapshot of one component: a kind tag, its
/// hyper-parameters and all parameters as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentState {
    pub kind: String,
    pub config: serde_json::Value,
    pub params: Vec<f64>,
}

pub trait LatentVae: Send + Sync + Debug {
    fn image_size(&self) -> (usize, usize);
    fn latent_shape(&self) -> LatentShape;
    /// Multiplies latents after encoding; divides them before decoding.
    fn scaling(&self) -> f64 {
        1.0
    }
    fn encode(&self, img: &ImageSample) -> Result<LatentDist, DiffusionError>;
    /// Decodes an already unscaled latent to pixels (unclamped).
    fn decode_pixels(&self, latent: &[f64]) -> Result<Vec<f64>, DiffusionError>;
    fn state(&self) -> ComponentState;
    fn clone_box(&self) -> Box<dyn LatentVae>;

    /// Encodes and applies the scaling constant.
    fn encode_scaled(&self, img: &ImageSample) -> Result<LatentDist, DiffusionError> {
        let mut d = self.encode(img)?;
        let s = self.scaling();
        if s != 1.0 {
            for m in &mut d.mean {
                *m *= s;
            }
            let shift = 2.0 * s.ln();
            for lv in &mut d.logvar {
                *lv += shift;
            }
        }
        Ok(d)
    }

    /// Inverts the scaling constant, decodes and clamps into an image.
    fn decode(&self, latent: &[f64], id: &str) -> Result<ImageSample, DiffusionError> {
        let s = self.scaling();
        let pixels = if s == 1.0 {
            self.decode_pixels(latent)?
        } else {
            self.decode_pixels(&latent.iter().map(|v| v / s).collect::<Vec<_>>())?
        };
        let (w, h) = self.image_size();
        Ok(ImageSample::from_unclamped(id, w, h, pixels, 65535.0)?)
    }
}

impl Clone for Box<dyn LatentVae> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub trait TextEncoder: Send + Sync + Debug {
    fn id(&self) -> &str;
    /// Conditioning width D.
    fn width(&self) -> usize;
    fn tokenize(&self, text: &str) -> Vec<usize>;
    /// V×D, one row per token id.
    fn embedding_table(&self) -> &Matrix;
    fn embedding_table_mut(&mut self) -> &mut Matrix;
    fn encode_tokens(&self, ids: &[usize]) -> Result<EncoderOutput, DiffusionError>;
    /// Given `∂L/∂token_states`, the gradient for each embedding row the
    /// sequence touches, merged per id and sorted by id.
    fn embedding_grads(&self, ids: &[usize], states: &Matrix, grad_states: &Matrix) -> Vec<(usize, Vec<f64>)>;
    /// Appends a row for `surface`, making it a single token.
    fn register_token(&mut self, surface: &str, init: Vec<f64>) -> Result<usize, DiffusionError>;
    /// Id of a registered multi-character token, if any.
    fn lookup_token(&self, surface: &str) -> Option<usize>;
    /// Id of a plain word.
    fn word_id(&self, word: &str) -> usize;
    /// Parameters outside the embedding table (kept frozen by every trainer).
    fn other_params(&self) -> &[f64];
    fn state(&self) -> ComponentState;
    fn clone_box(&self) -> Box<dyn TextEncoder>;

    fn encode_text(&self, text: &str) -> Result<EncoderOutput, DiffusionError> {
        self.encode_tokens(&self.tokenize(text))
    }
}

impl Clone for Box<dyn TextEncoder> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Gradients of one denoiser evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserGrads {
    pub params: Vec<f64>,
    pub cond: Matrix,
}

pub trait Denoiser: Send + Sync + Debug {
    fn latent_len(&self) -> usize;
    fn cond_width(&self) -> usize;
    fn predict_noise(&self, latent: &[f64], t: usize, cond: &Matrix) -> Result<Vec<f64>, DiffusionError>;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Gradient of `gᵀ·predict_noise(latent, t, cond)` with respect to the
    /// parameters and the conditioning sequence.
    fn backward(&self, latent: &[f64], t: usize, cond: &Matrix, g: &[f64]) -> Result<DenoiserGrads, DiffusionError>;
    fn state(&self) -> ComponentState;
    fn clone_box(&self) -> Box<dyn Denoiser>;
}

impl Clone for Box<dyn Denoiser> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}
