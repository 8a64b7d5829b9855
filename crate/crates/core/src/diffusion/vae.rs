//! Toy latent autoencoder: a fixed orthogonal transform per patch location.
//!
//! For every `p×p` patch location the pre-fit routine takes the leading
//! principal directions of that location's training patches. A latent
//! channel is the projection onto one direction divided by its training
//! standard deviation, so latents are roughly unit-variance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::contracts::{ComponentState, LatentDist, LatentShape, LatentVae};
use super::DiffusionError;
use crate::ingestion::ImageSample;
use crate::par;

pub const TOY_VAE_KIND: &str = "toy-patch-pca-vae";

/// Floor on per-channel scales so near-constant directions do not blow up.
const MIN_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyVaeConfig {
    pub image_size: usize,
    pub patch: usize,
    pub channels: usize,
    /// Constant log-variance reported by `encode`.
    pub logvar: f64,
}

impl Default for ToyVaeConfig {
    fn default() -> Self {
        ToyVaeConfig { image_size: 64, patch: 8, channels: 4, logvar: -9.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyVae {
    cfg: ToyVaeConfig,
    /// mean image | basis (loc, channel, pixel) | scales (loc, channel)
    params: Vec<f64>,
}

impl ToyVae {
    fn grid(&self) -> usize {
        self.cfg.image_size / self.cfg.patch
    }

    fn sizes(cfg: &ToyVaeConfig) -> (usize, usize, usize) {
        let locs = (cfg.image_size / cfg.patch).pow(2);
        let pix = cfg.patch * cfg.patch;
        (cfg.image_size * cfg.image_size, locs * cfg.channels * pix, locs * cfg.channels)
    }

    fn validate(cfg: &ToyVaeConfig) -> Result<(), DiffusionError> {
        if cfg.patch == 0 || cfg.image_size == 0 || !cfg.image_size.is_multiple_of(cfg.patch) {
            return Err(DiffusionError::InconsistentDims(format!(
                "patch {} does not tile image size {}",
                cfg.patch, cfg.image_size
            )));
        }
        if cfg.channels == 0 || cfg.channels > cfg.patch * cfg.patch {
            return Err(DiffusionError::InconsistentDims(format!(
                "{} channels for {}-pixel patches",
                cfg.channels,
                cfg.patch * cfg.patch
            )));
        }
        Ok(())
    }

    /// Pre-fit on `images` (all `image_size` square).
    pub fn fit(cfg: ToyVaeConfig, images: &[ImageSample]) -> Result<Self, DiffusionError> {
        Self::validate(&cfg)?;
        if images.len() < 2 {
            return Err(DiffusionError::NotEnoughData { what: "vae fit images", needed: 2, got: images.len() });
        }
        for img in images {
            if (img.width(), img.height()) != (cfg.image_size, cfg.image_size) {
                return Err(DiffusionError::ShapeMismatch {
                    what: "image",
                    expected: cfg.image_size * cfg.image_size,
                    got: img.width() * img.height(),
                });
            }
        }
        let n = cfg.image_size;
        let p = cfg.patch;
        let grid = n / p;
        let pix = p * p;
        let count = images.len() as f64;
        let mut mean = vec![0.0; n * n];
        for img in images {
            for (m, v) in mean.iter_mut().zip(img.pixels()) {
                *m += v / count;
            }
        }
        let per_loc = par::map_range(grid * grid, |loc| {
            let (gy, gx) = (loc / grid, loc % grid);
            let mut cov = DMatrix::<f64>::zeros(pix, pix);
            let mut centred = vec![0.0; pix];
            for img in images {
                for (k, c) in centred.iter_mut().enumerate() {
                    let idx = (gy * p + k / p) * n + gx * p + k % p;
                    *c = img.pixels()[idx] - mean[idx];
                }
                for a in 0..pix {
                    for b in 0..pix {
                        cov[(a, b)] += centred[a] * centred[b];
                    }
                }
            }
            cov /= count - 1.0;
            let eig = SymmetricEigen::new(cov);
            let mut order: Vec<usize> = (0..pix).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
            let mut basis = Vec::with_capacity(cfg.channels * pix);
            let mut scales = Vec::with_capacity(cfg.channels);
            for &j in order.iter().take(cfg.channels) {
                let col = eig.eigenvectors.column(j);
                // sign convention: largest-magnitude entry positive
                let pivot = (0..pix).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a))).unwrap();
                let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
                basis.extend(col.iter().map(|v| v * sign));
                scales.push(eig.eigenvalues[j].max(0.0).sqrt().max(MIN_SCALE));
            }
            (basis, scales)
        });
        let (_, nb, ns) = Self::sizes(&cfg);
        let mut params = mean;
        params.reserve(nb + ns);
        for (b, _) in &per_loc {
            params.extend_from_slice(b);
        }
        for (_, s) in &per_loc {
            params.extend_from_slice(s);
        }
        Ok(ToyVae { cfg, params })
    }

    pub fn from_state(state: &ComponentState) -> Result<Self, DiffusionError> {
        let cfg: ToyVaeConfig = serde_json::from_value(state.config.clone())
            .map_err(|e| DiffusionError::BadComponent(format!("vae config: {e}")))?;
        Self::validate(&cfg)?;
        let (a, b, c) = Self::sizes(&cfg);
        if state.params.len() != a + b + c {
            return Err(DiffusionError::ShapeMismatch { what: "vae params", expected: a + b + c, got: state.params.len() });
        }
        Ok(ToyVae { cfg, params: state.params.clone() })
    }

    pub fn config(&self) -> ToyVaeConfig {
        self.cfg
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn parts(&self) -> (&[f64], &[f64], &[f64]) {
        let (a, b, _) = Self::sizes(&self.cfg);
        (&self.params[..a], &self.params[a..a + b], &self.params[a + b..])
    }
}

impl LatentVae for ToyVae {
    fn image_size(&self) -> (usize, usize) {
        (self.cfg.image_size, self.cfg.image_size)
    }

    fn latent_shape(&self) -> LatentShape {
        LatentShape { channels: self.cfg.channels, height: self.grid(), width: self.grid() }
    }

    fn encode(&self, img: &ImageSample) -> Result<LatentDist, DiffusionError> {
        let n = self.cfg.image_size;
        if (img.width(), img.height()) != (n, n) {
            return Err(DiffusionError::ShapeMismatch { what: "image", expected: n * n, got: img.width() * img.height() });
        }
        let (mean, basis, scales) = self.parts();
        let p = self.cfg.patch;
        let grid = self.grid();
        let pix = p * p;
        let ch = self.cfg.channels;
        let mut z = vec![0.0; ch * grid * grid];
        for loc in 0..grid * grid {
            let (gy, gx) = (loc / grid, loc % grid);
            for c in 0..ch {
                let u = &basis[(loc * ch + c) * pix..(loc * ch + c + 1) * pix];
                let mut acc = 0.0;
                for (k, uk) in u.iter().enumerate() {
                    let idx = (gy * p + k / p) * n + gx * p + k % p;
                    acc += uk * (img.pixels()[idx] - mean[idx]);
                }
                z[c * grid * grid + loc] = acc / scales[loc * ch + c];
            }
        }
        let logvar = vec![self.cfg.logvar; z.len()];
        Ok(LatentDist { mean: z, logvar })
    }

    fn decode_pixels(&self, latent: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        let shape = self.latent_shape();
        if latent.len() != shape.len() {
            return Err(DiffusionError::ShapeMismatch { what: "latent", expected: shape.len(), got: latent.len() });
        }
        let (mean, basis, scales) = self.parts();
        let n = self.cfg.image_size;
        let p = self.cfg.patch;
        let grid = self.grid();
        let pix = p * p;
        let ch = self.cfg.channels;
        let mut out = mean.to_vec();
        for loc in 0..grid * grid {
            let (gy, gx) = (loc / grid, loc % grid);
            for c in 0..ch {
                let coef = latent[c * grid * grid + loc] * scales[loc * ch + c];
                let u = &basis[(loc * ch + c) * pix..(loc * ch + c + 1) * pix];
                for (k, uk) in u.iter().enumerate() {
                    out[(gy * p + k / p) * n + gx * p + k % p] += coef * uk;
                }
            }
        }
        Ok(out)
    }

    fn state(&self) -> ComponentState {
        ComponentState {
            kind: TOY_VAE_KIND.to_string(),
            config: serde_json::to_value(self.cfg).expect("config serializes"),
            params: self.params.clone(),
        }
    }

    fn clone_box(&self) -> Box<dyn LatentVae> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rmse_normalized;
    use crate::synthetic::toy_corpus;

    #[test]
    fn round_trip_after_fit() {
        let train = toy_corpus(0, 64, true);
        let vae = ToyVae::fit(ToyVaeConfig::default(), &train).unwrap();
        assert_eq!(vae.latent_shape(), LatentShape { channels: 4, height: 8, width: 8 });
        let mut worst: f64 = 0.0;
        for img in &train {
            let z = vae.encode(img).unwrap();
            let back = vae.decode(&z.mean, img.id()).unwrap();
            worst = worst.max(rmse_normalized(img, &back).unwrap());
        }
        assert!(worst < 0.05, "worst rmse {worst}");
        // held-out images from the same family also reconstruct
        for img in toy_corpus(5000, 8, true) {
            let back = vae.decode(&vae.encode(&img).unwrap().mean, "x").unwrap();
            assert!(rmse_normalized(&img, &back).unwrap() < 0.05);
        }
    }

    #[test]
    fn state_round_trip_and_errors() {
        let vae = ToyVae::fit(ToyVaeConfig::default(), &toy_corpus(1, 8, true)).unwrap();
        assert_eq!(ToyVae::from_state(&vae.state()).unwrap(), vae);
        assert!(ToyVae::fit(ToyVaeConfig::default(), &toy_corpus(1, 1, false)).is_err());
        let bad = ToyVaeConfig { patch: 7, ..Default::default() };
        assert!(matches!(ToyVae::fit(bad, &toy_corpus(1, 4, false)), Err(DiffusionError::InconsistentDims(_))));
        assert!(vae.decode_pixels(&[0.0; 3]).is_err());
    }
}
