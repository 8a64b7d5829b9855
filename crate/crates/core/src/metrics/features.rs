//! Feature-extractor and classifier contracts, plus the seeded toy
//! extractor used when no pretrained network is available.

use serde::{Deserialize, Serialize};

use crate::ingestion::ImageSample;
use crate::tensor::Matrix;
use crate::{par, rng};

/// Maps an image to a fixed-length feature vector. FID values are only
/// comparable between sets produced by the same `id`.
pub trait FeatureExtractor: Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, img: &ImageSample) -> Vec<f64>;
}

/// Scores one finding. Scores are in `[0, 1]` and deterministic.
pub trait Classifier: Sync {
    fn finding(&self) -> &str;
    fn score(&self, img: &ImageSample) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub features: Matrix,
    pub extractor_id: String,
}

impl FeatureSet {
    pub fn from_images(extractor: &dyn FeatureExtractor, images: &[ImageSample]) -> Self {
        let rows = par::map_slice(images, |img| extractor.extract(img));
        let mut features = Matrix::zeros(0, extractor.dim());
        for r in &rows {
            features.push_row(r);
        }
        FeatureSet { features, extractor_id: extractor.id().to_string() }
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Area-average resample to `out_w` x `out_h`. Every output cell covers at
/// least one source pixel.
pub fn area_resample(img: &ImageSample, out_w: usize, out_h: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let span = |i: usize, n_out: usize, n_in: usize| {
        let lo = i * n_in / n_out;
        let hi = ((i + 1) * n_in / n_out).max(lo + 1).min(n_in);
        (lo.min(n_in - 1), hi)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1) = span(oy, out_h, h);
        for ox in 0..out_w {
            let (x0, x1) = span(ox, out_w, w);
            let mut s = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    s += img.get(x, y);
                }
            }
            out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// `tanh(W · pool16(img) + b)` with seeded uniform weights. Works on any
/// image size because the input is first pooled to a 16x16 grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFeatureExtractor {
    id: String,
    dim: usize,
    weights: Matrix,
    bias: Vec<f64>,
}

const TOY_GRID: usize = 16;

impl ToyFeatureExtractor {
    pub fn new(seed: u64, dim: usize) -> Self {
        let n_in = TOY_GRID * TOY_GRID;
        let mut r = rng::seeded(rng::derive_seed(seed, &[0x7e47]));
        // scaled so pre-activations of [0,1] images stay in tanh's linear-ish range
        let bound = 3.0 / (n_in as f64).sqrt();
        let weights = Matrix::from_vec(dim, n_in, rng::uniform_vec(&mut r, dim * n_in, bound));
        let bias = rng::uniform_vec(&mut r, dim, 0.5);
        ToyFeatureExtractor { id: format!("toy-linear-tanh-{dim}-seed{seed}"), dim, weights, bias }
    }
}

impl FeatureExtractor for ToyFeatureExtractor {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, img: &ImageSample) -> Vec<f64> {
        let x = area_resample(img, TOY_GRID, TOY_GRID);
        self.weights
            .row_iter()
            .zip(&self.bias)
            .map(|(w, b)| (crate::tensor::dot(w, &x) + b).tanh())
            .collect()
    }
}
