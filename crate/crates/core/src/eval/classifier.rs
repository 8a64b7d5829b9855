//! Toy abnormality classifier: logistic regression on a 16x16 area-pooled
//! image, standardised per feature.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingestion::ImageSample;
use crate::metrics::{area_resample, Classifier};
use crate::par;

const GRID: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyClassifier {
    pub finding: String,
    pub grid: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// How the fixture was produced.
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub corpus_seed: u64,
    pub corpus_size: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { corpus_seed: 424_242, corpus_size: 400, iterations: 2000, learning_rate: 0.5, l2: 1e-2 }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

const FIXTURE: &str = include_str!("../../fixtures/toy_classifier.json");

impl ToyClassifier {
    /// The shipped classifier, pre-fit on synthetic images.
    pub fn fixture() -> Self {
        serde_json::from_str(FIXTURE).expect("bundled classifier fixture parses")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let c: ToyClassifier = serde_json::from_str(text).map_err(|e| EvalError::Classifier(e.to_string()))?;
        let n = c.grid * c.grid;
        if c.mean.len() != n || c.scale.len() != n || c.weights.len() != n {
            return Err(EvalError::Classifier(format!("expected {n} weights for a {0}x{0} grid", c.grid)));
        }
        Ok(c)
    }

    /// Full-batch gradient descent on the mean logistic loss plus
    /// `l2/2·‖w‖²`, from zero weights.
    pub fn fit(finding: &str, images: &[ImageSample], labels: &[bool], cfg: FitConfig) -> Result<Self, EvalError> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(EvalError::Classifier("need one label per image".to_string()));
        }
        if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
            return Err(EvalError::SingleClassOnly);
        }
        let n_feat = GRID * GRID;
        let raw: Vec<Vec<f64>> = par::map_slice(images, |img| area_resample(img, GRID, GRID));
        let count = raw.len() as f64;
        let mut mean = vec![0.0; n_feat];
        for r in &raw {
            crate::tensor::axpy(1.0 / count, r, &mut mean);
        }
        let mut scale = vec![0.0; n_feat];
        for r in &raw {
            for (s, (v, m)) in scale.iter_mut().zip(r.iter().zip(&mean)) {
                *s += (v - m) * (v - m) / count;
            }
        }
        for s in &mut scale {
            *s = s.sqrt().max(1e-3);
        }
        let x: Vec<Vec<f64>> =
            raw.iter().map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect()).collect();
        let mut w = vec![0.0; n_feat];
        let mut b = 0.0;
        for _ in 0..cfg.iterations {
            let mut gw: Vec<f64> = w.iter().map(|wi| cfg.l2 * wi).collect();
            let mut gb = 0.0;
            for (xi, &yi) in x.iter().zip(labels) {
                let p = sigmoid(crate::tensor::dot(&w, xi) + b);
                let d = (p - if yi { 1.0 } else { 0.0 }) / count;
                crate::tensor::axpy(d, xi, &mut gw);
                gb += d;
            }
            crate::tensor::axpy(-cfg.learning_rate, &gw, &mut w);
            b -= cfg.learning_rate * gb;
        }
        Ok(ToyClassifier { finding: finding.to_string(), grid: GRID, mean, scale, weights: w, bias: b, fit: cfg })
    }

    /// Fits on the synthetic corpus described by `cfg`: alternating normal
    /// and blob images.
    pub fn fit_synthetic(cfg: FitConfig) -> Result<Self, EvalError> {
        let images = crate::synthetic::toy_corpus(cfg.corpus_seed, cfg.corpus_size, true);
        let labels: Vec<bool> = (0..images.len()).map(|i| i % 2 == 1).collect();
        Self::fit("Pleural Effusion", &images, &labels, cfg)
    }
}

impl Classifier for ToyClassifier {
    fn finding(&self) -> &str {
        &self.finding
    }

    fn score(&self, img: &ImageSample) -> f64 {
        let x = area_resample(img, self.grid, self.grid);
        let z: f64 = x
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((v, m), s), w)| w * (v - m) / s)
            .sum();
        sigmoid(z + self.bias)
    }
}
