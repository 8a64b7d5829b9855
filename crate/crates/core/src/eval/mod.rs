//! Conditioned generation suites, classifier-based scoring and FID grids.

mod classifier;

pub use classifier::{FitConfig, ToyClassifier};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffusion::{sample, DiffusionBundle, DiffusionError, SamplerConfig};
use crate::ingestion::{ImageSample, NEGATIVE_PROMPT, POSITIVE_PROMPT};
use crate::metrics::{
    classification_report, fid, ClassificationReport, Classifier, FeatureExtractor, FeatureSet, MetricError,
};
use crate::{par, rng};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("only one class present; AUC is undefined")]
    SingleClassOnly,
    #[error("image {0:?} has no expected label")]
    MissingExpectedLabel(String),
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error("classifier: {0}")]
    Classifier(String),
    #[error("{sources} sample sources, {prompts} prompts and {references} reference sets do not line up")]
    GridShape { sources: usize, prompts: usize, references: usize },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl EvalError {
    pub fn is_numerical(&self) -> bool {
        match self {
            EvalError::Diffusion(e) => e.is_numerical(),
            EvalError::Metric(e) => e.is_numerical(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub caption: String,
    pub expected_label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSpec {
    pub prompts: Vec<PromptSpec>,
    pub per_prompt_count: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for GenerationSpec {
    /// The two evaluation prompts, 50 samples each.
    fn default() -> Self {
        GenerationSpec {
            prompts: vec![
                PromptSpec { caption: NEGATIVE_PROMPT.to_string(), expected_label: 0 },
                PromptSpec { caption: POSITIVE_PROMPT.to_string(), expected_label: 1 },
            ],
            per_prompt_count: 50,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidSpec(m));
        if self.per_prompt_count == 0 {
            return bad("per_prompt_count must be at least 1".to_string());
        }
        if self.prompts.is_empty() {
            return bad("no prompts".to_string());
        }
        if let Some(p) = self.prompts.iter().find(|p| p.expected_label > 1) {
            return bad(format!("expected_label {} for {:?} is not 0 or 1", p.expected_label, p.caption));
        }
        Ok(())
    }
}

/// Per-sample seed; extending a suite never changes existing samples.
pub fn sample_seed(seed: u64, prompt_index: usize, sample_index: usize) -> u64 {
    rng::derive_seed(seed, &[prompt_index as u64, sample_index as u64])
}

/// `per_prompt_count` images per prompt, prompt-major. Ids are
/// `p{prompt}-s{sample}`.
pub fn generate_suite(bundle: &DiffusionBundle, spec: &GenerationSpec) -> Result<Vec<ImageSample>, EvalError> {
    spec.validate()?;
    let n = spec.per_prompt_count;
    let images = par::try_map_range(spec.prompts.len() * n, |k| {
        let (p, s) = (k / n, k % n);
        let prompt = &spec.prompts[p];
        let mut img = sample(bundle, &prompt.caption, &spec.sampler, sample_seed(spec.seed, p, s))?;
        if let Some(g) = img.generation.as_mut() {
            g.expected_label = Some(prompt.expected_label);
        }
        Ok::<_, DiffusionError>(img.with_id(format!("p{p:02}-s{s:04}")))
    })?;
    Ok(images)
}

/// Scores every image and compares with its recorded expected label.
pub fn evaluate_generated(images: &[ImageSample], clf: &dyn Classifier) -> Result<ClassificationReport, EvalError> {
    let truth: Vec<bool> = images
        .iter()
        .map(|img| {
            img.generation
                .as_ref()
                .and_then(|g| g.expected_label)
                .map(|l| l == 1)
                .ok_or_else(|| EvalError::MissingExpectedLabel(img.id().to_string()))
        })
        .collect::<Result<_, _>>()?;
    if truth.iter().all(|t| *t) || truth.iter().all(|t| !*t) {
        return Err(EvalError::SingleClassOnly);
    }
    let scores = par::map_slice(images, |img| clf.score(img));
    Ok(classification_report(&scores, &truth)?)
}

/// One row of the generation-classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub method: String,
    pub prevalence: u64,
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl ClassificationRow {
    /// Prevalence is the number of expected positives.
    pub fn new(method: &str, report: &ClassificationReport) -> Self {
        ClassificationRow {
            method: method.to_string(),
            prevalence: report.confusion.tp + report.confusion.fn_,
            auc: report.auc,
            accuracy: report.accuracy,
            f1: report.f1,
            precision: report.precision,
            recall: report.recall,
        }
    }
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

pub fn classification_csv(rows: &[ClassificationRow]) -> String {
    let mut s = String::from("Method,Prevalence,AUC,Accuracy,F1Score,Precision,Recall\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            csv_field(&r.method),
            r.prevalence,
            r.auc.map(fmt3).unwrap_or_default(),
            fmt3(r.accuracy),
            fmt3(r.f1),
            fmt3(r.precision),
            fmt3(r.recall)
        ));
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Anything that can produce images for a caption.
pub trait SampleSource: Sync {
    fn name(&self) -> &str;
    fn generate(&self, caption: &str, count: usize, seed: u64) -> Result<Vec<ImageSample>, EvalError>;
}

/// Samples a bundle with per-sample seeds `sample_seed(seed, 0, i)`.
pub struct BundleSource<'a> {
    pub name: String,
    pub bundle: &'a DiffusionBundle,
    pub sampler: SamplerConfig,
}

impl SampleSource for BundleSource<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, caption: &str, count: usize, seed: u64) -> Result<Vec<ImageSample>, EvalError> {
        Ok(par::try_map_range(count, |i| sample(self.bundle, caption, &self.sampler, sample_seed(seed, 0, i)))?)
    }
}

/// Returns stored images per caption, ignoring count and seed.
pub struct ReplaySource {
    pub name: String,
    pub images: BTreeMap<String, Vec<ImageSample>>,
}

impl SampleSource for ReplaySource {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, caption: &str, _count: usize, _seed: u64) -> Result<Vec<ImageSample>, EvalError> {
        self.images.get(caption).cloned().ok_or_else(|| EvalError::InvalidSpec(format!("no replay images for {caption:?}")))
    }
}

/// FID per (source, prompt).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidGrid {
    pub extractor_id: String,
    pub sources: Vec<String>,
    pub prompts: Vec<String>,
    /// `values[source][prompt]`.
    pub values: Vec<Vec<f64>>,
}

impl FidGrid {
    /// One row per source, one column per prompt.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("Strategy");
        for p in &self.prompts {
            s.push(',');
            s.push_str(&csv_field(p));
        }
        s.push('\n');
        for (name, row) in self.sources.iter().zip(&self.values) {
            s.push_str(&csv_field(name));
            for v in row {
                s.push_str(&format!(",{v:.4}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn fid_grid(
    sources: &[&dyn SampleSource],
    prompts: &[String],
    references: &[FeatureSet],
    extractor: &dyn FeatureExtractor,
    per_prompt_count: usize,
    seed: u64,
) -> Result<FidGrid, EvalError> {
    if prompts.len() != references.len() || sources.is_empty() || prompts.is_empty() {
        return Err(EvalError::GridShape { sources: sources.len(), prompts: prompts.len(), references: references.len() });
    }
    if per_prompt_count < 2 {
        return Err(EvalError::InvalidSpec("per_prompt_count must be at least 2 for FID".to_string()));
    }
    let mut values = Vec::with_capacity(sources.len());
    for src in sources {
        let mut row = Vec::with_capacity(prompts.len());
        for (p, (prompt, reference)) in prompts.iter().zip(references).enumerate() {
            let images = src.generate(prompt, per_prompt_count, rng::derive_seed(seed, &[p as u64]))?;
            let feats = FeatureSet::from_images(extractor, &images);
            row.push(fid(&feats, reference)?);
        }
        values.push(row);
    }
    Ok(FidGrid {
        extractor_id: extractor.id().to_string(),
        sources: sources.iter().map(|s| s.name().to_string()).collect(),
        prompts: prompts.to_vec(),
        values,
    })
}
