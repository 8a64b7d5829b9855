//! Loading images, reports, labels and prompt corpora.

mod image;
mod impression;
mod labels;
mod manifest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use image::{decode_png, encode_png16, encode_png8, GenerationMeta, ImageSample};
pub use impression::extract_impression;
pub use labels::{
    binary_to_states, normalize_labels, primary_class, ChexpertClass, LabelState, LabelVector, NUM_CLASSES,
};
pub use manifest::{
    load_manifest, parse_reports_jsonl, write_image_collection, write_png_collection, write_reports_jsonl, Dataset,
    DatasetKind,
    Loaded, Manifest, ManifestRecord,
};

/// Caption paired with no-finding images.
pub const NEGATIVE_PROMPT: &str = "a photo of a lung xray";
/// Caption paired with pleural-effusion images.
pub const POSITIVE_PROMPT: &str = "a photo of a lung xray with a visible pleural effusion";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("no IMPRESSION section found")]
    MissingSection,
    #[error("IMPRESSION section is empty")]
    EmptySection,
    #[error("{locus}: {message}")]
    Format { locus: String, message: String },
    #[error("image {id}: pixel value {value} outside declared range [0, {range}]")]
    Range { id: String, value: f64, range: f64 },
    #[error("image {id}: source range must be positive and finite, got {range}")]
    SourceRange { id: String, range: f64 },
    #[error("image {id}: {width}x{height} does not match {len} pixels")]
    Shape { id: String, width: usize, height: usize, len: usize },
    #[error("image {id}: png: {message}")]
    Png { id: String, message: String },
    #[error("label vector must have 14 entries, got {0}")]
    LabelArity(usize),
    #[error("label code {0} is not one of -1, 0, 1, null")]
    LabelCode(i64),
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
    #[error("prompt corpus must be non-empty and contain no empty prompts")]
    EmptyCorpus,
    #[error("fine-tuning set needs {wanted} {which} images, found {found}")]
    NotEnoughImages { which: &'static str, wanted: usize, found: usize },
}

impl IngestError {
    pub(crate) fn format(locus: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Format { locus: locus.into(), message: message.into() }
    }
}

/// Extraction outcome for one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Valid,
    MissingImpression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub id: String,
    pub full_text: String,
    /// Empty when `status` is not `Valid`.
    pub impression: String,
    pub labels: LabelVector,
    pub primary_class: ChexpertClass,
    pub status: ReportStatus,
}

impl LabeledReport {
    /// Extracts the impression and assigns the primary class. A report
    /// without a usable impression is kept but flagged.
    pub fn from_text(id: impl Into<String>, full_text: impl Into<String>, labels: LabelVector) -> Self {
        let full_text = full_text.into();
        let (impression, status) = match extract_impression(&full_text) {
            Ok(s) => (s.to_string(), ReportStatus::Valid),
            Err(_) => (String::new(), ReportStatus::MissingImpression),
        };
        LabeledReport { id: id.into(), primary_class: primary_class(&labels), full_text, impression, labels, status }
    }

    pub fn is_valid(&self) -> bool {
        self.status == ReportStatus::Valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusOrigin {
    TemplateExpanded,
    ExternalFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCorpus {
    prompts: Vec<String>,
    origin: CorpusOrigin,
}

impl PromptCorpus {
    pub fn new(prompts: Vec<String>, origin: CorpusOrigin) -> Result<Self, IngestError> {
        if prompts.is_empty() || prompts.iter().any(|p| p.trim().is_empty()) {
            return Err(IngestError::EmptyCorpus);
        }
        Ok(Self { prompts, origin })
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn origin(&self) -> CorpusOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

/// The few-shot fine-tuning set: no-finding images and single-finding
/// images, each paired with exactly one caption.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneSet {
    pub negatives: Vec<ImageSample>,
    pub positives: Vec<ImageSample>,
    /// Captions for `negatives` followed by captions for `positives`.
    pub captions: Vec<String>,
}

impl FinetuneSet {
    pub const DEFAULT_SIZE: usize = 5;

    /// Pairs every negative with `negative_caption` and every positive with
    /// `positive_caption`.
    pub fn new(
        negatives: Vec<ImageSample>,
        positives: Vec<ImageSample>,
        negative_caption: &str,
        positive_caption: &str,
    ) -> Self {
        let captions = std::iter::repeat_n(negative_caption.to_string(), negatives.len())
            .chain(std::iter::repeat_n(positive_caption.to_string(), positives.len()))
            .collect();
        FinetuneSet { negatives, positives, captions }
    }

    /// Selects the first `n_neg` no-finding images and the first `n_pos`
    /// images whose only finding is `finding`, by id order, and captions
    /// them with the two evaluation prompts.
    pub fn assemble(
        images: &[ImageSample],
        finding: ChexpertClass,
        n_neg: usize,
        n_pos: usize,
    ) -> Result<Self, IngestError> {
        let mut sorted: Vec<&ImageSample> = images.iter().filter(|i| i.labels.is_some()).collect();
        sorted.sort_by(|a, b| a.id().cmp(b.id()));
        let positives_of = |img: &ImageSample| -> Vec<ChexpertClass> {
            let b = normalize_labels(img.labels.as_ref().expect("filtered"));
            ChexpertClass::ALL.iter().copied().filter(|c| b[c.index()] == 1).collect()
        };
        let negatives: Vec<ImageSample> = sorted
            .iter()
            .filter(|i| matches!(positives_of(i).as_slice(), [] | [ChexpertClass::NoFinding]))
            .take(n_neg)
            .map(|i| (*i).clone())
            .collect();
        let positives: Vec<ImageSample> = sorted
            .iter()
            .filter(|i| positives_of(i) == [finding])
            .take(n_pos)
            .map(|i| (*i).clone())
            .collect();
        if negatives.len() < n_neg {
            return Err(IngestError::NotEnoughImages { which: "no-finding", wanted: n_neg, found: negatives.len() });
        }
        if positives.len() < n_pos {
            return Err(IngestError::NotEnoughImages { which: "single-finding", wanted: n_pos, found: positives.len() });
        }
        Ok(FinetuneSet::new(negatives, positives, NEGATIVE_PROMPT, POSITIVE_PROMPT))
    }

    /// All `(image, caption)` pairs, negatives first.
    pub fn pairs(&self) -> Vec<(&ImageSample, &str)> {
        self.negatives
            .iter()
            .chain(&self.positives)
            .zip(&self.captions)
            .map(|(i, c)| (i, c.as_str()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.negatives.len() + self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Replaces every caption, e.g. to insert a newly registered token.
    pub fn map_captions(mut self, f: impl Fn(&str) -> String) -> Self {
        self.captions = self.captions.iter().map(|c| f(c)).collect();
        self
    }
}
