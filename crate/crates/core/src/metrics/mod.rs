//! Image-quality, distribution and classification metrics.
//!
//! Everything here is a pure function of its inputs. Multi-image routines
//! fan out through [`crate::par`] and reduce in index order, so results are
//! bit-identical with and without the `parallel` feature.

mod classification;
mod features;
mod fid;
mod pixel;
mod recon;
mod ssim;

use thiserror::Error;

pub use classification::{
    classification_report, cosine_similarity, roc_auc, ClassificationReport, Confusion, DECISION_THRESHOLD,
};
pub use features::{area_resample, Classifier, FeatureExtractor, FeatureSet, ToyFeatureExtractor};
pub use fid::{fid, FID_JITTER};
pub use pixel::{pair_metrics, psnr, rmse, rmse_normalized, PairMetrics};
pub use recon::{
    reconstruction_report, FidSummary, FindingRow, PairRecord, ReconstructionReport, Summary,
    RECON_REPORT_SCHEMA_VERSION,
};
pub use ssim::{ssim, SSIM_SIGMA, SSIM_WINDOW};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("source ranges differ: {a} vs {b}")]
    RangeMismatch { a: f64, b: f64 },
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { width: usize, height: usize, window: usize },
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature matrix contains non-finite values")]
    NonFiniteFeatures,
    #[error("covariance square root failed even after jitter")]
    DegenerateCovariance,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("length mismatch: {a} scores vs {b} labels")]
    LengthMismatch { a: usize, b: usize },
    #[error("non-finite score at index {0}")]
    NonFiniteScore(usize),
    #[error("no reconstruction paired with original {0:?}")]
    MissingPair(String),
    #[error("image {0:?} has no label vector")]
    MissingLabels(String),
    #[error("unknown finding {0:?}")]
    UnknownFinding(String),
    #[error("pair {id}: {source}")]
    Pair {
        id: String,
        #[source]
        source: Box<MetricError>,
    },
}

impl MetricError {
    pub fn is_numerical(&self) -> bool {
        match self {
            MetricError::DegenerateCovariance | MetricError::NonFiniteFeatures | MetricError::NonFiniteScore(_) => true,
            MetricError::Pair { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
