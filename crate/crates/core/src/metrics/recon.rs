//! Paired reconstruction evaluation: per-pair RMSE/PSNR/SSIM, FID over
//! fixed-size batches, embedding cosine similarity and optional per-finding
//! classification on originals versus reconstructions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    classification_report, cosine_similarity, fid, pair_metrics, Classifier, ClassificationReport, FeatureExtractor,
    FeatureSet, MetricError, PairMetrics,
};
use crate::ingestion::{normalize_labels, ChexpertClass, ImageSample};
use crate::par;
use crate::tensor::Matrix;

pub const RECON_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(serialize_with = "super::pixel::inf_as_null", deserialize_with = "super::pixel::null_as_inf")]
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub sd: f64,
    #[serde(serialize_with = "super::pixel::inf_as_null", deserialize_with = "super::pixel::null_as_inf")]
    pub median: f64,
    pub min: f64,
    #[serde(serialize_with = "super::pixel::inf_as_null", deserialize_with = "super::pixel::null_as_inf")]
    pub max: f64,
    pub count: usize,
}

impl Summary {
    /// Panics on an empty slice.
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "summary of no values");
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 && mean.is_finite() {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        Summary { mean, sd, median, min: sorted[0], max: sorted[n - 1], count: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    #[serde(flatten)]
    pub metrics: PairMetrics,
    pub embedding_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidSummary {
    pub batch_size: usize,
    pub batches: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

/// One row of the per-finding table (originals vs reconstructions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingRow {
    pub finding: String,
    pub prevalence: f64,
    pub original: ClassificationReport,
    pub reconstruction: ClassificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub schema_version: u32,
    pub extractor_id: String,
    pub pairs: Vec<PairRecord>,
    pub rmse: Summary,
    pub psnr: Summary,
    pub ssim: Summary,
    pub embedding_cosine: Summary,
    /// `None` with fewer than two pairs.
    pub fid: Option<FidSummary>,
    pub findings: Vec<FindingRow>,
}

impl ReconstructionReport {
    /// CSV with columns Finding, Prevalence, AUC/Accuracy/F1 for originals
    /// and reconstructions. Undefined AUCs are left empty.
    pub fn findings_csv(&self) -> String {
        let mut out = String::from(
            "Finding,Prevalence,AUC orig,AUC recon,Accuracy orig,Accuracy recon,F1 orig,F1 recon\n",
        );
        let auc = |a: Option<f64>| a.map(|v| format!("{v:.3}")).unwrap_or_default();
        for r in &self.findings {
            out.push_str(&format!(
                "{},{:.3},{},{},{:.3},{:.3},{:.3},{:.3}\n",
                r.finding,
                r.prevalence,
                auc(r.original.auc),
                auc(r.reconstruction.auc),
                r.original.accuracy,
                r.reconstruction.accuracy,
                r.original.f1,
                r.reconstruction.f1
            ));
        }
        out
    }
}

/// Matches originals and reconstructions by id; both sides must carry the
/// same id set.
fn match_pairs<'a>(
    originals: &'a [ImageSample],
    reconstructions: &'a [ImageSample],
) -> Result<Vec<(&'a ImageSample, &'a ImageSample)>, MetricError> {
    let recon: BTreeMap<&str, &ImageSample> = reconstructions.iter().map(|r| (r.id(), r)).collect();
    let orig: BTreeMap<&str, &ImageSample> = originals.iter().map(|o| (o.id(), o)).collect();
    if let Some(id) = recon.keys().find(|id| !orig.contains_key(*id)) {
        return Err(MetricError::MissingPair(id.to_string()));
    }
    orig.into_iter()
        .map(|(id, o)| recon.get(id).map(|r| (o, *r)).ok_or_else(|| MetricError::MissingPair(id.to_string())))
        .collect()
}

/// Splits `n` items into consecutive batches of `batch_size`; a trailing
/// batch with fewer than two items is merged into its predecessor.
fn fid_batches(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> =
        (0..n).step_by(batch_size.max(2)).map(|s| s..(s + batch_size.max(2)).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < 2) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("has predecessor").end = last.end;
    }
    out.retain(|r| r.len() >= 2);
    out
}

pub fn reconstruction_report(
    originals: &[ImageSample],
    reconstructions: &[ImageSample],
    embedder: &dyn FeatureExtractor,
    classifiers: &[&dyn Classifier],
    fid_batch_size: usize,
) -> Result<ReconstructionReport, MetricError> {
    if originals.is_empty() {
        return Err(MetricError::TooFewSamples { needed: 1, got: 0 });
    }
    if originals.len() != reconstructions.len() {
        return Err(MetricError::LengthMismatch { a: originals.len(), b: reconstructions.len() });
    }
    let pairs = match_pairs(originals, reconstructions)?;
    let wrap = |id: &str| {
        let id = id.to_string();
        move |e: MetricError| MetricError::Pair { id, source: Box::new(e) }
    };

    let per_pair = par::try_map_slice(&pairs, |(o, r)| {
        let metrics = pair_metrics(o, r).map_err(wrap(o.id()))?;
        let fo = embedder.extract(o);
        let fr = embedder.extract(r);
        let cos = cosine_similarity(&fo, &fr).map_err(wrap(o.id()))?;
        Ok::<_, MetricError>((PairRecord { id: o.id().to_string(), metrics, embedding_cosine: cos }, fo, fr))
    })?;

    let column = |f: fn(&PairRecord) -> f64| Summary::of(&per_pair.iter().map(|(p, _, _)| f(p)).collect::<Vec<_>>());
    let rmse = column(|p| p.metrics.rmse);
    let psnr = column(|p| p.metrics.psnr);
    let ssim = column(|p| p.metrics.ssim);
    let embedding_cosine = column(|p| p.embedding_cosine);

    let ranges = fid_batches(per_pair.len(), fid_batch_size);
    let fid_summary = if ranges.is_empty() {
        None
    } else {
        let batches = par::try_map_slice(&ranges, |range| {
            let to_set = |pick: fn(&(PairRecord, Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
                let mut m = Matrix::zeros(0, embedder.dim());
                per_pair[range.clone()].iter().for_each(|t| m.push_row(pick(t)));
                FeatureSet { features: m, extractor_id: embedder.id().to_string() }
            };
            fid(&to_set(|t| &t.1), &to_set(|t| &t.2))
        })?;
        let s = Summary::of(&batches);
        Some(FidSummary { batch_size: fid_batch_size, mean: s.mean, sd: s.sd, batches })
    };

    let mut findings = Vec::with_capacity(classifiers.len());
    for clf in classifiers {
        let class: ChexpertClass =
            clf.finding().parse().map_err(|_| MetricError::UnknownFinding(clf.finding().to_string()))?;
        let truth = pairs
            .iter()
            .map(|(o, _)| {
                o.labels
                    .as_ref()
                    .map(|l| normalize_labels(l)[class.index()] == 1)
                    .ok_or_else(|| MetricError::MissingLabels(o.id().to_string()))
            })
            .collect::<Result<Vec<bool>, _>>()?;
        let orig_scores = par::map_slice(&pairs, |(o, _)| clf.score(o));
        let recon_scores = par::map_slice(&pairs, |(_, r)| clf.score(r));
        findings.push(FindingRow {
            finding: class.name().to_string(),
            prevalence: truth.iter().filter(|&&t| t).count() as f64 / truth.len() as f64,
            original: classification_report(&orig_scores, &truth)?,
            reconstruction: classification_report(&recon_scores, &truth)?,
        });
    }

    Ok(ReconstructionReport {
        schema_version: RECON_REPORT_SCHEMA_VERSION,
        extractor_id: embedder.id().to_string(),
        pairs: per_pair.into_iter().map(|(p, _, _)| p).collect(),
        rmse,
        psnr,
        ssim,
        embedding_cosine,
        fid: fid_summary,
        findings,
    })
}
