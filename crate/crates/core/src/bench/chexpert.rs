//! CheXpert@k: for each report, the fraction of its `k` most similar other
//! reports that share its label.
//!
//! Similarity is the raw dot product of document embeddings. A report never
//! retrieves itself, and ties in similarity are broken towards the lower
//! report index, so scores are fully deterministic.

use std::collections::BTreeMap;
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use super::{extract_embedding, BenchError, EncoderOutput, ExtractionStrategy};
use crate::ingestion::{normalize_labels, ChexpertClass, LabeledReport, NUM_CLASSES};
use crate::par;
use crate::tensor::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChexpertScores {
    pub k: usize,
    pub global: f64,
    pub per_report: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub k: usize,
    pub per_class: BTreeMap<String, f64>,
    /// Unweighted mean over the classes present.
    pub macro_avg: f64,
    pub global: f64,
}

/// Which notion of "same label" retrieval uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Reports agree when their primary classes are equal.
    #[default]
    PrimaryClass,
    /// Reports agree when their whole binarised 14-vectors are equal.
    FullVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub encoder_id: String,
    /// `None` for the bag-of-words baseline.
    pub strategy: Option<ExtractionStrategy>,
    pub label_mode: LabelMode,
    pub n_reports: usize,
    #[serde(flatten)]
    pub scores: ClassScores,
}

/// `E · Eᵀ`, computed row by row.
pub fn dot_similarity_matrix(embeddings: &Matrix) -> Matrix {
    let n = embeddings.rows();
    let rows = par::map_range(n, |i| {
        let ei = embeddings.row(i);
        (0..n).map(|j| dot(ei, embeddings.row(j))).collect::<Vec<f64>>()
    });
    Matrix::from_vec(n, n, rows.into_iter().flatten().collect())
}

fn check_k(k: usize, n: usize) -> Result<(), BenchError> {
    if n < 2 || k == 0 || k > n - 1 {
        return Err(BenchError::KTooLarge { k, n });
    }
    Ok(())
}

fn top_k_excluding_self(sim: &[f64], i: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sim.len()).filter(|&j| j != i).collect();
    // partial_cmp so that +0 and -0 tie; similarities are finite
    let by_rank = |a: &usize, b: &usize| {
        sim[*b].partial_cmp(&sim[*a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
    };
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_by(by_rank);
    idx
}

/// Scores from a precomputed `N × N` similarity matrix.
pub fn chexpert_from_similarity<L: PartialEq + Sync>(
    similarity: &Matrix,
    labels: &[L],
    k: usize,
) -> Result<ChexpertScores, BenchError> {
    let n = labels.len();
    if similarity.shape() != (n, n) {
        return Err(BenchError::DimMismatch { what: "similarity rows", expected: n, got: similarity.rows() });
    }
    check_k(k, n)?;
    let per_report = par::map_range(n, |i| {
        let hits = top_k_excluding_self(similarity.row(i), i, k).iter().filter(|&&j| labels[j] == labels[i]).count();
        hits as f64 / k as f64
    });
    let global = per_report.iter().sum::<f64>() / n as f64;
    Ok(ChexpertScores { k, global, per_report })
}

pub fn chexpert_at_k<L: PartialEq + Sync>(
    embeddings: &Matrix,
    labels: &[L],
    k: usize,
) -> Result<ChexpertScores, BenchError> {
    if embeddings.rows() != labels.len() {
        return Err(BenchError::DimMismatch { what: "embedding rows", expected: labels.len(), got: embeddings.rows() });
    }
    check_k(k, labels.len())?;
    chexpert_from_similarity(&dot_similarity_matrix(embeddings), labels, k)
}

/// Per-class aggregation. Neighbours come from the full report set, agreement
/// is judged with `match_keys`, and reports are grouped by `groups`.
pub fn chexpert_per_class_from_similarity<L, G>(
    similarity: &Matrix,
    match_keys: &[L],
    groups: &[G],
    k: usize,
) -> Result<ClassScores, BenchError>
where
    L: PartialEq + Sync,
    G: Ord + Display,
{
    if groups.len() != match_keys.len() {
        return Err(BenchError::DimMismatch { what: "group labels", expected: match_keys.len(), got: groups.len() });
    }
    let scores = chexpert_from_similarity(similarity, match_keys, k)?;
    let mut members: BTreeMap<&G, (f64, usize)> = BTreeMap::new();
    for (g, s) in groups.iter().zip(&scores.per_report) {
        let e = members.entry(g).or_insert((0.0, 0));
        e.0 += s;
        e.1 += 1;
    }
    let per_class: BTreeMap<String, f64> =
        members.iter().map(|(g, (sum, count))| (g.to_string(), sum / *count as f64)).collect();
    let macro_avg = members.values().map(|(sum, count)| sum / *count as f64).sum::<f64>() / members.len() as f64;
    Ok(ClassScores { k, per_class, macro_avg, global: scores.global })
}

pub fn chexpert_per_class<L>(embeddings: &Matrix, labels: &[L], k: usize) -> Result<ClassScores, BenchError>
where
    L: PartialEq + Ord + Display + Sync,
{
    if embeddings.rows() != labels.len() {
        return Err(BenchError::DimMismatch { what: "embedding rows", expected: labels.len(), got: embeddings.rows() });
    }
    check_k(k, labels.len())?;
    chexpert_per_class_from_similarity(&dot_similarity_matrix(embeddings), labels, labels, k)
}

fn valid_reports(reports: &[LabeledReport]) -> Vec<&LabeledReport> {
    reports.iter().filter(|r| r.is_valid()).collect()
}

fn scores_for_mode(
    similarity: &Matrix,
    reports: &[&LabeledReport],
    mode: LabelMode,
    k: usize,
) -> Result<ClassScores, BenchError> {
    let groups: Vec<ChexpertClass> = reports.iter().map(|r| r.primary_class).collect();
    match mode {
        LabelMode::PrimaryClass => chexpert_per_class_from_similarity(similarity, &groups, &groups, k),
        LabelMode::FullVector => {
            let keys: Vec<[u8; NUM_CLASSES]> = reports.iter().map(|r| normalize_labels(&r.labels)).collect();
            chexpert_per_class_from_similarity(similarity, &keys, &groups, k)
        }
    }
}

/// Benchmarks one encoder/strategy pair over the valid reports. `outputs`
/// are looked up by report id.
pub fn run_encoder_benchmark(
    reports: &[LabeledReport],
    outputs: &BTreeMap<String, EncoderOutput>,
    strategy: ExtractionStrategy,
    k: usize,
    mode: LabelMode,
) -> Result<BenchmarkResult, BenchError> {
    let reports = valid_reports(reports);
    let vectors = reports
        .iter()
        .map(|r| {
            let out = outputs.get(&r.id).ok_or_else(|| BenchError::MissingOutput(r.id.clone()))?;
            extract_embedding(out, strategy)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let embeddings = Matrix::from_rows(&vectors).ok_or(BenchError::DimMismatch {
        what: "embedding width",
        expected: vectors.first().map_or(0, Vec::len),
        got: vectors.iter().map(Vec::len).find(|&l| l != vectors[0].len()).unwrap_or(0),
    })?;
    check_k(k, reports.len())?;
    let encoder_id = outputs.values().next().map(|o| o.encoder_id.clone()).unwrap_or_default();
    let scores = scores_for_mode(&dot_similarity_matrix(&embeddings), &reports, mode, k)?;
    Ok(BenchmarkResult { encoder_id, strategy: Some(strategy), label_mode: mode, n_reports: reports.len(), scores })
}

/// Bag-of-words baseline over impressions.
pub fn run_bow_benchmark(reports: &[LabeledReport], k: usize, mode: LabelMode) -> Result<BenchmarkResult, BenchError> {
    let reports = valid_reports(reports);
    check_k(k, reports.len())?;
    let docs: Vec<&str> = reports.iter().map(|r| r.impression.as_str()).collect();
    let scores = scores_for_mode(&super::bow_similarity_matrix(&docs), &reports, mode, k)?;
    Ok(BenchmarkResult {
        encoder_id: super::BOW_ENCODER_ID.to_string(),
        strategy: None,
        label_mode: mode,
        n_reports: reports.len(),
        scores,
    })
}
