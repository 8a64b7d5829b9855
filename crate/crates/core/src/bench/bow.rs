//! Bag-of-words baseline: token-set intersection over union.

use std::collections::BTreeSet;

use crate::tensor::Matrix;
use crate::par;

/// Lowercased alphanumeric runs; whitespace and punctuation separate tokens.
pub fn bow_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn iou(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// `|A ∩ B| / |A ∪ B|` over token sets; 1 when both are empty.
pub fn bow_iou_similarity(a: &str, b: &str) -> f64 {
    iou(&bow_tokens(a), &bow_tokens(b))
}

/// Pairwise IoU for a list of documents.
pub fn bow_similarity_matrix(docs: &[&str]) -> Matrix {
    let sets: Vec<BTreeSet<String>> = docs.iter().map(|d| bow_tokens(d)).collect();
    let n = sets.len();
    let rows = par::map_range(n, |i| (0..n).map(|j| iou(&sets[i], &sets[j])).collect::<Vec<f64>>());
    Matrix::from_vec(n, n, rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        assert!((bow_iou_similarity("pleural effusion", "no pleural effusion") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(bow_iou_similarity("Mild edema.", "mild   EDEMA"), 1.0);
        assert_eq!(bow_iou_similarity("cardiomegaly", "pneumothorax"), 0.0);
        assert_eq!(bow_iou_similarity("", "..."), 1.0);
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let m = bow_similarity_matrix(&["a b", "b c", "c d e"]);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(m[(i, j)], m[(j, i)]);
            }
        }
        assert_eq!(m[(0, 1)], 1.0 / 3.0);
    }
}
