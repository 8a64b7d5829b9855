//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{FeatureSet, MetricError};

/// Diagonal jitter added to both covariances when the square root fails.
pub const FID_JITTER: f64 = 1e-6;

fn moments(fs: &FeatureSet) -> (DVector<f64>, DMatrix<f64>) {
    let m = &fs.features;
    let (n, f) = m.shape();
    let x = DMatrix::from_row_slice(n, f, m.as_slice());
    let mean = DVector::from_iterator(f, (0..f).map(|j| x.column(j).sum() / n as f64));
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    (mean, cov)
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `tr((A^{1/2} B A^{1/2})^{1/2})` via two symmetric eigendecompositions.
/// `None` when an eigenvalue is meaningfully negative or not finite.
fn sqrt_product_trace(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<f64> {
    let ea = SymmetricEigen::new(symmetrize(a));
    let scale_a = ea.eigenvalues.amax().max(1.0);
    if ea.eigenvalues.iter().any(|&l| !l.is_finite() || l < -1e-10 * scale_a) {
        return None;
    }
    let roots = ea.eigenvalues.map(|l| l.max(0.0).sqrt());
    let sqrt_a = &ea.eigenvectors * DMatrix::from_diagonal(&roots) * ea.eigenvectors.transpose();
    let inner = symmetrize(&(&sqrt_a * b * &sqrt_a));
    let ei = SymmetricEigen::new(inner);
    let scale_i = ei.eigenvalues.amax().max(1.0);
    if ei.eigenvalues.iter().any(|&l| !l.is_finite() || l < -1e-10 * scale_i) {
        return None;
    }
    Some(ei.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// `‖μp − μq‖² + tr(Σp + Σq − 2 (Σp Σq)^{1/2})` with sample means and
/// unbiased sample covariances. Clamped at zero against rounding.
pub fn fid(p: &FeatureSet, q: &FeatureSet) -> Result<f64, MetricError> {
    let (np, fp) = p.features.shape();
    let (nq, fq) = q.features.shape();
    if fp != fq {
        return Err(MetricError::DimensionMismatch { a: fp, b: fq });
    }
    if np < 2 || nq < 2 {
        return Err(MetricError::TooFewSamples { needed: 2, got: np.min(nq) });
    }
    if !p.features.is_finite() || !q.features.is_finite() {
        return Err(MetricError::NonFiniteFeatures);
    }
    let (mp, sp) = moments(p);
    let (mq, sq) = moments(q);
    let mean_term = (&mp - &mq).norm_squared();
    let cross = match sqrt_product_trace(&sp, &sq) {
        Some(t) => t,
        None => {
            let jitter = DMatrix::identity(fp, fp) * FID_JITTER;
            tracing::debug!("fid: covariance square root failed, retrying with jitter");
            sqrt_product_trace(&(&sp + &jitter), &(&sq + &jitter)).ok_or(MetricError::DegenerateCovariance)?
        }
    };
    Ok((mean_term + sp.trace() + sq.trace() - 2.0 * cross).max(0.0))
}
