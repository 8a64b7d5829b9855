//! Two-dimensional layouts of embedding sets for cluster plots: exact
//! t-SNE, or a principal-component projection as a linear fallback.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::tensor::Matrix;
use crate::{par, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embed2dMethod {
    Tsne,
    LinearFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embed2dConfig {
    pub method: Embed2dMethod,
    /// Clamped to `(N - 1) / 3` for small inputs.
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for Embed2dConfig {
    fn default() -> Self {
        Embed2dConfig { method: Embed2dMethod::Tsne, perplexity: 30.0, iterations: 1000, learning_rate: 200.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2d {
    /// `N × 2`.
    pub coords: Matrix,
    pub method: Embed2dMethod,
    /// Effective perplexity; `None` for the linear fallback.
    pub perplexity: Option<f64>,
}

pub fn embed_2d(embeddings: &Matrix, cfg: &Embed2dConfig) -> Result<Embedding2d, BenchError> {
    let n = embeddings.rows();
    if n < 3 {
        return Err(BenchError::TooFewPoints { needed: 3, got: n });
    }
    match cfg.method {
        Embed2dMethod::LinearFallback => {
            Ok(Embedding2d { coords: pca_2d(embeddings), method: Embed2dMethod::LinearFallback, perplexity: None })
        }
        Embed2dMethod::Tsne => {
            let perplexity = cfg.perplexity.min((n - 1) as f64 / 3.0).max(1.0);
            Ok(Embedding2d { coords: tsne(embeddings, perplexity, cfg), method: Embed2dMethod::Tsne, perplexity: Some(perplexity) })
        }
    }
}

/// Projection of the centred data onto its two leading principal axes.
/// Each axis is sign-normalised so its largest-magnitude loading is
/// positive, making the output independent of eigensolver sign choices.
fn pca_2d(x: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    let mean = x.column_mean();
    let mut centered = DMatrix::from_row_slice(n, d, x.as_slice());
    for mut row in centered.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = Matrix::zeros(n, 2);
    for (c, &axis) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(axis).clone_owned();
        let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for i in 0..n {
            out[(i, c)] = proj[i];
        }
    }
    out
}

fn squared_distances(x: &Matrix) -> Vec<Vec<f64>> {
    let n = x.rows();
    par::map_range(n, |i| {
        (0..n)
            .map(|j| x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect()
    })
}

/// Conditional affinities for one row, with the Gaussian bandwidth found by
/// bisection so that the row's entropy matches `ln(perplexity)`.
fn row_affinities(dist: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
    let mut p = vec![0.0; dist.len()];
    // shift by the nearest distance to keep exp() from underflowing
    let d_min = dist.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
    for _ in 0..100 {
        let mut sum = 0.0;
        for (j, (pj, &d)) in p.iter_mut().zip(dist).enumerate() {
            *pj = if j == i { 0.0 } else { (-(d - d_min) * beta).exp() };
            sum += *pj;
        }
        let mut weighted = 0.0;
        for (pj, &d) in p.iter_mut().zip(dist) {
            *pj /= sum;
            weighted += *pj * (d - d_min);
        }
        let entropy = sum.ln() + beta * weighted;
        let diff = entropy - target;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    p
}

fn tsne(x: &Matrix, perplexity: f64, cfg: &Embed2dConfig) -> Matrix {
    let n = x.rows();
    let dist = squared_distances(x);
    let cond = par::map_range(n, |i| row_affinities(&dist[i], i, perplexity));
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut r = rng::seeded(cfg.seed);
    let mut y: Vec<f64> = rng::gaussian_vec(&mut r, n * 2).into_iter().map(|v| v * 1e-4).collect();
    let mut velocity = vec![0.0; n * 2];
    let mut gains = vec![1.0; n * 2];
    let exaggeration_end = 250.min(cfg.iterations / 4);

    for it in 0..cfg.iterations {
        let exaggeration = if it < exaggeration_end { 12.0 } else { 1.0 };
        let momentum = if it < exaggeration_end { 0.5 } else { 0.8 };
        let kernel = par::map_range(n, |i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[2 * i] - y[2 * j];
                        let dy = y[2 * i + 1] - y[2 * j + 1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect::<Vec<f64>>()
        });
        let z: f64 = kernel.iter().map(|row| row.iter().sum::<f64>()).sum();
        let grads = par::map_range(n, |i| {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                let q = kernel[i][j];
                let w = (exaggeration * p[i * n + j] - q / z) * q;
                gx += w * (y[2 * i] - y[2 * j]);
                gy += w * (y[2 * i + 1] - y[2 * j + 1]);
            }
            [4.0 * gx, 4.0 * gy]
        });
        for (k, g) in grads.iter().flatten().enumerate() {
            gains[k] = if (*g > 0.0) != (velocity[k] > 0.0) { gains[k] + 0.2 } else { (gains[k] * 0.8f64).max(0.01) };
            velocity[k] = momentum * velocity[k] - cfg.learning_rate * gains[k] * g;
            y[k] += velocity[k];
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
    }
    Matrix::from_vec(n, 2, y)
}
