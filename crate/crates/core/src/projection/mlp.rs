//! The projection network:
//!
//! ```text
//! x → Linear(W1, b1) → LayerNorm(γ, β) → ReLU → Linear(W2, b2) → y
//! ```
//!
//! i.e. `y = W2ᵀ · relu(layernorm(W1ᵀ x + b1)) + b2`. All parameters live
//! in one flat vector (`W1 | b1 | γ | β | W2 | b2`, weights row-major with
//! the input index first) so trainers and checkpoints treat them uniformly.

use serde::{Deserialize, Serialize};

use super::ProjectionError;
use crate::tensor::Matrix;
use crate::{par, rng};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionDims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl ProjectionDims {
    pub fn square(d: usize) -> Self {
        ProjectionDims { input: d, hidden: d, output: d }
    }

    pub fn n_params(&self) -> usize {
        let ProjectionDims { input, hidden, output } = *self;
        input * hidden + 3 * hidden + hidden * output + output
    }
}

impl Default for ProjectionDims {
    fn default() -> Self {
        ProjectionDims::square(768)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMlp {
    dims: ProjectionDims,
    params: Vec<f64>,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Layer-norm output before the affine rescale.
    pub normalized: Vec<f64>,
    pub inv_std: f64,
    pub pre_relu: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    gamma: usize,
    beta: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl ProjectionMlp {
    /// Uniform `±1/sqrt(fan_in)` weights, unit γ, zero β and biases.
    pub fn new(dims: ProjectionDims, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut params = vec![0.0; dims.n_params()];
        let mut mlp = ProjectionMlp { dims, params: Vec::new() };
        let o = mlp.offsets();
        params[o.w1..o.b1].copy_from_slice(&rng::uniform_vec(&mut r, o.b1 - o.w1, 1.0 / (dims.input as f64).sqrt()));
        params[o.gamma..o.beta].fill(1.0);
        params[o.w2..o.b2].copy_from_slice(&rng::uniform_vec(&mut r, o.b2 - o.w2, 1.0 / (dims.hidden as f64).sqrt()));
        mlp.params = params;
        mlp
    }

    pub fn from_params(dims: ProjectionDims, params: Vec<f64>) -> Result<Self, ProjectionError> {
        if params.len() != dims.n_params() {
            return Err(ProjectionError::DimMismatch { expected: dims.n_params(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ProjectionError::NonFiniteParameters);
        }
        Ok(ProjectionMlp { dims, params })
    }

    pub fn dims(&self) -> ProjectionDims {
        self.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> Offsets {
        let ProjectionDims { input, hidden, output } = self.dims;
        let w1 = 0;
        let b1 = w1 + input * hidden;
        let gamma = b1 + hidden;
        let beta = gamma + hidden;
        let w2 = beta + hidden;
        let b2 = w2 + hidden * output;
        Offsets { w1, b1, gamma, beta, w2, b2, end: b2 + output }
    }

    /// Named parameter blocks, in flat order.
    pub fn layout(&self) -> Vec<(&'static str, usize)> {
        let o = self.offsets();
        vec![
            ("w1", o.b1 - o.w1),
            ("b1", o.gamma - o.b1),
            ("ln_gamma", o.beta - o.gamma),
            ("ln_beta", o.w2 - o.beta),
            ("w2", o.b2 - o.w2),
            ("b2", o.end - o.b2),
        ]
    }

    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let ProjectionDims { input, hidden, output } = self.dims;
        debug_assert_eq!(x.len(), input);
        let o = self.offsets();
        let p = &self.params;
        let mut z = p[o.b1..o.gamma].to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let w = &p[o.w1 + i * hidden..o.w1 + (i + 1) * hidden];
            for (zh, wh) in z.iter_mut().zip(w) {
                *zh += xi * wh;
            }
        }
        let mean = z.iter().sum::<f64>() / hidden as f64;
        let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hidden as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let normalized: Vec<f64> = z.iter().map(|v| (v - mean) * inv_std).collect();
        let pre_relu: Vec<f64> = normalized
            .iter()
            .zip(&p[o.gamma..o.beta])
            .zip(&p[o.beta..o.w2])
            .map(|((n, g), b)| g * n + b)
            .collect();
        let hidden_act: Vec<f64> = pre_relu.iter().map(|v| v.max(0.0)).collect();
        let mut y = p[o.b2..o.end].to_vec();
        for (h, &rh) in hidden_act.iter().enumerate() {
            if rh == 0.0 {
                continue;
            }
            let w = &p[o.w2 + h * output..o.w2 + (h + 1) * output];
            for (yo, wo) in y.iter_mut().zip(w) {
                *yo += rh * wo;
            }
        }
        ForwardTrace { normalized, inv_std, pre_relu, hidden: hidden_act, output: y }
    }

    /// Accumulates `∂(gᵀy)/∂θ` for one input into `grad`.
    fn backward_into(&self, x: &[f64], trace: &ForwardTrace, g: &[f64], grad: &mut [f64]) {
        let ProjectionDims { hidden, output, .. } = self.dims;
        let o = self.offsets();
        let p = &self.params;
        for (gb, gy) in grad[o.b2..o.end].iter_mut().zip(g) {
            *gb += gy;
        }
        let mut d_hidden = vec![0.0; hidden];
        for h in 0..hidden {
            let w = &p[o.w2 + h * output..o.w2 + (h + 1) * output];
            let rh = trace.hidden[h];
            let gw = &mut grad[o.w2 + h * output..o.w2 + (h + 1) * output];
            let mut acc = 0.0;
            for ((gwo, wo), gy) in gw.iter_mut().zip(w).zip(g) {
                *gwo += rh * gy;
                acc += wo * gy;
            }
            d_hidden[h] = acc;
        }
        let d_pre: Vec<f64> =
            d_hidden.iter().zip(&trace.pre_relu).map(|(d, a)| if *a > 0.0 { *d } else { 0.0 }).collect();
        for h in 0..hidden {
            grad[o.gamma + h] += d_pre[h] * trace.normalized[h];
            grad[o.beta + h] += d_pre[h];
        }
        let d_norm: Vec<f64> = d_pre.iter().zip(&p[o.gamma..o.beta]).map(|(d, g)| d * g).collect();
        let n = hidden as f64;
        let mean_d = d_norm.iter().sum::<f64>() / n;
        let mean_dx = d_norm.iter().zip(&trace.normalized).map(|(d, x)| d * x).sum::<f64>() / n;
        let d_z: Vec<f64> = d_norm
            .iter()
            .zip(&trace.normalized)
            .map(|(d, x)| trace.inv_std * (d - mean_d - x * mean_dx))
            .collect();
        for (gb, dz) in grad[o.b1..o.gamma].iter_mut().zip(&d_z) {
            *gb += dz;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let gw = &mut grad[o.w1 + i * hidden..o.w1 + (i + 1) * hidden];
            for (gwh, dz) in gw.iter_mut().zip(&d_z) {
                *gwh += xi * dz;
            }
        }
    }
}

/// Projects one vector.
pub fn project(mlp: &ProjectionMlp, x: &[f64]) -> Result<Vec<f64>, ProjectionError> {
    if x.len() != mlp.dims.input {
        return Err(ProjectionError::DimMismatch { expected: mlp.dims.input, got: x.len() });
    }
    Ok(mlp.forward_trace(x).output)
}

/// Projects each row of a token sequence independently.
pub fn project_rows(mlp: &ProjectionMlp, x: &Matrix) -> Result<Matrix, ProjectionError> {
    if x.cols() != mlp.dims.input {
        return Err(ProjectionError::DimMismatch { expected: mlp.dims.input, got: x.cols() });
    }
    let rows: Vec<Vec<f64>> = par::map_range(x.rows(), |i| mlp.forward_trace(x.row(i)).output);
    Ok(Matrix::from_vec(x.rows(), mlp.dims.output, rows.into_iter().flatten().collect()))
}

/// Rows per gradient chunk. Fixed so the reduction order does not depend on
/// the thread count.
const GRAD_CHUNK: usize = 8;

/// Mean squared error `(1/R) Σ ‖f(x_r) − y_r‖²` over `rows` and its
/// gradient with respect to every parameter.
pub fn loss_and_grad(mlp: &ProjectionMlp, rows: &[(&[f64], &[f64])]) -> (f64, Vec<f64>) {
    let n_rows = rows.len() as f64;
    let chunks: Vec<&[(&[f64], &[f64])]> = rows.chunks(GRAD_CHUNK).collect();
    let partial = par::map_slice(&chunks, |chunk| {
        let mut grad = vec![0.0; mlp.params.len()];
        let mut loss = 0.0;
        for (x, y) in chunk.iter() {
            let trace = mlp.forward_trace(x);
            let diff: Vec<f64> = trace.output.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>();
            let g: Vec<f64> = diff.iter().map(|d| 2.0 * d / n_rows).collect();
            mlp.backward_into(x, &trace, &g, &mut grad);
        }
        (loss, grad)
    });
    let mut grad = vec![0.0; mlp.params.len()];
    let mut loss = 0.0;
    for (l, g) in partial {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss / n_rows, grad)
}

/// Loss only.
pub fn mean_squared_error(mlp: &ProjectionMlp, rows: &[(&[f64], &[f64])]) -> f64 {
    let per = par::map_slice(rows, |(x, y)| {
        mlp.forward_trace(x).output.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    });
    per.iter().sum::<f64>() / rows.len() as f64
}


#[cfg(test)]
mod gradient_tests {
    use super::*;
    use crate::gradcheck;

    #[test]
    fn analytic_matches_finite_differences() {
        for draw in 0..5u64 {
            let dims = ProjectionDims { input: 4, hidden: 5, output: 3 };
            let mut m = ProjectionMlp::new(dims, draw);
            let mut r = rng::seeded(100 + draw);
            for p in m.params_mut() {
                *p += 0.3 * rng::gaussian_vec(&mut r, 1)[0];
            }
            let data: Vec<(Vec<f64>, Vec<f64>)> =
                (0..3).map(|_| (rng::gaussian_vec(&mut r, 4), rng::gaussian_vec(&mut r, 3))).collect();
            let rows: Vec<(&[f64], &[f64])> = data.iter().map(|(x, y)| (x.as_slice(), y.as_slice())).collect();
            let (_, analytic) = loss_and_grad(&m, &rows);
            let numeric = gradcheck::numeric_gradient(
                |p| mean_squared_error(&ProjectionMlp { dims, params: p.to_vec() }, &rows),
                m.params(),
            );
            let err = gradcheck::max_relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "draw {draw}: {err}");
        }
    }
}
