//! Toy noise predictor:
//!
//! ```text
//! h   = tanh(Wx·x + Wt·temb(t) + Wc·mean(cond) + b)
//! out = skip[t]·x + scale[t]·(Wo·h + bo)
//! ```
//!
//! `skip` and `scale` are fixed per-timestep coefficients, normally
//! `sqrt(1 − ᾱ_t)` and `sqrt(ᾱ_t)`. For unit-variance latents this makes the
//! skip term the best linear noise estimate and the network target a
//! unit-variance velocity, so every timestep is equally well conditioned.
//!
//! Weights are row-major with the output index first. Flat parameter
//! order is `Wx | Wt | Wc | b | Wo | bo`.

use serde::{Deserialize, Serialize};

use super::contracts::{ComponentState, Denoiser, DenoiserGrads};
use super::schedule::NoiseSchedule;
use super::DiffusionError;
use crate::rng;
use crate::tensor::Matrix;

pub const TOY_DENOISER_KIND: &str = "toy-mlp-denoiser";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDenoiserConfig {
    pub latent_len: usize,
    pub cond_width: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub seed: u64,
    /// Fixed per-timestep skip coefficient; empty disables the skip path.
    #[serde(default)]
    pub skip: Vec<f64>,
    /// Fixed per-timestep output scale; empty means 1.
    #[serde(default)]
    pub scale: Vec<f64>,
}

impl Default for ToyDenoiserConfig {
    fn default() -> Self {
        ToyDenoiserConfig { latent_len: 256, cond_width: 768, hidden: 256, time_dim: 32, seed: 0, skip: Vec::new(), scale: Vec::new() }
    }
}

/// `(sqrt(1 − ᾱ_t), sqrt(ᾱ_t))` for every timestep: the default skip and
/// output scale.
pub fn preconditioning(schedule: &NoiseSchedule) -> (Vec<f64>, Vec<f64>) {
    schedule.alpha_bars.iter().map(|ab| ((1.0 - ab).sqrt(), ab.sqrt())).unzip()
}

fn coeff(table: &[f64], t: usize, default: f64) -> Result<f64, DiffusionError> {
    if table.is_empty() {
        return Ok(default);
    }
    table.get(t).copied().ok_or(DiffusionError::TOutOfRange { t, len: table.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDenoiser {
    cfg: ToyDenoiserConfig,
    params: Vec<f64>,
}

struct Blocks {
    wx: usize,
    wt: usize,
    wc: usize,
    b: usize,
    wo: usize,
    bo: usize,
    end: usize,
}

/// Sinusoidal embedding: `sin(t·f_j)` then `cos(t·f_j)` with geometric
/// frequencies `f_j = 1000^(-j/half)`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut e = vec![0.0; dim];
    for j in 0..half {
        let f = (-(1000f64.ln()) * j as f64 / half as f64).exp();
        e[j] = (t as f64 * f).sin();
        e[half + j] = (t as f64 * f).cos();
    }
    e
}

fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += crate::tensor::dot(row, x);
    }
}

impl ToyDenoiser {
    pub fn new(cfg: ToyDenoiserConfig) -> Result<Self, DiffusionError> {
        if cfg.latent_len == 0 || cfg.cond_width == 0 || cfg.hidden == 0 || cfg.time_dim < 2 || !cfg.time_dim.is_multiple_of(2) {
            return Err(DiffusionError::InconsistentDims(format!(
                "invalid denoiser config: latent {}, cond {}, hidden {}, time_dim {}",
                cfg.latent_len, cfg.cond_width, cfg.hidden, cfg.time_dim
            )));
        }
        if !cfg.skip.is_empty() && !cfg.scale.is_empty() && cfg.skip.len() != cfg.scale.len() {
            return Err(DiffusionError::InconsistentDims(format!(
                "skip table has {} entries, scale table {}",
                cfg.skip.len(),
                cfg.scale.len()
            )));
        }
        if cfg.skip.iter().chain(&cfg.scale).any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite("denoiser coefficient table"));
        }
        let seed = cfg.seed;
        let (l, te, cw, hd) = (cfg.latent_len, cfg.time_dim, cfg.cond_width, cfg.hidden);
        let mut d = ToyDenoiser { cfg, params: Vec::new() };
        let o = d.blocks();
        let mut r = rng::seeded(rng::derive_seed(seed, &[0xd1]));
        let mut params = vec![0.0; o.end];
        let mut fill = |lo: usize, hi: usize, fan_in: usize| {
            let v = rng::uniform_vec(&mut r, hi - lo, 1.0 / (fan_in as f64).sqrt());
            params[lo..hi].copy_from_slice(&v);
        };
        fill(o.wx, o.wt, l);
        fill(o.wt, o.wc, te);
        fill(o.wc, o.b, cw);
        fill(o.wo, o.bo, hd);
        d.params = params;
        Ok(d)
    }

    pub fn from_state(state: &ComponentState) -> Result<Self, DiffusionError> {
        let cfg: ToyDenoiserConfig = serde_json::from_value(state.config.clone())
            .map_err(|e| DiffusionError::BadComponent(format!("denoiser config: {e}")))?;
        let mut d = ToyDenoiser::new(cfg)?;
        if state.params.len() != d.params.len() {
            return Err(DiffusionError::ShapeMismatch {
                what: "denoiser params",
                expected: d.params.len(),
                got: state.params.len(),
            });
        }
        d.params.copy_from_slice(&state.params);
        Ok(d)
    }

    pub fn config(&self) -> &ToyDenoiserConfig {
        &self.cfg
    }

    fn blocks(&self) -> Blocks {
        let ToyDenoiserConfig { latent_len: l, cond_width: c, hidden: h, time_dim: te, .. } = self.cfg;
        let wx = 0;
        let wt = wx + h * l;
        let wc = wt + h * te;
        let b = wc + h * c;
        let wo = b + h;
        let bo = wo + l * h;
        Blocks { wx, wt, wc, b, wo, bo, end: bo + l }
    }

    fn check(&self, latent: &[f64], cond: &Matrix) -> Result<(), DiffusionError> {
        if latent.len() != self.cfg.latent_len {
            return Err(DiffusionError::ShapeMismatch { what: "latent", expected: self.cfg.latent_len, got: latent.len() });
        }
        if cond.cols() != self.cfg.cond_width {
            return Err(DiffusionError::ShapeMismatch {
                what: "conditioning width",
                expected: self.cfg.cond_width,
                got: cond.cols(),
            });
        }
        Ok(())
    }

    fn pooled(&self, cond: &Matrix) -> Vec<f64> {
        if cond.rows() == 0 {
            vec![0.0; self.cfg.cond_width]
        } else {
            cond.column_mean()
        }
    }

    /// Returns `(hidden activations, temb, pooled cond)`.
    fn hidden(&self, latent: &[f64], t: usize, cond: &Matrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let o = self.blocks();
        let p = &self.params;
        let temb = timestep_embedding(t, self.cfg.time_dim);
        let c = self.pooled(cond);
        let mut pre = p[o.b..o.wo].to_vec();
        matvec_add(&p[o.wx..o.wt], latent, &mut pre);
        matvec_add(&p[o.wt..o.wc], &temb, &mut pre);
        matvec_add(&p[o.wc..o.b], &c, &mut pre);
        (pre.into_iter().map(f64::tanh).collect(), temb, c)
    }
}

impl Denoiser for ToyDenoiser {
    fn latent_len(&self) -> usize {
        self.cfg.latent_len
    }

    fn cond_width(&self) -> usize {
        self.cfg.cond_width
    }

    fn predict_noise(&self, latent: &[f64], t: usize, cond: &Matrix) -> Result<Vec<f64>, DiffusionError> {
        self.check(latent, cond)?;
        let o = self.blocks();
        let (h, _, _) = self.hidden(latent, t, cond);
        let (skip, scale) = (coeff(&self.cfg.skip, t, 0.0)?, coeff(&self.cfg.scale, t, 1.0)?);
        let mut out = self.params[o.bo..o.end].to_vec();
        matvec_add(&self.params[o.wo..o.bo], &h, &mut out);
        for (y, x) in out.iter_mut().zip(latent) {
            *y = scale * *y + skip * x;
        }
        Ok(out)
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn backward(&self, latent: &[f64], t: usize, cond: &Matrix, g: &[f64]) -> Result<DenoiserGrads, DiffusionError> {
        self.check(latent, cond)?;
        if g.len() != self.cfg.latent_len {
            return Err(DiffusionError::ShapeMismatch { what: "output gradient", expected: self.cfg.latent_len, got: g.len() });
        }
        let (l, cw, hd, te) = (self.cfg.latent_len, self.cfg.cond_width, self.cfg.hidden, self.cfg.time_dim);
        let o = self.blocks();
        let p = &self.params;
        let (h, temb, c) = self.hidden(latent, t, cond);
        let scale = coeff(&self.cfg.scale, t, 1.0)?;
        let g: Vec<f64> = g.iter().map(|v| v * scale).collect();
        let mut grad = vec![0.0; o.end];
        grad[o.bo..o.end].copy_from_slice(&g);
        let mut dh = vec![0.0; hd];
        for (li, &gl) in g.iter().enumerate() {
            let w = &p[o.wo + li * hd..o.wo + (li + 1) * hd];
            let gw = &mut grad[o.wo + li * hd..o.wo + (li + 1) * hd];
            for k in 0..hd {
                gw[k] = gl * h[k];
                dh[k] += gl * w[k];
            }
        }
        let dpre: Vec<f64> = dh.iter().zip(&h).map(|(d, hk)| d * (1.0 - hk * hk)).collect();
        grad[o.b..o.wo].copy_from_slice(&dpre);
        let mut dc = vec![0.0; cw];
        for (k, &dk) in dpre.iter().enumerate() {
            for (gw, x) in grad[o.wx + k * l..o.wx + (k + 1) * l].iter_mut().zip(latent) {
                *gw = dk * x;
            }
            for (gw, e) in grad[o.wt + k * te..o.wt + (k + 1) * te].iter_mut().zip(&temb) {
                *gw = dk * e;
            }
            let wc = &p[o.wc + k * cw..o.wc + (k + 1) * cw];
            for ((gw, ci), (dci, w)) in
                grad[o.wc + k * cw..o.wc + (k + 1) * cw].iter_mut().zip(&c).zip(dc.iter_mut().zip(wc))
            {
                *gw = dk * ci;
                *dci += dk * w;
            }
        }
        let rows = cond.rows();
        let mut dcond = Matrix::zeros(rows, cw);
        if rows > 0 {
            let inv = 1.0 / rows as f64;
            for r in 0..rows {
                for (d, v) in dcond.row_mut(r).iter_mut().zip(&dc) {
                    *d = v * inv;
                }
            }
        }
        Ok(DenoiserGrads { params: grad, cond: dcond })
    }

    fn state(&self) -> ComponentState {
        ComponentState {
            kind: TOY_DENOISER_KIND.to_string(),
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            params: self.params.clone(),
        }
    }

    fn clone_box(&self) -> Box<dyn Denoiser> {
        Box::new(self.clone())
    }
}

/// Knows the clean latent and returns the exact noise implied by `x_t`.
/// Ignores conditioning. Used to check the samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDenoiser {
    pub x0: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub cond_width: usize,
}

impl OracleDenoiser {
    pub fn new(x0: Vec<f64>, schedule: &NoiseSchedule, cond_width: usize) -> Self {
        OracleDenoiser { x0, alpha_bars: schedule.alpha_bars.clone(), cond_width }
    }
}

impl Denoiser for OracleDenoiser {
    fn latent_len(&self) -> usize {
        self.x0.len()
    }

    fn cond_width(&self) -> usize {
        self.cond_width
    }

    fn predict_noise(&self, latent: &[f64], t: usize, _cond: &Matrix) -> Result<Vec<f64>, DiffusionError> {
        let ab = *self.alpha_bars.get(t).ok_or(DiffusionError::TOutOfRange { t, len: self.alpha_bars.len() })?;
        let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(latent.iter().zip(&self.x0).map(|(x, x0)| (x - s * x0) / n).collect())
    }

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn backward(&self, _latent: &[f64], _t: usize, cond: &Matrix, _g: &[f64]) -> Result<DenoiserGrads, DiffusionError> {
        Ok(DenoiserGrads { params: Vec::new(), cond: Matrix::zeros(cond.rows(), cond.cols()) })
    }

    fn state(&self) -> ComponentState {
        ComponentState { kind: "oracle".to_string(), config: serde_json::Value::Null, params: Vec::new() }
    }

    fn clone_box(&self) -> Box<dyn Denoiser> {
        Box::new(self.clone())
    }
}
