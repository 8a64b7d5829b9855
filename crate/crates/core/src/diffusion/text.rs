//! Toy conditioning text encoder.
//!
//! Words hash into a fixed bucket vocabulary; registered `<...>` tokens get
//! ids after the buckets. Token states are `tanh(E[id] + P[pos])` and the
//! pooled output is their mean. Id 0 is a begin-of-sequence marker.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::contracts::{ComponentState, TextEncoder};
use super::DiffusionError;
use crate::bench::EncoderOutput;
use crate::tensor::Matrix;
use crate::rng;

pub const TOY_TEXT_KIND: &str = "toy-hash-text";
pub const BOS_ID: usize = 0;

const EMBED_STD: f64 = 0.5;
const POS_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyTextConfig {
    pub width: usize,
    pub vocab_base: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Registered surfaces in id order, starting at `vocab_base`.
    #[serde(default)]
    pub registered: Vec<String>,
}

impl Default for ToyTextConfig {
    fn default() -> Self {
        ToyTextConfig { width: 768, vocab_base: 1024, max_len: 32, seed: 0, registered: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTextEncoder {
    cfg: ToyTextConfig,
    id: String,
    table: Matrix,
    positional: Vec<f64>,
}

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>\s]+>|[a-z0-9]+").expect("valid regex"))
}

/// FNV-1a, then SplitMix64 finalisation with the seed.
fn word_hash(word: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in word.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    rng::mix64(h ^ rng::mix64(seed))
}

impl ToyTextEncoder {
    pub fn new(cfg: ToyTextConfig) -> Result<Self, DiffusionError> {
        if cfg.width == 0 || cfg.vocab_base < 2 || cfg.max_len < 2 {
            return Err(DiffusionError::InconsistentDims(format!(
                "text encoder needs width ≥ 1, vocab_base ≥ 2, max_len ≥ 2 (got {}, {}, {})",
                cfg.width, cfg.vocab_base, cfg.max_len
            )));
        }
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, &[0x7e]));
        let mut table = Matrix::zeros(cfg.vocab_base, cfg.width);
        for v in table.as_mut_slice() {
            *v = EMBED_STD * rng::gaussian_vec(&mut r, 1)[0];
        }
        let positional = rng::gaussian_vec(&mut r, cfg.max_len * cfg.width).into_iter().map(|v| v * POS_STD).collect();
        let registered = cfg.registered.clone();
        let cfg = ToyTextConfig { registered: Vec::new(), ..cfg };
        let mut enc = ToyTextEncoder { id: Self::make_id(&cfg), cfg, table, positional };
        for (i, s) in registered.iter().enumerate() {
            let mut r = rng::seeded(rng::derive_seed(enc.cfg.seed, &[0x70, i as u64]));
            let init = rng::gaussian_vec(&mut r, enc.cfg.width).into_iter().map(|v| v * EMBED_STD).collect();
            enc.register_token(s, init)?;
        }
        Ok(enc)
    }

    fn make_id(cfg: &ToyTextConfig) -> String {
        format!("toy-hash-text-{}-seed{}", cfg.width, cfg.seed)
    }

    pub fn from_state(state: &ComponentState) -> Result<Self, DiffusionError> {
        let cfg: ToyTextConfig = serde_json::from_value(state.config.clone())
            .map_err(|e| DiffusionError::BadComponent(format!("text config: {e}")))?;
        let mut enc = ToyTextEncoder::new(ToyTextConfig { registered: Vec::new(), ..cfg.clone() })?;
        for s in &cfg.registered {
            enc.register_token(s, vec![0.0; cfg.width])?;
        }
        let rows = cfg.vocab_base + cfg.registered.len();
        let expected = rows * cfg.width + cfg.max_len * cfg.width;
        if state.params.len() != expected {
            return Err(DiffusionError::ShapeMismatch { what: "text params", expected, got: state.params.len() });
        }
        let (t, p) = state.params.split_at(rows * cfg.width);
        enc.table = Matrix::from_vec(rows, cfg.width, t.to_vec());
        enc.positional = p.to_vec();
        Ok(enc)
    }

    pub fn config(&self) -> &ToyTextConfig {
        &self.cfg
    }
}

impl TextEncoder for ToyTextEncoder {
    fn id(&self) -> &str {
        &self.id
    }

    fn width(&self) -> usize {
        self.cfg.width
    }

    fn tokenize(&self, text: &str) -> Vec<usize> {
        let lower = text.to_lowercase();
        let mut ids = vec![BOS_ID];
        for m in token_regex().find_iter(&lower) {
            if ids.len() == self.cfg.max_len {
                break;
            }
            let tok = m.as_str();
            ids.push(self.lookup_token(tok).unwrap_or_else(|| self.word_id(tok)));
        }
        ids
    }

    fn embedding_table(&self) -> &Matrix {
        &self.table
    }

    fn embedding_table_mut(&mut self) -> &mut Matrix {
        &mut self.table
    }

    fn encode_tokens(&self, ids: &[usize]) -> Result<EncoderOutput, DiffusionError> {
        let d = self.cfg.width;
        if ids.len() > self.cfg.max_len {
            return Err(DiffusionError::ShapeMismatch { what: "token sequence", expected: self.cfg.max_len, got: ids.len() });
        }
        let mut states = Matrix::zeros(ids.len(), d);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= self.table.rows() {
                return Err(DiffusionError::UnknownTokenId(id));
            }
            let e = self.table.row(id);
            let p = &self.positional[pos * d..(pos + 1) * d];
            for ((s, a), b) in states.row_mut(pos).iter_mut().zip(e).zip(p) {
                *s = (a + b).tanh();
            }
        }
        let pooled = if ids.is_empty() { vec![0.0; d] } else { states.column_mean() };
        let mut out = EncoderOutput::new(self.id.clone(), states);
        out.pooled = Some(pooled);
        Ok(out)
    }

    fn embedding_grads(&self, ids: &[usize], states: &Matrix, grad_states: &Matrix) -> Vec<(usize, Vec<f64>)> {
        let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (pos, &id) in ids.iter().enumerate() {
            let row = acc.entry(id).or_insert_with(|| vec![0.0; self.cfg.width]);
            for ((r, s), g) in row.iter_mut().zip(states.row(pos)).zip(grad_states.row(pos)) {
                *r += g * (1.0 - s * s);
            }
        }
        acc.into_iter().collect()
    }

    fn register_token(&mut self, surface: &str, init: Vec<f64>) -> Result<usize, DiffusionError> {
        let lower = surface.to_lowercase();
        let whole = token_regex().find(&lower).map(|m| m.as_str() == lower).unwrap_or(false);
        if !whole || !lower.starts_with('<') {
            // plain words already hash into the base vocabulary
            return Err(DiffusionError::DuplicateToken(surface.to_string()));
        }
        if self.lookup_token(&lower).is_some() {
            return Err(DiffusionError::DuplicateToken(surface.to_string()));
        }
        if init.len() != self.cfg.width {
            return Err(DiffusionError::ShapeMismatch { what: "token init", expected: self.cfg.width, got: init.len() });
        }
        self.table.push_row(&init);
        self.cfg.registered.push(lower);
        Ok(self.table.rows() - 1)
    }

    fn lookup_token(&self, surface: &str) -> Option<usize> {
        let lower = surface.to_lowercase();
        self.cfg.registered.iter().position(|s| *s == lower).map(|i| self.cfg.vocab_base + i)
    }

    fn word_id(&self, word: &str) -> usize {
        1 + (word_hash(&word.to_lowercase(), self.cfg.seed) % (self.cfg.vocab_base as u64 - 1)) as usize
    }

    fn other_params(&self) -> &[f64] {
        &self.positional
    }

    fn state(&self) -> ComponentState {
        let mut params = self.table.as_slice().to_vec();
        params.extend_from_slice(&self.positional);
        ComponentState {
            kind: TOY_TEXT_KIND.to_string(),
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            params,
        }
    }

    fn clone_box(&self) -> Box<dyn TextEncoder> {
        Box::new(self.clone())
    }
}
