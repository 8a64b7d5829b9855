use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlp::{loss_and_grad, ProjectionDims, ProjectionMlp};
use super::ProjectionError;
use crate::bench::{extract_embedding, EncoderOutput, ExtractionStrategy};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::{checkpoint, io, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// One vector per prompt.
    Document,
    /// One vector per token position.
    Token,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionTrainConfig {
    pub mode: ProjectionMode,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Hidden width; `None` uses the target width.
    pub hidden: Option<usize>,
    /// Document mode only: how each side is reduced to one vector.
    pub source_strategy: ExtractionStrategy,
    pub target_strategy: ExtractionStrategy,
    /// Token mode: pairs whose lengths differ by more than this fraction of
    /// the longer sequence are dropped.
    pub length_tolerance: f64,
}

impl Default for ProjectionTrainConfig {
    fn default() -> Self {
        ProjectionTrainConfig {
            mode: ProjectionMode::Document,
            learning_rate: 1e-3,
            steps: 500,
            batch_size: 16,
            seed: 0,
            optimizer: OptimizerConfig::adam(),
            hidden: None,
            source_strategy: ExtractionStrategy::MeanHiddenStates,
            target_strategy: ExtractionStrategy::PoolerOutput,
            length_tolerance: 0.25,
        }
    }
}

impl ProjectionTrainConfig {
    fn validate(&self) -> Result<(), ProjectionError> {
        let bad = |m: &str| Err(ProjectionError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.hidden == Some(0) {
            return bad("hidden must be at least 1");
        }
        if !(0.0..1.0).contains(&self.length_tolerance) {
            return bad("length_tolerance must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Training rows grouped by source pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPairs {
    pub groups: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    pub dropped: usize,
}

impl AlignedPairs {
    pub fn n_rows(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn rows(&self) -> Vec<(&[f64], &[f64])> {
        self.groups.iter().flatten().map(|(x, y)| (x.as_slice(), y.as_slice())).collect()
    }
}

pub fn align_pairs(
    source: &[EncoderOutput],
    target: &[EncoderOutput],
    cfg: &ProjectionTrainConfig,
) -> Result<AlignedPairs, ProjectionError> {
    if source.len() != target.len() {
        return Err(ProjectionError::UnpairedInputs { source_len: source.len(), target_len: target.len() });
    }
    let mut groups = Vec::with_capacity(source.len());
    let mut dropped = 0;
    for (s, t) in source.iter().zip(target) {
        match cfg.mode {
            ProjectionMode::Document => {
                let x = extract_embedding(s, cfg.source_strategy)?;
                let y = extract_embedding(t, cfg.target_strategy)?;
                groups.push(vec![(x, y)]);
            }
            ProjectionMode::Token => {
                let (ls, lt) = (s.len(), t.len());
                let longer = ls.max(lt);
                let shorter = ls.min(lt);
                if shorter == 0 || (longer - shorter) as f64 > cfg.length_tolerance * longer as f64 {
                    dropped += 1;
                    continue;
                }
                groups.push(
                    (0..shorter).map(|i| (s.token_states.row(i).to_vec(), t.token_states.row(i).to_vec())).collect(),
                );
            }
        }
    }
    if groups.is_empty() {
        return Err(ProjectionError::NoPairs);
    }
    let (dx, dy) = (groups[0][0].0.len(), groups[0][0].1.len());
    for (x, y) in groups.iter().flatten() {
        if x.len() != dx {
            return Err(ProjectionError::DimMismatch { expected: dx, got: x.len() });
        }
        if y.len() != dy {
            return Err(ProjectionError::DimMismatch { expected: dy, got: y.len() });
        }
    }
    Ok(AlignedPairs { groups, dropped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProjection {
    pub mlp: ProjectionMlp,
    /// Mini-batch loss before each update, one entry per step.
    pub trace: Vec<LossPoint>,
    pub pairs_used: usize,
    pub pairs_dropped: usize,
}

pub fn train_projection(
    source: &[EncoderOutput],
    target: &[EncoderOutput],
    cfg: &ProjectionTrainConfig,
) -> Result<TrainedProjection, ProjectionError> {
    cfg.validate()?;
    let pairs = align_pairs(source, target, cfg)?;
    let (input, output) = (pairs.groups[0][0].0.len(), pairs.groups[0][0].1.len());
    let dims = ProjectionDims { input, hidden: cfg.hidden.unwrap_or(output), output };
    let mlp = ProjectionMlp::new(dims, rng::derive_seed(cfg.seed, &[0]));
    train_from(mlp, &pairs, cfg)
}

/// Continues training an existing network on pre-aligned pairs.
pub fn train_from(
    mut mlp: ProjectionMlp,
    pairs: &AlignedPairs,
    cfg: &ProjectionTrainConfig,
) -> Result<TrainedProjection, ProjectionError> {
    cfg.validate()?;
    if pairs.groups.is_empty() {
        return Err(ProjectionError::NoPairs);
    }
    let mut batch_rng = rng::seeded(rng::derive_seed(cfg.seed, &[1]));
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, mlp.params().len());
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rows: Vec<(&[f64], &[f64])> = Vec::new();
        for _ in 0..cfg.batch_size {
            let g = &pairs.groups[batch_rng.gen_range(0..pairs.groups.len())];
            rows.extend(g.iter().map(|(x, y)| (x.as_slice(), y.as_slice())));
        }
        let (loss, grad) = loss_and_grad(&mlp, &rows);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ProjectionError::NonFiniteLoss { step });
        }
        trace.push(LossPoint { step, loss });
        opt.step(mlp.params_mut(), &grad);
    }
    if mlp.params().iter().any(|p| !p.is_finite()) {
        return Err(ProjectionError::NonFiniteParameters);
    }
    Ok(TrainedProjection { mlp, trace, pairs_used: pairs.groups.len(), pairs_dropped: pairs.dropped })
}

pub fn loss_trace_csv(trace: &[LossPoint]) -> String {
    let mut s = String::from("step,loss\n");
    for p in trace {
        s.push_str(&format!("{},{}\n", p.step, p.loss));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionCheckpoint {
    pub format: String,
    pub dims: ProjectionDims,
    pub mode: ProjectionMode,
    pub seed: u64,
    pub step: usize,
    pub layout: Vec<(String, usize)>,
}

const FORMAT: &str = "latentbench-projection-v1";

pub fn save_projection(
    path: &Path,
    mlp: &ProjectionMlp,
    mode: ProjectionMode,
    seed: u64,
    step: usize,
) -> crate::Result<()> {
    let header = ProjectionCheckpoint {
        format: FORMAT.to_string(),
        dims: mlp.dims(),
        mode,
        seed,
        step,
        layout: mlp.layout().into_iter().map(|(n, l)| (n.to_string(), l)).collect(),
    };
    io::write_atomic(path, &checkpoint::encode(&header, mlp.params()))
}

pub fn load_projection(path: &Path) -> crate::Result<(ProjectionMlp, ProjectionCheckpoint)> {
    let bytes = io::read_bytes(path)?;
    let (header, params): (ProjectionCheckpoint, Vec<f64>) =
        checkpoint::decode(&bytes).map_err(ProjectionError::from)?;
    if header.format != FORMAT {
        return Err(crate::Error::format(path, format!("unexpected checkpoint format {:?}", header.format)));
    }
    let mlp = ProjectionMlp::from_params(header.dims, params)?;
    Ok((mlp, header))
}
