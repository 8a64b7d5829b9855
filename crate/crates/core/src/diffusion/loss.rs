use std::collections::BTreeSet;

use super::bundle::DiffusionBundle;
use super::contracts::{Denoiser, TextEncoder};
use super::schedule::{forward_diffuse, NoiseSchedule};
use super::DiffusionError;

/// Which parameters receive gradients. The toy VAE is fitted in closed
/// form and never receives gradients; the text encoder's positional table
/// is likewise always frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreezeMask {
    pub denoiser_trainable: bool,
    pub trainable_rows: RowSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowSet {
    None,
    All,
    Only(BTreeSet<usize>),
}

impl RowSet {
    pub fn contains(&self, row: usize) -> bool {
        match self {
            RowSet::None => false,
            RowSet::All => true,
            RowSet::Only(s) => s.contains(&row),
        }
    }
}

impl FreezeMask {
    pub fn all_trainable() -> Self {
        FreezeMask { denoiser_trainable: true, trainable_rows: RowSet::All }
    }

    pub fn all_frozen() -> Self {
        FreezeMask { denoiser_trainable: false, trainable_rows: RowSet::None }
    }

    pub fn denoiser_only() -> Self {
        FreezeMask { denoiser_trainable: true, trainable_rows: RowSet::None }
    }

    pub fn embedding_row(row: usize) -> Self {
        FreezeMask { denoiser_trainable: false, trainable_rows: RowSet::Only(BTreeSet::from([row])) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutput {
    pub loss: f64,
    /// Full-length; all zeros when the denoiser is frozen.
    pub denoiser_grad: Vec<f64>,
    /// Sparse per-row embedding gradients, trainable rows only, by row id.
    pub embedding_grads: Vec<(usize, Vec<f64>)>,
}

/// `mean((ε̂ − ε)²)` for one example with gradients for the unfrozen
/// parameters. `mask = None` trains the denoiser and every embedding row.
pub fn denoise_loss(
    bundle: &DiffusionBundle,
    x0: &[f64],
    caption: &str,
    t: usize,
    eps: &[f64],
    mask: Option<&FreezeMask>,
) -> Result<DenoiseOutput, DiffusionError> {
    let ids = bundle.text.tokenize(caption);
    denoise_loss_parts(bundle.denoiser.as_ref(), bundle.text.as_ref(), &bundle.schedule, x0, &ids, t, eps, mask)
}

#[allow(clippy::too_many_arguments)]
pub fn denoise_loss_parts(
    denoiser: &dyn Denoiser,
    text: &dyn TextEncoder,
    schedule: &NoiseSchedule,
    x0: &[f64],
    ids: &[usize],
    t: usize,
    eps: &[f64],
    mask: Option<&FreezeMask>,
) -> Result<DenoiseOutput, DiffusionError> {
    let all = FreezeMask::all_trainable();
    let mask = mask.unwrap_or(&all);
    let xt = forward_diffuse(x0, t, eps, schedule)?;
    let cond = text.encode_tokens(ids)?;
    let pred = denoiser.predict_noise(&xt, t, &cond.token_states)?;
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.iter().zip(eps).map(|(p, e)| p - e).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(DiffusionError::NonFinite("denoising loss"));
    }
    let want_rows = mask.trainable_rows != RowSet::None && ids.iter().any(|&i| mask.trainable_rows.contains(i));
    if !mask.denoiser_trainable && !want_rows {
        return Ok(DenoiseOutput { loss, denoiser_grad: vec![0.0; denoiser.params().len()], embedding_grads: Vec::new() });
    }
    let g: Vec<f64> = diff.iter().map(|d| 2.0 * d / n).collect();
    let grads = denoiser.backward(&xt, t, &cond.token_states, &g)?;
    let denoiser_grad = if mask.denoiser_trainable { grads.params } else { vec![0.0; denoiser.params().len()] };
    let embedding_grads = if want_rows {
        text.embedding_grads(ids, &cond.token_states, &grads.cond)
            .into_iter()
            .filter(|(row, _)| mask.trainable_rows.contains(*row))
            .collect()
    } else {
        Vec::new()
    };
    Ok(DenoiseOutput { loss, denoiser_grad, embedding_grads })
}
