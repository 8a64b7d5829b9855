//! Synthetic chest-radiograph stand-ins for desk-scale runs.
//!
//! Each image has a dark background, a soft-tissue silhouette, a bright
//! spine and two dark lung fields. Positives also carry a bright blob at
//! the base of the left lung (viewer's left), standing in for an effusion.
//! Shapes are smooth so that low-rank patch codes reconstruct them well.

use rand::Rng as _;

use crate::ingestion::{ChexpertClass, FinetuneSet, ImageSample, LabelVector, NEGATIVE_PROMPT, POSITIVE_PROMPT};
use crate::rng;

pub const TOY_SIZE: usize = 64;

/// Blob centre as a fraction of the image size, before jitter.
const BLOB_CENTRE: (f64, f64) = (0.31, 0.70);
const BLOB_SIGMA: f64 = 0.065;
const BLOB_AMPLITUDE: f64 = 0.45;

/// Smooth 1 → 0 step across the boundary of an ellipse.
fn inside(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64, soft: f64) -> f64 {
    let d = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
    let r = rx.min(ry);
    1.0 / (1.0 + ((d - 1.0) * r / soft).exp())
}

/// One toy radiograph. Deterministic in `(seed, abnormal)`.
pub fn toy_cxr(seed: u64, abnormal: bool) -> ImageSample {
    let mut r = rng::seeded(rng::derive_seed(seed, &[0x5c]));
    let mut jitter = |amount: f64| r.gen_range(-amount..=amount);
    let n = TOY_SIZE as f64;
    let brightness = 1.0 + jitter(0.08);
    let lung_scale = 1.0 + jitter(0.06);
    let (dx, dy) = (jitter(1.5) / n, jitter(1.5) / n);
    let tilt = jitter(0.02);
    let (bx, by) = (jitter(1.5) / n, jitter(1.5) / n);
    let mut pixels = Vec::with_capacity(TOY_SIZE * TOY_SIZE);
    for py in 0..TOY_SIZE {
        for px in 0..TOY_SIZE {
            let x = (px as f64 + 0.5) / n;
            let y = (py as f64 + 0.5) / n;
            let body = inside(x, y, 0.5 + dx, 0.58 + dy, 0.44, 0.48, 0.05);
            let spine = (-((x - 0.5 - dx) / 0.05).powi(2)).exp() * body;
            let left = inside(x, y, 0.31 + dx - tilt, 0.52 + dy, 0.13 * lung_scale, 0.26 * lung_scale, 0.04);
            let right = inside(x, y, 0.69 + dx + tilt, 0.52 + dy, 0.13 * lung_scale, 0.26 * lung_scale, 0.04);
            let mut v = 0.06 + 0.42 * body + 0.25 * spine - 0.28 * (left + right);
            if abnormal {
                let (cx, cy) = (BLOB_CENTRE.0 + dx + bx, BLOB_CENTRE.1 + dy + by);
                let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (BLOB_SIGMA * BLOB_SIGMA);
                v += BLOB_AMPLITUDE * (-0.5 * d2).exp();
            }
            pixels.push((v * brightness).clamp(0.0, 1.0));
        }
    }
    let (prefix, class) =
        if abnormal { ("pos", ChexpertClass::PleuralEffusion) } else { ("neg", ChexpertClass::NoFinding) };
    ImageSample::new(format!("{prefix}-{seed:06}"), TOY_SIZE, TOY_SIZE, pixels, 65535.0)
        .expect("toy pixels lie in [0, 1]")
        .with_labels(LabelVector::from_positives(&[class]))
}

/// `n` images with seeds `base..base+n`; every other image is abnormal when
/// `with_positives` is set, starting with a normal one.
pub fn toy_corpus(base_seed: u64, n: usize, with_positives: bool) -> Vec<ImageSample> {
    (0..n as u64).map(|i| toy_cxr(base_seed + i, with_positives && i % 2 == 1)).collect()
}

/// The few-shot set: `n_neg` normal and `n_pos` abnormal images with the two
/// evaluation prompts as captions.
pub fn toy_finetune_set(base_seed: u64, n_neg: usize, n_pos: usize) -> FinetuneSet {
    let negatives = (0..n_neg as u64).map(|i| toy_cxr(base_seed + i, false)).collect();
    let positives = (0..n_pos as u64).map(|i| toy_cxr(base_seed + 1000 + i, true)).collect();
    FinetuneSet::new(negatives, positives, NEGATIVE_PROMPT, POSITIVE_PROMPT)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region_mean(img: &ImageSample, cx: f64, cy: f64, half: usize) -> f64 {
        let (x0, y0) = ((cx * TOY_SIZE as f64) as usize, (cy * TOY_SIZE as f64) as usize);
        let mut s = 0.0;
        let mut n = 0.0;
        for y in y0 - half..=y0 + half {
            for x in x0 - half..=x0 + half {
                s += img.get(x, y);
                n += 1.0;
            }
        }
        s / n
    }

    #[test]
    fn deterministic_and_varied() {
        assert_eq!(toy_cxr(3, false), toy_cxr(3, false));
        assert_ne!(toy_cxr(3, false).pixels(), toy_cxr(4, false).pixels());
    }

    #[test]
    fn blob_brightens_lung_base() {
        for seed in 0..10 {
            let neg = toy_cxr(seed, false);
            let pos = toy_cxr(seed, true);
            let gap = region_mean(&pos, BLOB_CENTRE.0, BLOB_CENTRE.1, 2) - region_mean(&neg, BLOB_CENTRE.0, BLOB_CENTRE.1, 2);
            assert!(gap > 0.25, "seed {seed}: {gap}");
            // lung field darker than the spine
            assert!(region_mean(&neg, 0.31, 0.45, 2) < region_mean(&neg, 0.5, 0.45, 1));
        }
    }

    #[test]
    fn labels_follow_class() {
        let set = toy_finetune_set(0, 5, 5);
        assert_eq!(set.len(), 10);
        assert!(set.positives.iter().all(|p| p.labels.unwrap().get(ChexpertClass::PleuralEffusion)
            == crate::ingestion::LabelState::Positive));
        assert!(set.pairs().iter().any(|(_, c)| *c == POSITIVE_PROMPT));
    }
}
