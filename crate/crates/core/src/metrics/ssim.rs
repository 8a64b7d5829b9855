//! Mean structural similarity with an 11x11 Gaussian window (sigma 1.5),
//! `K1 = 0.01`, `K2 = 0.03` and dynamic range `L = 1` on normalised pixels.
//! Only positions where the window fits entirely inside the image are
//! averaged (no padding).

use super::MetricError;
use crate::ingestion::ImageSample;
use crate::par;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

pub fn ssim(a: &ImageSample, b: &ImageSample) -> Result<f64, MetricError> {
    let (w, h) = (a.width(), a.height());
    if (w, h) != (b.width(), b.height()) {
        return Err(MetricError::ShapeMismatch { a: (w, h), b: (b.width(), b.height()) });
    }
    if w.min(h) < SSIM_WINDOW {
        return Err(MetricError::ImageTooSmall { width: w, height: h, window: SSIM_WINDOW });
    }
    let k = gaussian_kernel();
    let (pa, pb) = (a.pixels(), b.pixels());
    let out_w = w - SSIM_WINDOW + 1;
    let out_h = h - SSIM_WINDOW + 1;

    // horizontal pass: five moment images of width out_w
    let horiz = |row: usize| -> [Vec<f64>; 5] {
        let mut m: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; out_w]);
        let ra = &pa[row * w..(row + 1) * w];
        let rb = &pb[row * w..(row + 1) * w];
        for x in 0..out_w {
            let mut acc = [0.0; 5];
            for (i, &ki) in k.iter().enumerate() {
                let (u, v) = (ra[x + i], rb[x + i]);
                acc[0] += ki * u;
                acc[1] += ki * v;
                acc[2] += ki * (u * u);
                acc[3] += ki * (v * v);
                acc[4] += ki * (u * v);
            }
            for (mi, ai) in m.iter_mut().zip(acc) {
                mi[x] = ai;
            }
        }
        m
    };
    let rows = par::map_range(h, horiz);

    let row_means = par::map_range(out_h, |y| {
        let mut sum = 0.0;
        for x in 0..out_w {
            let mut acc = [0.0; 5];
            for (i, &ki) in k.iter().enumerate() {
                let r = &rows[y + i];
                for (slot, mom) in acc.iter_mut().zip(r.iter()) {
                    *slot += ki * mom[x];
                }
            }
            let [mu_a, mu_b, e_aa, e_bb, e_ab] = acc;
            let var_a = e_aa - mu_a * mu_a;
            let var_b = e_bb - mu_b * mu_b;
            let cov = e_ab - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + C1) * (2.0 * cov + C2);
            let den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2);
            sum += num / den;
        }
        sum
    });
    Ok(row_means.iter().sum::<f64>() / (out_w * out_h) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(seed: u64, w: usize, h: usize) -> ImageSample {
        let mut r = rng::seeded(seed);
        ImageSample::new("r", w, h, (0..w * h).map(|_| r.gen::<f64>()).collect(), 255.0).unwrap()
    }

    /// Direct windowed formula, no separable filtering.
    fn ssim_oracle(a: &ImageSample, b: &ImageSample) -> f64 {
        let k = gaussian_kernel();
        let (w, h) = (a.width(), a.height());
        let mut total = 0.0;
        let mut count = 0.0;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb) = (0.0, 0.0);
                for j in 0..SSIM_WINDOW {
                    for i in 0..SSIM_WINDOW {
                        let wt = k[i] * k[j];
                        ma += wt * a.get(x0 + i, y0 + j);
                        mb += wt * b.get(x0 + i, y0 + j);
                    }
                }
                let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
                for j in 0..SSIM_WINDOW {
                    for i in 0..SSIM_WINDOW {
                        let wt = k[i] * k[j];
                        let da = a.get(x0 + i, y0 + j) - ma;
                        let db = b.get(x0 + i, y0 + j) - mb;
                        va += wt * da * da;
                        vb += wt * db * db;
                        cab += wt * da * db;
                    }
                }
                total += ((2.0 * ma * mb + C1) * (2.0 * cab + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                count += 1.0;
            }
        }
        total / count
    }

    #[test]
    fn identical_is_one() {
        let a = random(3, 20, 17);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn inverted_checkerboard_is_negative() {
        let px: Vec<f64> = (0..16 * 16).map(|i| ((i % 16 + i / 16) % 2) as f64).collect();
        let a = ImageSample::new("a", 16, 16, px.clone(), 255.0).unwrap();
        let b = ImageSample::new("b", 16, 16, px.iter().map(|p| 1.0 - p).collect(), 255.0).unwrap();
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "{s}");
        assert!((s - ssim_oracle(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn matches_direct_formula_and_is_symmetric() {
        for seed in 0..5 {
            let a = random(seed, 14, 13);
            let b = random(seed + 50, 14, 13);
            let s = ssim(&a, &b).unwrap();
            assert!((s - ssim_oracle(&a, &b)).abs() < 1e-10);
            assert_eq!(s, ssim(&b, &a).unwrap());
            assert!(s < 1.0);
        }
    }

    #[test]
    fn too_small() {
        let a = random(0, 10, 30);
        assert!(matches!(ssim(&a, &a), Err(MetricError::ImageTooSmall { .. })));
    }
}
