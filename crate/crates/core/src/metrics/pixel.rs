use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MetricError;
use crate::ingestion::ImageSample;

/// Per-pair reconstruction quality. `psnr` is `+inf` for identical images
/// and serialises as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub rmse: f64,
    #[serde(serialize_with = "inf_as_null", deserialize_with = "null_as_inf")]
    pub psnr: f64,
    pub ssim: f64,
}

pub(crate) fn inf_as_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

pub(crate) fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn check_pair(a: &ImageSample, b: &ImageSample) -> Result<(), MetricError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricError::ShapeMismatch { a: (a.width(), a.height()), b: (b.width(), b.height()) });
    }
    if a.source_range() != b.source_range() {
        return Err(MetricError::RangeMismatch { a: a.source_range(), b: b.source_range() });
    }
    Ok(())
}

/// RMSE on the normalised `[0, 1]` pixels.
pub fn rmse_normalized(a: &ImageSample, b: &ImageSample) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.pixels().len() as f64).sqrt())
}

/// RMSE in source units.
pub fn rmse(a: &ImageSample, b: &ImageSample) -> Result<f64, MetricError> {
    Ok(rmse_normalized(a, b)? * a.source_range())
}

/// PSNR in dB with the source range as peak; `+inf` when the images match.
pub fn psnr(a: &ImageSample, b: &ImageSample) -> Result<f64, MetricError> {
    let e = rmse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (a.source_range() / e).log10())
}

pub fn pair_metrics(a: &ImageSample, b: &ImageSample) -> Result<PairMetrics, MetricError> {
    Ok(PairMetrics { rmse: rmse(a, b)?, psnr: psnr(a, b)?, ssim: super::ssim(a, b)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn constant(v: f64, range: f64) -> ImageSample {
        ImageSample::new("c", 8, 8, vec![v; 64], range).unwrap()
    }

    fn random(seed: u64, w: usize, h: usize) -> ImageSample {
        let mut r = rng::seeded(seed);
        ImageSample::new("r", w, h, (0..w * h).map(|_| r.gen::<f64>()).collect(), 255.0).unwrap()
    }

    #[test]
    fn closed_forms() {
        let a = constant(100.0 / 255.0, 255.0);
        let b = constant(101.0 / 255.0, 255.0);
        assert!((rmse(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 48.130803608679).abs() < 1e-9);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn matches_elementwise_oracle() {
        let a = random(1, 8, 8);
        let b = random(2, 8, 8);
        let mut acc = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let d = a.get(x, y) * 255.0 - b.get(x, y) * 255.0;
                acc += d * d;
            }
        }
        let oracle = (acc / 64.0).sqrt();
        assert!((rmse(&a, &b).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn psnr_log_identity() {
        for s in 0..20 {
            let a = random(10 + s, 12, 9);
            let b = random(100 + s, 12, 9);
            let lhs = psnr(&a, &b).unwrap();
            let rhs = 20.0 * 255f64.log10() - 20.0 * rmse(&a, &b).unwrap().log10();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
            let peak_one = -20.0 * rmse_normalized(&a, &b).unwrap().log10();
            assert!((lhs - peak_one).abs() < 1e-10);
        }
    }

    #[test]
    fn psnr_drops_when_noise_doubles() {
        let base = constant(0.5, 255.0);
        let mut r = rng::seeded(5);
        let noise: Vec<f64> = (0..64).map(|_| r.gen_range(-1.0..1.0)).collect();
        let noisy = |amp: f64| {
            let px = base.pixels().iter().zip(&noise).map(|(p, n)| p + amp * n).collect();
            ImageSample::new("n", 8, 8, px, 255.0).unwrap()
        };
        assert!(psnr(&base, &noisy(0.1)).unwrap() < psnr(&base, &noisy(0.05)).unwrap());
    }

    #[test]
    fn shape_and_range_mismatch() {
        let a = random(1, 8, 8);
        assert!(matches!(rmse(&a, &random(1, 4, 16)), Err(MetricError::ShapeMismatch { .. })));
        assert!(matches!(rmse(&a, &constant(0.0, 65535.0)), Err(MetricError::RangeMismatch { .. })));
    }

    #[test]
    fn psnr_serializes_inf_as_null() {
        let m = PairMetrics { rmse: 0.0, psnr: f64::INFINITY, ssim: 1.0 };
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"rmse":0.0,"psnr":null,"ssim":1.0}"#);
        assert_eq!(serde_json::from_str::<PairMetrics>(&s).unwrap(), m);
    }
}
