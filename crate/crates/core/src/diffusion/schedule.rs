use serde::{Deserialize, Serialize};

use super::DiffusionError;

/// Linear beta schedule with cumulative products. Timesteps are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

pub const TOY_T: usize = 100;
pub const TOY_BETA_START: f64 = 1e-4;
pub const TOY_BETA_END: f64 = 0.1;

impl NoiseSchedule {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn toy() -> Self {
        make_schedule(TOY_T, TOY_BETA_START, TOY_BETA_END).expect("toy schedule is valid")
    }

    pub fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t >= self.len() {
            return Err(DiffusionError::TOutOfRange { t, len: self.len() });
        }
        Ok(())
    }
}

pub fn make_schedule(t: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, DiffusionError> {
    let valid = t >= 1 && beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0;
    if !valid {
        return Err(DiffusionError::InvalidRange { t, beta_start, beta_end });
    }
    let betas: Vec<f64> = (0..t)
        .map(|i| if t == 1 { beta_start } else { beta_start + (beta_end - beta_start) * i as f64 / (t - 1) as f64 })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule { beta_start, beta_end, betas, alphas, alpha_bars })
}

/// `sqrt(ᾱ_t)·x0 + sqrt(1−ᾱ_t)·eps`.
pub fn forward_diffuse(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>, DiffusionError> {
    schedule.check_t(t)?;
    if x0.len() != eps.len() {
        return Err(DiffusionError::ShapeMismatch { what: "noise", expected: x0.len(), got: eps.len() });
    }
    let ab = schedule.alpha_bars[t];
    let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| s * x + n * e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_step() {
        let s = make_schedule(1, 0.1, 0.1).unwrap();
        assert_eq!(s.alpha_bars, vec![0.9]);
    }

    #[test]
    fn long_schedule_matches_product_oracle() {
        let s = make_schedule(1000, 8.5e-4, 0.012).unwrap();
        let mut prod = 1.0;
        for i in 0..1000 {
            prod *= 1.0 - (8.5e-4 + (0.012 - 8.5e-4) * i as f64 / 999.0);
        }
        assert!((s.alpha_bars[999] - prod).abs() < 1e-12);
    }

    #[test]
    fn toy_end_is_mostly_noise() {
        let s = NoiseSchedule::toy();
        assert!(s.alpha_bars[TOY_T - 1].sqrt() < 0.1);
    }

    #[test]
    fn invalid_ranges() {
        for (t, a, b) in [(0, 0.1, 0.2), (5, 0.0, 0.2), (5, 0.3, 0.2), (5, 0.1, 1.0)] {
            assert!(matches!(make_schedule(t, a, b), Err(DiffusionError::InvalidRange { .. })));
        }
    }

    #[test]
    fn diffuse_edge_cases() {
        let s = NoiseSchedule::toy();
        let x0 = [1.0, -2.0];
        let out = forward_diffuse(&x0, 10, &[0.0, 0.0], &s).unwrap();
        assert_eq!(out, vec![s.alpha_bars[10].sqrt(), -2.0 * s.alpha_bars[10].sqrt()]);
        let out = forward_diffuse(&[0.0], 10, &[3.0], &s).unwrap();
        assert_eq!(out, vec![3.0 * (1.0 - s.alpha_bars[10]).sqrt()]);
        assert!(matches!(forward_diffuse(&x0, TOY_T, &x0, &s), Err(DiffusionError::TOutOfRange { .. })));
    }

    proptest! {
        #[test]
        fn alpha_bars_strictly_decrease(t in 1usize..300, a in 1e-5f64..0.5, extra in 0.0f64..0.49) {
            let s = make_schedule(t, a, a + extra).unwrap();
            prop_assert_eq!(s.alpha_bars[0], s.alphas[0]);
            prop_assert!(s.alpha_bars.iter().all(|v| *v > 0.0 && *v < 1.0));
            prop_assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
        }
    }
}
