//! Target normalization: Box-Cox power transform (maximum-likelihood lambda
//! on a grid) followed by linear scaling to [0, 1], with the exact inverse.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("degenerate target range: max equals min after transform")]
    DegenerateRange,
    #[error("targets must be finite")]
    NonFinite,
    #[error("empty target list")]
    Empty,
}

/// Shift applied before the power transform; targets like alpha_T contain
/// exact zeros and Box-Cox needs positive inputs.
pub const BOXCOX_SHIFT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCoxNormalizer {
    pub lambda: f64,
    pub shift: f64,
    pub t_min: f64,
    pub t_max: f64,
}

fn boxcox(y: f64, lambda: f64, shift: f64) -> f64 {
    let z = y + shift;
    if lambda == 0.0 {
        z.ln()
    } else {
        (z.powf(lambda) - 1.0) / lambda
    }
}

fn boxcox_inv(w: f64, lambda: f64, shift: f64) -> f64 {
    if lambda == 0.0 {
        w.exp() - shift
    } else {
        (lambda * w + 1.0).powf(1.0 / lambda) - shift
    }
}

/// Profile log-likelihood of the Box-Cox model at a given lambda (Gaussian
/// residuals): -n/2 ln(sigma^2(w)) + (lambda - 1) sum ln(z).
fn log_likelihood(values: &[f64], lambda: f64, shift: f64) -> f64 {
    let n = values.len() as f64;
    let w: Vec<f64> = values.iter().map(|&y| boxcox(y, lambda, shift)).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let log_z_sum: f64 = values.iter().map(|&y| (y + shift).ln()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * log_z_sum
}

impl BoxCoxNormalizer {
    /// Fits lambda by maximum likelihood on the grid [-2, 2] step 0.01, then
    /// records the transformed min/max for the linear map to [0, 1].
    pub fn fit(values: &[f64]) -> Result<Self, NormalizeError> {
        Self::fit_with_shift(values, BOXCOX_SHIFT)
    }

    pub fn fit_with_shift(values: &[f64], shift: f64) -> Result<Self, NormalizeError> {
        if values.is_empty() {
            return Err(NormalizeError::Empty);
        }
        if values.iter().any(|v| !v.is_finite() || v + shift <= 0.0) {
            return Err(NormalizeError::NonFinite);
        }
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in -200..=200 {
            let lambda = k as f64 / 100.0;
            let ll = log_likelihood(values, lambda, shift);
            if ll > best.0 {
                best = (ll, lambda);
            }
        }
        let lambda = best.1;
        let mut t_min = f64::INFINITY;
        let mut t_max = f64::NEG_INFINITY;
        for &y in values {
            let w = boxcox(y, lambda, shift);
            t_min = t_min.min(w);
            t_max = t_max.max(w);
        }
        if !(t_max > t_min) {
            return Err(NormalizeError::DegenerateRange);
        }
        Ok(BoxCoxNormalizer {
            lambda,
            shift,
            t_min,
            t_max,
        })
    }

    pub fn apply(&self, y: f64) -> f64 {
        (boxcox(y, self.lambda, self.shift) - self.t_min) / (self.t_max - self.t_min)
    }

    pub fn invert(&self, n: f64) -> f64 {
        boxcox_inv(n * (self.t_max - self.t_min) + self.t_min, self.lambda, self.shift)
    }
}

/// One Box-Cox normalizer per regression output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub per_output: [BoxCoxNormalizer; 2],
}

impl TargetNormalizer {
    pub fn fit(targets: &[[f64; 2]]) -> Result<Self, NormalizeError> {
        let col = |k: usize| targets.iter().map(|t| t[k]).collect::<Vec<_>>();
        Ok(TargetNormalizer {
            per_output: [
                BoxCoxNormalizer::fit(&col(0))?,
                BoxCoxNormalizer::fit(&col(1))?,
            ],
        })
    }

    pub fn apply(&self, y: [f64; 2]) -> [f64; 2] {
        [self.per_output[0].apply(y[0]), self.per_output[1].apply(y[1])]
    }

    pub fn invert(&self, n: [f64; 2]) -> [f64; 2] {
        [
            self.per_output[0].invert(n[0]),
            self.per_output[1].invert(n[1]),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Box-Cox with lambda = 1 is the affine map y + shift - 1: ordering is
    /// preserved and the normalized values are a plain rescale.
    #[test]
    fn lambda_one_is_affine() {
        let n = BoxCoxNormalizer {
            lambda: 1.0,
            shift: BOXCOX_SHIFT,
            t_min: 0.0,
            t_max: 2.0,
        };
        let ys = [0.1, 0.5, 0.9, 1.7];
        let mapped: Vec<f64> = ys.iter().map(|&y| n.apply(y)).collect();
        for w in mapped.windows(2) {
            assert!(w[0] < w[1]);
        }
        // Affine: equal input gaps stay equal.
        let d1 = n.apply(0.6) - n.apply(0.4);
        let d2 = n.apply(1.0) - n.apply(0.8);
        assert!((d1 - d2).abs() < 1e-14);
    }

    #[test]
    fn round_trip_within_1e10() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let values: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..3.0)).collect();
        let n = BoxCoxNormalizer::fit(&values).unwrap();
        for &y in &values {
            let r = n.invert(n.apply(y));
            assert!((r - y).abs() <= 1e-10, "round trip {y} -> {r} (lambda {})", n.lambda);
        }
    }

    /// MLE grid-search oracle: log-normal data should fit lambda near 0
    /// (the log transform Gaussianizes it).
    #[test]
    fn lognormal_fits_lambda_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..3000)
            .map(|_| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.random_range(1e-12..1.0);
                let u2: f64 = rng.random_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                (0.8 * z).exp()
            })
            .collect();
        let n = BoxCoxNormalizer::fit_with_shift(&values, 0.0).unwrap();
        assert!(n.lambda.abs() <= 0.1, "lambda {}", n.lambda);
    }

    #[test]
    fn degenerate_range_is_error() {
        let values = vec![1.5; 10];
        assert!(matches!(
            BoxCoxNormalizer::fit(&values),
            Err(NormalizeError::DegenerateRange)
        ));
    }

    #[test]
    fn zeros_are_handled_by_shift() {
        let values = vec![0.0, 0.0, 0.1, 0.5, 1.0];
        let n = BoxCoxNormalizer::fit(&values).unwrap();
        let a = n.apply(0.0);
        assert!(a.is_finite());
        assert!((n.invert(a) - 0.0).abs() < 1e-10);
    }

    #[test]
    fn normalized_range_is_unit_interval() {
        let values = vec![0.05, 0.2, 0.7, 1.3, 2.9];
        let n = BoxCoxNormalizer::fit(&values).unwrap();
        assert!((n.apply(0.05) - 0.0).abs() < 1e-12);
        assert!((n.apply(2.9) - 1.0).abs() < 1e-12);
    }
}
