//! Small numeric helpers shared by the weighting and scoring stages.

use crate::{Error, Result};

/// Default bound on every exponent fed to `exp` in weight formulas.
pub const DEFAULT_EXPONENT_CLAMP: f64 = 30.0;

/// Z-score standardization with the population standard deviation.
///
/// A constant series (including a single value) has no spread and maps to
/// all zeros.
pub fn standardize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("cannot standardize an empty series".into()));
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Ok(vec![0.0; values.len()]);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// `exp(x)` with `x` clamped to `[-clamp, clamp]`.
#[inline]
pub fn exp_clamped(x: f64, clamp: f64) -> f64 {
    x.clamp(-clamp, clamp).exp()
}

/// Weighted linear combination `Σ wᵢ·xᵢ`.
#[inline]
pub(crate) fn dot(weights: &[f64], xs: &[f64]) -> f64 {
    weights.iter().zip(xs).map(|(w, x)| w * x).sum()
}

/// Checks that a group of ratios is non-negative and sums to one.
pub fn check_ratios(name: &str, ratios: &[f64]) -> Result<()> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!("{name}: ratios must be finite and >= 0, got {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{name}: ratios must sum to 1, got {sum}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_maps_to_zero() {
        assert_eq!(standardize(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(standardize(&[0.1, 0.1, 0.1]).unwrap(), vec![0.0; 3]);
        assert_eq!(standardize(&[42.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn three_point_series() {
        // mean 4, population sd sqrt(8/3)
        let z = standardize(&[2.0, 4.0, 6.0]).unwrap();
        let expect = 2.0 / (8.0f64 / 3.0).sqrt();
        assert!((z[0] + expect).abs() < 1e-12);
        assert!(z[1].abs() < 1e-12);
        assert!((z[2] - expect).abs() < 1e-12);
        assert!((expect - 1.224745).abs() < 1e-6);
    }

    #[test]
    fn empty_series_is_an_error() {
        assert!(standardize(&[]).is_err());
    }

    #[test]
    fn ratio_groups() {
        assert!(check_ratios("w", &[0.5, 0.5]).is_ok());
        assert!(check_ratios("w", &[0.2; 5]).is_ok());
        assert!(check_ratios("w", &[0.6, 0.5]).is_err());
        assert!(check_ratios("w", &[1.5, -0.5]).is_err());
    }

    #[test]
    fn clamp_bounds_exponent() {
        assert_eq!(exp_clamped(1e6, 30.0), 30f64.exp());
        assert_eq!(exp_clamped(-1e6, 30.0), (-30f64).exp());
        assert_eq!(exp_clamped(0.0, 30.0), 1.0);
    }

    proptest! {
        #[test]
        fn standardized_moments(values in prop::collection::vec(-1e6f64..1e6, 2..200)) {
            let first = values[0];
            prop_assume!(values.iter().any(|&v| v != first));
            let z = standardize(&values).unwrap();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
        }
    }
}
