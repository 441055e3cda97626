//! Paired covariate/response observations with the covariate scaled to [0,1].

use crate::error::{Error, Result};

/// A dataset of (xᵢ, yᵢ) pairs. The covariate is always stored on the [0,1]
/// scale; `scaling` records the raw (min, max) so fitted curves can be mapped
/// back to original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    scaling: (f64, f64),
}

impl Dataset {
    /// Build from raw covariates: min-max scales x to [0,1] and records the
    /// scaling. Requires at least one observation, finite values, and a
    /// non-constant covariate when n ≥ 2 (a constant column cannot be scaled).
    pub fn from_raw(x_raw: &[f64], y: &[f64]) -> Result<Dataset> {
        validate_pairs(x_raw, y)?;
        let lo = x_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if x_raw.len() >= 2 && lo == hi {
            return Err(Error::Data(
                "constant covariate column cannot be min-max scaled".to_string(),
            ));
        }
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x = x_raw.iter().map(|&v| (v - lo) / span).collect();
        Ok(Dataset {
            x,
            y: y.to_vec(),
            scaling: (lo, hi),
        })
    }

    /// Build from covariates already on the [0,1] scale (identity scaling).
    pub fn from_scaled(x: Vec<f64>, y: Vec<f64>) -> Result<Dataset> {
        validate_pairs(&x, &y)?;
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidArgument(
                "scaled covariates must lie in [0,1]".to_string(),
            ));
        }
        Ok(Dataset {
            x,
            y,
            scaling: (0.0, 1.0),
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Raw-covariate (min, max) recorded at scaling time.
    pub fn scaling(&self) -> (f64, f64) {
        self.scaling
    }

    /// Map a scaled covariate back to raw units.
    pub fn unscale(&self, x: f64) -> f64 {
        let (lo, hi) = self.scaling;
        if hi > lo {
            lo + x * (hi - lo)
        } else {
            lo
        }
    }

    /// Same observations with a constant added to every response.
    pub fn shift_y(&self, c: f64) -> Dataset {
        Dataset {
            x: self.x.clone(),
            y: self.y.iter().map(|v| v + c).collect(),
            scaling: self.scaling,
        }
    }
}

fn validate_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset must be nonempty".to_string(),
        ));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "covariate and response lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "dataset values must all be finite".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_endpoints() {
        let d = Dataset::from_raw(&[10.0, 20.0], &[1.0, 2.0]).unwrap();
        assert_eq!(d.x(), &[0.0, 1.0]);
        assert_eq!(d.scaling(), (10.0, 20.0));
        assert_eq!(d.unscale(0.5), 15.0);
    }

    #[test]
    fn idempotent_on_unit_interval() {
        let x = vec![0.0, 0.25, 1.0];
        let d = Dataset::from_raw(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.x(), &x[..]);
        assert_eq!(d.scaling(), (0.0, 1.0));
    }

    #[test]
    fn rejects_constant_covariate() {
        assert!(Dataset::from_raw(&[5.0, 5.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Dataset::from_raw(&[], &[]).is_err());
        assert!(Dataset::from_raw(&[1.0], &[1.0, 2.0]).is_err());
        assert!(Dataset::from_raw(&[f64::NAN, 1.0], &[1.0, 2.0]).is_err());
        assert!(Dataset::from_scaled(vec![1.5], vec![1.0]).is_err());
    }
}
