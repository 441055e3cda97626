//! Basis expansions of the scalar covariate for threshold and GPD regressions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Form of the regression function of x: which powers of the covariate enter
/// the linear predictor. `Polynomial(1)` coincides with `Linear`,
/// `Polynomial(0)` with `InterceptOnly`; degrees above 3 are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    InterceptOnly,
    Linear,
    Polynomial(usize),
}

impl Basis {
    /// Number of coefficients the basis requires.
    pub fn dim(&self) -> usize {
        match self {
            Basis::InterceptOnly => 1,
            Basis::Linear => 2,
            Basis::Polynomial(d) => d + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Basis::Polynomial(d) = self {
            if *d > 3 {
                return Err(Error::InvalidArgument(format!(
                    "polynomial basis degree {d} exceeds the supported maximum 3"
                )));
            }
        }
        Ok(())
    }

    /// Row of basis functions (1, x, x², ...) evaluated at one covariate value.
    pub fn row(&self, x: f64) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dim());
        let mut term = 1.0;
        for _ in 0..self.dim() {
            row.push(term);
            term *= x;
        }
        row
    }

    /// Linear predictor: dot product of `row(x)` with `coef`.
    pub fn predict(&self, coef: &[f64], x: f64) -> f64 {
        debug_assert_eq!(coef.len(), self.dim());
        let mut acc = 0.0;
        let mut term = 1.0;
        for c in coef {
            acc += c * term;
            term *= x;
        }
        acc
    }

    pub fn name(&self) -> String {
        match self {
            Basis::InterceptOnly => "intercept".to_string(),
            Basis::Linear => "linear".to_string(),
            Basis::Polynomial(d) => format!("poly{d}"),
        }
    }

    /// Parse the CLI/name form produced by [`Basis::name`].
    pub fn parse(s: &str) -> Result<Basis> {
        match s {
            "intercept" | "intercept_only" => Ok(Basis::InterceptOnly),
            "linear" => Ok(Basis::Linear),
            _ => {
                if let Some(d) = s.strip_prefix("poly") {
                    let d: usize = d
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("unrecognized basis '{s}'")))?;
                    let b = Basis::Polynomial(d);
                    b.validate()?;
                    Ok(b)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unrecognized basis '{s}' (expected intercept, linear, or polyD)"
                    )))
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_and_rows() {
        assert_eq!(Basis::InterceptOnly.dim(), 1);
        assert_eq!(Basis::Linear.dim(), 2);
        assert_eq!(Basis::Polynomial(3).dim(), 4);
        assert_eq!(Basis::Linear.row(0.5), vec![1.0, 0.5]);
        assert_eq!(Basis::Polynomial(2).row(2.0), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn predict_matches_row_dot() {
        let coef = [0.3, -1.5, 2.0];
        let b = Basis::Polynomial(2);
        for &x in &[0.0, 0.25, 0.9, 1.0] {
            let dot: f64 = b.row(x).iter().zip(&coef).map(|(r, c)| r * c).sum();
            assert!((b.predict(&coef, x) - dot).abs() < 1e-15);
        }
    }

    #[test]
    fn degree_cap() {
        assert!(Basis::Polynomial(4).validate().is_err());
        assert!(Basis::Polynomial(3).validate().is_ok());
    }

    #[test]
    fn parse_roundtrip() {
        for b in [Basis::InterceptOnly, Basis::Linear, Basis::Polynomial(2)] {
            assert_eq!(Basis::parse(&b.name()).unwrap(), b);
        }
        assert!(Basis::parse("spline").is_err());
        assert!(Basis::parse("poly9").is_err());
    }
}
