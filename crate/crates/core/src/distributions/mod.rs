//! Finite-support distributions and the information measures built on them.
//!
//! Every divergence returns nats. An infinite divergence is returned as
//! `f64::INFINITY`, produced explicitly from a support check and never by
//! floating-point overflow.

mod divergence;
mod finite;
mod joint;

pub use divergence::{
    conditional_relative_entropy, multilevel_relative_entropy, mutual_information,
    relative_entropy, renyi_divergence, tilt,
};
pub(crate) use divergence::{kl_slices, renyi_slices, tilt_slices};
pub use finite::FiniteDistribution;
pub use joint::{chain_factorize, recompose, Conditional, FiniteJoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a probability vector.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Strictly positive per-level coefficients `(a_1, …, a_d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TemperatureVector(Vec<f64>);

impl TemperatureVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("temperature vector must be nonempty"));
        }
        if let Some((i, c)) = coeffs
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::domain(format!(
                "temperature coefficient {i} must be finite and > 0, got {c}"
            )));
        }
        Ok(Self(coeffs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `a_k + … + a_d` for a zero-based `k`.
    pub fn tail_sum(&self, k: usize) -> f64 {
        self.0[k..].iter().sum()
    }
}

impl TryFrom<Vec<f64>> for TemperatureVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TemperatureVector> for Vec<f64> {
    fn from(t: TemperatureVector) -> Self {
        t.0
    }
}

impl std::ops::Index<usize> for TemperatureVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_rejects_nonpositive() {
        assert!(TemperatureVector::new(vec![1.0, 0.0]).is_err());
        assert!(TemperatureVector::new(vec![]).is_err());
        assert!(TemperatureVector::new(vec![f64::NAN]).is_err());
        let t = TemperatureVector::new(vec![2e-6, 1e-6]).unwrap();
        assert!((t.tail_sum(0) - 3e-6).abs() < 1e-20);
    }
}
