use serde::{Deserialize, Serialize};

use super::NORMALIZATION_TOL;
use crate::error::{Error, Result};
use crate::numeric;

/// Probability vector over the indexed support `{0, …, len-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FiniteDistribution {
    probs: Vec<f64>,
}

impl FiniteDistribution {
    /// Validates nonnegativity and unit mass (within 1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probability_vector(&probs)?;
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Invariant(format!("weights have total mass {total}")));
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Normalizes log-weights with a max shift; `-inf` entries get zero mass.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(Error::Invariant("empty support".into()));
        }
        if log_w.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::Invariant("log-weights must be < +inf and not NaN".into()));
        }
        numeric::normalize_log_weights(log_w)
            .map(|probs| Self { probs })
            .ok_or_else(|| Error::Invariant("all log-weights are -inf".into()))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs a nonempty support");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at `at` on a support of size `n`.
    pub fn dirac(n: usize, at: usize) -> Self {
        assert!(at < n, "dirac index {at} outside support of size {n}");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "support sizes {} and {} differ",
                self.len(),
                other.len()
            )));
        }
        Ok(numeric::total_variation(&self.probs, &other.probs))
    }
}

impl TryFrom<Vec<f64>> for FiniteDistribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FiniteDistribution> for Vec<f64> {
    fn from(d: FiniteDistribution) -> Self {
        d.probs
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Invariant("empty support".into()));
    }
    if let Some((i, x)) = w.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
        return Err(Error::Invariant(format!("entry {i} = {x} is not a finite nonnegative number")));
    }
    Ok(())
}

pub(crate) fn check_probability_vector(p: &[f64]) -> Result<()> {
    check_weights(p)?;
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Invariant(format!(
            "entries sum to {total}, expected 1 within {NORMALIZATION_TOL:e}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(FiniteDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(FiniteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(FiniteDistribution::new(vec![]).is_err());
        assert!(FiniteDistribution::from_weights(vec![0.0, 0.0]).is_err());
        let d = FiniteDistribution::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.probs(), &[0.25, 0.75]);
    }

    #[test]
    fn log_weights_survive_extreme_scale() {
        // exponents of the size produced by 1/a with a = 1e-6
        let d = FiniteDistribution::from_log_weights(&[-1e6, -1e6 + 2f64.ln(), f64::NEG_INFINITY]).unwrap();
        // ln 2 is resolved to the ulp of 1e6 (~1e-10)
        assert!((d.probs()[1] - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(d.probs()[2], 0.0);
    }

    #[test]
    fn conversion_validates() {
        assert!(FiniteDistribution::try_from(vec![0.2, 0.2]).is_err());
        let tv = FiniteDistribution::dirac(3, 0)
            .total_variation(&FiniteDistribution::uniform(3))
            .unwrap();
        assert!((tv - 2.0 / 3.0).abs() < 1e-15);
    }
}
