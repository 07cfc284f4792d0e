use std::sync::Arc;

use crate::distributions::{FiniteDistribution, FiniteJoint};
use crate::error::{Error, Result};
use crate::nnet::beta;

/// A hypothesis `h_w : X → [0, 1]`.
pub type Hypothesis = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Binary-labelled example for the ℓ1 setting.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryExample {
    pub x: Vec<f64>,
    pub y: f64,
}

fn check_binary(data: &[BinaryExample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    if let Some(i) = data.iter().position(|e| e.y != 0.0 && e.y != 1.0) {
        return Err(Error::domain(format!("label {i} is {}, expected 0 or 1", data[i].y)));
    }
    Ok(())
}

fn in_unit(v: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Invariant(format!("{what} produced {v}, outside [0, 1]")))
    }
}

/// `x ↦ Σ_w P(w) h_w(x)` with exact Gibbs weights over a finite table.
#[derive(Clone)]
pub struct GibbsAverage {
    weights: Vec<f64>,
    hypotheses: Vec<Hypothesis>,
}

impl std::fmt::Debug for GibbsAverage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GibbsAverage").field("weights", &self.weights).finish_non_exhaustive()
    }
}

impl GibbsAverage {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut out = 0.0;
        for (w, h) in self.weights.iter().zip(&self.hypotheses) {
            if *w > 0.0 {
                out += w * in_unit(h(x), "hypothesis")?;
            }
        }
        Ok(out)
    }
}

/// Gibbs average predictor under ℓ1 loss with inverse temperature `gamma`.
pub fn gibbs_average_predictor(
    hypotheses: &[Hypothesis],
    data: &[BinaryExample],
    gamma: f64,
    prior: &FiniteDistribution,
) -> Result<GibbsAverage> {
    check_binary(data)?;
    if hypotheses.len() != prior.len() {
        return Err(Error::dim(format!("{} hypotheses, prior over {}", hypotheses.len(), prior.len())));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("inverse temperature must be finite and >= 0, got {gamma}")));
    }
    let n = data.len() as f64;
    let mut log_w = Vec::with_capacity(hypotheses.len());
    for (h, &q) in hypotheses.iter().zip(prior.probs()) {
        if q == 0.0 {
            log_w.push(f64::NEG_INFINITY);
            continue;
        }
        let mut risk = 0.0;
        for e in data {
            risk += (in_unit(h(&e.x), "hypothesis")? - e.y).abs();
        }
        log_w.push(-gamma * risk / n + q.ln());
    }
    let weights = FiniteDistribution::from_log_weights(&log_w)?.into_vec();
    Ok(GibbsAverage { weights, hypotheses: hypotheses.to_vec() })
}

/// Scale constants of the hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConstants {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub l: f64,
    pub m: f64,
    pub r: f64,
}

/// Mixture `Σ_k p_k h⁽ᵏ⁾` of per-level Gibbs averages.
#[derive(Debug, Clone)]
pub struct MultilevelAverage {
    pub mixture: Vec<f64>,
    pub inverse_temps: Vec<f64>,
    pub levels: Vec<GibbsAverage>,
}

impl MultilevelAverage {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut out = 0.0;
        for (p, g) in self.mixture.iter().zip(&self.levels) {
            out += p * g.predict(x)?;
        }
        in_unit(out, "multilevel average")
    }
}

/// Builds the increment classes
/// `H_k = { ½ + (h_{[w₁…w_k]} − h_{[w₁…w_{k−1}]}) / (2 β_k M R) }`
/// from truncated nets and averages their Gibbs predictors.
///
/// `truncated[k]` lists `h_{[w₁…w_k]}` for every prefix cell of length `k`
/// (row-major over the first `k` axes of `prior`), for `k = 0..=d`;
/// `truncated[0]` holds the single all-reference net. Prefix `k` uses the
/// prefix marginal of `prior` and inverse temperature
/// `ζ_k = √n / (γ_k (Σβ) L M R)`; the mixture weights are `p_k = β_k / Σβ`.
pub fn multilevel_average_predictor(
    truncated: &[Vec<Hypothesis>],
    prior: &FiniteJoint,
    data: &[BinaryExample],
    constants: &HierarchyConstants,
) -> Result<MultilevelAverage> {
    check_binary(data)?;
    let d = prior.ndim();
    if truncated.len() != d + 1 || constants.alphas.len() != d || constants.gammas.len() != d {
        return Err(Error::dim(format!(
            "depth {d} needs {} truncation levels, {d} radii and {d} inverse temperatures",
            d + 1
        )));
    }
    let HierarchyConstants { l, m, r, .. } = *constants;
    if !(l > 0.0 && m > 0.0 && r > 0.0) || constants.gammas.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::domain("constants and inverse temperatures must be > 0"));
    }
    let betas = (1..=d).map(|k| beta(&constants.alphas, k)).collect::<Result<Vec<_>>>()?;
    let beta_sum: f64 = betas.iter().sum();
    let sqrt_n = (data.len() as f64).sqrt();

    let mut levels = Vec::with_capacity(d);
    let mut inverse_temps = Vec::with_capacity(d);
    let mut cells = 1;
    for k in 1..=d {
        let prev_cells = cells;
        let width = prior.axis_sizes()[k - 1];
        cells *= width;
        if truncated[k].len() != cells || truncated[k - 1].len() != prev_cells {
            return Err(Error::dim(format!("truncation level {k} must list {cells} nets")));
        }
        let scale = 2.0 * betas[k - 1] * m * r;
        let class: Vec<Hypothesis> = (0..cells)
            .map(|c| {
                let fine = truncated[k][c].clone();
                let coarse = truncated[k - 1][c / width].clone();
                Arc::new(move |x: &[f64]| 0.5 + (fine(x) - coarse(x)) / scale) as Hypothesis
            })
            .collect();
        let marginal = prior.marginalize(k)?.to_distribution();
        let zeta = sqrt_n / (constants.gammas[k - 1] * beta_sum * l * m * r);
        levels.push(gibbs_average_predictor(&class, data, zeta, &marginal)?);
        inverse_temps.push(zeta);
    }
    Ok(MultilevelAverage {
        mixture: betas.iter().map(|b| b / beta_sum).collect(),
        inverse_temps,
        levels,
    })
}
