//! Closed-form generalization and excess-risk bounds.
//!
//! Everything here is an evaluator: mutual-information and relative-entropy
//! terms are supplied by the caller (exactly, in the finite pipelines).

use serde::{Deserialize, Serialize};

use crate::distributions::{mutual_information, FiniteJoint};
use crate::error::{Error, Result};

/// Constants and per-level terms shared by the chained bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample count.
    pub n: usize,
    /// Lipschitz constant of the loss in the net output.
    pub l: f64,
    /// Product of reference spectral norms.
    pub m: f64,
    /// Input radius.
    pub r: f64,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// `I(S; W₁…W_k)` in nats, one per level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mi_terms: Option<Vec<f64>>,
    /// `D(δ_ŵ ‖ Q⁽ᵏ⁾)` in nats, one per level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_terms: Option<Vec<f64>>,
}

impl BoundInputs {
    /// `C = L·M·R·√2`.
    pub fn c(&self) -> f64 {
        self.l * self.m * self.r * std::f64::consts::SQRT_2
    }

    pub fn depth(&self) -> usize {
        self.betas.len()
    }

    fn scale(&self) -> f64 {
        self.c() / (self.n as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("sample count must be >= 1"));
        }
        for (name, v) in [("L", self.l), ("M", self.m), ("R", self.r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.betas.is_empty() || self.betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::domain("betas must be nonempty, finite and > 0"));
        }
        for (name, terms) in [("mi_terms", &self.mi_terms), ("kl_terms", &self.kl_terms)] {
            if let Some(t) = terms {
                check_terms(name, t, self.depth())?;
            }
        }
        Ok(())
    }

    fn mi(&self) -> Result<&[f64]> {
        self.validate()?;
        self.mi_terms.as_deref().ok_or(Error::MissingInput("mi_terms"))
    }

    fn kl(&self) -> Result<&[f64]> {
        self.validate()?;
        self.kl_terms.as_deref().ok_or(Error::MissingInput("kl_terms"))
    }

    fn checked_gammas(&self) -> Result<&[f64]> {
        if self.gammas.len() != self.depth() {
            return Err(Error::dim(format!("{} gammas for {} levels", self.gammas.len(), self.depth())));
        }
        if let Some(g) = self.gammas.iter().find(|&&g| !(g > 0.0)) {
            return Err(Error::domain(format!("gammas must be > 0, got {g}")));
        }
        Ok(&self.gammas)
    }
}

fn check_terms(name: &str, t: &[f64], d: usize) -> Result<()> {
    if t.len() != d {
        return Err(Error::dim(format!("{name} has {} entries for {d} levels", t.len())));
    }
    if let Some(v) = t.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::domain(format!("{name} entries must be >= 0, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub value: f64,
    pub inputs: BoundInputs,
    /// `γ*_k = 1/(2√KL_k)`, `+inf` where `KL_k = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_gammas: Option<Vec<f64>>,
    /// Bound value at the optimal gammas.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimized: Option<f64>,
}

/// Chained mutual-information bound on the expected generalization gap:
/// `(L M R √2 / √n) · Σ_k β_k √I(S; W₁…W_k)`.
pub fn chained_mi_bound(inputs: &BoundInputs) -> Result<f64> {
    let mi = inputs.mi()?;
    Ok(inputs.scale() * inputs.betas.iter().zip(mi).map(|(b, i)| b * i.sqrt()).sum::<f64>())
}

/// Tangent-line relaxation `(C/√n) · Σ_k β_k (γ_k KL_k + 1/(4γ_k))`.
pub fn relaxed_objective(inputs: &BoundInputs, kls: &[f64]) -> Result<f64> {
    inputs.validate()?;
    check_terms("relative entropies", kls, inputs.depth())?;
    let gammas = inputs.checked_gammas()?;
    let total: f64 = inputs
        .betas
        .iter()
        .zip(gammas)
        .zip(kls)
        .map(|((b, g), kl)| b * (g * kl + 1.0 / (4.0 * g)))
        .sum();
    Ok(inputs.scale() * total)
}

/// `γ*_k = 1/(2√KL_k)`; `+inf` when the divergence vanishes.
pub fn optimal_gammas(kls: &[f64]) -> Vec<f64> {
    kls.iter()
        .map(|&kl| if kl == 0.0 { f64::INFINITY } else { 1.0 / (2.0 * kl.sqrt()) })
        .collect()
}

/// Excess statistical risk of the twisted posterior over the best
/// hypothesis `ŵ`, with `kl_terms[k] = −ln Q⁽ᵏ⁾(ŵ₁…ŵ_k)`.
pub fn excess_risk_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    let kl = inputs.kl()?.to_vec();
    let value = relaxed_objective(inputs, &kl)?;
    let optimized = inputs.scale() * inputs.betas.iter().zip(&kl).map(|(b, k)| b * k.sqrt()).sum::<f64>();
    Ok(BoundReport {
        bound_name: "excess_risk".into(),
        value,
        inputs: inputs.clone(),
        optimal_gammas: Some(optimal_gammas(&kl)),
        optimized: Some(optimized),
    })
}

/// Markov lower bound on `P(excess ≤ ε)`, clamped to `[0, 1]`.
pub fn high_prob_bound(inputs: &BoundInputs, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon must be > 0, got {epsilon}")));
    }
    let excess = relaxed_objective(inputs, inputs.kl()?)?;
    Ok((1.0 - excess / epsilon).clamp(0.0, 1.0))
}

/// Additive excess `ε + (C/√n) Σ β_k (γ_k KL_k + 1/(4γ_k))` for a posterior
/// spread uniformly over an `ε`-optimal neighbourhood, with
/// `neighborhood_kls[k] = D(B_k ‖ Q⁽ᵏ⁾)`.
pub fn neighborhood_excess(inputs: &BoundInputs, epsilon: f64, neighborhood_kls: &[f64]) -> Result<f64> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::domain(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    Ok(epsilon + relaxed_objective(inputs, neighborhood_kls)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GibbsExcess {
    /// `kl/γ + γσ²/(2n)`
    pub bound: f64,
    /// `√(2n·kl)/σ`, the minimizing inverse temperature.
    pub gamma_star: f64,
    /// The bound at `gamma_star`, `σ√(2·kl/n)`.
    pub optimized: f64,
}

/// Excess-risk bound of the Gibbs posterior for `σ²`-subgaussian losses.
pub fn gibbs_excess(sigma: f64, n: usize, gamma: f64, kl: f64) -> Result<GibbsExcess> {
    if !(sigma > 0.0) || n == 0 {
        return Err(Error::domain("sigma and n must be > 0"));
    }
    if !(gamma > 0.0) {
        return Err(Error::domain(format!("gamma must be > 0, got {gamma}")));
    }
    if !(kl >= 0.0) {
        return Err(Error::domain(format!("relative entropy must be >= 0, got {kl}")));
    }
    let n = n as f64;
    let gamma_star = (2.0 * n * kl).sqrt() / sigma;
    Ok(GibbsExcess {
        bound: kl / gamma + gamma * sigma * sigma / (2.0 * n),
        gamma_star,
        optimized: sigma * (2.0 * kl / n).sqrt(),
    })
}

/// `D(N(m₁, a²I) ‖ N(m₂, s²I))` in `dim` dimensions with `|m₁ − m₂|² = dist2`.
pub fn gaussian_kl(dim: usize, a: f64, s: f64, dist2: f64) -> f64 {
    dim as f64 * ((s / a).ln() + (a * a - s * s) / (2.0 * s * s)) + dist2 / (2.0 * s * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousGibbsInputs {
    pub sigma: f64,
    pub n: usize,
    pub gamma: f64,
    /// Lipschitz constant of the loss in the weights.
    pub rho: f64,
    /// Isotropic Gaussian prior.
    pub prior_mean: Vec<f64>,
    pub prior_std: f64,
    /// Centre `ŵ` of the comparison posterior.
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuousGibbsReport {
    pub value: f64,
    /// Posterior spread `a` attaining the grid minimum.
    pub best_scale: f64,
}

pub const SCALE_GRID_POINTS: usize = 200;
pub const SCALE_GRID_RANGE: (f64, f64) = (1e-6, 1e3);

/// `min_a [a ρ √dim + D(N(ŵ, a²I) ‖ Q)/γ] + γσ²/(2n)` over a log-spaced grid
/// of `a`.
pub fn gibbs_excess_continuous(inputs: &ContinuousGibbsInputs) -> Result<ContinuousGibbsReport> {
    let ContinuousGibbsInputs { sigma, n, gamma, rho, prior_std, .. } = *inputs;
    if !(sigma > 0.0 && gamma > 0.0 && prior_std > 0.0) || n == 0 {
        return Err(Error::domain("sigma, n, gamma and prior std must be > 0"));
    }
    if !(rho >= 0.0) {
        return Err(Error::domain(format!("Lipschitz constant must be >= 0, got {rho}")));
    }
    if inputs.prior_mean.len() != inputs.center.len() || inputs.center.is_empty() {
        return Err(Error::dim("prior mean and centre must have the same nonzero dimension"));
    }
    let dim = inputs.center.len();
    let dist2: f64 = inputs.center.iter().zip(&inputs.prior_mean).map(|(a, b)| (a - b) * (a - b)).sum();
    let objective = |a: f64| a * rho * (dim as f64).sqrt() + gaussian_kl(dim, a, prior_std, dist2) / gamma;
    let (lo, hi) = (SCALE_GRID_RANGE.0.ln(), SCALE_GRID_RANGE.1.ln());
    let (best_scale, best) = (0..SCALE_GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (SCALE_GRID_POINTS - 1) as f64).exp())
        .map(|a| (a, objective(a)))
        .fold((f64::NAN, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    Ok(ContinuousGibbsReport {
        value: best + gamma * sigma * sigma / (2.0 * n as f64),
        best_scale,
    })
}

/// `I(S; W₁…W_k)` for `k = 1..d` from a joint over `(S, W₁, …, W_d)`.
pub fn exact_mi_report(joint: &FiniteJoint) -> Result<Vec<f64>> {
    if joint.ndim() < 2 {
        return Err(Error::dim("need a data axis and at least one weight axis"));
    }
    let ns = joint.axis_sizes()[0];
    (2..=joint.ndim())
        .map(|k| {
            let prefix = joint.marginalize(k)?;
            let cells = prefix.len() / ns;
            mutual_information(&prefix.reshape(vec![ns, cells])?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(betas: Vec<f64>, gammas: Vec<f64>) -> BoundInputs {
        BoundInputs { n: 1, l: 1.0, m: 1.0, r: 1.0 / std::f64::consts::SQRT_2, betas, gammas, mi_terms: None, kl_terms: None }
    }

    #[test]
    fn chained_bound_arithmetic() {
        let mut i = inputs(vec![1.0], vec![]);
        assert_eq!(chained_mi_bound(&i), Err(Error::MissingInput("mi_terms")));
        i.mi_terms = Some(vec![4.0]);
        assert!((chained_mi_bound(&i).unwrap() - 2.0).abs() < 1e-15);
        i.mi_terms = Some(vec![0.0]);
        assert_eq!(chained_mi_bound(&i).unwrap(), 0.0);
        i.mi_terms = Some(vec![-1.0]);
        assert!(chained_mi_bound(&i).is_err());
    }

    #[test]
    fn relaxation_tangency_and_zero_kl() {
        let g = vec![0.5, 2.0];
        let i = inputs(vec![1.0, 3.0], g.clone());
        let kls: Vec<f64> = g.iter().map(|g| 1.0 / (4.0 * g * g)).collect();
        let root: f64 = [1.0, 3.0].iter().zip(&kls).map(|(b, k)| b * k.sqrt()).sum();
        assert!((relaxed_objective(&i, &kls).unwrap() - root).abs() < 1e-15);
        let zero = relaxed_objective(&i, &[0.0, 0.0]).unwrap();
        assert!((zero - (1.0 / 2.0 + 3.0 / 8.0)).abs() < 1e-15);
        assert!(relaxed_objective(&inputs(vec![1.0], vec![0.0]), &[1.0]).is_err());
    }

    #[test]
    fn excess_report_reports_infinite_gamma_for_zero_kl() {
        let mut i = inputs(vec![1.0, 1.0], vec![1.0, 1.0]);
        i.kl_terms = Some(vec![0.0, 2f64.ln() * 2.0]);
        let rep = excess_risk_bound(&i).unwrap();
        let g = rep.optimal_gammas.unwrap();
        assert_eq!(g[0], f64::INFINITY);
        assert!((g[1] - 1.0 / (2.0 * (4f64.ln()).sqrt())).abs() < 1e-15);
        assert!((rep.optimized.unwrap() - 4f64.ln().sqrt()).abs() < 1e-15);
    }

    #[test]
    fn high_probability_edges() {
        let mut i = inputs(vec![1.0], vec![1.0]);
        i.kl_terms = Some(vec![1.0]);
        assert!(high_prob_bound(&i, 0.0).is_err());
        assert!(high_prob_bound(&i, 1e9).unwrap() > 1.0 - 1e-8);
        let excess = excess_risk_bound(&i).unwrap().value;
        assert_eq!(high_prob_bound(&i, excess).unwrap(), 0.0);
    }

    #[test]
    fn neighborhood_collapses_to_atom() {
        let mut i = inputs(vec![1.0, 0.5], vec![0.3, 0.7]);
        i.kl_terms = Some(vec![0.4, 1.1]);
        let atom = neighborhood_excess(&i, 0.0, &[0.4, 1.1]).unwrap();
        assert_eq!(atom, excess_risk_bound(&i).unwrap().value);
        assert!(neighborhood_excess(&i, -1.0, &[0.4, 1.1]).is_err());
    }

    #[test]
    fn gibbs_excess_edges() {
        let z = gibbs_excess(2.0, 10, 3.0, 0.0).unwrap();
        assert_eq!(z.bound, 3.0 * 4.0 / 20.0);
        assert_eq!((z.gamma_star, z.optimized), (0.0, 0.0));
        let e = gibbs_excess(1.3, 50, 1.0, 0.8).unwrap();
        let at_star = gibbs_excess(1.3, 50, e.gamma_star, 0.8).unwrap();
        assert!((at_star.bound - e.optimized).abs() < 1e-14);
        // minimum of kl/γ + γσ²/(2n) is σ√(2 kl / n)
        let l = gibbs_excess(1.0, 100, 1.0, 2f64.ln()).unwrap();
        assert!((l.optimized - (2.0 * 2f64.ln() / 100.0).sqrt()).abs() < 1e-16);
        assert!(gibbs_excess(1.0, 100, 0.0, 1.0).is_err());
    }

    #[test]
    fn continuous_gibbs_at_prior_mean() {
        assert_eq!(gaussian_kl(3, 0.7, 0.7, 0.0), 0.0);
        let i = ContinuousGibbsInputs {
            sigma: 1.0,
            n: 10,
            gamma: 2.0,
            rho: 0.0,
            prior_mean: vec![0.0; 2],
            prior_std: 1.0,
            center: vec![0.0; 2],
        };
        let r = gibbs_excess_continuous(&i).unwrap();
        // with ρ = 0 the minimum sits at a = s, reached up to grid spacing
        assert!((r.best_scale - 1.0).abs() < 0.06);
        assert!(r.value - 2.0 / 20.0 < 1e-2);
    }

    #[test]
    fn mi_report_edges() {
        let copy = FiniteJoint::new(
            vec![4, 4],
            (0..16).map(|c| if c / 4 == c % 4 { 0.25 } else { 0.0 }).collect(),
        )
        .unwrap();
        let mi = exact_mi_report(&copy).unwrap();
        assert!((mi[0] - 4f64.ln()).abs() < 1e-14);
        let det = FiniteJoint::new(vec![1, 2, 2], vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(exact_mi_report(&det).unwrap(), vec![0.0, 0.0]);
    }
}
