//! `bounds`: evaluate every bound whose inputs a TOML file supplies.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use multilevel_core::bounds::{
    chained_mi_bound, excess_risk_bound, gibbs_excess, gibbs_excess_continuous, high_prob_bound, neighborhood_excess,
    optimal_gammas, relaxed_objective, BoundInputs, BoundReport, ContinuousGibbsInputs, ContinuousGibbsReport,
    GibbsExcess,
};
use serde::{Deserialize, Serialize};

/// Input file: constants of the net and data, per-level terms, and optional
/// sections for the probability and Gibbs-posterior forms.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    /// Sample count.
    pub n: usize,
    /// Lipschitz constant of the loss in the output.
    pub l: f64,
    /// Product of the reference spectral norms.
    pub m: f64,
    /// Input radius.
    pub r: f64,
    pub betas: Vec<f64>,
    /// Inverse temperatures `γ_k`; `γ*` is used where they are omitted.
    #[serde(default)]
    pub gammas: Option<Vec<f64>>,
    /// `I(S; W₁…W_k)` in nats.
    #[serde(default)]
    pub mi_terms: Option<Vec<f64>>,
    /// `−ln Q⁽ᵏ⁾(ŵ₁…ŵ_k)` in nats.
    #[serde(default)]
    pub kl_terms: Option<Vec<f64>>,
    /// Target excess for the probability form.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `D(B_k ‖ Q⁽ᵏ⁾)` of an ε-optimal neighbourhood, in nats.
    #[serde(default)]
    pub neighborhood_kls: Option<Vec<f64>>,
    #[serde(default)]
    pub gibbs: Option<GibbsSection>,
    #[serde(default)]
    pub continuous_gibbs: Option<ContinuousGibbsInputs>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsSection {
    /// Subgaussian parameter of the loss.
    pub sigma: f64,
    pub gamma: f64,
    /// `D(δ_ŵ ‖ Q)` in nats.
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlugInCheck {
    /// Tangent-line relaxation evaluated at `γ*`.
    pub relaxed_at_gamma_star: f64,
    /// `(C/√n) Σ β_k √KL_k`.
    pub optimized: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsOutput {
    pub c: f64,
    pub reports: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plug_in_check: Option<PlugInCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighborhood_excess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gibbs: Option<GibbsExcess>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous_gibbs: Option<ContinuousGibbsReport>,
}

pub fn parse_bounds(src: &str) -> Result<BoundsFile> {
    toml::from_str(src).map_err(|e| anyhow!("{e}"))
}

pub fn evaluate(file: &BoundsFile) -> Result<BoundsOutput> {
    let base = BoundInputs {
        n: file.n,
        l: file.l,
        m: file.m,
        r: file.r,
        betas: file.betas.clone(),
        gammas: file.gammas.clone().unwrap_or_default(),
        mi_terms: file.mi_terms.clone(),
        kl_terms: file.kl_terms.clone(),
    };
    base.validate()?;
    let mut out = BoundsOutput {
        c: base.c(),
        reports: Vec::new(),
        plug_in_check: None,
        high_probability: None,
        neighborhood_excess: None,
        gibbs: None,
        continuous_gibbs: None,
    };
    if file.mi_terms.is_some() {
        out.reports.push(BoundReport {
            bound_name: "chained_mutual_information".into(),
            value: chained_mi_bound(&base).context("chained bound")?,
            inputs: base.clone(),
            optimal_gammas: None,
            optimized: None,
        });
    }
    if let Some(kl) = &file.kl_terms {
        let star = optimal_gammas(kl);
        let excess = if file.gammas.is_some() {
            excess_risk_bound(&base).context("excess-risk bound")?
        } else {
            // without γ the report is the bound at γ*
            let with_star = BoundInputs { gammas: star.clone(), ..base.clone() };
            let optimized = with_star.c() / (with_star.n as f64).sqrt()
                * with_star.betas.iter().zip(kl).map(|(b, k)| b * k.sqrt()).sum::<f64>();
            BoundReport {
                bound_name: "excess_risk".into(),
                value: optimized,
                inputs: with_star,
                optimal_gammas: Some(star.clone()),
                optimized: Some(optimized),
            }
        };
        if star.iter().all(|g| g.is_finite()) {
            let at_star = BoundInputs { gammas: star.clone(), ..base.clone() };
            let relaxed = relaxed_objective(&at_star, kl)?;
            let optimized = excess.optimized.unwrap_or(relaxed);
            out.plug_in_check =
                Some(PlugInCheck { relaxed_at_gamma_star: relaxed, optimized, abs_diff: (relaxed - optimized).abs() });
        }
        out.reports.push(excess);
        if let Some(eps) = file.epsilon {
            let inputs = if file.gammas.is_some() { base.clone() } else { BoundInputs { gammas: star.clone(), ..base.clone() } };
            if inputs.gammas.iter().all(|g| g.is_finite()) {
                out.high_probability = Some(high_prob_bound(&inputs, eps).context("probability form")?);
            }
        }
    }
    if let (Some(eps), Some(nk)) = (file.epsilon, &file.neighborhood_kls) {
        let inputs = match &file.gammas {
            Some(_) => base.clone(),
            None => BoundInputs { gammas: optimal_gammas(nk), ..base.clone() },
        };
        if inputs.gammas.iter().all(|g| g.is_finite()) {
            out.neighborhood_excess = Some(neighborhood_excess(&inputs, eps, nk).context("neighbourhood excess")?);
        }
    }
    if let Some(g) = &file.gibbs {
        out.gibbs = Some(gibbs_excess(g.sigma, file.n, g.gamma, g.kl).context("gibbs")?);
    }
    if let Some(c) = &file.continuous_gibbs {
        out.continuous_gibbs = Some(gibbs_excess_continuous(c).context("continuous_gibbs")?);
    }
    Ok(out)
}

pub fn run_file(path: &Path) -> Result<BoundsOutput> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_bounds(&src).with_context(|| format!("{}", path.display()))?;
    evaluate(&file)
}
