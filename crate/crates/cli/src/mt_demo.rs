//! `mt-demo`: solve a small Marginalize-Tilt problem described in TOML and
//! compare it with grid search and, where one exists, a closed form.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use multilevel_core::mt::MAX_ORACLE_CELLS;
use multilevel_core::sampler::ValidationCase;
use multilevel_core::{
    brute_force_minimize, build_twisted_problem, mt_solve, FiniteDistribution, FiniteJoint, MtProblem,
    TemperatureVector,
};
use serde::{Deserialize, Serialize};

pub const GRID_STEPS: usize = 200;

/// Problem file. Prior `k` is a weight table over the first `k` axes,
/// row-major with the last axis fastest; weights need not be normalized.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub coeffs: Vec<f64>,
    pub axis_sizes: Vec<usize>,
    pub priors: Vec<Vec<f64>>,
    /// Empirical risk over every cell; when present the deepest prior is
    /// Gibbs-tilted by it before solving.
    #[serde(default)]
    pub risk: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridComparison {
    pub grid_steps: usize,
    pub exhaustive: bool,
    pub objective: f64,
    /// `grid objective − solver objective`; never negative beyond rounding.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtReport {
    pub axis_sizes: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub joint: Vec<f64>,
    pub objective: f64,
    pub renyi_residue: f64,
    /// Largest cellwise gap between the joint and the deepest prior.
    pub max_gap_to_deepest_prior: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_search: Option<GridComparison>,
    /// Largest cellwise gap to the two-level twisted posterior written out
    /// directly (only for two levels with a risk table and product priors).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_max_gap: Option<f64>,
}

/// 1-based line where `key` is assigned, for pointing errors at the file.
fn line_of(src: &str, key: &str) -> usize {
    src.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

pub fn parse_problem(src: &str) -> Result<ProblemFile> {
    // the TOML error message already carries line and column
    let file: ProblemFile = toml::from_str(src).map_err(|e| anyhow!("{e}"))?;
    let at = |key: &str| format!("line {}: {key}", line_of(src, key));
    let d = file.axis_sizes.len();
    if d == 0 {
        bail!("{} must list at least one axis", at("axis_sizes"));
    }
    if file.axis_sizes.contains(&0) {
        bail!("{} entries must be >= 1", at("axis_sizes"));
    }
    if file.coeffs.len() != d {
        bail!("{} has {} entries for {d} axes", at("coeffs"), file.coeffs.len());
    }
    if file.priors.len() != d {
        bail!("{} has {} tables for {d} axes", at("priors"), file.priors.len());
    }
    let mut cells = 1;
    for (k, table) in file.priors.iter().enumerate() {
        cells *= file.axis_sizes[k];
        if table.len() != cells {
            bail!("{} table {} has {} weights, expected {cells}", at("priors"), k + 1, table.len());
        }
    }
    if let Some(risk) = &file.risk {
        if risk.len() != cells {
            bail!("{} has {} entries, expected {cells}", at("risk"), risk.len());
        }
    }
    Ok(file)
}

impl ProblemFile {
    fn prior_joints(&self) -> Result<Vec<FiniteJoint>> {
        self.priors
            .iter()
            .enumerate()
            .map(|(k, w)| {
                FiniteJoint::from_weights(self.axis_sizes[..=k].to_vec(), w.clone())
                    .with_context(|| format!("priors table {}", k + 1))
            })
            .collect()
    }

    pub fn problem(&self) -> Result<MtProblem> {
        let temps = TemperatureVector::new(self.coeffs.clone()).context("coeffs")?;
        let priors = self.prior_joints()?;
        Ok(match &self.risk {
            Some(risk) => build_twisted_problem(priors, &temps, risk)?,
            None => MtProblem::new(priors, temps)?,
        })
    }

    /// The two-level case whose twisted posterior has a direct formula.
    fn closed_form_case(&self) -> Result<Option<ValidationCase>> {
        let (Some(risk), 2) = (&self.risk, self.axis_sizes.len()) else {
            return Ok(None);
        };
        let priors = self.prior_joints()?;
        let q1 = priors[0].to_distribution();
        let n2 = self.axis_sizes[1];
        let mut q2 = vec![0.0; n2];
        for (c, p) in priors[1].probs().iter().enumerate() {
            q2[c % n2] += p;
        }
        let q2 = FiniteDistribution::new(q2)?;
        let product = FiniteJoint::product(&[q1.clone(), q2.clone()])?;
        if max_gap(product.probs(), priors[1].probs()) > 1e-12 {
            return Ok(None);
        }
        Ok(Some(ValidationCase {
            name: "problem file".into(),
            temps: TemperatureVector::new(self.coeffs.clone())?,
            prior_first: q1,
            prior_second: q2,
            risk: risk.clone(),
        }))
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn run_problem(file: &ProblemFile) -> Result<MtReport> {
    let problem = file.problem()?;
    let sol = mt_solve(&problem)?;
    let deepest = problem.priors().last().expect("depth >= 1");
    let grid_search = if problem.cells() <= MAX_ORACLE_CELLS {
        let g = brute_force_minimize(&problem, GRID_STEPS)?;
        Some(GridComparison {
            grid_steps: GRID_STEPS,
            exhaustive: g.exhaustive,
            objective: g.objective,
            margin: g.objective - sol.objective,
        })
    } else {
        None
    };
    let closed_form_max_gap = match file.closed_form_case()? {
        Some(case) => Some(max_gap(sol.joint.probs(), case.closed_form_posterior()?.probs())),
        None => None,
    };
    Ok(MtReport {
        axis_sizes: file.axis_sizes.clone(),
        coeffs: file.coeffs.clone(),
        joint: sol.joint.probs().to_vec(),
        objective: sol.objective,
        renyi_residue: sol.renyi_residue,
        max_gap_to_deepest_prior: max_gap(sol.joint.probs(), deepest.probs()),
        grid_search,
        closed_form_max_gap,
    })
}

pub fn run_file(path: &Path) -> Result<MtReport> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_problem(&src).with_context(|| format!("{}", path.display()))?;
    run_problem(&file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_found_by_key() {
        let src = "# c\ncoeffs = [1]\n  priors=[[1]]\nrisk_extra = 1\nrisk = [0]\n";
        assert_eq!(line_of(src, "coeffs"), 2);
        assert_eq!(line_of(src, "priors"), 3);
        assert_eq!(line_of(src, "risk"), 5);
        assert_eq!(line_of(src, "absent"), 1);
    }

    #[test]
    fn shape_errors_are_caught_before_solving() {
        assert!(parse_problem("coeffs = []\naxis_sizes = []\npriors = []\n").is_err());
        assert!(parse_problem("coeffs = [1.0]\naxis_sizes = [0]\npriors = [[]]\n").is_err());
        assert!(parse_problem("coeffs = [1.0]\naxis_sizes = [2]\npriors = [[1, 1]]\nextra = 1\n").is_err());
        let ok = parse_problem("coeffs = [1.0]\naxis_sizes = [2]\npriors = [[1, 3]]\n").unwrap();
        assert_eq!(run_problem(&ok).unwrap().joint, vec![0.25, 0.75]);
    }

    #[test]
    fn non_product_priors_skip_the_closed_form() {
        let file = parse_problem(
            "coeffs = [1.0, 1.0]\naxis_sizes = [2, 2]\npriors = [[1, 1], [4, 1, 1, 4]]\nrisk = [0.0, 1.0, 1.0, 0.0]\n",
        )
        .unwrap();
        let report = run_problem(&file).unwrap();
        assert_eq!(report.closed_form_max_gap, None);
        assert!(report.grid_search.unwrap().margin >= -1e-12);
    }
}
