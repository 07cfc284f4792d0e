use std::ops::ControlFlow;

use rand::Rng;

use super::metropolis::{Proposal, UniformResample};
use super::multilevel::{gibbs_sampler, multilevel_metropolis, SamplerConfig, TwoLevelModel};
use crate::distributions::{FiniteDistribution, FiniteJoint, TemperatureVector};
use crate::mt::{build_twisted_problem, MtProblem};
use crate::error::{Error, Result};

/// Largest weight space the discrete harness accepts.
pub const MAX_DISCRETE_CELLS: usize = 64;

const PRODUCT_TOL: f64 = 1e-12;

/// Finite two-level weight space `{0..n₁} × {0..n₂}` with a risk table
/// (row-major, `w₂` fastest) and product priors.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTwoLevel {
    sizes: [usize; 2],
    risk: Vec<f64>,
    log_q1: Vec<f64>,
    log_q2: Vec<f64>,
}

impl DiscreteTwoLevel {
    /// `prior_first` is `Q⁽¹⁾` on `w₁`; `prior_joint` is `Q⁽²⁾` on `(w₁, w₂)`
    /// and must factor as `Q⁽¹⁾ ⊗ Q̃⁽²⁾`.
    pub fn new(risk: Vec<f64>, prior_first: &FiniteDistribution, prior_joint: &FiniteJoint) -> Result<Self> {
        if prior_joint.ndim() != 2 {
            return Err(Error::dim("joint prior must have 2 axes"));
        }
        let sizes = [prior_joint.axis_sizes()[0], prior_joint.axis_sizes()[1]];
        let cells = sizes[0] * sizes[1];
        if cells > MAX_DISCRETE_CELLS {
            return Err(Error::DeskScale(format!("{cells} cells exceed the budget of {MAX_DISCRETE_CELLS}")));
        }
        if prior_first.len() != sizes[0] || risk.len() != cells {
            return Err(Error::dim(format!(
                "space is {}×{} but first prior has {} atoms and risk table {} entries",
                sizes[0],
                sizes[1],
                prior_first.len(),
                risk.len()
            )));
        }
        if risk.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("risk entries must be finite"));
        }
        let q = prior_joint.probs();
        let mut q2 = vec![0.0; sizes[1]];
        for row in q.chunks_exact(sizes[1]) {
            q2.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        for (i, row) in q.chunks_exact(sizes[1]).enumerate() {
            let q1 = prior_first.probs()[i];
            if row.iter().zip(&q2).any(|(&v, &m)| (v - q1 * m).abs() > PRODUCT_TOL) {
                return Err(Error::Config(
                    "priors are not consistent products Q(1)(w1)·Q~(2)(w2)".into(),
                ));
            }
        }
        let ln = |p: &f64| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        Ok(Self {
            sizes,
            risk,
            log_q1: prior_first.probs().iter().map(ln).collect(),
            log_q2: q2.iter().map(ln).collect(),
        })
    }

    pub fn sizes(&self) -> [usize; 2] {
        self.sizes
    }

    pub fn risk_table(&self) -> &[f64] {
        &self.risk
    }

    /// Lowest-index cell inside the prior support.
    pub fn first_supported(&self) -> (usize, usize) {
        let i = self.log_q1.iter().position(|v| v.is_finite()).unwrap_or(0);
        let j = self.log_q2.iter().position(|v| v.is_finite()).unwrap_or(0);
        (i, j)
    }
}

impl TwoLevelModel for DiscreteTwoLevel {
    type First = usize;
    type Second = usize;
    type Conditioned = usize;

    fn condition(&self, w1: &usize) -> usize {
        *w1
    }

    fn risk(&self, w1: &usize, w2: &usize) -> f64 {
        self.risk[w1 * self.sizes[1] + w2]
    }

    fn log_prior_first(&self, w1: &usize) -> f64 {
        self.log_q1[*w1]
    }

    fn log_prior_second(&self, w2: &usize) -> f64 {
        self.log_q2[*w2]
    }

    fn propose_first<R: Rng + ?Sized>(&self, w1: &usize, rng: &mut R) -> usize {
        UniformResample { size: self.sizes[0] }.propose(w1, rng)
    }

    fn propose_second<R: Rng + ?Sized>(&self, w2: &usize, rng: &mut R) -> usize {
        UniformResample { size: self.sizes[1] }.propose(w2, rng)
    }
}

fn empirical(sizes: [usize; 2], counts: Vec<f64>) -> Result<FiniteJoint> {
    FiniteJoint::from_weights(sizes.to_vec(), counts)
}

/// Runs the two-level sampler on a finite space and returns the empirical
/// joint of the emitted `(w₁, w₂)` pairs.
pub fn discrete_multilevel_metropolis(model: &DiscreteTwoLevel, config: &SamplerConfig) -> Result<FiniteJoint> {
    let n2 = model.sizes[1];
    let mut counts = vec![0.0; model.sizes[0] * n2];
    multilevel_metropolis(model, config, model.first_supported(), 0, |r| {
        counts[r.w1 * n2 + r.w2] += 1.0;
        ControlFlow::Continue(())
    })?;
    empirical(model.sizes, counts)
}

/// Empirical joint of a Gibbs-posterior chain on a finite space.
pub fn discrete_gibbs(model: &DiscreteTwoLevel, gamma: f64, config: &SamplerConfig) -> Result<FiniteJoint> {
    let n2 = model.sizes[1];
    let mut counts = vec![0.0; model.sizes[0] * n2];
    gibbs_sampler(model, gamma, config, model.first_supported(), 0, |r| {
        counts[r.w1 * n2 + r.w2] += 1.0;
        ControlFlow::Continue(())
    })?;
    empirical(model.sizes, counts)
}

/// Exact Gibbs posterior `∝ exp(−γ L_s) · Q` over the finite space.
pub fn discrete_gibbs_target(model: &DiscreteTwoLevel, gamma: f64) -> Result<FiniteJoint> {
    let n2 = model.sizes[1];
    let log_w: Vec<f64> = (0..model.risk.len())
        .map(|c| -gamma * model.risk[c] + model.log_q1[c / n2] + model.log_q2[c % n2])
        .collect();
    FiniteJoint::from_log_weights(model.sizes.to_vec(), &log_w)
}

/// One fixed finite problem used to check the samplers against exact answers.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCase {
    pub name: String,
    pub temps: TemperatureVector,
    pub prior_first: FiniteDistribution,
    pub prior_second: FiniteDistribution,
    pub risk: Vec<f64>,
}

impl ValidationCase {
    pub fn sizes(&self) -> [usize; 2] {
        [self.prior_first.len(), self.prior_second.len()]
    }

    pub fn prior_joint(&self) -> FiniteJoint {
        FiniteJoint::product(&[self.prior_first.clone(), self.prior_second.clone()])
            .expect("two nonempty factors")
    }

    pub fn model(&self) -> Result<DiscreteTwoLevel> {
        DiscreteTwoLevel::new(self.risk.clone(), &self.prior_first, &self.prior_joint())
    }

    /// Input to the Marginalize-Tilt solver whose solution is the twisted posterior.
    pub fn twisted_problem(&self) -> Result<MtProblem> {
        let first = FiniteJoint::from_distribution(&self.prior_first);
        build_twisted_problem(vec![first, self.prior_joint()], &self.temps, &self.risk)
    }

    /// The twisted posterior written out directly:
    /// `P(w₁, w₂) ∝ Q̃⁽¹⁾(w₁) Z(w₁)^{a₂/(a₁+a₂)} · e^{−L(w₁,w₂)/a₂} Q̃⁽²⁾(w₂) / Z(w₁)`
    /// with `Z(w₁) = Σ_v e^{−L(w₁,v)/a₂} Q̃⁽²⁾(v)`.
    pub fn closed_form_posterior(&self) -> Result<FiniteJoint> {
        let [n1, n2] = self.sizes();
        let (a1, a2) = (self.temps[0], self.temps[1]);
        let q2 = self.prior_second.probs();
        let mut log_w = vec![f64::NEG_INFINITY; n1 * n2];
        for i in 0..n1 {
            let q1 = self.prior_first.probs()[i];
            if q1 == 0.0 {
                continue;
            }
            let terms: Vec<f64> = (0..n2)
                .map(|j| if q2[j] > 0.0 { q2[j].ln() - self.risk[i * n2 + j] / a2 } else { f64::NEG_INFINITY })
                .collect();
            let log_z = crate::numeric::log_sum_exp(&terms);
            let log_marginal = q1.ln() + a2 / (a1 + a2) * log_z;
            for j in 0..n2 {
                log_w[i * n2 + j] = log_marginal + terms[j] - log_z;
            }
        }
        FiniteJoint::from_log_weights(vec![n1, n2], &log_w)
    }
}

/// The eight fixed cases: 2×2 and 2×4 spaces, temperatures `(2, 1)` and
/// `(0.5, 1)`, and for each space a flat-prior and a skewed-prior risk table.
pub fn validation_cases() -> Vec<ValidationCase> {
    let d = |v: &[f64]| FiniteDistribution::new(v.to_vec()).expect("valid literal");
    let tables: [(&str, Vec<f64>, FiniteDistribution, FiniteDistribution); 4] = [
        ("2x2-additive", vec![0.0, 1.0, 1.0, 2.0], d(&[0.5, 0.5]), d(&[0.5, 0.5])),
        ("2x2-crossed", vec![1.2, 0.1, 0.4, 0.9], d(&[0.3, 0.7]), d(&[0.6, 0.4])),
        (
            "2x4-additive",
            vec![0.0, 0.5, 1.0, 1.5, 1.0, 1.5, 2.0, 2.5],
            d(&[0.5, 0.5]),
            d(&[0.25, 0.25, 0.25, 0.25]),
        ),
        (
            "2x4-crossed",
            vec![0.8, 0.2, 1.4, 0.6, 0.3, 1.1, 0.0, 1.7],
            d(&[0.4, 0.6]),
            d(&[0.1, 0.2, 0.3, 0.4]),
        ),
    ];
    let mut cases = Vec::new();
    for (name, risk, q1, q2) in tables {
        for a in [[2.0, 1.0], [0.5, 1.0]] {
            cases.push(ValidationCase {
                name: format!("{name}/a=({},{})", a[0], a[1]),
                temps: TemperatureVector::new(a.to_vec()).expect("positive literal"),
                prior_first: q1.clone(),
                prior_second: q2.clone(),
                risk: risk.clone(),
            });
        }
    }
    cases
}
