//! `verify`: the property suite behind the library, runnable from the
//! command line with a machine-readable summary.

use std::time::Instant;

use anyhow::Result;
use multilevel_core::bounds::{
    chained_mi_bound, excess_risk_bound, gibbs_excess, high_prob_bound, neighborhood_excess, relaxed_objective,
    BoundInputs,
};
use multilevel_core::data::mnist::{encode_idx_images, parse_idx_images, IdxImages};
use multilevel_core::nnet::{spectral_norm, DEFAULT_MAX_ITER, DEFAULT_TOL};
use multilevel_core::numeric::total_variation;
use multilevel_core::sampler::rng::chain_rng;
use multilevel_core::sampler::{
    discrete_gibbs, discrete_gibbs_target, discrete_multilevel_metropolis, gibbs_average_predictor,
    inner_conditional_chain, mc_ratio, metropolis_chain, validation_cases, BinaryExample, Hypothesis,
    SamplerConfig, UniformResample,
};
use multilevel_core::{
    beta, brute_force_minimize, chain_factorize, conditional_relative_entropy, constants, forward, in_ball, link_gap,
    loss, multilevel_relative_entropy, mt_objective, mt_solve, mutual_information, recompose, reference_problems,
    relative_entropy, renyi_divergence, tilt, Example, FiniteDistribution, FiniteJoint, LayerSpec, MtProblem,
    NetParams, NetSpec, OutputActivation, TemperatureVector,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub type TiltFn =
    fn(&FiniteDistribution, &FiniteDistribution, f64) -> multilevel_core::Result<FiniteDistribution>;

/// Swappable implementations, so the suite can be shown to catch a fault.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub tilt: TiltFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Self { tilt }
    }
}

/// Faults the suite must detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Leak a little uniform mass into every tilted distribution.
    Tilt,
}

fn leaky_tilt(p: &FiniteDistribution, q: &FiniteDistribution, lambda: f64) -> multilevel_core::Result<FiniteDistribution> {
    let t = tilt(p, q, lambda)?;
    FiniteDistribution::from_weights(t.probs().iter().map(|v| v + 1e-6).collect())
}

impl Hooks {
    pub fn with_fault(fault: Option<Fault>) -> Self {
        match fault {
            None => Self::default(),
            Some(Fault::Tilt) => Self { tilt: leaky_tilt },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error (or statistic) against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub groups: Vec<GroupResult>,
    pub passed: usize,
    pub failed: usize,
    pub failed_groups: Vec<&'static str>,
}

impl VerifySummary {
    pub fn ok(&self) -> bool {
        self.failed == 0
    }
}

/// Counts cases whose error exceeds a tolerance.
struct Tally {
    cases: usize,
    failures: usize,
    worst: f64,
    tol: f64,
    detail: String,
}

impl Tally {
    fn new(tol: f64) -> Self {
        Self { cases: 0, failures: 0, worst: 0.0, tol, detail: String::new() }
    }

    /// Records one case with error `err`; NaN counts as a failure.
    fn err(&mut self, err: f64, what: impl FnOnce() -> String) {
        self.cases += 1;
        if err.is_nan() || err > self.worst {
            self.worst = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= self.tol) {
            self.failures += 1;
            if self.detail.is_empty() {
                self.detail = what();
            }
        }
    }

    fn holds(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.err(if ok { 0.0 } else { f64::INFINITY }, what);
    }
}

type Check = fn(&Hooks) -> Result<Tally>;

const GROUPS: &[(&str, Check)] = &[
    ("relative_entropy_basics", relative_entropy_basics),
    ("renyi_order_one_limit", renyi_order_one_limit),
    ("renyi_monotone_in_order", renyi_monotone_in_order),
    ("chain_rule", chain_rule),
    ("tilting_identity", tilting_identity),
    ("tilt_endpoints", tilt_endpoints),
    ("tilt_minimality", tilt_minimality),
    ("mutual_information_decomposition", mi_decomposition),
    ("multilevel_entropy_prefix_sum", multilevel_prefix_sum),
    ("factorize_recompose_roundtrip", factorize_roundtrip),
    ("mt_vs_grid_search", mt_vs_grid),
    ("mt_residue_certificate", mt_residue),
    ("mt_two_level_closed_form", mt_two_level_closed_form),
    ("mt_depth_one_echoes_prior", mt_depth_one),
    ("mt_consistent_zero_risk", mt_consistent_zero_risk),
    ("twisted_posterior_closed_form", twisted_closed_form),
    ("metropolis_four_state_target", metropolis_four_state),
    ("inner_chain_conditional", inner_chain_conditional),
    ("normalizer_ratio_estimate", ratio_estimate),
    ("multilevel_sampler_stationarity", multilevel_stationarity),
    ("gibbs_sampler_stationarity", gibbs_stationarity),
    ("gibbs_average_predictor", gibbs_predictor),
    ("spectral_norm_vs_eigensolver", spectral_vs_eigen),
    ("forward_matches_naive", forward_naive),
    ("ball_membership_rank_one", ball_rank_one),
    ("layer_substitution_sweep", link_sweep),
    ("loss_lipschitz_and_output_caps", lipschitz_caps),
    ("bound_tangent_dominance", tangent_dominance),
    ("bound_gamma_star_optimality", gamma_star_optimality),
    ("bound_monotonicity", bound_monotonicity),
    ("bound_markov_ratio", markov_ratio),
    ("gibbs_excess_convexity", gibbs_convexity),
    ("idx_header_fuzz", idx_header_fuzz),
];

/// Names of every registered property group, in run order.
pub fn group_names() -> Vec<&'static str> {
    GROUPS.iter().map(|(name, _)| *name).collect()
}

/// Runs every group, or those whose name contains `only`.
pub fn run_suite(hooks: &Hooks, only: Option<&str>) -> VerifySummary {
    run_matching(hooks, |name| only.is_none_or(|o| name.contains(o)))
}

/// Runs exactly the named groups.
pub fn run_groups(hooks: &Hooks, names: &[&str]) -> VerifySummary {
    run_matching(hooks, |name| names.contains(&name))
}

fn run_matching(hooks: &Hooks, keep: impl Fn(&str) -> bool) -> VerifySummary {
    let mut groups = Vec::new();
    for &(name, check) in GROUPS {
        if !keep(name) {
            continue;
        }
        let start = Instant::now();
        let r = match check(hooks) {
            Ok(t) => GroupResult {
                name,
                passed: t.failures == 0 && t.cases > 0,
                cases: t.cases,
                failures: t.failures,
                worst: t.worst,
                tolerance: t.tol,
                seconds: 0.0,
                detail: t.detail,
            },
            Err(e) => GroupResult {
                name,
                passed: false,
                cases: 0,
                failures: 1,
                worst: f64::INFINITY,
                tolerance: 0.0,
                seconds: 0.0,
                detail: format!("{e:#}"),
            },
        };
        groups.push(GroupResult { seconds: start.elapsed().as_secs_f64(), ..r });
    }
    let failed_groups: Vec<_> = groups.iter().filter(|g| !g.passed).map(|g| g.name).collect();
    VerifySummary { passed: groups.len() - failed_groups.len(), failed: failed_groups.len(), failed_groups, groups }
}

fn rng(stream: u64) -> ChaCha8Rng {
    chain_rng(0x5EED, stream)
}

fn rdist(rng: &mut ChaCha8Rng, n: usize) -> FiniteDistribution {
    FiniteDistribution::from_weights((0..n).map(|_| rng.random_range(0.01..1.0)).collect()).expect("positive weights")
}

fn rjoint(rng: &mut ChaCha8Rng, sizes: &[usize]) -> FiniteJoint {
    let cells = sizes.iter().product();
    FiniteJoint::from_weights(sizes.to_vec(), (0..cells).map(|_| rng.random_range(0.01..1.0)).collect())
        .expect("positive weights")
}

fn marginal_first(j: &FiniteJoint) -> Result<FiniteDistribution> {
    Ok(j.marginalize(1)?.to_distribution())
}

fn marginal_second(j: &FiniteJoint) -> Result<FiniteDistribution> {
    let ny = j.axis_sizes()[1];
    let mut py = vec![0.0; ny];
    for row in j.probs().chunks_exact(ny) {
        py.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    Ok(FiniteDistribution::from_weights(py)?)
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// --- distributions ---------------------------------------------------------

fn relative_entropy_basics(_: &Hooks) -> Result<Tally> {
    let mut r = rng(1);
    let mut t = Tally::new(1e-12);
    for _ in 0..200 {
        let n = r.random_range(1..8);
        let (p, q) = (rdist(&mut r, n), rdist(&mut r, n));
        t.err(relative_entropy(&p, &p)?.abs(), || "D(P||P) != 0".into());
        t.holds(relative_entropy(&p, &q)? >= -1e-15, || "negative divergence".into());
    }
    let p = FiniteDistribution::new(vec![0.5, 0.5])?;
    let q = FiniteDistribution::new(vec![1.0, 0.0])?;
    t.holds(relative_entropy(&p, &q)? == f64::INFINITY, || "missing absolute continuity is not +inf".into());
    Ok(t)
}

fn renyi_order_one_limit(_: &Hooks) -> Result<Tally> {
    let mut r = rng(2);
    let mut t = Tally::new(1e-3);
    for _ in 0..200 {
        let (p, q) = (rdist(&mut r, 4), rdist(&mut r, 4));
        let kl = relative_entropy(&p, &q)?;
        for order in [1.0 - 1e-5, 1.0 + 1e-5] {
            t.err((renyi_divergence(&p, &q, order)? - kl).abs(), || format!("order {order}"));
        }
    }
    Ok(t)
}

fn renyi_monotone_in_order(_: &Hooks) -> Result<Tally> {
    let mut r = rng(3);
    let mut t = Tally::new(1e-12);
    for _ in 0..1000 {
        let (p, q) = (rdist(&mut r, 4), rdist(&mut r, 4));
        let (a, b) = (r.random_range(0.05..3.0), r.random_range(0.05..3.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let drop = renyi_divergence(&p, &q, lo)? - renyi_divergence(&p, &q, hi)?;
        t.err(drop.max(0.0), || format!("orders {lo} < {hi}"));
    }
    Ok(t)
}

fn chain_rule(_: &Hooks) -> Result<Tally> {
    let mut r = rng(4);
    let mut t = Tally::new(1e-10);
    for _ in 0..1000 {
        let (p, q) = (rjoint(&mut r, &[3, 4]), rjoint(&mut r, &[3, 4]));
        let whole = relative_entropy(&p.to_distribution(), &q.to_distribution())?;
        let (px, qx) = (marginal_first(&p)?, marginal_first(&q)?);
        let (pc, qc) = (chain_factorize(&p), chain_factorize(&q));
        let parts = relative_entropy(&px, &qx)? + conditional_relative_entropy(&pc[1], &qc[1], &px)?;
        t.err((whole - parts).abs(), || format!("{whole} vs {parts}"));
    }
    Ok(t)
}

fn tilting_identity(h: &Hooks) -> Result<Tally> {
    let mut r = rng(5);
    let mut t = Tally::new(1e-10);
    for _ in 0..1000 {
        let (p, rr, q) = (rdist(&mut r, 5), rdist(&mut r, 5), rdist(&mut r, 5));
        let lambda = r.random_range(0.01..0.99);
        let tl = (h.tilt)(&rr, &q, lambda)?;
        let lhs = lambda * relative_entropy(&p, &rr)? + (1.0 - lambda) * relative_entropy(&p, &q)?;
        let rhs = relative_entropy(&p, &tl)? + (1.0 - lambda) * renyi_divergence(&rr, &q, lambda)?;
        t.err((lhs - rhs).abs(), || format!("λ={lambda}: {lhs} vs {rhs}"));
    }
    Ok(t)
}

fn tilt_endpoints(h: &Hooks) -> Result<Tally> {
    let mut r = rng(6);
    let mut t = Tally::new(1e-14);
    for _ in 0..200 {
        let (p, q) = (rdist(&mut r, 6), rdist(&mut r, 6));
        t.err(max_gap((h.tilt)(&p, &q, 0.0)?.probs(), q.probs()), || "λ=0 does not return Q".into());
        t.err(max_gap((h.tilt)(&p, &q, 1.0)?.probs(), p.probs()), || "λ=1 does not return P".into());
    }
    Ok(t)
}

fn tilt_minimality(h: &Hooks) -> Result<Tally> {
    let mut r = rng(7);
    let mut t = Tally::new(1e-12);
    for _ in 0..300 {
        let (rr, q) = (rdist(&mut r, 4), rdist(&mut r, 4));
        let lambda = r.random_range(0.01..0.99);
        let f = |x: &FiniteDistribution| -> Result<f64> {
            Ok(lambda * relative_entropy(x, &rr)? + (1.0 - lambda) * relative_entropy(x, &q)?)
        };
        let best = f(&(h.tilt)(&rr, &q, lambda)?)?;
        for _ in 0..20 {
            let p = rdist(&mut r, 4);
            t.err((best - f(&p)?).max(0.0), || format!("λ={lambda}: random point beats the tilt"));
        }
    }
    Ok(t)
}

fn mi_decomposition(_: &Hooks) -> Result<Tally> {
    let mut r = rng(8);
    let mut t = Tally::new(1e-10);
    for _ in 0..1000 {
        let p = rjoint(&mut r, &[3, 3]);
        let qy = rdist(&mut r, 3);
        let prod = FiniteJoint::product(&[marginal_first(&p)?, qy.clone()])?;
        let rhs = relative_entropy(&p.to_distribution(), &prod.to_distribution())?
            - relative_entropy(&marginal_second(&p)?, &qy)?;
        let mi = mutual_information(&p)?;
        t.err((mi - rhs).abs(), || format!("{mi} vs {rhs}"));
    }
    Ok(t)
}

fn multilevel_prefix_sum(_: &Hooks) -> Result<Tally> {
    let mut r = rng(9);
    let mut t = Tally::new(1e-12);
    for _ in 0..500 {
        let (p, q) = (rjoint(&mut r, &[2, 3, 2]), rjoint(&mut r, &[2, 3, 2]));
        let a: Vec<f64> = (0..3).map(|_| r.random_range(0.1..3.0)).collect();
        let mut direct = 0.0;
        for (k, ak) in a.iter().enumerate() {
            let (pk, qk) = (p.marginalize(k + 1)?, q.marginalize(k + 1)?);
            direct += ak * relative_entropy(&pk.to_distribution(), &qk.to_distribution())?;
        }
        let ours = multilevel_relative_entropy(&p, &q, &TemperatureVector::new(a)?)?;
        t.err((ours - direct).abs(), || format!("{ours} vs {direct}"));
    }
    Ok(t)
}

fn factorize_roundtrip(_: &Hooks) -> Result<Tally> {
    let mut r = rng(10);
    let mut t = Tally::new(1e-14);
    for _ in 0..200 {
        let j = rjoint(&mut r, &[3, 2, 4]);
        let back = recompose(&chain_factorize(&j))?;
        t.err(max_gap(back.probs(), j.probs()), || "recompose(factorize(P)) != P".into());
    }
    Ok(t)
}

// --- Marginalize-Tilt -------------------------------------------------------

fn mt_vs_grid(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(0.01);
    for (name, problem) in reference_problems() {
        let value = mt_objective(&mt_solve(&problem)?.joint, &problem)?;
        let grid = brute_force_minimize(&problem, 200)?;
        t.err(value - grid.objective, || format!("{name}: {value} vs grid {}", grid.objective));
    }
    Ok(t)
}

fn mt_residue(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(1e-9);
    for (name, problem) in reference_problems() {
        let sol = mt_solve(&problem)?;
        let value = mt_objective(&sol.joint, &problem)?;
        t.err((value - sol.renyi_residue).abs(), || format!("{name}: {value} vs {}", sol.renyi_residue));
    }
    Ok(t)
}

fn mt_two_level_closed_form(h: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(1e-12);
    for (name, problem) in reference_problems().into_iter().filter(|(_, p)| p.depth() == 2) {
        let sol = mt_solve(&problem)?;
        let [a1, a2] = [problem.coeffs()[0], problem.coeffs()[1]];
        let q_x = problem.priors()[0].to_distribution();
        let rj = &problem.priors()[1];
        let ny = rj.axis_sizes()[1];
        let r_x = FiniteDistribution::from_weights(rj.probs().chunks_exact(ny).map(|c| c.iter().sum()).collect())?;
        let p_x = (h.tilt)(&q_x, &r_x, a1 / (a1 + a2))?;
        for x in 0..r_x.len() {
            for y in 0..ny {
                let expected = p_x.probs()[x] * rj.probs()[x * ny + y] / r_x.probs()[x];
                let got = sol.joint.probs()[x * ny + y];
                t.err((got - expected).abs(), || format!("{name}: cell ({x},{y}) {got} vs {expected}"));
            }
        }
    }
    Ok(t)
}

fn mt_depth_one(_: &Hooks) -> Result<Tally> {
    let mut r = rng(11);
    let mut t = Tally::new(1e-15);
    for _ in 0..50 {
        let q = rdist(&mut r, 5);
        let problem =
            MtProblem::new(vec![FiniteJoint::from_distribution(&q)], TemperatureVector::new(vec![r.random_range(0.1..3.0)])?)?;
        let sol = mt_solve(&problem)?;
        t.err(max_gap(sol.joint.probs(), q.probs()), || "d=1 solution differs from its prior".into());
    }
    Ok(t)
}

fn mt_consistent_zero_risk(_: &Hooks) -> Result<Tally> {
    let mut r = rng(12);
    let mut t = Tally::new(1e-14);
    for _ in 0..50 {
        let (q1, q2) = (rdist(&mut r, 2), rdist(&mut r, 3));
        let joint = FiniteJoint::product(&[q1.clone(), q2])?;
        let temps = TemperatureVector::new(vec![r.random_range(0.1..3.0), r.random_range(0.1..3.0)])?;
        let problem = multilevel_core::build_twisted_problem(
            vec![FiniteJoint::from_distribution(&q1), joint.clone()],
            &temps,
            &[0.0; 6],
        )?;
        let sol = mt_solve(&problem)?;
        t.err(max_gap(sol.joint.probs(), joint.probs()), || "zero risk moved a consistent prior".into());
        t.err(sol.renyi_residue.abs(), || "nonzero residue at a consistent prior".into());
    }
    Ok(t)
}

fn twisted_closed_form(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(1e-10);
    for case in validation_cases() {
        let mt = mt_solve(&case.twisted_problem()?)?.joint;
        let direct = case.closed_form_posterior()?;
        t.err(max_gap(mt.probs(), direct.probs()), || case.name.clone());
    }
    Ok(t)
}

// --- samplers ----------------------------------------------------------------

fn metropolis_four_state(_: &Hooks) -> Result<Tally> {
    let target = [0.1, 0.2, 0.3, 0.4];
    let log_t = |i: &usize| f64::ln(target[*i]);
    let mut t = Tally::new(0.02);
    let mut r = rng(13);
    let trace = metropolis_chain(&log_t, &UniformResample { size: 4 }, 0, 100_000, &mut r)?;
    let mut freq = [0.0; 4];
    trace.states.iter().for_each(|&s| freq[s] += 1.0 / trace.states.len() as f64);
    t.err(total_variation(&freq, &target), || format!("frequencies {freq:?}"));
    Ok(t)
}

fn inner_chain_conditional(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(0.05);
    for case in validation_cases() {
        let model = case.model()?;
        let [_, n2] = case.sizes();
        let exact = case.closed_form_posterior()?;
        let cond = FiniteDistribution::from_weights(exact.probs()[n2..2 * n2].to_vec())?;
        let mut r = rng(14);
        let run = inner_conditional_chain(&model, &1, case.temps[1], 10_000, 0, &mut r)?;
        let mut freq = vec![0.0; n2];
        run.samples.iter().for_each(|&v| freq[v] += 1.0 / run.samples.len() as f64);
        t.err(total_variation(&freq, cond.probs()), || case.name.clone());
    }
    Ok(t)
}

fn ratio_estimate(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(0.05);
    for case in validation_cases() {
        let model = case.model()?;
        let [_, n2] = case.sizes();
        let a2 = case.temps[1];
        let z = |w1: usize| -> f64 {
            (0..n2).map(|v| case.prior_second.probs()[v] * (-case.risk[w1 * n2 + v] / a2).exp()).sum()
        };
        let exact = z(1) / z(0);
        let mut r = rng(15);
        let run = inner_conditional_chain(&model, &0, a2, 10_000, 0, &mut r)?;
        let est = mc_ratio(&model, &1, &0, &run.samples, a2)?;
        t.err(((est - exact) / exact).abs(), || format!("{}: {est} vs {exact}", case.name));
    }
    Ok(t)
}

fn multilevel_stationarity(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(0.05);
    for (i, case) in validation_cases().iter().enumerate() {
        let exact = mt_solve(&case.twisted_problem()?)?.joint;
        let mut cfg = SamplerConfig::new(case.temps.clone(), 100_000, 50, 1000 + i as u64);
        cfg.thin = usize::MAX;
        let emp = discrete_multilevel_metropolis(&case.model()?, &cfg)?;
        t.err(emp.total_variation(&exact)?, || case.name.clone());
    }
    Ok(t)
}

fn gibbs_stationarity(_: &Hooks) -> Result<Tally> {
    let mut t = Tally::new(0.02);
    for (i, case) in validation_cases().iter().enumerate() {
        let model = case.model()?;
        let target = discrete_gibbs_target(&model, 1.0)?;
        let mut cfg = SamplerConfig::new(case.temps.clone(), 100_000, 1, 2000 + i as u64);
        cfg.thin = usize::MAX;
        let emp = discrete_gibbs(&model, 1.0, &cfg)?;
        t.err(emp.total_variation(&target)?, || case.name.clone());
    }
    Ok(t)
}

fn gibbs_predictor(_: &Hooks) -> Result<Tally> {
    let hs: Vec<Hypothesis> = vec![
        std::sync::Arc::new(|x: &[f64]| x[0]),
        std::sync::Arc::new(|x: &[f64]| 1.0 - x[0]),
        std::sync::Arc::new(|x: &[f64]| 0.5 * x[0] + 0.25),
    ];
    let data: Vec<BinaryExample> = [(0.1, 0.0), (0.9, 1.0), (0.6, 1.0), (0.3, 1.0)]
        .iter()
        .map(|&(x, y)| BinaryExample { x: vec![x], y })
        .collect();
    let prior = FiniteDistribution::new(vec![0.5, 0.3, 0.2])?;
    let mut t = Tally::new(1e-15);
    for gamma in [0.0, 0.5, 1.0, 4.0] {
        let pred = gibbs_average_predictor(&hs, &data, gamma, &prior)?;
        let w: Vec<f64> = hs
            .iter()
            .zip(prior.probs())
            .map(|(h, q)| (-gamma * data.iter().map(|e| (h(&e.x) - e.y).abs()).sum::<f64>() / 4.0).exp() * q)
            .collect();
        let z: f64 = w.iter().sum();
        for x in [0.0, 0.37, 1.0] {
            let direct: f64 = hs.iter().zip(&w).map(|(h, wi)| wi / z * h(&[x])).sum();
            t.err((pred.predict(&[x])? - direct).abs(), || format!("γ={gamma}, x={x}"));
        }
    }
    Ok(t)
}

// --- nets ------------------------------------------------------------------

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample(StandardNormal))
}

fn dense_spectral_norm(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.transpose() * a).eigenvalues.max().max(0.0).sqrt()
}

fn inside(r: &mut ChaCha8Rng, layer: &LayerSpec) -> DMatrix<f64> {
    let g = gaussian(r, layer.out_dim(), layer.in_dim());
    let frac: f64 = r.random_range(0.0..0.999);
    layer.reference() + &g * (frac * layer.max_deviation() / dense_spectral_norm(&g))
}

fn random_spec(r: &mut ChaCha8Rng, output: OutputActivation) -> Result<NetSpec> {
    let d = r.random_range(2..=3);
    let dims: Vec<usize> = (0..=d).map(|_| r.random_range(1..=8)).collect();
    let layers = dims
        .windows(2)
        .map(|w| LayerSpec::new(gaussian(r, w[1], w[0]), r.random_range(0.05..1.0)))
        .collect::<multilevel_core::Result<Vec<_>>>()?;
    Ok(NetSpec::new(layers, output, r.random_range(0.5..3.0))?)
}

fn random_x(r: &mut ChaCha8Rng, dim: usize, radius: f64) -> DVector<f64> {
    let g = DVector::from_fn(dim, |_, _| r.sample(StandardNormal));
    let s: f64 = r.random_range(0.0..1.0);
    let n = g.norm();
    if n == 0.0 {
        g
    } else {
        g * (s * radius / n)
    }
}

fn random_output(r: &mut ChaCha8Rng) -> OutputActivation {
    if r.random_bool(0.5) {
        OutputActivation::Softmax
    } else {
        OutputActivation::Identity
    }
}

fn spectral_vs_eigen(_: &Hooks) -> Result<Tally> {
    let mut r = rng(16);
    let mut t = Tally::new(1e-8);
    for &(rows, cols) in &[(5, 4), (4, 5), (1, 7), (20, 20), (37, 11), (60, 40)] {
        for _ in 0..3 {
            let a = gaussian(&mut r, rows, cols);
            let (ours, oracle) = (spectral_norm(&a, DEFAULT_TOL, DEFAULT_MAX_ITER), dense_spectral_norm(&a));
            t.err((ours - oracle).abs() / oracle, || format!("{rows}x{cols}: {ours} vs {oracle}"));
        }
    }
    Ok(t)
}

fn forward_naive(_: &Hooks) -> Result<Tally> {
    let mut r = rng(17);
    let mut t = Tally::new(1e-12);
    for _ in 0..200 {
        let output = random_output(&mut r);
        let spec = random_spec(&mut r, output)?;
        let params = NetParams::new(spec.layers().iter().map(|l| inside(&mut r, l)).collect());
        let x = random_x(&mut r, spec.input_dim(), spec.input_radius());
        let mut h = x.clone();
        for (k, w) in params.weights.iter().enumerate() {
            h = w * h;
            if k + 1 < params.weights.len() {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        if output == OutputActivation::Softmax {
            let m = h.max();
            h.iter_mut().for_each(|v| *v = (*v - m).exp());
            h /= h.sum();
        }
        t.err((forward(&spec, &params, &x)? - h).amax(), || "forward disagrees with layer-by-layer evaluation".into());
    }
    Ok(t)
}

fn ball_rank_one(_: &Hooks) -> Result<Tally> {
    let mut r = rng(18);
    let mut t = Tally::new(0.0);
    for _ in 0..200 {
        let (rows, cols) = (r.random_range(1..8), r.random_range(1..8));
        let layer = LayerSpec::new(gaussian(&mut r, rows, cols), r.random_range(0.05..2.0))?;
        let u = DVector::from_fn(rows, |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        let v = DVector::from_fn(cols, |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        let dir = &u * v.transpose();
        t.holds(in_ball(&(layer.reference() + &dir * (0.5 * layer.max_deviation())), &layer)?, || "half radius rejected".into());
        t.holds(!in_ball(&(layer.reference() + &dir * (1.5 * layer.max_deviation())), &layer)?, || "1.5 radius accepted".into());
    }
    Ok(t)
}

fn link_sweep(_: &Hooks) -> Result<Tally> {
    let mut r = rng(19);
    let mut t = Tally::new(1e-9);
    for _ in 0..1000 {
        let output = random_output(&mut r);
        let spec = random_spec(&mut r, output)?;
        let k = r.random_range(1..=spec.depth());
        let ws: Vec<DMatrix<f64>> = spec.layers()[..k].iter().map(|l| inside(&mut r, l)).collect();
        let x = random_x(&mut r, spec.input_dim(), spec.input_radius());
        let gap = link_gap(&spec, &ws[..k - 1], &ws[k - 1], &x)?;
        let bound = beta(&spec.radii(), k)? * constants(&spec).m * x.norm();
        t.err(gap - bound, || format!("level {k}: gap {gap} > bound {bound}"));
    }
    Ok(t)
}

fn lipschitz_caps(_: &Hooks) -> Result<Tally> {
    let mut r = rng(20);
    let mut t = Tally::new(1e-9);
    for _ in 0..500 {
        let output = random_output(&mut r);
        let spec = random_spec(&mut r, output)?;
        let c = constants(&spec);
        let p1 = NetParams::new(spec.layers().iter().map(|l| inside(&mut r, l)).collect());
        let p2 = NetParams::new(spec.layers().iter().map(|l| inside(&mut r, l)).collect());
        let x = random_x(&mut r, spec.input_dim(), spec.input_radius());
        let y = random_x(&mut r, spec.output_dim(), 1.0);
        let (h1, h2) = (forward(&spec, &p1, &x)?, forward(&spec, &p2, &x)?);
        let z = Example::new(x, y, spec.input_radius())?;
        let dl = (loss(&spec, &p1, &z)? - loss(&spec, &p2, &z)?).abs();
        t.err(dl - c.l * (&h1 - &h2).norm(), || "loss difference exceeds L·|Δoutput|".into());
        let cap = match output {
            OutputActivation::Softmax => 1.0,
            OutputActivation::Identity => spec.radii().iter().sum::<f64>().exp() * c.m * spec.input_radius(),
        };
        t.err(h1.norm() - cap, || format!("output norm {} above {cap}", h1.norm()));
    }
    Ok(t)
}

// --- bounds ------------------------------------------------------------------

fn random_inputs(r: &mut ChaCha8Rng) -> BoundInputs {
    let d = r.random_range(1..=4);
    let v = |r: &mut ChaCha8Rng, lo: f64, hi: f64| (0..d).map(|_| r.random_range(lo..hi)).collect::<Vec<_>>();
    BoundInputs {
        n: r.random_range(1..10_000),
        l: r.random_range(0.1..5.0),
        m: r.random_range(0.1..5.0),
        r: r.random_range(0.1..30.0),
        betas: v(r, 0.01, 3.0),
        gammas: v(r, 0.01, 10.0),
        mi_terms: Some(v(r, 0.0, 5.0)),
        kl_terms: Some(v(r, 0.0, 20.0)),
    }
}

fn tangent_dominance(_: &Hooks) -> Result<Tally> {
    let mut r = rng(21);
    let mut t = Tally::new(1e-12);
    for _ in 0..1000 {
        let mut i = random_inputs(&mut r);
        let kl = i.kl_terms.clone().unwrap_or_default();
        let root = excess_risk_bound(&i)?.optimized.unwrap_or(f64::NAN);
        t.err((root - relaxed_objective(&i, &kl)?) / root.max(1e-300), || "relaxation below the square-root form".into());
        let kl: Vec<f64> = kl.iter().map(|k| k + 0.01).collect();
        i.kl_terms = Some(kl.clone());
        i.gammas = kl.iter().map(|k| 1.0 / (2.0 * k.sqrt())).collect();
        let at_star = relaxed_objective(&i, &kl)?;
        let root = excess_risk_bound(&i)?.optimized.unwrap_or(f64::NAN);
        t.err((at_star - root).abs() / root, || format!("plug-in {at_star} vs {root}"));
    }
    Ok(t)
}

fn gamma_star_optimality(_: &Hooks) -> Result<Tally> {
    let mut r = rng(22);
    let mut t = Tally::new(1e-12);
    for _ in 0..1000 {
        let mut i = random_inputs(&mut r);
        let kl: Vec<f64> = i.kl_terms.clone().unwrap_or_default().iter().map(|k| k + 1e-3).collect();
        i.kl_terms = Some(kl.clone());
        i.gammas = excess_risk_bound(&i)?.optimal_gammas.unwrap_or_default();
        let best = excess_risk_bound(&i)?.value;
        let mut worst = 0.0f64;
        for _ in 0..200 {
            i.gammas = (0..kl.len()).map(|_| 10f64.powf(r.random_range(-3.0..3.0))).collect();
            worst = worst.max((best - excess_risk_bound(&i)?.value) / best);
        }
        t.err(worst, || "random γ beat γ*".into());
    }
    Ok(t)
}

fn bound_monotonicity(_: &Hooks) -> Result<Tally> {
    let mut r = rng(23);
    let mut t = Tally::new(0.0);
    for _ in 0..1000 {
        let i = random_inputs(&mut r);
        let k = r.random_range(0..i.depth());
        let bump = r.random_range(0.0..2.0);
        let mut more = i.clone();
        if let (Some(mi), Some(kl)) = (more.mi_terms.as_mut(), more.kl_terms.as_mut()) {
            mi[k] += bump;
            kl[k] += bump;
        }
        let eps = r.random_range(0.01..10.0);
        t.holds(chained_mi_bound(&more)? >= chained_mi_bound(&i)?, || "chained bound fell as MI grew".into());
        t.holds(excess_risk_bound(&more)?.value >= excess_risk_bound(&i)?.value, || "excess fell as KL grew".into());
        t.holds(high_prob_bound(&more, eps)? <= high_prob_bound(&i, eps)?, || "confidence rose as KL grew".into());
        let (kl, kl_more) = (i.kl_terms.clone().unwrap_or_default(), more.kl_terms.clone().unwrap_or_default());
        t.holds(
            neighborhood_excess(&i, eps, &kl_more)? >= neighborhood_excess(&i, eps, &kl)?,
            || "neighbourhood excess fell as KL grew".into(),
        );
        let mut bigger = i.clone();
        bigger.n += r.random_range(1..1000);
        t.holds(chained_mi_bound(&bigger)? <= chained_mi_bound(&i)?, || "chained bound rose with n".into());
        t.holds(excess_risk_bound(&bigger)?.value <= excess_risk_bound(&i)?.value, || "excess rose with n".into());
    }
    Ok(t)
}

fn markov_ratio(_: &Hooks) -> Result<Tally> {
    let mut r = rng(24);
    let mut t = Tally::new(1e-12);
    for _ in 0..1000 {
        let i = random_inputs(&mut r);
        let excess = excess_risk_bound(&i)?.value;
        let eps = excess * r.random_range(1.0..50.0);
        t.err((high_prob_bound(&i, eps)? - (1.0 - excess / eps)).abs(), || format!("ε={eps}"));
        let tiny = high_prob_bound(&i, excess * 0.5)?;
        t.holds(tiny == 0.0, || "probability not clamped at 0".into());
    }
    Ok(t)
}

fn gibbs_convexity(_: &Hooks) -> Result<Tally> {
    let mut r = rng(25);
    let mut t = Tally::new(1e-12);
    for _ in 0..1000 {
        let (sigma, n, kl) = (r.random_range(0.1..3.0), r.random_range(1..1000), r.random_range(0.0..10.0));
        let (g1, g2) = (r.random_range(0.01..100.0), r.random_range(0.01..100.0));
        let f = |g: f64| gibbs_excess(sigma, n, g, kl).map(|e| e.bound);
        t.err(f((g1 + g2) / 2.0)? - (f(g1)? + f(g2)?) / 2.0, || "midpoint above chord".into());
        let e = gibbs_excess(sigma, n, g1, kl)?;
        t.err((e.optimized - e.bound) / e.bound, || "optimum above an arbitrary γ".into());
        if kl > 0.0 {
            let at_star = f(e.gamma_star)?;
            t.err((at_star - e.optimized).abs() / e.optimized, || "γ* does not attain the optimum".into());
        }
    }
    Ok(t)
}

// --- data ------------------------------------------------------------------

fn idx_header_fuzz(_: &Hooks) -> Result<Tally> {
    let good = encode_idx_images(&IdxImages { count: 2, rows: 2, cols: 2, pixels: vec![0, 255, 51, 102, 204, 0, 1, 2] });
    let mut t = Tally::new(0.0);
    t.holds(parse_idx_images(&good).is_ok(), || "fixture rejected".into());
    for at in 0..16 {
        for v in 0..=255u8 {
            if v != good[at] {
                let mut bad = good.clone();
                bad[at] = v;
                t.holds(parse_idx_images(&bad).is_err(), || format!("byte {at} = {v} accepted"));
            }
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_large_and_unique() {
        let names = group_names();
        assert!(names.len() >= 20);
        let mut sorted = names.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn selection_and_fault_hook() {
        let clean = run_groups(&Hooks::default(), &["tilt_endpoints", "chain_rule"]);
        assert_eq!(clean.groups.len(), 2);
        assert!(clean.ok());
        let broken = run_suite(&Hooks::with_fault(Some(Fault::Tilt)), Some("tilting"));
        assert_eq!(broken.failed_groups, vec!["tilting_identity"]);
    }
}
