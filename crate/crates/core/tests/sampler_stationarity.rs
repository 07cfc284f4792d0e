use multilevel_core::mt_solve;
use multilevel_core::sampler::{
    discrete_gibbs, discrete_gibbs_target, discrete_multilevel_metropolis, validation_cases, SamplerConfig,
};

#[test]
fn two_level_chain_matches_twisted_posterior() {
    for (i, case) in validation_cases().iter().enumerate() {
        let exact = mt_solve(&case.twisted_problem().unwrap()).unwrap().joint;
        let mut cfg = SamplerConfig::new(case.temps.clone(), 100_000, 50, 1000 + i as u64);
        cfg.thin = usize::MAX;
        let emp = discrete_multilevel_metropolis(&case.model().unwrap(), &cfg).unwrap();
        let tv = emp.total_variation(&exact).unwrap();
        eprintln!("{}: tv {tv:.4}", case.name);
        assert!(tv < 0.05, "{}: tv {tv}", case.name);
    }
}

#[test]
fn gibbs_chain_matches_normalized_target() {
    for (i, case) in validation_cases().iter().enumerate() {
        let model = case.model().unwrap();
        let target = discrete_gibbs_target(&model, 1.0).unwrap();
        let mut cfg = SamplerConfig::new(case.temps.clone(), 100_000, 1, 2000 + i as u64);
        cfg.thin = usize::MAX;
        let emp = discrete_gibbs(&model, 1.0, &cfg).unwrap();
        let tv = emp.total_variation(&target).unwrap();
        eprintln!("{}: tv {tv:.4}", case.name);
        assert!(tv < 0.02, "{}: tv {tv}", case.name);
    }
}

#[test]
fn closed_form_agrees_with_solver() {
    for case in validation_cases() {
        let mt = mt_solve(&case.twisted_problem().unwrap()).unwrap().joint;
        let direct = case.closed_form_posterior().unwrap();
        for (a, b) in mt.probs().iter().zip(direct.probs()) {
            assert!((a - b).abs() < 1e-10, "{}: {a} vs {b}", case.name);
        }
    }
}

use std::ops::ControlFlow;
use std::sync::Arc;

use multilevel_core::data::{synth_dataset, InputKind, LabelKind, SynthSpec};
use multilevel_core::numeric::total_variation;
use multilevel_core::sampler::rng::chain_rng;
use multilevel_core::sampler::{
    gibbs_average_predictor, gibbs_sampler, inner_conditional_chain, mc_ratio, metropolis_chain, multilevel_average_predictor,
    multilevel_metropolis, BinaryExample, HierarchyConstants, Hypothesis, LayerPrior, TwoLayerNet, UniformResample,
};
use multilevel_core::{in_ball, FiniteDistribution, FiniteJoint, NetSpec, OutputActivation, TemperatureVector};

#[test]
fn metropolis_reproduces_a_four_state_target() {
    let target = [0.1, 0.2, 0.3, 0.4];
    let log_t = |i: &usize| f64::ln(target[*i]);
    let mut rng = chain_rng(21, 0);
    let trace = metropolis_chain(&log_t, &UniformResample { size: 4 }, 0, 100_000, &mut rng).unwrap();
    let mut freq = [0.0; 4];
    trace.states.iter().for_each(|&s| freq[s] += 1e-5);
    assert!(total_variation(&freq, &target) < 0.02);
}

#[test]
fn inner_chain_matches_its_conditional() {
    for case in validation_cases() {
        let model = case.model().unwrap();
        let [_, n2] = case.sizes();
        let exact = case.closed_form_posterior().unwrap();
        let row: Vec<f64> = exact.probs()[n2..2 * n2].to_vec();
        let cond = FiniteDistribution::from_weights(row).unwrap();
        let mut rng = chain_rng(22, 0);
        let run = inner_conditional_chain(&model, &1, case.temps[1], 10_000, 0, &mut rng).unwrap();
        let mut freq = vec![0.0; n2];
        run.samples.iter().for_each(|&v| freq[v] += 1e-4);
        assert!(total_variation(&freq, cond.probs()) < 0.05, "{}", case.name);
    }
}

#[test]
fn ratio_estimate_from_long_inner_chains() {
    for case in validation_cases() {
        let model = case.model().unwrap();
        let [_, n2] = case.sizes();
        let a2 = case.temps[1];
        let z = |w1: usize| -> f64 {
            (0..n2).map(|v| case.prior_second.probs()[v] * (-case.risk[w1 * n2 + v] / a2).exp()).sum()
        };
        let exact = z(1) / z(0);
        let mut rng = chain_rng(23, 0);
        let run = inner_conditional_chain(&model, &0, a2, 10_000, 0, &mut rng).unwrap();
        let est = mc_ratio(&model, &1, &0, &run.samples, a2).unwrap();
        assert!(((est - exact) / exact).abs() < 0.05, "{}: {est} vs {exact}", case.name);
    }
}

#[test]
fn gibbs_average_predictor_by_enumeration() {
    let hs: Vec<Hypothesis> = vec![
        Arc::new(|x: &[f64]| x[0]),
        Arc::new(|x: &[f64]| 1.0 - x[0]),
        Arc::new(|x: &[f64]| 0.5 * x[0] + 0.25),
    ];
    let data: Vec<BinaryExample> = [(0.1, 0.0), (0.9, 1.0), (0.6, 1.0), (0.3, 1.0)]
        .iter()
        .map(|&(x, y)| BinaryExample { x: vec![x], y })
        .collect();
    let prior = FiniteDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
    let pred = gibbs_average_predictor(&hs, &data, 1.0, &prior).unwrap();
    let w: Vec<f64> = hs
        .iter()
        .zip(prior.probs())
        .map(|(h, q)| (-data.iter().map(|e| (h(&e.x) - e.y).abs()).sum::<f64>() / 4.0).exp() * q)
        .collect();
    let z: f64 = w.iter().sum();
    for x in [0.0, 0.37, 1.0] {
        let direct: f64 = hs.iter().zip(&w).map(|(h, wi)| wi / z * h(&[x])).sum();
        assert!((pred.predict(&[x]).unwrap() - direct).abs() < 1e-15);
    }
}

#[test]
fn multilevel_average_predictor_by_enumeration() {
    // truncated nets of a 2-level hierarchy with two choices per level
    let level = |c: f64| -> Hypothesis { Arc::new(move |x: &[f64]| c * x[0]) };
    let truncated = vec![vec![level(0.5)], vec![level(0.4), level(0.6)], vec![level(0.35), level(0.45), level(0.55), level(0.7)]];
    let prior = FiniteJoint::uniform(vec![2, 2]).unwrap();
    let data: Vec<BinaryExample> = [(0.2, 0.0), (0.8, 1.0), (0.5, 1.0)].iter().map(|&(x, y)| BinaryExample { x: vec![x], y }).collect();
    let k = HierarchyConstants { alphas: vec![0.3, 0.2], gammas: vec![1.0, 2.0], l: 1.0, m: 1.0, r: 1.0 };
    let pred = multilevel_average_predictor(&truncated, &prior, &data, &k).unwrap();

    let betas = [0.3, 0.2 * 0.3f64.exp()];
    let bsum = betas[0] + betas[1];
    let x = 0.65;
    let mut direct = 0.0;
    for lvl in 1..=2 {
        let zeta = 3f64.sqrt() / (k.gammas[lvl - 1] * bsum);
        let cells = if lvl == 1 { 2 } else { 4 };
        let h = |c: usize, x: f64| {
            0.5 + (truncated[lvl][c](&[x]) - truncated[lvl - 1][c / 2](&[x])) / (2.0 * betas[lvl - 1])
        };
        let w: Vec<f64> = (0..cells)
            .map(|c| (-zeta * data.iter().map(|e| (h(c, e.x[0]) - e.y).abs()).sum::<f64>() / 3.0).exp())
            .collect();
        let z: f64 = w.iter().sum();
        let avg: f64 = (0..cells).map(|c| w[c] / z * h(c, x)).sum();
        direct += betas[lvl - 1] / bsum * avg;
    }
    assert!((pred.predict(&[x]).unwrap() - direct).abs() < 1e-14);
}

fn zero_input_net() -> (NetSpec, multilevel_core::Dataset) {
    let spec = NetSpec::identity(&[6, 5, 4], &[0.3, 0.3], OutputActivation::Softmax, 1.0).unwrap();
    let synth = SynthSpec { n: 30, input_dim: 6, num_classes: 4, seed: 1, inputs: InputKind::Zero, labels: LabelKind::Random, input_radius: 1.0 };
    (spec, synth_dataset(&synth, None).unwrap())
}

#[test]
fn constant_loss_chain_accepts_every_in_ball_proposal() {
    let (spec, data) = zero_input_net();
    let model = TwoLayerNet::new(&spec, &data, [LayerPrior::Flat; 2], [0.05, 0.05]).unwrap();
    let init = (spec.layers()[0].reference().clone(), spec.layers()[1].reference().clone());
    let mut cfg = SamplerConfig::new(TemperatureVector::new(vec![1e-3, 1e-3]).unwrap(), 400, 3, 5);
    cfg.thin = 1;
    let trace = multilevel_metropolis(&model, &cfg, init.clone(), 0, |_| ControlFlow::Continue(())).unwrap();
    assert!(trace.risk_trace.iter().all(|&r| r == trace.risk_trace[0]));
    // with A = 1 every proposal inside the ball is accepted; measure the
    // in-ball fraction by replaying the outer proposals
    let mut accepted_all_in_ball = true;
    for w in trace.samples.windows(2) {
        let moved = w[0].1 != w[1].1;
        accepted_all_in_ball &= !moved || in_ball(&w[1].1, &spec.layers()[0]).unwrap();
    }
    assert!(accepted_all_in_ball);
    assert!(trace.accept_rate_outer > 0.0);
    let again = multilevel_metropolis(&model, &cfg, init, 0, |_| ControlFlow::Continue(())).unwrap();
    assert_eq!(trace, again);
}

#[test]
fn zero_inverse_temperature_samples_the_flat_prior() {
    let (spec, data) = zero_input_net();
    let model = TwoLayerNet::new(&spec, &data, [LayerPrior::Flat; 2], [0.02, 0.02]).unwrap();
    let init = (spec.layers()[0].reference().clone(), spec.layers()[1].reference().clone());
    let mut cfg = SamplerConfig::new(TemperatureVector::new(vec![1.0, 1.0]).unwrap(), 20_000, 1, 6);
    cfg.thin = 10;
    let trace = gibbs_sampler(&model, 0.0, &cfg, init, 0, |_| ControlFlow::Continue(())).unwrap();
    // uniform on a ball: the centre is the mean and most mass sits far out
    let l = &spec.layers()[0];
    let devs: Vec<DMatrix> = trace.samples.iter().skip(200).map(|(_, w1, _)| w1 - l.reference()).collect();
    let mean = devs.iter().fold(DMatrix::zeros(5, 6), |acc, d| acc + d) / devs.len() as f64;
    assert!(mean.norm() < 0.25 * l.max_deviation());
    let far = devs.iter().filter(|d| d.norm() > 0.5 * l.max_deviation()).count();
    assert!(far as f64 / devs.len() as f64 > 0.5);
}

type DMatrix = nalgebra::DMatrix<f64>;
