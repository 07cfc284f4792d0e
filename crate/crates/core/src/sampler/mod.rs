//! Metropolis engines: a generic random-walk kernel, the joint Gibbs-posterior
//! sampler, the two-level Metropolis sampler with its nested inner chain, a
//! finite-space harness for checking stationarity, and average predictors.

mod discrete;
mod metropolis;
mod multilevel;
mod net;
mod predictor;
pub mod rng;

pub use discrete::{
    discrete_gibbs, discrete_gibbs_target, discrete_multilevel_metropolis, validation_cases, DiscreteTwoLevel,
    ValidationCase, MAX_DISCRETE_CELLS,
};
pub use metropolis::{
    metropolis_chain, metropolis_visit, GaussianWalk, LogTarget, MetropolisTrace, Proposal, UniformResample,
};
pub use multilevel::{
    gibbs_sampler, inner_conditional_chain, mc_log_ratio, mc_ratio, multilevel_metropolis, ChainTrace, InnerRun,
    SamplerConfig, StepRecord, TwoLevelModel,
};
pub use net::{LayerPrior, TwoLayerNet};
pub use predictor::{
    gibbs_average_predictor, multilevel_average_predictor, BinaryExample, GibbsAverage, HierarchyConstants,
    Hypothesis, MultilevelAverage,
};

#[cfg(test)]
mod tests {
    use std::ops::ControlFlow;
    use std::sync::Arc;

    use nalgebra::DMatrix;

    use super::*;
    use crate::distributions::{FiniteDistribution, FiniteJoint, TemperatureVector};
    use crate::nnet::{in_ball, Dataset, NetSpec, OutputActivation};
    use crate::sampler::rng::chain_rng;

    fn cfg(a: [f64; 2], outer: usize, inner: usize, seed: u64) -> SamplerConfig {
        SamplerConfig::new(TemperatureVector::new(a.to_vec()).unwrap(), outer, inner, seed)
    }

    fn flat_discrete(risk: Vec<f64>, n1: usize, n2: usize) -> DiscreteTwoLevel {
        let q1 = FiniteDistribution::uniform(n1);
        let q = FiniteJoint::uniform(vec![n1, n2]).unwrap();
        DiscreteTwoLevel::new(risk, &q1, &q).unwrap()
    }

    #[test]
    fn non_product_prior_is_a_config_error() {
        let q1 = FiniteDistribution::new(vec![0.5, 0.5]).unwrap();
        let q = FiniteJoint::new(vec![2, 2], vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        assert!(matches!(DiscreteTwoLevel::new(vec![0.0; 4], &q1, &q), Err(crate::Error::Config(_))));
        let big = FiniteJoint::uniform(vec![8, 9]).unwrap();
        assert!(matches!(
            DiscreteTwoLevel::new(vec![0.0; 72], &FiniteDistribution::uniform(8), &big),
            Err(crate::Error::DeskScale(_))
        ));
    }

    #[test]
    fn ratio_is_one_for_identical_or_irrelevant_first_level() {
        let m = flat_discrete(vec![0.0, 1.0, 1.0, 2.0], 2, 2);
        assert_eq!(mc_ratio(&m, &0, &0, &[0, 1, 1], 0.5).unwrap(), 1.0);
        let m = flat_discrete(vec![0.3, 1.0, 0.3, 1.0], 2, 2);
        assert_eq!(mc_ratio(&m, &1, &0, &[0, 1], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn ratio_with_exhaustive_weights_matches_exact_normalizers() {
        // weight each v by its exact conditional mass instead of sampling
        let risk: Vec<f64> = vec![0.0, 1.0, 0.5, 2.0, 1.5, 0.2];
        let a2 = 0.7;
        let z = |w1: usize| (0..3).map(|v| (-risk[w1 * 3 + v] / a2).exp()).sum::<f64>();
        let exact = z(1) / z(0);
        let est: f64 = (0..3)
            .map(|v| {
                let p = (-risk[v] / a2).exp() / z(0);
                p * ((risk[v] - risk[3 + v]) / a2).exp()
            })
            .sum();
        assert!((est - exact).abs() < 1e-12);
    }

    #[test]
    fn inner_chain_single_step_and_flat_limit() {
        let m = flat_discrete(vec![0.0, 1.0, 1.0, 2.0], 2, 2);
        let mut rng = chain_rng(5, 0);
        let run = inner_conditional_chain(&m, &0, 1.0, 1, 0, &mut rng).unwrap();
        assert_eq!(run.samples.len(), 1);
        let run = inner_conditional_chain(&m, &0, 1e9, 2000, 0, &mut rng).unwrap();
        assert!(run.accepted as f64 / 2000.0 > 0.999);
    }

    #[test]
    fn constant_loss_accepts_every_outer_proposal() {
        let m = flat_discrete(vec![0.4; 6], 2, 3);
        let t = multilevel_metropolis(&m, &cfg([1.0, 1.0], 500, 3, 9), (0, 0), 0, |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(t.accept_rate_outer, 1.0);
        assert!(t.risk_trace.iter().all(|&r| r == 0.4));
        assert_eq!(t.risk_trace.len(), 500);
    }

    #[test]
    fn single_outer_iteration() {
        let m = flat_discrete(vec![0.0, 1.0, 1.0, 2.0], 2, 2);
        let t = multilevel_metropolis(&m, &cfg([2.0, 1.0], 1, 4, 1), (1, 1), 0, |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(t.risk_trace.len(), 1);
        assert_eq!(t.samples[0].1, 1);
    }

    #[test]
    fn observer_can_stop_the_chain() {
        let m = flat_discrete(vec![0.0, 1.0, 1.0, 2.0], 2, 2);
        let t = multilevel_metropolis(&m, &cfg([2.0, 1.0], 100, 4, 1), (0, 0), 0, |r| {
            if r.iter == 9 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert_eq!(t.risk_trace.len(), 10);
        assert!(!t.completed);
    }

    #[test]
    fn gibbs_zero_temperature_limit_concentrates() {
        let m = flat_discrete(vec![0.5, 0.1, 0.9, 0.3], 2, 2);
        let mut c = cfg([1.0, 1.0], 20_000, 1, 3);
        c.thin = 1;
        let emp = discrete_gibbs(&m, 1e6, &c).unwrap();
        assert!(emp.probs()[1] > 0.99);
    }

    #[test]
    fn two_layer_net_samples_stay_in_balls() {
        let spec = NetSpec::identity(&[3, 4, 2], &[0.05, 0.05], OutputActivation::Softmax, 2.0).unwrap();
        let x = DMatrix::from_fn(3, 6, |r, c| ((r + 2 * c) % 5) as f64 * 0.2);
        let data = Dataset::from_classes(x, vec![0, 1, 1, 0, 1, 0], 2).unwrap();
        let model = TwoLayerNet::new(&spec, &data, [LayerPrior::Flat; 2], [0.05, 0.05]).unwrap();
        let init = (spec.layers()[0].reference().clone(), spec.layers()[1].reference().clone());
        let mut c = cfg([0.01, 0.01], 300, 5, 11);
        c.thin = 1;
        let t = multilevel_metropolis(&model, &c, init.clone(), 0, |_| ControlFlow::Continue(())).unwrap();
        assert!(t.accept_rate_outer < 1.0);
        for (_, w1, w2) in &t.samples {
            assert!(in_ball(w1, &spec.layers()[0]).unwrap());
            assert!(in_ball(w2, &spec.layers()[1]).unwrap());
        }
        let again = multilevel_metropolis(&model, &c, init, 0, |_| ControlFlow::Continue(())).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn gibbs_average_edge_cases() {
        let data = vec![BinaryExample { x: vec![0.0], y: 1.0 }, BinaryExample { x: vec![1.0], y: 0.0 }];
        let h: Hypothesis = Arc::new(|x: &[f64]| 1.0 - x[0]);
        let one = gibbs_average_predictor(std::slice::from_ref(&h), &data, 3.0, &FiniteDistribution::uniform(1)).unwrap();
        assert_eq!(one.predict(&[0.25]).unwrap(), 0.75);
        let g: Hypothesis = Arc::new(|_: &[f64]| 0.5);
        let prior = FiniteDistribution::new(vec![0.2, 0.8]).unwrap();
        let avg = gibbs_average_predictor(&[h, g], &data, 0.0, &prior).unwrap();
        assert!((avg.predict(&[0.0]).unwrap() - (0.2 + 0.4)).abs() < 1e-15);
        let bad = vec![BinaryExample { x: vec![0.0], y: 0.5 }];
        assert!(gibbs_average_predictor(&[], &bad, 1.0, &FiniteDistribution::uniform(1)).is_err());
    }
}
