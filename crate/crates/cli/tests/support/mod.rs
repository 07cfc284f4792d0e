//! Shared helpers for the command-level tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multilevel_core::bounds::exact_mi_report;
use multilevel_core::{
    beta, build_twisted_problem, constants, loss, mt_solve, Example, FiniteJoint, LayerSpec, NetParams, NetSpec,
    OutputActivation, TemperatureVector,
};
use nalgebra::{DMatrix, DVector};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multilevel"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn demo(name: &str) -> PathBuf {
    crate_dir().join("demos").join(name)
}

pub fn workspace_file(rel: &str) -> PathBuf {
    crate_dir().join("../..").join(rel)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Constants and exact per-level terms of a fully enumerable learning
/// problem: 1→1→1 nets with weights on the ball boundaries, four example
/// points, two samples per dataset and the exact twisted posterior.
pub struct DiscretePipeline {
    pub n: usize,
    pub l: f64,
    pub m: f64,
    pub r: f64,
    pub betas: Vec<f64>,
    pub mi_terms: Vec<f64>,
    pub kl_terms: Vec<f64>,
}

pub fn discrete_pipeline() -> DiscretePipeline {
    let alphas = [0.4, 0.3];
    let layers = alphas.iter().map(|&a| LayerSpec::identity(1, 1, a).unwrap()).collect();
    let spec = NetSpec::new(layers, OutputActivation::Identity, 1.0).unwrap();
    let choices = |a: f64| [1.0 - a, 1.0 + a];
    let weights: Vec<NetParams> = choices(alphas[0])
        .iter()
        .flat_map(|&w1| choices(alphas[1]).map(move |w2| (w1, w2)))
        .map(|(w1, w2)| NetParams::new(vec![DMatrix::from_element(1, 1, w1), DMatrix::from_element(1, 1, w2)]))
        .collect();
    let points: Vec<Example> = [(0.2, 0.0), (0.9, 0.3), (0.5, 1.0), (1.0, -0.5)]
        .iter()
        .map(|&(x, y)| Example::new(DVector::from_element(1, x), DVector::from_element(1, y), 1.0).unwrap())
        .collect();
    let mu = [0.1, 0.2, 0.3, 0.4];
    let table: Vec<Vec<f64>> =
        weights.iter().map(|p| points.iter().map(|z| loss(&spec, p, z).unwrap()).collect()).collect();
    let temps = TemperatureVector::new(vec![0.05, 0.02]).unwrap();
    let prior1 = FiniteJoint::uniform(vec![2]).unwrap();
    let prior2 = FiniteJoint::uniform(vec![2, 2]).unwrap();
    let n = 2;
    let mut joint = Vec::new();
    for s0 in 0..4 {
        for s1 in 0..4 {
            let risk: Vec<f64> = table.iter().map(|row| (row[s0] + row[s1]) / n as f64).collect();
            let problem = build_twisted_problem(vec![prior1.clone(), prior2.clone()], &temps, &risk).unwrap();
            let post = mt_solve(&problem).unwrap().joint;
            joint.extend(post.probs().iter().map(|p| mu[s0] * mu[s1] * p));
        }
    }
    let mi_terms = exact_mi_report(&FiniteJoint::new(vec![16, 2, 2], joint).unwrap()).unwrap();
    let c = constants(&spec);
    DiscretePipeline {
        n,
        l: c.l,
        m: c.m,
        r: spec.input_radius(),
        betas: (1..=2).map(|k| beta(&alphas, k).unwrap()).collect(),
        mi_terms,
        // uniform priors: −ln Q⁽ᵏ⁾(ŵ) = k ln 2
        kl_terms: vec![2f64.ln(), 2.0 * 2f64.ln()],
    }
}
