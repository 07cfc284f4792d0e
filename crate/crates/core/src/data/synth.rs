use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{forward_batch, Dataset, NetParams, NetSpec};
use crate::sampler::rng::chain_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Standard normal coordinates projected onto the `R`-ball.
    Gaussian,
    /// All-zero inputs: every net in a ReLU family gives the same output.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    /// Uniform random one-hot classes.
    Random,
    /// The outputs of a teacher net, which then has zero empirical risk.
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub inputs: InputKind,
    pub labels: LabelKind,
    pub input_radius: f64,
}

/// Stream id reserved for dataset generation, away from sampler chains.
const DATA_STREAM: u64 = 0xDA7A;

/// Reproducible dataset; `teacher` is required for [`LabelKind::Teacher`].
pub fn synth_dataset(spec: &SynthSpec, teacher: Option<(&NetSpec, &NetParams)>) -> Result<Dataset> {
    if spec.n == 0 || spec.input_dim == 0 || spec.num_classes == 0 {
        return Err(Error::domain("n, input_dim and num_classes must be >= 1"));
    }
    if !(spec.input_radius > 0.0) {
        return Err(Error::domain("input radius must be > 0"));
    }
    let mut rng = chain_rng(spec.seed, DATA_STREAM);
    let mut inputs = match spec.inputs {
        InputKind::Gaussian => DMatrix::from_fn(spec.input_dim, spec.n, |_, _| rng.sample::<f64, _>(StandardNormal)),
        InputKind::Zero => DMatrix::zeros(spec.input_dim, spec.n),
    };
    for mut col in inputs.column_iter_mut() {
        let norm = col.norm();
        if norm > spec.input_radius {
            col *= spec.input_radius / norm;
        }
    }
    match spec.labels {
        LabelKind::Random => {
            let classes: Vec<u8> = (0..spec.n).map(|_| rng.random_range(0..spec.num_classes) as u8).collect();
            Dataset::from_classes(inputs, classes, spec.num_classes)
        }
        LabelKind::Teacher => {
            let (net, params) = teacher.ok_or(Error::MissingInput("teacher"))?;
            if net.output_dim() != spec.num_classes {
                return Err(Error::dim(format!("teacher outputs {} values for {} classes", net.output_dim(), spec.num_classes)));
            }
            let labels = forward_batch(net, params, &inputs)?;
            Dataset::new(inputs, labels)
        }
    }
}

/// Perturbs every reference by a random direction of Frobenius norm
/// `fraction · α_k‖M_k‖₂`, which keeps each layer inside its ball.
pub fn random_teacher(spec: &NetSpec, seed: u64, fraction: f64) -> NetParams {
    let mut rng = chain_rng(seed, DATA_STREAM + 1);
    let weights = spec
        .layers()
        .iter()
        .map(|l| {
            let g = DMatrix::from_fn(l.out_dim(), l.in_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let scale = fraction.clamp(0.0, 1.0) * l.max_deviation() / g.norm().max(f64::MIN_POSITIVE);
            l.reference() + g * scale
        })
        .collect();
    NetParams::new(weights)
}
