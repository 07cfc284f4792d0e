use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metropolis::{GaussianWalk, Proposal};
use super::multilevel::TwoLevelModel;
use crate::error::{Error, Result};
use crate::nnet::{apply_output, in_ball, mean_squared_distance, Dataset, LayerSpec, NetSpec};

/// Per-layer prior restricted to the layer's ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerPrior {
    /// Uniform over the ball.
    Flat,
    /// Isotropic Gaussian centred on the reference, truncated to the ball.
    Gaussian { std: f64 },
}

impl LayerPrior {
    fn log_density(&self, w: &DMatrix<f64>, layer: &LayerSpec) -> f64 {
        // dims are fixed by construction, so only membership can fail
        if !in_ball(w, layer).unwrap_or(false) {
            return f64::NEG_INFINITY;
        }
        match *self {
            LayerPrior::Flat => 0.0,
            LayerPrior::Gaussian { std } => -(w - layer.reference()).norm_squared() / (2.0 * std * std),
        }
    }
}

/// A two-layer net on a fixed training set, seen as a two-level model:
/// `w₁ = W_1`, `w₂ = W_2`, and the hidden activations `ReLU(W_1 X)` are
/// cached per `W_1`.
pub struct TwoLayerNet<'a> {
    spec: &'a NetSpec,
    data: &'a Dataset,
    priors: [LayerPrior; 2],
    proposals: [GaussianWalk; 2],
}

impl<'a> TwoLayerNet<'a> {
    pub fn new(spec: &'a NetSpec, data: &'a Dataset, priors: [LayerPrior; 2], proposal_scales: [f64; 2]) -> Result<Self> {
        if spec.depth() != 2 {
            return Err(Error::Config(format!("two-level sampling needs a 2-layer net, got {} layers", spec.depth())));
        }
        if data.input_dim() != spec.input_dim() || data.label_dim() != spec.output_dim() {
            return Err(Error::dim(format!(
                "dataset is {}→{}, net is {}→{}",
                data.input_dim(),
                data.label_dim(),
                spec.input_dim(),
                spec.output_dim()
            )));
        }
        if proposal_scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("proposal scales must be finite and > 0".into()));
        }
        for p in &priors {
            if let LayerPrior::Gaussian { std } = p {
                if !(*std > 0.0) {
                    return Err(Error::Config("Gaussian prior std must be > 0".into()));
                }
            }
        }
        Ok(Self {
            spec,
            data,
            priors,
            proposals: proposal_scales.map(|scale| GaussianWalk { scale }),
        })
    }

    pub fn spec(&self) -> &NetSpec {
        self.spec
    }
}

impl TwoLevelModel for TwoLayerNet<'_> {
    type First = DMatrix<f64>;
    type Second = DMatrix<f64>;
    type Conditioned = DMatrix<f64>;

    fn condition(&self, w1: &DMatrix<f64>) -> DMatrix<f64> {
        let mut h = w1 * self.data.inputs();
        h.apply(|v| *v = v.max(0.0));
        h
    }

    fn risk(&self, hidden: &DMatrix<f64>, w2: &DMatrix<f64>) -> f64 {
        let mut out = w2 * hidden;
        apply_output(self.spec.output(), &mut out);
        mean_squared_distance(&out, self.data.labels())
    }

    fn log_prior_first(&self, w1: &DMatrix<f64>) -> f64 {
        self.priors[0].log_density(w1, &self.spec.layers()[0])
    }

    fn log_prior_second(&self, w2: &DMatrix<f64>) -> f64 {
        self.priors[1].log_density(w2, &self.spec.layers()[1])
    }

    fn propose_first<R: Rng + ?Sized>(&self, w1: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        self.proposals[0].propose(w1, rng)
    }

    fn propose_second<R: Rng + ?Sized>(&self, w2: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        self.proposals[1].propose(w2, rng)
    }
}
