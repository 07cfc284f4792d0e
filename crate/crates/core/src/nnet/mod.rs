//! Feed-forward ReLU nets whose layers live in spectral-norm balls
//! `‖W_k − M_k‖₂ ≤ α_k‖M_k‖₂` around fixed reference matrices.

mod spectral;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use spectral::{spectral_norm, spectral_norm_default, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Slack added to every ball-membership and norm check.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Softmax,
    Identity,
}

/// One constrained layer: reference matrix `M_k` (out × in) and radius `α_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    reference: DMatrix<f64>,
    radius: f64,
    reference_norm: f64,
}

impl LayerSpec {
    pub fn new(reference: DMatrix<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::domain(format!("layer radius must be finite and > 0, got {radius}")));
        }
        if reference.nrows() == 0 || reference.ncols() == 0 {
            return Err(Error::dim("reference matrix has a zero dimension"));
        }
        let reference_norm = spectral_norm_default(&reference);
        if !(reference_norm > 0.0) {
            return Err(Error::domain("reference matrix must have positive spectral norm"));
        }
        Ok(Self { reference, radius, reference_norm })
    }

    /// `I_{out×in}`: ones on the main diagonal, zeros elsewhere.
    pub fn identity(out_dim: usize, in_dim: usize, radius: f64) -> Result<Self> {
        Self::new(DMatrix::identity(out_dim, in_dim), radius)
    }

    pub fn in_dim(&self) -> usize {
        self.reference.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.reference.nrows()
    }

    pub fn reference(&self) -> &DMatrix<f64> {
        &self.reference
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn reference_norm(&self) -> f64 {
        self.reference_norm
    }

    /// Largest admissible deviation `α_k‖M_k‖₂`.
    pub fn max_deviation(&self) -> f64 {
        self.radius * self.reference_norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    layers: Vec<LayerSpec>,
    output: OutputActivation,
    input_radius: f64,
}

impl NetSpec {
    pub fn new(layers: Vec<LayerSpec>, output: OutputActivation, input_radius: f64) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::dim(format!("a net needs at least 2 layers, got {}", layers.len())));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    k + 1,
                    pair[0].out_dim(),
                    k + 2,
                    pair[1].in_dim()
                )));
            }
        }
        if !(input_radius > 0.0 && input_radius.is_finite()) {
            return Err(Error::domain(format!("input radius must be finite and > 0, got {input_radius}")));
        }
        Ok(Self { layers, output, input_radius })
    }

    /// Identity-pattern references for widths `dims = (δ_0, …, δ_d)`.
    pub fn identity(dims: &[usize], radii: &[f64], output: OutputActivation, input_radius: f64) -> Result<Self> {
        if dims.len() != radii.len() + 1 {
            return Err(Error::dim(format!("{} widths need {} radii, got {}", dims.len(), dims.len().saturating_sub(1), radii.len())));
        }
        let layers = dims
            .windows(2)
            .zip(radii)
            .map(|(w, &r)| LayerSpec::identity(w[1], w[0], r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, output, input_radius)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn input_radius(&self) -> f64 {
        self.input_radius
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.radius).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub weights: Vec<DMatrix<f64>>,
}

impl NetParams {
    pub fn new(weights: Vec<DMatrix<f64>>) -> Self {
        Self { weights }
    }

    /// The centre of every ball: `W_k = M_k`.
    pub fn references(spec: &NetSpec) -> Self {
        Self::new(spec.layers.iter().map(|l| l.reference.clone()).collect())
    }

    pub fn check_dims(&self, spec: &NetSpec) -> Result<()> {
        if self.weights.len() != spec.depth() {
            return Err(Error::dim(format!("{} weight matrices for a {}-layer net", self.weights.len(), spec.depth())));
        }
        for (k, (w, l)) in self.weights.iter().zip(&spec.layers).enumerate() {
            if w.shape() != l.reference.shape() {
                return Err(Error::dim(format!(
                    "layer {} weight is {:?}, expected {:?}",
                    k + 1,
                    w.shape(),
                    l.reference.shape()
                )));
            }
        }
        Ok(())
    }

    /// Dimensions match and every layer sits in its ball.
    pub fn satisfies(&self, spec: &NetSpec) -> Result<bool> {
        self.check_dims(spec)?;
        for (w, l) in self.weights.iter().zip(&spec.layers) {
            if !in_ball(w, l)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
}

impl Example {
    /// Checks `|x|₂ ≤ R` and `|y|₂ ≤ 1` (one-hot labels pass trivially).
    pub fn new(x: DVector<f64>, y: DVector<f64>, input_radius: f64) -> Result<Self> {
        if x.norm() > input_radius + NORM_TOLERANCE {
            return Err(Error::domain(format!("|x| = {} exceeds input radius {input_radius}", x.norm())));
        }
        if y.norm() > 1.0 + NORM_TOLERANCE {
            return Err(Error::domain(format!("|y| = {} exceeds 1", y.norm())));
        }
        Ok(Self { x, y })
    }
}

/// Column-major dataset: example `i` is column `i` of `inputs` and `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: DMatrix<f64>,
    labels: DMatrix<f64>,
    classes: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, labels: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != labels.ncols() {
            return Err(Error::dim(format!("{} inputs but {} labels", inputs.ncols(), labels.ncols())));
        }
        if inputs.ncols() == 0 {
            return Err(Error::domain("dataset is empty"));
        }
        if let Some(i) = labels.column_iter().position(|c| c.norm() > 1.0 + NORM_TOLERANCE) {
            return Err(Error::domain(format!("label {i} has norm above 1")));
        }
        Ok(Self { inputs, labels, classes: None })
    }

    /// One-hot labels from class indices.
    pub fn from_classes(inputs: DMatrix<f64>, classes: Vec<u8>, num_classes: usize) -> Result<Self> {
        if let Some(&c) = classes.iter().find(|&&c| c as usize >= num_classes) {
            return Err(Error::domain(format!("class {c} out of range for {num_classes} classes")));
        }
        let labels = DMatrix::from_fn(num_classes, classes.len(), |r, c| f64::from(classes[c] as usize == r));
        let mut ds = Self::new(inputs, labels)?;
        ds.classes = Some(classes);
        Ok(ds)
    }

    pub fn from_examples(examples: &[Example]) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::domain("dataset is empty"))?;
        let (dx, dy) = (first.x.len(), first.y.len());
        if examples.iter().any(|e| e.x.len() != dx || e.y.len() != dy) {
            return Err(Error::dim("examples have inconsistent dimensions"));
        }
        let inputs = DMatrix::from_fn(dx, examples.len(), |r, c| examples[c].x[r]);
        let labels = DMatrix::from_fn(dy, examples.len(), |r, c| examples[c].y[r]);
        Self::new(inputs, labels)
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn label_dim(&self) -> usize {
        self.labels.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn classes(&self) -> Option<&[u8]> {
        self.classes.as_deref()
    }

    pub fn example(&self, i: usize) -> Example {
        Example { x: self.inputs.column(i).into_owned(), y: self.labels.column(i).into_owned() }
    }

    /// Largest input norm, for checking against `R`.
    pub fn max_input_norm(&self) -> f64 {
        self.inputs.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// The first `n` examples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len()).max(1);
        Self {
            inputs: self.inputs.columns(0, n).into_owned(),
            labels: self.labels.columns(0, n).into_owned(),
            classes: self.classes.as_ref().map(|c| c[..n].to_vec()),
        }
    }
}

fn relu_in_place(m: &mut DMatrix<f64>) {
    m.apply(|v| *v = v.max(0.0));
}

/// Column-wise soft-max with the usual max shift.
pub fn softmax_columns(z: &mut DMatrix<f64>) {
    for mut col in z.column_iter_mut() {
        let m = col.max();
        col.apply(|v| *v = (*v - m).exp());
        let s = col.sum();
        col /= s;
    }
}

pub(crate) fn apply_output(output: OutputActivation, z: &mut DMatrix<f64>) {
    if output == OutputActivation::Softmax {
        softmax_columns(z);
    }
}

/// Mean over columns of `|pred − labels|₂²`.
pub(crate) fn mean_squared_distance(pred: &DMatrix<f64>, labels: &DMatrix<f64>) -> f64 {
    let n = pred.ncols() as f64;
    pred.iter().zip(labels.iter()).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n
}

fn forward_weights(weights: &[DMatrix<f64>], output: OutputActivation, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut h = x.clone();
    let last = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        h = w * h;
        if k < last {
            relu_in_place(&mut h);
        }
    }
    apply_output(output, &mut h);
    h
}

/// `φ_o(W_d φ(⋯ φ(W_1 x) ⋯))` for every column of `xs`.
pub fn forward_batch(spec: &NetSpec, params: &NetParams, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    params.check_dims(spec)?;
    if xs.nrows() != spec.input_dim() {
        return Err(Error::dim(format!("inputs have {} rows, net expects {}", xs.nrows(), spec.input_dim())));
    }
    Ok(forward_weights(&params.weights, spec.output, xs))
}

pub fn forward(spec: &NetSpec, params: &NetParams, x: &DVector<f64>) -> Result<DVector<f64>> {
    let xs = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let out = forward_batch(spec, params, &xs)?;
    Ok(out.column(0).into_owned())
}

/// Squared ℓ2 loss `|h_w(x) − y|₂²`.
pub fn loss(spec: &NetSpec, params: &NetParams, example: &Example) -> Result<f64> {
    if example.y.len() != spec.output_dim() {
        return Err(Error::dim(format!("label has {} entries, net outputs {}", example.y.len(), spec.output_dim())));
    }
    let h = forward(spec, params, &example.x)?;
    Ok((h - &example.y).norm_squared())
}

/// Mean squared ℓ2 loss over the dataset.
pub fn empirical_risk(spec: &NetSpec, params: &NetParams, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("empirical risk of an empty dataset"));
    }
    if data.label_dim() != spec.output_dim() {
        return Err(Error::dim(format!("labels have {} entries, net outputs {}", data.label_dim(), spec.output_dim())));
    }
    let pred = forward_batch(spec, params, &data.inputs)?;
    Ok(mean_squared_distance(&pred, &data.labels))
}

fn argmax(col: nalgebra::DVectorView<'_, f64>) -> usize {
    col.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Fraction of examples whose arg-max output differs from the arg-max label.
pub fn misclassification_rate(spec: &NetSpec, params: &NetParams, data: &Dataset) -> Result<f64> {
    let pred = forward_batch(spec, params, &data.inputs)?;
    Ok(misclassified(&pred, data))
}

pub(crate) fn misclassified(pred: &DMatrix<f64>, data: &Dataset) -> f64 {
    let wrong = pred
        .column_iter()
        .zip(data.labels.column_iter())
        .filter(|(p, y)| argmax(p.as_view()) != argmax(y.as_view()))
        .count();
    wrong as f64 / pred.ncols() as f64
}

/// `‖W − M_k‖₂ ≤ α_k‖M_k‖₂` up to [`NORM_TOLERANCE`].
pub fn in_ball(w: &DMatrix<f64>, layer: &LayerSpec) -> Result<bool> {
    if w.shape() != layer.reference.shape() {
        return Err(Error::dim(format!("weight is {:?}, layer expects {:?}", w.shape(), layer.reference.shape())));
    }
    let diff = w - &layer.reference;
    let limit = layer.max_deviation() + NORM_TOLERANCE;
    // the Frobenius norm dominates the spectral norm
    if diff.norm() <= limit {
        return Ok(true);
    }
    Ok(spectral_norm_default(&diff) <= limit)
}

/// `β_k = α_k · exp(α_1 + … + α_{k−1})`, with `k` counted from 1.
pub fn beta(alphas: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > alphas.len() {
        return Err(Error::domain(format!("level {k} outside 1..={}", alphas.len())));
    }
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::domain("radii must be > 0"));
    }
    Ok(alphas[k - 1] * alphas[..k - 1].iter().sum::<f64>().exp())
}

/// Constants entering the chained bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetConstants {
    /// `Π ‖M_j‖₂`
    pub m: f64,
    /// Lipschitz constant of the loss in the net output.
    pub l: f64,
    /// `L·M·R·√2`
    pub c: f64,
}

pub fn constants(spec: &NetSpec) -> NetConstants {
    let m: f64 = spec.layers.iter().map(|l| l.reference_norm).product();
    let r = spec.input_radius;
    let l = match spec.output {
        OutputActivation::Softmax => 4.0,
        OutputActivation::Identity => {
            let sum_alpha: f64 = spec.layers.iter().map(|l| l.radius).sum();
            2.0 + 2.0 * sum_alpha.exp() * m * r
        }
    };
    NetConstants { m, l, c: l * m * r * std::f64::consts::SQRT_2 }
}

/// `|h_{w₁}(x) − h_{w₂}(x)|₂` for two nets sharing `W_1 … W_{k−1}`, with
/// layer `k` set to `w_k` resp. `M_k` and references beyond `k`.
pub fn link_gap(spec: &NetSpec, shared_prefix: &[DMatrix<f64>], w_k: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let k = shared_prefix.len() + 1;
    if k > spec.depth() {
        return Err(Error::dim(format!("prefix of {} layers for a {}-layer net", shared_prefix.len(), spec.depth())));
    }
    for (i, w) in shared_prefix.iter().chain(std::iter::once(w_k)).enumerate() {
        if !in_ball(w, &spec.layers[i])? {
            return Err(Error::Precondition(format!("layer {} lies outside its ball", i + 1)));
        }
    }
    let mut first: Vec<DMatrix<f64>> = shared_prefix.to_vec();
    first.push(w_k.clone());
    let mut second: Vec<DMatrix<f64>> = shared_prefix.to_vec();
    second.push(spec.layers[k - 1].reference.clone());
    for l in &spec.layers[k..] {
        first.push(l.reference.clone());
        second.push(l.reference.clone());
    }
    let a = forward(spec, &NetParams::new(first), x)?;
    let b = forward(spec, &NetParams::new(second), x)?;
    Ok((a - b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(output: OutputActivation) -> NetSpec {
        NetSpec::identity(&[2, 2, 2], &[0.5, 0.5], output, 1.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(NetSpec::identity(&[2, 2], &[0.5], OutputActivation::Softmax, 1.0).is_err());
        let l1 = LayerSpec::identity(3, 2, 0.1).unwrap();
        let l2 = LayerSpec::identity(2, 4, 0.1).unwrap();
        assert!(matches!(NetSpec::new(vec![l1, l2], OutputActivation::Identity, 1.0), Err(Error::Dimension(_))));
        assert!(LayerSpec::new(DMatrix::zeros(2, 2), 1.0).is_err());
        assert!(LayerSpec::identity(2, 2, 0.0).is_err());
    }

    #[test]
    fn identity_net_is_transparent_on_nonnegative_inputs() {
        let spec = small(OutputActivation::Identity);
        let p = NetParams::references(&spec);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(forward(&spec, &p, &x).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_uniform_softmax() {
        let spec = NetSpec::identity(&[3, 4, 10], &[1.0, 1.0], OutputActivation::Softmax, 1.0).unwrap();
        let p = NetParams::references(&spec);
        let h = forward(&spec, &p, &DVector::zeros(3)).unwrap();
        assert!(h.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        let mut y = DVector::zeros(10);
        y[3] = 1.0;
        let l = loss(&spec, &p, &Example { x: DVector::zeros(3), y }).unwrap();
        assert!((l - 0.9).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let spec = small(OutputActivation::Softmax);
        let p = NetParams::references(&spec);
        assert!(matches!(forward(&spec, &p, &DVector::zeros(3)), Err(Error::Dimension(_))));
        let bad = NetParams::new(vec![DMatrix::identity(2, 2)]);
        assert!(forward(&spec, &bad, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn ball_membership() {
        let layer = LayerSpec::identity(3, 3, 0.25).unwrap();
        assert!(in_ball(&DMatrix::identity(3, 3), &layer).unwrap());
        let far = DMatrix::identity(3, 3) * 1.5;
        assert!(!in_ball(&far, &layer).unwrap());
        // exactly on the boundary
        let edge = DMatrix::identity(3, 3) * 1.25;
        assert!(in_ball(&edge, &layer).unwrap());
        assert!(in_ball(&DMatrix::zeros(2, 3), &layer).is_err());
    }

    #[test]
    fn beta_values() {
        assert_eq!(beta(&[0.3, 0.2], 1).unwrap(), 0.3);
        assert!((beta(&[0.1, 0.2], 2).unwrap() - 0.2 * 0.1f64.exp()).abs() < 1e-16);
        let ln2 = 2f64.ln();
        assert!((beta(&[ln2; 3], 3).unwrap() - 4.0 * ln2).abs() < 1e-14);
        assert!(beta(&[0.1], 0).is_err());
        assert!(beta(&[0.1], 2).is_err());
    }

    #[test]
    fn constants_for_diagonal_references() {
        let l1 = LayerSpec::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])), 0.1).unwrap();
        let l2 = LayerSpec::new(DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0])), 0.1).unwrap();
        let spec = NetSpec::new(vec![l1, l2], OutputActivation::Softmax, 1.0).unwrap();
        let c = constants(&spec);
        assert!((c.m - 6.0).abs() < 1e-9);
        assert_eq!(c.l, 4.0);
        assert!((c.c - 24.0 * std::f64::consts::SQRT_2).abs() < 1e-8);

        let tiny = NetSpec::identity(&[2, 2, 2], &[1e-9, 1e-9], OutputActivation::Identity, 3.0).unwrap();
        assert!((constants(&tiny).l - 8.0).abs() < 1e-7);
    }

    #[test]
    fn link_gap_trivial_cases() {
        let spec = small(OutputActivation::Softmax);
        let x = DVector::from_vec(vec![0.3, 0.4]);
        let w = DMatrix::identity(2, 2) * 1.2;
        assert_eq!(link_gap(&spec, &[], &DMatrix::identity(2, 2), &x).unwrap(), 0.0);
        assert_eq!(link_gap(&spec, &[], &w, &DVector::zeros(2)).unwrap(), 0.0);
        let outside = DMatrix::identity(2, 2) * 3.0;
        assert!(matches!(link_gap(&spec, &[], &outside, &x), Err(Error::Precondition(_))));
    }

    #[test]
    fn risk_averages_losses() {
        let spec = small(OutputActivation::Softmax);
        let p = NetParams::references(&spec);
        let e = Example::new(DVector::from_vec(vec![0.5, 0.1]), DVector::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        let single = Dataset::from_examples(std::slice::from_ref(&e)).unwrap();
        let twice = Dataset::from_examples(&[e.clone(), e.clone()]).unwrap();
        let l = loss(&spec, &p, &e).unwrap();
        assert!((empirical_risk(&spec, &p, &single).unwrap() - l).abs() < 1e-15);
        assert!((empirical_risk(&spec, &p, &twice).unwrap() - l).abs() < 1e-15);
    }
}
