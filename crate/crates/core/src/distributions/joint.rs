use serde::{Deserialize, Serialize};

use super::finite::check_probability_vector;
use super::{FiniteDistribution, NORMALIZATION_TOL};
use crate::error::{Error, Result};
use crate::numeric;

/// Dense probability tensor over `axis_sizes[0] × … × axis_sizes[d-1]`,
/// stored row-major (last axis varies fastest).
///
/// Axis `i` plays the role of the `i`-th level `X_{i+1}`; a prefix marginal
/// over the first `k` axes is the distribution of `(X_1, …, X_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteJoint {
    axis_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl FiniteJoint {
    pub fn new(axis_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        check_shape(&axis_sizes, probs.len())?;
        check_probability_vector(&probs)?;
        Ok(Self { axis_sizes, probs })
    }

    pub fn from_weights(axis_sizes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        check_shape(&axis_sizes, weights.len())?;
        let d = FiniteDistribution::from_weights(weights)?;
        Ok(Self {
            axis_sizes,
            probs: d.into_vec(),
        })
    }

    pub fn from_log_weights(axis_sizes: Vec<usize>, log_w: &[f64]) -> Result<Self> {
        check_shape(&axis_sizes, log_w.len())?;
        let d = FiniteDistribution::from_log_weights(log_w)?;
        Ok(Self {
            axis_sizes,
            probs: d.into_vec(),
        })
    }

    /// One-axis joint holding `d`.
    pub fn from_distribution(d: &FiniteDistribution) -> Self {
        Self {
            axis_sizes: vec![d.len()],
            probs: d.probs().to_vec(),
        }
    }

    /// Uniform joint over the given axes.
    pub fn uniform(axis_sizes: Vec<usize>) -> Result<Self> {
        let cells = check_shape(&axis_sizes, None)?;
        Ok(Self {
            axis_sizes,
            probs: vec![1.0 / cells as f64; cells],
        })
    }

    /// Independent extension: `self ⊗ next`, appending one axis.
    pub fn extend_independent(&self, next: &FiniteDistribution) -> Self {
        let mut probs = Vec::with_capacity(self.probs.len() * next.len());
        for &p in &self.probs {
            probs.extend(next.probs().iter().map(|q| p * q));
        }
        let mut axis_sizes = self.axis_sizes.clone();
        axis_sizes.push(next.len());
        Self { axis_sizes, probs }
    }

    /// Product of independent one-dimensional factors.
    pub fn product(factors: &[FiniteDistribution]) -> Result<Self> {
        let (first, rest) = factors
            .split_first()
            .ok_or_else(|| Error::dim("product of zero factors"))?;
        Ok(rest
            .iter()
            .fold(Self::from_distribution(first), |acc, f| acc.extend_independent(f)))
    }

    pub(crate) fn from_parts_unchecked(axis_sizes: Vec<usize>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(axis_sizes.iter().product::<usize>(), probs.len());
        Self { axis_sizes, probs }
    }

    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    /// Number of axes `d`.
    pub fn ndim(&self) -> usize {
        self.axis_sizes.len()
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.ndim() {
            return Err(Error::dim(format!(
                "index has {} coordinates, joint has {} axes",
                index.len(),
                self.ndim()
            )));
        }
        index
            .iter()
            .zip(&self.axis_sizes)
            .try_fold(0usize, |acc, (&i, &n)| {
                if i < n {
                    Ok(acc * n + i)
                } else {
                    Err(Error::dim(format!("coordinate {i} outside axis of size {n}")))
                }
            })
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.probs[self.flat_index(index)?])
    }

    /// Sums out axes `k+1 … d`, keeping the first `k`.
    pub fn marginalize(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.ndim() {
            return Err(Error::dim(format!(
                "cannot keep {k} axes of a {}-axis joint",
                self.ndim()
            )));
        }
        Ok(Self {
            axis_sizes: self.axis_sizes[..k].to_vec(),
            probs: prefix_marginal(&self.probs, &self.axis_sizes, k),
        })
    }

    /// Flattened view as a distribution over all cells.
    pub fn to_distribution(&self) -> FiniteDistribution {
        FiniteDistribution::from_vec_unchecked(self.probs.clone())
    }

    /// Same cells reinterpreted with a different axis layout.
    pub fn reshape(&self, axis_sizes: Vec<usize>) -> Result<Self> {
        check_shape(&axis_sizes, self.probs.len())?;
        Ok(Self {
            axis_sizes,
            probs: self.probs.clone(),
        })
    }

    pub fn total_variation(&self, other: &Self) -> Result<f64> {
        if self.axis_sizes != other.axis_sizes {
            return Err(Error::dim(format!(
                "axis sizes {:?} and {:?} differ",
                self.axis_sizes, other.axis_sizes
            )));
        }
        Ok(numeric::total_variation(&self.probs, &other.probs))
    }
}

/// Prefix marginal of a row-major tensor keeping `k` leading axes.
pub(crate) fn prefix_marginal(probs: &[f64], axis_sizes: &[usize], k: usize) -> Vec<f64> {
    let block: usize = axis_sizes[k..].iter().product();
    probs.chunks_exact(block).map(|c| c.iter().sum()).collect()
}

fn check_shape(axis_sizes: &[usize], cells: impl Into<Option<usize>>) -> Result<usize> {
    if axis_sizes.is_empty() {
        return Err(Error::dim("joint needs at least one axis"));
    }
    if axis_sizes.contains(&0) {
        return Err(Error::dim(format!("zero-sized axis in {axis_sizes:?}")));
    }
    let expected: usize = axis_sizes.iter().product();
    if let Some(cells) = cells.into() {
        if cells != expected {
            return Err(Error::dim(format!(
                "axis sizes {axis_sizes:?} need {expected} cells, got {cells}"
            )));
        }
    }
    Ok(expected)
}

/// Conditional distribution of one axis given all preceding axes, stored as
/// one probability row per (flattened) conditioning context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditional {
    contexts: usize,
    size: usize,
    table: Vec<f64>,
}

impl Conditional {
    pub fn new(contexts: usize, size: usize, table: Vec<f64>) -> Result<Self> {
        if contexts == 0 || size == 0 || table.len() != contexts * size {
            return Err(Error::dim(format!(
                "{contexts} rows of size {size} need {} entries, got {}",
                contexts * size,
                table.len()
            )));
        }
        for (i, row) in table.chunks_exact(size).enumerate() {
            check_probability_vector(row)
                .map_err(|e| Error::Invariant(format!("row {i}: {e}")))?;
        }
        Ok(Self {
            contexts,
            size,
            table,
        })
    }

    pub fn from_rows(rows: &[FiniteDistribution]) -> Result<Self> {
        let size = rows.first().map(FiniteDistribution::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::dim("conditional rows have different lengths"));
        }
        let table = rows.iter().flat_map(|r| r.probs().iter().copied()).collect();
        Self::new(rows.len(), size, table)
    }

    /// Number of conditioning contexts (rows).
    pub fn contexts(&self) -> usize {
        self.contexts
    }

    /// Size of the conditioned axis.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.table[context * self.size..(context + 1) * self.size]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// Factorizes `j` into `S_{X_1}, S_{X_2|X_1}, …, S_{X_d|X_1…X_{d-1}}`.
///
/// Rows for conditioning contexts with zero marginal mass are uniform.
pub fn chain_factorize(j: &FiniteJoint) -> Vec<Conditional> {
    let sizes = j.axis_sizes();
    let mut factors = Vec::with_capacity(sizes.len());
    let mut parent = vec![1.0];
    for k in 1..=sizes.len() {
        let current = prefix_marginal(j.probs(), sizes, k);
        factors.push(conditional_from_marginals(&parent, &current, sizes[k - 1]));
        parent = current;
    }
    factors
}

/// Conditional of the last axis of `current` given the leading axes, whose
/// marginal is `parent`.
pub(crate) fn conditional_from_marginals(parent: &[f64], current: &[f64], size: usize) -> Conditional {
    let mut table = Vec::with_capacity(current.len());
    for (ctx, &mass) in parent.iter().enumerate() {
        let cells = &current[ctx * size..(ctx + 1) * size];
        let row_total: f64 = cells.iter().sum();
        if mass > 0.0 && row_total > 0.0 {
            table.extend(cells.iter().map(|c| c / row_total));
        } else {
            table.extend(std::iter::repeat_n(1.0 / size as f64, size));
        }
    }
    Conditional {
        contexts: parent.len(),
        size,
        table,
    }
}

/// Multiplies a chain of conditionals back into a joint.
pub fn recompose(factors: &[Conditional]) -> Result<FiniteJoint> {
    let first = factors
        .first()
        .ok_or_else(|| Error::dim("cannot recompose an empty factor chain"))?;
    if first.contexts != 1 {
        return Err(Error::dim("first factor must be unconditional"));
    }
    let mut probs = first.table.clone();
    let mut axis_sizes = vec![first.size];
    for f in &factors[1..] {
        if f.contexts != probs.len() {
            return Err(Error::dim(format!(
                "factor has {} contexts, preceding joint has {} cells",
                f.contexts,
                probs.len()
            )));
        }
        probs = probs
            .iter()
            .enumerate()
            .flat_map(|(ctx, &p)| f.row(ctx).iter().map(move |q| p * q))
            .collect();
        axis_sizes.push(f.size);
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL * probs.len() as f64 {
        return Err(Error::Invariant(format!("recomposed mass {total}")));
    }
    Ok(FiniteJoint { axis_sizes, probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joint_2x3() -> FiniteJoint {
        FiniteJoint::from_weights(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn marginalize_keeps_prefix() {
        let j = joint_2x3();
        let m = j.marginalize(1).unwrap();
        // row sums computed by hand: (1+2+3)/21, (4+5+6)/21
        assert!((m.probs()[0] - 6.0 / 21.0).abs() < 1e-15);
        assert!((m.probs()[1] - 15.0 / 21.0).abs() < 1e-15);
        assert_eq!(j.marginalize(2).unwrap(), j);
        assert!(j.marginalize(0).is_err());
        assert!(j.marginalize(3).is_err());
    }

    #[test]
    fn product_marginal_is_factor() {
        let p = FiniteDistribution::new(vec![0.3, 0.7]).unwrap();
        let q = FiniteDistribution::new(vec![0.1, 0.2, 0.7]).unwrap();
        let j = FiniteJoint::product(&[p.clone(), q.clone()]).unwrap();
        let m = j.marginalize(1).unwrap();
        for (a, b) in m.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        let factors = chain_factorize(&j);
        for ctx in 0..2 {
            for (a, b) in factors[1].row(ctx).iter().zip(q.probs()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn factorize_then_recompose() {
        let j = joint_2x3();
        let back = recompose(&chain_factorize(&j)).unwrap();
        for (a, b) in back.probs().iter().zip(j.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = FiniteJoint::from_weights(vec![3], vec![1.0, 1.0, 2.0]).unwrap();
        let f = chain_factorize(&single);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].row(0), single.probs());
    }

    #[test]
    fn zero_mass_context_gets_uniform_row() {
        let j = FiniteJoint::new(vec![2, 2], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let f = chain_factorize(&j);
        assert_eq!(f[1].row(1), &[0.5, 0.5]);
        assert_eq!(recompose(&f).unwrap(), j);
    }

    #[test]
    fn conditional_rows_validated() {
        assert!(Conditional::new(2, 2, vec![0.5, 0.5, 0.6, 0.6]).is_err());
        assert!(Conditional::new(2, 2, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn shape_errors() {
        assert!(FiniteJoint::new(vec![2, 2], vec![0.25; 3]).is_err());
        assert!(FiniteJoint::new(vec![], vec![]).is_err());
        let j = joint_2x3();
        assert!(j.get(&[1, 3]).is_err());
        assert_eq!(j.flat_index(&[1, 2]).unwrap(), 5);
    }
}
