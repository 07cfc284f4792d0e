use super::joint::prefix_marginal;
use super::{Conditional, FiniteDistribution, FiniteJoint, TemperatureVector};
use crate::error::{Error, Result};
use crate::numeric;

fn same_support(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::dim(format!(
            "support sizes {} and {} differ",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `Σ p ln(p/q)` over raw slices, with `0·ln(0/q) = 0` and `+inf` when
/// `p_i > 0 = q_i`.
pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi.ln() - qi.ln());
    }
    total.max(0.0)
}

/// Relative entropy `D(p‖q)` in nats.
pub fn relative_entropy(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    same_support(p.probs(), q.probs())?;
    Ok(kl_slices(p.probs(), q.probs()))
}

/// `Σ_x p_x(x) · D(p_cond(·|x) ‖ q_cond(·|x))`.
pub fn conditional_relative_entropy(
    p_cond: &Conditional,
    q_cond: &Conditional,
    p_x: &FiniteDistribution,
) -> Result<f64> {
    if p_cond.contexts() != p_x.len() || q_cond.contexts() != p_x.len() {
        return Err(Error::dim(format!(
            "conditionals have {} and {} rows, conditioning distribution has {} atoms",
            p_cond.contexts(),
            q_cond.contexts(),
            p_x.len()
        )));
    }
    if p_cond.size() != q_cond.size() {
        return Err(Error::dim("conditionals are over different supports"));
    }
    let mut total = 0.0;
    for (x, &w) in p_x.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let d = kl_slices(p_cond.row(x), q_cond.row(x));
        if d.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += w * d;
    }
    Ok(total)
}

/// Rényi divergence of order `alpha > 0`; order 1 is the relative entropy.
pub fn renyi_divergence(p: &FiniteDistribution, q: &FiniteDistribution, alpha: f64) -> Result<f64> {
    same_support(p.probs(), q.probs())?;
    renyi_slices(p.probs(), q.probs(), alpha)
}

pub(crate) fn renyi_slices(p: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("Rényi order must be finite and > 0, got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(kl_slices(p, q));
    }
    let mut terms = Vec::with_capacity(p.len());
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            if alpha > 1.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        terms.push(alpha * pi.ln() + (1.0 - alpha) * qi.ln());
    }
    let lse = numeric::log_sum_exp(&terms);
    if lse == f64::NEG_INFINITY {
        // disjoint supports with alpha < 1
        return Ok(f64::INFINITY);
    }
    Ok((lse / (alpha - 1.0)).max(0.0))
}

/// Tilted distribution `(p, q)_λ ∝ p^λ q^{1-λ}`, computed in log space.
///
/// `λ = 1` returns `p` and `λ = 0` returns `q`; for `λ ∈ (0, 1)` mutually
/// singular inputs are rejected.
pub fn tilt(p: &FiniteDistribution, q: &FiniteDistribution, lambda: f64) -> Result<FiniteDistribution> {
    same_support(p.probs(), q.probs())?;
    tilt_slices(p.probs(), q.probs(), lambda).map(FiniteDistribution::from_vec_unchecked)
}

pub(crate) fn tilt_slices(p: &[f64], q: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("tilting weight must lie in [0, 1], got {lambda}")));
    }
    if lambda == 1.0 {
        return Ok(p.to_vec());
    }
    if lambda == 0.0 {
        return Ok(q.to_vec());
    }
    let log_w: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| {
            if pi == 0.0 || qi == 0.0 {
                f64::NEG_INFINITY
            } else {
                lambda * pi.ln() + (1.0 - lambda) * qi.ln()
            }
        })
        .collect();
    numeric::normalize_log_weights(&log_w).ok_or(Error::TiltUndefined)
}

/// `Σ_i a_i · D(P_{X_1…X_i} ‖ Q_{X_1…X_i})`.
pub fn multilevel_relative_entropy(p: &FiniteJoint, q: &FiniteJoint, a: &TemperatureVector) -> Result<f64> {
    if p.axis_sizes() != q.axis_sizes() {
        return Err(Error::dim(format!(
            "axis sizes {:?} and {:?} differ",
            p.axis_sizes(),
            q.axis_sizes()
        )));
    }
    if a.len() != p.ndim() {
        return Err(Error::dim(format!(
            "{} coefficients for a {}-axis joint",
            a.len(),
            p.ndim()
        )));
    }
    let mut total = 0.0;
    for (i, &ai) in a.as_slice().iter().enumerate() {
        let pm = prefix_marginal(p.probs(), p.axis_sizes(), i + 1);
        let qm = prefix_marginal(q.probs(), q.axis_sizes(), i + 1);
        total += ai * kl_slices(&pm, &qm);
    }
    Ok(total)
}

/// `I(X;Y) = D(P_XY ‖ P_X ⊗ P_Y)` for a two-axis joint.
pub fn mutual_information(j: &FiniteJoint) -> Result<f64> {
    if j.ndim() != 2 {
        return Err(Error::dim(format!(
            "mutual information needs 2 axes, joint has {}",
            j.ndim()
        )));
    }
    let (nx, ny) = (j.axis_sizes()[0], j.axis_sizes()[1]);
    let px: Vec<f64> = j.probs().chunks_exact(ny).map(|r| r.iter().sum()).collect();
    let mut py = vec![0.0; ny];
    for row in j.probs().chunks_exact(ny) {
        py.iter_mut().zip(row).for_each(|(acc, v)| *acc += v);
    }
    let mut total = 0.0;
    for x in 0..nx {
        for y in 0..ny {
            let pxy = j.probs()[x * ny + y];
            if pxy > 0.0 {
                total += pxy * (pxy.ln() - px[x].ln() - py[y].ln());
            }
        }
    }
    Ok(total.max(0.0))
}
