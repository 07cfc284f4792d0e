use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Log-density up to an additive constant; `-inf` marks states outside the
/// support.
pub trait LogTarget<S> {
    fn log_density(&self, state: &S) -> f64;
}

impl<S, F: Fn(&S) -> f64> LogTarget<S> for F {
    fn log_density(&self, state: &S) -> f64 {
        self(state)
    }
}

/// Symmetric proposal kernel.
pub trait Proposal<S> {
    fn propose<R: Rng + ?Sized>(&self, current: &S, rng: &mut R) -> S;
}

/// Zero-mean isotropic Gaussian random walk with standard deviation `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianWalk {
    pub scale: f64,
}

impl Proposal<f64> for GaussianWalk {
    fn propose<R: Rng + ?Sized>(&self, current: &f64, rng: &mut R) -> f64 {
        current + self.scale * rng.sample::<f64, _>(StandardNormal)
    }
}

impl Proposal<DVector<f64>> for GaussianWalk {
    fn propose<R: Rng + ?Sized>(&self, current: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        current.map(|v| v + self.scale * rng.sample::<f64, _>(StandardNormal))
    }
}

impl Proposal<DMatrix<f64>> for GaussianWalk {
    fn propose<R: Rng + ?Sized>(&self, current: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        current.map(|v| v + self.scale * rng.sample::<f64, _>(StandardNormal))
    }
}

/// Uniform resampling over `{0, …, size − 1}` (the current state included),
/// which is symmetric and makes every finite chain irreducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformResample {
    pub size: usize,
}

impl Proposal<usize> for UniformResample {
    fn propose<R: Rng + ?Sized>(&self, _current: &usize, rng: &mut R) -> usize {
        rng.random_range(0..self.size)
    }
}

/// Accept-reject decision for a log acceptance ratio.
pub(crate) fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() <= log_ratio
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetropolisTrace<S> {
    pub states: Vec<S>,
    pub accepted: usize,
    /// Proposals with finite target density.
    pub in_support: usize,
}

impl<S> MetropolisTrace<S> {
    pub fn accept_rate(&self) -> f64 {
        self.accepted as f64 / self.states.len().max(1) as f64
    }

    pub fn in_support_rate(&self) -> f64 {
        self.in_support as f64 / self.states.len().max(1) as f64
    }
}

/// Random-walk Metropolis, calling `visit` with the state after every step.
/// Returns `(final state, accepted, in_support)`.
pub fn metropolis_visit<S, T, P, R, V>(
    target: &T,
    proposal: &P,
    init: S,
    iters: usize,
    rng: &mut R,
    mut visit: V,
) -> Result<(S, usize, usize)>
where
    S: Clone,
    T: LogTarget<S> + ?Sized,
    P: Proposal<S>,
    R: Rng + ?Sized,
    V: FnMut(&S),
{
    let mut state = init;
    let mut logp = target.log_density(&state);
    if !logp.is_finite() {
        return Err(Error::Precondition("initial state lies outside the target support".into()));
    }
    let (mut accepted, mut in_support) = (0, 0);
    for _ in 0..iters {
        let cand = proposal.propose(&state, rng);
        let logc = target.log_density(&cand);
        if logc.is_finite() {
            in_support += 1;
            if accept(logc - logp, rng) {
                state = cand;
                logp = logc;
                accepted += 1;
            }
        }
        visit(&state);
    }
    Ok((state, accepted, in_support))
}

/// Random-walk Metropolis keeping every visited state.
pub fn metropolis_chain<S, T, P, R>(target: &T, proposal: &P, init: S, iters: usize, rng: &mut R) -> Result<MetropolisTrace<S>>
where
    S: Clone,
    T: LogTarget<S> + ?Sized,
    P: Proposal<S>,
    R: Rng + ?Sized,
{
    let mut states = Vec::with_capacity(iters);
    let (_, accepted, in_support) = metropolis_visit(target, proposal, init, iters, rng, |s| states.push(s.clone()))?;
    Ok(MetropolisTrace { states, accepted, in_support })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::rng::chain_rng;

    #[test]
    fn flat_unbounded_target_always_accepts() {
        let mut rng = chain_rng(1, 0);
        let t = metropolis_chain(&|_: &f64| 0.0, &GaussianWalk { scale: 1.0 }, 0.0, 500, &mut rng).unwrap();
        assert_eq!(t.states.len(), 500);
        assert_eq!(t.accept_rate(), 1.0);
    }

    #[test]
    fn flat_box_accepts_exactly_in_box_proposals() {
        let mut rng = chain_rng(2, 0);
        let boxed = |x: &f64| if x.abs() <= 1.0 { 0.0 } else { f64::NEG_INFINITY };
        let t = metropolis_chain(&boxed, &GaussianWalk { scale: 0.8 }, 0.0, 2000, &mut rng).unwrap();
        assert_eq!(t.accepted, t.in_support);
        assert!(t.accept_rate() < 1.0);
        assert!(t.states.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn single_atom_keeps_chain_constant() {
        let mut rng = chain_rng(3, 0);
        let atom = |i: &usize| if *i == 2 { 0.0 } else { f64::NEG_INFINITY };
        let t = metropolis_chain(&atom, &UniformResample { size: 4 }, 2, 1000, &mut rng).unwrap();
        assert!(t.states.iter().all(|&s| s == 2));
    }

    #[test]
    fn init_outside_support_is_rejected() {
        let mut rng = chain_rng(4, 0);
        let atom = |i: &usize| if *i == 2 { 0.0 } else { f64::NEG_INFINITY };
        assert!(matches!(
            metropolis_chain(&atom, &UniformResample { size: 4 }, 0, 10, &mut rng),
            Err(Error::Precondition(_))
        ));
    }
}
