use std::ops::ControlFlow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metropolis::accept;
use super::rng::stream_rng;
use crate::distributions::TemperatureVector;
use crate::error::{Error, Result};
use crate::numeric::LogMeanExp;

/// A model over pairs `(w₁, w₂)` with per-level priors and an empirical risk.
///
/// `Conditioned` caches whatever depends on `w₁` alone (for a net, the hidden
/// activations) so the inner chain only pays for the second level.
pub trait TwoLevelModel {
    type First: Clone;
    type Second: Clone;
    type Conditioned;

    fn condition(&self, w1: &Self::First) -> Self::Conditioned;
    fn risk(&self, conditioned: &Self::Conditioned, w2: &Self::Second) -> f64;
    /// `ln Q̃⁽¹⁾(w₁)` up to a constant, `-inf` outside the support.
    fn log_prior_first(&self, w1: &Self::First) -> f64;
    fn log_prior_second(&self, w2: &Self::Second) -> f64;
    fn propose_first<R: Rng + ?Sized>(&self, w1: &Self::First, rng: &mut R) -> Self::First;
    fn propose_second<R: Rng + ?Sized>(&self, w2: &Self::Second, rng: &mut R) -> Self::Second;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// `(a₁, a₂)`
    pub temps: TemperatureVector,
    /// Outer iterations `T`.
    pub outer_iters: usize,
    /// Inner iterations `T′`.
    pub inner_iters: usize,
    pub seed: u64,
    /// Keep a full sample every `thin` outer iterations.
    pub thin: usize,
}

impl SamplerConfig {
    pub fn new(temps: TemperatureVector, outer_iters: usize, inner_iters: usize, seed: u64) -> Self {
        Self { temps, outer_iters, inner_iters, seed, thin: 100 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.temps.len() != 2 {
            return Err(Error::Config(format!("two-level sampling needs 2 temperatures, got {}", self.temps.len())));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Config("outer and inner iteration counts must be >= 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        Ok(())
    }
}

/// What an observer sees after outer iteration `iter`: the emitted sample
/// `(w₁⁽ᵗ⁾, w₂⁽ᵗ⁾)` and its empirical risk.
#[derive(Debug)]
pub struct StepRecord<'a, A, B> {
    pub iter: usize,
    pub w1: &'a A,
    pub w2: &'a B,
    pub risk: f64,
    pub accepted_outer: bool,
    /// Running outer acceptance rate.
    pub accept_rate_outer: f64,
    /// Inner acceptance rate of this iteration, when there is an inner chain.
    pub accept_inner: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace<A, B> {
    /// `(iteration, w₁, w₂)` every `thin` iterations.
    pub samples: Vec<(usize, A, B)>,
    pub risk_trace: Vec<f64>,
    pub accepted_outer: usize,
    pub accept_rate_outer: f64,
    pub mean_accept_inner: Option<f64>,
    pub final_state: (A, B),
    pub seed: u64,
    /// False when the observer stopped the chain early.
    pub completed: bool,
}

pub struct InnerRun<B> {
    pub samples: Vec<B>,
    pub last: B,
    pub accepted: usize,
}

fn check_support<M: TwoLevelModel>(model: &M, w1: &M::First, w2: &M::Second) -> Result<()> {
    if !model.log_prior_first(w1).is_finite() {
        return Err(Error::Precondition("initial first-level weights lie outside the prior support".into()));
    }
    if !model.log_prior_second(w2).is_finite() {
        return Err(Error::Precondition("initial second-level weights lie outside the prior support".into()));
    }
    Ok(())
}

/// Metropolis chain on `w₂` with log-density `−L_s(w₁, w₂)/a₂ + ln Q̃⁽²⁾(w₂)`
/// for fixed `w₁`.
pub fn inner_conditional_chain<M: TwoLevelModel, R: Rng + ?Sized>(
    model: &M,
    w1: &M::First,
    a2: f64,
    iters: usize,
    init: M::Second,
    rng: &mut R,
) -> Result<InnerRun<M::Second>> {
    if !(a2 > 0.0) {
        return Err(Error::domain("temperature must be > 0"));
    }
    if iters == 0 {
        return Err(Error::domain("inner chain needs at least one step"));
    }
    let mut lp = model.log_prior_second(&init);
    if !lp.is_finite() {
        return Err(Error::Precondition("inner chain starts outside the prior support".into()));
    }
    let c = model.condition(w1);
    let mut v = init;
    let mut lv = model.risk(&c, &v);
    let mut samples = Vec::with_capacity(iters);
    let mut accepted = 0;
    for _ in 0..iters {
        let cand = model.propose_second(&v, rng);
        let lpc = model.log_prior_second(&cand);
        if lpc.is_finite() {
            let lc = model.risk(&c, &cand);
            if accept(-(lc - lv) / a2 + lpc - lp, rng) {
                v = cand;
                lv = lc;
                lp = lpc;
                accepted += 1;
            }
        }
        samples.push(v.clone());
    }
    Ok(InnerRun { last: v, samples, accepted })
}

/// `ln A` with `A = mean_i exp((L_s(w₁, v⁽ⁱ⁾) − L_s(ŵ₁, v⁽ⁱ⁾)) / a₂)`.
pub fn mc_log_ratio<M: TwoLevelModel>(
    model: &M,
    w1_prop: &M::First,
    w1_cur: &M::First,
    inner: &[M::Second],
    a2: f64,
) -> Result<f64> {
    if inner.is_empty() {
        return Err(Error::domain("ratio estimate needs at least one inner sample"));
    }
    let cp = model.condition(w1_prop);
    let cc = model.condition(w1_cur);
    let mut acc = LogMeanExp::new();
    for v in inner {
        acc.push((model.risk(&cc, v) - model.risk(&cp, v)) / a2);
    }
    Ok(acc.value())
}

pub fn mc_ratio<M: TwoLevelModel>(
    model: &M,
    w1_prop: &M::First,
    w1_cur: &M::First,
    inner: &[M::Second],
    a2: f64,
) -> Result<f64> {
    mc_log_ratio(model, w1_prop, w1_cur, inner, a2).map(f64::exp)
}

/// Two-level Metropolis over `(w₁, w₂)`.
///
/// Each outer iteration proposes `ŵ₁`, runs the inner chain on `w₂` at the
/// current `w₁` (started from the previous `w₂`) and, in the same pass,
/// accumulates the Monte-Carlo estimate `A` of the ratio of conditional
/// normalizers. `ŵ₁` is accepted with probability
/// `min(1, A^{a₂/(a₁+a₂)} · Q̃⁽¹⁾(ŵ₁)/Q̃⁽¹⁾(w₁))`.
///
/// The outer chain draws from stream 0 of `(seed, chain_id)` and the inner
/// chain of iteration `t` from stream `t + 1`. The observer may stop the run
/// early by returning `ControlFlow::Break`.
pub fn multilevel_metropolis<M, F>(
    model: &M,
    config: &SamplerConfig,
    init: (M::First, M::Second),
    chain_id: u64,
    mut observe: F,
) -> Result<ChainTrace<M::First, M::Second>>
where
    M: TwoLevelModel,
    F: FnMut(&StepRecord<'_, M::First, M::Second>) -> ControlFlow<()>,
{
    config.validate()?;
    let (a1, a2) = (config.temps[0], config.temps[1]);
    let exponent = a2 / (a1 + a2);
    let (mut w1, mut w2) = init;
    check_support(model, &w1, &w2)?;

    let mut outer_rng = stream_rng(config.seed, chain_id, 0);
    let mut cond = model.condition(&w1);
    let mut lp1 = model.log_prior_first(&w1);
    // L_s(w₁⁽ᵗ⁾, w₂⁽ᵗ⁻¹⁾), carried over between iterations
    let mut start_risk = model.risk(&cond, &w2);

    let mut trace = ChainTrace {
        samples: Vec::new(),
        risk_trace: Vec::with_capacity(config.outer_iters),
        accepted_outer: 0,
        accept_rate_outer: 0.0,
        mean_accept_inner: None,
        final_state: (w1.clone(), w2.clone()),
        seed: config.seed,
        completed: true,
    };
    let mut inner_rate_sum = 0.0;

    for t in 0..config.outer_iters {
        let w1_hat = model.propose_first(&w1, &mut outer_rng);
        let lp1_hat = model.log_prior_first(&w1_hat);
        // out-of-support proposals are rejected without touching the data
        let cond_hat = lp1_hat.is_finite().then(|| model.condition(&w1_hat));

        let mut inner_rng = stream_rng(config.seed, chain_id, t as u64 + 1);
        let mut v = w2.clone();
        let mut lv = start_risk;
        let mut lpv = model.log_prior_second(&v);
        let mut log_a = LogMeanExp::new();
        let mut risk_hat = f64::NAN;
        let mut moved = true;
        let mut inner_accepted = 0;
        for _ in 0..config.inner_iters {
            let cand = model.propose_second(&v, &mut inner_rng);
            let lpc = model.log_prior_second(&cand);
            if lpc.is_finite() {
                let lc = model.risk(&cond, &cand);
                if accept(-(lc - lv) / a2 + lpc - lpv, &mut inner_rng) {
                    v = cand;
                    lv = lc;
                    lpv = lpc;
                    inner_accepted += 1;
                    moved = true;
                }
            }
            if let Some(ch) = &cond_hat {
                if moved {
                    risk_hat = model.risk(ch, &v);
                    moved = false;
                }
                log_a.push((lv - risk_hat) / a2);
            }
        }
        w2 = v;
        let risk = lv;

        let accepted = match &cond_hat {
            Some(_) => accept(exponent * log_a.value() + lp1_hat - lp1, &mut outer_rng),
            None => false,
        };
        if accepted {
            trace.accepted_outer += 1;
        }

        let inner_rate = inner_accepted as f64 / config.inner_iters as f64;
        inner_rate_sum += inner_rate;
        trace.risk_trace.push(risk);
        if t % config.thin == 0 {
            trace.samples.push((t, w1.clone(), w2.clone()));
        }
        let record = StepRecord {
            iter: t,
            w1: &w1,
            w2: &w2,
            risk,
            accepted_outer: accepted,
            accept_rate_outer: trace.accepted_outer as f64 / (t + 1) as f64,
            accept_inner: Some(inner_rate),
        };
        let flow = observe(&record);

        if accepted {
            w1 = w1_hat;
            lp1 = lp1_hat;
            cond = cond_hat.expect("accepted proposals are conditioned");
            // the last A-term already evaluated L_s(ŵ₁, w₂)
            start_risk = risk_hat;
        } else {
            start_risk = risk;
        }
        if flow.is_break() {
            trace.completed = false;
            break;
        }
    }
    let done = trace.risk_trace.len().max(1) as f64;
    trace.accept_rate_outer = trace.accepted_outer as f64 / done;
    trace.mean_accept_inner = Some(inner_rate_sum / done);
    trace.final_state = (w1, w2);
    Ok(trace)
}

/// Joint Metropolis chain on `(w₁, w₂)` targeting the Gibbs posterior
/// `∝ exp(−γ L_s(w)) · Q̃⁽¹⁾(w₁) Q̃⁽²⁾(w₂)`; both levels are proposed at once.
/// Uses `outer_iters`, `seed` and `thin` from the config.
pub fn gibbs_sampler<M, F>(
    model: &M,
    gamma: f64,
    config: &SamplerConfig,
    init: (M::First, M::Second),
    chain_id: u64,
    mut observe: F,
) -> Result<ChainTrace<M::First, M::Second>>
where
    M: TwoLevelModel,
    F: FnMut(&StepRecord<'_, M::First, M::Second>) -> ControlFlow<()>,
{
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("inverse temperature must be finite and >= 0, got {gamma}")));
    }
    if config.outer_iters == 0 || config.thin == 0 {
        return Err(Error::Config("iteration count and thin must be >= 1".into()));
    }
    let (mut w1, mut w2) = init;
    check_support(model, &w1, &w2)?;
    let mut rng = stream_rng(config.seed, chain_id, 0);
    let log_target = |risk: f64, lp1: f64, lp2: f64| -gamma * risk + lp1 + lp2;
    let (mut lp1, mut lp2) = (model.log_prior_first(&w1), model.log_prior_second(&w2));
    let mut risk = model.risk(&model.condition(&w1), &w2);
    let mut trace = ChainTrace {
        samples: Vec::new(),
        risk_trace: Vec::with_capacity(config.outer_iters),
        accepted_outer: 0,
        accept_rate_outer: 0.0,
        mean_accept_inner: None,
        final_state: (w1.clone(), w2.clone()),
        seed: config.seed,
        completed: true,
    };
    for t in 0..config.outer_iters {
        let c1 = model.propose_first(&w1, &mut rng);
        let c2 = model.propose_second(&w2, &mut rng);
        let (lc1, lc2) = (model.log_prior_first(&c1), model.log_prior_second(&c2));
        let mut accepted = false;
        if lc1.is_finite() && lc2.is_finite() {
            let rc = model.risk(&model.condition(&c1), &c2);
            if accept(log_target(rc, lc1, lc2) - log_target(risk, lp1, lp2), &mut rng) {
                (w1, w2, lp1, lp2, risk) = (c1, c2, lc1, lc2, rc);
                accepted = true;
                trace.accepted_outer += 1;
            }
        }
        trace.risk_trace.push(risk);
        if t % config.thin == 0 {
            trace.samples.push((t, w1.clone(), w2.clone()));
        }
        let record = StepRecord {
            iter: t,
            w1: &w1,
            w2: &w2,
            risk,
            accepted_outer: accepted,
            accept_rate_outer: trace.accepted_outer as f64 / (t + 1) as f64,
            accept_inner: None,
        };
        if observe(&record).is_break() {
            trace.completed = false;
            break;
        }
    }
    trace.accept_rate_outer = trace.accepted_outer as f64 / trace.risk_trace.len().max(1) as f64;
    trace.final_state = (w1, w2);
    Ok(trace)
}
