//! Marginalize-Tilt: exact minimization of `Σ_i a_i D(P_{X_1…X_i} ‖ R^(i))`.
//!
//! The solver walks backwards from the deepest prior. At level `k` it
//! marginalizes the current solution onto the first `k` axes and tilts the
//! level-`k` prior towards it with weight `a_k / (a_k + … + a_d)`. The
//! minimizer is the chain of conditionals of these intermediate
//! distributions, and the minimum value is the weighted sum of Rényi
//! divergences produced by the tilting steps.

use serde::Serialize;

use crate::distributions::{
    chain_factorize, kl_slices, recompose, renyi_slices, tilt_slices, Conditional, FiniteJoint,
    TemperatureVector,
};
use crate::error::{Error, Result};

/// Priors `R^(1) … R^(d)` (the `i`-th prior has `i` axes) with coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtProblem {
    priors: Vec<FiniteJoint>,
    coeffs: TemperatureVector,
}

impl MtProblem {
    pub fn new(priors: Vec<FiniteJoint>, coeffs: TemperatureVector) -> Result<Self> {
        let d = priors.len();
        if d == 0 {
            return Err(Error::dim("problem needs at least one prior"));
        }
        if coeffs.len() != d {
            return Err(Error::dim(format!("{} coefficients for {d} priors", coeffs.len())));
        }
        let full = priors[d - 1].axis_sizes().to_vec();
        for (i, r) in priors.iter().enumerate() {
            if r.ndim() != i + 1 || r.axis_sizes() != &full[..=i] {
                return Err(Error::dim(format!(
                    "prior {} has axes {:?}, expected {:?}",
                    i + 1,
                    r.axis_sizes(),
                    &full[..=i]
                )));
            }
        }
        Ok(Self { priors, coeffs })
    }

    pub fn depth(&self) -> usize {
        self.priors.len()
    }

    pub fn priors(&self) -> &[FiniteJoint] {
        &self.priors
    }

    pub fn coeffs(&self) -> &TemperatureVector {
        &self.coeffs
    }

    pub fn axis_sizes(&self) -> &[usize] {
        self.priors[self.depth() - 1].axis_sizes()
    }

    pub fn cells(&self) -> usize {
        self.axis_sizes().iter().product()
    }

    /// Objective on a raw row-major probability vector over all cells.
    fn objective_raw(&self, probs: &[f64]) -> f64 {
        let sizes = self.axis_sizes();
        let mut total = 0.0;
        let mut marginal = probs.to_vec();
        for k in (0..self.depth()).rev() {
            if k + 1 < self.depth() {
                marginal = marginal
                    .chunks_exact(sizes[k + 1])
                    .map(|c| c.iter().sum())
                    .collect();
            }
            let d = kl_slices(&marginal, self.priors[k].probs());
            if d.is_infinite() {
                return f64::INFINITY;
            }
            total += self.coeffs[k] * d;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MtSolution {
    /// The minimizer over all `d` axes.
    pub joint: FiniteJoint,
    /// `S^(1)_{X_1}, S^(2)_{X_2|X_1}, …, S^(d)_{X_d|X_1…X_{d-1}}`.
    pub factors: Vec<Conditional>,
    /// Intermediate tilted distributions `S^(1) … S^(d)`.
    pub intermediates: Vec<FiniteJoint>,
    /// Objective evaluated at `joint`.
    pub objective: f64,
    /// Minimum value certified by the tilting steps.
    pub renyi_residue: f64,
}

/// Runs Marginalize-Tilt on `problem`.
pub fn mt_solve(problem: &MtProblem) -> Result<MtSolution> {
    let d = problem.depth();
    let a = problem.coeffs();
    let mut intermediates: Vec<FiniteJoint> = Vec::with_capacity(d);
    intermediates.push(problem.priors[d - 1].clone());
    let mut residue = 0.0;

    for k in (1..d).rev() {
        let next = intermediates.last().expect("nonempty");
        let marginal = next.marginalize(k)?;
        let prior = &problem.priors[k - 1];
        let lambda = a[k - 1] / a.tail_sum(k - 1);
        let tilted = tilt_slices(prior.probs(), marginal.probs(), lambda).map_err(|e| match e {
            Error::TiltUndefined => Error::MtUndefined { level: k },
            other => other,
        })?;
        if lambda > 0.0 && lambda < 1.0 {
            residue += a.tail_sum(k) * renyi_slices(prior.probs(), marginal.probs(), lambda)?;
        }
        intermediates.push(FiniteJoint::from_parts_unchecked(prior.axis_sizes().to_vec(), tilted));
    }
    intermediates.reverse();

    let factors: Vec<Conditional> = intermediates
        .iter()
        .map(|s| chain_factorize(s).pop().expect("at least one axis"))
        .collect();
    let joint = recompose(&factors)?;
    let objective = problem.objective_raw(joint.probs());
    Ok(MtSolution {
        joint,
        factors,
        intermediates,
        objective,
        renyi_residue: residue,
    })
}

/// `Σ_i a_i · D(candidate_{X_1…X_i} ‖ R^(i))`.
pub fn mt_objective(candidate: &FiniteJoint, problem: &MtProblem) -> Result<f64> {
    if candidate.axis_sizes() != problem.axis_sizes() {
        return Err(Error::dim(format!(
            "candidate axes {:?}, problem axes {:?}",
            candidate.axis_sizes(),
            problem.axis_sizes()
        )));
    }
    Ok(problem.objective_raw(candidate.probs()))
}

/// Largest joint (in cells) accepted by [`brute_force_minimize`].
pub const MAX_ORACLE_CELLS: usize = 16;
/// Largest number of grid points enumerated exhaustively.
pub const EXHAUSTIVE_BUDGET: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSearchResult {
    pub joint: FiniteJoint,
    pub objective: f64,
    /// `true` when every grid point at the requested resolution was visited.
    pub exhaustive: bool,
}

/// Grid search over joints whose cells are multiples of `1/grid_steps`.
///
/// When the grid has at most [`EXHAUSTIVE_BUDGET`] points every point is
/// evaluated. Otherwise the coarsest-affordable grid is enumerated
/// exhaustively and its best point is refined on the requested grid by
/// pairwise mass transfers with halving step sizes. Ties keep the first
/// point in enumeration order, so results are reproducible.
pub fn brute_force_minimize(problem: &MtProblem, grid_steps: usize) -> Result<GridSearchResult> {
    let cells = problem.cells();
    if cells > MAX_ORACLE_CELLS {
        return Err(Error::DeskScale(format!(
            "{cells} cells exceeds the {MAX_ORACLE_CELLS}-cell limit"
        )));
    }
    if grid_steps < 10 {
        return Err(Error::domain(format!("grid_steps must be >= 10, got {grid_steps}")));
    }

    let exhaustive = composition_count(grid_steps, cells) <= EXHAUSTIVE_BUDGET;
    let counts = if exhaustive {
        enumerate_best(problem, grid_steps, cells).0
    } else {
        let coarse = (1..grid_steps)
            .rev()
            .find(|&n| composition_count(n, cells) <= EXHAUSTIVE_BUDGET)
            .unwrap_or(1);
        let (coarse_counts, _) = enumerate_best(problem, coarse, cells);
        let start = rescale_counts(&coarse_counts, coarse, grid_steps);
        let first_step = grid_steps.div_ceil(coarse).max(1);
        refine(problem, start, grid_steps, first_step)
    };
    let probs = to_probs(&counts, grid_steps);
    let objective = problem.objective_raw(&probs);
    Ok(GridSearchResult {
        joint: FiniteJoint::from_parts_unchecked(problem.axis_sizes().to_vec(), probs),
        objective,
        exhaustive,
    })
}

fn composition_count(n: usize, k: usize) -> u128 {
    // C(n + k - 1, k - 1)
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c * (n as u128 + i) / i;
        if c > u64::MAX as u128 {
            return c;
        }
    }
    c
}

fn to_probs(counts: &[usize], total: usize) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn enumerate_best(problem: &MtProblem, total: usize, cells: usize) -> (Vec<usize>, f64) {
    let mut counts = vec![0usize; cells];
    let mut best = (counts.clone(), f64::INFINITY);
    let mut probs = vec![0.0; cells];
    fn recurse(
        pos: usize,
        remaining: usize,
        total: usize,
        counts: &mut [usize],
        probs: &mut [f64],
        problem: &MtProblem,
        best: &mut (Vec<usize>, f64),
    ) {
        if pos + 1 == counts.len() {
            counts[pos] = remaining;
            probs[pos] = remaining as f64 / total as f64;
            let v = problem.objective_raw(probs);
            if v < best.1 {
                best.0.copy_from_slice(counts);
                best.1 = v;
            }
            return;
        }
        for c in (0..=remaining).rev() {
            counts[pos] = c;
            probs[pos] = c as f64 / total as f64;
            recurse(pos + 1, remaining - c, total, counts, probs, problem, best);
        }
    }
    recurse(0, total, total, &mut counts, &mut probs, problem, &mut best);
    best
}

fn rescale_counts(coarse: &[usize], from: usize, to: usize) -> Vec<usize> {
    let exact: Vec<f64> = coarse.iter().map(|&c| c as f64 * to as f64 / from as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut short = to - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = exact[i] - exact[i].floor();
        let rj = exact[j] - exact[j].floor();
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for &i in order.iter().cycle() {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}

fn refine(problem: &MtProblem, mut counts: Vec<usize>, total: usize, mut step: usize) -> Vec<usize> {
    let n = counts.len();
    let mut probs = to_probs(&counts, total);
    let mut current = problem.objective_raw(&probs);
    loop {
        loop {
            let mut best_move = None;
            let mut best_val = current;
            for from in 0..n {
                if counts[from] < step {
                    continue;
                }
                for to in 0..n {
                    if to == from {
                        continue;
                    }
                    let (pf, pt) = (probs[from], probs[to]);
                    probs[from] = (counts[from] - step) as f64 / total as f64;
                    probs[to] = (counts[to] + step) as f64 / total as f64;
                    let v = problem.objective_raw(&probs);
                    probs[from] = pf;
                    probs[to] = pt;
                    if v < best_val {
                        best_val = v;
                        best_move = Some((from, to));
                    }
                }
            }
            match best_move {
                Some((from, to)) => {
                    counts[from] -= step;
                    counts[to] += step;
                    probs[from] = counts[from] as f64 / total as f64;
                    probs[to] = counts[to] as f64 / total as f64;
                    current = best_val;
                }
                None => break,
            }
        }
        if step == 1 {
            return counts;
        }
        step = step.div_ceil(2);
    }
}

/// Maps priors `Q^(1) … Q^(d)` and an empirical-risk table over the full
/// index space to the solver input whose solution is the twisted posterior:
/// `R^(i) = Q^(i)` for `i < d` and `R^(d) ∝ exp(-L_s / t_d) · Q^(d)`.
pub fn build_twisted_problem(
    priors: Vec<FiniteJoint>,
    temps: &TemperatureVector,
    empirical_risk: &[f64],
) -> Result<MtProblem> {
    let d = priors.len();
    let deepest = priors
        .last()
        .ok_or_else(|| Error::dim("need at least one prior"))?;
    if empirical_risk.len() != deepest.len() {
        return Err(Error::dim(format!(
            "risk table has {} entries, weight space has {} cells",
            empirical_risk.len(),
            deepest.len()
        )));
    }
    if let Some((i, r)) = empirical_risk
        .iter()
        .enumerate()
        .find(|(_, r)| !(r.is_finite() && **r >= 0.0))
    {
        return Err(Error::domain(format!("risk entry {i} = {r} must be finite and >= 0")));
    }
    if temps.len() != d {
        return Err(Error::dim(format!("{} temperatures for {d} priors", temps.len())));
    }
    let t_d = temps[d - 1];
    let log_w: Vec<f64> = deepest
        .probs()
        .iter()
        .zip(empirical_risk)
        .map(|(&q, &r)| if q > 0.0 { q.ln() - r / t_d } else { f64::NEG_INFINITY })
        .collect();
    let tilted = FiniteJoint::from_log_weights(deepest.axis_sizes().to_vec(), &log_w)
        .map_err(|_| Error::DegeneratePrior("Gibbs-tilted deepest prior has zero mass".into()))?;
    let mut priors = priors;
    *priors.last_mut().expect("nonempty") = tilted;
    MtProblem::new(priors, temps.clone())
}

/// Eight fixed problems with two or three binary/ternary axes whose priors
/// disagree across levels, for checking the solver against grid search.
pub fn reference_problems() -> Vec<(String, MtProblem)> {
    let shapes: [(&[usize], &[f64]); 8] = [
        (&[2, 2], &[1.0, 1.0]),
        (&[2, 2], &[3.0, 0.5]),
        (&[3, 2], &[0.7, 1.3]),
        (&[2, 3], &[2.0, 2.0]),
        (&[3, 3], &[0.4, 1.0]),
        (&[2, 2, 2], &[1.0, 1.0, 1.0]),
        (&[2, 2, 3], &[0.5, 2.0, 1.0]),
        (&[2, 3, 2], &[1.5, 0.3, 0.8]),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(p, (sizes, coeffs))| {
            let priors = (1..=sizes.len())
                .map(|k| {
                    let cells: usize = sizes[..k].iter().product();
                    // deterministic, uneven, full-support weights
                    let w = (0..cells).map(|i| 1.0 + ((i * 7 + k * 5 + p * 3) % 11) as f64 / 2.0).collect();
                    FiniteJoint::from_weights(sizes[..k].to_vec(), w).expect("positive weights")
                })
                .collect();
            let coeffs = TemperatureVector::new(coeffs.to_vec()).expect("positive literal");
            let name = format!("axes {sizes:?}, a = {coeffs:?}", coeffs = coeffs.as_slice());
            (name, MtProblem::new(priors, coeffs).expect("consistent shapes"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::FiniteDistribution;

    fn t(v: &[f64]) -> TemperatureVector {
        TemperatureVector::new(v.to_vec()).unwrap()
    }

    fn j(sizes: &[usize], w: &[f64]) -> FiniteJoint {
        FiniteJoint::from_weights(sizes.to_vec(), w.to_vec()).unwrap()
    }

    #[test]
    fn depth_one_returns_prior() {
        let r = j(&[3], &[1.0, 2.0, 3.0]);
        let p = MtProblem::new(vec![r.clone()], t(&[2.0])).unwrap();
        let s = mt_solve(&p).unwrap();
        assert_eq!(s.joint, r);
        assert_eq!(s.renyi_residue, 0.0);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn consistent_priors_are_fixed_point() {
        let r2 = j(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let r1 = r2.marginalize(1).unwrap();
        let p = MtProblem::new(vec![r1, r2.clone()], t(&[1.0, 3.0])).unwrap();
        let s = mt_solve(&p).unwrap();
        for (a, b) in s.joint.probs().iter().zip(r2.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(s.renyi_residue.abs() < 1e-15);
    }

    #[test]
    fn problem_shape_validation() {
        let r1 = j(&[2], &[1.0, 1.0]);
        let r2 = j(&[3, 2], &[1.0; 6]);
        assert!(MtProblem::new(vec![r1.clone(), r2], t(&[1.0, 1.0])).is_err());
        assert!(MtProblem::new(vec![r1.clone()], t(&[1.0, 1.0])).is_err());
        assert!(MtProblem::new(vec![], t(&[1.0])).is_err());
        let p = MtProblem::new(vec![r1], t(&[1.0])).unwrap();
        assert!(mt_objective(&j(&[3], &[1.0; 3]), &p).is_err());
    }

    #[test]
    fn singular_priors_rejected() {
        let r1 = FiniteJoint::new(vec![2], vec![1.0, 0.0]).unwrap();
        let r2 = FiniteJoint::new(vec![2, 2], vec![0.0, 0.0, 0.5, 0.5]).unwrap();
        let p = MtProblem::new(vec![r1, r2], t(&[1.0, 1.0])).unwrap();
        assert_eq!(mt_solve(&p), Err(Error::MtUndefined { level: 1 }));
    }

    #[test]
    fn grid_oracle_limits() {
        let r = FiniteJoint::uniform(vec![17]).unwrap();
        let p = MtProblem::new(vec![r], t(&[1.0])).unwrap();
        assert!(matches!(brute_force_minimize(&p, 20), Err(Error::DeskScale(_))));
        let r = FiniteJoint::uniform(vec![2]).unwrap();
        let p = MtProblem::new(vec![r], t(&[1.0])).unwrap();
        assert!(brute_force_minimize(&p, 9).is_err());
    }

    #[test]
    fn grid_oracle_finds_grid_representable_minimum() {
        // prior (0.25, 0.75) lies on the 20-step grid
        let r = FiniteJoint::new(vec![2], vec![0.25, 0.75]).unwrap();
        let p = MtProblem::new(vec![r.clone()], t(&[1.0])).unwrap();
        let g = brute_force_minimize(&p, 20).unwrap();
        assert!(g.exhaustive);
        assert_eq!(g.joint, r);
        assert_eq!(g.objective, 0.0);
    }

    #[test]
    fn refinement_path_reaches_fine_grid() {
        let r2 = j(&[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 4.0, 3.0, 2.0, 1.0]);
        let r1 = j(&[2], &[3.0, 1.0]);
        let r12 = j(&[2, 2], &[1.0, 1.0, 1.0, 2.0]);
        let p = MtProblem::new(vec![r1, r12, r2], t(&[1.0, 0.5, 2.0])).unwrap();
        let g = brute_force_minimize(&p, 200).unwrap();
        assert!(!g.exhaustive);
        let s = mt_solve(&p).unwrap();
        assert!(g.objective >= s.objective - 1e-12);
        assert!(g.objective - s.objective < 0.01);
    }

    #[test]
    fn twisted_problem_zero_risk_and_flat_limit() {
        let q1 = j(&[2], &[1.0, 3.0]);
        let q2 = j(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let p = build_twisted_problem(vec![q1.clone(), q2.clone()], &t(&[1.0, 1.0]), &[0.0; 4]).unwrap();
        assert!(p.priors()[1].total_variation(&q2).unwrap() < 1e-15);
        let hot = build_twisted_problem(vec![q1, q2.clone()], &t(&[1.0, 1e9]), &[0.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(hot.priors()[1].total_variation(&q2).unwrap() < 1e-6);
    }

    #[test]
    fn twisted_problem_errors() {
        let q = FiniteJoint::from_distribution(&FiniteDistribution::uniform(2));
        assert!(build_twisted_problem(vec![q.clone()], &t(&[1.0]), &[0.0, -1.0]).is_err());
        assert!(build_twisted_problem(vec![q.clone()], &t(&[1.0]), &[0.0, f64::NAN]).is_err());
        assert!(build_twisted_problem(vec![q], &t(&[1.0]), &[0.0]).is_err());
    }

    #[test]
    fn composition_counts() {
        assert_eq!(composition_count(200, 4), 1_373_701);
        assert_eq!(composition_count(10, 1), 1);
        assert_eq!(composition_count(3, 2), 4);
    }
}
