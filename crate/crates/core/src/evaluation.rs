//! Monte Carlo auditing of policies, feasibility verdicts and the bisection
//! driver over the objective threshold.

use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environments::{sample_index, shift_rewards, ConstrainedProblem};
use crate::error::{Error, Result};
use crate::model::{Criterion, MixedPolicy};
use crate::oracle::cmdp_lp_discounted;
use crate::rng::{stream_rng, Stream};

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.576;
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-3;
/// Batch length of the average-reward estimator.
pub const AVERAGE_BATCH_LEN: usize = 1000;

/// Smallest `H >= 1` with `γ^H c / (1 - γ) <= tol`.
pub fn truncation_horizon(gamma: f64, c: f64, tol: f64) -> usize {
    assert!(gamma > 0.0 && gamma < 1.0 && c > 0.0 && tol > 0.0);
    let h = ((tol * (1.0 - gamma) / c).ln() / gamma.ln()).ceil();
    if h.is_finite() && h >= 1.0 {
        h as usize
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEstimate {
    pub mean: f64,
    pub half_width: f64,
    pub n_trajectories: usize,
    /// Truncation horizon (discounted) or batch length (average).
    pub horizon: usize,
}

fn run_segment<R: Rng>(
    problem: &ConstrainedProblem,
    policy: &MixedPolicy,
    start: usize,
    len: usize,
    weight: impl Fn(usize) -> f64,
    rng: &mut R,
) -> (Vec<f64>, usize) {
    let na = problem.actions();
    let mut sums = vec![0.0; problem.n_constraints()];
    let mut s = start;
    for k in 0..len {
        let a = sample_index(policy.row(s), rng.gen::<f64>());
        let w = weight(k);
        for (acc, r) in sums.iter_mut().zip(problem.constraints()) {
            *acc += w * r[s * na + a];
        }
        s = sample_index(problem.transition_row(s, a), rng.gen::<f64>());
    }
    (sums, s)
}

fn summarize(samples: &[Vec<f64>], j_count: usize, tol: f64, horizon: usize) -> Vec<ConstraintEstimate> {
    let n = samples.len();
    (0..j_count)
        .map(|j| {
            let mean = samples.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                samples.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            ConstraintEstimate {
                mean,
                half_width: Z99 * var.sqrt() / (n as f64).sqrt() + tol,
                n_trajectories: n,
                horizon,
            }
        })
        .collect()
}

/// Estimates every constraint value of `problem` under `policy`.
///
/// Discounted problems average `Σ_{k<H} γ^k rʲ` over `n_traj` trajectories
/// from the initial state, each on its own derived seed, so the result does
/// not depend on how trajectories are scheduled. Average-reward problems use
/// one long trajectory cut into `n_traj` batches after one burn-in batch.
pub fn mc_constraint_values(
    problem: &ConstrainedProblem,
    policy: &MixedPolicy,
    n_traj: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<ConstraintEstimate>> {
    if n_traj == 0 {
        return Err(Error::InvalidParameter { name: "n_traj", reason: "must be positive".into() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter { name: "tol", reason: "must be positive".into() });
    }
    if policy.states() != problem.states() || policy.actions() != problem.actions() {
        return Err(Error::ShapeMismatch("policy does not match the problem".into()));
    }
    let j_count = problem.n_constraints();
    match problem.criterion() {
        Criterion::Discounted(gamma) => {
            let c = problem.reward_bound();
            let horizon = truncation_horizon(gamma, c, tol);
            let one = |i: usize| {
                let mut rng = stream_rng(seed, Stream::Trajectory, i as u64);
                run_segment(problem, policy, problem.initial_state(), horizon, |k| gamma.powi(k as i32), &mut rng).0
            };
            #[cfg(feature = "parallel")]
            let samples: Vec<Vec<f64>> = (0..n_traj).into_par_iter().map(one).collect();
            #[cfg(not(feature = "parallel"))]
            let samples: Vec<Vec<f64>> = (0..n_traj).map(one).collect();
            Ok(summarize(&samples, j_count, tol, horizon))
        }
        Criterion::Average => {
            let mut rng = stream_rng(seed, Stream::Evaluator, 0);
            let len = AVERAGE_BATCH_LEN;
            let (_, mut s) = run_segment(problem, policy, problem.initial_state(), len, |_| 0.0, &mut rng);
            let mut samples = Vec::with_capacity(n_traj);
            for _ in 0..n_traj {
                let (sums, end) = run_segment(problem, policy, s, len, |_| 1.0 / len as f64, &mut rng);
                samples.push(sums);
                s = end;
            }
            Ok(summarize(&samples, j_count, tol, len))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Feasible if every mean is `>= -margin`; Infeasible if some mean is below
/// `-(margin + half_width)`; Inconclusive otherwise.
pub fn feasibility_verdict(estimates: &[ConstraintEstimate], margin: f64) -> Verdict {
    assert!(!estimates.is_empty(), "no estimates");
    if estimates.iter().all(|e| e.mean >= -margin) {
        Verdict::Feasible
    } else if estimates.iter().any(|e| e.mean < -(margin + e.half_width)) {
        Verdict::Infeasible
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub delta: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    /// Midpoint of the final bracket.
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
    pub steps: Vec<BisectionStep>,
}

/// Bisects the feasibility boundary of `problem` shifted by `δ`.
/// `solver(δ)` must return the verdict for threshold `δ`. Inconclusive
/// verdicts count as infeasible, so the bracket only moves up on evidence.
pub fn bisect_delta(
    lo: f64,
    hi: f64,
    delta_tol: f64,
    mut solver: impl FnMut(f64) -> Result<Verdict>,
) -> Result<BisectionResult> {
    if !(lo < hi) || !(delta_tol > 0.0) {
        return Err(Error::BracketInvalid(format!("need lo < hi and δ_tol > 0, got [{lo}, {hi}], {delta_tol}")));
    }
    let mut steps = Vec::new();
    let at_lo = solver(lo)?;
    steps.push(BisectionStep { delta: lo, verdict: at_lo });
    if at_lo != Verdict::Feasible {
        return Err(Error::BracketInvalid(format!("lower end {lo} is {at_lo}")));
    }
    let at_hi = solver(hi)?;
    steps.push(BisectionStep { delta: hi, verdict: at_hi });
    if at_hi == Verdict::Feasible {
        return Err(Error::BracketInvalid(format!("upper end {hi} is feasible")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > delta_tol {
        let mid = 0.5 * (lo + hi);
        let verdict = solver(mid)?;
        steps.push(BisectionStep { delta: mid, verdict });
        if verdict == Verdict::Feasible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BisectionResult { delta: 0.5 * (lo + hi), lo, hi, steps })
}

/// Exact verdict for threshold `δ` from the occupancy LP.
pub fn lp_verdict(problem: &ConstrainedProblem, delta: f64) -> Result<Verdict> {
    let shifted = shift_rewards(problem, delta)?;
    Ok(if cmdp_lp_discounted(&shifted, false)?.feasible { Verdict::Feasible } else { Verdict::Infeasible })
}
