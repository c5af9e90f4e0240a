//! Real-time optimizer: the temporal warm start, one backtracking gradient step,
//! the iterated operator run for a budget, and a tolerance-driven oracle.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::MpcProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Backtracking contraction.
    pub rho: f64,
    /// Armijo constant.
    pub c1: f64,
    /// The first trial step is `1/c2`.
    pub c2: f64,
    pub max_backtracks: usize,
    /// Oracle stopping tolerance on `‖∇‖`.
    pub gradient_tolerance: f64,
    pub oracle_max_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            c1: 1e-3,
            c2: 0.999,
            max_backtracks: 60,
            gradient_tolerance: 1e-8,
            oracle_max_iterations: 100_000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho < 1.0
            && self.c1 > 0.0
            && self.c1 < self.c2
            && self.c2 < 1.0
            && self.max_backtracks > 0
            && self.gradient_tolerance > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "optimizer needs 0 < rho < 1, 0 < c1 < c2 < 1 and a positive backtracking cap; got {self:?}"
            )))
        }
    }
}

/// `Ψ_tw`: shift the sequence by one input and append a terminal input.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalWarmStart {
    /// Append `K x_N` with `x_N` the nominal terminal state of the previous plan.
    LocalGain(DMatrix<f64>),
    /// Append zero.
    Zero,
}

pub fn temporal_warm_start(
    policy: &TemporalWarmStart,
    problem: &MpcProblem,
    seq: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    let m = problem.input_dim();
    let len = problem.sequence_len();
    let mut out = DVector::zeros(len);
    out.rows_mut(0, len - m).copy_from(&seq.rows(m, len - m));
    if let TemporalWarmStart::LocalGain(k) = policy {
        let states = problem.rollout(seq, x);
        let x_n = &states[problem.horizon] - &problem.target;
        let tail = k * x_n;
        if tail.iter().all(|v| v.is_finite()) {
            out.rows_mut(len - m, m).copy_from(&tail);
        }
    }
    out
}

/// Result of one `Ψ_o` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub seq: DVector<f64>,
    pub cost: f64,
    pub gradient_norm: f64,
    /// No Armijo step was found (or the gradient was unusable); `seq` is the input.
    pub stalled: bool,
    /// Cost evaluations spent, gradient included.
    pub evaluations: usize,
}

/// One gradient step with Armijo backtracking from `α₀ = 1/c₂`. The returned
/// cost never exceeds the cost of `seq`.
pub fn optimizer_update(
    cfg: &OptimizerConfig,
    problem: &MpcProblem,
    seq: &DVector<f64>,
    x: &DVector<f64>,
) -> Step {
    step_from(cfg, problem, seq, x, 1.0 / cfg.c2)
}

fn step_from(
    cfg: &OptimizerConfig,
    problem: &MpcProblem,
    seq: &DVector<f64>,
    x: &DVector<f64>,
    alpha0: f64,
) -> Step {
    let Ok((cost, grad)) = problem.cost_and_gradient(seq, x) else {
        return Step {
            seq: seq.clone(),
            cost: problem.total_cost(seq, x),
            gradient_norm: f64::NAN,
            stalled: true,
            evaluations: 1,
        };
    };
    let g2 = grad.norm_squared();
    let gradient_norm = g2.sqrt();
    if g2 == 0.0 {
        return Step {
            seq: seq.clone(),
            cost,
            gradient_norm,
            stalled: false,
            evaluations: 1,
        };
    }
    let mut alpha = alpha0;
    let mut evaluations = 1;
    for _ in 0..=cfg.max_backtracks {
        let trial = seq - &grad * alpha;
        let trial_cost = problem.total_cost(&trial, x);
        evaluations += 1;
        if trial_cost <= cost - cfg.c1 * alpha * g2 {
            return Step {
                seq: trial,
                cost: trial_cost,
                gradient_norm,
                stalled: false,
                evaluations,
            };
        }
        alpha *= cfg.rho;
    }
    Step {
        seq: seq.clone(),
        cost,
        gradient_norm,
        stalled: true,
        evaluations,
    }
}

/// Iteration budget per sampling period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationBudget {
    Count(usize),
    /// Iterate until the wall clock runs out; the first iteration always completes.
    WallClock(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOutcome {
    pub seq: DVector<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub stalls: usize,
    pub evaluations: usize,
    /// Cost after each iteration, starting with the warm start's cost.
    pub costs: Vec<f64>,
}

/// `Φ^{i_T}`: optimizer updates at the successor state `x_next`, started from `warm`.
pub fn iterate(
    cfg: &OptimizerConfig,
    problem: &MpcProblem,
    warm: &DVector<f64>,
    x_next: &DVector<f64>,
    budget: IterationBudget,
) -> Result<IterateOutcome> {
    problem.check(warm, x_next)?;
    if budget == IterationBudget::Count(0) {
        return Err(Error::Config("at least one optimizer iteration per step is required".into()));
    }
    let start = Instant::now();
    let mut seq = warm.clone();
    let mut costs = vec![problem.total_cost(warm, x_next)];
    let mut stalls = 0;
    let mut evaluations = 1;
    let mut iterations = 0;
    loop {
        let step = optimizer_update(cfg, problem, &seq, x_next);
        iterations += 1;
        evaluations += step.evaluations;
        stalls += usize::from(step.stalled);
        costs.push(step.cost);
        seq = step.seq;
        let more = match budget {
            IterationBudget::Count(n) => iterations < n,
            IterationBudget::WallClock(limit) => start.elapsed() < limit,
        };
        if !more {
            break;
        }
    }
    Ok(IterateOutcome {
        cost: *costs.last().unwrap_or(&f64::INFINITY),
        seq,
        iterations,
        stalls,
        evaluations,
        costs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub seq: DVector<f64>,
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// False when the cap was hit with `‖∇‖ > 1e-4`.
    pub converged: bool,
}

/// Minimizes `J_N(·, x)` to `‖∇‖ ≤ gradient_tolerance` or the iteration cap.
///
/// Each iteration tries a damped Newton step on a finite-difference Hessian
/// of the adjoint gradient (eigenvalues clipped to stay positive) and falls
/// back to the backtracking gradient step. Every accepted step satisfies the
/// Armijo condition, so the result never costs more than `init`.
pub fn oracle_solve(
    cfg: &OptimizerConfig,
    problem: &MpcProblem,
    x: &DVector<f64>,
    init: &DVector<f64>,
) -> Result<OracleResult> {
    problem.check(init, x)?;
    let mut seq = init.clone();
    let mut cost = problem.total_cost(&seq, x);
    if !cost.is_finite() {
        return Err(Error::NonFinite("oracle started from a divergent sequence".into()));
    }
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    // consecutive steps that changed the cost only at rounding level
    let mut flat = 0;
    while iterations < cfg.oracle_max_iterations && flat < 5 {
        let before = cost;
        let Ok((_, grad)) = problem.cost_and_gradient(&seq, x) else {
            break;
        };
        gradient_norm = grad.norm();
        if !(gradient_norm > cfg.gradient_tolerance) {
            break;
        }
        iterations += 1;
        if let Some((next, next_cost)) = newton_step(cfg, problem, &seq, x, cost, &grad) {
            seq = next;
            cost = next_cost;
        } else {
            let step = optimizer_update(cfg, problem, &seq, x);
            if step.stalled {
                break;
            }
            seq = step.seq;
            cost = step.cost;
        }
        if before - cost <= 1e-15 * (1.0 + cost.abs()) {
            flat += 1;
        } else {
            flat = 0;
        }
    }
    Ok(OracleResult {
        converged: gradient_norm <= 1e-4,
        seq,
        cost,
        gradient_norm,
        iterations,
    })
}

fn newton_step(
    cfg: &OptimizerConfig,
    problem: &MpcProblem,
    seq: &DVector<f64>,
    x: &DVector<f64>,
    cost: f64,
    grad: &DVector<f64>,
) -> Option<(DVector<f64>, f64)> {
    let len = seq.len();
    let mut hessian = DMatrix::zeros(len, len);
    for i in 0..len {
        let h = 1e-6 * (1.0 + seq[i].abs());
        let mut up = seq.clone();
        up[i] += h;
        let mut down = seq.clone();
        down[i] -= h;
        let column = (problem.gradient(&up, x).ok()? - problem.gradient(&down, x).ok()?) / (2.0 * h);
        hessian.set_column(i, &column);
    }
    let eig = ((&hessian + hessian.transpose()) * 0.5).symmetric_eigen();
    let floor = (eig.eigenvalues.amax() * 1e-12).max(1e-14);
    let scaled = eig.eigenvalues.zip_map(&eig.eigenvectors.tr_mul(grad), |l, g| g / l.abs().max(floor));
    let direction = -(&eig.eigenvectors * scaled);
    let slope = grad.dot(&direction);
    if !(slope < 0.0) {
        return None;
    }
    let mut alpha = 1.0;
    for _ in 0..=cfg.max_backtracks {
        let trial = seq + &direction * alpha;
        let trial_cost = problem.total_cost(&trial, x);
        if trial_cost <= cost + cfg.c1 * alpha * slope {
            return Some((trial, trial_cost));
        }
        alpha *= cfg.rho;
    }
    None
}
