//! The closed loop: temporal and spatial warm starts, selection, the
//! optimizer budget, memorization and the runtime stability checks.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::Serialize;

use crate::cost::MpcProblem;
use crate::error::{Error, Result};
use crate::hull::DataPoint;
use crate::learner::{LearnStats, LearnerKind, LearnerSpec, Memory, OfferOutcome};
use crate::rtopt::{iterate, oracle_solve, temporal_warm_start};
use crate::scenario::Scenario;

/// Relative slack for the decrease and chain checks.
pub const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Temporal,
    Spatial,
}

/// `true` selects the temporal warm start: strictly cheaper, or no spatial one.
pub fn select_temporal(j_temporal: f64, j_spatial: Option<f64>) -> bool {
    match j_spatial {
        None => true,
        Some(js) => j_temporal < js,
    }
}

/// One row of the closed-loop trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub reference: f64,
    /// `l(x(k), u(k))` against `r(k)`.
    pub stage: f64,
    /// Nominal successor `f(x(k), u(k))`, where the next sequence is computed.
    pub x_next: DVector<f64>,
    pub j_temporal: f64,
    /// `NaN` when the learner had no answer.
    pub j_spatial: f64,
    /// `J^a(x⁺)` before memorizing; `+∞` when unknown.
    pub j_approx: f64,
    pub branch: Branch,
    pub iterations: usize,
    /// Cost evaluations spent by the optimizer, a deterministic work measure.
    pub evaluations: usize,
    /// `J_N(U(k+1), x⁺)`.
    pub j_opt: f64,
    pub warm_temporal: DVector<f64>,
    pub warm_spatial: Option<DVector<f64>>,
    pub seq: DVector<f64>,
    pub offered: Option<OfferOutcome>,
    pub data_size: usize,
}

/// Counters for the runtime contracts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InvariantCounts {
    /// Chosen warm start cost more than the temporal one.
    pub selection_violations: usize,
    /// Optimizer iterations that increased the cost.
    pub monotone_violations: usize,
    /// Steps where the shifted sequence decreased `J_N` by the stage cost.
    pub decrease_checked: usize,
    pub decrease_violations: usize,
    pub chain_checked: usize,
    pub chain_violations: usize,
}

impl InvariantCounts {
    pub fn is_clean(&self) -> bool {
        self.selection_violations == 0
            && self.monotone_violations == 0
            && self.decrease_violations == 0
            && self.chain_violations == 0
    }
}

fn close_le(a: f64, b: f64) -> bool {
    a <= b + CHECK_TOLERANCE * (1.0 + b.abs())
}

/// Controller state for one closed-loop run.
#[derive(Debug, Clone)]
pub struct Controller {
    scenario: Scenario,
    memory: Memory,
    seq: DVector<f64>,
    x: DVector<f64>,
    k: usize,
    counts: InvariantCounts,
}

impl Controller {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let spec = LearnerSpec {
            kind: scenario.learning.learner,
            state_dim: scenario.problem.state_dim(),
            horizon: scenario.problem.horizon,
            lipschitz: scenario.lipschitz,
        };
        let mut memory = Memory::new(spec, scenario.learning.threshold, scenario.learning.latency)?;
        if scenario.learning.seed_vertices && scenario.learning.learner != LearnerKind::Off {
            for r in scenario.reference.levels() {
                memory.seed(r, scenario.seed_points(r))?;
            }
        }
        Ok(Self {
            seq: DVector::zeros(scenario.problem.sequence_len()),
            x: scenario.x0.clone(),
            k: 0,
            memory,
            scenario,
            counts: InvariantCounts::default(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.memory
    }

    pub fn state(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn sequence(&self) -> &DVector<f64> {
        &self.seq
    }

    pub fn time(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> InvariantCounts {
        self.counts
    }

    /// One pass of the loop at time `k`; advances to `k+1`.
    pub fn step(&mut self) -> Result<StepRow> {
        let k = self.k;
        let s = &self.scenario;
        self.memory.tick(k);

        let r_now = s.reference.level(k);
        let r_next = s.reference.level(k + 1);
        let now = s.problem_at(r_now);
        let next = if r_next == r_now { now.clone() } else { s.problem_at(r_next) };

        let u = now.input(&self.seq, 0);
        let stage = now.stage_cost(&self.x, &u);
        let x_next = s.problem.plant.step(&self.x, &u);
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::ControllerFault {
                step: k,
                reason: "state left the finite numbers".into(),
            });
        }

        let warm_temporal = temporal_warm_start(&s.temporal, &next, &self.seq, &self.x);
        let j_temporal = next.total_cost(&warm_temporal, &x_next);
        let answer = self.memory.query(r_next, &x_next);
        let j_spatial = answer.as_ref().map(|a| next.total_cost(&a.seq, &x_next));
        let j_approx = answer.as_ref().map_or(f64::INFINITY, |a| a.j_approx);
        if !j_temporal.is_finite() && !j_spatial.is_some_and(f64::is_finite) {
            return Err(Error::ControllerFault {
                step: k,
                reason: "both warm starts have non-finite cost".into(),
            });
        }
        let temporal = select_temporal(j_temporal, j_spatial);
        let (branch, warm, j_warm) = if temporal {
            (Branch::Temporal, &warm_temporal, j_temporal)
        } else {
            let a = answer.as_ref().expect("spatial branch has an answer");
            (Branch::Spatial, &a.seq, j_spatial.unwrap_or(f64::INFINITY))
        };
        if j_warm > j_temporal {
            self.counts.selection_violations += 1;
        }

        let out = iterate(&s.optimizer, &next, warm, &x_next, s.budget)?;
        if out.costs.windows(2).any(|w| w[1] > w[0]) {
            self.counts.monotone_violations += 1;
        }

        // Decrease along the nominal loop, checked where the shifted
        // sequence itself decreased by the stage cost.
        if r_next == r_now {
            let j_prev = now.total_cost(&self.seq, &self.x);
            if j_prev.is_finite() && close_le(j_temporal, j_prev - stage) {
                self.counts.decrease_checked += 1;
                if !close_le(out.cost, j_prev - stage) {
                    self.counts.decrease_violations += 1;
                }
            }
        }

        let offered = if out.cost.is_finite() && self.scenario.learning.learner != LearnerKind::Off {
            Some(self.memory.offer(r_next, DataPoint::new(out.seq.clone(), x_next.clone(), out.cost), k))
        } else {
            None
        };
        if branch == Branch::Spatial && offered == Some(OfferOutcome::Added) {
            self.counts.chain_checked += 1;
            let j_after = self.memory.approximation(r_next, &x_next);
            let chain = close_le(j_after, out.cost) && close_le(out.cost, j_warm) && close_le(j_warm, j_approx);
            if !chain {
                self.counts.chain_violations += 1;
            }
        }

        let s = &self.scenario;
        let x_new = if s.disturbance.is_reset(k) {
            s.x0.clone()
        } else {
            &x_next + s.disturbance.at(k, &self.x, &u, &s.problem.plant)
        };
        let row = StepRow {
            k,
            x: std::mem::replace(&mut self.x, x_new),
            u,
            reference: r_now,
            stage,
            x_next,
            j_temporal,
            j_spatial: j_spatial.unwrap_or(f64::NAN),
            j_approx,
            branch,
            iterations: out.iterations,
            evaluations: out.evaluations,
            j_opt: out.cost,
            warm_temporal,
            warm_spatial: answer.map(|a| a.seq),
            seq: out.seq.clone(),
            offered,
            data_size: self.memory.data_size(),
        };
        self.seq = out.seq;
        self.k += 1;
        Ok(row)
    }
}

/// Full output of a closed-loop run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: String,
    pub rows: Vec<StepRow>,
    pub counts: InvariantCounts,
    pub stats: LearnStats,
    pub final_state: DVector<f64>,
    pub elapsed: Duration,
    /// Reset period, when the scenario has one; used to split runs.
    pub run_length: Option<usize>,
    pub reference_period: Option<usize>,
}

impl RunRecord {
    pub fn spatial_count(&self) -> usize {
        self.rows.iter().filter(|r| r.branch == Branch::Spatial).count()
    }

    /// Sum of stage costs.
    pub fn accumulated_cost(&self) -> f64 {
        self.rows.iter().map(|r| r.stage).sum()
    }

    /// Accumulated stage cost per reset run.
    pub fn run_costs(&self) -> Vec<f64> {
        let len = self.run_length.unwrap_or(self.rows.len()).max(1);
        self.rows.chunks(len).map(|c| c.iter().map(|r| r.stage).sum()).collect()
    }

    /// Mean `|x₁ - r|` per reference period.
    pub fn tracking_errors(&self) -> Vec<f64> {
        let len = self.reference_period.unwrap_or(self.rows.len()).max(1);
        self.rows
            .chunks(len)
            .map(|c| c.iter().map(|r| (r.x[0] - r.reference).abs()).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

fn run_length(s: &Scenario) -> Option<usize> {
    match s.disturbance {
        crate::model::DisturbanceSignal::ResetSchedule { period, .. } => Some(period),
        _ => None,
    }
}

/// Runs `scenario.steps` control steps.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RunRecord> {
    run_with(&mut Controller::new(scenario.clone())?, scenario.steps)
}

/// Advances `ctl` by `steps`; the record covers only those steps.
pub fn run_with(ctl: &mut Controller, steps: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let mut rows = Vec::with_capacity(steps);
    for _ in 0..steps {
        rows.push(ctl.step()?);
    }
    Ok(RunRecord {
        scenario: ctl.scenario.name.clone(),
        rows,
        counts: ctl.counts,
        stats: ctl.memory.stats(),
        final_state: ctl.x.clone(),
        elapsed: start.elapsed(),
        run_length: run_length(&ctl.scenario),
        reference_period: ctl.scenario.reference.period(),
    })
}

/// Per-step suboptimality of both warm starts, `J(warm) - J*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Suboptimality {
    pub k: usize,
    pub j_star: f64,
    pub temporal: f64,
    /// `NaN` when there was no spatial warm start.
    pub spatial: f64,
    pub converged: bool,
}

/// Offline oracle pass over `rows`; each solve starts from the best of the
/// recorded sequences at that step.
pub fn suboptimality(scenario: &Scenario, rows: &[StepRow]) -> Result<Vec<Suboptimality>> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let problem = scenario.problem_at(scenario.reference.level(row.k + 1));
        let init = best_start(&problem, row);
        let oracle = oracle_solve(&scenario.optimizer, &problem, &row.x_next, &init)?;
        out.push(Suboptimality {
            k: row.k,
            j_star: oracle.cost,
            temporal: row.j_temporal - oracle.cost,
            spatial: row.j_spatial - oracle.cost,
            converged: oracle.converged,
        });
    }
    Ok(out)
}

fn best_start(problem: &MpcProblem, row: &StepRow) -> DVector<f64> {
    let mut best = (row.j_opt, &row.seq);
    for cand in std::iter::once(&row.warm_temporal).chain(row.warm_spatial.as_ref()) {
        let j = problem.total_cost(cand, &row.x_next);
        if j < best.0 {
            best = (j, cand);
        }
    }
    best.1.clone()
}

/// Closed loop under the converged-optimizer policy, each step warm-started
/// from the previous optimum.
pub fn run_oracle_policy(scenario: &Scenario, steps: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let mut x = scenario.x0.clone();
    let problem0 = scenario.problem_at(scenario.reference.level(0));
    let mut seq = oracle_solve(
        &scenario.optimizer,
        &problem0,
        &x,
        &DVector::zeros(problem0.sequence_len()),
    )?
    .seq;
    let mut rows = Vec::with_capacity(steps);
    for k in 0..steps {
        let r_now = scenario.reference.level(k);
        let now = scenario.problem_at(r_now);
        let next = scenario.problem_at(scenario.reference.level(k + 1));
        let u = now.input(&seq, 0);
        let stage = now.stage_cost(&x, &u);
        let x_next = scenario.problem.plant.step(&x, &u);
        let x_new = if scenario.disturbance.is_reset(k) {
            scenario.x0.clone()
        } else {
            &x_next + scenario.disturbance.at(k, &x, &u, &scenario.problem.plant)
        };
        // the next optimum is computed at the state actually reached
        let warm = temporal_warm_start(&scenario.temporal, &next, &seq, &x);
        let zero = DVector::zeros(next.sequence_len());
        let init = if next.total_cost(&warm, &x_new) <= next.total_cost(&zero, &x_new) {
            warm.clone()
        } else {
            zero
        };
        let sol = oracle_solve(&scenario.optimizer, &next, &x_new, &init)?;
        rows.push(StepRow {
            k,
            x: std::mem::replace(&mut x, x_new),
            u,
            reference: r_now,
            stage,
            x_next,
            j_temporal: f64::NAN,
            j_spatial: f64::NAN,
            j_approx: f64::INFINITY,
            branch: Branch::Temporal,
            iterations: sol.iterations,
            evaluations: 0,
            j_opt: sol.cost,
            warm_temporal: warm,
            warm_spatial: None,
            seq: sol.seq.clone(),
            offered: None,
            data_size: 0,
        });
        seq = sol.seq;
    }
    Ok(RunRecord {
        scenario: format!("{}-oracle", scenario.name),
        rows,
        counts: InvariantCounts::default(),
        stats: LearnStats::default(),
        final_state: x,
        elapsed: start.elapsed(),
        run_length: run_length(scenario),
        reference_period: scenario.reference.period(),
    })
}
