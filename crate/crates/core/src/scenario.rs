//! Scenario definitions: a serializable config and the three built-in setups.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{
    terminal_weight, CostFunction, LipschitzRule, MpcProblem, Polytope, QuadraticBarrierCost, TerminalRule,
    UnicycleCost,
};
use crate::error::{check_dim, Error, Result};
use crate::hull::DataPoint;
use crate::learner::{LatencySchedule, LearnerKind};
use crate::model::{DisturbanceSignal, LinearPlant, PlantModel, ServoParams, Unicycle};
use crate::rtopt::{IterationBudget, OptimizerConfig, TemporalWarmStart};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PlantConfig {
    DoubleIntegrator {
        ts: f64,
    },
    Unicycle {
        ts: f64,
    },
    Servo {
        ts: f64,
        #[serde(default)]
        params: ServoParams,
    },
    /// Discrete-time `x⁺ = A x + B u`, matrices given row by row.
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolytopeConfig {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `C z ≤ d`.
    Halfspaces { c: Vec<Vec<f64>>, d: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CostConfig {
    QuadraticBarrier {
        /// Diagonal of `Q`.
        q: Vec<f64>,
        /// Diagonal of `R`.
        r: Vec<f64>,
        epsilon: f64,
        delta: f64,
        #[serde(default)]
        terminal: TerminalRule,
        state: Option<PolytopeConfig>,
        input: Option<PolytopeConfig>,
    },
    Unicycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BudgetConfig {
    Iterations { count: usize },
    WallClock { micros: u64 },
}

impl BudgetConfig {
    pub fn budget(&self) -> IterationBudget {
        match *self {
            BudgetConfig::Iterations { count } => IterationBudget::Count(count),
            BudgetConfig::WallClock { micros } => IterationBudget::WallClock(Duration::from_micros(micros)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalConfig {
    /// Append `K (x_N - x_s)` with the Riccati gain of the terminal weight.
    #[default]
    LocalGain,
    Zero,
}

/// Reference level `r(k)`; the target state is `r · direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReferenceSignal {
    #[default]
    Regulation,
    /// `high` for the first half of every period, `low` for the second.
    PeriodicStep {
        period: usize,
        high: f64,
        low: f64,
        direction: Vec<f64>,
    },
}

impl ReferenceSignal {
    pub fn level(&self, k: usize) -> f64 {
        match self {
            ReferenceSignal::Regulation => 0.0,
            ReferenceSignal::PeriodicStep { period, high, low, .. } => {
                if k % period < period / 2 {
                    *high
                } else {
                    *low
                }
            }
        }
    }

    /// Distinct levels the signal takes.
    pub fn levels(&self) -> Vec<f64> {
        match self {
            ReferenceSignal::Regulation => vec![0.0],
            ReferenceSignal::PeriodicStep { high, low, .. } if high == low => vec![*high],
            ReferenceSignal::PeriodicStep { high, low, .. } => vec![*high, *low],
        }
    }

    pub fn target(&self, r: f64, n: usize) -> DVector<f64> {
        match self {
            ReferenceSignal::Regulation => DVector::zeros(n),
            ReferenceSignal::PeriodicStep { direction, .. } => DVector::from_column_slice(direction) * r,
        }
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            ReferenceSignal::Regulation => None,
            ReferenceSignal::PeriodicStep { period, .. } => Some(*period),
        }
    }
}

fn default_threshold() -> f64 {
    1e-2
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    #[serde(default)]
    pub learner: LearnerKind,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub latency: LatencySchedule,
    /// Seed the data set with the state-polytope vertices and the target.
    #[serde(default = "yes")]
    pub seed_vertices: bool,
    pub lipschitz: Option<LipschitzRule>,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learner: LearnerKind::Hull,
            threshold: default_threshold(),
            latency: LatencySchedule::default(),
            seed_vertices: true,
            lipschitz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantConfig,
    pub horizon: usize,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub budget: BudgetConfig,
    pub cost: CostConfig,
    #[serde(default = "no_disturbance")]
    pub disturbance: DisturbanceSignal,
    #[serde(default)]
    pub reference: ReferenceSignal,
    #[serde(default)]
    pub temporal: TemporalConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn no_disturbance() -> DisturbanceSignal {
    DisturbanceSignal::None
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Config(format!("{what} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn polytope(cfg: &PolytopeConfig) -> Result<Polytope> {
    match cfg {
        PolytopeConfig::Box { lower, upper } => Polytope::from_box(lower, upper),
        PolytopeConfig::Halfspaces { c, d } => Polytope::new(matrix(c, "polytope rows")?, DVector::from_column_slice(d)),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn double_integrator() -> Self {
        Self {
            name: "double-integrator".into(),
            plant: PlantConfig::DoubleIntegrator { ts: 0.1 },
            horizon: 10,
            steps: 3000,
            x0: vec![0.9, -0.9],
            budget: BudgetConfig::Iterations { count: 2 },
            cost: CostConfig::QuadraticBarrier {
                q: vec![1.0, 1.0],
                r: vec![1.0],
                epsilon: 0.1,
                delta: 0.1,
                terminal: TerminalRule::CurvatureBound,
                state: Some(PolytopeConfig::Box {
                    lower: vec![-2.0, -1.0],
                    upper: vec![3.0, 1.0],
                }),
                input: Some(PolytopeConfig::Box {
                    lower: vec![-1.0],
                    upper: vec![1.0],
                }),
            },
            disturbance: DisturbanceSignal::Quasiperiodic {
                amplitude: 0.09,
                ts: 0.1,
                frequency: 1.0,
            },
            reference: ReferenceSignal::Regulation,
            temporal: TemporalConfig::LocalGain,
            learning: LearningConfig {
                lipschitz: Some(LipschitzRule::Constant { value: 50.0 }),
                ..LearningConfig::default()
            },
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn unicycle() -> Self {
        let x0 = vec![1.0, 1.0, 1.0 + std::f64::consts::FRAC_PI_2];
        Self {
            name: "unicycle".into(),
            plant: PlantConfig::Unicycle { ts: 0.1 },
            horizon: 20,
            steps: 20 * 120,
            x0: x0.clone(),
            budget: BudgetConfig::Iterations { count: 2 },
            cost: CostConfig::Unicycle,
            disturbance: DisturbanceSignal::ResetSchedule { period: 120, x0 },
            reference: ReferenceSignal::Regulation,
            temporal: TemporalConfig::Zero,
            learning: LearningConfig {
                learner: LearnerKind::Lipschitz,
                seed_vertices: false,
                lipschitz: Some(LipschitzRule::Unicycle { ts: 0.1 }),
                ..LearningConfig::default()
            },
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn servo() -> Self {
        let params = ServoParams::default();
        let t = params.torque_row();
        let t_max = params.t_max;
        let mut c = Vec::new();
        let mut d = Vec::new();
        for (row, bound) in [
            (t.to_vec(), t_max),
            (vec![1.0, 0.0, 0.0, 0.0], 2.0),
            (vec![0.0, 1.0, 0.0, 0.0], 2.0),
            (vec![0.0, 1.0, 0.0, 1.0], 40.0),
        ] {
            c.push(row.clone());
            d.push(bound);
            c.push(row.iter().map(|v| -v).collect());
            d.push(bound);
        }
        Self {
            name: "servo".into(),
            plant: PlantConfig::Servo {
                ts: 0.1,
                params: params.clone(),
            },
            horizon: 10,
            steps: 30 * 200,
            x0: vec![0.0; 4],
            budget: BudgetConfig::Iterations { count: 1 },
            cost: CostConfig::QuadraticBarrier {
                q: vec![10.0, 0.1, 10.0, 0.1],
                r: vec![0.01],
                epsilon: 1e-3,
                delta: 0.1,
                terminal: TerminalRule::CurvatureBound,
                state: Some(PolytopeConfig::Halfspaces { c, d }),
                input: Some(PolytopeConfig::Box {
                    lower: vec![-params.v_max],
                    upper: vec![params.v_max],
                }),
            },
            disturbance: DisturbanceSignal::None,
            reference: ReferenceSignal::PeriodicStep {
                period: 200,
                high: 1.0,
                low: 0.0,
                direction: params.steady_state(1.0).iter().copied().collect(),
            },
            temporal: TemporalConfig::LocalGain,
            learning: LearningConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "double-integrator" | "di" => Ok(Self::double_integrator()),
            "unicycle" => Ok(Self::unicycle()),
            "servo" => Ok(Self::servo()),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected double-integrator, unicycle or servo)"
            ))),
        }
    }

    pub fn build(&self) -> Result<Scenario> {
        if self.horizon == 0 || self.steps == 0 {
            return Err(Error::Config("horizon and step count must be positive".into()));
        }
        if self.budget == (BudgetConfig::Iterations { count: 0 }) {
            return Err(Error::Config("at least one optimizer iteration per step is required".into()));
        }
        self.optimizer.validate()?;
        if !(self.learning.threshold >= 0.0) {
            return Err(Error::Config("significance threshold must be ≥ 0".into()));
        }
        let plant = match &self.plant {
            PlantConfig::DoubleIntegrator { ts } => PlantModel::Linear(LinearPlant::double_integrator(*ts)),
            PlantConfig::Unicycle { ts } => PlantModel::Unicycle(Unicycle { ts: *ts }),
            PlantConfig::Servo { ts, params } => PlantModel::Linear(LinearPlant::servo(params, *ts)),
            PlantConfig::Linear { a, b } => PlantModel::Linear(LinearPlant::new(matrix(a, "A")?, matrix(b, "B")?)?),
        };
        let n = plant.state_dim();
        check_dim("initial state", n, self.x0.len())?;
        if let DisturbanceSignal::ResetSchedule { x0, .. } = &self.disturbance {
            check_dim("reset state", n, x0.len())?;
        }
        if let ReferenceSignal::PeriodicStep { period, direction, .. } = &self.reference {
            check_dim("reference direction", n, direction.len())?;
            if *period < 2 {
                return Err(Error::Config("reference period must be at least 2".into()));
            }
        }

        let mut gain = None;
        let mut state_polytope = None;
        let cost = match &self.cost {
            CostConfig::QuadraticBarrier {
                q,
                r,
                epsilon,
                delta,
                terminal,
                state,
                input,
            } => {
                let linear = plant
                    .as_linear()
                    .ok_or_else(|| Error::Config("a quadratic barrier cost needs a linear plant".into()))?;
                check_dim("Q diagonal", n, q.len())?;
                check_dim("R diagonal", plant.input_dim(), r.len())?;
                let q = DMatrix::from_diagonal(&DVector::from_column_slice(q));
                let r = DMatrix::from_diagonal(&DVector::from_column_slice(r));
                let xs = state.as_ref().map(polytope).transpose()?;
                let us = input.as_ref().map(polytope).transpose()?;
                let dare = terminal_weight(linear, &q, &r, *epsilon, *delta, xs.as_ref(), us.as_ref(), *terminal)?;
                gain = Some(dare.k);
                state_polytope = xs.clone();
                CostFunction::QuadraticBarrier(QuadraticBarrierCost::new(q, r, dare.p, *epsilon, *delta, xs, us)?)
            }
            CostConfig::Unicycle => {
                if !matches!(plant, PlantModel::Unicycle(_)) {
                    return Err(Error::Config("the unicycle cost needs the unicycle plant".into()));
                }
                CostFunction::Unicycle(UnicycleCost)
            }
        };
        let temporal = match (self.temporal, gain) {
            (TemporalConfig::LocalGain, Some(k)) => TemporalWarmStart::LocalGain(k),
            (TemporalConfig::LocalGain, None) => {
                return Err(Error::Config("a local-gain temporal warm start needs a quadratic cost".into()))
            }
            (TemporalConfig::Zero, _) => TemporalWarmStart::Zero,
        };
        if self.learning.learner == LearnerKind::Hull && !cost.is_convex() {
            return Err(Error::Config("the convex-hull learner needs a convex cost".into()));
        }
        let lipschitz = match (self.learning.lipschitz, &self.plant) {
            (Some(rule), _) => rule,
            (None, PlantConfig::Unicycle { ts }) => LipschitzRule::Unicycle { ts: *ts },
            (None, _) if self.learning.learner == LearnerKind::Lipschitz => {
                return Err(Error::Config("the Lipschitz learner needs a `lipschitz` rule".into()))
            }
            (None, _) => LipschitzRule::Constant { value: 1.0 },
        };
        let problem = MpcProblem::new(Arc::new(plant), Arc::new(cost), self.horizon)?;
        Ok(Scenario {
            name: self.name.clone(),
            problem,
            x0: DVector::from_column_slice(&self.x0),
            steps: self.steps,
            budget: self.budget.budget(),
            disturbance: self.disturbance.clone(),
            reference: self.reference.clone(),
            temporal,
            learning: self.learning.clone(),
            lipschitz,
            optimizer: self.optimizer,
            state_polytope,
        })
    }
}

const SEED_STREAM: u64 = 0x5eed;

/// A validated, ready-to-run scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// The regulation problem; tracking targets are set per step.
    pub problem: MpcProblem,
    pub x0: DVector<f64>,
    pub steps: usize,
    pub budget: IterationBudget,
    pub disturbance: DisturbanceSignal,
    pub reference: ReferenceSignal,
    pub temporal: TemporalWarmStart,
    pub learning: LearningConfig,
    pub lipschitz: LipschitzRule,
    pub optimizer: OptimizerConfig,
    pub state_polytope: Option<Polytope>,
}

impl Scenario {
    pub fn problem_at(&self, r: f64) -> MpcProblem {
        self.problem.with_target(self.reference.target(r, self.problem.state_dim()))
    }

    /// Initial data for reference `r`: every state-polytope vertex with the
    /// zero sequence, and the target itself.
    ///
    /// Every vertex coordinate is scaled by its own factor drawn from
    /// `[1.01, 1.02)` with a fixed-seed stream. The vertices move away from the origin, so their hull
    /// still covers the polytope, and the distinct factors break the
    /// coplanarities of box-like faces and symmetry planes that the
    /// incremental hull cannot handle.
    pub fn seed_points(&self, r: f64) -> Vec<DataPoint> {
        let Some(poly) = &self.state_polytope else {
            return Vec::new();
        };
        let problem = self.problem_at(r);
        let zero = DVector::zeros(problem.sequence_len());
        let mut rng = ChaCha8Rng::seed_from_u64(SEED_STREAM);
        let mut out: Vec<DataPoint> = poly
            .vertices()
            .into_iter()
            .map(|v| {
                let v = v.map(|c| c * rng.gen_range(1.01..1.02));
                let j = problem.total_cost(&zero, &v);
                DataPoint::new(zero.clone(), v, j)
            })
            .collect();
        let target = problem.target.clone();
        let j = problem.total_cost(&zero, &target);
        out.push(DataPoint::new(zero, target, j));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_build() {
        for name in ["double-integrator", "unicycle", "servo"] {
            let s = ScenarioConfig::builtin(name).unwrap().build().unwrap();
            assert_eq!(s.x0.len(), s.problem.state_dim());
        }
        assert!(ScenarioConfig::builtin("pendulum").is_err());
    }

    #[test]
    fn toml_round_trip() {
        for cfg in [ScenarioConfig::double_integrator(), ScenarioConfig::unicycle(), ScenarioConfig::servo()] {
            let text = cfg.to_toml().unwrap();
            assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = ScenarioConfig::double_integrator();
        c.x0 = vec![0.0];
        assert!(matches!(c.build(), Err(Error::Dimension { .. })));
        let mut c = ScenarioConfig::double_integrator();
        c.horizon = 0;
        assert!(c.build().is_err());
        let mut c = ScenarioConfig::unicycle();
        c.learning.learner = LearnerKind::Hull;
        assert!(c.build().is_err());
        assert!(ScenarioConfig::from_toml("name = 3").is_err());
    }

    #[test]
    fn seeds_cover_the_box() {
        let s = ScenarioConfig::double_integrator().build().unwrap();
        let seeds = s.seed_points(0.0);
        assert_eq!(seeds.len(), 5);
        assert_eq!(seeds[4].j, 0.0);
        let servo = ScenarioConfig::servo().build().unwrap();
        assert_eq!(servo.seed_points(1.0).len(), 17);
    }

    #[test]
    fn periodic_step_levels() {
        let r = ReferenceSignal::PeriodicStep {
            period: 4,
            high: 1.0,
            low: 0.0,
            direction: vec![1.0],
        };
        let levels: Vec<f64> = (0..8).map(|k| r.level(k)).collect();
        assert_eq!(levels, [1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(r.target(2.0, 1)[0], 2.0);
    }
}
