//! Finite-horizon costs `J_N(U, x) = Σ l(x_j, u_j) + F(x_N)`.
//!
//! Constraints enter through recentred relaxed logarithmic barriers, so every
//! cost here is defined on all of `ℝ^{Nm} × ℝⁿ`. Divergent rollouts evaluate
//! to `+∞` instead of failing, which keeps warm-start comparisons total.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{LinearPlant, PlantModel};

/// Relaxed logarithmic barrier: `-ln z` above `delta`, and the C¹ quadratic
/// extension `½[((z-2δ)/δ)² - 1] - ln δ` at or below it.
pub fn relaxed_log_barrier(z: f64, delta: f64) -> f64 {
    if z > delta {
        -z.ln()
    } else {
        let t = (z - 2.0 * delta) / delta;
        0.5 * (t * t - 1.0) - delta.ln()
    }
}

pub fn relaxed_log_barrier_derivative(z: f64, delta: f64) -> f64 {
    if z > delta {
        -1.0 / z
    } else {
        (z - 2.0 * delta) / (delta * delta)
    }
}

pub fn relaxed_log_barrier_second_derivative(z: f64, delta: f64) -> f64 {
    if z > delta {
        1.0 / (z * z)
    } else {
        1.0 / (delta * delta)
    }
}

/// Polytope `{z : C z ≤ d}` with `d > 0`. Rows are stored normalized to
/// `d = 1`, so the barrier relaxation `delta` acts on relative margins.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    rows: DMatrix<f64>,
}

impl Polytope {
    pub fn new(c: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        check_dim("polytope offsets", c.nrows(), d.len())?;
        if d.iter().any(|&di| !(di > 0.0)) {
            return Err(Error::Config(
                "polytope offsets must be strictly positive (origin strictly feasible)".into(),
            ));
        }
        let mut rows = c;
        for (i, di) in d.iter().enumerate() {
            rows.row_mut(i).scale_mut(1.0 / di);
        }
        Ok(Self { rows })
    }

    /// Box `lower ≤ z ≤ upper` with `lower < 0 < upper`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        let n = lower.len();
        let mut c = DMatrix::zeros(2 * n, n);
        let mut d = DVector::zeros(2 * n);
        for i in 0..n {
            c[(2 * i, i)] = 1.0;
            d[2 * i] = upper[i];
            c[(2 * i + 1, i)] = -1.0;
            d[2 * i + 1] = -lower[i];
        }
        Self::new(c, d)
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Normalized constraint rows (`C z ≤ 1`).
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        (&self.rows * z).iter().all(|&v| v <= 1.0 + tol)
    }

    /// `Σᵢ B̂(1 - cᵢᵀz) - B̂(1) + B̂′(1)·cᵢᵀz`; zero value and slope at the origin.
    pub fn barrier(&self, z: &DVector<f64>, delta: f64) -> f64 {
        let b1 = relaxed_log_barrier(1.0, delta);
        let db1 = relaxed_log_barrier_derivative(1.0, delta);
        (&self.rows * z)
            .iter()
            .map(|&cz| relaxed_log_barrier(1.0 - cz, delta) - b1 + db1 * cz)
            .sum()
    }

    pub fn barrier_gradient(&self, z: &DVector<f64>, delta: f64) -> DVector<f64> {
        let db1 = relaxed_log_barrier_derivative(1.0, delta);
        let weights = (&self.rows * z).map(|cz| db1 - relaxed_log_barrier_derivative(1.0 - cz, delta));
        self.rows.tr_mul(&weights)
    }

    /// Barrier Hessian at the origin, `Σᵢ B̂″(1) cᵢcᵢᵀ`.
    pub fn hessian_at_origin(&self, delta: f64) -> DMatrix<f64> {
        self.rows.tr_mul(&self.rows) * relaxed_log_barrier_second_derivative(1.0, delta)
    }

    /// Global curvature bound `Σᵢ cᵢcᵢᵀ / δ²`: the recentred barrier never
    /// exceeds `½ zᵀ H z` with this `H`.
    pub fn curvature_bound(&self, delta: f64) -> DMatrix<f64> {
        self.rows.tr_mul(&self.rows) / (delta * delta)
    }

    /// All vertices, by enumerating `n`-subsets of active constraints.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let n = self.dim();
        let rows = self.rows.nrows();
        let mut out: Vec<DVector<f64>> = Vec::new();
        for subset in combinations(rows, n) {
            let a = DMatrix::from_fn(n, n, |i, j| self.rows[(subset[i], j)]);
            let Some(sol) = a.lu().solve(&DVector::from_element(n, 1.0)) else {
                continue;
            };
            if !sol.iter().all(|v| v.is_finite()) || !self.contains(&sol, 1e-9) {
                continue;
            }
            if out.iter().all(|o| (o - &sol).amax() > 1e-9) {
                out.push(sol);
            }
        }
        out
    }
}

pub(crate) fn combinations(len: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            if len - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, len, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// `l(x,u) = ‖x - x_s‖²_Q + ‖u‖²_R + ε B̂_x(x) + ε B̂_u(u)`, `F(x) = ‖x - x_s‖²_P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBarrierCost {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub epsilon: f64,
    pub delta: f64,
    pub state_constraints: Option<Polytope>,
    pub input_constraints: Option<Polytope>,
}

impl QuadraticBarrierCost {
    pub fn new(
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        p: DMatrix<f64>,
        epsilon: f64,
        delta: f64,
        state_constraints: Option<Polytope>,
        input_constraints: Option<Polytope>,
    ) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r), ("P", &p)] {
            if !m.is_square() || m.clone().cholesky().is_none() {
                return Err(Error::Config(format!("{name} must be positive definite")));
            }
        }
        check_dim("P", q.nrows(), p.nrows())?;
        if !(epsilon >= 0.0) || !(delta > 0.0) {
            return Err(Error::Config("barrier weight must be ≥ 0 and δ > 0".into()));
        }
        if let Some(poly) = &state_constraints {
            check_dim("state polytope", q.nrows(), poly.dim())?;
        }
        if let Some(poly) = &input_constraints {
            check_dim("input polytope", r.nrows(), poly.dim())?;
        }
        Ok(Self {
            q,
            r,
            p,
            epsilon,
            delta,
            state_constraints,
            input_constraints,
        })
    }

    fn barrier_x(&self, x: &DVector<f64>) -> f64 {
        self.state_constraints
            .as_ref()
            .map_or(0.0, |p| p.barrier(x, self.delta))
    }

    fn barrier_u(&self, u: &DVector<f64>) -> f64 {
        self.input_constraints
            .as_ref()
            .map_or(0.0, |p| p.barrier(u, self.delta))
    }
}

/// Unicycle costs `l(x,u) = 0.1 sin²(x₃/2) + ⁴√(1+x₁²+x₂²) - 1 + u₁⁸ + u₂⁸`
/// and `F(x) = 100 l(x, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnicycleCost;

impl UnicycleCost {
    pub const TERMINAL_SCALE: f64 = 100.0;

    fn state_part(x: &DVector<f64>) -> f64 {
        let h = (0.5 * x[2]).sin();
        0.1 * h * h + (1.0 + x[0] * x[0] + x[1] * x[1]).powf(0.25) - 1.0
    }

    fn state_gradient(x: &DVector<f64>) -> DVector<f64> {
        let s = 1.0 + x[0] * x[0] + x[1] * x[1];
        let radial = 0.5 * s.powf(-0.75);
        DVector::from_vec(vec![radial * x[0], radial * x[1], 0.05 * x[2].sin()])
    }
}

/// Stage and terminal cost of one of the supported problem classes.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction {
    QuadraticBarrier(QuadraticBarrierCost),
    Unicycle(UnicycleCost),
}

impl CostFunction {
    pub fn stage(&self, x: &DVector<f64>, u: &DVector<f64>, target: &DVector<f64>) -> f64 {
        match self {
            CostFunction::QuadraticBarrier(c) => {
                let e = x - target;
                let mut v = e.dot(&(&c.q * &e)) + u.dot(&(&c.r * u));
                if c.epsilon > 0.0 {
                    v += c.epsilon * (c.barrier_x(x) + c.barrier_u(u));
                }
                v
            }
            CostFunction::Unicycle(_) => {
                UnicycleCost::state_part(x) + u.iter().map(|ui| ui.powi(8)).sum::<f64>()
            }
        }
    }

    pub fn stage_gradient(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        target: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        match self {
            CostFunction::QuadraticBarrier(c) => {
                let e = x - target;
                let mut gx = (&c.q * &e + c.q.tr_mul(&e)) * 1.0;
                let mut gu = &c.r * u + c.r.tr_mul(u);
                if c.epsilon > 0.0 {
                    if let Some(p) = &c.state_constraints {
                        gx.axpy(c.epsilon, &p.barrier_gradient(x, c.delta), 1.0);
                    }
                    if let Some(p) = &c.input_constraints {
                        gu.axpy(c.epsilon, &p.barrier_gradient(u, c.delta), 1.0);
                    }
                }
                (gx, gu)
            }
            CostFunction::Unicycle(_) => (
                UnicycleCost::state_gradient(x),
                u.map(|ui| 8.0 * ui.powi(7)),
            ),
        }
    }

    pub fn terminal(&self, x: &DVector<f64>, target: &DVector<f64>) -> f64 {
        match self {
            CostFunction::QuadraticBarrier(c) => {
                let e = x - target;
                e.dot(&(&c.p * &e))
            }
            CostFunction::Unicycle(_) => UnicycleCost::TERMINAL_SCALE * UnicycleCost::state_part(x),
        }
    }

    pub fn terminal_gradient(&self, x: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
        match self {
            CostFunction::QuadraticBarrier(c) => {
                let e = x - target;
                &c.p * &e + c.p.tr_mul(&e)
            }
            CostFunction::Unicycle(_) => UnicycleCost::state_gradient(x) * UnicycleCost::TERMINAL_SCALE,
        }
    }

    /// `true` when `J_N` is jointly convex in `(U, x)` for linear dynamics.
    pub fn is_convex(&self) -> bool {
        matches!(self, CostFunction::QuadraticBarrier(_))
    }
}

/// The open-loop problem: plant, cost, horizon and the current target
/// `x_s(r)` (zero for regulation).
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub plant: Arc<PlantModel>,
    pub cost: Arc<CostFunction>,
    pub horizon: usize,
    pub target: DVector<f64>,
}

impl MpcProblem {
    pub fn new(plant: Arc<PlantModel>, cost: Arc<CostFunction>, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let n = plant.state_dim();
        Ok(Self {
            plant,
            cost,
            horizon,
            target: DVector::zeros(n),
        })
    }

    /// Same problem around another target state.
    pub fn with_target(&self, target: DVector<f64>) -> Self {
        Self {
            target,
            ..self.clone()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    /// Length `N·m` of a stacked input sequence.
    pub fn sequence_len(&self) -> usize {
        self.horizon * self.input_dim()
    }

    /// `Π_j U`.
    pub fn input(&self, seq: &DVector<f64>, j: usize) -> DVector<f64> {
        let m = self.input_dim();
        seq.rows(j * m, m).into_owned()
    }

    pub fn check(&self, seq: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
        check_dim("input sequence", self.sequence_len(), seq.len())?;
        check_dim("state", self.state_dim(), x.len())
    }

    /// Nominal predicted states `x_0 = x, …, x_N`.
    pub fn rollout(&self, seq: &DVector<f64>, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(self.horizon + 1);
        states.push(x.clone());
        for j in 0..self.horizon {
            let next = self.plant.step(&states[j], &self.input(seq, j));
            states.push(next);
        }
        states
    }

    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.cost.stage(x, u, &self.target)
    }

    /// `J_N(U, x)`; `+∞` when the rollout leaves the finite numbers.
    pub fn total_cost(&self, seq: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let mut state = x.clone();
        let mut total = 0.0;
        for j in 0..self.horizon {
            let u = self.input(seq, j);
            total += self.cost.stage(&state, &u, &self.target);
            state = self.plant.step(&state, &u);
            if !total.is_finite() || state.iter().any(|v| !v.is_finite()) {
                return f64::INFINITY;
            }
        }
        total += self.cost.terminal(&state, &self.target);
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Checked `J_N(U, x)`.
    pub fn cost(&self, seq: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
        self.check(seq, x)?;
        Ok(self.total_cost(seq, x))
    }

    /// `(J_N, ∇_U J_N)` by a backward adjoint sweep over the rollout.
    pub fn cost_and_gradient(&self, seq: &DVector<f64>, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let m = self.input_dim();
        let states = self.rollout(seq, x);
        if states.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("rollout diverged".into()));
        }
        // forward summation, bit-identical to `total_cost`
        let mut total = 0.0;
        for j in 0..self.horizon {
            total += self.cost.stage(&states[j], &self.input(seq, j), &self.target);
        }
        let terminal = &states[self.horizon];
        total += self.cost.terminal(terminal, &self.target);
        let mut costate = self.cost.terminal_gradient(terminal, &self.target);
        let mut grad = DVector::zeros(self.sequence_len());
        for j in (0..self.horizon).rev() {
            let u = self.input(seq, j);
            let xj = &states[j];
            let (lx, lu) = self.cost.stage_gradient(xj, &u, &self.target);
            let (fx, fu) = self.plant.jacobians(xj, &u);
            let gu = lu + fu.tr_mul(&costate);
            grad.rows_mut(j * m, m).copy_from(&gu);
            costate = lx + fx.tr_mul(&costate);
        }
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("non-finite cost or gradient".into()));
        }
        Ok((total, grad))
    }

    /// Checked `∇_U J_N(U, x)`.
    pub fn gradient(&self, seq: &DVector<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(seq, x)?;
        self.cost_and_gradient(seq, x).map(|(_, g)| g)
    }
}

/// Solution of the discrete algebraic Riccati equation with the associated
/// feedback `u = K x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let gain = s.lu().solve(&(&btp * a))?;
    let next = q + a.transpose() * p * a - a.transpose() * p * b * &gain;
    Some(((&next + next.transpose()) * 0.5, -gain))
}

/// Fixed-point Riccati iteration started at `P = Q`, run until the residual
/// `‖P - Ric(P)‖_max ≤ 1e-10 · max(1, ‖P‖_max)`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    const MAX_ITERATIONS: usize = 10_000;
    let mut p = q.clone();
    for it in 0..MAX_ITERATIONS {
        let (next, k) = riccati_map(a, b, q, r, &p)
            .ok_or_else(|| Error::Config("Riccati iteration hit a singular matrix".into()))?;
        let residual = (&next - &p).amax();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual <= 1e-10 * p.amax().max(1.0) {
            let (_, k) = riccati_map(a, b, q, r, &p).unwrap_or((p.clone(), k));
            return Ok(DareSolution {
                p,
                k,
                iterations: it + 1,
            });
        }
    }
    Err(Error::Config(
        "Riccati iteration did not converge in 10⁴ steps; is (A, B) stabilizable?".into(),
    ))
}

/// Which barrier curvature is folded into the Riccati weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalRule {
    /// `Q̄ = Q + ε H_x(0)`, `R̄ = R + ε H_u(0)`.
    OriginHessian,
    /// `Q̄ = Q + (ε/2) Σ cᵢcᵢᵀ/δ²` (and likewise for `R̄`). Since this bounds the
    /// recentred barrier from above everywhere, `F(Ax+BKx) - F(x) ≤ -l(x,Kx)`
    /// holds globally and the shifted warm start decreases `J_N` by at least
    /// the stage cost.
    #[default]
    CurvatureBound,
}

/// Terminal weight `P` and local gain `K` for a barrier-augmented quadratic cost.
pub fn terminal_weight(
    plant: &LinearPlant,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    epsilon: f64,
    delta: f64,
    state_constraints: Option<&Polytope>,
    input_constraints: Option<&Polytope>,
    rule: TerminalRule,
) -> Result<DareSolution> {
    let curvature = |poly: &Polytope| match rule {
        TerminalRule::OriginHessian => poly.hessian_at_origin(delta) * epsilon,
        TerminalRule::CurvatureBound => poly.curvature_bound(delta) * (0.5 * epsilon),
    };
    let mut q_bar = q.clone();
    let mut r_bar = r.clone();
    if let Some(p) = state_constraints {
        q_bar += curvature(p);
    }
    if let Some(p) = input_constraints {
        r_bar += curvature(p);
    }
    solve_dare(&plant.a, &plant.b, &q_bar, &r_bar)
}

/// How the Lipschitz constant `L(U)` of `J_N(U, ·)` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LipschitzRule {
    /// Closed-form bound for the unicycle cost with sampling time `ts`.
    Unicycle { ts: f64 },
    /// A fixed constant valid on the operating region.
    Constant { value: f64 },
}

impl LipschitzRule {
    pub fn constant(&self, seq: &DVector<f64>, horizon: usize) -> f64 {
        match *self {
            LipschitzRule::Unicycle { ts } => lipschitz_unicycle(seq, horizon, ts),
            LipschitzRule::Constant { value } => value,
        }
    }
}

/// `L_l = √(13/50)`, a bound on `‖∂l/∂x‖` for the unicycle stage cost.
pub fn unicycle_stage_lipschitz() -> f64 {
    (13.0f64 / 50.0).sqrt()
}

/// Spectral-norm bound on `∂f/∂x` of the Euler unicycle for forward speed `u₁`.
pub fn unicycle_dynamics_lipschitz(u1: f64, ts: f64) -> f64 {
    let a = ts * u1.abs();
    (1.0 + a * (1.0 + ts * ts * u1 * u1 / 4.0).sqrt() + ts * ts * u1 * u1 / 2.0).sqrt()
}

/// `L(U) = Σ_{i=0}^{N} (L_l + [i=N](L_F - L_l)) Π_{j<i} L_f(Π_j U)`.
pub fn lipschitz_unicycle(seq: &DVector<f64>, horizon: usize, ts: f64) -> f64 {
    let l_stage = unicycle_stage_lipschitz();
    let l_terminal = UnicycleCost::TERMINAL_SCALE * l_stage;
    let m = seq.len() / horizon.max(1);
    let mut total = 0.0;
    let mut product = 1.0;
    for i in 0..=horizon {
        total += if i == horizon { l_terminal } else { l_stage } * product;
        if i < horizon {
            product *= unicycle_dynamics_lipschitz(seq[i * m], ts);
        }
    }
    total
}
