//! Discrete-time plant models, external signals and discretization.
//!
//! Three plants are provided: a generic linear plant (used for the double
//! integrator and the servomechanism), and a forward-Euler unicycle. All of
//! them have the origin as an equilibrium and are pure functions of `(x, u)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Config("A must be square".into()));
        }
        check_dim("rows of B", a.nrows(), b.nrows())?;
        Ok(Self { a, b })
    }

    /// Double integrator with `B = [Ts², Ts]ᵀ`.
    pub fn double_integrator(ts: f64) -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]),
            b: DMatrix::from_row_slice(2, 1, &[ts * ts, ts]),
        }
    }

    /// Zero-order-hold discretization of the servomechanism.
    pub fn servo(params: &ServoParams, ts: f64) -> Self {
        let (ac, bc) = params.continuous_matrices();
        let (a, b) = discretize_zoh(&ac, &bc, ts);
        Self { a, b }
    }
}

/// Kinematic unicycle `ẋ = (u₁ cos x₃, u₁ sin x₃, u₂)` integrated with one
/// forward-Euler step per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unicycle {
    pub ts: f64,
}

/// Nominal dynamics `f(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Linear(LinearPlant),
    Unicycle(Unicycle),
}

impl PlantModel {
    pub fn state_dim(&self) -> usize {
        match self {
            PlantModel::Linear(p) => p.a.nrows(),
            PlantModel::Unicycle(_) => 3,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PlantModel::Linear(p) => p.b.ncols(),
            PlantModel::Unicycle(_) => 2,
        }
    }

    /// `f(x, u)` without dimension checks; the hot loops use this.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self {
            PlantModel::Linear(p) => {
                let mut next = &p.a * x;
                next.gemv(1.0, &p.b, u, 1.0);
                next
            }
            PlantModel::Unicycle(Unicycle { ts }) => {
                let (s, c) = x[2].sin_cos();
                DVector::from_vec(vec![
                    x[0] + ts * u[0] * c,
                    x[1] + ts * u[0] * s,
                    x[2] + ts * u[1],
                ])
            }
        }
    }

    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    pub fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match self {
            PlantModel::Linear(p) => (p.a.clone(), p.b.clone()),
            PlantModel::Unicycle(Unicycle { ts }) => {
                let (s, c) = x[2].sin_cos();
                let fx = DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        1.0,
                        0.0,
                        -ts * u[0] * s,
                        0.0,
                        1.0,
                        ts * u[0] * c,
                        0.0,
                        0.0,
                        1.0,
                    ],
                );
                let fu = DMatrix::from_row_slice(3, 2, &[ts * c, 0.0, ts * s, 0.0, 0.0, *ts]);
                (fx, fu)
            }
        }
    }

    pub fn as_linear(&self) -> Option<&LinearPlant> {
        match self {
            PlantModel::Linear(p) => Some(p),
            PlantModel::Unicycle(_) => None,
        }
    }
}

/// Checked `f(x, u)`.
pub fn step_nominal(plant: &PlantModel, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("state", plant.state_dim(), x.len())?;
    check_dim("input", plant.input_dim(), u.len())?;
    Ok(plant.step(x, u))
}

/// External signal `w(k)` added to the nominal successor state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceSignal {
    None,
    /// `wᵢ(k) = amplitude · sin(k·frequency·Ts + i·π/2)`, i.e. `[sin, cos, …]`.
    Quasiperiodic {
        amplitude: f64,
        ts: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
    /// Returns the state to `x0` after every `period` steps: `x(k+1) = x0` when
    /// `period` divides `k + 1`.
    ResetSchedule { period: usize, x0: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl DisturbanceSignal {
    /// `w(k)`; the reset schedule needs the current `(x, u)` to cancel `f(x, u)`.
    pub fn at(&self, k: usize, x: &DVector<f64>, u: &DVector<f64>, plant: &PlantModel) -> DVector<f64> {
        let n = plant.state_dim();
        match self {
            DisturbanceSignal::None => DVector::zeros(n),
            DisturbanceSignal::Quasiperiodic {
                amplitude,
                ts,
                frequency,
            } => {
                let phase = k as f64 * frequency * ts;
                DVector::from_fn(n, |i, _| {
                    amplitude * (phase + i as f64 * std::f64::consts::FRAC_PI_2).sin()
                })
            }
            DisturbanceSignal::ResetSchedule { x0, .. } if self.is_reset(k) => {
                DVector::from_column_slice(x0) - plant.step(x, u)
            }
            DisturbanceSignal::ResetSchedule { .. } => DVector::zeros(n),
        }
    }

    pub fn is_reset(&self, k: usize) -> bool {
        match self {
            DisturbanceSignal::ResetSchedule { period, .. } => *period > 0 && (k + 1) % period == 0,
            _ => false,
        }
    }
}

/// Checked `w(k)`.
pub fn disturbance_at(
    sig: &DisturbanceSignal,
    k: usize,
    x: &DVector<f64>,
    u: &DVector<f64>,
    plant: &PlantModel,
) -> Result<DVector<f64>> {
    check_dim("state", plant.state_dim(), x.len())?;
    check_dim("input", plant.input_dim(), u.len())?;
    if let DisturbanceSignal::ResetSchedule { x0, .. } = sig {
        check_dim("reset state", plant.state_dim(), x0.len())?;
    }
    Ok(sig.at(k, x, u, plant))
}

/// Zero-order-hold discretization `(A, B) = (e^{Ac Ts}, ∫₀^Ts e^{Ac s} ds Bc)`
/// from the exponential of the augmented matrix `[[Ac, Bc], [0, 0]]·Ts`.
pub fn discretize_zoh(ac: &DMatrix<f64>, bc: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ac.nrows();
    let m = bc.ncols();
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * ts));
    let e = aug.exp();
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

/// Physical constants of the DC-motor / gearbox / elastic-shaft / load
/// servomechanism. The defaults are the commonly used benchmark values; they
/// are configuration, not ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServoParams {
    /// Torsional rigidity of the shaft.
    pub k_theta: f64,
    /// Load inertia.
    pub j_load: f64,
    /// Motor inertia.
    pub j_motor: f64,
    /// Load viscous friction.
    pub beta_load: f64,
    /// Motor viscous friction.
    pub beta_motor: f64,
    /// Gear ratio.
    pub gear: f64,
    /// Motor constant.
    pub k_t: f64,
    /// Armature resistance.
    pub resistance: f64,
    /// Maximum admissible shaft torque.
    pub t_max: f64,
    /// Maximum input voltage.
    pub v_max: f64,
}

impl Default for ServoParams {
    fn default() -> Self {
        let d_shaft: f64 = 0.02;
        let shear_modulus = 81500.0e6;
        let polar_inertia = std::f64::consts::PI / 32.0 * d_shaft.powi(4);
        let j_motor = 0.5 * 100.0 * 0.1 * 0.1;
        Self {
            k_theta: shear_modulus * polar_inertia / 1.0,
            j_load: 50.0 * j_motor,
            j_motor,
            beta_load: 25.0,
            beta_motor: 0.1,
            gear: 20.0,
            k_t: 10.0,
            resistance: 20.0,
            t_max: 50.0e6 * std::f64::consts::PI / 16.0 * d_shaft.powi(3),
            v_max: 220.0,
        }
    }
}

impl ServoParams {
    /// Continuous-time `(Ac, Bc)` for `x = [θ_L, θ̇_L, θ_M, θ̇_M]`.
    pub fn continuous_matrices(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let Self {
            k_theta: k,
            j_load: jl,
            j_motor: jm,
            beta_load: bl,
            beta_motor: bm,
            gear: rho,
            k_t: kt,
            resistance: r,
            ..
        } = *self;
        #[rustfmt::skip]
        let ac = DMatrix::from_row_slice(4, 4, &[
            0.0, 1.0, 0.0, 0.0,
            -k / jl, -bl / jl, k / (rho * jl), 0.0,
            0.0, 0.0, 0.0, 1.0,
            k / (rho * jm), 0.0, -k / (rho * rho * jm), -(bm * r + kt * kt) / (jm * r),
        ]);
        let bc = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, kt / (r * jm)]);
        (ac, bc)
    }

    /// Row `c` of the shaft-torque output `T = c x`.
    pub fn torque_row(&self) -> [f64; 4] {
        [self.k_theta, 0.0, -self.k_theta / self.gear, 0.0]
    }

    /// Steady state producing load angle `r` with zero input.
    pub fn steady_state(&self, r: f64) -> DVector<f64> {
        DVector::from_vec(vec![r, 0.0, self.gear * r, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn double_integrator_step() {
        let p = PlantModel::Linear(LinearPlant::double_integrator(0.1));
        let x = step_nominal(&p, &v(&[0.0, 0.0]), &v(&[1.0])).unwrap();
        assert!((x[0] - 0.01).abs() < 1e-15 && (x[1] - 0.1).abs() < 1e-15);
        let x = step_nominal(&p, &v(&[0.0, 0.0]), &v(&[0.0])).unwrap();
        assert_eq!(x, v(&[0.0, 0.0]));
        // closed form (p + Ts v + Ts² u, v + Ts u)
        let x = step_nominal(&p, &v(&[0.3, -0.7]), &v(&[0.4])).unwrap();
        assert_eq!(x[0], 0.3 + 0.1 * -0.7 + 0.1 * 0.1 * 0.4);
        assert_eq!(x[1], -0.7 + 0.1 * 0.4);
    }

    #[test]
    fn unicycle_step_and_jacobian() {
        let p = PlantModel::Unicycle(Unicycle { ts: 0.1 });
        let x = step_nominal(&p, &v(&[0.0, 0.0, 0.0]), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(x, v(&[0.1, 0.0, 0.0]));
        let (x0, u0) = (v(&[0.2, -0.4, 1.3]), v(&[0.7, -0.2]));
        let (fx, _) = p.jacobians(&x0, &u0);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 3, &[
            1.0, 0.0, -0.1 * 0.7 * 1.3f64.sin(),
            0.0, 1.0, 0.1 * 0.7 * 1.3f64.cos(),
            0.0, 0.0, 1.0,
        ]);
        assert_eq!(fx, expected);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = PlantModel::Linear(LinearPlant::double_integrator(0.1));
        assert!(matches!(
            step_nominal(&p, &v(&[0.0]), &v(&[0.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(step_nominal(&p, &v(&[0.0, 0.0]), &v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn disturbances() {
        let p = PlantModel::Linear(LinearPlant::double_integrator(0.1));
        let (x, u) = (v(&[0.5, 0.1]), v(&[0.2]));
        let q = DisturbanceSignal::Quasiperiodic {
            amplitude: 0.09,
            ts: 0.1,
            frequency: 1.0,
        };
        let w = disturbance_at(&q, 0, &x, &u, &p).unwrap();
        assert!(w[0].abs() < 1e-15 && (w[1] - 0.09).abs() < 1e-15);
        let w = q.at(7, &x, &u, &p);
        assert!((w[0] - 0.09 * 0.7f64.sin()).abs() < 1e-15);
        assert!((w[1] - 0.09 * 0.7f64.cos()).abs() < 1e-15);
        for k in [0, 3, 1000] {
            assert_eq!(DisturbanceSignal::None.at(k, &x, &u, &p), v(&[0.0, 0.0]));
        }
    }

    #[test]
    fn reset_schedule_returns_to_x0() {
        let p = PlantModel::Unicycle(Unicycle { ts: 0.1 });
        let x0 = vec![1.0, 1.0, 1.0 + std::f64::consts::FRAC_PI_2];
        let sig = DisturbanceSignal::ResetSchedule {
            period: 120,
            x0: x0.clone(),
        };
        let (x, u) = (v(&[0.3, -2.0, 4.0]), v(&[0.9, -0.4]));
        let w = sig.at(119, &x, &u, &p);
        assert_eq!(w, v(&x0) - p.step(&x, &u));
        let next = p.step(&x, &u) + w;
        for (a, b) in next.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(sig.at(120, &x, &u, &p), v(&[0.0, 0.0, 0.0]));
        assert!(sig.is_reset(239) && !sig.is_reset(240));
        assert_eq!(sig.at(0, &x, &u, &p), v(&[0.0, 0.0, 0.0]));
    }

    #[test]
    fn zoh_zero_generator_and_double_integrator() {
        let (a, b) = discretize_zoh(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), 0.1);
        assert!((a - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((b - DMatrix::identity(2, 2) * 0.1).amax() < 1e-14);

        let ts = 0.37;
        let ac = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let bc = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let (a, b) = discretize_zoh(&ac, &bc, ts);
        let a_ref = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        let b_ref = DMatrix::from_row_slice(2, 1, &[ts * ts / 2.0, ts]);
        assert!((a - a_ref).amax() < 1e-14);
        assert!((b - b_ref).amax() < 1e-14);
    }

    #[test]
    fn servo_defaults() {
        let p = ServoParams::default();
        assert!((p.k_theta - 1280.2).abs() < 0.05);
        assert!((p.t_max - 78.5398).abs() < 1e-4);
        let (ac, bc) = p.continuous_matrices();
        assert!((ac[(3, 3)] + 10.2).abs() < 1e-12);
        assert!((bc[(3, 0)] - 1.0).abs() < 1e-12);
        // x_s(r) is an equilibrium of the continuous dynamics
        let xs = p.steady_state(0.8);
        assert!((&ac * &xs).amax() < 1e-9);
    }
}
