//! Planar two-link arm with point masses at the distal link ends, and the
//! quintic-blend joint trajectory it is asked to follow.
//!
//! Angles are radians internally; the trajectory knots are stored in
//! degrees because that is how they are configured.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Link lengths, m.
    pub l1: f64,
    pub l2: f64,
    /// Link masses, kg.
    pub m1: f64,
    pub m2: f64,
    /// m/s²; zero models motion in a horizontal plane.
    #[serde(default)]
    pub gravity: f64,
}

impl RobotParams {
    /// Parameters of the simulated arm.
    pub fn nominal() -> Self {
        RobotParams { l1: 1.10, l2: 0.85, m1: 0.40, m2: 0.90, gravity: 0.0 }
    }

    /// Parameters the controller designer believes in.
    pub fn measured() -> Self {
        RobotParams { l1: 1.08, l2: 0.83, m1: 0.44, m2: 0.99, gravity: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("m1", self.m1), ("m2", self.m2)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("robot parameter {name} must be > 0, got {v}")));
            }
        }
        if !self.gravity.is_finite() {
            return Err(Error::Config("gravity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub q: Vector2<f64>,
    pub qdot: Vector2<f64>,
}

pub fn mass_matrix(q: &Vector2<f64>, p: &RobotParams) -> Matrix2<f64> {
    let c2 = q[1].cos();
    let m22 = p.l2 * p.l2 * p.m2;
    let m12 = m22 + p.l1 * p.l2 * p.m2 * c2;
    let m11 = m22 + 2.0 * p.l1 * p.l2 * p.m2 * c2 + p.l1 * p.l1 * (p.m1 + p.m2);
    Matrix2::new(m11, m12, m12, m22)
}

/// Centripetal and Coriolis torques moved to the right-hand side, minus
/// gravity torques when `gravity` is nonzero (θ measured from the horizontal).
pub fn nonlinear_forces(state: &PlantState, p: &RobotParams) -> Vector2<f64> {
    let (q, qd) = (&state.q, &state.qdot);
    let h = p.m2 * p.l1 * p.l2 * q[1].sin();
    let mut f = Vector2::new(h * (qd[1] * qd[1] + 2.0 * qd[0] * qd[1]), -h * qd[0] * qd[0]);
    if p.gravity != 0.0 {
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        f[0] -= (p.m1 + p.m2) * p.gravity * p.l1 * c1 + p.m2 * p.gravity * p.l2 * c12;
        f[1] -= p.m2 * p.gravity * p.l2 * c12;
    }
    f
}

/// Joint accelerations `M(q)⁻¹(f_non + u)`.
pub fn forward_dynamics(state: &PlantState, u: &Vector2<f64>, p: &RobotParams) -> Vector2<f64> {
    let m = mass_matrix(&state.q, p);
    let rhs = nonlinear_forces(state, p) + u;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    Vector2::new((m[(1, 1)] * rhs[0] - m[(0, 1)] * rhs[1]) / det, (m[(0, 0)] * rhs[1] - m[(1, 0)] * rhs[0]) / det)
}

/// `½ q̇ᵀ M(q) q̇`.
pub fn kinetic_energy(state: &PlantState, p: &RobotParams) -> f64 {
    0.5 * state.qdot.dot(&(mass_matrix(&state.q, p) * state.qdot))
}

/// Normalized quintic blend `6η⁵ − 15η⁴ + 10η³`.
pub fn quintic_blend(eta: f64) -> f64 {
    eta * eta * eta * (10.0 + eta * (-15.0 + 6.0 * eta))
}

/// `d/dη` of [`quintic_blend`].
pub fn quintic_blend_rate(eta: f64) -> f64 {
    30.0 * eta * eta * (1.0 + eta * (-2.0 + eta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Knot {
    /// s
    pub t: f64,
    /// Joint angles, degrees.
    pub deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub knots: Vec<Knot>,
}

/// Allowed joint range, degrees.
pub const JOINT_RANGE_DEG: (f64, f64) = (-90.0, 150.0);

impl Default for TrajectorySpec {
    fn default() -> Self {
        let k = |t: f64, a: f64, b: f64| Knot { t, deg: [a, b] };
        TrajectorySpec {
            knots: vec![
                k(0.0, -90.0, 150.0),
                k(0.5, -90.0, 150.0),
                k(1.0, -60.0, 90.0),
                k(2.0, -60.0, 90.0),
                k(3.0, 45.0, 60.0),
                k(5.0, 60.0, 45.0),
                k(6.0, 90.0, -60.0),
                k(6.5, 90.0, -60.0),
                k(7.5, 150.0, -90.0),
                k(8.5, 150.0, -90.0),
            ],
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.knots.len() < 2 {
            return Err(Error::Config("trajectory needs at least two knots".into()));
        }
        if self.knots[0].t != 0.0 {
            return Err(Error::Config("first trajectory knot must be at t = 0".into()));
        }
        for w in self.knots.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Config(format!(
                    "knot times must be strictly ascending ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        let (lo, hi) = JOINT_RANGE_DEG;
        for k in &self.knots {
            if k.deg.iter().any(|a| !(*a >= lo && *a <= hi)) {
                return Err(Error::Config(format!("knot angles {:?} at t = {} outside [{lo}, {hi}] deg", k.deg, k.t)));
            }
        }
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.knots.last().map(|k| k.t).unwrap_or(0.0)
    }

    fn knot_rad(&self, i: usize) -> Vector2<f64> {
        let d = self.knots[i].deg;
        Vector2::new(d[0].to_radians(), d[1].to_radians())
    }

    /// Desired angles (rad) and rates (rad/s) at `t`; the last knot is held
    /// after the final time.
    pub fn eval(&self, t: f64) -> Result<(Vector2<f64>, Vector2<f64>)> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("trajectory time must be >= 0, got {t}")));
        }
        let n = self.knots.len();
        if t >= self.knots[n - 1].t {
            return Ok((self.knot_rad(n - 1), Vector2::zeros()));
        }
        // last knot with t_k <= t
        let k = self.knots.partition_point(|kn| kn.t <= t) - 1;
        let (t0, t1) = (self.knots[k].t, self.knots[k + 1].t);
        let h = t1 - t0;
        let eta = (t - t0) / h;
        let (a, b) = (self.knot_rad(k), self.knot_rad(k + 1));
        let delta = b - a;
        Ok((a + delta * quintic_blend(eta), delta * (quintic_blend_rate(eta) / h)))
    }
}

/// Convenience wrapper over [`TrajectorySpec::eval`].
pub fn trajectory_eval(spec: &TrajectorySpec, t: f64) -> Result<(Vector2<f64>, Vector2<f64>)> {
    spec.eval(t)
}
