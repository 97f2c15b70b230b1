//! Closed-loop simulation of the prewrapped arm under the gain-scheduled
//! controller, RMS tracking metrics, and the passivity audit of a run.
//!
//! Loop: `u = K_p e + y_c` with controller input `u_c = ė` by default.
//! Plant and controller states are integrated together by classical RK4.

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{forward_dynamics, PlantState, RobotParams, TrajectorySpec};
use crate::error::{Error, Result};
use crate::gs_controller::GsController;
use crate::scheduling::{CombinedBound, GsPassivityIndices};
use crate::signals::{cumulative_inner_product, SampledSignal};

/// What the scheduled controller is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerInput {
    /// `u_c = θ̇_d − q̇`.
    #[default]
    ErrorRate,
    /// `u_c = −q̇`, ignoring the desired rate.
    NegativeRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// RK4 step, s.
    pub step: f64,
    /// Simulated time, s.
    pub horizon: f64,
    #[serde(default)]
    pub controller_input: ControllerInput,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { step: 1e-3, horizon: 8.5, controller_input: ControllerInput::ErrorRate }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Config(format!("sim step must be > 0, got {}", self.step)));
        }
        if !(self.horizon.is_finite()) || self.horizon < self.step * (1.0 - 1e-9) {
            return Err(Error::Config(format!("sim horizon must be >= step, got {} < {}", self.horizon, self.step)));
        }
        Ok(())
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub mode: String,
    pub alpha: Vec<f64>,
    pub q: SampledSignal,
    pub qdot: SampledSignal,
    pub theta_d: SampledSignal,
    pub theta_d_dot: SampledSignal,
    pub e: SampledSignal,
    pub edot: SampledSignal,
    /// Joint torques.
    pub u: SampledSignal,
    pub u_c: SampledSignal,
    pub y_c: SampledSignal,
    pub u_i: Vec<SampledSignal>,
    pub y_i: Vec<SampledSignal>,
}

impl SimulationLog {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.q.step()
    }

    /// Named channels in CSV order.
    pub fn channels(&self) -> Vec<(String, &SampledSignal)> {
        let mut out: Vec<(String, &SampledSignal)> = vec![
            ("q".into(), &self.q),
            ("qdot".into(), &self.qdot),
            ("theta_d".into(), &self.theta_d),
            ("theta_d_dot".into(), &self.theta_d_dot),
            ("e".into(), &self.e),
            ("edot".into(), &self.edot),
            ("u".into(), &self.u),
            ("u_c".into(), &self.u_c),
            ("y_c".into(), &self.y_c),
        ];
        for (i, (u, y)) in self.u_i.iter().zip(&self.y_i).enumerate() {
            out.push((format!("u{}", i + 1), u));
            out.push((format!("y{}", i + 1), y));
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let ch = self.channels();
        let named: Vec<(&str, &SampledSignal)> = ch.iter().map(|(n, s)| (n.as_str(), *s)).collect();
        crate::signals::write_csv(w, &named)
    }
}

/// Plant parameters, prewrap gain, controller and reference of one run.
#[derive(Debug, Clone, Copy)]
pub struct LoopSetup<'a> {
    pub plant: &'a RobotParams,
    pub kp: Matrix2<f64>,
    pub controller: &'a GsController,
    pub trajectory: &'a TrajectorySpec,
}

struct Sample {
    theta_d: Vector2<f64>,
    theta_d_dot: Vector2<f64>,
    u: Vector2<f64>,
    u_c: Vector2<f64>,
    y_c: DVector<f64>,
    u_i: Vec<DVector<f64>>,
    y_i: Vec<DVector<f64>>,
}

fn rhs(setup: &LoopSetup<'_>, input: ControllerInput, t: f64, z: &[f64]) -> Result<(Vec<f64>, Sample)> {
    let q = Vector2::new(z[0], z[1]);
    let qdot = Vector2::new(z[2], z[3]);
    let (theta_d, theta_d_dot) = setup.trajectory.eval(t)?;
    let e = theta_d - q;
    let u_c = match input {
        ControllerInput::ErrorRate => theta_d_dot - qdot,
        ControllerInput::NegativeRate => -qdot,
    };
    let ev = setup.controller.evaluate(&z[4..], t, u_c.as_slice())?;
    let u = setup.kp * e + Vector2::new(ev.y_c[0], ev.y_c[1]);
    let qddot = forward_dynamics(&PlantState { q, qdot }, &u, setup.plant);
    let mut dz = Vec::with_capacity(z.len());
    dz.extend_from_slice(&[qdot[0], qdot[1], qddot[0], qddot[1]]);
    dz.extend(ev.derivative.iter());
    Ok((dz, Sample { theta_d, theta_d_dot, u, u_c, y_c: ev.y_c, u_i: ev.u_i, y_i: ev.y_i }))
}

fn axpy(z: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    z.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

struct Recorder {
    cols: Vec<Vec<f64>>,
}

impl Recorder {
    fn push(&mut self, idx: usize, v: &[f64]) {
        self.cols[idx].extend_from_slice(v);
    }
}

/// Fixed-step RK4 of the closed loop from `q(0) = θ_d(0)`, `q̇(0) = 0` and
/// zero controller state. Every step is logged.
pub fn run_closed_loop(cfg: &SimConfig, setup: &LoopSetup<'_>, mode: &str) -> Result<SimulationLog> {
    cfg.validate()?;
    setup.plant.validate()?;
    let (q0, _) = setup.trajectory.eval(0.0)?;
    run_from(cfg, setup, mode, q0)
}

/// As [`run_closed_loop`] but starting at rest at `q0`.
pub fn run_from(cfg: &SimConfig, setup: &LoopSetup<'_>, mode: &str, q0: Vector2<f64>) -> Result<SimulationLog> {
    cfg.validate()?;
    let h = cfg.step;
    let steps = cfg.steps();
    let n_sub = setup.controller.len();
    let mut z = vec![0.0; 4 + setup.controller.state_dim()];
    z[0] = q0[0];
    z[1] = q0[1];

    // q, qdot, theta_d, theta_d_dot, e, edot, u, u_c, y_c, then u_i / y_i pairs
    let mut rec = Recorder { cols: vec![Vec::with_capacity(2 * (steps + 1)); 9 + 2 * n_sub] };
    let log_sample = |z: &[f64], s: &Sample, rec: &mut Recorder| {
        let q = [z[0], z[1]];
        let qd = [z[2], z[3]];
        rec.push(0, &q);
        rec.push(1, &qd);
        rec.push(2, s.theta_d.as_slice());
        rec.push(3, s.theta_d_dot.as_slice());
        rec.push(4, &[s.theta_d[0] - q[0], s.theta_d[1] - q[1]]);
        rec.push(5, &[s.theta_d_dot[0] - qd[0], s.theta_d_dot[1] - qd[1]]);
        rec.push(6, s.u.as_slice());
        rec.push(7, s.u_c.as_slice());
        rec.push(8, s.y_c.as_slice());
        for i in 0..n_sub {
            rec.push(9 + 2 * i, s.u_i[i].as_slice());
            rec.push(10 + 2 * i, s.y_i[i].as_slice());
        }
    };

    for k in 0..steps {
        let t = k as f64 * h;
        let (k1, s) = rhs(setup, cfg.controller_input, t, &z)?;
        log_sample(&z, &s, &mut rec);
        let (k2, _) = rhs(setup, cfg.controller_input, t + 0.5 * h, &axpy(&z, 0.5 * h, &k1))?;
        let (k3, _) = rhs(setup, cfg.controller_input, t + 0.5 * h, &axpy(&z, 0.5 * h, &k2))?;
        let (k4, _) = rhs(setup, cfg.controller_input, t + h, &axpy(&z, h, &k3))?;
        for (j, zj) in z.iter_mut().enumerate() {
            *zj += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if let Some(j) = z.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: (k + 1) as f64 * h,
                message: format!("state component {j} became non-finite"),
            });
        }
    }
    let (_, s) = rhs(setup, cfg.controller_input, steps as f64 * h, &z)?;
    log_sample(&z, &s, &mut rec);

    let mut sigs = rec
        .cols
        .into_iter()
        .map(|data| SampledSignal::from_flat(h, 2, data))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Divergence { time: steps as f64 * h, message: e.to_string() })?
        .into_iter();
    let mut next = || sigs.next().unwrap();
    let (q, qdot, theta_d, theta_d_dot, e, edot, u, u_c, y_c) =
        (next(), next(), next(), next(), next(), next(), next(), next(), next());
    let mut u_i = Vec::with_capacity(n_sub);
    let mut y_i = Vec::with_capacity(n_sub);
    for _ in 0..n_sub {
        u_i.push(next());
        y_i.push(next());
    }
    Ok(SimulationLog {
        mode: mode.to_string(),
        alpha: setup.controller.schedule().alpha().to_vec(),
        q,
        qdot,
        theta_d,
        theta_d_dot,
        e,
        edot,
        u,
        u_c,
        y_c,
        u_i,
        y_i,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: String,
    pub rms_e_deg: [f64; 2],
    pub rms_edot_degps: [f64; 2],
}

impl Metrics {
    /// `(e₁, e₂, ė₁, ė₂)`.
    pub fn columns(&self) -> [f64; 4] {
        [self.rms_e_deg[0], self.rms_e_deg[1], self.rms_edot_degps[0], self.rms_edot_degps[1]]
    }
}

/// Root mean square of each channel over all samples.
pub fn rms(sig: &SampledSignal) -> Vec<f64> {
    let n = sig.len() as f64;
    (0..sig.dim()).map(|i| (sig.channel(i).iter().map(|v| v * v).sum::<f64>() / n).sqrt()).collect()
}

/// RMS of the angle and rate errors in degrees and degrees per second.
pub fn rms_metrics(log: &SimulationLog) -> Result<Metrics> {
    if log.is_empty() {
        return Err(Error::invalid("empty simulation log"));
    }
    let e = rms(&log.e);
    let ed = rms(&log.edot);
    Ok(Metrics {
        mode: log.mode.clone(),
        rms_e_deg: [e[0].to_degrees(), e[1].to_degrees()],
        rms_edot_degps: [ed[0].to_degrees(), ed[1].to_degrees()],
    })
}

pub const AUDIT_HORIZONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub combined: CombinedBound,
    pub horizons: Vec<f64>,
    pub margins: Vec<f64>,
    /// Most negative margin tolerated at each horizon.
    pub slack: Vec<f64>,
    pub min_margin: f64,
    pub passed: bool,
}

/// Grid indices of `count` horizons spread evenly over `(0, span]`.
pub fn audit_indices(len: usize, count: usize) -> Vec<usize> {
    let last = len.saturating_sub(1);
    (1..=count).map(|k| ((k as f64 / count as f64) * last as f64).round() as usize).collect()
}

/// Checks `⟨u_c, y_c⟩_T ≥ β + δ‖u_c‖²_{2T} + ε‖y_c‖²_{2T}` with the
/// combined constants at evenly spaced horizons.
pub fn passivity_audit(log: &SimulationLog, idx: &GsPassivityIndices) -> Result<AuditReport> {
    if log.u_c.is_empty() || log.u_c.len() != log.y_c.len() {
        return Err(Error::invalid("log lacks matching u_c and y_c channels"));
    }
    let c = idx.combined();
    let uy = cumulative_inner_product(&log.u_c, &log.y_c)?;
    let uu = cumulative_inner_product(&log.u_c, &log.u_c)?;
    let yy = cumulative_inner_product(&log.y_c, &log.y_c)?;
    let mut report = AuditReport {
        combined: c,
        horizons: Vec::new(),
        margins: Vec::new(),
        slack: Vec::new(),
        min_margin: f64::INFINITY,
        passed: true,
    };
    for k in audit_indices(log.len(), AUDIT_HORIZONS) {
        let margin = uy[k] - c.beta - c.delta * uu[k] - c.epsilon * yy[k];
        let slack = -1e-8 * (1.0 + uu[k]);
        report.horizons.push(log.u_c.time(k));
        report.margins.push(margin);
        report.slack.push(slack);
        report.min_margin = report.min_margin.min(margin);
        report.passed &= margin >= slack;
    }
    Ok(report)
}

/// `(T, ⟨u_c, y_c⟩_T, Σ αᵢ⟨uᵢ, yᵢ⟩_T)` at the audit horizons.
pub fn energy_identity(log: &SimulationLog) -> Result<Vec<(f64, f64, f64)>> {
    let lhs = cumulative_inner_product(&log.u_c, &log.y_c)?;
    let parts =
        log.u_i.iter().zip(&log.y_i).map(|(u, y)| cumulative_inner_product(u, y)).collect::<Result<Vec<_>>>()?;
    Ok(audit_indices(log.len(), AUDIT_HORIZONS)
        .into_iter()
        .map(|k| {
            let rhs: f64 = parts.iter().zip(&log.alpha).map(|(p, a)| a * p[k]).sum();
            (log.u_c.time(k), lhs[k], rhs)
        })
        .collect())
}
