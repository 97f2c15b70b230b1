#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::Vector2;

use gs_vsp::config::RunConfig;
use gs_vsp::dynamics::{kinetic_energy, PlantState};
use gs_vsp::gs_controller::GsController;
use gs_vsp::scheduling::ScheduleMode;
use gs_vsp::sim::{run_closed_loop, LoopSetup, SimConfig, SimulationLog};
use gs_vsp::synthesis::{synthesize, SubcontrollerRealization, SynthesizedPoint};

pub fn points() -> &'static [SynthesizedPoint] {
    static P: OnceLock<Vec<SynthesizedPoint>> = OnceLock::new();
    P.get_or_init(|| {
        let cfg = RunConfig::default();
        synthesize(&cfg.robot.measured, &cfg.synthesis).expect("default synthesis")
    })
}

pub fn realizations() -> Vec<SubcontrollerRealization> {
    points().iter().map(|p| p.realization.clone()).collect()
}

pub fn controller(mode: ScheduleMode) -> GsController {
    GsController::for_mode(mode, &realizations(), &RunConfig::default().scheduling).unwrap()
}

pub fn simulate(mode: ScheduleMode, sim: &SimConfig) -> SimulationLog {
    let cfg = RunConfig::default();
    let ctrl = controller(mode);
    let setup = LoopSetup {
        plant: &cfg.robot.actual,
        kp: cfg.synthesis.kp_matrix(),
        controller: &ctrl,
        trajectory: &cfg.trajectory,
    };
    run_closed_loop(sim, &setup, mode.as_str()).unwrap()
}

/// Default-config run of a mode, computed once per test binary.
pub fn default_run(mode: ScheduleMode) -> &'static SimulationLog {
    static LOGS: OnceLock<Vec<SimulationLog>> = OnceLock::new();
    let logs = LOGS.get_or_init(|| ScheduleMode::ALL.iter().map(|&m| simulate(m, &SimConfig::default())).collect());
    &logs[ScheduleMode::ALL.iter().position(|&m| m == mode).unwrap()]
}

pub fn energy_series(log: &SimulationLog) -> Vec<f64> {
    let p = RunConfig::default().robot.actual;
    (0..log.len())
        .map(|k| {
            let s = PlantState {
                q: Vector2::from_column_slice(log.q.sample(k)),
                qdot: Vector2::from_column_slice(log.qdot.sample(k)),
            };
            kinetic_energy(&s, &p)
        })
        .collect()
}

/// Largest `|Ṫ − q̇ᵀu| / (1 + |q̇||u|)` along a default-schedule run, with
/// `Ṫ` from a five-point central difference of the logged kinetic energy.
pub fn power_balance_mismatch(log: &SimulationLog) -> f64 {
    let energy = energy_series(log);
    let h = log.step();
    // u has kinks or jumps where a scheduling signal starts or ends; the
    // difference stencil is meaningless across those instants
    let sig = RunConfig::default().scheduling.signals;
    let breaks = [sig.s1_end, sig.s2_start, sig.s2_end, sig.s3_start, sig.s3_full];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    // the three-point stencil is swamped by its h² term near motion onsets
    for k in 2..log.len() - 2 {
        let (lo, hi) = ((k - 2) as f64 * h, (k + 2) as f64 * h);
        if breaks.iter().any(|&b| b > lo - 1e-9 && b < hi + 1e-9) {
            continue;
        }
        let rate = (energy[k - 2] - 8.0 * energy[k - 1] + 8.0 * energy[k + 1] - energy[k + 2]) / (12.0 * h);
        let qd = log.qdot.sample(k);
        let u = log.u.sample(k);
        let power = qd[0] * u[0] + qd[1] * u[1];
        let scale = 1.0 + Vector2::from_column_slice(qd).norm() * Vector2::from_column_slice(u).norm();
        worst = worst.max((rate - power).abs() / scale);
        checked += 1;
    }
    assert!(checked + 30 > log.len(), "too few samples checked");
    worst
}
