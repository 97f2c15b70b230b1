//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::time::Instant;

use nalgebra::{DMatrix, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gs_vsp::cli::{audit_mode, compare, synthesize_model};
use gs_vsp::config::RunConfig;
use gs_vsp::dynamics::{forward_dynamics, mass_matrix, nonlinear_forces, quintic_blend, PlantState, RobotParams};
use gs_vsp::linalg::{self, DenseMatrix};
use gs_vsp::scheduling::{
    classify_activity, compose_indices, eval_scalar_signals, lemma1_sum, uniform_grid, ScheduleMode, SchedulingConfig,
    SchedulingMatrixSet,
};
use gs_vsp::sim::{rms_metrics, SimConfig, SimulationLog};
use gs_vsp::synthesis::{log_grid, spr_certificate, vsp_margin};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

/// Reference RMS rows (deg, deg, deg/s, deg/s).
const REFERENCE: [(&str, [f64; 4]); 3] = [
    ("unscheduled", [0.8328, 0.6688, 2.5933, 1.5587]),
    ("scalar", [0.6839, 0.6464, 2.1307, 1.2702]),
    ("matrix", [0.0668, 0.4515, 0.1480, 1.1352]),
];

fn table_reproduction() -> Verdict {
    let start = Instant::now();
    let cfg = RunConfig::default();
    let model = synthesize_model(&cfg).unwrap();
    let cmp = compare(&cfg, &model).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for (row, (name, want)) in cmp.rows.iter().zip(REFERENCE) {
        assert_eq!(row.mode, name);
        let got = row.columns();
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs() / w);
        }
        rows.push(format!("{name} [{:.4}, {:.4}, {:.4}, {:.4}]", got[0], got[1], got[2], got[3]));
    }
    let within = worst <= 0.2;
    let ordered = cmp.ordering_holds();
    verdict(
        within && ordered && elapsed < 60.0,
        format!(
            "max relative deviation {worst:.3} (limit 0.2), ordering {}, {elapsed:.1} s; {}",
            if ordered { "holds" } else { "broken" },
            rows.join(", ")
        ),
    )
}

fn riccati_lyapunov() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in common::points() {
        let r = &p.realization;
        // the KYP Lyapunov equation is re-checked from the stored matrices
        let lyap = linalg::lyapunov_residual(&r.model.a, &r.p, &r.q).unwrap();
        let closed = &p.plant.a - &p.plant.b * &r.k;
        let hurwitz = linalg::is_hurwitz(&closed).unwrap() && linalg::is_hurwitz(&r.model.a).unwrap();
        ok &= p.care_residual <= 1e-8 && lyap <= 1e-9 && hurwitz;
        parts
            .push(format!("{}°: CARE {:.1e}, Lyapunov {:.1e}, Hurwitz {hurwitz}", p.theta2_deg, p.care_residual, lyap));
    }
    verdict(ok, parts.join("; "))
}

fn frequency_certificate() -> Verdict {
    let coarse = log_grid(1e-3, 1e5, 400);
    let fine = log_grid(1e-3, 1e5, 1600);
    let mut ok = true;
    let mut parts = Vec::new();
    for p in common::points() {
        let r = &p.realization;
        let cert = spr_certificate(r, &coarse).unwrap();
        let idx = r.indices().unwrap();
        let margin = vsp_margin(&r.model, &idx, &fine).unwrap();
        let bound = 2.0 * r.feedthrough * (1.0 - 1e-6);
        ok &= cert.min_hermitian_eig >= bound && margin >= -1e-9;
        parts.push(format!(
            "{}°: min eig {:.6e} vs {:.6e}, margin {:.1e}",
            p.theta2_deg, cert.min_hermitian_eig, bound, margin
        ));
    }
    verdict(ok, parts.join("; "))
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
}

fn lemma1_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut deficient = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let count = rng.random_range(1..=4);
        let mats: Vec<DenseMatrix> = (0..count)
            .map(|_| {
                let mut m = random_matrix(&mut rng, n);
                if rng.random_bool(0.3) {
                    m.set_column(rng.random_range(0..n), &nalgebra::DVector::zeros(n));
                }
                m
            })
            .collect();
        // oracle: squared smallest singular value of each nonsingular member
        let want: f64 = mats
            .iter()
            .map(|m| {
                let sv = m.clone().svd(false, false).singular_values;
                if sv.min() > n as f64 * sv.max() * f64::EPSILON {
                    sv.min().powi(2)
                } else {
                    deficient += 1;
                    0.0
                }
            })
            .sum();
        let fixed = mats.clone();
        let set = SchedulingMatrixSet::custom(n, vec![1.0; count], move |_, _| fixed.clone()).unwrap();
        worst = worst.max((lemma1_sum(&set, 0.0).unwrap() - want).abs());
    }
    verdict(worst <= 1e-9, format!("max |difference| {worst:.1e} over 1000 sets ({deficient} singular members)"))
}

fn passivity_audit() -> Verdict {
    let cfg = RunConfig::default();
    let model = synthesize_model(&cfg).unwrap();
    let (out, failure) = audit_mode(&cfg, &model, ScheduleMode::Matrix).unwrap();
    let audit = out.audit.as_ref();
    let audit_ok = failure.is_none() && audit.is_some_and(|a| a.passed && a.horizons.len() == 50);
    // scalar schedule: δ̂ = min δᵢ · min over t of Σ sᵢ(t)²
    let subs: Vec<_> = common::realizations().iter().map(|r| r.indices().unwrap()).collect();
    let grid = uniform_grid(cfg.sim.horizon, cfg.scheduling.grid_step).unwrap();
    let min_sq = grid
        .iter()
        .map(|&t| eval_scalar_signals(t).unwrap().iter().map(|s| s * s).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let delta_min = subs.iter().map(|s| s.delta).fold(f64::INFINITY, f64::min);
    let closed_form = delta_min * min_sq;
    let set = SchedulingMatrixSet::builtin(ScheduleMode::Scalar, &SchedulingConfig::default()).unwrap();
    let report = classify_activity(&set, &grid, 0.0).unwrap();
    let composed = compose_indices(&subs, &report, set.alpha()).unwrap().delta_hat;
    let gap = (composed - closed_form).abs();
    verdict(
        audit_ok && gap <= 1e-12,
        format!(
            "matrix audit {} (min margin {:.3e} at {} horizons); scalar δ̂ {composed:.6e} vs closed form {closed_form:.6e}",
            if audit_ok { "passed" } else { "failed" },
            audit.map_or(f64::NAN, |a| a.min_margin),
            audit.map_or(0, |a| a.horizons.len()),
        ),
    )
}

fn plant_physics() -> Verdict {
    let power = common::power_balance_mismatch(common::default_run(ScheduleMode::Matrix));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = RobotParams::nominal();
    let mut subst: f64 = 0.0;
    for _ in 0..10_000 {
        let mut r = || rng.random_range(-3.0..3.0);
        let s = PlantState { q: Vector2::new(r(), r()), qdot: Vector2::new(r(), r()) };
        let u = Vector2::new(10.0 * r(), 10.0 * r());
        let qdd = forward_dynamics(&s, &u, &p);
        let back = mass_matrix(&s.q, &p) * qdd - nonlinear_forces(&s, &p);
        subst = subst.max((back - u).norm() / (1.0 + u.norm()));
    }
    verdict(
        power <= 1e-5 && subst <= 1e-12,
        format!("power balance {power:.2e} (limit 1e-5), substitution {subst:.1e} (limit 1e-12)"),
    )
}

/// Knot table (s, deg, deg).
const KNOTS: [(f64, f64, f64); 10] = [
    (0.0, -90.0, 150.0),
    (0.5, -90.0, 150.0),
    (1.0, -60.0, 90.0),
    (2.0, -60.0, 90.0),
    (3.0, 45.0, 60.0),
    (5.0, 60.0, 45.0),
    (6.0, 90.0, -60.0),
    (6.5, 90.0, -60.0),
    (7.5, 150.0, -90.0),
    (8.5, 150.0, -90.0),
];

fn trajectory() -> Verdict {
    let traj = RunConfig::default().trajectory;
    let mut exact = true;
    let mut rate_at_knots: f64 = 0.0;
    let mut jump: f64 = 0.0;
    for &(t, a, b) in &KNOTS {
        let (pos, rate) = traj.eval(t).unwrap();
        exact &= pos == Vector2::new(a.to_radians(), b.to_radians());
        rate_at_knots = rate_at_knots.max(rate.amax());
        if t > 0.0 {
            // one-sided limit from the left
            let (_, left) = traj.eval(t - 1e-9).unwrap();
            jump = jump.max((left - rate).amax());
        }
    }
    let mid = quintic_blend(0.5);
    verdict(
        exact && rate_at_knots <= 1e-12 && jump <= 1e-12 && mid == 0.5,
        format!(
            "knots exact {exact}, max |θ̇_d| at knots {rate_at_knots:.1e}, max rate jump {jump:.1e}, p5(0.5) = {mid}"
        ),
    )
}

fn csv_bytes(log: &SimulationLog) -> Vec<u8> {
    let mut buf = Vec::new();
    log.write_csv(&mut buf).unwrap();
    buf
}

fn numerics_hygiene() -> Verdict {
    let mut worst: f64 = 0.0;
    for mode in ScheduleMode::ALL {
        let coarse = rms_metrics(common::default_run(mode)).unwrap();
        let fine = rms_metrics(&common::simulate(mode, &SimConfig { step: 5e-4, ..Default::default() })).unwrap();
        for (a, b) in coarse.columns().iter().zip(fine.columns()) {
            worst = worst.max((a - b).abs() / b);
        }
    }
    let again = common::simulate(ScheduleMode::Matrix, &SimConfig::default());
    let identical = csv_bytes(&again) == csv_bytes(common::default_run(ScheduleMode::Matrix));
    verdict(
        worst < 1e-3 && identical,
        format!("max metric change under step halving {worst:.2e} (limit 1e-3), repeat byte-identical {identical}"),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("RMS table within 20% and mode ordering", table_reproduction),
        ("Riccati and Lyapunov residuals, Hurwitz closed loops", riccati_lyapunov),
        ("frequency-domain VSP certificate", frequency_certificate),
        ("activity sum against singular-value oracle", lemma1_oracle),
        ("composed passivity audit and scalar closed form", passivity_audit),
        ("plant power balance and dynamics substitution", plant_physics),
        ("trajectory knots and rates", trajectory),
        ("step halving and determinism", numerics_hygiene),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("[{}] criterion {}: {name}: {}", if v.passed { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.passed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
