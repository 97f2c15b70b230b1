//! Command-line front end and the pipelines behind each command.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gs_controller::GsController;
use crate::scheduling::{
    classify_activity, compose_indices, uniform_grid, Activity, GsPassivityIndices, ScheduleMode, SubcontrollerIndices,
};
use crate::signals::{format_value, SampledSignal};
use crate::sim::{passivity_audit, rms_metrics, run_closed_loop, AuditReport, LoopSetup, Metrics, SimulationLog};
use crate::synthesis::{synthesize, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "gs-vsp", version, about = "Gain-scheduled VSP controller synthesis and two-link arm experiments")]
pub struct Cli {
    /// JSON run configuration; the built-in defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` of the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Integration step, s.
    #[arg(long, global = true)]
    pub step: Option<f64>,
    /// Simulated time, s.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize and certify the subcontrollers; writes model.json.
    Synthesize,
    /// Run one closed-loop simulation; writes the log, metrics and plot data.
    Simulate {
        #[arg(long)]
        mode: ScheduleMode,
    },
    /// Run all three modes and tabulate their RMS errors.
    Compare,
    /// Certify the scheduled controller and audit a closed-loop run.
    Audit {
        #[arg(long)]
        mode: ScheduleMode,
    },
}

/// Loads the configuration and applies the command-line overrides.
pub fn resolve_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::embedded_default()?,
    };
    if let Some(s) = cli.step {
        cfg.sim.step = s;
    }
    if let Some(h) = cli.horizon {
        cfg.sim.horizon = h;
    }
    cfg.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("bad output path {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn synthesize_model(cfg: &RunConfig) -> Result<ModelFile> {
    let points = synthesize(&cfg.robot.measured, &cfg.synthesis)?;
    Ok(ModelFile::new(cfg.robot.measured, cfg.synthesis.clone(), points))
}

/// Reuses `model.json` in `out` when it was produced from the same design
/// inputs, otherwise synthesizes and writes it.
pub fn load_or_synthesize(cfg: &RunConfig, out: &Path) -> Result<ModelFile> {
    let path = out.join("model.json");
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(model) = ModelFile::from_json(&text) {
            if model.measured == cfg.robot.measured && model.synthesis == cfg.synthesis {
                return Ok(model);
            }
        }
    }
    let model = synthesize_model(cfg)?;
    write_atomic(&path, model.to_json()?.as_bytes())?;
    Ok(model)
}

pub fn build_controller(cfg: &RunConfig, model: &ModelFile, mode: ScheduleMode) -> Result<GsController> {
    GsController::for_mode(mode, &model.realizations(), &cfg.scheduling)
}

pub fn simulate_mode(cfg: &RunConfig, model: &ModelFile, mode: ScheduleMode) -> Result<SimulationLog> {
    let ctrl = build_controller(cfg, model, mode)?;
    let setup = LoopSetup {
        plant: &cfg.robot.actual,
        kp: cfg.synthesis.kp_matrix(),
        controller: &ctrl,
        trajectory: &cfg.trajectory,
    };
    run_closed_loop(&cfg.sim, &setup, mode.as_str())
}

fn csv_bytes(signals: &[(&str, &SampledSignal)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    crate::signals::write_csv(&mut buf, signals)?;
    Ok(buf)
}

/// Log, metrics and plot data of one mode.
pub fn write_simulation_outputs(out: &Path, log: &SimulationLog) -> Result<Metrics> {
    let mode = &log.mode;
    let mut buf = Vec::new();
    log.write_csv(&mut buf)?;
    write_atomic(&out.join(format!("log_{mode}.csv")), &buf)?;
    let metrics = rms_metrics(log)?;
    write_atomic(&out.join(format!("metrics_{mode}.json")), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    let plots: [(&str, Vec<(&str, &SampledSignal)>); 3] = [
        ("angles", vec![("theta_d", &log.theta_d), ("q", &log.q)]),
        ("errors", vec![("e", &log.e), ("edot", &log.edot)]),
        ("torques", vec![("u", &log.u)]),
    ];
    for (name, sigs) in plots {
        write_atomic(&out.join(format!("plot_{name}_{mode}.csv")), &csv_bytes(&sigs)?)?;
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Rows in the order unscheduled, scalar, matrix.
    pub rows: Vec<Metrics>,
    /// Per column, whether matrix < scalar < unscheduled.
    pub ordered: [bool; 4],
}

impl Comparison {
    pub fn ordering_holds(&self) -> bool {
        self.ordered.iter().all(|&b| b)
    }

    pub fn verdict(&self) -> String {
        const COLS: [&str; 4] = ["e1", "e2", "edot1", "edot2"];
        if self.ordering_holds() {
            "ordering matrix < scalar < unscheduled: holds in all columns".into()
        } else {
            let bad: Vec<&str> = COLS.iter().zip(self.ordered).filter(|(_, ok)| !ok).map(|(c, _)| *c).collect();
            format!("ordering matrix < scalar < unscheduled: violated in {}", bad.join(", "))
        }
    }

    pub fn table_csv(&self) -> String {
        let mut s = String::from("mode,e1,e2,edot1,edot2\n");
        for m in &self.rows {
            let cols: Vec<String> = m.columns().iter().map(|v| format_value(*v)).collect();
            s.push_str(&format!("{},{}\n", m.mode, cols.join(",")));
        }
        s
    }
}

/// Runs the three modes concurrently.
pub fn compare(cfg: &RunConfig, model: &ModelFile) -> Result<Comparison> {
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = ScheduleMode::ALL
            .iter()
            .map(|&mode| scope.spawn(move || (mode, simulate_mode(cfg, model, mode).and_then(|l| rms_metrics(&l)))))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                let (mode, res) = h.join().map_err(|_| Error::Numeric("simulation worker panicked".into()))?;
                res.map_err(|e| match e {
                    Error::Divergence { time, message } => {
                        Error::Divergence { time, message: format!("mode {mode}: {message}") }
                    }
                    other => Error::Numeric(format!("mode {mode} failed: {other}")),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let col = |i: usize| rows.iter().map(|m| m.columns()[i]).collect::<Vec<_>>();
    let mut ordered = [false; 4];
    for (i, o) in ordered.iter_mut().enumerate() {
        let c = col(i);
        // rows are unscheduled, scalar, matrix
        *o = c[2] < c[1] && c[1] < c[0];
    }
    Ok(Comparison { rows, ordered })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub mode: ScheduleMode,
    pub strongly_active: bool,
    pub active: bool,
    pub first_not_strongly_active: Option<f64>,
    pub activity_grid_points: usize,
    pub nu_inf: f64,
    pub sigma_psi_bar: f64,
    pub subcontrollers: Vec<SubcontrollerIndices>,
    pub indices: Option<GsPassivityIndices>,
    pub audit: Option<AuditReport>,
}

/// Activity certification, index composition and the closed-loop audit.
/// The output is complete up to the first failure, which is returned next
/// to it.
pub fn audit_mode(cfg: &RunConfig, model: &ModelFile, mode: ScheduleMode) -> Result<(AuditOutput, Option<Error>)> {
    let ctrl = build_controller(cfg, model, mode)?;
    let grid = uniform_grid(cfg.sim.horizon, cfg.scheduling.grid_step)?;
    let report = classify_activity(ctrl.schedule(), &grid, cfg.scheduling.rank_tol)?;
    let subs = ctrl.realizations().iter().map(|r| r.indices()).collect::<Result<Vec<_>>>()?;
    let mut out = AuditOutput {
        mode,
        strongly_active: report.is_strongly_active(),
        active: report.activity.iter().all(|a| *a >= Activity::Active),
        first_not_strongly_active: report.first_not_strongly_active(),
        activity_grid_points: grid.len(),
        nu_inf: report.nu_inf,
        sigma_psi_bar: report.sigma_psi_bar,
        subcontrollers: subs.clone(),
        indices: None,
        audit: None,
    };
    let idx = match compose_indices(&subs, &report, ctrl.schedule().alpha()) {
        Ok(i) => i,
        Err(e) => return Ok((out, Some(e))),
    };
    out.indices = Some(idx);
    let log = simulate_mode(cfg, model, mode)?;
    let audit = passivity_audit(&log, &idx)?;
    let failure = (!audit.passed).then(|| Error::Certification {
        message: format!("passivity inequality violated (minimum margin {:e})", audit.min_margin),
        time: audit.margins.iter().zip(&audit.slack).position(|(m, s)| m < s).map(|k| audit.horizons[k]),
    });
    out.audit = Some(audit);
    Ok((out, failure))
}

/// Executes one command; all output files go to the resolved directory.
pub fn run(cli: &Cli) -> Result<()> {
    let (cfg, out) = resolve_config(cli)?;
    fs::create_dir_all(&out)?;
    match &cli.command {
        Command::Synthesize => {
            let model = synthesize_model(&cfg)?;
            write_atomic(&out.join("model.json"), model.to_json()?.as_bytes())?;
            for p in &model.points {
                let idx = p.realization.indices()?;
                println!(
                    "theta2 = {:>7.2} deg: SPR certificate min eig {:.6e} >= {:.6e}, delta_i = {:.6e}, epsilon_i = {:.6e}",
                    p.theta2_deg, p.certificate.min_hermitian_eig, p.certificate.bound, idx.delta, idx.epsilon
                );
            }
        }
        Command::Simulate { mode } => {
            let model = load_or_synthesize(&cfg, &out)?;
            let log = simulate_mode(&cfg, &model, *mode)?;
            let m = write_simulation_outputs(&out, &log)?;
            println!(
                "{mode}: rms e = [{:.4}, {:.4}] deg, rms edot = [{:.4}, {:.4}] deg/s",
                m.rms_e_deg[0], m.rms_e_deg[1], m.rms_edot_degps[0], m.rms_edot_degps[1]
            );
        }
        Command::Compare => {
            let model = load_or_synthesize(&cfg, &out)?;
            let cmp = compare(&cfg, &model)?;
            write_atomic(&out.join("table4.csv"), cmp.table_csv().as_bytes())?;
            write_atomic(&out.join("comparison.json"), serde_json::to_string_pretty(&cmp)?.as_bytes())?;
            print!("{}", cmp.table_csv());
            println!("{}", cmp.verdict());
        }
        Command::Audit { mode } => {
            let model = load_or_synthesize(&cfg, &out)?;
            let (report, failure) = audit_mode(&cfg, &model, *mode)?;
            write_atomic(&out.join(format!("audit_{mode}.json")), serde_json::to_string_pretty(&report)?.as_bytes())?;
            if let Some(e) = failure {
                return Err(e);
            }
            let a = report.audit.as_ref().expect("audit present when certification passed");
            println!(
                "{mode}: strongly active, nu_inf = {:.6e}, sigma_psi_bar = {:.6e}, min margin {:.6e} over {} horizons",
                report.nu_inf,
                report.sigma_psi_bar,
                a.min_margin,
                a.horizons.len()
            );
        }
    }
    Ok(())
}
