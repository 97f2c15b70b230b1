//! Gain-scheduled controller built from parallel subcontrollers.
//!
//! Each subcontroller sees `uᵢ = Φᵢ(t)·u_c` and the controller output is
//! `y_c = Σ αᵢ Φᵢ(t)ᵀ yᵢ`. The subcontroller states are stacked into one
//! vector so they integrate together with the plant.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scheduling::{ScheduleMode, SchedulingConfig, SchedulingMatrixSet};
use crate::synthesis::SubcontrollerRealization;

#[derive(Debug, Clone)]
pub struct GsController {
    realizations: Vec<SubcontrollerRealization>,
    schedule: SchedulingMatrixSet,
    offsets: Vec<usize>,
}

/// Everything one evaluation of the controller produces.
#[derive(Debug, Clone)]
pub struct ControllerEval {
    pub derivative: DVector<f64>,
    pub u_i: Vec<DVector<f64>>,
    pub y_i: Vec<DVector<f64>>,
    pub y_c: DVector<f64>,
}

impl GsController {
    pub fn new(realizations: Vec<SubcontrollerRealization>, schedule: SchedulingMatrixSet) -> Result<Self> {
        if realizations.len() != schedule.len() {
            return Err(Error::invalid(format!(
                "{} subcontrollers for {} scheduling matrices",
                realizations.len(),
                schedule.len()
            )));
        }
        let n = schedule.dim();
        let mut offsets = Vec::with_capacity(realizations.len() + 1);
        offsets.push(0);
        for r in &realizations {
            r.model.validate()?;
            if r.model.inputs() != n || r.model.outputs() != n {
                return Err(Error::invalid("subcontroller I/O dimension differs from the schedule"));
            }
            offsets.push(offsets.last().unwrap() + r.model.states());
        }
        Ok(GsController { realizations, schedule, offsets })
    }

    /// Controller for one of the builtin modes. `all` holds the realizations
    /// in linearization order; the unscheduled controller keeps only the last.
    pub fn for_mode(mode: ScheduleMode, all: &[SubcontrollerRealization], cfg: &SchedulingConfig) -> Result<Self> {
        let schedule = SchedulingMatrixSet::builtin(mode, cfg)?;
        let realizations = match mode {
            ScheduleMode::Unscheduled => {
                vec![all.last().ok_or_else(|| Error::invalid("no subcontrollers available"))?.clone()]
            }
            _ => all.to_vec(),
        };
        Self::new(realizations, schedule)
    }

    pub fn schedule(&self) -> &SchedulingMatrixSet {
        &self.schedule
    }

    pub fn realizations(&self) -> &[SubcontrollerRealization] {
        &self.realizations
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn io_dim(&self) -> usize {
        self.schedule.dim()
    }

    pub fn state_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn check_input(&self, u_c: &[f64]) -> Result<()> {
        if u_c.len() != self.io_dim() {
            return Err(Error::invalid(format!("u_c has length {}, expected {}", u_c.len(), self.io_dim())));
        }
        Ok(())
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim() {
            return Err(Error::invalid(format!(
                "controller state has length {}, expected {}",
                state.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn block<'a>(&self, state: &'a [f64], i: usize) -> &'a [f64] {
        &state[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn distribute_input(&self, t: f64, u_c: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.check_input(u_c)?;
        let u = DVector::from_column_slice(u_c);
        Ok(self.schedule.eval(t)?.iter().map(|phi| phi * &u).collect())
    }

    pub fn collect_output(&self, t: f64, y_list: &[DVector<f64>]) -> Result<DVector<f64>> {
        let mats = self.schedule.eval(t)?;
        collect(&mats, self.schedule.alpha(), y_list, self.io_dim())
    }

    pub fn controller_derivative(&self, state: &[f64], t: f64, u_c: &[f64]) -> Result<DVector<f64>> {
        Ok(self.evaluate(state, t, u_c)?.derivative)
    }

    pub fn controller_output(&self, state: &[f64], t: f64, u_c: &[f64]) -> Result<DVector<f64>> {
        Ok(self.evaluate(state, t, u_c)?.y_c)
    }

    /// State derivative and outputs with a single schedule evaluation.
    pub fn evaluate(&self, state: &[f64], t: f64, u_c: &[f64]) -> Result<ControllerEval> {
        self.check_input(u_c)?;
        self.check_state(state)?;
        let mats = self.schedule.eval(t)?;
        let u = DVector::from_column_slice(u_c);
        let mut derivative = DVector::zeros(self.state_dim());
        let mut u_i = Vec::with_capacity(self.len());
        let mut y_i = Vec::with_capacity(self.len());
        for (i, (r, phi)) in self.realizations.iter().zip(&mats).enumerate() {
            let x = DVector::from_column_slice(self.block(state, i));
            let ui = phi * &u;
            let dx = &r.model.a * &x + &r.model.b * &ui;
            derivative.rows_mut(self.offsets[i], dx.len()).copy_from(&dx);
            y_i.push(&r.model.c * &x + &r.model.d * &ui);
            u_i.push(ui);
        }
        let y_c = collect(&mats, self.schedule.alpha(), &y_i, self.io_dim())?;
        Ok(ControllerEval { derivative, u_i, y_i, y_c })
    }
}

fn collect(mats: &[DenseMatrix], alpha: &[f64], y_list: &[DVector<f64>], n: usize) -> Result<DVector<f64>> {
    if y_list.len() != mats.len() || y_list.iter().any(|y| y.len() != n) {
        return Err(Error::invalid("output list does not match the scheduling matrices"));
    }
    let mut y_c = DVector::zeros(n);
    for ((phi, a), y) in mats.iter().zip(alpha).zip(y_list) {
        y_c += phi.tr_mul(y) * *a;
    }
    Ok(y_c)
}
