//! Scheduling signals and scheduling matrices, activity classification of
//! a matrix set over a time grid, and composition of the passivity indices
//! of the gain-scheduled controller from those of its subcontrollers.
//!
//! Two different quantities are easy to confuse here: `nu_sv` is the
//! smallest singular value of a scheduling matrix, while `mix_nu` are the
//! coefficients that blend neighbouring signals into the first diagonal
//! entries of the matrix schedule.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Matrix,
    Scalar,
    Unscheduled,
}

impl ScheduleMode {
    pub const ALL: [ScheduleMode; 3] = [ScheduleMode::Unscheduled, ScheduleMode::Scalar, ScheduleMode::Matrix];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScheduleMode::Matrix => "matrix",
            ScheduleMode::Scalar => "scalar",
            ScheduleMode::Unscheduled => "unscheduled",
        }
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matrix" => Ok(ScheduleMode::Matrix),
            "scalar" => Ok(ScheduleMode::Scalar),
            "unscheduled" => Ok(ScheduleMode::Unscheduled),
            other => {
                Err(Error::invalid(format!("unknown schedule mode `{other}` (expected matrix, scalar or unscheduled)")))
            }
        }
    }
}

/// Three piecewise quartic scheduling signals, each in `[0, 1]`:
///
/// * `s1 = 1 − (t/s1_end)⁴` on `[0, s1_end]`, zero afterwards;
/// * `s2 = 1 − ((t − s2_center)/s2_half_width)⁴` on `[s2_start, s2_end]`, zero elsewhere;
/// * `s3` is zero before `s3_start`, `1 − ((t − s3_center)/s3_half_width)⁴`
///   up to `s3_full`, and one afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSchedule {
    pub s1_end: f64,
    pub s2_start: f64,
    pub s2_center: f64,
    pub s2_half_width: f64,
    pub s2_end: f64,
    pub s3_start: f64,
    pub s3_center: f64,
    pub s3_half_width: f64,
    pub s3_full: f64,
}

impl Default for ScalarSchedule {
    fn default() -> Self {
        ScalarSchedule {
            s1_end: 3.0,
            s2_start: 0.2,
            s2_center: 3.0,
            s2_half_width: 2.8,
            s2_end: 5.8,
            s3_start: 5.0,
            s3_center: 7.5,
            s3_half_width: 2.5,
            s3_full: 7.0,
        }
    }
}

fn quartic_bump(x: f64) -> f64 {
    let x2 = x * x;
    1.0 - x2 * x2
}

impl ScalarSchedule {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.s1_end,
            self.s2_start,
            self.s2_center,
            self.s2_half_width,
            self.s2_end,
            self.s3_start,
            self.s3_center,
            self.s3_half_width,
            self.s3_full,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("scheduling signal constants must be finite".into()));
        }
        // Knots written in decimal sit a rounding error off the bump edges.
        let slack = 1e-12;
        let ok = self.s1_end > 0.0
            && self.s2_half_width > 0.0
            && self.s3_half_width > 0.0
            && self.s2_start <= self.s2_end
            && self.s2_start >= self.s2_center - self.s2_half_width - slack
            && self.s2_end <= self.s2_center + self.s2_half_width + slack
            && self.s3_start <= self.s3_full
            && self.s3_start >= self.s3_center - self.s3_half_width - slack
            && self.s3_full <= self.s3_center + self.s3_half_width + slack;
        if !ok {
            return Err(Error::Config(format!(
                "scheduling signal constants leave [0, 1] or are out of order: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<[f64; 3]> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("schedule time must be >= 0, got {t}")));
        }
        let s1 = if t <= self.s1_end { quartic_bump(t / self.s1_end) } else { 0.0 };
        let s2 = if t >= self.s2_start && t <= self.s2_end {
            quartic_bump((t - self.s2_center) / self.s2_half_width).max(0.0)
        } else {
            0.0
        };
        let s3 = if t < self.s3_start {
            0.0
        } else if t <= self.s3_full {
            quartic_bump((t - self.s3_center) / self.s3_half_width).max(0.0)
        } else {
            1.0
        };
        Ok([s1, s2, s3])
    }
}

/// `(s₁, s₂, s₃)` of the default signal set.
pub fn eval_scalar_signals(t: f64) -> Result<[f64; 3]> {
    ScalarSchedule::default().eval(t)
}

/// Coefficients of the matrix schedule: `Φ₁[0,0] = μ₁s₁ + ν₁s₂`,
/// `Φ₃[0,0] = μ₂s₃ + ν₂s₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixCoefficients {
    pub mu: [f64; 2],
    pub mix_nu: [f64; 2],
}

impl Default for MixCoefficients {
    fn default() -> Self {
        MixCoefficients { mu: [2.0, 1.0], mix_nu: [4.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulingConfig {
    #[serde(default = "default_mode")]
    pub mode: ScheduleMode,
    /// Output gains of the matrix schedule.
    pub alpha: Vec<f64>,
    #[serde(flatten)]
    pub mix: MixCoefficients,
    /// Grid step used to certify activity, s.
    pub grid_step: f64,
    /// Rank tolerance for full-rank detection; zero selects the default.
    #[serde(default)]
    pub rank_tol: f64,
    #[serde(default)]
    pub signals: ScalarSchedule,
}

fn default_mode() -> ScheduleMode {
    ScheduleMode::Matrix
}

impl Default for SchedulingConfig {
    fn default() -> Self {
        SchedulingConfig {
            mode: ScheduleMode::Matrix,
            alpha: vec![2.0, 1.0, 2.0],
            mix: MixCoefficients::default(),
            grid_step: 1e-3,
            rank_tol: 0.0,
            signals: ScalarSchedule::default(),
        }
    }
}

impl SchedulingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != 3 {
            return Err(Error::Config(format!(
                "alpha needs one entry per subcontroller (3), got {}",
                self.alpha.len()
            )));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("alpha entries must be > 0".into()));
        }
        let coeffs = self.mix.mu.iter().chain(&self.mix.mix_nu);
        if coeffs.clone().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Config("mu and mix_nu coefficients must be > 0".into()));
        }
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::Config("scheduling grid_step must be > 0".into()));
        }
        if !(self.rank_tol >= 0.0) {
            return Err(Error::Config("rank_tol must be >= 0".into()));
        }
        self.signals.validate()
    }
}

/// Extra information a state- or signal-dependent schedule may use.
/// The builtin schedules depend on time only.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScheduleContext<'a> {
    pub plant_state: &'a [f64],
    pub exogenous: &'a [f64],
}

pub type MatrixFn = dyn Fn(f64, &ScheduleContext<'_>) -> Vec<DenseMatrix> + Send + Sync;

#[derive(Clone)]
enum Source {
    Builtin { mode: ScheduleMode, signals: ScalarSchedule, mix: MixCoefficients },
    Custom(Arc<MatrixFn>),
}

/// `N` square scheduling matrices `Φᵢ(t)` of dimension `n` with output
/// gains `αᵢ > 0`.
#[derive(Clone)]
pub struct SchedulingMatrixSet {
    dim: usize,
    alpha: Vec<f64>,
    source: Source,
}

impl fmt::Debug for SchedulingMatrixSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Builtin { mode, .. } => mode.as_str(),
            Source::Custom(_) => "custom",
        };
        f.debug_struct("SchedulingMatrixSet")
            .field("kind", &kind)
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl SchedulingMatrixSet {
    /// The robot schedules: matrix mode uses the configured `alpha`, scalar
    /// mode uses `Φᵢ = sᵢI` with unit gains, unscheduled mode is a single
    /// identity with unit gain.
    pub fn builtin(mode: ScheduleMode, cfg: &SchedulingConfig) -> Result<Self> {
        cfg.validate()?;
        let alpha = match mode {
            ScheduleMode::Matrix => cfg.alpha.clone(),
            ScheduleMode::Scalar => vec![1.0; 3],
            ScheduleMode::Unscheduled => vec![1.0],
        };
        Ok(SchedulingMatrixSet { dim: 2, alpha, source: Source::Builtin { mode, signals: cfg.signals, mix: cfg.mix } })
    }

    pub fn custom(
        dim: usize,
        alpha: Vec<f64>,
        f: impl Fn(f64, &ScheduleContext<'_>) -> Vec<DenseMatrix> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 || alpha.is_empty() {
            return Err(Error::invalid("schedule needs a positive dimension and at least one matrix"));
        }
        if alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::invalid("alpha entries must be > 0"));
        }
        Ok(SchedulingMatrixSet { dim, alpha, source: Source::Custom(Arc::new(f)) })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn mode(&self) -> Option<ScheduleMode> {
        match &self.source {
            Source::Builtin { mode, .. } => Some(*mode),
            Source::Custom(_) => None,
        }
    }

    pub fn eval(&self, t: f64) -> Result<Vec<DenseMatrix>> {
        self.eval_with(t, &ScheduleContext::default())
    }

    pub fn eval_with(&self, t: f64, ctx: &ScheduleContext<'_>) -> Result<Vec<DenseMatrix>> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("schedule time must be >= 0, got {t}")));
        }
        let mats = match &self.source {
            Source::Builtin { mode, signals, mix } => builtin_matrices(*mode, signals, mix, t)?,
            Source::Custom(f) => f(t, ctx),
        };
        if mats.len() != self.len() || mats.iter().any(|m| m.shape() != (self.dim, self.dim)) {
            return Err(Error::invalid("schedule returned matrices of the wrong count or shape"));
        }
        Ok(mats)
    }
}

fn builtin_matrices(
    mode: ScheduleMode,
    signals: &ScalarSchedule,
    mix: &MixCoefficients,
    t: f64,
) -> Result<Vec<DenseMatrix>> {
    if mode == ScheduleMode::Unscheduled {
        return Ok(vec![DMatrix::identity(2, 2)]);
    }
    let [s1, s2, s3] = signals.eval(t)?;
    Ok(match mode {
        ScheduleMode::Matrix => vec![
            DMatrix::from_row_slice(2, 2, &[mix.mu[0] * s1 + mix.mix_nu[0] * s2, 0.0, 0.0, s1]),
            DMatrix::from_row_slice(2, 2, &[s2, 0.0, s2, s2]),
            DMatrix::from_row_slice(2, 2, &[mix.mu[1] * s3 + mix.mix_nu[1] * s2, 0.0, 0.0, s3]),
        ],
        ScheduleMode::Scalar => [s1, s2, s3].iter().map(|&s| DMatrix::identity(2, 2) * s).collect(),
        ScheduleMode::Unscheduled => unreachable!(),
    })
}

/// `(Φᵢ(t), αᵢ)` for a mode named by string.
pub fn eval_matrices(cfg: &SchedulingConfig, t: f64, mode: &str) -> Result<Vec<(DenseMatrix, f64)>> {
    let set = SchedulingMatrixSet::builtin(mode.parse()?, cfg)?;
    Ok(set.eval(t)?.into_iter().zip(set.alpha().iter().copied()).collect())
}

/// `k·step` for `k = 0..=round(horizon/step)`.
pub fn uniform_grid(horizon: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(horizon >= 0.0) {
        return Err(Error::invalid("grid needs step > 0 and horizon >= 0"));
    }
    let n = (horizon / step).round() as usize;
    Ok((0..=n).map(|k| k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    /// Every scheduling matrix is zero.
    AllZero,
    /// Some matrix is nonzero but none has full rank.
    Active,
    /// Some matrix has full rank.
    StronglyActive,
}

impl Activity {
    pub fn is_active(self) -> bool {
        self >= Activity::Active
    }

    pub fn is_strongly_active(self) -> bool {
        self == Activity::StronglyActive
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ActivityReport {
    pub grid: Vec<f64>,
    /// Indices of full-rank matrices at each grid time.
    pub full_rank: Vec<Vec<usize>>,
    pub activity: Vec<Activity>,
    /// `Σ_{i∈F(t)} nu_svᵢ²(t)` at each grid time.
    pub nu_sq_sum: Vec<f64>,
    /// Largest singular value of `[Φ₁ … Φ_N]` at each grid time.
    pub sigma_psi: Vec<f64>,
    pub nu_inf: f64,
    pub sigma_psi_bar: f64,
}

impl ActivityReport {
    pub fn is_active(&self) -> bool {
        self.activity.iter().all(|a| a.is_active())
    }

    pub fn is_strongly_active(&self) -> bool {
        self.activity.iter().all(|a| a.is_strongly_active())
    }

    pub fn first_not_strongly_active(&self) -> Option<f64> {
        self.activity.iter().position(|a| !a.is_strongly_active()).map(|k| self.grid[k])
    }

    pub fn first_inactive(&self) -> Option<f64> {
        self.activity.iter().position(|a| !a.is_active()).map(|k| self.grid[k])
    }
}

/// Horizontal stack `Ψ = [Φ₁ … Φ_N]`.
pub fn stack_horizontal(mats: &[DenseMatrix]) -> DenseMatrix {
    let n = mats[0].nrows();
    let mut psi = DMatrix::zeros(n, n * mats.len());
    for (i, m) in mats.iter().enumerate() {
        psi.view_mut((0, i * m.ncols()), m.shape()).copy_from(m);
    }
    psi
}

pub fn classify_activity(set: &SchedulingMatrixSet, grid: &[f64], tol: f64) -> Result<ActivityReport> {
    if grid.is_empty() {
        return Err(Error::invalid("activity grid is empty"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("activity grid must be strictly ascending"));
    }
    let n = set.dim();
    let mut report = ActivityReport {
        grid: grid.to_vec(),
        full_rank: Vec::with_capacity(grid.len()),
        activity: Vec::with_capacity(grid.len()),
        nu_sq_sum: Vec::with_capacity(grid.len()),
        sigma_psi: Vec::with_capacity(grid.len()),
        nu_inf: f64::INFINITY,
        sigma_psi_bar: 0.0,
    };
    for &t in grid {
        let mats = set.eval(t)?;
        let mut full = Vec::new();
        let mut any_nonzero = false;
        let mut nu_sq = 0.0;
        for (i, m) in mats.iter().enumerate() {
            any_nonzero |= m.iter().any(|v| *v != 0.0);
            let sv = linalg::singular_values(m)?;
            let rank_tol = if tol == 0.0 { linalg::default_rank_tol(n, n, sv[0]) } else { tol };
            if sv.iter().filter(|&&s| s > rank_tol).count() == n {
                full.push(i);
                let nu_sv = sv[n - 1];
                nu_sq += nu_sv * nu_sv;
            }
        }
        let activity = if !full.is_empty() {
            Activity::StronglyActive
        } else if any_nonzero {
            Activity::Active
        } else {
            Activity::AllZero
        };
        let sigma = linalg::induced_norm_2(&stack_horizontal(&mats))?;
        report.nu_inf = report.nu_inf.min(nu_sq);
        report.sigma_psi_bar = report.sigma_psi_bar.max(sigma);
        report.full_rank.push(full);
        report.activity.push(activity);
        report.nu_sq_sum.push(nu_sq);
        report.sigma_psi.push(sigma);
    }
    Ok(report)
}

/// `Σᵢ λ_min(ΦᵢᵀΦᵢ)` over all matrices of the set at time `t`.
pub fn lemma1_sum(set: &SchedulingMatrixSet, t: f64) -> Result<f64> {
    let mut sum = 0.0;
    for m in set.eval(t)? {
        let gram = m.transpose() * &m;
        sum += linalg::min_eig_sym(&gram)?.max(0.0);
    }
    Ok(sum)
}

/// Passivity constants of one subcontroller: `⟨u, y⟩_T ≥ β + δ‖u‖² + ε‖y‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubcontrollerIndices {
    pub beta: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl SubcontrollerIndices {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta <= 0.0) || !(self.delta > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::invalid(format!(
                "subcontroller indices need beta <= 0, delta > 0, epsilon > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsPassivityIndices {
    /// ISP offset `Σ αᵢβᵢ`.
    pub beta_hat: f64,
    /// `min αᵢδᵢ`.
    pub delta_min: f64,
    /// ISP level `delta_min · nu_inf`.
    pub delta_hat: f64,
    /// OSP offset `Σ αᵢβᵢ`.
    pub beta_bar: f64,
    /// `min αᵢεᵢ`.
    pub epsilon_min: f64,
    /// OSP level `epsilon_min / (alpha_max² · sigma_psi_bar²)`.
    pub epsilon_bar: f64,
    pub alpha_max: f64,
    pub nu_inf: f64,
    pub sigma_psi_bar: f64,
}

/// Constants of the simultaneous bound
/// `⟨u_c, y_c⟩_T ≥ beta + delta‖u_c‖² + epsilon‖y_c‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedBound {
    pub beta: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl GsPassivityIndices {
    pub fn combined(&self) -> CombinedBound {
        CombinedBound {
            beta: 0.5 * (self.beta_hat + self.beta_bar),
            delta: 0.5 * self.delta_hat,
            epsilon: 0.5 * self.epsilon_bar,
        }
    }
}

pub fn compose_indices(
    sub: &[SubcontrollerIndices],
    report: &ActivityReport,
    alpha: &[f64],
) -> Result<GsPassivityIndices> {
    if sub.is_empty() || sub.len() != alpha.len() {
        return Err(Error::invalid(format!(
            "need one alpha per subcontroller ({} indices, {} gains)",
            sub.len(),
            alpha.len()
        )));
    }
    for s in sub {
        s.validate()?;
    }
    if alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::invalid("alpha entries must be > 0"));
    }
    if let Some(t) = report.first_not_strongly_active() {
        return Err(Error::Certification {
            message: format!("scheduling matrices are not strongly active at t = {t}"),
            time: Some(t),
        });
    }
    let weighted_beta: f64 = sub.iter().zip(alpha).map(|(s, a)| a * s.beta).sum();
    let delta_min = sub.iter().zip(alpha).map(|(s, a)| a * s.delta).fold(f64::INFINITY, f64::min);
    let epsilon_min = sub.iter().zip(alpha).map(|(s, a)| a * s.epsilon).fold(f64::INFINITY, f64::min);
    let alpha_max = alpha.iter().copied().fold(0.0, f64::max);
    let sigma = report.sigma_psi_bar;
    Ok(GsPassivityIndices {
        beta_hat: weighted_beta,
        delta_min,
        delta_hat: delta_min * report.nu_inf,
        beta_bar: weighted_beta,
        epsilon_min,
        epsilon_bar: epsilon_min / (alpha_max * alpha_max * sigma * sigma),
        alpha_max,
        nu_inf: report.nu_inf,
        sigma_psi_bar: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[f64]) -> DenseMatrix {
        DMatrix::from_row_slice(2, 2, rows)
    }

    #[test]
    fn scalar_signal_examples() {
        assert_eq!(eval_scalar_signals(0.0).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(eval_scalar_signals(3.0).unwrap(), [0.0, 1.0, 0.0]);
        assert_eq!(eval_scalar_signals(8.0).unwrap(), [0.0, 0.0, 1.0]);
        assert!(eval_scalar_signals(-1e-9).is_err());
    }

    #[test]
    fn signals_stay_in_unit_interval() {
        let s = ScalarSchedule::default();
        for k in 0..=12_000 {
            let v = s.eval(k as f64 * 1e-3).unwrap();
            assert!(v.iter().all(|x| (0.0..=1.0).contains(x)), "{v:?} at {k}");
        }
    }

    #[test]
    fn matrix_mode_examples() {
        let cfg = SchedulingConfig::default();
        let at0 = eval_matrices(&cfg, 0.0, "matrix").unwrap();
        assert_eq!(at0[0].0, m(&[2.0, 0.0, 0.0, 1.0]));
        assert_eq!(at0[1].0, DMatrix::zeros(2, 2));
        assert_eq!(at0[2].0, DMatrix::zeros(2, 2));
        assert_eq!(at0.iter().map(|p| p.1).collect::<Vec<_>>(), vec![2.0, 1.0, 2.0]);

        let at3 = eval_matrices(&cfg, 3.0, "matrix").unwrap();
        assert_eq!(at3[0].0, m(&[4.0, 0.0, 0.0, 0.0]));
        assert_eq!(at3[1].0, m(&[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(at3[2].0, m(&[2.0, 0.0, 0.0, 0.0]));

        let at8 = eval_matrices(&cfg, 8.0, "matrix").unwrap();
        assert_eq!(at8[0].0, DMatrix::zeros(2, 2));
        assert_eq!(at8[1].0, DMatrix::zeros(2, 2));
        assert_eq!(at8[2].0, DMatrix::identity(2, 2));
    }

    #[test]
    fn other_modes() {
        let cfg = SchedulingConfig::default();
        let sc = eval_matrices(&cfg, 0.0, "scalar").unwrap();
        assert_eq!(sc[0], (DMatrix::identity(2, 2), 1.0));
        assert_eq!(sc[1].0, DMatrix::zeros(2, 2));
        let un = eval_matrices(&cfg, 4.2, "unscheduled").unwrap();
        assert_eq!(un, vec![(DMatrix::identity(2, 2), 1.0)]);
        assert!(matches!(eval_matrices(&cfg, 0.0, "diagonal"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lemma1_examples() {
        let set = SchedulingMatrixSet::builtin(ScheduleMode::Matrix, &SchedulingConfig::default()).unwrap();
        let v = lemma1_sum(&set, 3.0).unwrap();
        assert!((v - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12, "{v}");
        assert!((lemma1_sum(&set, 8.0).unwrap() - 1.0).abs() < 1e-12);
        let deficient = SchedulingMatrixSet::custom(2, vec![1.0, 1.0], |_, _| {
            vec![m(&[1.0, 2.0, 2.0, 4.0]), m(&[0.0, 0.0, 0.0, 3.0])]
        })
        .unwrap();
        assert!(lemma1_sum(&deficient, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn classify_matrix_mode_is_strongly_active() {
        let set = SchedulingMatrixSet::builtin(ScheduleMode::Matrix, &SchedulingConfig::default()).unwrap();
        let grid = uniform_grid(8.5, 0.01).unwrap();
        let r = classify_activity(&set, &grid, 0.0).unwrap();
        assert!(r.is_strongly_active());
        assert!(r.nu_inf > 0.0);
        assert_eq!(r.full_rank[300], vec![1]);
    }

    #[test]
    fn classify_all_zero() {
        let set = SchedulingMatrixSet::custom(2, vec![1.0, 1.0], |_, _| vec![DMatrix::zeros(2, 2); 2]).unwrap();
        let r = classify_activity(&set, &[0.0, 0.5, 1.0], 0.0).unwrap();
        assert!(!r.is_active());
        assert!(r.full_rank.iter().all(Vec::is_empty));
        assert_eq!(r.nu_inf, 0.0);
        assert_eq!(r.first_inactive(), Some(0.0));
        assert!(classify_activity(&set, &[], 0.0).is_err());
        assert!(classify_activity(&set, &[1.0, 0.5], 0.0).is_err());
    }

    #[test]
    fn scalar_mode_is_strongly_active() {
        let set = SchedulingMatrixSet::builtin(ScheduleMode::Scalar, &SchedulingConfig::default()).unwrap();
        let grid = uniform_grid(8.5, 0.01).unwrap();
        let r = classify_activity(&set, &grid, 0.0).unwrap();
        assert!(r.is_strongly_active());
        let direct = grid
            .iter()
            .map(|&t| eval_scalar_signals(t).unwrap().iter().map(|s| s * s).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        assert!((r.nu_inf - direct).abs() < 1e-14);
    }

    #[test]
    fn compose_examples() {
        let set = SchedulingMatrixSet::builtin(ScheduleMode::Matrix, &SchedulingConfig::default()).unwrap();
        let grid = uniform_grid(8.5, 0.01).unwrap();
        let r = classify_activity(&set, &grid, 0.0).unwrap();
        let sub = vec![SubcontrollerIndices { beta: 0.0, delta: 1e-4, epsilon: 3.0 }; 3];
        let idx = compose_indices(&sub, &r, set.alpha()).unwrap();
        assert_eq!(idx.delta_min, 1e-4);
        assert_eq!(idx.delta_hat, 1e-4 * r.nu_inf);
        assert_eq!(idx.beta_hat, 0.0);
        assert_eq!(idx.beta_bar, 0.0);
        assert_eq!(idx.epsilon_min, 3.0);
        assert_eq!(idx.epsilon_bar, 3.0 / (4.0 * r.sigma_psi_bar * r.sigma_psi_bar));
        let c = idx.combined();
        assert_eq!(c.delta, idx.delta_hat / 2.0);
        assert_eq!(c.epsilon, idx.epsilon_bar / 2.0);
    }

    #[test]
    fn compose_rejects_inactive_schedule() {
        let set = SchedulingMatrixSet::custom(2, vec![1.0], |t, _| {
            if t > 0.5 {
                vec![DMatrix::identity(2, 2)]
            } else {
                vec![m(&[1.0, 0.0, 0.0, 0.0])]
            }
        })
        .unwrap();
        let r = classify_activity(&set, &[0.0, 0.25, 0.75], 0.0).unwrap();
        assert!(r.is_active() && !r.is_strongly_active());
        let sub = [SubcontrollerIndices { beta: 0.0, delta: 1.0, epsilon: 1.0 }];
        match compose_indices(&sub, &r, &[1.0]) {
            Err(Error::Certification { time, .. }) => assert_eq!(time, Some(0.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SchedulingConfig::default();
        cfg.validate().unwrap();
        cfg.alpha[1] = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SchedulingConfig::default();
        cfg.mix.mix_nu[0] = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SchedulingConfig::default();
        cfg.signals.s2_start = -0.1;
        assert!(cfg.validate().is_err());
    }
}
