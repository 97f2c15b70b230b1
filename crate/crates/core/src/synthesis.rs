//! Subcontroller synthesis: linearize the proportionally prewrapped arm,
//! compute an LQR gain, and turn it into a very strictly passive
//! realization through the KYP construction plus a small feedthrough.
//!
//! Passivity indices are estimated from the frequency response on a
//! logarithmic grid and then refined around each grid minimum.

use nalgebra::{Complex, DMatrix, Matrix2, SymmetricEigen, Vector2, SVD};
use serde::{Deserialize, Serialize};

use crate::dynamics::{mass_matrix, RobotParams};
use crate::error::{Error, Result};
use crate::linalg::{self, nested_rows, ComplexMatrix, DenseMatrix};
use crate::scheduling::SubcontrollerIndices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    #[serde(with = "nested_rows")]
    pub a: DenseMatrix,
    #[serde(with = "nested_rows")]
    pub b: DenseMatrix,
    #[serde(with = "nested_rows")]
    pub c: DenseMatrix,
    #[serde(with = "nested_rows")]
    pub d: DenseMatrix,
}

impl StateSpaceModel {
    pub fn new(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, d: DenseMatrix) -> Result<Self> {
        let m = StateSpaceModel { a, b, c, d };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, mat) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)] {
            linalg::ensure_finite(mat, name)?;
        }
        let n = self.a.nrows();
        let ok = self.a.ncols() == n
            && self.b.nrows() == n
            && self.c.ncols() == n
            && self.d.shape() == (self.c.nrows(), self.b.ncols());
        if !ok {
            return Err(Error::invalid(format!(
                "inconsistent state-space dimensions A {:?}, B {:?}, C {:?}, D {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.d.shape()
            )));
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Diagonal of the proportional prewrap gain.
    pub kp: [f64; 2],
    /// Bryson limits for the LQR state weight: `Q = diag(limits)⁻²`.
    pub q_lqr_bryson: [f64; 4],
    /// Bryson limits for the LQR input weight: `R = diag(limits)⁻²`.
    pub r_lqr_bryson: [f64; 2],
    /// Feedthrough `δ` added to every subcontroller.
    pub feedthrough: f64,
    /// Second-joint angles of the linearization points, degrees.
    pub linearization_deg: Vec<f64>,
    /// Diagonal of the Lyapunov weight used for the input matrix.
    pub q_lyap: [f64; 4],
    /// Log-spaced certification grid, rad/s.
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_points: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            kp: [35.0, 35.0],
            q_lqr_bryson: [0.33, 0.25, 180.0, 180.0],
            r_lqr_bryson: [15.0, 15.0],
            feedthrough: 1e-4,
            linearization_deg: vec![150.0, 60.0, -90.0],
            q_lyap: [1.0; 4],
            omega_min: 1e-3,
            omega_max: 1e5,
            omega_points: 400,
        }
    }
}

fn all_positive(v: &[f64]) -> bool {
    v.iter().all(|x| *x > 0.0 && x.is_finite())
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if !all_positive(&self.kp) {
            return Err(Error::Config("kp entries must be > 0".into()));
        }
        if !all_positive(&self.q_lqr_bryson) || !all_positive(&self.r_lqr_bryson) {
            return Err(Error::Config("LQR Bryson limits must be > 0".into()));
        }
        if !(self.feedthrough > 0.0) || !self.feedthrough.is_finite() {
            return Err(Error::Config(format!("feedthrough must be > 0, got {}", self.feedthrough)));
        }
        if self.linearization_deg.is_empty() || self.linearization_deg.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("linearization_deg must be a nonempty list of finite angles".into()));
        }
        if !all_positive(&self.q_lyap) {
            return Err(Error::Config("q_lyap entries must be > 0".into()));
        }
        if !(self.omega_min > 0.0) || !(self.omega_max > self.omega_min) || self.omega_points < 2 {
            return Err(Error::Config("frequency grid needs 0 < omega_min < omega_max and >= 2 points".into()));
        }
        Ok(())
    }

    pub fn kp_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&Vector2::from(self.kp))
    }

    pub fn q_lqr(&self) -> DenseMatrix {
        bryson(&self.q_lqr_bryson)
    }

    pub fn r_lqr(&self) -> DenseMatrix {
        bryson(&self.r_lqr_bryson)
    }

    pub fn q_lyap_matrix(&self) -> DenseMatrix {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.q_lyap))
    }

    pub fn omega_grid(&self) -> Vec<f64> {
        log_grid(self.omega_min, self.omega_max, self.omega_points)
    }
}

fn bryson(limits: &[f64]) -> DenseMatrix {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(limits.len(), limits.iter().map(|l| 1.0 / (l * l))))
}

/// `n` points spaced evenly in `log10` between `lo` and `hi`, inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                lo
            } else if k == n - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Linearization of the arm with proportional prewrap `u = K_p e + v`
/// about `q = (0, θ₂)` at rest, using the designer's parameters. State is
/// `(q, q̇)`, input is `v`, output is `q̇`.
pub fn linearize_prewrapped(measured: &RobotParams, cfg: &SynthesisConfig, theta2_deg: f64) -> Result<StateSpaceModel> {
    if !theta2_deg.is_finite() {
        return Err(Error::invalid("linearization angle must be finite"));
    }
    let m = mass_matrix(&Vector2::new(0.0, theta2_deg.to_radians()), measured);
    let m_inv = m.try_inverse().ok_or_else(|| Error::Numeric("mass matrix is singular".into()))?;
    let stiffness = -m_inv * cfg.kp_matrix();
    let mut a = DMatrix::zeros(4, 4);
    a.view_mut((0, 2), (2, 2)).fill_with_identity();
    a.view_mut((2, 0), (2, 2)).copy_from(&stiffness);
    let mut b = DMatrix::zeros(4, 2);
    b.view_mut((2, 0), (2, 2)).copy_from(&m_inv);
    let mut c = DMatrix::zeros(2, 4);
    c.view_mut((0, 2), (2, 2)).fill_with_identity();
    StateSpaceModel::new(a, b, c, DMatrix::zeros(2, 2))
}

#[derive(Debug, Clone)]
pub struct LqrResult {
    pub k: DenseMatrix,
    pub care_residual: f64,
}

pub fn lqr_gain(model: &StateSpaceModel, cfg: &SynthesisConfig) -> Result<LqrResult> {
    lqr_gain_weighted(model, &cfg.q_lqr(), &cfg.r_lqr())
}

pub fn lqr_gain_weighted(model: &StateSpaceModel, q: &DenseMatrix, r: &DenseMatrix) -> Result<LqrResult> {
    model.validate()?;
    let sol = linalg::solve_care(&model.a, &model.b, q, r)?;
    if !linalg::is_hurwitz(&(&model.a - &model.b * &sol.k))? {
        return Err(Error::Synthesis("LQR closed loop is not Hurwitz".into()));
    }
    Ok(LqrResult { k: sol.k, care_residual: sol.residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcontrollerRealization {
    /// `(A_c, B_c, C_c, D_c)`.
    pub model: StateSpaceModel,
    /// Lyapunov certificate with `A_cᵀP + PA_c = −Q` and `PB_c = C_cᵀ`.
    #[serde(with = "nested_rows")]
    pub p: DenseMatrix,
    #[serde(with = "nested_rows")]
    pub q: DenseMatrix,
    #[serde(with = "nested_rows")]
    pub k: DenseMatrix,
    pub feedthrough: f64,
    pub lyapunov_residual: f64,
    /// Filled in by [`estimate_vsp_indices`].
    #[serde(default)]
    pub indices: Option<SubcontrollerIndices>,
}

impl SubcontrollerRealization {
    pub fn indices(&self) -> Result<SubcontrollerIndices> {
        self.indices.ok_or_else(|| Error::invalid("realization has no passivity indices; estimate them first"))
    }

    /// `‖PB_c − C_cᵀ‖₂ / max(1, ‖C_c‖₂)`.
    pub fn kyp_defect(&self) -> Result<f64> {
        let defect = linalg::induced_norm_2(&(&self.p * &self.model.b - self.model.c.transpose()))?;
        Ok(defect / linalg::induced_norm_2(&self.model.c)?.max(1.0))
    }
}

/// `A_c = A − BK`, `C_c = K`, `B_c = P⁻¹Kᵀ`, `D_c = δI`, with `P` the
/// Lyapunov solution for `A_c` and weight `q_lyap`.
pub fn kyp_realize(
    model: &StateSpaceModel,
    k: &DenseMatrix,
    q_lyap: &DenseMatrix,
    feedthrough: f64,
) -> Result<SubcontrollerRealization> {
    model.validate()?;
    if !(feedthrough > 0.0) {
        return Err(Error::invalid(format!("feedthrough must be > 0, got {feedthrough}")));
    }
    if k.shape() != (model.inputs(), model.states()) {
        return Err(Error::invalid("gain shape does not match the model"));
    }
    let ac = &model.a - &model.b * k;
    let p = linalg::solve_lyapunov(&ac, q_lyap).map_err(|e| Error::Synthesis(format!("Lyapunov step failed: {e}")))?;
    let lyapunov_residual = linalg::lyapunov_residual(&ac, &p, q_lyap)?;
    let bc = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Synthesis("Lyapunov certificate is not positive definite".into()))?
        .solve(&k.transpose());
    let m = k.nrows();
    let realized = StateSpaceModel::new(ac, bc, k.clone(), DMatrix::identity(m, m) * feedthrough)?;
    Ok(SubcontrollerRealization {
        model: realized,
        p,
        q: q_lyap.clone(),
        k: k.clone(),
        feedthrough,
        lyapunov_residual,
        indices: None,
    })
}

/// `G(jω) = C(jωI − A)⁻¹B + D`.
pub fn transfer_eval(model: &StateSpaceModel, omega: f64) -> Result<ComplexMatrix> {
    let n = model.states();
    let jw = Complex::new(0.0, omega);
    let lhs = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let diag = if i == j { jw } else { Complex::new(0.0, 0.0) };
        diag - Complex::new(model.a[(i, j)], 0.0)
    });
    let rhs = model.b.map(|v| Complex::new(v, 0.0));
    let x = lhs.lu().solve(&rhs).ok_or_else(|| Error::Numeric(format!("jωI − A is singular at ω = {omega}")))?;
    let g = model.c.map(|v| Complex::new(v, 0.0)) * x + model.d.map(|v| Complex::new(v, 0.0));
    if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numeric(format!("non-finite frequency response at ω = {omega}")));
    }
    Ok(g)
}

fn hermitian_eigs(h: &ComplexMatrix) -> Vec<f64> {
    let herm = (h + h.adjoint()) * Complex::new(0.5, 0.0);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `λ_min(G + Gᴴ)`.
fn hermitian_floor(g: &ComplexMatrix) -> f64 {
    hermitian_eigs(&(g + g.adjoint()))[0]
}

fn sigma_max_sq(g: &ComplexMatrix) -> f64 {
    let s = SVD::new(g.clone(), false, false).singular_values.max();
    s * s
}

/// Golden-section minimization of `f` over `[lo, hi]`.
fn golden_min(mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..80 {
        if (hi - lo).abs() <= 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(f1.min(f2))
}

/// Minimum of `f` over a log-spaced grid, refined by golden-section search
/// in `log10 ω` around every interior local minimum of the samples.
fn refined_grid_min(grid: &[f64], f: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
    let vals: Vec<f64> = grid.iter().map(|&w| f(w)).collect::<Result<_>>()?;
    let mut best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let in_log = |x: f64| f(10f64.powf(x));
    for k in 0..vals.len() {
        let left = if k == 0 { f64::INFINITY } else { vals[k - 1] };
        let right = vals.get(k + 1).copied().unwrap_or(f64::INFINITY);
        if vals[k] <= left && vals[k] <= right {
            let lo = grid[k.saturating_sub(1)].log10();
            let hi = grid[(k + 1).min(grid.len() - 1)].log10();
            if hi > lo {
                best = best.min(golden_min(lo, hi, &in_log)?);
            }
        }
    }
    Ok(best)
}

/// Passivity indices from the frequency response:
/// `δᵢ = ½·min λ_min(G + Gᴴ)/2` and
/// `εᵢ = min λ_min(G + Gᴴ − 2δᵢI) / (2 λ_max(GᴴG))`, minimized over the
/// grid and refined between grid points.
pub fn estimate_vsp_indices(model: &StateSpaceModel, grid: &[f64]) -> Result<SubcontrollerIndices> {
    if grid.is_empty() || grid.iter().any(|w| !(*w > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("frequency grid must be nonempty, positive and ascending"));
    }
    let floor = |w: f64| -> Result<f64> { Ok(hermitian_floor(&transfer_eval(model, w)?)) };
    let delta = 0.5 * refined_grid_min(grid, &floor)? / 2.0;
    if !(delta > 0.0) {
        return Err(Error::Certification {
            message: format!("input passivity index is not positive on the grid ({delta:e})"),
            time: None,
        });
    }
    let ratio = |w: f64| -> Result<f64> {
        let g = transfer_eval(model, w)?;
        Ok((hermitian_floor(&g) - 2.0 * delta) / (2.0 * sigma_max_sq(&g)))
    };
    let epsilon = refined_grid_min(grid, &ratio)?;
    if !(epsilon > 0.0) {
        return Err(Error::Certification {
            message: format!("output passivity index is not positive on the grid ({epsilon:e})"),
            time: None,
        });
    }
    Ok(SubcontrollerIndices { beta: 0.0, delta, epsilon })
}

/// Smallest `λ_min(G + Gᴴ − 2δI − 2εGᴴG)` over a grid.
pub fn vsp_margin(model: &StateSpaceModel, idx: &SubcontrollerIndices, grid: &[f64]) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for &w in grid {
        let g = transfer_eval(model, w)?;
        let n = g.nrows();
        let shift = ComplexMatrix::identity(n, n) * Complex::new(2.0 * idx.delta, 0.0)
            + g.adjoint() * &g * Complex::new(2.0 * idx.epsilon, 0.0);
        let h = &g + g.adjoint() - shift;
        worst = worst.min(hermitian_eigs(&h)[0]);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprCertificate {
    pub min_hermitian_eig: f64,
    pub worst_omega: f64,
    pub bound: f64,
    pub grid_points: usize,
    pub passed: bool,
}

/// Checks `λ_min(G(jω) + G(jω)ᴴ) ≥ 2δ(1 − 1e-6)` on the grid.
pub fn spr_certificate(real: &SubcontrollerRealization, grid: &[f64]) -> Result<SprCertificate> {
    let mut worst = (f64::INFINITY, f64::NAN);
    for &w in grid {
        let v = hermitian_floor(&transfer_eval(&real.model, w)?);
        if v < worst.0 {
            worst = (v, w);
        }
    }
    let bound = 2.0 * real.feedthrough * (1.0 - 1e-6);
    Ok(SprCertificate {
        min_hermitian_eig: worst.0,
        worst_omega: worst.1,
        bound,
        grid_points: grid.len(),
        passed: worst.0 >= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedPoint {
    pub theta2_deg: f64,
    /// Open-loop prewrapped linearization.
    pub plant: StateSpaceModel,
    pub care_residual: f64,
    pub realization: SubcontrollerRealization,
    pub certificate: SprCertificate,
}

/// Full pipeline for one linearization point.
pub fn synthesize_point(measured: &RobotParams, cfg: &SynthesisConfig, theta2_deg: f64) -> Result<SynthesizedPoint> {
    let plant = linearize_prewrapped(measured, cfg, theta2_deg)?;
    let lqr = lqr_gain(&plant, cfg)?;
    let mut realization = kyp_realize(&plant, &lqr.k, &cfg.q_lyap_matrix(), cfg.feedthrough)?;
    let grid = cfg.omega_grid();
    let certificate = spr_certificate(&realization, &grid)?;
    if !certificate.passed {
        return Err(Error::Certification {
            message: format!(
                "subcontroller at θ₂ = {theta2_deg}° fails the frequency certificate ({:e} < {:e} at ω = {})",
                certificate.min_hermitian_eig, certificate.bound, certificate.worst_omega
            ),
            time: None,
        });
    }
    realization.indices = Some(estimate_vsp_indices(&realization.model, &grid)?);
    Ok(SynthesizedPoint { theta2_deg, plant, care_residual: lqr.care_residual, realization, certificate })
}

/// Synthesizes every configured linearization point, one thread each.
pub fn synthesize(measured: &RobotParams, cfg: &SynthesisConfig) -> Result<Vec<SynthesizedPoint>> {
    cfg.validate()?;
    measured.validate()?;
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            cfg.linearization_deg.iter().map(|&th| scope.spawn(move || synthesize_point(measured, cfg, th))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| Error::Synthesis("synthesis worker panicked".into()))?)
            .collect()
    })
}

/// Contents of the exported model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub measured: RobotParams,
    pub synthesis: SynthesisConfig,
    pub linearization_deg: Vec<f64>,
    pub points: Vec<SynthesizedPoint>,
}

impl ModelFile {
    pub fn new(measured: RobotParams, cfg: SynthesisConfig, points: Vec<SynthesizedPoint>) -> Self {
        ModelFile { measured, linearization_deg: cfg.linearization_deg.clone(), synthesis: cfg, points }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        for p in &file.points {
            p.realization.model.validate()?;
            p.realization.indices()?.validate()?;
        }
        Ok(file)
    }

    pub fn realizations(&self) -> Vec<SubcontrollerRealization> {
        self.points.iter().map(|p| p.realization.clone()).collect()
    }
}
