//! Dense linear-algebra kernels: singular values, symmetric eigenvalues,
//! numerical rank, Lyapunov and continuous-time algebraic Riccati solvers.
//!
//! Factorizations (SVD, Schur, LU) come from `nalgebra`. The Lyapunov and
//! Riccati solvers are written here and always verify their result by
//! substituting it back into the equation.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex<f64>>;

/// Unit roundoff of `f64`.
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

/// Tolerances used by the solvers in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed asymmetry `‖S − Sᵀ‖₂ / ‖S‖₂` for inputs declared symmetric.
    pub symmetry: f64,
    /// Lyapunov residual bound, relative to `‖Q‖₂`.
    pub lyapunov_residual: f64,
    /// Riccati residual bound, relative to `max(1, ‖Q‖₂)`.
    pub care_residual: f64,
    /// Largest acceptable condition number of the stable-subspace basis
    /// before falling back to Newton–Kleinman.
    pub basis_condition: f64,
    pub sign_tol: f64,
    pub sign_max_iter: usize,
    pub newton_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symmetry: 1e-10,
            lyapunov_residual: 1e-9,
            care_residual: 1e-8,
            basis_condition: 1e8,
            sign_tol: 1e-13,
            sign_max_iter: 100,
            newton_max_iter: 50,
        }
    }
}

pub fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn ensure_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!("{what} must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(())
}

/// Singular values in descending order; `min(rows, cols)` of them.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    ensure_finite(a, "matrix")?;
    let svd = SVD::new(a.clone(), false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().map(|s| s.abs()).collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    Ok(sv)
}

/// Induced 2-norm, i.e. the largest singular value.
pub fn induced_norm_2(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?[0])
}

fn sym_part(s: &DenseMatrix) -> DenseMatrix {
    (s + s.transpose()) * 0.5
}

fn check_symmetric(s: &DenseMatrix, tol: f64, what: &str) -> Result<()> {
    let scale = induced_norm_2(s)?;
    let skew = induced_norm_2(&(s - s.transpose()))?;
    if skew > tol * scale.max(f64::MIN_POSITIVE) && skew > 0.0 {
        return Err(Error::invalid(format!("{what} is not symmetric (‖S − Sᵀ‖ = {skew:e}, ‖S‖ = {scale:e})")));
    }
    Ok(())
}

/// Eigenvalues of the symmetric part `(S + Sᵀ)/2`, ascending.
pub fn sym_eigenvalues(s: &DenseMatrix) -> Result<Vec<f64>> {
    ensure_finite(s, "matrix")?;
    ensure_square(s, "matrix")?;
    let eig = SymmetricEigen::new(sym_part(s));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(s: &DenseMatrix) -> Result<f64> {
    ensure_finite(s, "matrix")?;
    ensure_square(s, "matrix")?;
    check_symmetric(s, Tolerances::default().symmetry, "matrix")?;
    Ok(sym_eigenvalues(s)?[0])
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eig_sym(s: &DenseMatrix) -> Result<f64> {
    ensure_finite(s, "matrix")?;
    ensure_square(s, "matrix")?;
    check_symmetric(s, Tolerances::default().symmetry, "matrix")?;
    Ok(*sym_eigenvalues(s)?.last().unwrap())
}

/// `max(rows, cols) · σ_max · u`.
pub fn default_rank_tol(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * sigma_max * UNIT_ROUNDOFF
}

/// Number of singular values strictly above `tol`. A zero `tol` selects
/// [`default_rank_tol`].
pub fn rank_svd(a: &DenseMatrix, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::invalid(format!("rank tolerance must be >= 0, got {tol}")));
    }
    let sv = singular_values(a)?;
    let tol = if tol == 0.0 { default_rank_tol(a.nrows(), a.ncols(), sv[0]) } else { tol };
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DenseMatrix) -> Result<Vec<Complex<f64>>> {
    ensure_finite(a, "matrix")?;
    ensure_square(a, "matrix")?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DenseMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(a: &DenseMatrix) -> Result<bool> {
    Ok(spectral_abscissa(a)? < 0.0)
}

/// Solves `aᵀX + Xa = c` through Kronecker vectorization.
fn lyapunov_kron(a: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let eye = DenseMatrix::identity(n, n);
    let at = a.transpose();
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let x = op.lu().solve(&rhs).ok_or_else(|| Error::NoSolution("Lyapunov operator is singular".into()))?;
    Ok(DenseMatrix::from_column_slice(n, n, x.as_slice()))
}

pub fn lyapunov_residual(a: &DenseMatrix, p: &DenseMatrix, q: &DenseMatrix) -> Result<f64> {
    induced_norm_2(&(a.transpose() * p + p * a + q))
}

/// Solves `AᵀP + PA = −Q` for a Hurwitz `A` and symmetric positive definite `Q`.
pub fn solve_lyapunov(a: &DenseMatrix, q: &DenseMatrix) -> Result<DenseMatrix> {
    solve_lyapunov_with(a, q, &Tolerances::default())
}

pub fn solve_lyapunov_with(a: &DenseMatrix, q: &DenseMatrix, tol: &Tolerances) -> Result<DenseMatrix> {
    ensure_finite(a, "A")?;
    ensure_finite(q, "Q")?;
    ensure_square(a, "A")?;
    ensure_square(q, "Q")?;
    if a.nrows() != q.nrows() {
        return Err(Error::invalid("A and Q dimensions differ"));
    }
    check_symmetric(q, tol.symmetry, "Q")?;
    if sym_eigenvalues(q)?[0] <= 0.0 {
        return Err(Error::invalid("Q must be positive definite"));
    }
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::NoSolution(format!("A is not Hurwitz (spectral abscissa {abscissa:e})")));
    }
    let p = sym_part(&lyapunov_kron(a, &(-q))?);
    let residual = lyapunov_residual(a, &p, q)?;
    let bound = tol.lyapunov_residual * induced_norm_2(q)?;
    if !(residual <= bound) {
        return Err(Error::Convergence("Lyapunov residual above tolerance".into(), residual));
    }
    if sym_eigenvalues(&p)?[0] <= 0.0 {
        return Err(Error::Numeric("Lyapunov solution is not positive definite".into()));
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct CareSolution {
    /// Stabilizing solution of the Riccati equation.
    pub p: DenseMatrix,
    /// Optimal gain `R⁻¹BᵀP`.
    pub k: DenseMatrix,
    /// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖₂`.
    pub residual: f64,
}

pub fn care_residual(a: &DenseMatrix, g: &DenseMatrix, q: &DenseMatrix, p: &DenseMatrix) -> Result<f64> {
    induced_norm_2(&(a.transpose() * p + p * a - p * g * p + q))
}

/// Solves the continuous-time algebraic Riccati equation
/// `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` for its stabilizing solution.
///
/// The stable invariant subspace of the Hamiltonian matrix is extracted
/// with the scaled Newton iteration for the matrix sign function, then
/// polished with Newton–Kleinman steps. When the subspace basis is badly
/// conditioned, or the result fails verification, the solver restarts
/// from a Bass stabilizing gain and runs Newton–Kleinman alone.
pub fn solve_care(a: &DenseMatrix, b: &DenseMatrix, q: &DenseMatrix, r: &DenseMatrix) -> Result<CareSolution> {
    solve_care_with(a, b, q, r, &Tolerances::default())
}

pub fn solve_care_with(
    a: &DenseMatrix,
    b: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
    tol: &Tolerances,
) -> Result<CareSolution> {
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    ensure_finite(q, "Q")?;
    ensure_finite(r, "R")?;
    ensure_square(a, "A")?;
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::invalid("inconsistent Riccati dimensions"));
    }
    check_symmetric(q, tol.symmetry, "Q")?;
    check_symmetric(r, tol.symmetry, "R")?;
    let q_min = sym_eigenvalues(q)?[0];
    if q_min < -tol.symmetry * induced_norm_2(q)? {
        return Err(Error::invalid("Q must be positive semidefinite"));
    }
    if sym_eigenvalues(r)?[0] <= 0.0 {
        return Err(Error::invalid("R must be positive definite"));
    }
    let r_inv = r.clone().try_inverse().ok_or_else(|| Error::invalid("R is singular"))?;
    let r_inv = sym_part(&r_inv);
    let g = sym_part(&(b * &r_inv * b.transpose()));
    let bound = tol.care_residual * induced_norm_2(q)?.max(1.0);

    let finish = |p: DenseMatrix| -> Result<CareSolution> {
        let k = &r_inv * b.transpose() * &p;
        let residual = care_residual(a, &g, q, &p)?;
        Ok(CareSolution { p, k, residual })
    };
    let accept = |sol: &CareSolution| -> Result<bool> { Ok(sol.residual <= bound && is_hurwitz(&(a - b * &sol.k))?) };

    let mut diagnostic = String::new();
    match sign_function_care(a, &g, q, tol) {
        Ok(p0) => {
            let p = newton_kleinman(a, b, q, r, &r_inv, &g, p0, tol)?;
            let sol = finish(p)?;
            if accept(&sol)? {
                return Ok(sol);
            }
            diagnostic = format!("sign-function route residual {:e}", sol.residual);
        }
        Err(e) => diagnostic.push_str(&e.to_string()),
    }

    // Fallback: Newton–Kleinman from a Bass stabilizing gain.
    let k0 = bass_gain(a, b)?;
    let p0 = stabilized_value(a, b, q, r, &k0)?;
    let p = newton_kleinman(a, b, q, r, &r_inv, &g, p0, tol)?;
    let sol = finish(p)?;
    if accept(&sol)? {
        return Ok(sol);
    }
    Err(Error::Synthesis(format!(
        "no stabilizing Riccati solution ({diagnostic}; Newton–Kleinman residual {:e}, bound {bound:e})",
        sol.residual
    )))
}

fn hamiltonian(a: &DenseMatrix, g: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
    let n = a.nrows();
    let mut h = DenseMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    h
}

fn sign_function_care(a: &DenseMatrix, g: &DenseMatrix, q: &DenseMatrix, tol: &Tolerances) -> Result<DenseMatrix> {
    let n = a.nrows();
    let dim = 2 * n;
    let mut z = hamiltonian(a, g, q);
    let mut converged = false;
    let mut scale = true;
    for _ in 0..tol.sign_max_iter {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::NoSolution("Hamiltonian has eigenvalues on the imaginary axis".into()))?;
        let c = if scale && det != 0.0 && det.is_finite() { det.abs().powf(-1.0 / dim as f64) } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if !size.is_finite() {
            break;
        }
        if change <= 1e-2 * size {
            scale = false;
        }
        if change <= tol.sign_tol * size {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence("matrix sign iteration".into(), f64::NAN));
    }
    // sign(H)·[I; P] = −[I; P]  ⇒  [W12; W22 + I]·P = −[W11 + I; W21]
    let eye = DenseMatrix::identity(n, n);
    let mut lhs = DenseMatrix::zeros(dim, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = DenseMatrix::zeros(dim, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));

    let svd = SVD::new(lhs, true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond <= tol.basis_condition) {
        return Err(Error::Numeric(format!("stable subspace basis ill-conditioned (cond {cond:e})")));
    }
    let p = svd.solve(&rhs, 0.0).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(sym_part(&p))
}

/// Value matrix of a fixed stabilizing gain:
/// `(A − BK)ᵀP + P(A − BK) = −(Q + KᵀRK)`.
fn stabilized_value(
    a: &DenseMatrix,
    b: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
    k: &DenseMatrix,
) -> Result<DenseMatrix> {
    let acl = a - b * k;
    let rhs = -(q + k.transpose() * r * k);
    Ok(sym_part(&lyapunov_kron(&acl, &rhs)?))
}

#[allow(clippy::too_many_arguments)]
fn newton_kleinman(
    a: &DenseMatrix,
    b: &DenseMatrix,
    q: &DenseMatrix,
    r: &DenseMatrix,
    r_inv: &DenseMatrix,
    g: &DenseMatrix,
    p0: DenseMatrix,
    tol: &Tolerances,
) -> Result<DenseMatrix> {
    let mut p = p0;
    let mut residual = care_residual(a, g, q, &p)?;
    for _ in 0..tol.newton_max_iter {
        let k = r_inv * b.transpose() * &p;
        if !is_hurwitz(&(a - b * &k))? {
            break;
        }
        let next = match stabilized_value(a, b, q, r, &k) {
            Ok(next) => next,
            Err(_) => break,
        };
        let next_residual = care_residual(a, g, q, &next)?;
        if !(next_residual < residual) {
            break;
        }
        p = next;
        residual = next_residual;
    }
    Ok(p)
}

/// Stabilizing gain from Bass' construction: with `F = A + βI` anti-stable,
/// `FZ + ZFᵀ = 2BBᵀ` and `K = BᵀZ⁻¹` gives `A − BK` Hurwitz.
fn bass_gain(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let most_stable = eigenvalues(a)?.iter().map(|l| -l.re).fold(0.0_f64, f64::max);
    let beta = most_stable + 1.0 + induced_norm_2(a)? * 1e-3;
    let f = a + DenseMatrix::identity(n, n) * beta;
    let z = sym_part(&lyapunov_kron(&f.transpose(), &(b * b.transpose() * 2.0))?);
    let z_inv =
        z.try_inverse().ok_or_else(|| Error::Synthesis("(A, B) is not stabilizable: Bass Gramian singular".into()))?;
    Ok(b.transpose() * z_inv)
}

/// Serde adapter storing a matrix as a list of rows.
pub mod nested_rows {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    use super::DenseMatrix;

    pub fn serialize<S: Serializer>(m: &DenseMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DenseMatrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows must be nonempty and of equal length"));
        }
        Ok(DenseMatrix::from_row_iterator(nrows, ncols, rows.into_iter().flatten()))
    }
}
