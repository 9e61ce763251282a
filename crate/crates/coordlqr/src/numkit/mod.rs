//! Dense real linear algebra and matrix-equation solvers.
//!
//! All synthesis routines in this crate reduce to a handful of primitives
//! implemented here: a stabilizing CARE solver (ordered real Schur on the
//! Hamiltonian), a Bartels-Stewart Lyapunov solver, PBH rank tests, and a
//! deterministic Householder construction of the decoupling unitary.

mod care;
mod lyapunov;
pub(crate) mod schur;

pub use care::solve_care;
pub use lyapunov::solve_lyapunov;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Dense real matrix used throughout the toolkit.
pub type Mat = DMatrix<f64>;
/// Dense real vector used throughout the toolkit.
pub type Vector = DVector<f64>;

/// Numerical thresholds shared by solvers and validity checks.
#[derive(Clone, Debug)]
pub struct Tolerances {
    /// Relative residual bound for matrix-equation solutions.
    pub residual_rel: f64,
    /// Slack admitted in positive-semidefiniteness checks.
    pub psd_slack: f64,
    /// Stability margin: Hurwitz means max Re(lambda) < -margin.
    pub hurwitz_margin: f64,
    /// Relative singular-value threshold for rank decisions.
    pub rank_drop: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual_rel: 1e-9,
            psd_slack: 1e-8,
            hurwitz_margin: 1e-8,
            rank_drop: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("residual_rel", self.residual_rel),
            ("psd_slack", self.psd_slack),
            ("hurwitz_margin", self.hurwitz_margin),
            ("rank_drop", self.rank_drop),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Inconsistent(format!(
                    "tolerance {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn ensure_finite(ctx: &str, m: &Mat) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(ctx.to_string()))
    }
}

pub(crate) fn ensure_finite_vec(ctx: &str, v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(ctx.to_string()))
    }
}

pub(crate) fn ensure_square(ctx: &str, m: &Mat) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{ctx}: expected square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

pub(crate) fn ensure_shape(ctx: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() == rows && m.ncols() == cols {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{ctx}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Symmetric part `(M + M')/2`.
pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// View a vector as a `1 x len` matrix.
pub fn row_mat(v: &Vector) -> Mat {
    Mat::from_row_slice(1, v.len(), v.as_slice())
}

/// View a vector as a `len x 1` matrix.
pub fn col_mat(v: &Vector) -> Mat {
    Mat::from_column_slice(v.len(), 1, v.as_slice())
}

pub(crate) fn check_symmetric(ctx: &str, m: &Mat) -> Result<()> {
    let scale = 1.0 + m.norm();
    if (m - m.transpose()).norm() > 1e-10 * scale {
        return Err(Error::NotSymmetric(ctx.to_string()));
    }
    Ok(())
}

/// Iteration cap shared by the bounded eigenvalue/SVD decompositions. The
/// unbounded nalgebra entry points can spin on degenerate spectra, so every
/// decomposition in this crate goes through a capped variant.
pub(crate) const MAX_ITER: usize = 200_000;

pub(crate) fn symmetric_eigen_checked(
    m: &Mat,
) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    m.clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Inconsistent("symmetric eigendecomposition stalled".into()))
}

pub(crate) fn svd_checked(
    m: &Mat,
    vectors: bool,
) -> Result<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    m.clone()
        .try_svd(vectors, vectors, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Inconsistent("singular value decomposition stalled".into()))
}

/// Extreme eigenvalues of the symmetric part of `m`.
pub fn symmetric_eig_bounds(m: &Mat) -> (f64, f64) {
    let se = match symmetric_eigen_checked(&sym_part(m)) {
        Ok(se) => se,
        Err(_) => return (f64::NEG_INFINITY, f64::INFINITY),
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in se.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// Eigenvalues of `a` through the (bounded) real Schur iteration.
pub fn eigenvalues(a: &Mat) -> Result<Vec<nalgebra::Complex<f64>>> {
    ensure_square("eigenvalues", a)?;
    ensure_finite("eigenvalues", a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (_, mut t) = schur::real_schur(a)?;
    let blocks = schur::block_partition(&mut t);
    let mut out = Vec::with_capacity(n);
    for b in &blocks {
        if b.size == 1 {
            out.push(nalgebra::Complex::new(t[(b.start, b.start)], 0.0));
        } else {
            let (a11, a12) = (t[(b.start, b.start)], t[(b.start, b.start + 1)]);
            let (a21, a22) = (t[(b.start + 1, b.start)], t[(b.start + 1, b.start + 1)]);
            let mid = 0.5 * (a11 + a22);
            let disc = 0.25 * (a11 - a22) * (a11 - a22) + a12 * a21;
            if disc >= 0.0 {
                let r = disc.sqrt();
                out.push(nalgebra::Complex::new(mid + r, 0.0));
                out.push(nalgebra::Complex::new(mid - r, 0.0));
            } else {
                let r = (-disc).sqrt();
                out.push(nalgebra::Complex::new(mid, r));
                out.push(nalgebra::Complex::new(mid, -r));
            }
        }
    }
    Ok(out)
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// True iff every eigenvalue of `a` satisfies `Re(lambda) < -hurwitz_margin`.
pub fn is_hurwitz(a: &Mat, tol: &Tolerances) -> Result<bool> {
    if a.nrows() == 0 && a.ncols() == 0 {
        return Ok(true);
    }
    Ok(spectral_abscissa(a)? < -tol.hurwitz_margin)
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Matrix exponential `exp(a * t)` via Pade scaling and squaring.
pub fn expm(a: &Mat, t: f64) -> Result<Mat> {
    ensure_square("expm", a)?;
    ensure_finite("expm", a)?;
    if !t.is_finite() {
        return Err(Error::NonFiniteInput("expm: t".into()));
    }
    Ok((a * t).exp())
}

/// Number of singular values above `rank_drop * sigma_max`.
pub fn numerical_rank(a: &Mat, tol: &Tolerances) -> Result<usize> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    let sv = svd_checked(a, false)?.singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol.rank_drop * smax).count())
}

/// Smallest singular value of `a`.
pub fn min_singular_value(a: &Mat) -> Result<f64> {
    let sv = svd_checked(a, false)?.singular_values;
    Ok(sv.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Largest singular value (spectral norm) of `a`.
pub fn spectral_norm(a: &Mat) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let sv = svd_checked(a, false)?.singular_values;
    Ok(sv.iter().cloned().fold(0.0f64, f64::max))
}

/// Orthogonal, symmetric `U` with `U mu = e1`, built from the Householder
/// reflector `v = mu - sign(mu_1) e1` and scaled so the image is `+e1`.
///
/// The construction is deterministic, which keeps synthesized gains and
/// emitted files reproducible across runs.
pub fn decoupling_unitary(mu: &Vector, tol: &Tolerances) -> Result<Mat> {
    ensure_finite_vec("decoupling_unitary", mu)?;
    let nu = mu.len();
    if nu == 0 {
        return Err(Error::DimensionMismatch(
            "decoupling_unitary: empty mu".into(),
        ));
    }
    let norm = mu.norm();
    if (norm - 1.0).abs() > tol.psd_slack {
        return Err(Error::NotUnitNorm(norm));
    }
    let s = if mu[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = mu.clone();
    v[0] -= s;
    let vtv = v.norm_squared();
    if vtv < 1e-28 {
        // mu is (numerically) s * e1 already.
        let mut u = Mat::identity(nu, nu);
        u[(0, 0)] = s;
        return Ok(u);
    }
    let mut u = Mat::identity(nu, nu);
    u.gemm(
        -2.0 / vtv,
        &Mat::from_column_slice(nu, 1, v.as_slice()),
        &Mat::from_row_slice(1, nu, v.as_slice()),
        1.0,
    );
    Ok(u * s)
}

/// `Sum mu_i^2 = 1` helper: rescale an arbitrary nonzero vector to unit norm.
pub fn normalize(mu: &Vector) -> Result<Vector> {
    ensure_finite_vec("normalize", mu)?;
    let norm = mu.norm();
    if norm <= 0.0 {
        return Err(Error::NotUnitNorm(norm));
    }
    Ok(mu / norm)
}

/// Symmetric PSD square root of `q`. Eigenvalues below `-psd_slack * scale`
/// are rejected; small negative ones are clamped to zero.
pub fn psd_sqrt(q: &Mat, tol: &Tolerances) -> Result<Mat> {
    ensure_square("psd_sqrt", q)?;
    ensure_finite("psd_sqrt", q)?;
    check_symmetric("psd_sqrt", q)?;
    let se = symmetric_eigen_checked(&sym_part(q))?;
    let scale = 1.0
        + se.eigenvalues
            .iter()
            .cloned()
            .fold(0.0f64, |a, b| a.max(b.abs()));
    let mut d = se.eigenvalues.clone();
    for e in d.iter_mut() {
        if *e < -tol.psd_slack * scale {
            return Err(Error::NotPsd(format!("psd_sqrt: eigenvalue {e}")));
        }
        *e = e.max(0.0).sqrt();
    }
    let v = &se.eigenvectors;
    Ok(v * Mat::from_diagonal(&d) * v.transpose())
}

/// Real stacked representation of the complex matrix `m_re + i m_im`.
/// Ranks double and singular values are duplicated, so column-rank tests
/// carry over without complex arithmetic.
fn realify(m_re: &Mat, m_im: &Mat) -> Mat {
    let (r, c) = m_re.shape();
    let mut out = Mat::zeros(2 * r, 2 * c);
    out.view_mut((0, 0), (r, c)).copy_from(m_re);
    out.view_mut((0, c), (r, c)).copy_from(&(-m_im));
    out.view_mut((r, 0), (r, c)).copy_from(m_im);
    out.view_mut((r, c), (r, c)).copy_from(m_re);
    out
}

/// PBH observability test restricted to the imaginary axis: true iff for
/// every eigenvalue of `a` with `|Re| <= hurwitz_margin` the stack
/// `[a - lambda I; q^(1/2)]` has full column rank.
pub fn pbh_no_imaginary_unobservable(q: &Mat, a: &Mat, tol: &Tolerances) -> Result<bool> {
    ensure_square("pbh: a", a)?;
    ensure_finite("pbh: a", a)?;
    ensure_shape("pbh: q", q, a.nrows(), a.ncols())?;
    ensure_finite("pbh: q", q)?;
    let n = a.nrows();
    let qh = psd_sqrt(q, tol)?;
    let anorm = spectral_norm(a)?.max(1.0);
    for lambda in eigenvalues(a)?.iter() {
        if lambda.re.abs() > tol.hurwitz_margin {
            continue;
        }
        let mut stack_re = Mat::zeros(2 * n, n);
        stack_re
            .view_mut((0, 0), (n, n))
            .copy_from(&(a - Mat::identity(n, n) * lambda.re));
        stack_re.view_mut((n, 0), (n, n)).copy_from(&qh);
        let smin = if lambda.im.abs() <= tol.hurwitz_margin {
            min_singular_value(&stack_re)?
        } else {
            let mut stack_im = Mat::zeros(2 * n, n);
            stack_im
                .view_mut((0, 0), (n, n))
                .copy_from(&(Mat::identity(n, n) * (-lambda.im)));
            min_singular_value(&realify(&stack_re, &stack_im))?
        };
        if smin <= tol.rank_drop * anorm {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Eigenvalues of `a` at which the PBH row-rank test `[a - lambda I, b]`
/// fails, i.e. the uncontrollable modes.
pub fn uncontrollable_modes(
    a: &Mat,
    b: &Mat,
    tol: &Tolerances,
) -> Result<Vec<nalgebra::Complex<f64>>> {
    ensure_square("pbh modes: a", a)?;
    ensure_finite("pbh modes: a", a)?;
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "pbh modes: b has {} rows, expected {}",
            b.nrows(),
            a.nrows()
        )));
    }
    ensure_finite("pbh modes: b", b)?;
    let n = a.nrows();
    let m = b.ncols();
    let anorm = spectral_norm(a)?.max(1.0);
    let mut out = Vec::new();
    for lambda in eigenvalues(a)?.iter() {
        let mut row_re = Mat::zeros(n, n + m);
        row_re
            .view_mut((0, 0), (n, n))
            .copy_from(&(a - Mat::identity(n, n) * lambda.re));
        row_re.view_mut((0, n), (n, m)).copy_from(b);
        let smin = if lambda.im.abs() <= tol.hurwitz_margin {
            min_singular_value(&row_re)?
        } else {
            let mut row_im = Mat::zeros(n, n + m);
            row_im
                .view_mut((0, 0), (n, n))
                .copy_from(&(Mat::identity(n, n) * (-lambda.im)));
            min_singular_value(&realify(&row_re, &row_im))?
        };
        if smin <= tol.rank_drop * anorm {
            out.push(*lambda);
        }
    }
    Ok(out)
}

/// Eigenvalues of `a` whose modes are unobservable through `c` (PBH column
/// test on the stack `[a - lambda I; c]`, via controllability duality).
pub fn unobservable_modes(
    c: &Mat,
    a: &Mat,
    tol: &Tolerances,
) -> Result<Vec<nalgebra::Complex<f64>>> {
    uncontrollable_modes(&a.transpose(), &c.transpose(), tol)
}

/// PBH stabilizability test: `[a - lambda I, b]` has full row rank at every
/// eigenvalue with `Re >= -hurwitz_margin`.
pub fn is_stabilizable(a: &Mat, b: &Mat, tol: &Tolerances) -> Result<bool> {
    Ok(uncontrollable_modes(a, b, tol)?
        .iter()
        .all(|l| l.re < -tol.hurwitz_margin))
}
