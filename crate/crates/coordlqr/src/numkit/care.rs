//! Continuous-time algebraic Riccati equation solver.

use super::schur::ordered_schur_stable;
use super::{
    check_symmetric, ensure_finite, ensure_shape, ensure_square, is_hurwitz, solve_lyapunov,
    sym_part, symmetric_eig_bounds, Mat, Tolerances,
};
use crate::error::{Error, Result};

/// Residual of the general CARE at `x`:
/// `a'x + xa + q - (xb + s) r^-1 (b'x + s')`.
fn care_residual(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    s: &Mat,
    x: &Mat,
) -> Mat {
    let k = x * b + s;
    let krk = &k * r_chol.solve(&k.transpose());
    a.transpose() * x + x * a + q - krk
}

/// Stabilizing solution of the continuous algebraic Riccati equation
///
/// ```text
/// a'x + xa + q - (xb + s) r^-1 (b'x + s') = 0
/// ```
///
/// with `q` PSD, `r` PD and optional cross term `s` (defaults to zero).
///
/// Method: ordered real Schur decomposition of the 2n x 2n Hamiltonian,
/// deflating the stable invariant subspace. One Newton defect step is
/// applied if the re-substitution residual exceeds the tolerance. The
/// returned `x` is symmetric, PSD up to `psd_slack`, and the closed loop
/// `a - b r^-1 (b'x + s')` is Hurwitz.
pub fn solve_care(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    s: Option<&Mat>,
    tol: &Tolerances,
) -> Result<Mat> {
    tol.validate()?;
    ensure_square("care: a", a)?;
    ensure_finite("care: a", a)?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "care: b has {} rows, expected {n}",
            b.nrows()
        )));
    }
    ensure_finite("care: b", b)?;
    let m = b.ncols();
    ensure_shape("care: q", q, n, n)?;
    ensure_finite("care: q", q)?;
    check_symmetric("care: q", q)?;
    ensure_shape("care: r", r, m, m)?;
    ensure_finite("care: r", r)?;
    let zero_s;
    let s = match s {
        Some(s) => {
            ensure_shape("care: s", s, n, m)?;
            ensure_finite("care: s", s)?;
            s
        }
        None => {
            zero_s = Mat::zeros(n, m);
            &zero_s
        }
    };

    let r_chol = nalgebra::Cholesky::new(sym_part(r))
        .ok_or_else(|| Error::NotPositiveDefinite("care: r".into()))?;

    // eliminate the cross term: a_hat = a - b r^-1 s', q_hat = q - s r^-1 s'
    let rinv_st = r_chol.solve(&s.transpose());
    let a_hat = a - b * &rinv_st;
    let q_hat = sym_part(&(q - s * &rinv_st));
    let g = sym_part(&(b * r_chol.solve(&b.transpose())));

    // Hamiltonian [[a_hat, -g], [-q_hat, -a_hat']]
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_hat);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&q_hat));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_hat.transpose()));

    let axis_tol = 1e-10 * (1.0 + h.norm());
    let ordered = ordered_schur_stable(&h, axis_tol)?;
    if ordered.stable_dim != n {
        return Err(Error::NoStabilizingSolution(format!(
            "care: Hamiltonian has {} stable eigenvalues, expected {n}",
            ordered.stable_dim
        )));
    }

    let u11 = ordered.q.view((0, 0), (n, n)).clone_owned();
    let u21 = ordered.q.view((n, 0), (n, n)).clone_owned();
    // x u11 = u21  =>  u11' x' = u21'
    let xt = u11
        .transpose()
        .lu()
        .solve(&u21.transpose())
        .ok_or_else(|| {
            Error::NoStabilizingSolution("care: deflating subspace is singular".into())
        })?;
    let mut x = sym_part(&xt.transpose());

    let bound = |x: &Mat| tol.residual_rel * (1.0 + x.norm());
    let mut res = care_residual(a, b, q, &r_chol, s, &x);
    if res.norm() > bound(&x) {
        // one Newton defect step: acl' dx + dx acl + res = 0
        let gain = r_chol.solve(&(b.transpose() * &x + s.transpose()));
        let acl = a - b * &gain;
        let dx = solve_lyapunov(&acl, &sym_part(&res), tol)?;
        x = sym_part(&(&x + dx));
        res = care_residual(a, b, q, &r_chol, s, &x);
        if res.norm() > bound(&x) {
            return Err(Error::NoStabilizingSolution(format!(
                "care: residual {:e} after refinement",
                res.norm()
            )));
        }
    }

    let (lo, hi) = symmetric_eig_bounds(&x);
    if lo < -tol.psd_slack * (1.0 + hi.abs()) {
        return Err(Error::NoStabilizingSolution(format!(
            "care: solution has negative eigenvalue {lo:e}"
        )));
    }
    let gain = r_chol.solve(&(b.transpose() * &x + s.transpose()));
    let acl = a - b * &gain;
    if !is_hurwitz(&acl, tol)? {
        return Err(Error::NoStabilizingSolution(format!(
            "care: closed loop abscissa {}",
            super::spectral_abscissa(&acl).unwrap_or(f64::NAN)
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn uniform(rng: &mut ChaCha20Rng) -> f64 {
        (rng.next_u64() as f64 / u64::MAX as f64) * 2.0 - 1.0
    }

    fn scalar(v: f64) -> Mat {
        Mat::from_row_slice(1, 1, &[v])
    }

    #[test]
    fn scalar_examples() {
        let tol = Tolerances::default();
        // q - b^2 x^2 / r = 0 at a = 0
        let x = solve_care(
            &scalar(0.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            None,
            &tol,
        )
        .unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-12);
        // 2x - x^2 = 0, stabilizing root 2
        let x = solve_care(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(0.0),
            &scalar(1.0),
            None,
            &tol,
        )
        .unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-12);
        // 2x + 3 - x^2 = 0, stabilizing root 3
        let x = solve_care(
            &scalar(1.0),
            &scalar(1.0),
            &scalar(3.0),
            &scalar(1.0),
            None,
            &tol,
        )
        .unwrap();
        assert!((x[(0, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_stable_drift_gives_zero() {
        let tol = Tolerances::default();
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -2.0]);
        let x = solve_care(
            &a,
            &Mat::identity(2, 2),
            &Mat::zeros(2, 2),
            &Mat::identity(2, 2),
            None,
            &tol,
        )
        .unwrap();
        assert!(x.norm() < 1e-12);
    }

    #[test]
    fn detects_imaginary_axis_structure() {
        let tol = Tolerances::default();
        // integrator with no state weight and no control authority on it
        let a = scalar(0.0);
        let b = scalar(0.0);
        let r = solve_care(&a, &b, &scalar(0.0), &scalar(1.0), None, &tol);
        assert!(matches!(r, Err(Error::NoStabilizingSolution(_))));
    }

    #[test]
    fn rejects_invalid_tolerances() {
        let tol = Tolerances {
            residual_rel: -1.0,
            ..Tolerances::default()
        };
        let s = Mat::identity(1, 1);
        assert!(matches!(
            solve_care(&s, &s, &s, &s, None, &tol),
            Err(Error::Inconsistent(_))
        ));
    }

    #[test]
    fn rejects_bad_shapes_and_nan() {
        let tol = Tolerances::default();
        let r = solve_care(
            &scalar(0.0),
            &Mat::zeros(2, 1),
            &scalar(1.0),
            &scalar(1.0),
            None,
            &tol,
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = solve_care(
            &scalar(f64::NAN),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            None,
            &tol,
        );
        assert!(matches!(r, Err(Error::NonFiniteInput(_))));
        let r = solve_care(
            &scalar(0.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(-1.0),
            None,
            &tol,
        );
        assert!(matches!(r, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn random_stabilizable_instances() {
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let mut solved = 0usize;
        while solved < 100 {
            let n = 1 + (rng.next_u64() % 8) as usize;
            let m = 1 + (rng.next_u64() % 3) as usize;
            let a = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let b = Mat::from_fn(n, m, |_, _| uniform(&mut rng));
            let w = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let q = &w * w.transpose();
            let r = Mat::identity(m, m) * (0.5 + uniform(&mut rng).abs());
            if !super::super::is_stabilizable(&a, &b, &tol).unwrap() {
                continue;
            }
            let x = solve_care(&a, &b, &q, &r, None, &tol).unwrap();
            let r_chol = nalgebra::Cholesky::new(r.clone()).unwrap();
            let res = care_residual(&a, &b, &q, &r_chol, &Mat::zeros(n, m), &x);
            assert!(
                res.norm() <= tol.residual_rel * (1.0 + x.norm()),
                "n={n} m={m} res={:e}",
                res.norm()
            );
            solved += 1;
        }
    }

    #[test]
    fn oracle_scale_instance_with_cross_terms() {
        // the elimination oracle produces CAREs of this size and shape:
        // replicated blocks, general R, nonzero S
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        let (n, m, nu) = (4usize, 2usize, 5usize);
        let a1 = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
        let b1 = Mat::from_fn(n, m, |_, _| uniform(&mut rng));
        let w1 = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
        let eye = Mat::identity(nu, nu);
        let a = eye.kronecker(&a1);
        let b = eye.kronecker(&b1);
        let q0 = eye.kronecker(&(&w1 * w1.transpose()));
        let s = Mat::from_fn(nu * n, nu * m, |_, _| 0.2 * uniform(&mut rng));
        // keep [[q, s], [s', r]] psd
        let q = sym_part(&(&q0 + &s * s.transpose()));
        let r = Mat::identity(nu * m, nu * m);
        let x = solve_care(&a, &b, &q, &r, Some(&s), &tol).unwrap();
        let k = &x * &b + &s;
        let res = (a.transpose() * &x + &x * &a + &q - &k * k.transpose()).norm();
        assert!(res <= tol.residual_rel * (1.0 + x.norm()), "res {res:e}");
        let acl = &a - &b * (b.transpose() * &x + s.transpose());
        assert!(super::super::is_hurwitz(&acl, &tol).unwrap());
    }

    #[test]
    fn cross_term_matches_eliminated_form() {
        // solving with s directly must agree with manual pre-elimination
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for _ in 0..10 {
            let n = 3;
            let m = 2;
            let a = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let b = Mat::from_fn(n, m, |_, _| uniform(&mut rng));
            let w = Mat::from_fn(n, n + 1, |_, _| uniform(&mut rng));
            let s = Mat::from_fn(n, m, |_, _| 0.3 * uniform(&mut rng));
            // keep the full cost matrix [[q, s], [s', r]] PSD: q = w w' + s s'
            let q = &w * w.transpose() + &s * s.transpose();
            let r = Mat::identity(m, m);
            let x1 = match solve_care(&a, &b, &q, &r, Some(&s), &tol) {
                Ok(x) => x,
                Err(_) => continue,
            };
            let a_hat = &a - &b * s.transpose();
            let q_hat = &q - &s * s.transpose();
            let x2 = solve_care(&a_hat, &b, &sym_part(&q_hat), &r, None, &tol).unwrap();
            assert!((&x1 - &x2).norm() < 1e-8 * (1.0 + x1.norm()));
        }
    }
}
