//! Bartels-Stewart solver for the continuous Lyapunov equation.

use super::schur::block_partition;
use super::{
    check_symmetric, ensure_finite, ensure_shape, ensure_square, is_hurwitz, kron, sym_part, Mat,
    Tolerances,
};
use crate::error::{Error, Result};

/// Solve the small Sylvester equation `a y + y b = c` by vectorization.
/// Block sizes never exceed 2, so the linear system is at most 4x4.
fn solve_sylvester_small(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    let (p, q) = c.shape();
    let lhs = kron(&Mat::identity(q, q), a) + kron(&b.transpose(), &Mat::identity(p, p));
    let rhs = Mat::from_column_slice(p * q, 1, c.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Inconsistent("lyapunov: singular diagonal block pair".into()))?;
    Ok(Mat::from_column_slice(p, q, sol.as_slice()))
}

/// Stabilizing solution of `acl' x + x acl + q = 0` for Hurwitz `acl`.
///
/// Reduces `acl` to real Schur form and back-substitutes block columns of
/// the transformed equation. The result is symmetrized; it is PSD whenever
/// `q` is.
pub fn solve_lyapunov(acl: &Mat, q: &Mat, tol: &Tolerances) -> Result<Mat> {
    tol.validate()?;
    ensure_square("lyapunov: acl", acl)?;
    ensure_finite("lyapunov: acl", acl)?;
    ensure_shape("lyapunov: q", q, acl.nrows(), acl.ncols())?;
    ensure_finite("lyapunov: q", q)?;
    check_symmetric("lyapunov: q", q)?;
    if !is_hurwitz(acl, tol)? {
        return Err(Error::NotHurwitz(format!(
            "lyapunov: spectral abscissa {}",
            super::spectral_abscissa(acl).unwrap_or(f64::NAN)
        )));
    }
    let n = acl.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }

    let (z, mut t) = super::schur::real_schur(acl)?;
    let blocks = block_partition(&mut t);
    let c = z.transpose() * q * &z;

    // t' y + y t = -c, block forward substitution
    let mut y = Mat::zeros(n, n);
    for (j, bj) in blocks.iter().enumerate() {
        for (i, bi) in blocks.iter().enumerate() {
            let mut rhs = -c
                .view((bi.start, bj.start), (bi.size, bj.size))
                .clone_owned();
            for bk in blocks.iter().take(i) {
                rhs -= t.view((bk.start, bi.start), (bk.size, bi.size)).transpose()
                    * y.view((bk.start, bj.start), (bk.size, bj.size));
            }
            for bl in blocks.iter().take(j) {
                rhs -= y.view((bi.start, bl.start), (bi.size, bl.size))
                    * t.view((bl.start, bj.start), (bl.size, bj.size));
            }
            let tii = t.view((bi.start, bi.start), (bi.size, bi.size)).transpose();
            let tjj = t
                .view((bj.start, bj.start), (bj.size, bj.size))
                .clone_owned();
            let yij = solve_sylvester_small(&tii, &tjj, &rhs)?;
            y.view_mut((bi.start, bj.start), (bi.size, bj.size))
                .copy_from(&yij);
        }
    }
    let x = sym_part(&(&z * y * z.transpose()));

    let residual = (acl.transpose() * &x + &x * acl + q).norm();
    if residual > tol.residual_rel * (1.0 + x.norm()) {
        return Err(Error::Inconsistent(format!(
            "lyapunov: residual {residual:e} above bound"
        )));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::expm;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn uniform(rng: &mut ChaCha20Rng) -> f64 {
        (rng.next_u64() as f64 / u64::MAX as f64) * 2.0 - 1.0
    }

    #[test]
    fn scalar_examples() {
        let tol = Tolerances::default();
        let x = solve_lyapunov(
            &Mat::from_row_slice(1, 1, &[-1.0]),
            &Mat::from_row_slice(1, 1, &[2.0]),
            &tol,
        )
        .unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);

        let x = solve_lyapunov(&(-Mat::identity(2, 2)), &Mat::identity(2, 2), &tol).unwrap();
        assert!((x - Mat::identity(2, 2) * 0.5).norm() < 1e-14);

        // center-of-mass axis of the point-tracking ensemble: 50 x = 626
        let x = solve_lyapunov(
            &Mat::from_row_slice(1, 1, &[-25.0]),
            &Mat::from_row_slice(1, 1, &[626.0]),
            &tol,
        )
        .unwrap();
        assert!((x[(0, 0)] - 12.52).abs() < 1e-12);
    }

    #[test]
    fn rejects_unstable() {
        let tol = Tolerances::default();
        let r = solve_lyapunov(
            &Mat::from_row_slice(1, 1, &[0.5]),
            &Mat::identity(1, 1),
            &tol,
        );
        assert!(matches!(r, Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn random_residuals() {
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for n in [1usize, 2, 3, 5, 8, 20] {
            let m = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let acl = &m
                - Mat::identity(n, n)
                    * (2.0 + super::super::spectral_abscissa(&m).unwrap().max(0.0));
            let w = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let q = &w * w.transpose();
            let x = solve_lyapunov(&acl, &q, &tol).unwrap();
            let res = (acl.transpose() * &x + &x * &acl + &q).norm();
            assert!(
                res <= tol.residual_rel * (1.0 + x.norm()),
                "n={n} res={res:e}"
            );
            let (lo, _) = super::super::symmetric_eig_bounds(&x);
            assert!(lo >= -tol.psd_slack, "psd violated: {lo}");
        }
    }

    #[test]
    fn handles_oracle_scale_with_replicated_blocks() {
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let m1 = Mat::from_fn(6, 6, |_, _| uniform(&mut rng));
        let shift = 1.0 + super::super::spectral_abscissa(&m1).unwrap().max(0.0);
        let stable = &m1 - Mat::identity(6, 6) * shift;
        let acl = Mat::identity(10, 10).kronecker(&stable);
        let w = Mat::from_fn(60, 60, |_, _| uniform(&mut rng));
        let q = &w * w.transpose() * (1.0 / 60.0);
        let x = solve_lyapunov(&acl, &q, &tol).unwrap();
        let res = (acl.transpose() * &x + &x * &acl + &q).norm();
        assert!(res <= tol.residual_rel * (1.0 + x.norm()), "res {res:e}");
    }

    #[test]
    fn matches_gramian_quadrature() {
        // x = int exp(a't) q exp(at) dt, checked by composite Simpson quadrature
        let tol = Tolerances::default();
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        for n in [2usize, 3] {
            let m = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let acl = &m
                - Mat::identity(n, n)
                    * (1.5 + super::super::spectral_abscissa(&m).unwrap().max(0.0));
            let w = Mat::from_fn(n, n, |_, _| uniform(&mut rng));
            let q = &w * w.transpose();
            let x = solve_lyapunov(&acl, &q, &tol).unwrap();

            let horizon = 40.0;
            let steps = 4000usize;
            let h = horizon / steps as f64;
            let mut quad = Mat::zeros(n, n);
            for k in 0..=steps {
                let e = expm(&acl, k as f64 * h).unwrap();
                let term = e.transpose() * &q * &e;
                let w = if k == 0 || k == steps {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                quad += term * w;
            }
            quad *= h / 3.0;
            assert!((quad - &x).norm() < 1e-6 * (1.0 + x.norm()), "n={n}");
        }
    }
}
